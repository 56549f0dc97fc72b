//! Continuous Lyapunov equation `A^T P + P A + Q = 0` solved through the
//! vectorized operator. The d^2 x d^2 system is dense-factored with partial
//! pivoting, which is entirely adequate below dimension 32 and keeps the
//! result bitwise deterministic.

use super::RealMatrix;
use crate::error::{Error, Result};

/// Largest system dimension accepted; the vectorized operator is d^2 x d^2.
pub const MAX_LYAPUNOV_DIM: usize = 32;

/// Solve `A^T P + P A + Q = 0` for symmetric `P`.
///
/// A unique solution exists iff no two eigenvalues of `A` sum to zero; when
/// the factorization detects a (near) singular operator the solve aborts
/// rather than returning garbage. One step of iterative refinement keeps the
/// residual at roundoff level for reasonably conditioned inputs; a residual
/// check guards the rest.
pub fn solve_lyapunov(a: &RealMatrix, q: &RealMatrix) -> Result<RealMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension("Lyapunov solve requires a square A".into()));
    }
    let d = a.rows();
    if d > MAX_LYAPUNOV_DIM {
        return Err(Error::Dimension(format!(
            "dimension {d} exceeds the supported maximum {MAX_LYAPUNOV_DIM}"
        )));
    }
    if q.rows() != d || q.cols() != d {
        return Err(Error::Dimension("Q must match the shape of A".into()));
    }
    if !q.is_symmetric() {
        return Err(Error::NotSymmetric("Lyapunov right-hand side Q".into()));
    }

    let n = d * d;
    // Row (i,j) of the matrix equation; unknown P_(r,s) enters as
    // A_(r,i) [s == j] + A_(s,j) [r == i].
    let mut op = vec![0.0f64; n * n];
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            for r in 0..d {
                op[row * n + (r * d + j)] += a.get(r, i);
            }
            for s in 0..d {
                op[row * n + (i * d + s)] += a.get(s, j);
            }
        }
    }
    let mut rhs = vec![0.0f64; n];
    for i in 0..d {
        for j in 0..d {
            rhs[i * d + j] = -q.get(i, j);
        }
    }

    let lu = Lu::factor(op, n).map_err(|_| Error::SingularLyapunov)?;
    let mut x = rhs.clone();
    lu.solve(&mut x);

    // One refinement pass; then symmetrize.
    let p0 = RealMatrix::new(d, d, x)?;
    let resid = residual(a, &p0, q)?;
    let mut corr = vec![0.0f64; n];
    for i in 0..d {
        for j in 0..d {
            corr[i * d + j] = -resid.get(i, j);
        }
    }
    lu.solve(&mut corr);
    let p = p0.add(&RealMatrix::new(d, d, corr)?)?.symmetrized();

    let final_resid = residual(a, &p, q)?.norm_fro();
    let scale = q.norm_fro().max(f64::MIN_POSITIVE);
    if final_resid > 1e-9 * scale {
        return Err(Error::NumericalFailure(format!(
            "Lyapunov residual {final_resid:.3e} exceeds 1e-9 of the right-hand side norm"
        )));
    }
    Ok(p)
}

fn residual(a: &RealMatrix, p: &RealMatrix, q: &RealMatrix) -> Result<RealMatrix> {
    a.transpose().matmul(p)?.add(&p.matmul(a)?)?.add(q)
}

/// Dense LU with partial pivoting over a flat row-major square matrix.
struct Lu {
    data: Vec<f64>,
    pivots: Vec<usize>,
    n: usize,
}

struct Singular;

impl Lu {
    fn factor(mut data: Vec<f64>, n: usize) -> std::result::Result<Self, Singular> {
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Singular);
        }
        let tol = scale * 1e-13 * n as f64;
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut piv = k;
            let mut best = data[k * n + k].abs();
            for i in (k + 1)..n {
                let v = data[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best <= tol {
                return Err(Singular);
            }
            pivots[k] = piv;
            if piv != k {
                for j in 0..n {
                    data.swap(k * n + j, piv * n + j);
                }
            }
            let d = data[k * n + k];
            for i in (k + 1)..n {
                let f = data[i * n + k] / d;
                data[i * n + k] = f;
                if f == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    data[i * n + j] -= f * data[k * n + j];
                }
            }
        }
        Ok(Self { data, pivots, n })
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.pivots[k]);
        }
        for k in 1..n {
            let mut s = b[k];
            for j in 0..k {
                s -= self.data[k * n + j] * b[j];
            }
            b[k] = s;
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in (k + 1)..n {
                s -= self.data[k * n + j] * b[j];
            }
            b[k] = s / self.data[k * n + k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> RealMatrix {
        RealMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn known_two_by_two_solution() {
        // For A = [[-0.1,-0.2],[0.1,-0.4]] and Q = I the solution is
        // [[23/6, -7/6], [-7/6, 11/6]] (solve the three linear equations by hand).
        let a = mat(&[&[-0.1, -0.2], &[0.1, -0.4]]);
        let p = solve_lyapunov(&a, &RealMatrix::identity(2)).unwrap();
        assert!((p.get(0, 0) - 23.0 / 6.0).abs() < 1e-10);
        assert!((p.get(0, 1) + 7.0 / 6.0).abs() < 1e-10);
        assert!((p.get(1, 0) + 7.0 / 6.0).abs() < 1e-10);
        assert!((p.get(1, 1) - 11.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn scalar_and_diagonal_cases() {
        let a = mat(&[&[-0.5]]);
        let p = solve_lyapunov(&a, &RealMatrix::identity(1)).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-14);

        // A = -I/2 gives P = Q for any symmetric Q.
        let a = RealMatrix::identity(3).scale(-0.5);
        let q = mat(&[&[2.0, 0.3, 0.0], &[0.3, 1.0, -0.1], &[0.0, -0.1, 4.0]]);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert!(p.sub(&q).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn skew_symmetric_has_no_unique_solution() {
        // Eigenvalues +-iw sum to zero across the pair.
        let a = mat(&[&[0.0, 0.1], &[-0.1, 0.0]]);
        assert!(matches!(
            solve_lyapunov(&a, &RealMatrix::identity(2)),
            Err(Error::SingularLyapunov)
        ));
    }

    #[test]
    fn rejects_bad_shapes_and_asymmetric_q() {
        let a = mat(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        assert!(solve_lyapunov(&a, &RealMatrix::identity(3)).is_err());
        let q = mat(&[&[1.0, 0.5], &[0.2, 1.0]]);
        assert!(matches!(solve_lyapunov(&a, &q), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn residual_is_small_for_moderate_dimensions() {
        // Deterministic Hurwitz matrices: shifted pseudo-random entries.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for d in [2usize, 4, 6, 8] {
            let mut rows = Vec::new();
            for _ in 0..d {
                rows.push((0..d).map(|_| next()).collect::<Vec<_>>());
            }
            let r = RealMatrix::from_rows(&rows).unwrap();
            let shift = super::super::spectral_norm(&r).unwrap() + 0.1;
            let a = r.sub(&RealMatrix::identity(d).scale(shift)).unwrap();
            let q = RealMatrix::identity(d);
            let p = solve_lyapunov(&a, &q).unwrap();
            let resid = a
                .transpose()
                .matmul(&p)
                .unwrap()
                .add(&p.matmul(&a).unwrap())
                .unwrap()
                .add(&q)
                .unwrap()
                .norm_fro();
            assert!(resid <= 1e-10 * q.norm_fro(), "residual {resid:e} at d={d}");
            assert!(p.is_symmetric());
        }
    }
}

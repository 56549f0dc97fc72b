//! Eigenvalue routines: Householder tridiagonalization with implicit-shift QL
//! for symmetric matrices, Hessenberg reduction with double-shift QR sweeps
//! for general ones. Both are classic dense algorithms, adequate and fast at
//! dimension <= 32.

use super::{RealMatrix, Spectrum};
use crate::error::{Error, Result};
use num_complex::Complex64;

const EPS: f64 = f64::EPSILON;
/// QL iterations allowed per eigenvalue before giving up.
const SYM_ITER_CAP: usize = 50;

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn eig_sym(s: &RealMatrix) -> Result<Spectrum> {
    let (values, _) = sym_eigen_values(s, false)?;
    Ok(Spectrum::symmetric(values))
}

/// Eigenvalues (ascending) plus an orthonormal eigenbasis, one eigenvector
/// per column.
pub fn sym_eigen_decomp(s: &RealMatrix) -> Result<(Vec<f64>, RealMatrix)> {
    let (values, vectors) = sym_eigen_values(s, true)?;
    Ok((values, vectors.expect("vectors requested")))
}

fn sym_eigen_values(s: &RealMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<RealMatrix>)> {
    if !s.is_square() {
        return Err(Error::Dimension("symmetric eigensolver requires a square matrix".into()));
    }
    if !s.is_symmetric() {
        return Err(Error::NotSymmetric("symmetric eigensolver input".into()));
    }
    let n = s.rows();
    // Work on the exactly symmetric average so the iteration never sees the
    // tolerated asymmetry.
    let sym = s.symmetrized();
    let mut z: Vec<f64> = sym.data().to_vec();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tridiagonalize(&mut z, n, &mut d, &mut e);
    ql_implicit(&mut d, &mut e, &mut z, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let vectors = if want_vectors {
        let mut v = RealMatrix::zeros(n, n);
        for (col, &src) in order.iter().enumerate() {
            for row in 0..n {
                v.set(row, col, z[row * n + src]);
            }
        }
        Some(v)
    } else {
        None
    };
    Ok((values, vectors))
}

/// Householder reduction to tridiagonal form with transform accumulation.
/// On return `d` holds the diagonal, `e` the subdiagonal (e[0] unused), and
/// `z` the accumulated orthogonal transform.
fn tridiagonalize(z: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += z[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g_acc += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * z[i * n + j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] -= g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = 1.0;
        for j in 0..i {
            z[j * n + i] = 0.0;
            z[i * n + j] = 0.0;
        }
    }
}

/// Implicit-shift QL on a tridiagonal, rotations accumulated into `z`.
fn ql_implicit(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= EPS * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > SYM_ITER_CAP {
                return Err(Error::EigenFailure { dim: n, sweeps: iter });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigenvalues of a general real square matrix.
///
/// Dimensions one and two use closed forms; larger matrices go through
/// Householder Hessenberg reduction and double-shift QR with deflation.
/// Conjugate pairs come out adjacent in the sorted spectrum.
pub fn eig_general(a: &RealMatrix) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(Error::Dimension("general eigensolver requires a square matrix".into()));
    }
    let n = a.rows();
    match n {
        1 => Ok(Spectrum::general(vec![Complex64::new(a.get(0, 0), 0.0)])),
        2 => Ok(Spectrum::general(eig_2x2(a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1)))),
        _ => {
            let mut h = a.data().to_vec();
            hessenberg(&mut h, n);
            let values = hqr(&mut h, n)?;
            Ok(Spectrum::general(values))
        }
    }
}

fn eig_2x2(a: f64, b: f64, c: f64, d: f64) -> Vec<Complex64> {
    let tr = a + d;
    let disc = (a - d) * (a - d) + 4.0 * b * c;
    if disc >= 0.0 {
        let rt = disc.sqrt();
        vec![
            Complex64::new(0.5 * (tr - rt), 0.0),
            Complex64::new(0.5 * (tr + rt), 0.0),
        ]
    } else {
        let im = 0.5 * (-disc).sqrt();
        vec![
            Complex64::new(0.5 * tr, -im),
            Complex64::new(0.5 * tr, im),
        ]
    }
}

/// Householder reduction to upper Hessenberg form, in place.
fn hessenberg(h: &mut [f64], n: usize) {
    let mut v = vec![0.0f64; n];
    for k in 0..n.saturating_sub(2) {
        let mut norm2 = 0.0;
        for i in (k + 1)..n {
            norm2 += h[i * n + k] * h[i * n + k];
        }
        if norm2 == 0.0 {
            continue;
        }
        let x1 = h[(k + 1) * n + k];
        let alpha = -norm2.sqrt().copysign(if x1 == 0.0 { 1.0 } else { x1 });
        v[..n].iter_mut().for_each(|t| *t = 0.0);
        v[k + 1] = x1 - alpha;
        for i in (k + 2)..n {
            v[i] = h[i * n + k];
        }
        let beta: f64 = v[(k + 1)..n].iter().map(|t| t * t).sum();
        if beta == 0.0 {
            continue;
        }
        // Left application: rows k+1..n of every column.
        for j in 0..n {
            let mut s = 0.0;
            for i in (k + 1)..n {
                s += v[i] * h[i * n + j];
            }
            let f = 2.0 * s / beta;
            for i in (k + 1)..n {
                h[i * n + j] -= f * v[i];
            }
        }
        // Right application: columns k+1..n of every row.
        for i in 0..n {
            let mut s = 0.0;
            for j in (k + 1)..n {
                s += h[i * n + j] * v[j];
            }
            let f = 2.0 * s / beta;
            for j in (k + 1)..n {
                h[i * n + j] -= f * v[j];
            }
        }
        h[(k + 1) * n + k] = alpha;
        for i in (k + 2)..n {
            h[i * n + k] = 0.0;
        }
    }
}

/// Double-shift QR on an upper Hessenberg matrix, eigenvalues only.
/// Destroys `h`. Budget of 30 sweeps per remaining eigenvalue overall.
fn hqr(h: &mut [f64], n: usize) -> Result<Vec<Complex64>> {
    let idx = |i: isize, j: isize| (i as usize) * n + (j as usize);
    let mut values: Vec<Complex64> = Vec::with_capacity(n);
    let mut norm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            norm += h[i * n + j].abs();
        }
    }
    if norm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }

    let mut en: isize = n as isize - 1;
    let mut t = 0.0f64;
    let mut itn = 30 * n;
    'outer: while en >= 0 {
        let mut its = 0;
        let na = en - 1;
        let enm2 = na - 1;
        loop {
            // Single small subdiagonal element.
            let mut l = en;
            while l > 0 {
                let mut s = h[idx(l - 1, l - 1)].abs() + h[idx(l, l)].abs();
                if s == 0.0 {
                    s = norm;
                }
                if h[idx(l, l - 1)].abs() <= EPS * s {
                    break;
                }
                l -= 1;
            }
            let mut x = h[idx(en, en)];
            if l == en {
                values.push(Complex64::new(x + t, 0.0));
                en = na;
                continue 'outer;
            }
            let mut y = h[idx(na, na)];
            let mut w = h[idx(en, na)] * h[idx(na, en)];
            if l == na {
                let p = (y - x) / 2.0;
                let q = p * p + w;
                let zz = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let zz = p + zz.copysign(p);
                    let r1 = x + zz;
                    let r2 = if zz != 0.0 { x - w / zz } else { r1 };
                    values.push(Complex64::new(r1, 0.0));
                    values.push(Complex64::new(r2, 0.0));
                } else {
                    values.push(Complex64::new(x + p, zz));
                    values.push(Complex64::new(x + p, -zz));
                }
                en = enm2;
                continue 'outer;
            }
            if itn == 0 {
                return Err(Error::EigenFailure { dim: n, sweeps: 30 * n });
            }
            if its == 10 || its == 20 {
                // Exceptional shift.
                t += x;
                for i in 0..=en {
                    h[idx(i, i)] -= x;
                }
                let s = h[idx(en, na)].abs() + h[idx(na, enm2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            itn -= 1;
            // Two consecutive small subdiagonal elements.
            let mut m = enm2;
            let mut p = 0.0;
            let mut q = 0.0;
            let mut r = 0.0;
            while m >= l {
                let zz = h[idx(m, m)];
                let rr = x - zz;
                let ss = y - zz;
                p = (rr * ss - w) / h[idx(m + 1, m)] + h[idx(m, m + 1)];
                q = h[idx(m + 1, m + 1)] - zz - rr - ss;
                r = h[idx(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                if s == 0.0 {
                    // Degenerate shift vector; any rotation is acceptable.
                    p = 1.0;
                    q = 0.0;
                    r = 0.0;
                } else {
                    p /= s;
                    q /= s;
                    r /= s;
                }
                if m == l {
                    break;
                }
                let tst1 = p.abs() * (h[idx(m - 1, m - 1)].abs() + zz.abs() + h[idx(m + 1, m + 1)].abs());
                if h[idx(m, m - 1)].abs() * (q.abs() + r.abs()) <= EPS * tst1 {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=en {
                h[idx(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[idx(i, i - 3)] = 0.0;
                }
            }
            // Double QR step on rows l..en, columns m..en.
            for k in m..=na {
                let notlast = k != na;
                if k != m {
                    p = h[idx(k, k - 1)];
                    q = h[idx(k + 1, k - 1)];
                    r = if notlast { h[idx(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if k != m {
                    h[idx(k, k - 1)] = -s * x;
                } else if l != m {
                    h[idx(k, k - 1)] = -h[idx(k, k - 1)];
                }
                p += s;
                x = p / s;
                y = q / s;
                let zz = r / s;
                q /= p;
                r /= p;
                if notlast {
                    for j in k..=en {
                        let pp = h[idx(k, j)] + q * h[idx(k + 1, j)] + r * h[idx(k + 2, j)];
                        h[idx(k, j)] -= pp * x;
                        h[idx(k + 1, j)] -= pp * y;
                        h[idx(k + 2, j)] -= pp * zz;
                    }
                    let jmax = en.min(k + 3);
                    for i in l..=jmax {
                        let pp = x * h[idx(i, k)] + y * h[idx(i, k + 1)] + zz * h[idx(i, k + 2)];
                        h[idx(i, k)] -= pp;
                        h[idx(i, k + 1)] -= pp * q;
                        h[idx(i, k + 2)] -= pp * r;
                    }
                } else {
                    for j in k..=en {
                        let pp = h[idx(k, j)] + q * h[idx(k + 1, j)];
                        h[idx(k, j)] -= pp * x;
                        h[idx(k + 1, j)] -= pp * y;
                    }
                    let jmax = en.min(k + 3);
                    for i in l..=jmax {
                        let pp = x * h[idx(i, k)] + y * h[idx(i, k + 1)];
                        h[idx(i, k)] -= pp;
                        h[idx(i, k + 1)] -= pp * q;
                    }
                }
            }
        }
    }
    Ok(values)
}

/// Rank of an `n x n` complex matrix by Gaussian elimination with partial
/// pivoting; pivots at or below `tol` in modulus count as zero.
pub(crate) fn complex_rank(a: &[Complex64], n: usize, tol: f64) -> usize {
    let mut m = a.to_vec();
    let mut rank = 0;
    for col in 0..n {
        let mut best_row = rank;
        let mut best = 0.0;
        for row in rank..n {
            let v = m[row * n + col].norm();
            if v > best {
                best = v;
                best_row = row;
            }
        }
        if best <= tol {
            continue;
        }
        if best_row != rank {
            for j in 0..n {
                m.swap(rank * n + j, best_row * n + j);
            }
        }
        let pivot = m[rank * n + col];
        for row in (rank + 1)..n {
            let f = m[row * n + col] / pivot;
            if f.norm() == 0.0 {
                continue;
            }
            for j in col..n {
                let sub = f * m[rank * n + j];
                m[row * n + j] -= sub;
            }
        }
        rank += 1;
        if rank == n {
            break;
        }
    }
    rank
}

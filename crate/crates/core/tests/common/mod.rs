// Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use swicert_core::densities::{Expr, ProfileTerm, SignalProfile};
use swicert_core::matops::RealMatrix;
use swicert_core::signal::{HFunction, TransitionGraph};
use swicert_core::SystemFamily;

pub fn mat(rows: &[&[f64]]) -> RealMatrix {
    RealMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// The worked two-dimensional four-system example used across the suites:
/// one contracting system, one rotation, two expanding systems.
pub fn reference_family() -> SystemFamily {
    SystemFamily::new(vec![
        mat(&[&[-0.1, -0.2], &[0.1, -0.4]]),
        mat(&[&[0.0, 0.1], &[-0.1, 0.0]]),
        mat(&[&[0.1, 0.2], &[0.4, 0.3]]),
        mat(&[&[0.2, 0.1], &[0.3, 0.0]]),
    ])
    .unwrap()
}

/// Companion graph: system 1 talks to everyone, 2 to everyone, but 3 and 4
/// only reach each other through 1 or 2.
pub fn reference_graph() -> TransitionGraph {
    TransitionGraph::new(
        4,
        &[(1, 2), (2, 1), (1, 3), (3, 1), (1, 4), (4, 1), (2, 3), (3, 2), (2, 4), (4, 2)],
    )
    .unwrap()
}

pub fn term(coeff: f64, power: f64) -> ProfileTerm {
    ProfileTerm { coeff, power, log: false }
}

/// Companion switching profile: sublinear switch count `t/3 + sqrt(t)`,
/// system 1 holding the lion's share of time, system 2 vanishing, 3 and 4
/// splitting the rest, uniform transition fractions.
pub fn reference_profile() -> SignalProfile {
    let n = Expr::new(vec![term(1.0 / 3.0, 1.0), term(1.0, 0.5)]).unwrap();
    let eta1 = Expr::new(vec![term(1.0 / 1.1, 1.0), term(-1.0, 0.5)]).unwrap();
    let eta2 = Expr::new(vec![term(1.0, 1.0 / 9.0)]).unwrap();
    let eta34 = Expr::new(vec![
        term(0.5 * (1.0 - 1.0 / 1.1), 1.0),
        term(0.5, 0.5),
        term(-0.5, 1.0 / 9.0),
    ])
    .unwrap();
    let eta = BTreeMap::from([(1, eta1), (2, eta2), (3, eta34.clone()), (4, eta34)]);
    let rho = reference_graph().edges().map(|e| (e, 0.1)).collect();
    SignalProfile::new(HFunction::Identity, n, eta, rho).unwrap()
}

/// Plain truncated Taylor series for `exp(a t)`, summed until terms vanish.
/// Deliberately independent of the production implementation; accurate for
/// moderate `norm(a t)` without any scaling tricks.
pub fn series_expm(a: &RealMatrix, t: f64) -> RealMatrix {
    let d = a.rows();
    let at = a.scale(t);
    let mut sum = RealMatrix::identity(d);
    let mut power = RealMatrix::identity(d);
    for k in 1..=300 {
        power = power.matmul(&at).unwrap().scale(1.0 / k as f64);
        sum = sum.add(&power).unwrap();
        if power.max_abs() <= 1e-20 * sum.max_abs() {
            break;
        }
    }
    sum
}

pub fn rand_matrix(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> RealMatrix {
    let data: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-scale..=scale)).collect();
    RealMatrix::new(d, d, data).unwrap()
}

/// Random matrix with every Gershgorin disc strictly in the open left half
/// plane, hence Hurwitz by construction.
pub fn rand_hurwitz(rng: &mut ChaCha8Rng, d: usize) -> RealMatrix {
    let m = rand_matrix(rng, d, 1.0);
    let mut shift = 0.0f64;
    for i in 0..d {
        let row: f64 = (0..d).map(|j| m.get(i, j).abs()).sum();
        shift = shift.max(row + m.get(i, i).abs());
    }
    let mut data = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            data.push(m.get(i, j) - if i == j { shift + 0.1 } else { 0.0 });
        }
    }
    RealMatrix::new(d, d, data).unwrap()
}

pub fn rand_spd(rng: &mut ChaCha8Rng, d: usize) -> RealMatrix {
    let m = rand_matrix(rng, d, 1.0);
    let mut p = m.transpose().matmul(&m).unwrap();
    for i in 0..d {
        p.set(i, i, p.get(i, i) + 0.1);
    }
    p
}

fn ratio(p_num: &RealMatrix, p_den: &RealMatrix, x: &[f64]) -> f64 {
    let quad = |p: &RealMatrix| -> f64 {
        let d = x.len();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += x[i] * p.get(i, j) * x[j];
            }
        }
        acc
    };
    quad(p_num) / quad(p_den)
}

/// Exhaustive direction sweep for the largest generalized Rayleigh quotient
/// `<P_to x, x> / <P_from x, x>`; dimensions 2 and 3 only, where uniform
/// sampling covers the sphere densely enough to bracket the maximizer.
pub fn rayleigh_max(p_from: &RealMatrix, p_to: &RealMatrix, rng: &mut ChaCha8Rng, vectors: usize) -> f64 {
    let d = p_from.rows();
    assert!(d == 2 || d == 3, "sweep only meaningful in low dimension");
    let mut best = f64::NEG_INFINITY;
    for _ in 0..vectors {
        let x = match d {
            2 => {
                let theta = rng.gen_range(0.0..std::f64::consts::PI);
                vec![theta.cos(), theta.sin()]
            }
            _ => {
                let z: f64 = rng.gen_range(-1.0..=1.0);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).max(0.0).sqrt();
                vec![r * phi.cos(), r * phi.sin(), z]
            }
        };
        best = best.max(ratio(p_to, p_from, &x));
    }
    best
}

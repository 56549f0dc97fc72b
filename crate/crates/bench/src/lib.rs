//! Shared inputs for the benchmark targets: the two-dimensional four-system
//! worked example and a seeded dense test matrix.

use std::collections::BTreeMap;

use swicert_core::densities::Expr;
use swicert_core::densities::ProfileTerm;
use swicert_core::{HFunction, RealMatrix, SignalProfile, SystemFamily, TransitionGraph};

pub fn reference_family() -> SystemFamily {
    let mats = [
        [[-0.1, -0.2], [0.1, -0.4]],
        [[0.0, 0.1], [-0.1, 0.0]],
        [[0.1, 0.2], [0.4, 0.3]],
        [[0.2, 0.1], [0.3, 0.0]],
    ];
    SystemFamily::new(
        mats.iter()
            .map(|rows| RealMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()))
            .collect::<Result<_, _>>()
            .unwrap(),
    )
    .unwrap()
}

pub fn reference_graph() -> TransitionGraph {
    TransitionGraph::new(
        4,
        &[
            (1, 2),
            (2, 1),
            (1, 3),
            (3, 1),
            (1, 4),
            (4, 1),
            (2, 3),
            (3, 2),
            (2, 4),
            (4, 2),
        ],
    )
    .unwrap()
}

fn term(coeff: f64, power: f64) -> ProfileTerm {
    ProfileTerm {
        coeff,
        power,
        log: false,
    }
}

pub fn reference_profile() -> SignalProfile {
    let n = Expr::new(vec![term(1.0 / 3.0, 1.0), term(1.0, 0.5)]).unwrap();
    let eta1 = Expr::new(vec![term(1.0 / 1.1, 1.0), term(-1.0, 0.5)]).unwrap();
    let eta2 = Expr::new(vec![term(1.0, 1.0 / 9.0)]).unwrap();
    let shared = vec![
        term(0.5, 1.0),
        term(-0.5 / 1.1, 1.0),
        term(0.5, 0.5),
        term(-0.5, 1.0 / 9.0),
    ];
    let eta3 = Expr::new(shared.clone()).unwrap();
    let eta4 = Expr::new(shared).unwrap();
    let eta = BTreeMap::from([(1, eta1), (2, eta2), (3, eta3), (4, eta4)]);
    let mut rho = BTreeMap::new();
    for (k, l) in reference_graph().edges() {
        rho.insert((k, l), 0.1);
    }
    SignalProfile::new(HFunction::Identity, n, eta, rho).unwrap()
}

/// Deterministic dense matrix with entries in [-1, 1), scaled.
pub fn dense_matrix(d: usize, scale: f64, seed: u64) -> RealMatrix {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = || {
        // xorshift64*, plenty for benchmark inputs
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let bits = state.wrapping_mul(0x2545F4914F6CDD1D);
        (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut m = RealMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m.set(i, j, scale * next());
        }
    }
    m
}

/// Hurwitz by construction: strong negative diagonal dominance.
pub fn dense_hurwitz(d: usize, seed: u64) -> RealMatrix {
    let mut m = dense_matrix(d, 1.0, seed);
    for i in 0..d {
        let row_sum: f64 = (0..d).map(|j| m.get(i, j).abs()).sum();
        m.set(i, i, -(row_sum + 0.5));
    }
    m
}

// Randomized structural properties of the numerical kernels and the
// signal/certificate pipeline. Each property seeds its own generator so
// failures replay deterministically.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swicert_core::certifier::certify;
use swicert_core::densities::{densities_from_profile, DensityBundle, Expr, SignalProfile};
use swicert_core::family::{mu_estimate, mu_table, synth_family};
use swicert_core::matops::expm;
use swicert_core::siggen::{generate, GeneratorKind, GeneratorSpec, HoldDistribution};
use swicert_core::signal::{HFunction, SwitchingSignal, TransitionGraph};
use swicert_core::simulator::simulate;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expm_respects_the_semigroup_law(
        seed in any::<u64>(),
        d in 1usize..=4,
        s in 0.05f64..2.0,
        t in 0.05f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::rand_matrix(&mut rng, d, 1.0);
        let whole = expm(&a, s + t).unwrap();
        let split = expm(&a, s).unwrap().matmul(&expm(&a, t).unwrap()).unwrap();
        let scale = whole.max_abs().max(1.0);
        for i in 0..d {
            for j in 0..d {
                prop_assert!(
                    (whole.get(i, j) - split.get(i, j)).abs() <= 1e-11 * scale,
                    "split product diverges at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn jump_factors_multiply_to_at_least_one(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_a = common::rand_spd(&mut rng, d);
        let p_b = common::rand_spd(&mut rng, d);
        let forward = mu_estimate(&p_a, &p_b).unwrap();
        let backward = mu_estimate(&p_b, &p_a).unwrap();
        prop_assert!(forward * backward >= 1.0 - 1e-12);
    }

    #[test]
    fn jump_factor_is_a_tight_bound(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_a = common::rand_spd(&mut rng, d);
        let p_b = common::rand_spd(&mut rng, d);
        let mu = mu_estimate(&p_a, &p_b).unwrap();
        let sweep = common::rayleigh_max(&p_a, &p_b, &mut rng, 30_000);
        // No direction beats the factor, and some direction comes close.
        prop_assert!(sweep <= mu * (1.0 + 1e-12), "sweep {sweep} exceeds mu {mu}");
        prop_assert!(sweep >= mu * (1.0 - 5e-3), "sweep {sweep} far below mu {mu}");
    }

    #[test]
    fn occupation_fractions_partition_elapsed_time(seed in any::<u64>()) {
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph: TransitionGraph::complete(4).unwrap(),
                hold: HoldDistribution::UniformRange { min: 0.05, max: 1.2 },
                seed,
            },
            horizon: 80.0,
        })
        .unwrap();
        let t = sig.horizon();
        let h = HFunction::Identity;
        let completed: f64 = (1..=4)
            .map(|j| sig.eta_h(t, j, &h).unwrap() * h.eval(t))
            .sum();
        let running = t - sig.instants().last().unwrap();
        prop_assert!(((completed + running) - t).abs() <= 1e-9 * t);

        let switches = sig.switch_count(t).unwrap();
        if switches > 0 {
            let hist = sig.transition_histogram(t).unwrap();
            let total: usize = hist.values().sum();
            prop_assert_eq!(total, switches);
        }
    }

    #[test]
    fn trajectories_scale_linearly(
        seed in any::<u64>(),
        factor in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 10.0]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family = common::reference_family();
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph: TransitionGraph::complete(4).unwrap(),
                hold: HoldDistribution::UniformRange { min: 0.1, max: 1.0 },
                seed: seed.wrapping_add(1),
            },
            horizon: 20.0,
        })
        .unwrap();
        let x0: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..=5.0)).collect();
        let base = simulate(&family, &sig, &x0, 3).unwrap();
        let scaled_x0: Vec<f64> = x0.iter().map(|v| v * factor).collect();
        let scaled = simulate(&family, &sig, &scaled_x0, 3).unwrap();
        for s in 0..base.len() {
            for (a, b) in base.state(s).iter().zip(scaled.state(s)) {
                prop_assert!((a * factor - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn signal_csv_round_trips(seed in any::<u64>()) {
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph: TransitionGraph::complete(3).unwrap(),
                hold: HoldDistribution::UniformRange { min: 0.01, max: 0.9 },
                seed,
            },
            horizon: 40.0,
        })
        .unwrap();
        let back = SwitchingSignal::from_csv(&sig.to_csv(), sig.horizon()).unwrap();
        prop_assert_eq!(back.fingerprint(), sig.fingerprint());
    }

    #[test]
    fn same_seed_reproduces_the_walk(seed in any::<u64>()) {
        let spec = GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph: TransitionGraph::complete(5).unwrap(),
                hold: HoldDistribution::UniformRange { min: 0.2, max: 2.0 },
                seed,
            },
            horizon: 60.0,
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tracking_reproduces_declared_switch_counts(
        rate in 0.2f64..1.5,
        root in 0.0f64..2.0,
        horizon in 150.0f64..400.0,
    ) {
        let n = Expr::new(vec![common::term(rate, 1.0), common::term(root, 0.5)]).unwrap();
        let profile =
            SignalProfile::new(HFunction::Identity, n.clone(), BTreeMap::new(), BTreeMap::new())
                .unwrap();
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::ProfileTracking {
                profile,
                graph: TransitionGraph::new(2, &[(1, 2), (2, 1)]).unwrap(),
                start: 1,
            },
            horizon,
        })
        .unwrap();
        for k in 1..=8 {
            let t = horizon * k as f64 / 8.0;
            let realized = sig.switch_count(t).unwrap() as f64;
            prop_assert!(
                (realized - n.eval(t)).abs() <= 1.0 + 1e-6,
                "count {realized} vs declared {} at t = {t}",
                n.eval(t)
            );
        }
    }

    #[test]
    fn loading_the_bundle_against_the_verdict_never_helps(
        bump in 1e-3f64..0.2,
        target in prop::sample::select(vec!["eta3", "eta4", "rho21", "rho31"]),
    ) {
        let family = common::reference_family();
        let pairs = synth_family(&family, &BTreeMap::new()).unwrap();
        let mu = mu_table(&pairs, &common::reference_graph()).unwrap();
        let base = densities_from_profile(&common::reference_profile()).unwrap();
        let before = certify(&base, &mu, &pairs).unwrap();

        let mut eta_hat = base.eta_hat().clone();
        let mut rho = base.rho_hat().clone();
        match target {
            // More occupation of an expanding system.
            "eta3" => { eta_hat.insert(3, eta_hat[&3] + bump); }
            "eta4" => { eta_hat.insert(4, eta_hat[&4] + bump); }
            // More weight on a growing jump, taken from a shrinking one.
            "rho21" => {
                let delta = bump.min(rho[&(1, 2)]);
                rho.insert((2, 1), rho[&(2, 1)] + delta);
                rho.insert((1, 2), rho[&(1, 2)] - delta);
            }
            _ => {
                let delta = bump.min(rho[&(1, 3)]);
                rho.insert((3, 1), rho[&(3, 1)] + delta);
                rho.insert((1, 3), rho[&(1, 3)] - delta);
            }
        }
        let worse = DensityBundle::declared(
            base.h().clone(),
            base.nu_check(),
            base.nu_hat(),
            base.eta_check().clone(),
            eta_hat,
            rho,
        )
        .unwrap();
        let after = certify(&worse, &mu, &pairs).unwrap();
        prop_assert!(after.margin <= before.margin + 1e-12);
        if !before.certified {
            prop_assert!(!after.certified, "loading the bundle flipped the verdict");
        }
    }
}

//! Constructs admissible switching signals: periodic round-robin cycles,
//! seeded random walks on a transition graph, and a deterministic scheduler
//! that realizes declared asymptotic statistics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::densities::{Expr, SignalProfile};
use crate::error::{Error, Result};
use crate::signal::{SwitchingSignal, TransitionGraph};

/// Halfwidth, in switch counts, of the band the tracking scheduler keeps the
/// realized switch count in around the declared count. Holds may stretch or
/// shrink within the band so per-system occupation targets can be met; wider
/// bands allow more skewed occupations at the cost of a looser count match.
pub const TRACKING_WINDOW: usize = 4;

/// Hold-length law for the random walk generator.
#[derive(Debug, Clone, PartialEq)]
pub enum HoldDistribution {
    Fixed(f64),
    UniformRange { min: f64, max: f64 },
}

impl HoldDistribution {
    fn validate(&self) -> Result<()> {
        match *self {
            HoldDistribution::Fixed(tau) if tau.is_finite() && tau > 0.0 => Ok(()),
            HoldDistribution::Fixed(tau) => Err(Error::Configuration(format!(
                "fixed hold length must be positive, got {tau}"
            ))),
            HoldDistribution::UniformRange { min, max }
                if min.is_finite() && max.is_finite() && min > 0.0 && min <= max =>
            {
                Ok(())
            }
            HoldDistribution::UniformRange { min, max } => Err(Error::Configuration(format!(
                "hold range [{min}, {max}] must satisfy 0 < min <= max"
            ))),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            HoldDistribution::Fixed(tau) => tau,
            HoldDistribution::UniformRange { min, max } => rng.gen_range(min..=max),
        }
    }
}

/// What to generate.
#[derive(Debug, Clone)]
pub enum GeneratorKind {
    /// Visit `cycle` periodically with a fixed hold length.
    RoundRobin { cycle: Vec<usize>, hold: f64 },
    /// Uniform out-edge walk under a seeded generator; identical seeds give
    /// identical signals.
    RandomWalk { graph: TransitionGraph, hold: HoldDistribution, seed: u64 },
    /// Deterministic scheduler that tracks the profile's switch count,
    /// occupation, and transition-fraction targets on the given graph.
    ProfileTracking { profile: SignalProfile, graph: TransitionGraph, start: usize },
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub horizon: f64,
}

pub fn generate(spec: &GeneratorSpec) -> Result<SwitchingSignal> {
    let horizon = spec.horizon;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Configuration(format!(
            "generator horizon must be positive and finite, got {horizon}"
        )));
    }
    match &spec.kind {
        GeneratorKind::RoundRobin { cycle, hold } => round_robin(cycle, *hold, horizon),
        GeneratorKind::RandomWalk { graph, hold, seed } => {
            random_walk(graph, hold, *seed, horizon)
        }
        GeneratorKind::ProfileTracking { profile, graph, start } => {
            profile_tracking(profile, graph, *start, horizon)
        }
    }
}

fn round_robin(cycle: &[usize], hold: f64, horizon: f64) -> Result<SwitchingSignal> {
    if cycle.len() < 2 {
        return Err(Error::Configuration("round-robin cycle needs at least two entries".into()));
    }
    for (pos, &idx) in cycle.iter().enumerate() {
        if idx == 0 {
            return Err(Error::Configuration(format!("cycle entry {pos} is zero")));
        }
        let next = cycle[(pos + 1) % cycle.len()];
        if idx == next {
            return Err(Error::Configuration(format!(
                "cycle revisits system {idx} consecutively at position {pos}"
            )));
        }
    }
    if !(hold.is_finite() && hold > 0.0) {
        return Err(Error::Configuration(format!(
            "round-robin hold length must be positive, got {hold}"
        )));
    }
    let mut instants = Vec::new();
    let mut active = Vec::new();
    for i in 0.. {
        // Multiply rather than accumulate so instants stay exact for exact
        // hold lengths.
        let tau = i as f64 * hold;
        if tau >= horizon {
            break;
        }
        instants.push(tau);
        active.push(cycle[i % cycle.len()]);
    }
    SwitchingSignal::new(instants, active, horizon)
}

fn require_out_edges(graph: &TransitionGraph) -> Result<()> {
    for v in 1..=graph.vertex_count() {
        if graph.out_neighbors(v).is_empty() {
            return Err(Error::Configuration(format!("vertex {v} has no outgoing edge")));
        }
    }
    Ok(())
}

fn random_walk(
    graph: &TransitionGraph,
    hold: &HoldDistribution,
    seed: u64,
    horizon: f64,
) -> Result<SwitchingSignal> {
    hold.validate()?;
    require_out_edges(graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instants = vec![0.0];
    let mut active = vec![1];
    let mut t = 0.0;
    let mut v = 1;
    loop {
        let next = t + hold.sample(&mut rng);
        if next >= horizon {
            break;
        }
        let neighbors = graph.out_neighbors(v);
        let w = if neighbors.len() == 1 {
            neighbors[0]
        } else {
            neighbors[rng.gen_range(0..neighbors.len())]
        };
        instants.push(next);
        active.push(w);
        t = next;
        v = w;
    }
    SwitchingSignal::new(instants, active, horizon)
}

/// Solve `n(t) = y` on `[0, t_max]` by bisection; `n` is nondecreasing.
/// Returns `t_max` when the count never reaches `y`.
fn inv_count(n: &Expr, y: f64, t_max: f64) -> f64 {
    if n.eval(0.0) >= y {
        return 0.0;
    }
    if n.eval(t_max) <= y {
        return t_max;
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..200 {
        if hi - lo <= 1e-9 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if n.eval(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn inv_count_cached(cache: &mut BTreeMap<i64, f64>, n: &Expr, k: i64, t_max: f64) -> f64 {
    if let Some(&t) = cache.get(&k) {
        return t;
    }
    let t = inv_count(n, k as f64, t_max);
    cache.insert(k, t);
    t
}

/// End the current hold of a system with an occupation target: the latest
/// time in `[lo, hi]` at which the accumulated occupation does not exceed the
/// target. Leaves at `lo` when already at or over target, at `hi` when the
/// window is too short to catch up.
fn occupation_catchup(expr: &Expr, occupied: f64, t_cur: f64, lo: f64, hi: f64) -> f64 {
    let deficit = |tau: f64| occupied + (tau - t_cur) - expr.eval(tau);
    if deficit(lo) >= 0.0 {
        return lo;
    }
    if deficit(hi) <= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        if b - a <= 1e-9 {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if deficit(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

struct TrackerState {
    /// Completed hold time per system, indexed by system (entry 0 unused).
    occupied: Vec<f64>,
    /// Executed transition counts.
    counts: BTreeMap<(usize, usize), usize>,
}

/// Score a candidate destination: the one-step-ahead L1 distance of the
/// transition fractions from their targets (edges without a target count
/// toward zero) plus the projected occupation residuals at the nominal end of
/// the next hold. Both terms are dimensionless; they weigh equally.
fn destination_score(
    state: &TrackerState,
    profile: &SignalProfile,
    from: usize,
    cand: usize,
    switch_total: usize,
    tau: f64,
    t_proj: f64,
) -> f64 {
    let total = switch_total as f64;
    let mut score = 0.0;
    let bump = |edge: (usize, usize)| -> f64 {
        let c = state.counts.get(&edge).copied().unwrap_or(0);
        (c + usize::from(edge == (from, cand))) as f64
    };
    for (&edge, &target) in profile.rho() {
        score += (bump(edge) / total - target).abs();
    }
    for &edge in state.counts.keys() {
        if !profile.rho().contains_key(&edge) {
            score += bump(edge) / total;
        }
    }
    if !state.counts.contains_key(&(from, cand)) && !profile.rho().contains_key(&(from, cand)) {
        score += 1.0 / total;
    }
    let h_proj = profile.h().eval(t_proj).max(f64::MIN_POSITIVE);
    for (&j, expr) in profile.eta_exprs() {
        let mut occ = state.occupied[j];
        if j == cand {
            occ += t_proj - tau;
        }
        score += (occ - expr.eval(t_proj)).abs() / h_proj;
    }
    score
}

fn profile_tracking(
    profile: &SignalProfile,
    graph: &TransitionGraph,
    start: usize,
    horizon: f64,
) -> Result<SwitchingSignal> {
    require_out_edges(graph)?;
    if start == 0 || start > graph.vertex_count() {
        return Err(Error::Configuration(format!(
            "start system {start} outside 1..={}",
            graph.vertex_count()
        )));
    }
    for &j in profile.eta_exprs().keys() {
        if j > graph.vertex_count() {
            return Err(Error::Configuration(format!(
                "occupation target for system {j} outside the graph"
            )));
        }
    }
    for &(from, to) in profile.rho().keys() {
        if !graph.has_edge(from, to) {
            return Err(Error::Configuration(format!(
                "transition target on {from}->{to}, which the graph does not admit"
            )));
        }
    }
    let n_expr = profile.switch_count_expr();
    let count_at_horizon = n_expr.eval(horizon);
    if !(count_at_horizon >= 2.0) {
        return Err(Error::InsufficientSwitches);
    }

    let band = TRACKING_WINDOW as i64;
    let mut inv_cache = BTreeMap::new();
    let mut instants = vec![0.0];
    let mut active = vec![start];
    let mut state = TrackerState {
        occupied: vec![0.0; graph.vertex_count() + 1],
        counts: BTreeMap::new(),
    };
    let mut t_cur = 0.0;
    let mut v = start;
    let mut i: i64 = 1;
    loop {
        if (i - band) as f64 > count_at_horizon {
            break;
        }
        let min_gap = 1e-9 * (1.0 + t_cur);
        let lo = inv_count_cached(&mut inv_cache, n_expr, i - band, horizon)
            .max(t_cur + min_gap);
        if lo >= horizon {
            break;
        }
        let hi = inv_count_cached(&mut inv_cache, n_expr, i + band, horizon)
            .clamp(lo, horizon);
        let tau = match profile.eta_exprs().get(&v) {
            Some(expr) => occupation_catchup(expr, state.occupied[v], t_cur, lo, hi),
            // Without a target for the departing system, keep the nominal
            // spacing; with no targets anywhere this reproduces the declared
            // count to within one switch.
            None => inv_count_cached(&mut inv_cache, n_expr, i, horizon).clamp(lo, hi),
        };
        if tau >= horizon {
            break;
        }
        let t_proj = inv_count_cached(&mut inv_cache, n_expr, i + 1, horizon)
            .max(tau + min_gap);
        let neighbors = graph.out_neighbors(v);
        let mut w = neighbors[0];
        if neighbors.len() > 1 {
            let mut best = f64::INFINITY;
            for &cand in &neighbors {
                let score =
                    destination_score(&state, profile, v, cand, i as usize, tau, t_proj);
                if score < best {
                    best = score;
                    w = cand;
                }
            }
        }
        state.occupied[v] += tau - t_cur;
        *state.counts.entry((v, w)).or_insert(0) += 1;
        instants.push(tau);
        active.push(w);
        t_cur = tau;
        v = w;
        i += 1;
    }
    if instants.len() < 3 {
        return Err(Error::InsufficientSwitches);
    }
    SwitchingSignal::new(instants, active, horizon)
}

/// Distance of the realized transition fractions from their targets at the
/// horizon. Edges the signal used without a declared target count against a
/// target of zero. The scheduler tracks targets asymptotically; callers
/// inspect residuals instead of assuming exactness.
pub fn tracking_residuals(
    sig: &SwitchingSignal,
    targets: &BTreeMap<(usize, usize), f64>,
) -> Result<BTreeMap<(usize, usize), f64>> {
    let horizon = sig.horizon();
    let hist = sig.transition_histogram(horizon)?;
    let total = sig.switch_count(horizon)? as f64;
    if total == 0.0 {
        return Err(Error::UndefinedStatistic("signal never switches".into()));
    }
    let mut out = BTreeMap::new();
    for (&edge, &target) in targets {
        let count = hist.get(&edge).copied().unwrap_or(0) as f64;
        out.insert(edge, (count / total - target).abs());
    }
    for (&edge, &count) in &hist {
        if !targets.contains_key(&edge) {
            out.insert(edge, count as f64 / total);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::ProfileTerm;
    use crate::signal::HFunction;

    fn pair_graph() -> TransitionGraph {
        TransitionGraph::new(2, &[(1, 2), (2, 1)]).unwrap()
    }

    fn term(coeff: f64, power: f64) -> ProfileTerm {
        ProfileTerm { coeff, power, log: false }
    }

    fn count_only_profile() -> SignalProfile {
        let n = Expr::new(vec![term(1.0 / 3.0, 1.0), term(1.0, 0.5)]).unwrap();
        SignalProfile::new(HFunction::Identity, n, BTreeMap::new(), BTreeMap::new()).unwrap()
    }

    fn reference_graph() -> TransitionGraph {
        TransitionGraph::new(
            4,
            &[(1, 2), (2, 1), (1, 3), (3, 1), (1, 4), (4, 1), (2, 3), (3, 2), (2, 4), (4, 2)],
        )
        .unwrap()
    }

    fn reference_profile() -> SignalProfile {
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

    #[test]
    fn round_robin_alternation() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::RoundRobin { cycle: vec![1, 2], hold: 1.0 },
            horizon: 100.0,
        };
        let sig = generate(&spec).unwrap();
        assert_eq!(sig.total_switches(), 99);
        for (i, (&tau, &idx)) in
            sig.instants().iter().zip(sig.active_indices()).enumerate()
        {
            assert_eq!(tau, i as f64);
            assert_eq!(idx, 1 + (i % 2));
        }
    }

    #[test]
    fn round_robin_longer_cycle_wraps() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::RoundRobin { cycle: vec![1, 2, 3], hold: 1.5 },
            horizon: 5.0,
        };
        let sig = generate(&spec).unwrap();
        assert_eq!(sig.instants(), &[0.0, 1.5, 3.0, 4.5]);
        assert_eq!(sig.active_indices(), &[1, 2, 3, 1]);
    }

    #[test]
    fn round_robin_rejections() {
        let gen = |cycle: Vec<usize>, hold: f64| {
            generate(&GeneratorSpec {
                kind: GeneratorKind::RoundRobin { cycle, hold },
                horizon: 10.0,
            })
        };
        assert!(gen(vec![1], 1.0).is_err());
        assert!(gen(vec![1, 1, 2], 1.0).is_err());
        // Closure: last entry wraps onto the first.
        assert!(gen(vec![1, 2, 1], 1.0).is_err());
        assert!(gen(vec![1, 2], 0.0).is_err());
        assert!(gen(vec![1, 2], -1.0).is_err());
        assert!(gen(vec![1, 2], f64::INFINITY).is_err());
        assert!(gen(vec![1, 0], 1.0).is_err());
    }

    #[test]
    fn forced_walk_equals_round_robin() {
        let walk = generate(&GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph: pair_graph(),
                hold: HoldDistribution::Fixed(1.0),
                seed: 12345,
            },
            horizon: 50.0,
        })
        .unwrap();
        let robin = generate(&GeneratorSpec {
            kind: GeneratorKind::RoundRobin { cycle: vec![1, 2], hold: 1.0 },
            horizon: 50.0,
        })
        .unwrap();
        assert_eq!(walk.to_csv(), robin.to_csv());
    }

    #[test]
    fn random_walk_deterministic_per_seed() {
        let spec = |seed| GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph: TransitionGraph::complete(3).unwrap(),
                hold: HoldDistribution::UniformRange { min: 0.5, max: 1.5 },
                seed,
            },
            horizon: 60.0,
        };
        let a = generate(&spec(7)).unwrap();
        let b = generate(&spec(7)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = generate(&spec(8)).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn random_walk_respects_graph_and_hold_range() {
        let graph = reference_graph();
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph: graph.clone(),
                hold: HoldDistribution::UniformRange { min: 0.5, max: 1.5 },
                seed: 99,
            },
            horizon: 200.0,
        })
        .unwrap();
        assert!(sig.validate(&graph).ok());
        for hold in sig.hold_lengths() {
            assert!((0.5..=1.5).contains(&hold), "hold {hold} out of range");
        }
    }

    #[test]
    fn random_walk_needs_out_edges() {
        let graph = TransitionGraph::new(2, &[(1, 2)]).unwrap();
        let spec = GeneratorSpec {
            kind: GeneratorKind::RandomWalk {
                graph,
                hold: HoldDistribution::Fixed(1.0),
                seed: 0,
            },
            horizon: 10.0,
        };
        assert!(matches!(generate(&spec), Err(Error::Configuration(_))));
    }

    #[test]
    fn hold_distribution_validation() {
        assert!(HoldDistribution::Fixed(0.0).validate().is_err());
        assert!(HoldDistribution::Fixed(f64::NAN).validate().is_err());
        assert!(HoldDistribution::UniformRange { min: 0.0, max: 1.0 }.validate().is_err());
        assert!(HoldDistribution::UniformRange { min: 2.0, max: 1.0 }.validate().is_err());
        assert!(HoldDistribution::UniformRange { min: 1.0, max: 1.0 }.validate().is_ok());
    }

    #[test]
    fn tracking_without_occupation_targets_matches_count() {
        let profile = count_only_profile();
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::ProfileTracking {
                profile: profile.clone(),
                graph: pair_graph(),
                start: 1,
            },
            horizon: 1000.0,
        })
        .unwrap();
        assert!(sig.validate(&pair_graph()).ok());
        let n = profile.switch_count_expr();
        for k in 1..=20 {
            let t = 50.0 * k as f64;
            let realized = sig.switch_count(t).unwrap() as f64;
            assert!(
                (realized - n.eval(t)).abs() <= 1.0 + 1e-6,
                "count off at t = {t}: {realized} vs {}",
                n.eval(t)
            );
        }
    }

    #[test]
    fn tracking_reference_profile_statistics() {
        let profile = reference_profile();
        let graph = reference_graph();
        let horizon = 3000.0;
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::ProfileTracking {
                profile: profile.clone(),
                graph: graph.clone(),
                start: 1,
            },
            horizon,
        })
        .unwrap();
        assert!(sig.validate(&graph).ok());

        // Switch count stays inside the tracking band.
        let declared = profile.switch_count_expr().eval(horizon);
        let realized = sig.switch_count(horizon).unwrap() as f64;
        assert!(
            (realized - declared).abs() <= TRACKING_WINDOW as f64 + 1.0,
            "count {realized} vs declared {declared}"
        );

        // Occupations approach their targets.
        for (j, expr) in profile.eta_exprs() {
            let target = expr.eval(horizon) / horizon;
            let realized = sig.eta_h(horizon, *j, &HFunction::Identity).unwrap();
            assert!(
                (realized - target).abs() < 0.02,
                "occupation of {j}: {realized} vs {target}"
            );
        }

        // Transition fractions approach the uniform target.
        let residuals = tracking_residuals(&sig, profile.rho()).unwrap();
        for (edge, residual) in &residuals {
            assert!(*residual < 0.02, "residual {residual} on {edge:?}");
        }
    }

    #[test]
    fn tracking_count_only_transition_balance() {
        // With no occupation pressure the greedy choice keeps every used
        // edge within a couple of switches of its target share.
        let n = Expr::new(vec![term(0.5, 1.0)]).unwrap();
        let rho = reference_graph().edges().map(|e| (e, 0.1)).collect();
        let profile =
            SignalProfile::new(HFunction::Identity, n, BTreeMap::new(), rho).unwrap();
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::ProfileTracking {
                profile: profile.clone(),
                graph: reference_graph(),
                start: 1,
            },
            horizon: 2000.0,
        })
        .unwrap();
        let switches = sig.switch_count(sig.horizon()).unwrap() as f64;
        let residuals = tracking_residuals(&sig, profile.rho()).unwrap();
        for (edge, residual) in &residuals {
            assert!(
                *residual <= 2.0 / switches + 1e-12,
                "residual {residual} on {edge:?} exceeds 2/{switches}"
            );
        }
    }

    #[test]
    fn tracking_insufficient_switches() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::ProfileTracking {
                profile: count_only_profile(),
                graph: pair_graph(),
                start: 1,
            },
            horizon: 1.0,
        };
        assert!(matches!(generate(&spec), Err(Error::InsufficientSwitches)));
    }

    #[test]
    fn tracking_input_validation() {
        let gen = |profile, graph, start| {
            generate(&GeneratorSpec {
                kind: GeneratorKind::ProfileTracking { profile, graph, start },
                horizon: 100.0,
            })
        };
        // Start outside the graph.
        assert!(gen(count_only_profile(), pair_graph(), 3).is_err());
        // Occupation target for a system the graph does not have.
        let n = Expr::new(vec![term(0.5, 1.0)]).unwrap();
        let eta = BTreeMap::from([(5, Expr::new(vec![term(0.1, 1.0)]).unwrap())]);
        let profile =
            SignalProfile::new(HFunction::Identity, n.clone(), eta, BTreeMap::new()).unwrap();
        assert!(gen(profile, pair_graph(), 1).is_err());
        // Transition target on a missing edge.
        let rho = BTreeMap::from([((1, 2), 0.5), ((2, 3), 0.5)]);
        let profile =
            SignalProfile::new(HFunction::Identity, n, BTreeMap::new(), rho).unwrap();
        assert!(gen(profile, pair_graph(), 1).is_err());
    }

    #[test]
    fn residuals_cover_untargeted_edges() {
        let sig = generate(&GeneratorSpec {
            kind: GeneratorKind::RoundRobin { cycle: vec![1, 2], hold: 1.0 },
            horizon: 11.0,
        })
        .unwrap();
        let targets = BTreeMap::from([((1, 2), 0.5), ((1, 3), 0.2)]);
        let residuals = tracking_residuals(&sig, &targets).unwrap();
        // 10 switches: five 1->2, five 2->1.
        assert!((residuals[&(1, 2)] - 0.0).abs() < 1e-12);
        assert!((residuals[&(1, 3)] - 0.2).abs() < 1e-12);
        assert!((residuals[&(2, 1)] - 0.5).abs() < 1e-12);
    }
}

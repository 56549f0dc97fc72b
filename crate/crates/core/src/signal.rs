//! Switching signals and the statistics the certifier consumes.
//!
//! A signal is the right-continuous, piecewise-constant map `t -> sigma(t)`
//! picking the active system. It is stored as the strictly increasing switch
//! instants `tau_0 = 0 < tau_1 < ...` with the active index on each hold.
//! Statistics are normalized by a scaling function `h` so they stay
//! meaningful for signals whose switch count grows faster or slower than
//! time itself.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops;

/// Directed graph of admissible transitions on vertices `1..=n`.
/// Self-loops are excluded: a switch must change the active system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionGraph {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl TransitionGraph {
    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::Configuration("transition graph needs at least one vertex".into()));
        }
        let mut set = BTreeSet::new();
        for &(from, to) in edges {
            if from == 0 || to == 0 || from > vertex_count || to > vertex_count {
                return Err(Error::Configuration(format!(
                    "edge {from}->{to} leaves the vertex range 1..={vertex_count}"
                )));
            }
            if from == to {
                return Err(Error::Configuration(format!(
                    "self-loop {from}->{to} is not a switch"
                )));
            }
            set.insert((from, to));
        }
        Ok(Self { vertex_count, edges: set })
    }

    /// Fully connected graph on `n` vertices (all ordered pairs, no loops).
    pub fn complete(vertex_count: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for from in 1..=vertex_count {
            for to in 1..=vertex_count {
                if from != to {
                    edges.push((from, to));
                }
            }
        }
        Self::new(vertex_count, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Successors of `from`, ascending.
    pub fn out_neighbors(&self, from: usize) -> Vec<usize> {
        self.edges
            .range((from, 0)..(from + 1, 0))
            .map(|&(_, to)| to)
            .collect()
    }
}

/// Render a directed edge as the `"k->l"` key used in JSON maps.
pub fn edge_key(from: usize, to: usize) -> String {
    format!("{from}->{to}")
}

/// Parse a `"k->l"` edge key.
pub fn parse_edge_key(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::Configuration(format!("malformed edge key {key:?}, expected \"k->l\""));
    let (lhs, rhs) = key.split_once("->").ok_or_else(bad)?;
    let from: usize = lhs.trim().parse().map_err(|_| bad())?;
    let to: usize = rhs.trim().parse().map_err(|_| bad())?;
    if from == 0 || to == 0 {
        return Err(bad());
    }
    Ok((from, to))
}

/// Scaling function for asymptotic statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum HFunction {
    /// `h(t) = t`.
    Identity,
    /// `h(t) = t^exponent`, exponent > 0.
    Power { exponent: f64 },
    /// `h(t) = t ln(1 + t)`.
    TLog,
}

impl HFunction {
    pub fn validate(&self) -> Result<()> {
        if let HFunction::Power { exponent } = self {
            if !(exponent.is_finite() && *exponent > 0.0) {
                return Err(Error::Configuration(format!(
                    "scaling exponent must be positive and finite, got {exponent}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            HFunction::Identity => t,
            HFunction::Power { exponent } => t.powf(*exponent),
            HFunction::TLog => t * (1.0 + t).ln(),
        }
    }
}

/// Outcome of checking a signal against a transition graph.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    /// Switch numbers (1-based) whose transition is not a graph edge,
    /// with the offending pair.
    pub bad_transitions: Vec<(usize, usize, usize)>,
    /// Hold positions whose index exceeds the vertex count.
    pub bad_indices: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.bad_transitions.is_empty() && self.bad_indices.is_empty()
    }
}

/// Result of an average-dwell-time check over all pairs of switch instants.
#[derive(Debug, Clone, Serialize)]
pub struct AdtCheck {
    pub satisfied: bool,
    /// Largest value of `count - N0 - gap / tau_a` over instant pairs;
    /// positive means the bound is violated somewhere.
    pub worst_excess: f64,
    /// Switch numbers (1-based) realizing the worst excess.
    pub witness: Option<(usize, usize)>,
}

/// A finite switching signal on `[0, horizon]`.
///
/// `instants[0] = 0` is not a switch; instants `1..` are. The active index on
/// `[instants[i], instants[i+1])` is `active[i]`, and `active.last()` runs to
/// the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    instants: Vec<f64>,
    active: Vec<usize>,
    horizon: f64,
}

impl SwitchingSignal {
    pub fn new(instants: Vec<f64>, active: Vec<usize>, horizon: f64) -> Result<Self> {
        if instants.is_empty() || instants[0] != 0.0 {
            return Err(Error::Configuration("signal must start at instant 0".into()));
        }
        if instants.len() != active.len() {
            return Err(Error::Configuration(format!(
                "{} instants but {} active indices",
                instants.len(),
                active.len()
            )));
        }
        for w in instants.windows(2) {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(Error::Configuration(format!(
                    "switch instants must increase strictly, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        for (i, w) in active.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(Error::Configuration(format!(
                    "switch {} does not change the active system (stays {})",
                    i + 1,
                    w[0]
                )));
            }
        }
        if active.iter().any(|&s| s == 0) {
            return Err(Error::Configuration("system indices are 1-based; found 0".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0 && horizon >= *instants.last().unwrap()) {
            return Err(Error::Configuration(format!(
                "horizon {horizon} must be finite and reach past the last switch"
            )));
        }
        Ok(Self { instants, active, horizon })
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Total number of switches on `(0, horizon]`.
    pub fn total_switches(&self) -> usize {
        self.instants.len() - 1
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t.is_finite() && (0.0..=self.horizon).contains(&t)) {
            return Err(Error::Domain(format!(
                "time {t} outside the signal span [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Number of switches on `(0, t]`.
    pub fn switch_count(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        // instants[1..] are the switches; count those <= t.
        Ok(self.instants[1..].partition_point(|&tau| tau <= t))
    }

    /// Active system at time `t` (right-continuous).
    pub fn index_at(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let pos = self.instants.partition_point(|&tau| tau <= t);
        Ok(self.active[pos - 1])
    }

    /// Lengths of the completed holds, in order. The hold running at the
    /// horizon is not included.
    pub fn hold_lengths(&self) -> Vec<f64> {
        self.instants.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Number of `from -> to` transitions on `(0, t]`.
    pub fn transition_count(&self, t: f64, from: usize, to: usize) -> Result<usize> {
        let n = self.switch_count(t)?;
        Ok((1..=n)
            .filter(|&i| self.active[i - 1] == from && self.active[i] == to)
            .count())
    }

    /// Scaled switching rate `N(t) / h(t)`.
    pub fn nu_h(&self, t: f64, h: &HFunction) -> Result<f64> {
        let n = self.switch_count(t)?;
        let denom = h.eval(t);
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::UndefinedStatistic(format!(
                "scaling function vanishes at t = {t}"
            )));
        }
        Ok(n as f64 / denom)
    }

    /// Fraction of switches on `(0, t]` that execute `from -> to`.
    pub fn rho(&self, t: f64, from: usize, to: usize) -> Result<f64> {
        let n = self.switch_count(t)?;
        if n == 0 {
            return Err(Error::UndefinedStatistic(format!(
                "no switches by t = {t}, transition fractions undefined"
            )));
        }
        Ok(self.transition_count(t, from, to)? as f64 / n as f64)
    }

    /// Scaled occupation `eta_j(t) / h(t)` of system `j`, counting completed
    /// holds only: the hold still running at `t` contributes nothing.
    pub fn eta_h(&self, t: f64, j: usize, h: &HFunction) -> Result<f64> {
        self.check_time(t)?;
        let denom = h.eval(t);
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::UndefinedStatistic(format!(
                "scaling function vanishes at t = {t}"
            )));
        }
        let mut total = 0.0;
        for i in 0..self.instants.len() - 1 {
            let end = self.instants[i + 1];
            if end > t {
                break;
            }
            if self.active[i] == j {
                total += end - self.instants[i];
            }
        }
        Ok(total / denom)
    }

    /// Check the average-dwell-time bound `N(s, t] <= N0 + (t - s) / tau_a`
    /// for every window. It is enough to test windows pinned to switch
    /// instants, with the left end approached from below, which gives the
    /// pair condition `(j - i + 1) <= N0 + (tau_j - tau_i) / tau_a` for all
    /// switch numbers `i <= j`. Equality satisfies the bound.
    pub fn check_adt(&self, tau_a: f64, n0: f64) -> Result<AdtCheck> {
        if !(tau_a.is_finite() && tau_a > 0.0) {
            return Err(Error::Domain(format!("dwell time {tau_a} must be positive")));
        }
        if !(n0.is_finite() && n0 >= 0.0) {
            return Err(Error::Domain(format!("chatter bound {n0} must be nonnegative")));
        }
        let mut worst = f64::NEG_INFINITY;
        let mut witness = None;
        let n = self.total_switches();
        for i in 1..=n {
            for j in i..=n {
                let count = (j - i + 1) as f64;
                let bound = n0 + (self.instants[j] - self.instants[i]) / tau_a;
                let excess = count - bound;
                if excess > worst {
                    worst = excess;
                    witness = Some((i, j));
                }
            }
        }
        if n == 0 {
            return Ok(AdtCheck { satisfied: true, worst_excess: f64::NEG_INFINITY, witness: None });
        }
        // Tiny slack so an exact-equality schedule is not failed by roundoff
        // in the division.
        let tol = 1e-9 * (1.0 + n0.abs() + self.horizon / tau_a);
        Ok(AdtCheck { satisfied: worst <= tol, worst_excess: worst, witness })
    }

    /// Check every executed transition against the graph.
    pub fn validate(&self, graph: &TransitionGraph) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (pos, &idx) in self.active.iter().enumerate() {
            if idx > graph.vertex_count() {
                report.bad_indices.push((pos, idx));
            }
        }
        for i in 1..self.instants.len() {
            let (from, to) = (self.active[i - 1], self.active[i]);
            if !graph.has_edge(from, to) {
                report.bad_transitions.push((i, from, to));
            }
        }
        report
    }

    /// Transition counts for every executed pair by time `t`.
    pub fn transition_histogram(&self, t: f64) -> Result<BTreeMap<(usize, usize), usize>> {
        let n = self.switch_count(t)?;
        let mut hist = BTreeMap::new();
        for i in 1..=n {
            *hist.entry((self.active[i - 1], self.active[i])).or_insert(0) += 1;
        }
        Ok(hist)
    }

    /// Serialize as `tau,sigma` CSV. Floats print in shortest round-trip
    /// form, so parsing the output reproduces the signal exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,sigma\n");
        for (tau, sigma) in self.instants.iter().zip(&self.active) {
            out.push_str(&format!("{tau},{sigma}\n"));
        }
        out
    }

    pub fn from_csv(text: &str, horizon: f64) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("tau,sigma") => {}
            other => {
                return Err(Error::Configuration(format!(
                    "expected header \"tau,sigma\", got {other:?}"
                )))
            }
        }
        let mut instants = Vec::new();
        let mut active = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tau_s, sigma_s) = line.split_once(',').ok_or_else(|| {
                Error::Configuration(format!("line {}: expected \"tau,sigma\"", lineno + 2))
            })?;
            let tau: f64 = tau_s.trim().parse().map_err(|_| {
                Error::Configuration(format!("line {}: bad instant {tau_s:?}", lineno + 2))
            })?;
            let sigma: usize = sigma_s.trim().parse().map_err(|_| {
                Error::Configuration(format!("line {}: bad index {sigma_s:?}", lineno + 2))
            })?;
            instants.push(tau);
            active.push(sigma);
        }
        Self::new(instants, active, horizon)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = matops::fnv_init();
        for &tau in &self.instants {
            h = matops::fnv_u64(h, tau.to_bits());
        }
        for &s in &self.active {
            h = matops::fnv_u64(h, s as u64);
        }
        matops::fnv_u64(h, self.horizon.to_bits())
    }
}

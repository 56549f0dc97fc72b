//! Asymptotic density bundles: the scalars the certificate inequality
//! actually consumes.
//!
//! A bundle holds upper/lower densities for the switch count, per-system
//! occupation, and per-edge transition fractions, all scaled by a common
//! function `h`. Bundles come from three places: symbolic limits of a
//! declared profile, direct user declaration, or empirical extrema over the
//! tail of a concrete signal.

use std::collections::BTreeMap;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::signal::{edge_key, parse_edge_key, HFunction, SwitchingSignal, TransitionGraph};

/// Fraction of the horizon used as the empirical tail when none is given.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

/// Grid resolution for empirical extrema and profile validation sweeps.
const GRID_POINTS: usize = 256;

/// Exponent separation below which two monomials are treated as one.
const POWER_MERGE_TOL: f64 = 1e-12;

/// One monomial `coeff * t^power * ln(1+t)^(0 or 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileTerm {
    pub coeff: f64,
    pub power: f64,
    pub log: bool,
}

impl Serialize for ProfileTerm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let len = if self.log { 3 } else { 2 };
        let mut seq = serializer.serialize_seq(Some(len))?;
        seq.serialize_element(&self.coeff)?;
        seq.serialize_element(&self.power)?;
        if self.log {
            seq.serialize_element(&true)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ProfileTerm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TermVisitor;
        impl<'de> Visitor<'de> for TermVisitor {
            type Value = ProfileTerm;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a term [coeff, power] or [coeff, power, true]")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                use serde::de::Error as _;
                let coeff: f64 =
                    seq.next_element()?.ok_or_else(|| A::Error::custom("missing coefficient"))?;
                let power: f64 =
                    seq.next_element()?.ok_or_else(|| A::Error::custom("missing exponent"))?;
                let log: Option<bool> = seq.next_element()?;
                if seq.next_element::<serde_json::Value>()?.is_some() {
                    return Err(A::Error::custom("term has more than three entries"));
                }
                Ok(ProfileTerm { coeff, power, log: log.unwrap_or(false) })
            }
        }
        deserializer.deserialize_seq(TermVisitor)
    }
}

/// Sum of monomial terms, closed under the limits the certifier needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expr {
    terms: Vec<ProfileTerm>,
}

impl Expr {
    pub fn new(terms: Vec<ProfileTerm>) -> Result<Self> {
        for t in &terms {
            if !(t.coeff.is_finite() && t.power.is_finite()) {
                return Err(Error::Configuration(format!(
                    "non-finite profile term ({}, {})",
                    t.coeff, t.power
                )));
            }
        }
        Ok(Self { terms })
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: vec![ProfileTerm { coeff: c, power: 0.0, log: false }] }
    }

    pub fn terms(&self) -> &[ProfileTerm] {
        &self.terms
    }

    pub fn eval(&self, t: f64) -> f64 {
        let log = (1.0 + t).ln();
        self.terms
            .iter()
            .map(|term| term.coeff * t.powf(term.power) * if term.log { log } else { 1.0 })
            .sum()
    }

    /// Dominant term after merging equal-order monomials. Coefficients that
    /// cancel below relative 1e-12 are dropped entirely, so `t - t + sqrt(t)`
    /// leads with `sqrt(t)`. `None` means the expression vanishes.
    fn leading(&self) -> Option<ProfileTerm> {
        if self.terms.is_empty() {
            return None;
        }
        let scale = self.terms.iter().map(|t| t.coeff.abs()).fold(0.0f64, f64::max);
        let mut merged: Vec<ProfileTerm> = Vec::new();
        for term in &self.terms {
            match merged
                .iter_mut()
                .find(|m| m.log == term.log && (m.power - term.power).abs() <= POWER_MERGE_TOL)
            {
                Some(m) => m.coeff += term.coeff,
                None => merged.push(*term),
            }
        }
        merged
            .into_iter()
            .filter(|t| t.coeff.abs() > 1e-12 * scale)
            .max_by(|a, b| {
                (a.power, a.log as u8)
                    .partial_cmp(&(b.power, b.log as u8))
                    .expect("finite exponents")
            })
    }
}

/// The scaling function as an expression, for order comparisons.
fn h_expr(h: &HFunction) -> Expr {
    let term = match h {
        HFunction::Identity => ProfileTerm { coeff: 1.0, power: 1.0, log: false },
        HFunction::Power { exponent } => ProfileTerm { coeff: 1.0, power: *exponent, log: false },
        HFunction::TLog => ProfileTerm { coeff: 1.0, power: 1.0, log: true },
    };
    Expr { terms: vec![term] }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LimitValue {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
}

/// Limit of `num(t) / den(t)` as `t` grows, by comparing dominant orders.
/// The denominator must not vanish and must have a positive dominant
/// coefficient (true for every scaling function).
fn limit_ratio(num: &Expr, den: &Expr) -> Result<LimitValue> {
    let d = den
        .leading()
        .ok_or_else(|| Error::Configuration("scaling expression vanishes".into()))?;
    if d.coeff <= 0.0 {
        return Err(Error::Configuration("scaling expression is eventually negative".into()));
    }
    let n = match num.leading() {
        None => return Ok(LimitValue::Finite(0.0)),
        Some(n) => n,
    };
    let ratio = n.coeff / d.coeff;
    if n.power > d.power + POWER_MERGE_TOL
        || ((n.power - d.power).abs() <= POWER_MERGE_TOL && n.log && !d.log)
    {
        return Ok(if ratio > 0.0 { LimitValue::PlusInfinity } else { LimitValue::MinusInfinity });
    }
    if (n.power - d.power).abs() <= POWER_MERGE_TOL && n.log == d.log {
        return Ok(LimitValue::Finite(ratio));
    }
    Ok(LimitValue::Finite(0.0))
}

/// Declared asymptotic shape of a signal: cumulative switch count `N`,
/// per-system occupation `eta`, constant transition fractions `rho`, and the
/// scaling `h` the densities are taken against.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalProfile {
    h: HFunction,
    n: Expr,
    eta: BTreeMap<usize, Expr>,
    rho: BTreeMap<(usize, usize), f64>,
}

impl SignalProfile {
    pub fn new(
        h: HFunction,
        n: Expr,
        eta: BTreeMap<usize, Expr>,
        rho: BTreeMap<(usize, usize), f64>,
    ) -> Result<Self> {
        h.validate()?;
        // Sanity sweep over a logarithmic grid; symbolic limits alone would
        // accept profiles that are degenerate at every finite time.
        let grid: Vec<f64> =
            (0..=60).map(|k| 10f64.powf(1.0 + 5.0 * k as f64 / 60.0)).collect();
        let mut prev = f64::NEG_INFINITY;
        for &t in &grid {
            let v = n.eval(t);
            let slack = 1e-9 * v.abs().max(1.0);
            if v < -slack {
                return Err(Error::Configuration(format!(
                    "switch count is negative at t = {t:.3e}"
                )));
            }
            if v < prev - slack {
                return Err(Error::Configuration(format!(
                    "switch count decreases near t = {t:.3e}"
                )));
            }
            prev = prev.max(v);
        }
        for (j, expr) in &eta {
            if *j == 0 {
                return Err(Error::Configuration("system indices are 1-based; found 0".into()));
            }
            for &t in &grid {
                let v = expr.eval(t);
                if v < -1e-9 * v.abs().max(1.0) {
                    return Err(Error::Configuration(format!(
                        "occupation of system {j} is negative at t = {t:.3e}"
                    )));
                }
            }
        }
        let mut total = 0.0;
        for (&(from, to), &r) in &rho {
            if from == 0 || to == 0 || from == to {
                return Err(Error::Configuration(format!(
                    "transition fraction on invalid edge {from}->{to}"
                )));
            }
            if !(r.is_finite() && (0.0..=1.0).contains(&r)) {
                return Err(Error::Configuration(format!(
                    "transition fraction {r} for {from}->{to} outside [0, 1]"
                )));
            }
            total += r;
        }
        if !rho.is_empty() && (total - 1.0).abs() > 1e-9 {
            return Err(Error::Configuration(format!(
                "transition fractions sum to {total}, expected 1"
            )));
        }
        Ok(Self { h, n, eta, rho })
    }

    pub fn h(&self) -> &HFunction {
        &self.h
    }

    pub fn switch_count_expr(&self) -> &Expr {
        &self.n
    }

    pub fn eta_exprs(&self) -> &BTreeMap<usize, Expr> {
        &self.eta
    }

    pub fn rho(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.rho
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    h: HFunction,
    #[serde(rename = "N")]
    n: Vec<ProfileTerm>,
    #[serde(default)]
    eta: BTreeMap<String, Vec<ProfileTerm>>,
    #[serde(default)]
    rho: BTreeMap<String, f64>,
}

impl Serialize for SignalProfile {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = ProfileRepr {
            h: self.h.clone(),
            n: self.n.terms.clone(),
            eta: self
                .eta
                .iter()
                .map(|(j, e)| (j.to_string(), e.terms.clone()))
                .collect(),
            rho: self.rho.iter().map(|(&(k, l), &r)| (edge_key(k, l), r)).collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SignalProfile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ProfileRepr::deserialize(deserializer)?;
        let n = Expr::new(repr.n).map_err(D::Error::custom)?;
        let mut eta = BTreeMap::new();
        for (key, terms) in repr.eta {
            let j: usize = key
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("bad system key {key:?}")))?;
            eta.insert(j, Expr::new(terms).map_err(D::Error::custom)?);
        }
        let mut rho = BTreeMap::new();
        for (key, r) in repr.rho {
            let edge = parse_edge_key(&key).map_err(D::Error::custom)?;
            rho.insert(edge, r);
        }
        SignalProfile::new(repr.h, n, eta, rho).map_err(D::Error::custom)
    }
}

/// Where a bundle's numbers came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Symbolic limits of a declared profile.
    Profile,
    /// Direct user declaration.
    Declared,
    /// Extrema over the tail of a concrete signal.
    EmpiricalTail,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Profile => write!(f, "profile"),
            Provenance::Declared => write!(f, "declared"),
            Provenance::EmpiricalTail => write!(f, "empirical_tail"),
        }
    }
}

/// Upper and lower asymptotic densities, validated for mutual consistency.
///
/// Analytic bundles must have transition fractions summing to at most one.
/// Empirical bundles are exempt: their per-edge maxima are attained at
/// different grid times, so the sum legitimately overshoots one by a term of
/// order `edges / switches` at any finite horizon. The overshoot only ever
/// tightens the certification inequality on growing-jump edges, and the
/// convergence flag reports whether the tail had settled.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityBundle {
    h: HFunction,
    nu_check: f64,
    nu_hat: f64,
    eta_check: BTreeMap<usize, f64>,
    eta_hat: BTreeMap<usize, f64>,
    rho_hat: BTreeMap<(usize, usize), f64>,
    provenance: Provenance,
    converged: bool,
}

impl DensityBundle {
    #[allow(clippy::too_many_arguments)]
    fn build(
        h: HFunction,
        nu_check: f64,
        nu_hat: f64,
        eta_check: BTreeMap<usize, f64>,
        eta_hat: BTreeMap<usize, f64>,
        rho_hat: BTreeMap<(usize, usize), f64>,
        provenance: Provenance,
        converged: bool,
    ) -> Result<Self> {
        h.validate()?;
        if !(nu_check.is_finite() && nu_hat.is_finite() && nu_check >= 0.0) {
            return Err(Error::InconsistentBundle(format!(
                "switching densities must be finite and nonnegative, got [{nu_check}, {nu_hat}]"
            )));
        }
        if nu_check > nu_hat {
            return Err(Error::InconsistentBundle(format!(
                "lower switching density {nu_check} exceeds upper {nu_hat}"
            )));
        }
        for (name, map) in [("lower", &eta_check), ("upper", &eta_hat)] {
            for (j, &v) in map {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InconsistentBundle(format!(
                        "{name} occupation density for system {j} is {v}"
                    )));
                }
            }
        }
        for (j, &lo) in &eta_check {
            if let Some(&hi) = eta_hat.get(j) {
                if lo > hi {
                    return Err(Error::InconsistentBundle(format!(
                        "occupation bounds for system {j} cross: [{lo}, {hi}]"
                    )));
                }
            }
        }
        let mut total = 0.0;
        for (&(from, to), &r) in &rho_hat {
            if from == 0 || to == 0 || from == to {
                return Err(Error::InconsistentBundle(format!(
                    "transition fraction on invalid edge {from}->{to}"
                )));
            }
            if !(r.is_finite() && (0.0..=1.0).contains(&r)) {
                return Err(Error::InconsistentBundle(format!(
                    "transition fraction {r} for {from}->{to} outside [0, 1]"
                )));
            }
            total += r;
        }
        if provenance != Provenance::EmpiricalTail && total > 1.0 + 1e-9 {
            return Err(Error::InconsistentBundle(format!(
                "transition fractions sum to {total} > 1"
            )));
        }
        Ok(Self { h, nu_check, nu_hat, eta_check, eta_hat, rho_hat, provenance, converged })
    }

    /// Bundle from directly declared densities.
    pub fn declared(
        h: HFunction,
        nu_check: f64,
        nu_hat: f64,
        eta_check: BTreeMap<usize, f64>,
        eta_hat: BTreeMap<usize, f64>,
        rho_hat: BTreeMap<(usize, usize), f64>,
    ) -> Result<Self> {
        Self::build(h, nu_check, nu_hat, eta_check, eta_hat, rho_hat, Provenance::Declared, true)
    }

    pub fn h(&self) -> &HFunction {
        &self.h
    }
    pub fn nu_check(&self) -> f64 {
        self.nu_check
    }
    pub fn nu_hat(&self) -> f64 {
        self.nu_hat
    }
    pub fn eta_check(&self) -> &BTreeMap<usize, f64> {
        &self.eta_check
    }
    pub fn eta_hat(&self) -> &BTreeMap<usize, f64> {
        &self.eta_hat
    }
    pub fn rho_hat(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.rho_hat
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    /// Whether the numbers are settled: always true for analytic provenance,
    /// and true for empirical bundles whose tail halves agree.
    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// Bundle from the symbolic limits of a profile. Both densities of each kind
/// coincide because every expression in the family has a genuine limit.
pub fn densities_from_profile(profile: &SignalProfile) -> Result<DensityBundle> {
    let h = h_expr(profile.h());
    let nu = match limit_ratio(profile.switch_count_expr(), &h)? {
        LimitValue::Finite(v) if v >= -1e-12 => v.max(0.0),
        LimitValue::Finite(v) => {
            return Err(Error::Configuration(format!(
                "switch count is eventually negative (limit {v})"
            )))
        }
        LimitValue::PlusInfinity => {
            return Err(Error::DivergentDensity(
                "switch count outgrows the scaling function".into(),
            ))
        }
        LimitValue::MinusInfinity => {
            return Err(Error::Configuration("switch count diverges to minus infinity".into()))
        }
    };
    let mut eta = BTreeMap::new();
    for (&j, expr) in profile.eta_exprs() {
        let v = match limit_ratio(expr, &h)? {
            LimitValue::Finite(v) if v >= -1e-12 => v.max(0.0),
            LimitValue::Finite(v) => {
                return Err(Error::Configuration(format!(
                    "occupation of system {j} is eventually negative (limit {v})"
                )))
            }
            LimitValue::PlusInfinity => {
                return Err(Error::DivergentDensity(format!(
                    "occupation of system {j} outgrows the scaling function"
                )))
            }
            LimitValue::MinusInfinity => {
                return Err(Error::Configuration(format!(
                    "occupation of system {j} diverges to minus infinity"
                )))
            }
        };
        eta.insert(j, v);
    }
    DensityBundle::build(
        profile.h().clone(),
        nu,
        nu,
        eta.clone(),
        eta,
        profile.rho().clone(),
        Provenance::Profile,
        true,
    )
}

/// Running min/max split across the two halves of the tail grid.
#[derive(Clone, Copy)]
struct Extrema {
    halves: [(f64, f64); 2],
}

impl Extrema {
    fn new() -> Self {
        Self { halves: [(f64::INFINITY, f64::NEG_INFINITY); 2] }
    }
    fn push(&mut self, v: f64, half: usize) {
        let (min, max) = &mut self.halves[half];
        *min = min.min(v);
        *max = max.max(v);
    }
    fn min(&self) -> f64 {
        self.halves[0].0.min(self.halves[1].0)
    }
    fn max(&self) -> f64 {
        self.halves[0].1.max(self.halves[1].1)
    }
    /// Whether the two halves saw the same range, within 5 percent.
    fn settled(&self) -> bool {
        let rel_close =
            |a: f64, b: f64| (a - b).abs() <= 0.05 * a.abs().max(b.abs()).max(1e-12);
        let [(min0, max0), (min1, max1)] = self.halves;
        min0.is_finite()
            && min1.is_finite()
            && rel_close(min0, min1)
            && rel_close(max0, max1)
    }
}

/// Bundle from grid extrema over the tail `[tail_fraction * T, T]` of a
/// concrete signal. The hat values are grid maxima, the check values grid
/// minima; `converged` reports whether the extrema over the first and second
/// halves of the tail agree within 5 percent for every statistic.
///
/// Occupation entries cover every graph vertex and transition entries every
/// graph edge, with zeros where the signal never goes.
pub fn densities_empirical(
    signal: &SwitchingSignal,
    h: &HFunction,
    graph: &TransitionGraph,
    tail_fraction: f64,
) -> Result<DensityBundle> {
    h.validate()?;
    if !(tail_fraction.is_finite() && tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::Configuration(format!(
            "tail fraction {tail_fraction} must lie in (0, 1)"
        )));
    }
    let report = signal.validate(graph);
    if !report.ok() {
        return Err(Error::Configuration(format!(
            "signal leaves the transition graph: {} bad transitions, {} bad indices",
            report.bad_transitions.len(),
            report.bad_indices.len()
        )));
    }
    let horizon = signal.horizon();
    let t0 = tail_fraction * horizon;
    let in_tail = signal.switch_count(horizon)? - signal.switch_count(t0)?;
    if in_tail < 10 {
        return Err(Error::InsufficientData(format!(
            "only {in_tail} switches in the tail [{t0:.3e}, {horizon:.3e}]; need at least 10"
        )));
    }

    let instants = signal.instants();
    let active = signal.active_indices();
    let systems: Vec<usize> = (1..=graph.vertex_count()).collect();
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|g| t0 + (horizon - t0) * g as f64 / (GRID_POINTS - 1) as f64)
        .collect();

    // Single merged sweep: advance through switches once, snapshotting the
    // running statistics at each grid point.
    let mut occupation: BTreeMap<usize, f64> = systems.iter().map(|&j| (j, 0.0)).collect();
    let mut edge_counts: BTreeMap<(usize, usize), usize> =
        graph.edges().map(|e| (e, 0)).collect();
    let mut switches_seen = 0usize;
    let mut next_switch = 1usize;

    let mut nu_ext = Extrema::new();
    let mut eta_ext: BTreeMap<usize, Extrema> =
        systems.iter().map(|&j| (j, Extrema::new())).collect();
    let mut rho_ext: BTreeMap<(usize, usize), Extrema> =
        graph.edges().map(|e| (e, Extrema::new())).collect();

    for (g, &t) in grid.iter().enumerate() {
        while next_switch < instants.len() && instants[next_switch] <= t {
            let i = next_switch;
            *occupation.get_mut(&active[i - 1]).unwrap() += instants[i] - instants[i - 1];
            *edge_counts.get_mut(&(active[i - 1], active[i])).unwrap() += 1;
            switches_seen += 1;
            next_switch += 1;
        }
        let denom = h.eval(t);
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::UndefinedStatistic(format!(
                "scaling function vanishes at t = {t}"
            )));
        }
        let half = (g >= GRID_POINTS / 2) as usize;
        nu_ext.push(switches_seen as f64 / denom, half);
        for &j in &systems {
            eta_ext.get_mut(&j).unwrap().push(occupation[&j] / denom, half);
        }
        if switches_seen > 0 {
            for (edge, ext) in rho_ext.iter_mut() {
                ext.push(edge_counts[edge] as f64 / switches_seen as f64, half);
            }
        }
    }

    let mut converged = nu_ext.settled();
    let mut eta_check = BTreeMap::new();
    let mut eta_hat = BTreeMap::new();
    for (&j, ext) in &eta_ext {
        eta_check.insert(j, ext.min().max(0.0));
        eta_hat.insert(j, ext.max().max(0.0));
        converged = converged && ext.settled();
    }
    let mut rho_hat = BTreeMap::new();
    for (&edge, ext) in &rho_ext {
        rho_hat.insert(edge, ext.max().max(0.0));
        converged = converged && ext.settled();
    }

    DensityBundle::build(
        h.clone(),
        nu_ext.min().max(0.0),
        nu_ext.max(),
        eta_check,
        eta_hat,
        rho_hat,
        Provenance::EmpiricalTail,
        converged,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(coeff: f64, power: f64) -> ProfileTerm {
        ProfileTerm { coeff, power, log: false }
    }

    fn expr(terms: &[ProfileTerm]) -> Expr {
        Expr::new(terms.to_vec()).unwrap()
    }

    #[test]
    fn eval_and_cancellation() {
        let e = expr(&[term(1.0, 1.0), term(-1.0, 1.0), term(2.0, 0.5)]);
        assert!((e.eval(4.0) - 4.0).abs() < 1e-12);
        let lead = e.leading().unwrap();
        assert_eq!(lead.power, 0.5);
        assert_eq!(lead.coeff, 2.0);

        let log_term = ProfileTerm { coeff: 3.0, power: 1.0, log: true };
        let with_log = expr(&[term(5.0, 1.0), log_term]);
        assert!((with_log.eval(1.0) - (5.0 + 3.0 * 2.0f64.ln())).abs() < 1e-12);
        // The log factor dominates at equal power.
        assert_eq!(with_log.leading().unwrap().coeff, 3.0);
    }

    #[test]
    fn ratio_limits() {
        let h = h_expr(&HFunction::Identity);
        let cases = [
            (expr(&[term(2.0, 1.0), term(7.0, 0.5)]), LimitValue::Finite(2.0)),
            (expr(&[term(1.0, 0.5)]), LimitValue::Finite(0.0)),
            (expr(&[term(1.0, 2.0)]), LimitValue::PlusInfinity),
            (expr(&[term(-3.0, 1.5)]), LimitValue::MinusInfinity),
            (expr(&[ProfileTerm { coeff: 1.0, power: 1.0, log: true }]), LimitValue::PlusInfinity),
            (expr(&[]), LimitValue::Finite(0.0)),
        ];
        for (num, want) in cases {
            assert_eq!(limit_ratio(&num, &h).unwrap(), want);
        }

        // Against t ln(1+t) the bare t term washes out.
        let tlog = h_expr(&HFunction::TLog);
        assert_eq!(
            limit_ratio(&expr(&[term(4.0, 1.0)]), &tlog).unwrap(),
            LimitValue::Finite(0.0)
        );
        assert_eq!(
            limit_ratio(&expr(&[ProfileTerm { coeff: 4.0, power: 1.0, log: true }]), &tlog)
                .unwrap(),
            LimitValue::Finite(4.0)
        );

        // Superlinear switching handled by a matching power scaling.
        let h32 = h_expr(&HFunction::Power { exponent: 1.5 });
        assert_eq!(
            limit_ratio(&expr(&[term(1.0, 1.5), term(1.0, 1.0)]), &h32).unwrap(),
            LimitValue::Finite(1.0)
        );
    }

    fn reference_profile() -> SignalProfile {
        // N(t) = t/3 + sqrt(t); eta_1 = t/1.1 - sqrt(t); eta_2 = t^(1/9);
        // eta_3 = eta_4 = (t - eta_1 - eta_2) / 2; rho uniform over ten edges.
        let n = expr(&[term(1.0 / 3.0, 1.0), term(1.0, 0.5)]);
        let eta1 = expr(&[term(1.0 / 1.1, 1.0), term(-1.0, 0.5)]);
        let eta2 = expr(&[term(1.0, 1.0 / 9.0)]);
        let eta34 = expr(&[
            term(0.5 * (1.0 - 1.0 / 1.1), 1.0),
            term(0.5, 0.5),
            term(-0.5, 1.0 / 9.0),
        ]);
        let eta = BTreeMap::from([(1, eta1), (2, eta2), (3, eta34.clone()), (4, eta34)]);
        let edges =
            [(1, 2), (2, 1), (1, 3), (3, 1), (1, 4), (4, 1), (2, 3), (3, 2), (2, 4), (4, 2)];
        let rho = edges.into_iter().map(|e| (e, 0.1)).collect();
        SignalProfile::new(HFunction::Identity, n, eta, rho).unwrap()
    }

    #[test]
    fn reference_profile_limits() {
        let bundle = densities_from_profile(&reference_profile()).unwrap();
        assert_eq!(bundle.provenance(), Provenance::Profile);
        assert!((bundle.nu_hat() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(bundle.nu_check(), bundle.nu_hat());
        assert!((bundle.eta_check()[&1] - 1.0 / 1.1).abs() < 1e-15);
        assert_eq!(bundle.eta_hat()[&2], 0.0);
        assert!((bundle.eta_hat()[&3] - 1.0 / 22.0).abs() < 1e-15);
        assert!((bundle.eta_hat()[&4] - 1.0 / 22.0).abs() < 1e-15);
        assert_eq!(bundle.rho_hat().len(), 10);
        assert!((bundle.rho_hat()[&(1, 2)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn divergent_profiles_are_rejected() {
        let n = expr(&[term(1.0, 2.0)]);
        let p = SignalProfile::new(HFunction::Identity, n, BTreeMap::new(), BTreeMap::new())
            .unwrap();
        assert!(matches!(densities_from_profile(&p), Err(Error::DivergentDensity(_))));

        let n_log = Expr::new(vec![ProfileTerm { coeff: 1.0, power: 1.0, log: true }]).unwrap();
        let p =
            SignalProfile::new(HFunction::Identity, n_log, BTreeMap::new(), BTreeMap::new())
                .unwrap();
        assert!(matches!(densities_from_profile(&p), Err(Error::DivergentDensity(_))));

        // Same numerator against the matching scaling is fine.
        let n_log = Expr::new(vec![ProfileTerm { coeff: 2.0, power: 1.0, log: true }]).unwrap();
        let p = SignalProfile::new(HFunction::TLog, n_log, BTreeMap::new(), BTreeMap::new())
            .unwrap();
        assert_eq!(densities_from_profile(&p).unwrap().nu_hat(), 2.0);
    }

    #[test]
    fn profile_validation() {
        let n = expr(&[term(1.0, 1.0)]);
        // Fractions must sum to one.
        let rho = BTreeMap::from([((1, 2), 0.4), ((2, 1), 0.4)]);
        assert!(SignalProfile::new(HFunction::Identity, n.clone(), BTreeMap::new(), rho)
            .is_err());
        // Negative occupation on the sweep grid.
        let eta = BTreeMap::from([(1, expr(&[term(-1.0, 1.0)]))]);
        assert!(SignalProfile::new(HFunction::Identity, n.clone(), eta, BTreeMap::new())
            .is_err());
        // Decreasing switch count.
        let dec = expr(&[term(-2.0, 1.0), term(100.0, 0.0)]);
        assert!(SignalProfile::new(HFunction::Identity, dec, BTreeMap::new(), BTreeMap::new())
            .is_err());
        // Self-loop fraction.
        let rho = BTreeMap::from([((1, 1), 1.0)]);
        assert!(SignalProfile::new(HFunction::Identity, n, BTreeMap::new(), rho).is_err());
    }

    #[test]
    fn profile_json_schema() {
        let json = r#"{
            "h": {"form": "identity"},
            "N": [[0.5, 1], [1, 0.5]],
            "eta": {"1": [[0.25, 1]], "2": [[0.75, 1, true]]},
            "rho": {"1->2": 0.5, "2->1": 0.5}
        }"#;
        let p: SignalProfile = serde_json::from_str(json).unwrap();
        assert_eq!(p.switch_count_expr().terms().len(), 2);
        assert!(p.eta_exprs()[&2].terms()[0].log);
        assert_eq!(p.rho()[&(1, 2)], 0.5);

        let round = serde_json::to_string(&p).unwrap();
        let back: SignalProfile = serde_json::from_str(&round).unwrap();
        assert_eq!(back, p);

        // Terms with a fourth entry or bad edge keys are rejected.
        assert!(serde_json::from_str::<SignalProfile>(
            r#"{"h":{"form":"identity"},"N":[[1,1,true,5]]}"#
        )
        .is_err());
        assert!(serde_json::from_str::<SignalProfile>(
            r#"{"h":{"form":"identity"},"N":[[1,1]],"rho":{"1-2":1.0}}"#
        )
        .is_err());
    }

    #[test]
    fn bundle_invariants() {
        let h = HFunction::Identity;
        assert!(matches!(
            DensityBundle::declared(h.clone(), 2.0, 1.0, BTreeMap::new(), BTreeMap::new(), BTreeMap::new()),
            Err(Error::InconsistentBundle(_))
        ));
        let lo = BTreeMap::from([(1, 0.8)]);
        let hi = BTreeMap::from([(1, 0.5)]);
        assert!(matches!(
            DensityBundle::declared(h.clone(), 0.0, 1.0, lo, hi, BTreeMap::new()),
            Err(Error::InconsistentBundle(_))
        ));
        let rho = BTreeMap::from([((1, 2), 0.7), ((2, 1), 0.7)]);
        assert!(matches!(
            DensityBundle::declared(h.clone(), 0.0, 1.0, BTreeMap::new(), BTreeMap::new(), rho),
            Err(Error::InconsistentBundle(_))
        ));
        let ok = DensityBundle::declared(
            h,
            0.5,
            1.0,
            BTreeMap::from([(1, 0.2)]),
            BTreeMap::from([(1, 0.4)]),
            BTreeMap::from([((1, 2), 0.5), ((2, 1), 0.5)]),
        )
        .unwrap();
        assert_eq!(ok.provenance(), Provenance::Declared);
        assert!(ok.converged());
    }

    #[test]
    fn empirical_alternation() {
        // Unit holds alternating 1, 2 out to T = 200.
        let n = 199;
        let instants: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let active: Vec<usize> = (0..=n).map(|i| 1 + (i % 2)).collect();
        let signal = SwitchingSignal::new(instants, active, 200.0).unwrap();
        let graph = TransitionGraph::new(2, &[(1, 2), (2, 1)]).unwrap();
        let bundle =
            densities_empirical(&signal, &HFunction::Identity, &graph, DEFAULT_TAIL_FRACTION)
                .unwrap();
        assert_eq!(bundle.provenance(), Provenance::EmpiricalTail);
        assert!(bundle.converged());
        assert!(bundle.nu_hat() <= 1.0 + 1e-12);
        assert!(bundle.nu_check() > 0.97, "nu_check {}", bundle.nu_check());
        for j in [1usize, 2] {
            assert!((bundle.eta_hat()[&j] - 0.5).abs() < 0.02);
            assert!((bundle.eta_check()[&j] - 0.5).abs() < 0.02);
        }
        assert!((bundle.rho_hat()[&(1, 2)] - 0.5).abs() < 0.02);
        assert!((bundle.rho_hat()[&(2, 1)] - 0.5).abs() < 0.02);
    }

    #[test]
    fn empirical_zero_entries_for_untouched_parts() {
        // Vertex 3 and edges through it exist in the graph but not the signal.
        let n = 59;
        let instants: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let active: Vec<usize> = (0..=n).map(|i| 1 + (i % 2)).collect();
        let signal = SwitchingSignal::new(instants, active, 60.0).unwrap();
        let graph = TransitionGraph::complete(3).unwrap();
        let bundle = densities_empirical(&signal, &HFunction::Identity, &graph, 0.5).unwrap();
        assert_eq!(bundle.eta_hat()[&3], 0.0);
        assert_eq!(bundle.rho_hat()[&(1, 3)], 0.0);
        assert_eq!(bundle.rho_hat().len(), 6);
    }

    #[test]
    fn empirical_needs_tail_switches() {
        let graph = TransitionGraph::new(2, &[(1, 2), (2, 1)]).unwrap();
        let signal = SwitchingSignal::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1, 2, 1, 2],
            100.0,
        )
        .unwrap();
        assert!(matches!(
            densities_empirical(&signal, &HFunction::Identity, &graph, 0.5),
            Err(Error::InsufficientData(_))
        ));
        assert!(densities_empirical(&signal, &HFunction::Identity, &graph, 1.5).is_err());
        assert!(densities_empirical(&signal, &HFunction::Identity, &graph, 0.0).is_err());

        // A signal that leaves the graph is rejected before estimation.
        let off_graph = SwitchingSignal::new(
            (0..=20).map(|i| i as f64).collect(),
            (0..=20).map(|i| 1 + (i % 3)).collect(),
            40.0,
        )
        .unwrap();
        assert!(matches!(
            densities_empirical(&off_graph, &HFunction::Identity, &graph, 0.5),
            Err(Error::Configuration(_))
        ));
    }
}

//! The certification inequality and its proof-side diagnostics.
//!
//! Certification compares two scalars built from a density bundle: the
//! switching cost (upper switching density times the density-weighted jump
//! factors) against the net decay (decaying systems credited at their lower
//! occupation, growing ones charged at their upper occupation). The
//! inequality is strict with no slack; the margin is reported so callers can
//! apply their own safety factor.
//!
//! The same per-pair data also yields the pointwise exponent `psi(t)` along a
//! concrete signal, which bounds the certificate value of the exact solution
//! at every time, not just asymptotically. `envelope_check` verifies that
//! bound against a simulated trajectory.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::densities::{DensityBundle, Provenance};
use crate::error::{Error, Result};
use crate::family::{uniformity_constant, LyapunovPair, MuTable, StabilityClass};
use crate::signal::{edge_key, SwitchingSignal};
use crate::simulator::{quadratic_form, v_trace, Trajectory};

/// Multiplicative slack allowed when checking the exact envelopes against
/// simulated samples; covers roundoff in the exponential products.
const ENVELOPE_SLACK: f64 = 1.0 + 1e-6;

/// Outcome of evaluating the certification inequality.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`, positive when the inequality holds.
    pub margin: f64,
    pub nu_check_positive: bool,
    pub certified: bool,
    pub provenance: Provenance,
    #[serde(serialize_with = "serialize_edge_map")]
    pub edge_contributions: BTreeMap<(usize, usize), f64>,
    pub system_contributions: BTreeMap<usize, f64>,
}

fn serialize_edge_map<S: Serializer>(
    map: &BTreeMap<(usize, usize), f64>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    let repr: BTreeMap<String, f64> =
        map.iter().map(|(&(k, l), &v)| (edge_key(k, l), v)).collect();
    repr.serialize(serializer)
}

fn lhs_with_contributions(
    bundle: &DensityBundle,
    mu: &MuTable,
) -> Result<(f64, BTreeMap<(usize, usize), f64>)> {
    let mut contributions = BTreeMap::new();
    let mut lhs = 0.0;
    for (&(from, to), &rho) in bundle.rho_hat() {
        let contribution = if rho > 0.0 {
            let factor = mu.get(from, to).ok_or_else(|| {
                Error::Configuration(format!(
                    "no jump factor for weighted edge {from}->{to}"
                ))
            })?;
            if !(factor.is_finite() && factor > 0.0) {
                return Err(Error::Domain(format!(
                    "jump factor {factor} for edge {from}->{to} must be positive"
                )));
            }
            bundle.nu_hat() * rho * factor.ln()
        } else {
            0.0
        };
        contributions.insert((from, to), contribution);
        lhs += contribution;
    }
    Ok((lhs, contributions))
}

fn rhs_with_contributions(
    bundle: &DensityBundle,
    pairs: &[LyapunovPair],
) -> Result<(f64, BTreeMap<usize, f64>)> {
    let by_index: BTreeMap<usize, &LyapunovPair> = pairs.iter().map(|p| (p.index, p)).collect();
    for (j, &v) in bundle.eta_check().iter().chain(bundle.eta_hat()) {
        if v > 0.0 && !by_index.contains_key(j) {
            return Err(Error::Configuration(format!(
                "system {j} carries occupation density but has no certificate pair"
            )));
        }
    }
    let mut contributions = BTreeMap::new();
    let mut rhs = 0.0;
    for pair in pairs {
        // Absent map entries mean zero asymptotic occupation: no decay
        // credit, no growth charge.
        let contribution = match pair.class {
            StabilityClass::AsymptoticallyStable => {
                pair.lambda.abs() * bundle.eta_check().get(&pair.index).copied().unwrap_or(0.0)
            }
            StabilityClass::MarginallyStable => 0.0,
            StabilityClass::Unstable => {
                -pair.lambda.abs() * bundle.eta_hat().get(&pair.index).copied().unwrap_or(0.0)
            }
        };
        contributions.insert(pair.index, contribution);
        rhs += contribution;
    }
    Ok((rhs, contributions))
}

/// The switching-cost side: upper switching density times the
/// density-weighted log jump factors. Shrinking jumps (factor below one)
/// contribute negatively.
pub fn theorem_lhs(bundle: &DensityBundle, mu: &MuTable) -> Result<f64> {
    Ok(lhs_with_contributions(bundle, mu)?.0)
}

/// The net-decay side: decay rates credited at the lower occupation density
/// of each decaying system, growth rates charged at the upper occupation
/// density of each growing one. Marginal systems contribute nothing.
pub fn theorem_rhs(bundle: &DensityBundle, pairs: &[LyapunovPair]) -> Result<f64> {
    Ok(rhs_with_contributions(bundle, pairs)?.0)
}

/// Evaluate the full certificate: strictly positive lower switching density
/// and switching cost strictly below net decay.
pub fn certify(
    bundle: &DensityBundle,
    mu: &MuTable,
    pairs: &[LyapunovPair],
) -> Result<Certificate> {
    let (lhs, edge_contributions) = lhs_with_contributions(bundle, mu)?;
    let (rhs, system_contributions) = rhs_with_contributions(bundle, pairs)?;
    let nu_check_positive = bundle.nu_check() > 0.0;
    let certified = nu_check_positive && lhs < rhs;
    Ok(Certificate {
        lhs,
        rhs,
        margin: rhs - lhs,
        nu_check_positive,
        certified,
        provenance: bundle.provenance(),
        edge_contributions,
        system_contributions,
    })
}

/// Pointwise certificate exponent along a signal, split into its terms.
/// At every sample, `psi = transition_cost + stable_hold + unstable_hold +
/// current_hold`.
#[derive(Debug, Clone, Serialize)]
pub struct PsiTrace {
    pub times: Vec<f64>,
    pub psi: Vec<f64>,
    /// Running sum of log jump factors over executed transitions.
    pub transition_cost: Vec<f64>,
    /// Running decay over completed holds of decaying systems (nonpositive).
    pub stable_hold: Vec<f64>,
    /// Running growth over completed holds of growing systems (nonnegative).
    pub unstable_hold: Vec<f64>,
    /// Contribution of the hold in progress at each sample.
    pub current_hold: Vec<f64>,
}

/// Evaluate the exponent on an ascending time grid in `[0, horizon]`.
///
/// Per completed hold the exponent moves by `-lambda * hold_length` of the
/// held system; per executed transition it jumps by the log jump factor; the
/// hold in progress contributes `-lambda * (t - last_switch)`. Right
/// continuous in `t`, linear between switches.
pub fn psi_trace(
    sig: &SwitchingSignal,
    pairs: &[LyapunovPair],
    mu: &MuTable,
    times: &[f64],
) -> Result<PsiTrace> {
    let horizon = sig.horizon();
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Domain("sample times must be ascending".into()));
        }
    }
    if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
        if !(first >= 0.0 && last <= horizon && first.is_finite() && last.is_finite()) {
            return Err(Error::Domain(format!(
                "sample times must lie in [0, {horizon}]"
            )));
        }
    }
    let lambda_of: BTreeMap<usize, f64> = pairs.iter().map(|p| (p.index, p.lambda)).collect();
    let need_lambda = |idx: usize| -> Result<f64> {
        lambda_of
            .get(&idx)
            .copied()
            .ok_or_else(|| Error::Configuration(format!("no certificate pair for system {idx}")))
    };

    let instants = sig.instants();
    let active = sig.active_indices();
    let mut out = PsiTrace {
        times: times.to_vec(),
        psi: Vec::with_capacity(times.len()),
        transition_cost: Vec::with_capacity(times.len()),
        stable_hold: Vec::with_capacity(times.len()),
        unstable_hold: Vec::with_capacity(times.len()),
        current_hold: Vec::with_capacity(times.len()),
    };
    let mut next_switch = 1usize;
    let mut transition_cost = 0.0;
    let mut stable_hold = 0.0;
    let mut unstable_hold = 0.0;
    for &t in times {
        while next_switch < instants.len() && instants[next_switch] <= t {
            let i = next_switch;
            let (from, to) = (active[i - 1], active[i]);
            let hold = instants[i] - instants[i - 1];
            let lambda = need_lambda(from)?;
            if lambda > 0.0 {
                stable_hold -= lambda * hold;
            } else if lambda < 0.0 {
                unstable_hold -= lambda * hold;
            }
            let factor = mu.get(from, to).ok_or_else(|| {
                Error::Configuration(format!(
                    "executed transition {from}->{to} has no jump factor"
                ))
            })?;
            transition_cost += factor.ln();
            next_switch += 1;
        }
        let last = next_switch - 1;
        let current_hold = -need_lambda(active[last])? * (t - instants[last]);
        out.transition_cost.push(transition_cost);
        out.stable_hold.push(stable_hold);
        out.unstable_hold.push(unstable_hold);
        out.current_hold.push(current_hold);
        out.psi.push(transition_cost + stable_hold + unstable_hold + current_hold);
    }
    Ok(out)
}

/// The exponent at a single time.
pub fn psi(
    sig: &SwitchingSignal,
    pairs: &[LyapunovPair],
    mu: &MuTable,
    t: f64,
) -> Result<f64> {
    Ok(psi_trace(sig, pairs, mu, &[t])?.psi[0])
}

/// Result of checking the certificate and norm envelopes along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub passed: bool,
    pub samples: usize,
    pub v_violations: usize,
    pub norm_violations: usize,
    /// Worst `V(x(t)) / (exp(psi) V(x0))` over samples; at most one plus
    /// roundoff when the certificate machinery is consistent.
    pub worst_v_ratio: f64,
    /// Worst `|x(t)| / (c |x0| exp(psi/2))` over samples.
    pub worst_norm_ratio: f64,
}

fn bound_ratio(value: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        value / bound
    }
}

/// Check `V_active(x(t)) <= exp(psi) V(x0)` and
/// `|x(t)| <= c |x0| exp(psi/2)` at every trajectory sample, with
/// multiplicative slack 1 + 1e-6. The trajectory must come from the given
/// signal (checked by fingerprint) and from the family the pairs certify.
pub fn envelope_check(
    traj: &Trajectory,
    sig: &SwitchingSignal,
    pairs: &[LyapunovPair],
    mu: &MuTable,
) -> Result<EnvelopeReport> {
    if traj.signal_fingerprint() != sig.fingerprint() {
        return Err(Error::Configuration(
            "trajectory was generated from a different signal".into(),
        ));
    }
    if traj.is_empty() {
        return Err(Error::Configuration("empty trajectory".into()));
    }
    let trace = psi_trace(sig, pairs, mu, traj.times())?;
    let v = v_trace(traj, pairs)?;
    let c = uniformity_constant(pairs)?;
    let pair0 = pairs
        .iter()
        .find(|p| p.index == traj.active_indices()[0])
        .expect("v_trace verified coverage");
    let v0 = quadratic_form(&pair0.p, traj.state(0));
    let x0 = traj.norm(0);

    let mut report = EnvelopeReport {
        passed: true,
        samples: traj.len(),
        v_violations: 0,
        norm_violations: 0,
        worst_v_ratio: 0.0,
        worst_norm_ratio: 0.0,
    };
    for s in 0..traj.len() {
        let e_psi = trace.psi[s].exp();
        let v_ratio = bound_ratio(v[s], e_psi * v0);
        let norm_ratio = bound_ratio(traj.norm(s), c * x0 * (trace.psi[s] / 2.0).exp());
        report.worst_v_ratio = report.worst_v_ratio.max(v_ratio);
        report.worst_norm_ratio = report.worst_norm_ratio.max(norm_ratio);
        if v_ratio > ENVELOPE_SLACK {
            report.v_violations += 1;
        }
        if norm_ratio > ENVELOPE_SLACK {
            report.norm_violations += 1;
        }
    }
    report.passed = report.v_violations == 0 && report.norm_violations == 0;
    Ok(report)
}

//! Exact trajectory computation for switched linear flows.
//!
//! Between switches the solution is a matrix exponential applied to the
//! state, so a whole trajectory is a finite product of exponentials; there is
//! no integration error to budget for. Exponentials are cached per
//! `(system, duration)` because periodic and near-periodic signals reuse a
//! handful of them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::family::{LyapunovPair, SystemFamily};
use crate::matops::{expm, RealMatrix};
use crate::signal::SwitchingSignal;

pub const DEFAULT_SAMPLES_PER_HOLD: usize = 8;

/// Shared exponential cache. Bound to one family: reusing it with a
/// different family is rejected instead of silently mixing flows.
pub struct ExpmCache {
    inner: Mutex<CacheInner>,
}

struct CacheInner {
    family_fingerprint: Option<u64>,
    map: HashMap<(usize, u64), Arc<RealMatrix>>,
}

impl ExpmCache {
    pub fn new() -> Self {
        Self { inner: Mutex::new(CacheInner { family_fingerprint: None, map: HashMap::new() }) }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn exponential(
        &self,
        family: &SystemFamily,
        index: usize,
        duration: f64,
    ) -> Result<Arc<RealMatrix>> {
        let fp = family.fingerprint();
        let key = (index, duration.to_bits());
        {
            let mut inner = self.inner.lock().unwrap();
            match inner.family_fingerprint {
                None => inner.family_fingerprint = Some(fp),
                Some(have) if have != fp => {
                    return Err(Error::Configuration(
                        "exponential cache already bound to a different family".into(),
                    ))
                }
                Some(_) => {}
            }
            if let Some(hit) = inner.map.get(&key) {
                return Ok(Arc::clone(hit));
            }
        }
        // Computed outside the lock; a concurrent miss recomputes the same
        // deterministic value, so the double insert is harmless.
        let result = Arc::new(expm(family.matrix(index)?, duration)?);
        let mut inner = self.inner.lock().unwrap();
        Ok(Arc::clone(inner.map.entry(key).or_insert(result)))
    }
}

impl Default for ExpmCache {
    fn default() -> Self {
        Self::new()
    }
}

/// Sampled exact solution of the switched system for one signal and start
/// state. Holds the fingerprints of its generators so downstream checks can
/// refuse mismatched inputs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<f64>,
    active: Vec<usize>,
    dim: usize,
    family_fingerprint: u64,
    signal_fingerprint: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    pub fn state(&self, sample: usize) -> &[f64] {
        &self.states[sample * self.dim..(sample + 1) * self.dim]
    }

    pub fn norm(&self, sample: usize) -> f64 {
        self.state(sample).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn family_fingerprint(&self) -> u64 {
        self.family_fingerprint
    }

    pub fn signal_fingerprint(&self) -> u64 {
        self.signal_fingerprint
    }
}

/// Simulate with a caller-owned cache, for batches over one family.
///
/// Samples cover every hold start, `samples_per_hold` points inside each
/// hold, and the horizon itself.
pub fn simulate_cached(
    family: &SystemFamily,
    sig: &SwitchingSignal,
    x0: &[f64],
    samples_per_hold: usize,
    cache: &ExpmCache,
) -> Result<Trajectory> {
    let d = family.dimension();
    if x0.len() != d {
        return Err(Error::Configuration(format!(
            "start state has dimension {}, family has {d}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Configuration("start state must be finite".into()));
    }
    if samples_per_hold == 0 {
        return Err(Error::Configuration("samples_per_hold must be positive".into()));
    }
    for &idx in sig.active_indices() {
        if idx > family.len() {
            return Err(Error::Configuration(format!(
                "signal uses system {idx}; family has {}",
                family.len()
            )));
        }
    }

    let instants = sig.instants();
    let active = sig.active_indices();
    let horizon = sig.horizon();
    let holds = instants.len();

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut active_out = Vec::new();
    let mut x_cur = x0.to_vec();

    for i in 0..holds {
        let t_start = instants[i];
        let t_end = if i + 1 < holds { instants[i + 1] } else { horizon };
        let idx = active[i];
        let span = t_end - t_start;
        if span > 0.0 {
            for k in 0..samples_per_hold {
                let dt = span * k as f64 / samples_per_hold as f64;
                let x_s = if k == 0 {
                    x_cur.clone()
                } else {
                    cache.exponential(family, idx, dt)?.mul_vec(&x_cur)?
                };
                times.push(t_start + dt);
                states.extend_from_slice(&x_s);
                active_out.push(idx);
            }
            x_cur = cache.exponential(family, idx, span)?.mul_vec(&x_cur)?;
        }
        if i + 1 == holds {
            times.push(horizon);
            states.extend_from_slice(&x_cur);
            active_out.push(idx);
        }
    }

    Ok(Trajectory {
        times,
        states,
        active: active_out,
        dim: d,
        family_fingerprint: family.fingerprint(),
        signal_fingerprint: sig.fingerprint(),
    })
}

/// Simulate with a private cache.
pub fn simulate(
    family: &SystemFamily,
    sig: &SwitchingSignal,
    x0: &[f64],
    samples_per_hold: usize,
) -> Result<Trajectory> {
    simulate_cached(family, sig, x0, samples_per_hold, &ExpmCache::new())
}

/// Certificate value `V_active(x)` at every sample.
pub fn v_trace(traj: &Trajectory, pairs: &[LyapunovPair]) -> Result<Vec<f64>> {
    let by_index: HashMap<usize, &LyapunovPair> = pairs.iter().map(|p| (p.index, p)).collect();
    let mut out = Vec::with_capacity(traj.len());
    for s in 0..traj.len() {
        let idx = traj.active_indices()[s];
        let pair = by_index.get(&idx).ok_or_else(|| {
            Error::Configuration(format!("no certificate pair for active system {idx}"))
        })?;
        if pair.p.rows() != traj.dim() {
            return Err(Error::Configuration(format!(
                "certificate for system {idx} has dimension {}, trajectory has {}",
                pair.p.rows(),
                traj.dim()
            )));
        }
        out.push(quadratic_form(&pair.p, traj.state(s)));
    }
    Ok(out)
}

pub(crate) fn quadratic_form(p: &RealMatrix, x: &[f64]) -> f64 {
    let d = x.len();
    let mut total = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += p.get(i, j) * x[j];
        }
        total += x[i] * row;
    }
    total
}

/// Check the two-sided growth bound `|x0| e^{-Lt} <= |x(t)| <= |x0| e^{Lt}`
/// at every sample, with multiplicative slack 1 + 1e-9.
pub fn lipschitz_envelope_check(traj: &Trajectory, l: f64) -> Result<bool> {
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::Domain(format!("growth constant {l} must be nonnegative")));
    }
    if traj.is_empty() {
        return Ok(true);
    }
    const SLACK: f64 = 1.0 + 1e-9;
    let x0 = traj.norm(0);
    let t0 = traj.times()[0];
    for s in 0..traj.len() {
        let t = traj.times()[s] - t0;
        let n = traj.norm(s);
        if n > x0 * (l * t).exp() * SLACK {
            return Ok(false);
        }
        if n * SLACK < x0 * (-l * t).exp() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Render a trajectory as CSV. The certificate-value column is required; the
/// bound column appears only when diagnostics are supplied.
pub fn trajectory_csv(traj: &Trajectory, v: &[f64], psi_bound: Option<&[f64]>) -> Result<String> {
    if v.len() != traj.len() {
        return Err(Error::Configuration(format!(
            "certificate trace has {} entries for {} samples",
            v.len(),
            traj.len()
        )));
    }
    if let Some(psi) = psi_bound {
        if psi.len() != traj.len() {
            return Err(Error::Configuration(format!(
                "bound trace has {} entries for {} samples",
                psi.len(),
                traj.len()
            )));
        }
    }
    let mut out = String::from("t,sigma");
    for i in 1..=traj.dim() {
        out.push_str(&format!(",x_{i}"));
    }
    out.push_str(",V");
    if psi_bound.is_some() {
        out.push_str(",psi_bound");
    }
    out.push('\n');
    for s in 0..traj.len() {
        out.push_str(&format!("{},{}", traj.times()[s], traj.active_indices()[s]));
        for value in traj.state(s) {
            out.push_str(&format!(",{value}"));
        }
        out.push_str(&format!(",{}", v[s]));
        if let Some(psi) = psi_bound {
            out.push_str(&format!(",{}", psi[s]));
        }
        out.push('\n');
    }
    Ok(out)
}

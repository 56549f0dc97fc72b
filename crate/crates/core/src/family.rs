//! Switched family bookkeeping: per-system stability classification, quadratic
//! certificate synthesis, and the jump factors between certificates.
//!
//! Every subsystem gets a pair `(P_i, lambda_i)`: a positive definite form and
//! a rate such that `V_i(x) = <P_i x, x>` obeys `V_i(x(t)) <= V_i(x(0)) *
//! exp(-lambda_i t)` along its own flow. Stable systems take the rate from a
//! Lyapunov solve, marginal ones run at rate zero, unstable ones fall back to
//! `P = I` with a rate bounded by the spectral norm. Jump factors
//! `mu_(k,l) = max eig(P_l P_k^{-1})` bound the certificate change across a
//! switch from `k` to `l`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{
    self, cholesky, eig_general, eig_sym, solve_lyapunov, spectral_norm, RealMatrix,
};
use crate::signal::TransitionGraph;

/// Default band around the imaginary axis for classification decisions.
pub const DEFAULT_STABILITY_TOL: f64 = 1e-9;

/// Slack allowed when checking `A^T P + P A + lambda P <= 0` for a pair.
const DECAY_CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    AsymptoticallyStable,
    MarginallyStable,
    Unstable,
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityClass::AsymptoticallyStable => write!(f, "asymptotically_stable"),
            StabilityClass::MarginallyStable => write!(f, "marginally_stable"),
            StabilityClass::Unstable => write!(f, "unstable"),
        }
    }
}

/// Classify by spectrum: all eigenvalues left of `-tol` means asymptotically
/// stable; anything right of `+tol` means unstable. Eigenvalues inside the
/// band must be semisimple for marginal stability, otherwise polynomial
/// growth makes the system unstable.
pub fn classify(a: &RealMatrix, tol: f64) -> Result<StabilityClass> {
    if !a.is_square() {
        return Err(Error::Dimension("classification requires a square matrix".into()));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::Domain("classification tolerance must be finite and nonnegative".into()));
    }
    let spectrum = eig_general(a)?;
    let values = spectrum.values();
    if values.iter().any(|v| v.re > tol) {
        return Ok(StabilityClass::Unstable);
    }
    if values.iter().all(|v| v.re < -tol) {
        return Ok(StabilityClass::AsymptoticallyStable);
    }
    // Semisimplicity of the eigenvalues caught inside the band.
    let scale = a.max_abs().max(1.0);
    let cluster_radius = 1e-7 * scale;
    let near_axis: Vec<Complex64> =
        values.iter().copied().filter(|v| v.re.abs() <= tol).collect();
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for v in near_axis {
        match clusters.iter_mut().find(|c| (c[0] - v).norm() <= cluster_radius) {
            Some(c) => c.push(v),
            None => clusters.push(vec![v]),
        }
    }
    let n = a.rows();
    for cluster in &clusters {
        let algebraic = cluster.len();
        if algebraic == 1 {
            continue;
        }
        let center: Complex64 = cluster.iter().sum::<Complex64>() / algebraic as f64;
        let spread = cluster.iter().map(|v| (v - center).norm()).fold(0.0f64, f64::max);
        let mut shifted = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                shifted[i * n + j] = Complex64::new(a.get(i, j), 0.0);
            }
            shifted[i * n + i] -= center;
        }
        let rank_tol = (1e-10 * scale * n as f64).max(2.0 * spread);
        let geometric = n - matops::complex_rank(&shifted, n, rank_tol);
        if geometric < algebraic {
            return Ok(StabilityClass::Unstable);
        }
    }
    Ok(StabilityClass::MarginallyStable)
}

/// A validated switched family: square matrices of one dimension, each full
/// rank, indexed 1-based in declaration order.
#[derive(Debug, Clone)]
pub struct SystemFamily {
    dimension: usize,
    matrices: Vec<RealMatrix>,
    classes: Vec<StabilityClass>,
}

impl SystemFamily {
    pub fn new(matrices: Vec<RealMatrix>) -> Result<Self> {
        Self::with_tol(matrices, DEFAULT_STABILITY_TOL)
    }

    pub fn with_tol(matrices: Vec<RealMatrix>, tol: f64) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::Configuration("a family needs at least one system".into()));
        }
        let dimension = matrices[0].rows();
        for (pos, m) in matrices.iter().enumerate() {
            if !m.is_square() || m.rows() != dimension {
                return Err(Error::Configuration(format!(
                    "system {} must be square of dimension {}",
                    pos + 1,
                    dimension
                )));
            }
            // Hadamard-scaled determinant: invariant under row scaling.
            let mut hadamard = 1.0f64;
            for i in 0..dimension {
                let row_norm: f64 =
                    (0..dimension).map(|j| m.get(i, j) * m.get(i, j)).sum::<f64>().sqrt();
                hadamard *= row_norm;
            }
            let det = matops::determinant(m)?;
            if hadamard == 0.0 || det.abs() <= 1e-12 * hadamard {
                return Err(Error::Configuration(format!("system {} is singular", pos + 1)));
            }
        }
        let classes =
            matrices.iter().map(|m| classify(m, tol)).collect::<Result<Vec<_>>>()?;
        Ok(Self { dimension, matrices, classes })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// 1-based system indices.
    pub fn indices(&self) -> impl Iterator<Item = usize> {
        1..=self.matrices.len()
    }

    pub fn matrix(&self, index: usize) -> Result<&RealMatrix> {
        self.matrices
            .get(index.wrapping_sub(1))
            .ok_or_else(|| Error::Configuration(format!("no system with index {index}")))
    }

    pub fn class(&self, index: usize) -> Result<StabilityClass> {
        self.classes
            .get(index.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Configuration(format!("no system with index {index}")))
    }

    pub fn classes(&self) -> BTreeMap<usize, StabilityClass> {
        self.classes.iter().enumerate().map(|(i, c)| (i + 1, *c)).collect()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = matops::fnv_init();
        for m in &self.matrices {
            h = matops::fnv_u64(h, m.fingerprint());
        }
        h
    }
}

/// Where a certificate matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Synthesized,
    UserSupplied,
}

/// Quadratic certificate for one subsystem: `V(x) = <P x, x>` decays (or is
/// allowed to grow) at rate `lambda` along the subsystem flow. Positive
/// `lambda` means decay, zero no growth, negative bounded growth.
#[derive(Debug, Clone)]
pub struct LyapunovPair {
    pub index: usize,
    pub p: RealMatrix,
    pub lambda: f64,
    /// Certificate matrix fixed during synthesis: the Lyapunov right-hand
    /// side for decaying systems, the negated symmetric-part residual for the
    /// other classes.
    pub q: RealMatrix,
    pub class: StabilityClass,
    pub source: PairSource,
}

impl LyapunovPair {
    pub fn new(
        index: usize,
        p: RealMatrix,
        lambda: f64,
        q: RealMatrix,
        class: StabilityClass,
        source: PairSource,
    ) -> Result<Self> {
        if !p.is_symmetric() {
            return Err(Error::NotSymmetric(format!("certificate matrix for system {index}")));
        }
        cholesky(&p)?;
        if !lambda.is_finite() {
            return Err(Error::Domain(format!("non-finite rate for system {index}")));
        }
        let sign_ok = match class {
            StabilityClass::AsymptoticallyStable => lambda > 0.0,
            StabilityClass::MarginallyStable => lambda == 0.0,
            StabilityClass::Unstable => lambda < 0.0,
        };
        if !sign_ok {
            return Err(Error::Domain(format!(
                "rate {lambda} inconsistent with class {class} for system {index}"
            )));
        }
        Ok(Self { index, p, lambda, q, class, source })
    }

    /// Check `A^T P + P A + lambda P <= 0` up to roundoff slack.
    pub fn verify_decay(&self, a: &RealMatrix) -> Result<()> {
        let m = a
            .transpose()
            .matmul(&self.p)?
            .add(&self.p.matmul(a)?)?
            .add(&self.p.scale(self.lambda))?
            .symmetrized();
        let top = eig_sym(&m)?.max_real_symmetric()?;
        let scale = eig_sym(&self.p)?.max_real_symmetric()?.max(1.0);
        if top > DECAY_CERT_TOL * scale {
            return Err(Error::NumericalFailure(format!(
                "decay certificate violated for system {}: top eigenvalue {top:.3e}",
                self.index
            )));
        }
        Ok(())
    }
}

/// Optional per-system input to synthesis.
#[derive(Debug, Clone, Default)]
pub enum SynthOverride {
    #[default]
    None,
    /// Right-hand side for the Lyapunov solve (decaying systems only).
    Q(RealMatrix),
    /// Explicit certificate matrix (marginal systems only).
    P(RealMatrix),
}

/// Build the certificate pair for one subsystem.
///
/// Decaying systems solve `A^T P + P A + Q = 0` (default `Q = I`) and take
/// `lambda = min_eig(Q) / max_eig(P)`. Marginal systems use the identity when
/// the symmetric part of `A` is negative semidefinite, otherwise they need a
/// user-supplied `P`. Unstable systems always get `P = I` with
/// `lambda = -2 ||A||`.
pub fn synth_pair(
    index: usize,
    a: &RealMatrix,
    class: StabilityClass,
    over: SynthOverride,
) -> Result<LyapunovPair> {
    if !a.is_square() {
        return Err(Error::Dimension("synthesis requires a square matrix".into()));
    }
    let d = a.rows();
    let pair = match class {
        StabilityClass::AsymptoticallyStable => {
            let (q, source) = match over {
                SynthOverride::None => (RealMatrix::identity(d), PairSource::Synthesized),
                SynthOverride::Q(q) => {
                    if q.rows() != d || q.cols() != d {
                        return Err(Error::Dimension(format!(
                            "Q override for system {index} must be {d}x{d}"
                        )));
                    }
                    cholesky(&q).map_err(|e| {
                        Error::Configuration(format!("Q override for system {index}: {e}"))
                    })?;
                    (q, PairSource::UserSupplied)
                }
                SynthOverride::P(_) => {
                    return Err(Error::Configuration(format!(
                        "system {index} decays; supply Q, not P"
                    )))
                }
            };
            let p = solve_lyapunov(a, &q)?;
            cholesky(&p).map_err(|_| {
                Error::SynthesisUnavailable(format!(
                    "Lyapunov solution for system {index} is not positive definite; \
                     the system is not safely inside the stable half-plane"
                ))
            })?;
            let lambda = eig_sym(&q)?.min_real_symmetric()?
                / eig_sym(&p)?.max_real_symmetric()?;
            LyapunovPair::new(index, p, lambda, q, class, source)?
        }
        StabilityClass::MarginallyStable => {
            let sym_tol = 1e-10 * a.max_abs().max(1.0);
            match over {
                SynthOverride::None => {
                    let s = a.transpose().add(a)?.symmetrized();
                    let top = eig_sym(&s)?.max_real_symmetric()?;
                    if top > sym_tol {
                        return Err(Error::SynthesisUnavailable(format!(
                            "system {index} is marginally stable but its symmetric part is \
                             indefinite; supply a certificate matrix P"
                        )));
                    }
                    LyapunovPair::new(
                        index,
                        RealMatrix::identity(d),
                        0.0,
                        s.scale(-1.0),
                        class,
                        PairSource::Synthesized,
                    )?
                }
                SynthOverride::P(p) => {
                    if p.rows() != d || p.cols() != d {
                        return Err(Error::Dimension(format!(
                            "P override for system {index} must be {d}x{d}"
                        )));
                    }
                    let m = a.transpose().matmul(&p)?.add(&p.matmul(a)?)?.symmetrized();
                    let top = eig_sym(&m)?.max_real_symmetric()?;
                    if top > sym_tol {
                        return Err(Error::SynthesisUnavailable(format!(
                            "supplied P for system {index} does not certify marginal \
                             stability (top eigenvalue {top:.3e})"
                        )));
                    }
                    LyapunovPair::new(index, p, 0.0, m.scale(-1.0), class, PairSource::UserSupplied)?
                }
                SynthOverride::Q(_) => {
                    return Err(Error::Configuration(format!(
                        "system {index} is marginally stable; supply P, not Q"
                    )))
                }
            }
        }
        StabilityClass::Unstable => {
            if !matches!(over, SynthOverride::None) {
                return Err(Error::Configuration(format!(
                    "system {index} is unstable; certificates are fixed, no override applies"
                )));
            }
            let norm = spectral_norm(a)?;
            let lambda = -2.0 * norm;
            let q = RealMatrix::identity(d)
                .scale(2.0 * norm)
                .sub(&a.transpose().add(a)?)?
                .symmetrized();
            LyapunovPair::new(index, RealMatrix::identity(d), lambda, q, class, PairSource::Synthesized)?
        }
    };
    pair.verify_decay(a)?;
    Ok(pair)
}

/// Synthesize pairs for a whole family, with optional per-system overrides.
pub fn synth_family(
    family: &SystemFamily,
    overrides: &BTreeMap<usize, SynthOverride>,
) -> Result<Vec<LyapunovPair>> {
    for idx in overrides.keys() {
        family.matrix(*idx)?;
    }
    family
        .indices()
        .map(|i| {
            let over = overrides.get(&i).cloned().unwrap_or_default();
            synth_pair(i, family.matrix(i)?, family.class(i)?, over)
        })
        .collect()
}

/// Tight bound on the certificate jump from system `i` to system `j`:
/// the top eigenvalue of `P_j P_i^{-1}`, computed on the symmetric congruent
/// form `L^{-1} P_j L^{-T}` with `L L^T = P_i`.
pub fn mu_estimate(p_i: &RealMatrix, p_j: &RealMatrix) -> Result<f64> {
    if p_i.rows() != p_j.rows() || p_i.cols() != p_j.cols() {
        return Err(Error::Dimension("jump factor needs matching shapes".into()));
    }
    if !p_j.is_symmetric() {
        return Err(Error::NotSymmetric("jump factor target matrix".into()));
    }
    let l = cholesky(p_i)?;
    let z = matops::solve_lower_triangular(&l, p_j)?;
    let s = matops::solve_lower_triangular(&l, &z.transpose())?.symmetrized();
    eig_sym(&s)?.max_real_symmetric()
}

/// Jump factors for every directed edge of the graph.
#[derive(Debug, Clone, Default)]
pub struct MuTable {
    entries: BTreeMap<(usize, usize), f64>,
}

impl MuTable {
    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        self.entries.get(&(from, to)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn mu_table(pairs: &[LyapunovPair], graph: &TransitionGraph) -> Result<MuTable> {
    let by_index: BTreeMap<usize, &LyapunovPair> =
        pairs.iter().map(|p| (p.index, p)).collect();
    let mut entries = BTreeMap::new();
    for (from, to) in graph.edges() {
        let p_from = by_index
            .get(&from)
            .ok_or_else(|| Error::Configuration(format!("no certificate pair for system {from}")))?;
        let p_to = by_index
            .get(&to)
            .ok_or_else(|| Error::Configuration(format!("no certificate pair for system {to}")))?;
        entries.insert((from, to), mu_estimate(&p_from.p, &p_to.p)?);
    }
    Ok(MuTable { entries })
}

/// Largest spectral norm across the family; a global Lipschitz constant for
/// the switched vector field on the unit ball.
pub fn lipschitz_constant(family: &SystemFamily) -> Result<f64> {
    let mut best = 0.0f64;
    for i in family.indices() {
        best = best.max(spectral_norm(family.matrix(i)?)?);
    }
    Ok(best)
}

/// Norm-equivalence constant tying trajectory norms to certificate values:
/// `sqrt(max_eig(sum P_i) / min_i min_eig(P_i))`.
pub fn uniformity_constant(pairs: &[LyapunovPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Configuration("uniformity constant needs at least one pair".into()));
    }
    let d = pairs[0].p.rows();
    let mut sum = RealMatrix::zeros(d, d);
    let mut min_low = f64::INFINITY;
    for pair in pairs {
        if pair.p.rows() != d {
            return Err(Error::Dimension("pairs have mixed dimensions".into()));
        }
        sum = sum.add(&pair.p)?;
        min_low = min_low.min(eig_sym(&pair.p)?.min_real_symmetric()?);
    }
    let top = eig_sym(&sum.symmetrized())?.max_real_symmetric()?;
    Ok((top / min_low).sqrt())
}

//! Analysis configuration: one JSON file drives every subcommand.
//!
//! The `signal` block names exactly one source of switching behavior. A
//! `profile` gives symbolic statistics and certifies analytically; a
//! `generator` or `csv` source yields a concrete signal whose densities are
//! estimated from its tail; a `bundle` declares the density numbers directly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use swicert_core::densities::{
    densities_empirical, densities_from_profile, DEFAULT_TAIL_FRACTION,
};
use swicert_core::family::SynthOverride;
use swicert_core::siggen::generate;
use swicert_core::signal::parse_edge_key;
use swicert_core::{
    DensityBundle, Error, GeneratorKind, GeneratorSpec, HFunction, HoldDistribution, RealMatrix,
    Result, SignalProfile, SwitchingSignal, SystemFamily, TransitionGraph,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub family: FamilyConfig,
    pub graph: GraphConfig,
    /// Scaling for declared or estimated densities. A profile carries its
    /// own scaling, so for profile sources this is redundant at best.
    #[serde(default)]
    pub h: Option<HFunction>,
    pub signal: SignalConfig,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub tail_fraction: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// Row-major system matrices, one per subsystem, indexed from 1 in the
    /// order given.
    pub matrices: Vec<Vec<Vec<f64>>>,
    /// Per-system synthesis inputs keyed by system index.
    #[serde(default)]
    pub overrides: BTreeMap<String, OverrideConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideConfig {
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub p: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    #[serde(default)]
    pub profile: Option<SignalProfile>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub csv: Option<CsvConfig>,
    #[serde(default)]
    pub bundle: Option<BundleConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratorConfig {
    RoundRobin {
        cycle: Vec<usize>,
        hold: f64,
        horizon: f64,
    },
    RandomWalk {
        hold: HoldConfig,
        seed: u64,
        horizon: f64,
    },
    ProfileTracking {
        profile: SignalProfile,
        #[serde(default = "default_start")]
        start: usize,
        horizon: f64,
    },
}

fn default_start() -> usize {
    1
}

impl GeneratorConfig {
    fn horizon(&self) -> f64 {
        match self {
            GeneratorConfig::RoundRobin { horizon, .. }
            | GeneratorConfig::RandomWalk { horizon, .. }
            | GeneratorConfig::ProfileTracking { horizon, .. } => *horizon,
        }
    }
}

/// Hold-length law for the random walk: `{"fixed": 1.0}` or
/// `{"uniform": [0.5, 1.5]}`.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldConfig {
    Fixed(f64),
    Uniform([f64; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    /// Signal file, resolved relative to the configuration file.
    pub path: String,
    pub horizon: f64,
}

/// Directly declared density numbers. Occupation maps are keyed by system
/// index, transition fractions by `"k->l"` edge keys.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub nu_check: f64,
    pub nu_hat: f64,
    #[serde(default)]
    pub eta_check: BTreeMap<String, f64>,
    #[serde(default)]
    pub eta_hat: BTreeMap<String, f64>,
    #[serde(default)]
    pub rho_hat: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Initial states, one trajectory each.
    pub x0: Vec<Vec<f64>>,
    #[serde(default)]
    pub samples_per_hold: Option<usize>,
    /// Horizon used when a bare profile must be realized as a signal.
    #[serde(default)]
    pub horizon: Option<f64>,
}

/// Parsed configuration plus the directory it came from, which anchors
/// relative signal paths.
pub struct Loaded {
    pub config: AnalysisConfig,
    pub base: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
    let config: AnalysisConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
    let base = match path.parent() {
        Some(dir) if dir != Path::new("") => dir.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let loaded = Loaded { config, base };
    loaded.validate()?;
    Ok(loaded)
}

impl Loaded {
    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let sources = [
            c.signal.profile.is_some(),
            c.signal.generator.is_some(),
            c.signal.csv.is_some(),
            c.signal.bundle.is_some(),
        ];
        let count = sources.iter().filter(|s| **s).count();
        if count != 1 {
            return Err(Error::Configuration(format!(
                "the signal block must hold exactly one of profile, generator, csv, bundle; \
                 found {count}"
            )));
        }
        if c.graph.vertices != c.family.matrices.len() {
            return Err(Error::Configuration(format!(
                "graph has {} vertices for {} systems",
                c.graph.vertices,
                c.family.matrices.len()
            )));
        }
        for (key, over) in &c.family.overrides {
            let index: usize = key.parse().map_err(|_| {
                Error::Configuration(format!("override key {key:?} is not a system index"))
            })?;
            if index == 0 || index > c.family.matrices.len() {
                return Err(Error::Configuration(format!(
                    "override for system {index} is out of range"
                )));
            }
            if over.q.is_some() == over.p.is_some() {
                return Err(Error::Configuration(format!(
                    "override for system {index} must supply exactly one of q, p"
                )));
            }
        }
        if let (Some(h), Some(profile)) = (&c.h, &c.signal.profile) {
            if h != profile.h() {
                return Err(Error::Configuration(
                    "the profile fixes its own scaling; drop the top-level h or make them match"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<SystemFamily> {
        let matrices = self
            .config
            .family
            .matrices
            .iter()
            .map(|rows| RealMatrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        SystemFamily::new(matrices)
    }

    pub fn overrides(&self) -> Result<BTreeMap<usize, SynthOverride>> {
        let mut out = BTreeMap::new();
        for (key, over) in &self.config.family.overrides {
            let index: usize = key
                .parse()
                .map_err(|_| Error::Configuration(format!("override key {key:?}")))?;
            let value = match (&over.q, &over.p) {
                (Some(q), None) => SynthOverride::Q(RealMatrix::from_rows(q)?),
                (None, Some(p)) => SynthOverride::P(RealMatrix::from_rows(p)?),
                _ => {
                    return Err(Error::Configuration(format!(
                        "override for system {index} must supply exactly one of q, p"
                    )))
                }
            };
            out.insert(index, value);
        }
        Ok(out)
    }

    pub fn graph(&self) -> Result<TransitionGraph> {
        TransitionGraph::new(self.config.graph.vertices, &self.config.graph.edges)
    }

    pub fn h(&self) -> HFunction {
        self.config.h.clone().unwrap_or(HFunction::Identity)
    }

    pub fn tail_fraction(&self) -> f64 {
        self.config.tail_fraction.unwrap_or(DEFAULT_TAIL_FRACTION)
    }

    /// Replace the random-walk seed; other sources are deterministic and
    /// ignore the override.
    pub fn apply_seed(&mut self, seed: u64) {
        if let Some(GeneratorConfig::RandomWalk { seed: s, .. }) = &mut self.config.signal.generator
        {
            *s = seed;
        }
    }

    /// Realize the configured signal. Bare profiles are tracked on the graph
    /// over `simulation.horizon`; declared bundles have no signal to realize.
    pub fn concrete_signal(&self) -> Result<SwitchingSignal> {
        let graph = self.graph()?;
        let sig = if let Some(gen) = &self.config.signal.generator {
            let kind = match gen {
                GeneratorConfig::RoundRobin { cycle, hold, .. } => GeneratorKind::RoundRobin {
                    cycle: cycle.clone(),
                    hold: *hold,
                },
                GeneratorConfig::RandomWalk { hold, seed, .. } => GeneratorKind::RandomWalk {
                    graph: graph.clone(),
                    hold: match hold {
                        HoldConfig::Fixed(h) => HoldDistribution::Fixed(*h),
                        HoldConfig::Uniform([min, max]) => HoldDistribution::UniformRange {
                            min: *min,
                            max: *max,
                        },
                    },
                    seed: *seed,
                },
                GeneratorConfig::ProfileTracking { profile, start, .. } => {
                    GeneratorKind::ProfileTracking {
                        profile: profile.clone(),
                        graph: graph.clone(),
                        start: *start,
                    }
                }
            };
            generate(&GeneratorSpec {
                kind,
                horizon: gen.horizon(),
            })?
        } else if let Some(csv) = &self.config.signal.csv {
            let path = self.base.join(&csv.path);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::Configuration(format!("cannot read signal file {}: {e}", path.display()))
            })?;
            SwitchingSignal::from_csv(&text, csv.horizon)?
        } else if let Some(profile) = &self.config.signal.profile {
            let horizon = self
                .config
                .simulation
                .as_ref()
                .and_then(|s| s.horizon)
                .ok_or_else(|| {
                    Error::Configuration(
                        "a profile only fixes statistics; set simulation.horizon to realize it \
                         as a signal"
                            .into(),
                    )
                })?;
            generate(&GeneratorSpec {
                kind: GeneratorKind::ProfileTracking {
                    profile: profile.clone(),
                    graph: graph.clone(),
                    start: 1,
                },
                horizon,
            })?
        } else {
            return Err(Error::Configuration(
                "declared densities do not determine a concrete signal; supply a generator, \
                 a profile, or a signal file"
                    .into(),
            ));
        };
        let report = sig.validate(&graph);
        if !report.ok() {
            return Err(Error::Configuration(format!(
                "signal violates the transition graph: {} off-graph transitions, \
                 {} out-of-range indices",
                report.bad_transitions.len(),
                report.bad_indices.len()
            )));
        }
        Ok(sig)
    }

    /// Density bundle for certification, from whichever source the config
    /// names. Generated and file-based signals are estimated over their tail.
    pub fn bundle(&self) -> Result<DensityBundle> {
        if let Some(profile) = &self.config.signal.profile {
            return densities_from_profile(profile);
        }
        if let Some(b) = &self.config.signal.bundle {
            let mut eta_check = BTreeMap::new();
            for (key, value) in &b.eta_check {
                eta_check.insert(parse_system_key(key)?, *value);
            }
            let mut eta_hat = BTreeMap::new();
            for (key, value) in &b.eta_hat {
                eta_hat.insert(parse_system_key(key)?, *value);
            }
            let mut rho_hat = BTreeMap::new();
            for (key, value) in &b.rho_hat {
                rho_hat.insert(parse_edge_key(key)?, *value);
            }
            return DensityBundle::declared(
                self.h(),
                b.nu_check,
                b.nu_hat,
                eta_check,
                eta_hat,
                rho_hat,
            );
        }
        let sig = self.concrete_signal()?;
        densities_empirical(&sig, &self.h(), &self.graph()?, self.tail_fraction())
    }
}

fn parse_system_key(key: &str) -> Result<usize> {
    key.trim()
        .parse()
        .map_err(|_| Error::Configuration(format!("occupation key {key:?} is not a system index")))
}

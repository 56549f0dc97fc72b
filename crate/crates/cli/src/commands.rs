//! The four subcommands. Each returns the report text for stdout; simulate
//! and generate also write data files.

use std::path::Path;

use serde_json::{json, Map, Value};
use swicert_core::certifier::{certify, envelope_check, psi_trace};
use swicert_core::family::{mu_table, synth_family, uniformity_constant};
use swicert_core::signal::edge_key;
use swicert_core::simulator::{
    simulate_cached, trajectory_csv, v_trace, DEFAULT_SAMPLES_PER_HOLD,
};
use swicert_core::{DensityBundle, Error, ExpmCache, Provenance, Result};

use crate::config::Loaded;
use crate::report::{mu_json, pairs_json, render};

#[derive(Debug, Clone, Copy)]
pub enum Action {
    Synthesize,
    Certify,
    Simulate,
    Generate,
}

pub struct CommandOutput {
    pub stdout: String,
    /// Certificate verdict when the command produces one; `Some(false)`
    /// maps to the not-certified exit code.
    pub certified: Option<bool>,
}

pub fn run(action: Action, loaded: &Loaded, out: Option<&Path>) -> Result<CommandOutput> {
    match action {
        Action::Synthesize => synthesize(loaded, out),
        Action::Certify => do_certify(loaded, out),
        Action::Simulate => simulate(loaded, out),
        Action::Generate => generate_signal(loaded, out),
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Configuration(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| Error::Configuration(format!("cannot write {}: {e}", path.display())))
}

fn emit_report(report: Value, certified: Option<bool>, out: Option<&Path>) -> Result<CommandOutput> {
    let stdout = render(report);
    if let Some(dir) = out {
        write_file(dir, "report.json", &stdout)?;
    }
    Ok(CommandOutput { stdout, certified })
}

fn synthesize(loaded: &Loaded, out: Option<&Path>) -> Result<CommandOutput> {
    let family = loaded.family()?;
    let pairs = synth_family(&family, &loaded.overrides()?)?;
    let graph = loaded.graph()?;
    let mu = mu_table(&pairs, &graph)?;
    let report = json!({
        "command": "synthesize",
        "dimension": family.dimension(),
        "systems": family.len(),
        "pairs": pairs_json(&pairs),
        "mu": mu_json(&mu),
        "uniformity_constant": uniformity_constant(&pairs)?,
    });
    emit_report(report, None, out)
}

fn bundle_json(bundle: &DensityBundle) -> Value {
    let mut eta_check = Map::new();
    for (&j, &v) in bundle.eta_check() {
        eta_check.insert(j.to_string(), v.into());
    }
    let mut eta_hat = Map::new();
    for (&j, &v) in bundle.eta_hat() {
        eta_hat.insert(j.to_string(), v.into());
    }
    let mut rho_hat = Map::new();
    for (&(k, l), &v) in bundle.rho_hat() {
        rho_hat.insert(edge_key(k, l), v.into());
    }
    json!({
        "provenance": serde_json::to_value(bundle.provenance()).expect("provenance serializes"),
        "h": serde_json::to_value(bundle.h()).expect("scaling serializes"),
        "nu_check": bundle.nu_check(),
        "nu_hat": bundle.nu_hat(),
        "eta_check": eta_check,
        "eta_hat": eta_hat,
        "rho_hat": rho_hat,
        "converged": bundle.converged(),
    })
}

fn do_certify(loaded: &Loaded, out: Option<&Path>) -> Result<CommandOutput> {
    let family = loaded.family()?;
    let pairs = synth_family(&family, &loaded.overrides()?)?;
    let graph = loaded.graph()?;
    let mu = mu_table(&pairs, &graph)?;
    let bundle = loaded.bundle()?;
    let cert = certify(&bundle, &mu, &pairs)?;

    let empirical = bundle.provenance() == Provenance::EmpiricalTail;
    let verdict = if !cert.certified {
        "not certified"
    } else if empirical {
        "indicated (empirical densities)"
    } else {
        "certified (analytic densities)"
    };
    let mut warnings: Vec<String> = Vec::new();
    if empirical {
        warnings.push(
            "densities were estimated from a finite horizon; the verdict reflects the observed \
             window, not a proof"
                .into(),
        );
        if !bundle.converged() {
            warnings.push(
                "tail estimates from the two half-windows disagree; extend the horizon before \
                 trusting them"
                    .into(),
            );
        }
    }

    let certified = cert.certified;
    let report = json!({
        "command": "certify",
        "pairs": pairs_json(&pairs),
        "mu": mu_json(&mu),
        "densities": bundle_json(&bundle),
        "certificate": serde_json::to_value(&cert).expect("certificate serializes"),
        "verdict": verdict,
        "warnings": warnings,
    });
    emit_report(report, Some(certified), out)
}

fn simulate(loaded: &Loaded, out: Option<&Path>) -> Result<CommandOutput> {
    let family = loaded.family()?;
    let pairs = synth_family(&family, &loaded.overrides()?)?;
    let graph = loaded.graph()?;
    let mu = mu_table(&pairs, &graph)?;
    let sig = loaded.concrete_signal()?;
    let sim = loaded.config.simulation.as_ref().ok_or_else(|| {
        Error::Configuration("simulate needs a simulation block with initial states".into())
    })?;
    if sim.x0.is_empty() {
        return Err(Error::Configuration(
            "simulation.x0 must list at least one initial state".into(),
        ));
    }
    let spp = sim.samples_per_hold.unwrap_or(DEFAULT_SAMPLES_PER_HOLD);
    let dir = out.unwrap_or_else(|| Path::new("."));

    let cache = ExpmCache::new();
    let mut runs: Vec<Value> = Vec::new();
    for (i, x0) in sim.x0.iter().enumerate() {
        let traj = simulate_cached(&family, &sig, x0, spp, &cache)?;
        let v = v_trace(&traj, &pairs)?;
        let psi = psi_trace(&sig, &pairs, &mu, traj.times())?;
        let name = format!("trajectory_{}.csv", i + 1);
        write_file(dir, &name, &trajectory_csv(&traj, &v, Some(&psi.psi))?)?;
        let envelope = envelope_check(&traj, &sig, &pairs, &mu)?;
        let initial_norm = x0.iter().map(|c| c * c).sum::<f64>().sqrt();
        runs.push(json!({
            "x0": x0,
            "file": name,
            "samples": traj.len(),
            "initial_norm": initial_norm,
            "final_norm": traj.norm(traj.len() - 1),
            "envelope": serde_json::to_value(&envelope).expect("envelope serializes"),
        }));
    }

    let report = json!({
        "command": "simulate",
        "signal": {
            "horizon": sig.horizon(),
            "switches": sig.total_switches(),
        },
        "samples_per_hold": spp,
        "uniformity_constant": uniformity_constant(&pairs)?,
        "runs": runs,
    });
    emit_report(report, None, out)
}

fn generate_signal(loaded: &Loaded, out: Option<&Path>) -> Result<CommandOutput> {
    let sig = loaded.concrete_signal()?;
    let csv = sig.to_csv();
    if let Some(dir) = out {
        write_file(dir, "signal.csv", &csv)?;
    }
    Ok(CommandOutput {
        stdout: csv,
        certified: None,
    })
}

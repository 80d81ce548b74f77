//! One-parameter sweeps over a scenario document, plus the linearization
//! sweep used to spot-check the Hurwitz property over many gain sets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{linearize_equilibrium, LinearizationReport, PeriodicityReport};
use crate::config::parse_config_with;
use crate::control::PotentialSpec;
use crate::error::Result;
use crate::io::{input_hash, write_run};
use crate::parallel::Executor;
use crate::scenarios::{run, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub value: String,
    pub input_hash: String,
    /// Absolute `(rho, alpha1, alpha2)` error to the target at the last
    /// sample, per pair. Empty when the run failed.
    pub final_error: Vec<[f64; 3]>,
    pub descent_passed: bool,
    pub periodicity: Option<PeriodicityReport>,
    pub event_count: usize,
    /// Run directory relative to the sweep directory, when outputs were written.
    pub output: Option<String>,
    pub error: Option<String>,
}

impl SweepRun {
    pub fn certified(&self) -> bool {
        self.error.is_none() && self.descent_passed && self.periodicity.as_ref().is_none_or(|p| p.converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: String,
    pub runs: Vec<SweepRun>,
}

fn run_one(index: usize, value: &str, cfg: &ScenarioConfig, out: Option<&Path>) -> SweepRun {
    let hash = input_hash(cfg, cfg.controller.mode);
    let dir = format!("run-{index:03}");
    let outcome = run(cfg).and_then(|r| {
        if let Some(root) = out {
            write_run(&r, cfg, &root.join(&dir))?;
        }
        Ok(r)
    });
    match outcome {
        Ok(r) => {
            let last = r.times().len() - 1;
            let rho0 = cfg.controller.potential.rho0;
            SweepRun {
                value: value.to_string(),
                input_hash: hash,
                final_error: (0..cfg.n_agents() - 1).map(|p| r.shape_at(last, p).error_to_target(rho0)).collect(),
                descent_passed: r.diagnostics.descent.iter().all(|d| d.passed),
                periodicity: r.diagnostics.periodicity,
                event_count: r.events().len(),
                output: out.map(|_| dir),
                error: None,
            }
        }
        Err(e) => SweepRun {
            value: value.to_string(),
            input_hash: hash,
            final_error: Vec::new(),
            descent_passed: false,
            periodicity: None,
            event_count: 0,
            output: None,
            error: Some(e.to_string()),
        },
    }
}

/// Sets `param` to each of `values` in turn and runs the scenario. Every
/// configuration is parsed and validated before any run starts; run
/// failures are recorded per value. With `out`, each run writes its own
/// `run-NNN` directory below it.
pub fn sweep(text: &str, param: &str, values: &[String], exec: Executor, out: Option<&Path>) -> Result<SweepReport> {
    let configs: Vec<(String, ScenarioConfig)> = values
        .iter()
        .map(|v| parse_config_with(text, &[(param.to_string(), v.clone())]).map(|c| (v.clone(), c)))
        .collect::<Result<_>>()?;
    let indexed: Vec<(usize, &(String, ScenarioConfig))> = configs.iter().enumerate().collect();
    let runs = exec.map(&indexed, |(k, (v, cfg))| run_one(*k, v, cfg, out));
    Ok(SweepReport { param: param.to_string(), runs })
}

/// Gains of the unforced reduced loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationCase {
    pub v1: f64,
    pub mu1: f64,
    pub mu_rho: f64,
    pub rho0: f64,
}

pub fn linearization_sweep(cases: &[LinearizationCase], exec: Executor) -> Vec<Result<LinearizationReport>> {
    exec.map(cases, |c| {
        let spec = PotentialSpec::new(c.mu_rho, c.rho0)?;
        linearize_equilibrium(c.v1, c.mu1, &spec)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_text;
    use crate::error::FormationError;

    #[test]
    fn sweep_over_mu1() {
        let text = preset_text("paper-fig2a").unwrap().replace("t_end = 40.0", "t_end = 4.0");
        let values: Vec<String> = ["0.5", "1", "2"].iter().map(|s| s.to_string()).collect();
        let rep = sweep(&text, "controller.mu1", &values, Executor::default(), None).unwrap();
        assert_eq!(rep.runs.len(), 3);
        assert!(rep.runs.iter().all(|r| r.error.is_none() && r.final_error.len() == 1));
        let seq = sweep(&text, "controller.mu1", &values, Executor::Sequential, None).unwrap();
        assert_eq!(rep, seq);
        assert_ne!(rep.runs[0].input_hash, rep.runs[1].input_hash);
    }

    #[test]
    fn sweep_rejects_bad_values_up_front() {
        let text = preset_text("paper-fig2a").unwrap();
        let values = vec!["1".to_string(), "-1".to_string()];
        assert!(matches!(
            sweep(text, "controller.mu1", &values, Executor::Sequential, None),
            Err(FormationError::Validation { .. })
        ));
    }

    #[test]
    fn sweep_writes_one_directory_per_run() {
        let text = preset_text("paper-fig2b").unwrap().replace("t_end = 40.0", "t_end = 3.0");
        let dir = tempfile::tempdir().unwrap();
        let values = vec!["0.8".to_string(), "1.2".to_string()];
        let rep = sweep(&text, "controller.mu1", &values, Executor::default(), Some(dir.path())).unwrap();
        for (k, r) in rep.runs.iter().enumerate() {
            let sub = format!("run-{k:03}");
            assert_eq!(r.output.as_deref(), Some(sub.as_str()));
            assert!(dir.path().join(&sub).join(crate::io::MANIFEST_FILE).exists());
        }
    }

    #[test]
    fn linearization_cases() {
        let cases = [
            LinearizationCase { v1: 0.5, mu1: 1.0, mu_rho: 2.0, rho0: 0.5 },
            LinearizationCase { v1: 0.5, mu1: 1.0, mu_rho: -2.0, rho0: 0.5 },
        ];
        let out = linearization_sweep(&cases, Executor::Sequential);
        assert!(out[0].as_ref().unwrap().hurwitz);
        assert!(out[1].is_err());
    }
}

//! Trajectory CSV, JSON reports and the run manifest.
//!
//! CSV columns: `t`, then `x_i, y_i, theta_i, v_i, u_i` for each agent, then
//! `rho_ij, alpha1_ij, alpha2_ij` for each consecutive pair. Values carry 17
//! significant digits so a read reproduces the written samples exactly.
//! Angles are written as integrated, without wrapping.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{DescentReport, PairSeries, PeriodicityReport};
use crate::control::Mode;
use crate::dynamics::ControlPair;
use crate::error::{FormationError, Result};
use crate::integrator::{Event, Trajectory};
use crate::scenarios::{RunResult, ScenarioConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const DESCENT_FILE: &str = "descent.json";
pub const EVENTS_FILE: &str = "events.json";
pub const PERIODICITY_FILE: &str = "periodicity.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn csv_err(e: csv::Error) -> FormationError {
    match e.kind() {
        csv::ErrorKind::Io(_) => FormationError::Io(e.to_string()),
        _ => FormationError::Parse(format!("csv: {e}")),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(n_agents: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=n_agents {
        for c in ["x", "y", "theta", "v", "u"] {
            h.push(format!("{c}_{i}"));
        }
    }
    for i in 1..n_agents {
        for c in ["rho", "alpha1", "alpha2"] {
            h.push(format!("{c}_{i}{}", i + 1));
        }
    }
    h
}

pub fn write_trajectory<W: Write>(result: &RunResult, out: W) -> Result<()> {
    let n = result.n_agents();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n)).map_err(csv_err)?;
    for k in 0..result.times().len() {
        let mut row = Vec::with_capacity(8 * n - 1);
        row.push(fmt(result.times()[k]));
        let pose = &result.world_traj.states[k];
        let controls = &result.control_traj()[k];
        for i in 0..n {
            row.extend(pose[3 * i..3 * i + 3].iter().map(|v| fmt(*v)));
            row.push(fmt(controls[i].v));
            row.push(fmt(controls[i].u));
        }
        row.extend(result.shape_traj.states[k].iter().map(|v| fmt(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv(result: &RunResult, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| FormationError::Io(format!("{}: {e}", path.display())))?;
    write_trajectory(result, std::io::BufWriter::new(file))
}

/// A trajectory read back from CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTrajectory {
    pub n_agents: usize,
    /// `(x, y, theta)` per agent, with the per-agent controls.
    pub world: Trajectory,
    /// `(rho, alpha1, alpha2)` per pair, with the per-agent controls.
    pub shape: Trajectory,
}

impl CsvTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.shape.times
    }

    pub fn n_pairs(&self) -> usize {
        self.n_agents.saturating_sub(1)
    }

    pub fn pair_series(&self, pair: usize) -> PairSeries {
        PairSeries::from_trajectory(&self.shape, pair)
    }
}

pub fn read_trajectory<R: std::io::Read>(input: R) -> Result<CsvTrajectory> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    // 1 + 5 n + 3 (n - 1) columns.
    let cols = header.len();
    if cols < 14 || !(cols + 2).is_multiple_of(8) {
        return Err(FormationError::Parse(format!("csv: {cols} columns do not describe a formation trajectory")));
    }
    let n = (cols + 2) / 8;
    if header != trajectory_header(n) {
        return Err(FormationError::Parse("csv: unexpected header".into()));
    }
    let mut out = CsvTrajectory { n_agents: n, ..Default::default() };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| FormationError::Parse(format!("csv: row {}: bad number {s:?}", line + 2)))
            })
            .collect::<Result<_>>()?;
        out.shape.times.push(vals[0]);
        let mut pose = Vec::with_capacity(3 * n);
        let mut controls = Vec::with_capacity(n);
        for i in 0..n {
            let a = &vals[1 + 5 * i..6 + 5 * i];
            pose.extend_from_slice(&a[..3]);
            controls.push(ControlPair::new(a[3], a[4]));
        }
        out.world.states.push(pose);
        out.shape.states.push(vals[1 + 5 * n..].to_vec());
        out.shape.controls.push(controls);
    }
    out.world.times = out.shape.times.clone();
    out.world.controls = out.shape.controls.clone();
    if !out.shape.is_well_formed() {
        return Err(FormationError::Parse("csv: times are not increasing".into()));
    }
    Ok(out)
}

pub fn read_trajectory_csv(path: &Path) -> Result<CsvTrajectory> {
    let file = fs::File::open(path).map_err(|e| FormationError::Io(format!("{}: {e}", path.display())))?;
    read_trajectory(std::io::BufReader::new(file))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormationError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| FormationError::Io(format!("{}: {e}", path.display())))
}

/// Descent report of one pair, labelled with its agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDescent {
    pub leader: usize,
    pub follower: usize,
    #[serde(flatten)]
    pub report: DescentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub name: String,
    pub mode: Mode,
    pub input_hash: String,
    pub config_echo: ScenarioConfig,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
}

/// SHA-256 over the resolved configuration, the mode and the artifact
/// version. Stable for identical inputs; no clock or randomness involved.
pub fn input_hash(cfg: &ScenarioConfig, mode: Mode) -> String {
    let canonical = serde_json::to_string(&(ARTIFACT_VERSION, mode, cfg)).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn descent_records(result: &RunResult) -> Vec<PairDescent> {
    result
        .diagnostics
        .descent
        .iter()
        .enumerate()
        .map(|(p, r)| PairDescent { leader: p + 1, follower: p + 2, report: r.clone() })
        .collect()
}

pub fn event_records(events: &[Event]) -> Vec<EventRecord> {
    events.iter().map(|e| EventRecord { t: e.t, tag: e.tag() }).collect()
}

/// Writes the trajectory, the reports and the manifest into `dir`.
pub fn write_run(result: &RunResult, cfg: &ScenarioConfig, dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| FormationError::Io(format!("{}: {e}", dir.display())))?;
    let mut outputs = Vec::new();
    let mut out = |name: &str| -> PathBuf {
        outputs.push(name.to_string());
        dir.join(name)
    };
    write_trajectory_csv(result, &out(TRAJECTORY_FILE))?;
    write_json(&out(DESCENT_FILE), &descent_records(result))?;
    write_json(&out(EVENTS_FILE), &event_records(result.events()))?;
    if let Some(p) = &result.diagnostics.periodicity {
        write_json::<PeriodicityReport>(&out(PERIODICITY_FILE), p)?;
    }
    outputs.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        name: result.name.clone(),
        mode: result.mode,
        input_hash: input_hash(cfg, result.mode),
        config_echo: cfg.clone(),
        outputs,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

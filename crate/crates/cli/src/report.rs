//! Structured experiment results and their file emission: a JSON summary,
//! fixed-schema CSV tables with full round-trip float precision, and the
//! time-mesh diagrams.

use crate::config::{ExperimentKind, RunConfig};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Full precision: 17 significant digits round-trip any f64.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsRow {
    pub step: usize,
    pub method: String,
    pub outer_iterations: usize,
    pub evaluations: usize,
    pub newton_iterations: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n_macro: usize,
    pub fluid_intervals: usize,
    pub solid_intervals: usize,
    pub theta_f: f64,
    pub theta_s: f64,
    pub vartheta_f: f64,
    pub vartheta_s: f64,
    pub sigma: f64,
    pub j_value: f64,
    pub jref_minus_j: f64,
    pub effectivity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceSummary {
    pub rows: Vec<ConvergenceRow>,
    pub j_reference: f64,
    pub rate: f64,
    pub extrapolation_fell_back: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptiveRow {
    pub step: usize,
    pub n_macro: usize,
    pub fluid_intervals: usize,
    pub solid_intervals: usize,
    pub j_value: f64,
    pub sigma: f64,
    pub sigma_bar: f64,
    pub effectivity: Option<f64>,
    pub marked_fluid: usize,
    pub marked_solid: usize,
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimalSummary {
    pub j_value: f64,
    pub steps: Vec<StatsRow>,
}

/// A rendered mesh diagram plus its line-oriented text form.
#[derive(Debug, Clone)]
pub struct MeshArtifact {
    pub step: usize,
    pub svg: String,
    pub text: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primal: Option<PrimalSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoupler: Option<Vec<StatsRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<Vec<AdaptiveRow>>,
    #[serde(skip)]
    pub meshes: Vec<MeshArtifact>,
}

impl RunReport {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            experiment: cfg.experiment,
            config: cfg.clone(),
            primal: None,
            decoupler: None,
            convergence: None,
            adaptive: None,
            meshes: Vec::new(),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())
}

pub fn decoupler_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from("# heatwave decoupler.csv schema v1\nstep,method,evaluations,final_residual\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.step,
            r.method,
            r.evaluations,
            full(r.final_residual)
        ));
    }
    out
}

pub fn convergence_csv(summary: &ConvergenceSummary) -> String {
    let mut out = String::from(
        "# heatwave convergence.csv schema v1\nN,M,L,theta_f,theta_s,vartheta_f,vartheta_s,sigma,J,Jref_minus_J,eff\n",
    );
    for r in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.n_macro,
            r.fluid_intervals,
            r.solid_intervals,
            full(r.theta_f),
            full(r.theta_s),
            full(r.vartheta_f),
            full(r.vartheta_s),
            full(r.sigma),
            full(r.j_value),
            full(r.jref_minus_j),
            full(r.effectivity),
        ));
    }
    out
}

/// Writes every artifact of the report into `dir` and returns the paths.
pub fn emit_reports(report: &RunReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = serde_json::to_string_pretty(report).expect("serializable report");
    let path = dir.join("report.json");
    write_file(&path, &(json + "\n"))?;
    written.push(path);

    if let Some(rows) = &report.decoupler {
        let path = dir.join("decoupler.csv");
        write_file(&path, &decoupler_csv(rows))?;
        written.push(path);
    }
    if let Some(summary) = &report.convergence {
        let path = dir.join("convergence.csv");
        write_file(&path, &convergence_csv(summary))?;
        written.push(path);
    }
    for mesh in &report.meshes {
        let svg_path = dir.join(format!("mesh_step{}.svg", mesh.step));
        write_file(&svg_path, &mesh.svg)?;
        written.push(svg_path);
        let txt_path = dir.join(format!("mesh_step{}.txt", mesh.step));
        write_file(&txt_path, &mesh.text)?;
        written.push(txt_path);
    }
    Ok(written)
}

//! Report data model and deterministic emission.
//!
//! JSON uses serde_json's shortest round-trip float rendering with fixed field
//! order and fixed array ordering, so identical configurations produce byte-
//! identical files. The CSV bundle carries the plottable artifacts: conjugate
//! points, branch samples and the raw scan grid.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bifurcation::{
    BranchPoint, Certificate, Classification, ScanEvidence, ScanRow, SignVariant,
};
use crate::scenario::RunArtifacts;
use crate::variational::ConjugatePoint;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToleranceInfo {
    pub rtol: f64,
    pub atol: f64,
    pub shoot_tol: f64,
    pub bisection_tol: f64,
    pub rank_rtol: f64,
    pub quadrature_panels_per_two_pi: u32,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EquationSet {
    pub sign_variant: SignVariant,
    pub x: String,
    pub y: String,
    pub z: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyRecord {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BranchRecord {
    pub label: String,
    pub ray: [f64; 2],
    pub points: Vec<BranchPoint>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CertificateRecord {
    pub label: String,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrespondenceSummary {
    pub energy: f64,
    pub max_residual: f64,
    /// One `(t, s)` sample of the reparametrization map, taken mid-interval.
    pub time_map_spot: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConjugateVerdict {
    pub t_star: f64,
    pub multiplicity: usize,
    pub position: [f64; 3],
    pub classification: Classification,
    pub branch_support: usize,
    pub scan: Option<ScanEvidence>,
    pub certificate_positivity: Option<String>,
    /// Fitted constant of `d/dt (y x' - x y') = kappa * integrand` for this
    /// variant's system; certification requires the identity to hold.
    pub certificate_identity_constant: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Verdict {
    pub sign_variant: SignVariant,
    pub items: Vec<ConjugateVerdict>,
}

/// Everything one scenario run reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub scenario: String,
    pub kind: String,
    pub signature: String,
    pub sign_variant: SignVariant,
    pub field_text: String,
    pub tolerances: ToleranceInfo,
    pub equations: Vec<EquationSet>,
    pub energies: Vec<EnergyRecord>,
    pub conjugate_points: Vec<ConjugatePoint>,
    pub mechanical_conjugates: Vec<ConjugatePoint>,
    pub position_cross_check_gap: Option<f64>,
    pub correspondence: Option<CorrespondenceSummary>,
    pub branches: Vec<BranchRecord>,
    pub certificates: Vec<CertificateRecord>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            pos: 0,
            msg: format!("report json: {e}"),
        })
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Emits `report.json` into `out_dir`; returns the written paths.
pub fn emit_json(artifacts: &RunArtifacts, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(vec![write_file(
        out_dir,
        "report.json",
        &artifacts.report.to_json(),
    )?])
}

fn csv_conjugates(points: &[ConjugatePoint]) -> String {
    let mut out = String::from("t_star,multiplicity,pos_x,pos_y,pos_z\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.t_star, p.multiplicity, p.position[0], p.position[1], p.position[2]
        );
    }
    out
}

fn csv_branch(points: &[BranchPoint]) -> String {
    let mut out = String::from("alpha,T_alpha\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.alpha, p.t_alpha);
    }
    out
}

fn csv_scan(rows: &[ScanRow]) -> String {
    let mut out = String::from("lambda,angle,radius,miss_norm\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.lambda, r.angle, r.radius, r.miss_norm);
    }
    out
}

/// Emits the CSV bundle: `conjugates.csv`, one `branch_<ray>.csv` per traced
/// branch, and `scan.csv` for the primary sign variant (plus
/// `scan_<variant>.csv` for any further variants). Headers are always
/// written, even when a table is empty.
pub fn emit_csv_bundle(artifacts: &RunArtifacts, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let report = &artifacts.report;

    written.push(write_file(
        out_dir,
        "conjugates.csv",
        &csv_conjugates(&report.conjugate_points),
    )?);

    for branch in &report.branches {
        written.push(write_file(
            out_dir,
            &format!("branch_{}.csv", branch.label),
            &csv_branch(&branch.points),
        )?);
    }

    match artifacts.scans.as_slice() {
        [] => {
            written.push(write_file(out_dir, "scan.csv", &csv_scan(&[]))?);
        }
        [(_, rows), rest @ ..] => {
            written.push(write_file(out_dir, "scan.csv", &csv_scan(rows))?);
            for (variant, rows) in rest {
                written.push(write_file(
                    out_dir,
                    &format!("scan_{}.csv", variant.name()),
                    &csv_scan(rows),
                )?);
            }
        }
    }
    Ok(written)
}

/// Output format of `emit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Json,
    CsvBundle,
}

pub fn emit(artifacts: &RunArtifacts, format: EmitFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match format {
        EmitFormat::Json => emit_json(artifacts, out_dir),
        EmitFormat::CsvBundle => emit_csv_bundle(artifacts, out_dir),
    }
}

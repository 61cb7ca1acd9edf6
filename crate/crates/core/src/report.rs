//! Machine-readable artifacts: deterministic JSON reports (floats printed
//! with 17 significant digits so identical runs are byte-identical), rung
//! checkpoints, and the documented report schemas.

use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::curvature::{EstimateReport, GBoundaryCheck};
use crate::error::{Error, Result};
use crate::grid::{read_field_csv, write_field_csv, Grid, ScalarField};
use crate::solver::{RungRecord, RungStore};

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize with fixed 17-significant-digit float formatting.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Config(format!("JSON serialize: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::Config(format!("JSON utf8: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    fs::write(path, text)?;
    Ok(())
}

/// Flat JSON document for the estimate report, documented keys.
#[derive(Serialize)]
pub struct EstimateReportDoc {
    pub levels: Vec<f64>,
    #[serde(rename = "minH")]
    pub min_h: Vec<Option<f64>>,
    #[serde(rename = "maxRatio")]
    pub max_ratio: Vec<Option<f64>>,
    #[serde(rename = "regularCounts")]
    pub regular_counts: Vec<usize>,
    pub fit: FitDoc,
    pub rho_thm: f64,
    pub flags: FlagsDoc,
}

#[derive(Serialize)]
pub struct FitDoc {
    #[serde(rename = "H0")]
    pub h0: Option<f64>,
    #[serde(rename = "rhoH")]
    pub rho_h: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "rhoA")]
    pub rho_a: Option<f64>,
}

#[derive(Serialize)]
pub struct FlagsDoc {
    pub lower_bound_pass: bool,
    pub ratio_bound_pass: bool,
    pub inconclusive: bool,
}

impl EstimateReportDoc {
    pub fn from_report(r: &EstimateReport) -> Self {
        Self {
            levels: r.levels.clone(),
            min_h: r.min_h.clone(),
            max_ratio: r.max_ratio.clone(),
            regular_counts: r.regular_counts.clone(),
            fit: FitDoc {
                h0: r.fit_h0,
                rho_h: r.fit_rho_h,
                c: r.fit_c,
                rho_a: r.fit_rho_a,
            },
            rho_thm: r.rho_thm,
            flags: FlagsDoc {
                lower_bound_pass: r.flag_lower_bound,
                ratio_bound_pass: r.flag_ratio_bound,
                inconclusive: r.inconclusive,
            },
        }
    }
}

/// Verification summary written by `verify`, including the G-quantity
/// boundary localization check and the graph/PDE identity deviation.
#[derive(Serialize)]
pub struct VerifyDoc {
    pub estimate: EstimateReportDoc,
    pub graph_form_deviation: f64,
    pub g_check: GCheckDoc,
    pub v_lower_bound_margin: f64,
    pub trace_sup_ladder: Vec<f64>,
    pub trace_inf_ladder: Vec<f64>,
}

#[derive(Serialize)]
pub struct GCheckDoc {
    pub max_interior: f64,
    pub max_boundary_band: f64,
    pub ratio: f64,
}

impl From<GBoundaryCheck> for GCheckDoc {
    fn from(g: GBoundaryCheck) -> Self {
        Self {
            max_interior: g.max_interior,
            max_boundary_band: g.max_boundary_band,
            ratio: g.ratio,
        }
    }
}

/// Per-rung checkpoint metadata.
#[derive(Serialize, serde::Deserialize)]
pub struct RungMeta {
    pub eps: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub kappa_path: Vec<f64>,
    pub monotonicity_violation: f64,
    pub monotonicity_violation_interface: f64,
    pub trace_sup: f64,
    pub trace_inf: f64,
    pub newly_frozen: usize,
    pub node_count: usize,
}

fn rung_stem(eps: f64, sigma: f64) -> String {
    format!("rung_eps{eps:.6e}_sigma{sigma:.6e}")
}

/// Directory-backed checkpoint store: field CSV plus a metadata record per
/// rung, so interrupted sweeps resume where they stopped.
pub struct DirStore {
    dir: PathBuf,
    grid: std::sync::Arc<Grid>,
}

impl DirStore {
    pub fn new(dir: &Path, grid: &std::sync::Arc<Grid>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            grid: grid.clone(),
        })
    }
}

impl RungStore for DirStore {
    fn load(&self, eps: f64, sigma: f64) -> Option<Vec<f64>> {
        let stem = rung_stem(eps, sigma);
        let meta_path = self.dir.join(format!("{stem}.json"));
        let csv_path = self.dir.join(format!("{stem}.csv"));
        let meta: RungMeta = serde_json::from_str(&fs::read_to_string(meta_path).ok()?).ok()?;
        if meta.node_count != self.grid.node_count() {
            return None;
        }
        let file = fs::File::open(csv_path).ok()?;
        let mut reader = std::io::BufReader::new(file);
        let field = read_field_csv(&self.grid, &mut reader).ok()?;
        Some(field.values)
    }

    fn save(&mut self, rec: &RungRecord) -> Result<()> {
        let stem = rung_stem(rec.eps, rec.sigma);
        let csv_path = self.dir.join(format!("{stem}.csv"));
        let mut file = fs::File::create(&csv_path)?;
        write_field_csv(&rec.result.field, &mut file)?;
        let meta = RungMeta {
            eps: rec.eps,
            sigma: rec.sigma,
            kappa: rec.result.params.kappa,
            residual_norm: rec.result.residual_norm,
            newton_iterations: rec.result.newton_iterations,
            kappa_path: rec.result.kappa_path.clone(),
            monotonicity_violation: rec.monotonicity_violation,
            monotonicity_violation_interface: rec.monotonicity_violation_interface,
            trace_sup: rec.trace_sup,
            trace_inf: rec.trace_inf,
            newly_frozen: rec.newly_frozen,
            node_count: rec.grid.node_count(),
        };
        write_json(&self.dir.join(format!("{stem}.json")), &meta)
    }
}

/// Write a field CSV to a path.
pub fn save_field_csv(path: &Path, field: &ScalarField) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write_field_csv(field, &mut file)
}

/// Oracle table CSV: coordinate, u, H.
pub fn save_oracle_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "coordinate,u,H")?;
    for (r, u, h) in rows {
        writeln!(file, "{r:.16e},{u:.16e},{h:.16e}")?;
    }
    Ok(())
}

/// Level-sample CSV: t, point coordinates, |Du|, H, |A|.
pub fn save_levels_csv(
    path: &Path,
    dim: usize,
    samples: &[crate::curvature::LevelSetSample],
) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let coords: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(file, "t,{},grad_norm,H,A", coords.join(","))?;
    for s in samples {
        for p in &s.points {
            let pos: Vec<String> = (0..dim).map(|i| format!("{:.16e}", p.position[i])).collect();
            writeln!(
                file,
                "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                s.t,
                pos.join(","),
                p.grad_norm,
                p.h_level,
                p.a_level
            )?;
        }
    }
    Ok(())
}

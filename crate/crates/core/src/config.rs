//! Run configuration: a structured key-value (TOML) file with strict
//! validation. Unknown keys are rejected and all defaults are materialized
//! into an effective config that reproduces the run when re-ingested.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainShape, Grid};
use crate::metric::{ConformalFactor, MetricChart, Profile, MAX_DIM};
use crate::solver::{NewtonOptions, Schedule};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    /// euclidean | conformal | surface_of_revolution | axisymmetric
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// named conformal factor (only "poincare" is built in)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<String>,
    /// named revolution profile (only "cosh" is built in)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// ball | band | ellipse | dumbbell
    pub shape: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<Vec<f64>>,
    /// dumbbell profile x₁² ≤ (1−x₀²)(c + d x₀²)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neck_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neck_d: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_per_axis: Option<Vec<f64>>,
    #[serde(default = "default_padding")]
    pub padding: usize,
}

fn default_padding() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kappa_step: f64,
    pub kappa_step_min: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub sigma_ratio: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub eps_ratio: f64,
    pub newton_max_iter: usize,
    pub newton_tol: f64,
    pub lin_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_cut: Option<f64>,
    pub eps_over_h_warn: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = Schedule::default();
        Self {
            kappa_step: s.kappa_step_init,
            kappa_step_min: s.kappa_step_min,
            sigma0: s.sigma0,
            sigma_min: s.sigma_min,
            sigma_ratio: s.sigma_ratio,
            eps0: s.eps0,
            eps_min: s.eps_min,
            eps_ratio: s.eps_ratio,
            newton_max_iter: s.newton.max_iter,
            newton_tol: s.newton.tol_abs,
            lin_tol: s.newton.lin_tol,
            u_cut: None,
            eps_over_h_warn: s.eps_over_h_warn,
        }
    }
}

/// Either a level count or an explicit level list.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Levels {
    Count(usize),
    List(Vec<f64>),
}

impl Default for Levels {
    fn default() -> Self {
        Levels::Count(24)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureConfig {
    /// weight exponent ρ; default rho_thm from the chart curvature bound
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// shift Λ in G; default 3·rho_thm
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// regular-point threshold γ; default ε_min
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub levels: Levels,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// fixed (ε, σ) for the `solve` command; defaults to (eps0, sigma0)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    /// grid spacings of the refinement study
    pub h_ladder: Vec<f64>,
    /// EOC acceptance window
    pub eoc_min: f64,
    pub eoc_max: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            h_ladder: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            eoc_min: 0.8,
            eoc_max: 2.2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub chart: ChartConfig,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub curvature: CurvatureConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.chart()?;
        self.shape()?;
        if !(self.grid.h > 0.0) {
            return Err(Error::Config("grid.h must be positive".into()));
        }
        self.schedule().validate()?;
        if let Some(s) = self.solve.sigma {
            if s <= 0.0 {
                return Err(Error::Config(
                    "solve.sigma must be positive: the sup bound kappa/(sigma*eps) is infinite at sigma = 0".into(),
                ));
            }
        }
        if let Some(e) = self.solve.eps {
            if e <= 0.0 {
                return Err(Error::Config("solve.eps must be positive".into()));
            }
        }
        if let Levels::List(l) = &self.curvature.levels {
            if l.is_empty() {
                return Err(Error::Config("curvature.levels list is empty".into()));
            }
        }
        Ok(())
    }

    pub fn chart(&self) -> Result<MetricChart> {
        match self.chart.kind.as_str() {
            "euclidean" => {
                let dim = self.chart.dim.unwrap_or(2);
                if dim < 1 || dim > MAX_DIM {
                    return Err(Error::Config(format!("chart.dim {dim} out of range 1..=3")));
                }
                Ok(MetricChart::euclidean(dim))
            }
            "conformal" => {
                let dim = self.chart.dim.unwrap_or(2);
                if dim < 1 || dim > MAX_DIM {
                    return Err(Error::Config(format!("chart.dim {dim} out of range 1..=3")));
                }
                let name = self.chart.factor.as_deref().unwrap_or("poincare");
                let factor = match name {
                    "poincare" => ConformalFactor::poincare(),
                    other => {
                        return Err(Error::Config(format!("unknown conformal factor '{other}'")))
                    }
                };
                Ok(MetricChart::conformal(dim, factor))
            }
            "surface_of_revolution" => {
                let name = self.chart.profile.as_deref().unwrap_or("cosh");
                let profile = match name {
                    "cosh" => Profile::cosh(),
                    other => {
                        return Err(Error::Config(format!(
                            "unknown revolution profile '{other}'"
                        )))
                    }
                };
                Ok(MetricChart::surface_of_revolution(profile))
            }
            "axisymmetric" => Ok(MetricChart::axisymmetric()),
            other => Err(Error::Config(format!("unknown chart kind '{other}'"))),
        }
    }

    pub fn shape(&self) -> Result<DomainShape> {
        match self.domain.shape.as_str() {
            "ball" => {
                let r = self
                    .domain
                    .radius
                    .ok_or_else(|| Error::Config("ball shape needs domain.radius".into()))?;
                if r <= 0.0 {
                    return Err(Error::Config("domain.radius must be positive".into()));
                }
                Ok(DomainShape::Ball { radius: r })
            }
            "band" => {
                let a = self
                    .domain
                    .half_width
                    .ok_or_else(|| Error::Config("band shape needs domain.half_width".into()))?;
                if a <= 0.0 {
                    return Err(Error::Config("domain.half_width must be positive".into()));
                }
                Ok(DomainShape::Band { half_width: a })
            }
            "ellipse" => {
                let axes = self
                    .domain
                    .semi_axes
                    .as_ref()
                    .ok_or_else(|| Error::Config("ellipse shape needs domain.semi_axes".into()))?;
                let mut semi = [1.0; MAX_DIM];
                for (i, &a) in axes.iter().enumerate() {
                    if a <= 0.0 || i >= MAX_DIM {
                        return Err(Error::Config("bad domain.semi_axes".into()));
                    }
                    semi[i] = a;
                }
                Ok(DomainShape::Ellipse { semi_axes: semi })
            }
            "dumbbell" => {
                let c = self.domain.neck_c.unwrap_or(0.09);
                let d = self.domain.neck_d.unwrap_or(0.8);
                if c <= 0.0 || d < 0.0 {
                    return Err(Error::Config("dumbbell needs neck_c > 0, neck_d >= 0".into()));
                }
                Ok(DomainShape::Dumbbell { c, d })
            }
            other => Err(Error::Config(format!("unknown domain shape '{other}'"))),
        }
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        let chart = self.chart()?;
        let shape = self.shape()?;
        let hs: Vec<f64> = match &self.grid.h_per_axis {
            Some(v) => v.clone(),
            None => vec![self.grid.h],
        };
        Grid::build(chart, shape, &hs, self.grid.padding)
    }

    pub fn schedule(&self) -> Schedule {
        let s = &self.schedule;
        Schedule {
            kappa_step_init: s.kappa_step,
            kappa_step_min: s.kappa_step_min,
            sigma0: s.sigma0,
            sigma_min: s.sigma_min,
            sigma_ratio: s.sigma_ratio,
            eps0: s.eps0,
            eps_min: s.eps_min,
            eps_ratio: s.eps_ratio,
            newton: NewtonOptions {
                max_iter: s.newton_max_iter,
                tol_abs: s.newton_tol,
                min_step: 2.0f64.powi(-20),
                lin_tol: s.lin_tol,
            },
            u_cut: s.u_cut,
            eps_over_h_warn: s.eps_over_h_warn,
        }
    }

    /// Levels for curvature statistics given the max attained value.
    pub fn level_values(&self, t_max: f64) -> Vec<f64> {
        match &self.curvature.levels {
            Levels::List(l) => l.clone(),
            Levels::Count(n) => {
                let n = (*n).max(1);
                (0..n)
                    .map(|k| t_max * (k as f64 + 1.0) / (n as f64 + 1.0))
                    .collect()
            }
        }
    }
}

//! Strict JSON run configuration. Unknown keys are rejected at every level
//! so a typo in an experiment definition fails loudly instead of silently
//! falling back to a default.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use graphflow_core::grid::{make_grid_with_cap, DEFAULT_NODE_CAP};
use graphflow_core::scenarios::{make_scenario, Scenario, ScenarioParams};
use graphflow_core::{BoundaryMode, DomainGrid, GraphField, MaskShape};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec_version: String,
    #[serde(default)]
    pub scenario: Option<ScenarioCfg>,
    #[serde(default)]
    pub psi_snapshot: Option<String>,
    pub grid: GridCfg,
    #[serde(default)]
    pub flow: Option<FlowCfg>,
    #[serde(default)]
    pub picard: Option<PicardCfg>,
    #[serde(default)]
    pub verify: Option<VerifyCfg>,
    #[serde(default)]
    pub analysis: Option<AnalysisCfg>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioCfg {
    pub name: String,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ResolutionCfg {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub resolution: ResolutionCfg,
    /// Per-axis [lo, hi]; defaults to the scenario's natural box.
    #[serde(default, rename = "box")]
    pub boxes: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub mask: Option<MaskCfg>,
    /// "dirichlet" | "periodic"; defaults to the scenario's mode.
    #[serde(default)]
    pub boundary_mode: Option<String>,
    #[serde(default)]
    pub node_cap: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskCfg {
    /// "ball" | "annulus"
    pub shape: String,
    pub center: Vec<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub r_inner: Option<f64>,
    #[serde(default)]
    pub r_outer: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCfg {
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_slack")]
    pub slack_constant: f64,
    /// Multiplies the sampled initial data (the Rψ exploration knob).
    #[serde(default = "default_data_scale")]
    pub data_scale: f64,
}

fn default_safety() -> f64 {
    0.9
}
fn default_t_max() -> f64 {
    1.0
}
fn default_residual_tol() -> f64 {
    1e-10
}
fn default_record_every() -> usize {
    10
}
fn default_slack() -> f64 {
    10.0
}
fn default_data_scale() -> f64 {
    1.0
}

impl Default for FlowCfg {
    fn default() -> Self {
        FlowCfg {
            safety: default_safety(),
            t_max: default_t_max(),
            residual_tol: default_residual_tol(),
            record_every: default_record_every(),
            slack_constant: default_slack(),
            data_scale: default_data_scale(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardCfg {
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
}

fn default_outer_tol() -> f64 {
    1e-10
}
fn default_max_outer() -> usize {
    60
}
fn default_inner_tol() -> f64 {
    1e-11
}
fn default_max_inner() -> usize {
    100_000
}

impl Default for PicardCfg {
    fn default() -> Self {
        PicardCfg {
            outer_tol: default_outer_tol(),
            max_outer: default_max_outer(),
            inner_tol: default_inner_tol(),
            max_inner: default_max_inner(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCfg {
    #[serde(default)]
    pub resolutions: Option<Vec<usize>>,
    /// "nondiv_inf" | "nondiv_l2" | "div_inf" | "div_l2"
    #[serde(default)]
    pub residual: Option<String>,
    #[serde(default)]
    pub min_order: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisCfg {
    #[serde(default)]
    pub density: Option<DensityCfg>,
    #[serde(default)]
    pub rescale: Option<RescaleCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityCfg {
    /// Point in ℝ^{n+m}.
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleCfg {
    pub x0: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// u(x0); interpolated from the field when omitted.
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
    pub target: TargetGridCfg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetGridCfg {
    pub resolution: ResolutionCfg,
    #[serde(rename = "box")]
    pub boxes: Vec<[f64; 2]>,
    #[serde(default)]
    pub mask: Option<MaskCfg>,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))?;
    if cfg.spec_version != "1" {
        bail!("unsupported spec_version '{}' (expected \"1\")", cfg.spec_version);
    }
    Ok(cfg)
}

pub fn mask_from_cfg(cfg: &MaskCfg) -> Result<MaskShape> {
    match cfg.shape.as_str() {
        "ball" => Ok(MaskShape::Ball {
            center: cfg.center.clone(),
            radius: cfg.radius.context("ball mask needs 'radius'")?,
        }),
        "annulus" => Ok(MaskShape::Annulus {
            center: cfg.center.clone(),
            r_inner: cfg.r_inner.context("annulus mask needs 'r_inner'")?,
            r_outer: cfg.r_outer.context("annulus mask needs 'r_outer'")?,
        }),
        other => bail!("unknown mask shape '{other}'"),
    }
}

fn mode_from_str(s: &str) -> Result<BoundaryMode> {
    match s {
        "dirichlet" => Ok(BoundaryMode::Dirichlet),
        "periodic" => Ok(BoundaryMode::Periodic),
        other => bail!("unknown boundary mode '{other}'"),
    }
}

fn resolve_resolution(r: &ResolutionCfg, n: usize) -> Result<Vec<usize>> {
    match r {
        ResolutionCfg::Uniform(k) => Ok(vec![*k; n]),
        ResolutionCfg::PerAxis(v) => {
            if v.len() != n {
                bail!("resolution has {} axes, grid needs {}", v.len(), n);
            }
            Ok(v.clone())
        }
    }
}

impl RunConfig {
    pub fn scenario_params(&self, seed_override: Option<u64>) -> ScenarioParams {
        let mut p = ScenarioParams::default();
        if let Some(s) = &self.scenario {
            if let Some(a) = s.amplitude {
                p.amplitude = Some(a);
            }
            if let Some(sc) = s.scale {
                p.scale = Some(sc);
            }
            if let Some(e) = s.eps {
                p.eps = e;
            }
        }
        if let Some(seed) = seed_override.or(self.seed) {
            p.seed = seed;
        }
        p
    }

    pub fn make_scenario(&self, seed_override: Option<u64>) -> Result<Option<Scenario>> {
        match &self.scenario {
            None => Ok(None),
            Some(s) => {
                let params = self.scenario_params(seed_override);
                Ok(Some(make_scenario(&s.name, &params)?))
            }
        }
    }

    /// Builds the grid, preferring explicit grid entries over scenario
    /// defaults.
    pub fn build_grid(&self, scenario: Option<&Scenario>) -> Result<Arc<DomainGrid>> {
        let (n, def_boxes, def_mask, def_mode) = match scenario {
            Some(s) => (
                s.n,
                Some(s.boxes.clone()),
                s.mask.clone(),
                Some(s.boundary_mode),
            ),
            None => {
                let b = self
                    .grid
                    .boxes
                    .as_ref()
                    .context("grid.box required when no scenario is given")?;
                (b.len(), None, None, None)
            }
        };
        let boxes: Vec<(f64, f64)> = match &self.grid.boxes {
            Some(b) => {
                if b.len() != n {
                    bail!("grid.box has {} axes, expected {}", b.len(), n);
                }
                b.iter().map(|p| (p[0], p[1])).collect()
            }
            None => def_boxes
                .context("grid.box required")?
                .iter()
                .map(|p| (p.0, p.1))
                .collect(),
        };
        let mask = match &self.grid.mask {
            Some(m) => Some(mask_from_cfg(m)?),
            None => def_mask,
        };
        let mode = match &self.grid.boundary_mode {
            Some(s) => mode_from_str(s)?,
            None => def_mode.unwrap_or(BoundaryMode::Dirichlet),
        };
        let res = resolve_resolution(&self.grid.resolution, n)?;
        let cap = self.grid.node_cap.unwrap_or(DEFAULT_NODE_CAP);
        Ok(make_grid_with_cap(n, &boxes, &res, mask, mode, cap)?)
    }

    /// Builds the initial/boundary data field from the scenario or an
    /// external ψ snapshot.
    pub fn build_field(
        &self,
        scenario: Option<&Scenario>,
        grid: &Arc<DomainGrid>,
    ) -> Result<GraphField> {
        let mut field = match (scenario, &self.psi_snapshot) {
            (Some(s), None) => s.sample(grid)?,
            (None, Some(path)) => {
                let file = std::fs::File::open(path)
                    .with_context(|| format!("cannot open snapshot {path}"))?;
                let mut rd = std::io::BufReader::new(file);
                GraphField::read_snapshot(grid, &mut rd)?
            }
            (Some(_), Some(_)) => bail!("give either a scenario or a psi_snapshot, not both"),
            (None, None) => bail!("need a scenario or a psi_snapshot"),
        };
        let scale = self.flow.as_ref().map(|f| f.data_scale).unwrap_or(1.0);
        if scale != 1.0 {
            for v in field.values_mut() {
                *v *= scale;
            }
            field.refresh_boundary_data();
        }
        Ok(field)
    }
}

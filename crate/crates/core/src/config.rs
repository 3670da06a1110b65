//! Scenario configuration: TOML or JSON documents with dotted overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::Oscillator;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::pe::PEWindow;
use crate::rkhs::JitterPolicy;

/// Which nonlinearity drives the simulated plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// Quintic oscillator.
    Oscillator,
    /// Oscillator linear part with the nonlinearity replaced by its
    /// projection onto the centers, so the truth lies in the span.
    SpanProjection,
    /// Oscillator linear part only.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub kind: PlantKind,
    pub m: f64,
    pub k: f64,
    pub kn1: f64,
    pub kn2: f64,
    pub x0: Vec<f64>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let o = Oscillator::default();
        PlantConfig { kind: PlantKind::Oscillator, m: o.m, k: o.k, kn1: o.kn1, kn2: o.kn2, x0: vec![1.5, 0.0] }
    }
}

impl PlantConfig {
    pub fn oscillator(&self) -> Oscillator {
        Oscillator { m: self.m, k: self.k, kn1: self.kn1, kn2: self.kn2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterStrategy {
    LimitCycle,
    Explicit,
    UniformGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CentersConfig {
    pub center_strategy: CenterStrategy,
    pub n_centers: usize,
    /// Transient discarded before the cycle is recorded.
    pub burn_in: f64,
    /// Integration step for the cycle search.
    pub cycle_step: f64,
    /// Longest time searched for a return to the section.
    pub cycle_horizon: f64,
    /// Points for the explicit strategy.
    pub points: Vec<Vec<f64>>,
    /// Box corners and per-axis counts for the uniform grid strategy.
    pub grid_lower: Vec<f64>,
    pub grid_upper: Vec<f64>,
    pub grid_counts: Vec<usize>,
}

impl Default for CentersConfig {
    fn default() -> Self {
        CentersConfig {
            center_strategy: CenterStrategy::LimitCycle,
            n_centers: 120,
            burn_in: 0.0,
            cycle_step: 1e-3,
            cycle_horizon: 50.0,
            points: Vec::new(),
            grid_lower: Vec::new(),
            grid_upper: Vec::new(),
            grid_counts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GramianConfig {
    pub jitter: JitterPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub mu: f64,
    /// Output-injection damping `c`.
    pub damping: f64,
    pub q: Vec<Vec<f64>>,
    /// Initial estimator state; the plant's `x0` when absent.
    pub x_hat0: Option<Vec<f64>>,
    /// Initial coefficients; zero when absent.
    pub a0: Option<Vec<f64>>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { mu: 1.0, damping: 0.5, q: vec![vec![1.0, 0.0], vec![0.0, 1.0]], x_hat0: None, a0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConfig {
    pub horizon: f64,
    pub h: f64,
    pub record_every: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { horizon: 200.0, h: 1e-3, record_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// One-based coefficient indices written to `coeffs.csv`.
    pub traced: Vec<usize>,
    /// Points per axis of the error surface.
    pub surface_points: usize,
    /// Relative enlargement of the cycle's bounding box.
    pub surface_inflation: f64,
    /// Minimum distance from the cycle for the off-cycle statistics.
    pub annulus_distance: f64,
    /// Points on the cycle for the on-cycle statistics.
    pub cycle_samples: usize,
    /// Sampled directions for the gradient probe; 0 disables it.
    pub probe_directions: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            traced: vec![1, 30, 60, 90],
            surface_points: 101,
            surface_inflation: 0.5,
            annulus_distance: 0.5,
            cycle_samples: 1000,
            probe_directions: 64,
        }
    }
}

fn default_kernel() -> KernelSpec {
    KernelSpec { order_r: 3.0, dim_d: 2, length_scale: 1.0, variance: 1.0 }
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub centers: CentersConfig,
    #[serde(default)]
    pub gramian: GramianConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub ode: OdeConfig,
    #[serde(default)]
    pub pe: PEWindow,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            plant: PlantConfig::default(),
            kernel: default_kernel(),
            centers: CentersConfig::default(),
            gramian: GramianConfig::default(),
            estimator: EstimatorConfig::default(),
            ode: OdeConfig::default(),
            pe: PEWindow::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Reads a TOML or JSON document (chosen by extension, `.json` for JSON)
    /// and applies `KEY=VALUE` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let tree = parse_tree(&text, is_json).map_err(|m| Error::Config(format!("{}: {m}", path.display())))?;
        Self::from_tree(tree, overrides)
    }

    /// Parses a document held in memory.
    pub fn parse(text: &str, json: bool, overrides: &[String]) -> Result<Self> {
        Self::from_tree(parse_tree(text, json).map_err(Error::Config)?, overrides)
    }

    /// Defaults with overrides applied.
    pub fn from_overrides(overrides: &[String]) -> Result<Self> {
        Self::from_tree(Value::Object(Default::default()), overrides)
    }

    fn from_tree(user: Value, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(ScenarioConfig::default()).expect("defaults are serializable");
        merge(&mut tree, user);
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: ScenarioConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.kernel.validate()?;
        self.pe.validate()?;
        let d = self.kernel.dim_d;
        if d != 2 {
            return bad("the oscillator scenarios are planar: kernel.dim_d must be 2");
        }
        if self.plant.x0.len() != d {
            return bad("plant.x0 must have kernel.dim_d entries");
        }
        if !(self.plant.m > 0.0 && self.plant.m.is_finite()) {
            return bad("plant.m must be positive");
        }
        if let Some(xh) = &self.estimator.x_hat0 {
            if xh.len() != d {
                return bad("estimator.x_hat0 must have kernel.dim_d entries");
            }
        }
        if self.estimator.q.len() != d || self.estimator.q.iter().any(|r| r.len() != d) {
            return bad("estimator.q must be a dim_d x dim_d matrix");
        }
        if self.centers.n_centers == 0 {
            return bad("centers.n_centers must be at least 1");
        }
        if !(self.ode.h > 0.0 && self.ode.horizon > 0.0) {
            return bad("ode.h and ode.horizon must be positive");
        }
        if self.ode.record_every == 0 {
            return bad("ode.record_every must be at least 1");
        }
        if self.pe.t0 + self.pe.window > self.ode.horizon {
            return bad("pe.t0 + pe.window exceeds ode.horizon");
        }
        if self.output.surface_points < 2 || self.output.cycle_samples < 2 {
            return bad("output.surface_points and output.cycle_samples must be at least 2");
        }
        if self.output.traced.contains(&0) {
            return bad("output.traced indices are one-based");
        }
        Ok(())
    }

    /// Resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_tree(text: &str, json: bool) -> std::result::Result<Value, String> {
    if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back to
/// a bare string.
fn parse_scalar(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => w.v,
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies one `a.b.c=value` override to a configuration tree.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| Error::Config(format!("override '{assignment}' is not KEY=VALUE")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let mut node = tree;
    for p in &parts[..parts.len() - 1] {
        let obj =
            node.as_object_mut().ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
        node = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("override '{key}' does not address a table entry")))?;
    obj.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}

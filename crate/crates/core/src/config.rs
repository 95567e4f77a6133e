//! Run configuration: one JSON document, every field defaulted, unknown keys
//! rejected, with dotted-path overrides applied before validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{AdmissibleSet, FaultGeometry};
use crate::green::ElasticModel;
use crate::posterior::CPrior;
use crate::quadrature::{Rect, StationMode};
use crate::sampler::SamplerConfig;
use crate::synth::SynthScenario;
use crate::tikhonov::SigmaRule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub fault_rect: Rect,
    pub window: Rect,
    pub depth_margin: f64,
    pub elastic: ElasticModel,
    /// Slip direction used when the plane is horizontal.
    pub slip_fallback: Option<[f64; 3]>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let adm = AdmissibleSet::default();
        Self {
            fault_rect: adm.fault_rect,
            window: adm.window,
            depth_margin: adm.depth_margin,
            elastic: ElasticModel::default(),
            slip_fallback: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub p: usize,
    /// Fault rule order per axis; `null` picks the default for `p`.
    pub fault_order: Option<usize>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            p: 21,
            fault_order: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationConfig {
    pub mode: StationMode,
    pub n_per_axis: usize,
    /// CSV with `x1,x2` columns for fixed stations, relative to the config file.
    pub layout: Option<PathBuf>,
    /// Treat a violated weight bound as an error rather than a warning.
    pub strict_weights: bool,
}

impl Default for StationConfig {
    fn default() -> Self {
        Self {
            mode: StationMode::GaussTensor,
            n_per_axis: 5,
            layout: None,
            strict_weights: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub a_range: [f64; 2],
    pub b_range: [f64; 2],
    pub d_range: [f64; 2],
    pub log10_c_range: [f64; 2],
    pub c_prior: CPrior,
    pub sigma_rule: SigmaRule,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let adm = AdmissibleSet::default();
        Self {
            a_range: adm.a_range,
            b_range: adm.b_range,
            d_range: adm.d_range,
            log10_c_range: [-7.0, -2.0],
            c_prior: CPrior::default(),
            sigma_rule: SigmaRule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub chain: SamplerConfig,
    /// Prior draws screened for each chain's starting point.
    pub init_candidates: usize,
    pub bins: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            chain: SamplerConfig::default(),
            init_candidates: 500,
            bins: crate::analysis::DEFAULT_BINS,
        }
    }
}

/// Proposal scales near the posterior spread at 5% noise on 25 to 49
/// stations, where the generic defaults are several times too wide.
pub const LOW_NOISE_SCALES: [f64; 4] = [0.012, 0.022, 0.4, 0.15];

/// One `(stations, p)` pair of the tightening suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSetting {
    pub stations: StationConfig,
    pub p: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsConfig {
    pub settings: Vec<ExperimentSetting>,
    pub noise_levels: Vec<f64>,
    /// Proposal scales for each noise level, replacing `sampler.chain.scales`.
    /// Empty keeps the sampler's scales for every level.
    pub scales: Vec<Vec<f64>>,
    /// Allowed distance of the final mode from the truth, as a fraction of
    /// the prior box width.
    pub mode_tolerance: f64,
}

impl Default for ExperimentsConfig {
    fn default() -> Self {
        let gauss = |n| StationConfig {
            n_per_axis: n,
            ..StationConfig::default()
        };
        Self {
            settings: vec![
                ExperimentSetting {
                    stations: gauss(3),
                    p: 15,
                },
                ExperimentSetting {
                    stations: gauss(5),
                    p: 21,
                },
                ExperimentSetting {
                    stations: gauss(7),
                    p: 27,
                },
            ],
            noise_levels: vec![0.05, 0.25],
            scales: vec![LOW_NOISE_SCALES.to_vec(), vec![0.05, 0.08, 2.0, 0.15]],
            mode_tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedCConfig {
    pub log10_c_values: Vec<f64>,
    /// Proposal scales for this study; `None` keeps `sampler.chain.scales`.
    pub scales: Option<Vec<f64>>,
}

impl Default for FixedCConfig {
    fn default() -> Self {
        Self {
            log10_c_values: vec![-7.0, -6.0, -4.0, -2.0],
            scales: Some(LOW_NOISE_SCALES.to_vec()),
        }
    }
}

/// Lattice for the grid oracle: `[lo, hi, n]` per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub a: (f64, f64, usize),
    pub b: (f64, f64, usize),
    pub d: (f64, f64, usize),
    pub log10_c: (f64, f64, usize),
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            a: (-1.0, 2.0, 8),
            b: (-1.0, 2.0, 8),
            d: (-100.0, -1.0, 8),
            log10_c: (-7.0, -2.0, 8),
        }
    }
}

impl GridConfig {
    /// Cell-centred nodes of each axis.
    pub fn axes(&self) -> [Vec<f64>; 4] {
        let axis = |(lo, hi, n): (f64, f64, usize)| -> Vec<f64> {
            let w = (hi - lo) / n as f64;
            (0..n).map(|i| lo + (i as f64 + 0.5) * w).collect()
        };
        [axis(self.a), axis(self.b), axis(self.d), axis(self.log10_c)]
    }

    pub fn n_nodes(&self) -> usize {
        self.a.2 * self.b.2 * self.d.2 * self.log10_c.2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub basis: BasisConfig,
    pub stations: StationConfig,
    pub scenario: SynthScenario,
    pub prior: PriorConfig,
    pub sampler: SamplingConfig,
    pub experiments: ExperimentsConfig,
    pub fixed_c: FixedCConfig,
    pub grid: GridConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            basis: BasisConfig::default(),
            stations: StationConfig::default(),
            scenario: SynthScenario::default(),
            prior: PriorConfig::default(),
            sampler: SamplingConfig::default(),
            experiments: ExperimentsConfig::default(),
            fixed_c: FixedCConfig::default(),
            grid: GridConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn admissible(&self) -> AdmissibleSet {
        AdmissibleSet {
            a_range: self.prior.a_range,
            b_range: self.prior.b_range,
            d_range: self.prior.d_range,
            depth_margin: self.geometry.depth_margin,
            fault_rect: self.geometry.fault_rect,
            window: self.geometry.window,
        }
    }

    pub fn m_true(&self) -> FaultGeometry {
        self.scenario.m_true
    }

    /// Checks every sub-config; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.geometry
            .elastic
            .validate()
            .map_err(|e| Error::config("geometry.elastic", e.to_string()))?;
        let adm = self.admissible();
        adm.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::config(format!("prior.{key}"), msg),
            other => other,
        })?;
        if let Some(f) = self.geometry.slip_fallback {
            if f.iter().any(|v| !v.is_finite()) || f.iter().all(|v| *v == 0.0) {
                return Err(Error::config("geometry.slip_fallback", "must be a finite non-zero vector"));
            }
        }
        validate_basis(&self.basis.p, self.basis.fault_order, "basis")?;
        validate_stations(&self.stations, "stations")?;
        let c = self.prior.log10_c_range;
        if !(c[0].is_finite() && c[1].is_finite() && c[0] < c[1]) {
            return Err(Error::config("prior.log10_c_range", "need lo < hi"));
        }
        let scn = &self.scenario;
        if let Err(e) = adm.check(&scn.m_true) {
            return Err(Error::config("scenario.m_true", e.to_string()));
        }
        if !(scn.noise_rel >= 0.0 && scn.noise_rel.is_finite()) {
            return Err(Error::config("scenario.noise_rel", "must be >= 0"));
        }
        if !(scn.bump.width > 0.0) {
            return Err(Error::config("scenario.bump.width", "must be > 0"));
        }
        if !(scn.bump.amplitude >= 0.0) {
            return Err(Error::config("scenario.bump.amplitude", "must be >= 0"));
        }
        let max_p = self
            .experiments
            .settings
            .iter()
            .map(|s| s.p)
            .chain(std::iter::once(self.basis.p))
            .max()
            .unwrap_or(1);
        if scn.fine_order < 4 * max_p {
            return Err(Error::config(
                "scenario.fine_order",
                format!("must be at least 4 p = {}", 4 * max_p),
            ));
        }
        let s = &self.sampler;
        s.chain.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::config(format!("sampler.chain.{key}"), msg),
            other => other,
        })?;
        check_scales(&s.chain.scales, "sampler.chain.scales")?;
        if s.init_candidates == 0 {
            return Err(Error::config("sampler.init_candidates", "must be >= 1"));
        }
        if s.bins == 0 {
            return Err(Error::config("sampler.bins", "must be >= 1"));
        }
        for (i, st) in self.experiments.settings.iter().enumerate() {
            validate_stations(&st.stations, &format!("experiments.settings[{i}].stations"))?;
            validate_basis(&st.p, None, &format!("experiments.settings[{i}]"))?;
        }
        let e = &self.experiments;
        if e.noise_levels.iter().any(|n| !(*n >= 0.0)) {
            return Err(Error::config("experiments.noise_levels", "must be >= 0"));
        }
        if !e.scales.is_empty() && e.scales.len() != e.noise_levels.len() {
            return Err(Error::config(
                "experiments.scales",
                "need one entry per noise level, or none",
            ));
        }
        for (i, sc) in e.scales.iter().enumerate() {
            check_scales(sc, &format!("experiments.scales[{i}]"))?;
        }
        if let Some(sc) = &self.fixed_c.scales {
            check_scales(sc, "fixed_c.scales")?;
        }
        for v in &self.fixed_c.log10_c_values {
            if !(*v >= c[0] && *v <= c[1]) {
                return Err(Error::config(
                    "fixed_c.log10_c_values",
                    format!("{v} lies outside prior.log10_c_range {c:?}"),
                ));
            }
        }
        for (key, (lo, hi, n)) in [
            ("grid.a", self.grid.a),
            ("grid.b", self.grid.b),
            ("grid.d", self.grid.d),
            ("grid.log10_c", self.grid.log10_c),
        ] {
            if !(lo < hi) || n == 0 {
                return Err(Error::config(key, "need lo < hi and n >= 1"));
            }
        }
        Ok(())
    }

    /// Reads a config or a manifest (whose `config` member is used), applies
    /// overrides, and resolves relative layout paths against the file.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?;
                match v {
                    Value::Object(ref o) if o.contains_key("manifest_version") => {
                        o.get("config").cloned().unwrap_or(Value::Null)
                    }
                    other => other,
                }
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::config(unknown_key(&e.to_string()), e.to_string()))?;
        if let Some(base) = path.and_then(Path::parent) {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |s: &mut StationConfig| {
            if let Some(l) = &s.layout {
                if l.is_relative() && !l.exists() {
                    s.layout = Some(base.join(l));
                }
            }
        };
        fix(&mut self.stations);
        for s in &mut self.experiments.settings {
            fix(&mut s.stations);
        }
    }
}

fn validate_basis(p: &usize, order: Option<usize>, key: &str) -> Result<()> {
    if *p == 0 {
        return Err(Error::config(format!("{key}.p"), "must be >= 1"));
    }
    if let Some(q) = order {
        if q < p + 2 {
            return Err(Error::config(
                format!("{key}.fault_order"),
                format!("must be at least p + 2 = {}", p + 2),
            ));
        }
    }
    Ok(())
}

fn check_scales(s: &[f64], key: &str) -> Result<()> {
    if s.len() != 4 {
        return Err(Error::config(key, "need 4 entries (a, b, d, log10C)"));
    }
    if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::config(key, "must be finite and >= 0"));
    }
    Ok(())
}

fn validate_stations(s: &StationConfig, key: &str) -> Result<()> {
    match s.mode {
        StationMode::GaussTensor if s.n_per_axis == 0 => {
            Err(Error::config(format!("{key}.n_per_axis"), "must be >= 1"))
        }
        StationMode::FixedStations if s.layout.is_none() => Err(Error::config(
            format!("{key}.layout"),
            "fixed-stations mode needs a layout CSV",
        )),
        _ => Ok(()),
    }
}

/// Extracts the field name from a serde "unknown field" message.
fn unknown_key(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

/// Sets `a.b.c=value`; the value is parsed as JSON, falling back to a string.
/// The path must exist in the fully defaulted config.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim();
    let parsed: Value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let template = serde_json::to_value(RunConfig::default())?;
    let parts: Vec<&str> = key.split('.').collect();
    let mut t = &template;
    for part in &parts {
        t = t
            .get(part)
            .ok_or_else(|| Error::config(key, "unknown configuration key"))?;
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(Error::config(key, "parent is not an object"));
        }
        let obj = cur.as_object_mut().expect("checked object");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

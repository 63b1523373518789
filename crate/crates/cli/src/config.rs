//! Scenario files: TOML syntax, unit-suffixed keys, one block per concern.
//!
//! ```toml
//! [system]
//! slot_ms = 1.0
//! bandwidth_hz = 18000.0
//! noise_density_dbm_per_hz = -174.0
//! peak_power_dbm = 46.0
//!
//! [traffic]
//! arrival_prob = 0.6
//! mean_burst_bits = 1000.0
//!
//! [[users]]
//! distance_m = 300.0
//! path_loss_exp = 4.0
//! circuit_power_dbm = 10.0
//! delay_bound_ms = 10.0
//! delay_tolerance = 0.1
//! ```
//!
//! Every other block is optional and falls back to the defaults below.

use std::fmt;
use std::path::{Path, PathBuf};

use noma_ee_core::model::{dbm_to_watts, noise_power_from_density, SystemParams, UserProfile};
use noma_ee_core::optimizer::{EnergyModel, ExponentCoupling, MultiplierSign, SolverSettings};
use noma_ee_core::sim::ChannelModel;
use serde::{Deserialize, Serialize};

/// Environment variable naming the output directory when neither the flag
/// nor the config sets one.
pub const OUT_DIR_ENV: &str = "NOMA_EE_OUT_DIR";
pub const FALLBACK_OUT_DIR: &str = "noma-ee-out";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: cannot read config: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: `{key}`: {message}")]
    Invalid {
        path: String,
        line: usize,
        key: String,
        message: String,
    },
}

impl ConfigError {
    /// Dotted name of the offending key, when the error is about one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub system: SystemBlock,
    #[serde(default)]
    pub traffic: TrafficBlock,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub fig4: Fig4Block,
    #[serde(default)]
    pub fig5: Fig5Block,
    #[serde(default)]
    pub validate: ValidateBlock,
    #[serde(default)]
    pub output: OutputBlock,
    pub users: Vec<UserBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub slot_ms: f64,
    pub bandwidth_hz: f64,
    /// Either this or `noise_power_w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_density_dbm_per_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power_w: Option<f64>,
    /// Either this or `peak_power_w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_power_w: Option<f64>,
}

/// Scenario-wide arrival process; users may override either field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_burst_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserBlock {
    pub distance_m: f64,
    pub path_loss_exp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_power_w: Option<f64>,
    pub delay_bound_ms: f64,
    pub delay_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_burst_bits: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyModelName {
    #[default]
    TwoMode,
    SingleMode,
}

impl From<EnergyModelName> for EnergyModel {
    fn from(m: EnergyModelName) -> Self {
        match m {
            EnergyModelName::TwoMode => EnergyModel::TwoMode,
            EnergyModelName::SingleMode => EnergyModel::SingleMode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignName {
    #[default]
    Standard,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingName {
    #[default]
    CapacityOnly,
    FullState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerBlock {
    pub energy_model: EnergyModelName,
    pub dinkelbach_tol: f64,
    pub dinkelbach_max_iter: usize,
    pub dual_max_iter: usize,
    pub power_rel_tol: f64,
    pub max_cycles: usize,
    pub line_search_rel_tol: f64,
    pub subgradient_step0: f64,
    pub multiplier_sign: SignName,
    pub fd_rel_step: f64,
    pub exponent_coupling: CouplingName,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            energy_model: EnergyModelName::TwoMode,
            dinkelbach_tol: s.dinkelbach_tol,
            dinkelbach_max_iter: s.dinkelbach_max_iter,
            dual_max_iter: s.dual_max_iter,
            power_rel_tol: s.power_rel_tol,
            max_cycles: s.max_cycles,
            line_search_rel_tol: s.line_search_rel_tol,
            subgradient_step0: s.subgradient_step0,
            multiplier_sign: SignName::Standard,
            fd_rel_step: s.fd_rel_step,
            exponent_coupling: CouplingName::CapacityOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelName {
    #[default]
    Rayleigh,
    MeanGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub n_slots: u64,
    pub seeds: u32,
    /// Run `r` uses `seed + r`.
    pub seed: u64,
    pub warmup_slots: u64,
    pub delay_histogram_cap: usize,
    pub channel: ChannelName,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            n_slots: 10_000_000,
            seeds: 5,
            seed: 1,
            warmup_slots: 10_000,
            delay_histogram_cap: 1 << 16,
            channel: ChannelName::Rayleigh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationChoice {
    /// Energy-efficiency optimum.
    #[default]
    Optimized,
    /// Smallest powers whose effective capacity covers each user's demand.
    QosBalanced,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig4Block {
    /// Defaults to 1, 2, ..., 2 max(D_max) ms.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_grid_ms: Option<Vec<f64>>,
    pub allocation: AllocationChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig5Block {
    /// Applied to every user at each grid point.
    pub delay_bounds_ms: Vec<f64>,
    pub simulate: bool,
    pub n_slots: u64,
    pub seeds: u32,
}

impl Default for Fig5Block {
    fn default() -> Self {
        Self {
            delay_bounds_ms: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            simulate: true,
            n_slots: 1_000_000,
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstitutionName {
    #[default]
    DecodedUser,
    /// Deliberately wrong integrand, for negative controls.
    Interferer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateBlock {
    pub properties: Vec<String>,
    pub roundtrip_points: usize,
    pub mc_configs: usize,
    pub mc_samples: u64,
    pub concavity_pairs: usize,
    pub monotonicity_points: usize,
    pub exponent_scales: Vec<f64>,
    /// Allowed relative rise for the non-increasing checks.
    pub monotone_slack: f64,
    pub substitution: SubstitutionName,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        Self {
            properties: crate::validate::PROPERTIES.iter().map(|s| s.to_string()).collect(),
            roundtrip_points: 10_000,
            mc_configs: 20,
            mc_samples: 200_000,
            concavity_pairs: 1000,
            monotonicity_points: 200,
            exponent_scales: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5],
            monotone_slack: 0.01,
            substitution: SubstitutionName::DecodedUser,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, formats: vec!["csv".into()] }
    }
}

/// A validated scenario: the raw blocks with defaults filled in, plus the
/// model values they describe.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub raw: RawConfig,
    pub params: SystemParams,
    pub profiles: Vec<UserProfile>,
}

impl Scenario {
    pub fn settings(&self) -> SolverSettings {
        let o = &self.raw.optimizer;
        SolverSettings {
            dinkelbach_tol: o.dinkelbach_tol,
            dinkelbach_max_iter: o.dinkelbach_max_iter,
            dual_max_iter: o.dual_max_iter,
            power_rel_tol: o.power_rel_tol,
            max_cycles: o.max_cycles,
            line_search_rel_tol: o.line_search_rel_tol,
            subgradient_step0: o.subgradient_step0,
            multiplier_sign: match o.multiplier_sign {
                SignName::Standard => MultiplierSign::Standard,
                SignName::Reversed => MultiplierSign::Reversed,
            },
            fd_rel_step: o.fd_rel_step,
        }
    }

    pub fn energy_model(&self) -> EnergyModel {
        self.raw.optimizer.energy_model.into()
    }

    pub fn coupling(&self) -> ExponentCoupling {
        match self.raw.optimizer.exponent_coupling {
            CouplingName::CapacityOnly => ExponentCoupling::CapacityOnly,
            CouplingName::FullState => ExponentCoupling::FullState,
        }
    }

    pub fn channel(&self) -> ChannelModel {
        match self.raw.simulation.channel {
            ChannelName::Rayleigh => ChannelModel::Rayleigh,
            ChannelName::MeanGain => ChannelModel::MeanGain,
        }
    }

    /// Fig. 4 delay grid in milliseconds.
    pub fn delay_grid_ms(&self) -> Vec<f64> {
        match &self.raw.fig4.delay_grid_ms {
            Some(g) => g.clone(),
            None => {
                let top = self
                    .profiles
                    .iter()
                    .map(|p| p.delay_bound_s() * 1e3)
                    .fold(0.0, f64::max);
                (1..=(2.0 * top).round() as u64).map(|d| d as f64).collect()
            }
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        let s = &self.raw.simulation;
        (0..s.seeds as u64).map(|r| s.seed.wrapping_add(r)).collect()
    }

    /// Flag, then config, then environment, then a fixed fallback.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.raw.output.directory {
            return p.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(FALLBACK_OUT_DIR),
        }
    }

    /// The resolved configuration as TOML, for provenance.
    pub fn echo(&self) -> String {
        toml::to_string(&self.raw).expect("config blocks serialize")
    }
}

pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, path)
}

pub fn parse(text: &str, path: &Path) -> Result<Scenario, ConfigError> {
    let shown = path.display().to_string();
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((1, 1));
        ConfigError::Syntax {
            path: shown.clone(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    Resolver { text, path: shown }.resolve(raw, path)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Where a key sits in the source. Blocks are `[name]` or the `index`-th
/// `[[name]]`; falls back to the block header, then to line 1.
fn locate(text: &str, block: &str, index: Option<usize>, key: &str) -> usize {
    let mut current: Option<(String, usize)> = None;
    let mut seen: std::collections::HashMap<String, usize> = Default::default();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix("[[").and_then(|r| r.split("]]").next()) {
            let name = name.trim().to_string();
            let n = seen.entry(name.clone()).or_insert(0);
            current = Some((name, *n));
            *n += 1;
        } else if let Some(name) = t.strip_prefix('[').and_then(|r| r.split(']').next()) {
            current = Some((name.trim().to_string(), 0));
        } else {
            let in_block = matches!(&current, Some((n, j)) if n == block && index.is_none_or(|x| x == *j));
            if in_block {
                if let Some(rest) = t.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return i + 1;
                    }
                }
            }
            continue;
        }
        if header.is_none() && matches!(&current, Some((n, j)) if n == block && index.is_none_or(|x| x == *j)) {
            header = Some(i + 1);
        }
    }
    header.unwrap_or(1)
}

struct Resolver<'a> {
    text: &'a str,
    path: String,
}

struct Key<'a> {
    block: &'a str,
    index: Option<usize>,
    name: &'a str,
}

impl fmt::Display for Key<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}].{}", self.block, i, self.name),
            None => write!(f, "{}.{}", self.block, self.name),
        }
    }
}

fn key<'a>(block: &'a str, name: &'a str) -> Key<'a> {
    Key { block, index: None, name }
}

fn user_key(index: usize, name: &str) -> Key<'_> {
    Key { block: "users", index: Some(index), name }
}

impl Resolver<'_> {
    fn fail(&self, k: Key<'_>, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            path: self.path.clone(),
            line: locate(self.text, k.block, k.index, k.name),
            key: k.to_string(),
            message: message.into(),
        }
    }

    fn positive(&self, k: Key<'_>, v: f64) -> Result<f64, ConfigError> {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(self.fail(k, format!("must be positive and finite, got {v}")))
        }
    }

    fn finite(&self, k: Key<'_>, v: f64) -> Result<f64, ConfigError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(k, format!("must be finite, got {v}")))
        }
    }

    fn open_unit(&self, k: Key<'_>, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v < 1.0 {
            Ok(v)
        } else {
            Err(self.fail(k, format!("out of range: must lie in (0, 1), got {v}")))
        }
    }

    /// Exactly one of two unit spellings.
    fn one_of(
        &self,
        a: (Key<'_>, Option<f64>),
        b: (Key<'_>, Option<f64>),
    ) -> Result<Either, ConfigError> {
        match (a.1, b.1) {
            (Some(x), None) => Ok(Either::First(self.finite(a.0, x)?)),
            (None, Some(y)) => Ok(Either::Second(self.finite(b.0, y)?)),
            (Some(_), Some(_)) => Err(self.fail(b.0, format!("conflicts with `{}`; give only one unit", a.0.name))),
            (None, None) => {
                let msg = format!("missing: set `{}` or `{}`", a.0.name, b.0.name);
                Err(self.fail(a.0, msg))
            }
        }
    }

    fn resolve(&self, mut raw: RawConfig, path: &Path) -> Result<Scenario, ConfigError> {
        let sys = &raw.system;
        let slot_s = self.positive(key("system", "slot_ms"), sys.slot_ms)? * 1e-3;
        let bandwidth = self.positive(key("system", "bandwidth_hz"), sys.bandwidth_hz)?;
        let noise = match self.one_of(
            (key("system", "noise_density_dbm_per_hz"), sys.noise_density_dbm_per_hz),
            (key("system", "noise_power_w"), sys.noise_power_w),
        )? {
            Either::First(dbm) => noise_power_from_density(dbm, bandwidth)
                .map_err(|e| self.fail(key("system", "noise_density_dbm_per_hz"), e.to_string()))?,
            Either::Second(w) => self.positive(key("system", "noise_power_w"), w)?,
        };
        let peak = match self.one_of(
            (key("system", "peak_power_dbm"), sys.peak_power_dbm),
            (key("system", "peak_power_w"), sys.peak_power_w),
        )? {
            Either::First(dbm) => dbm_to_watts(dbm),
            Either::Second(w) => self.positive(key("system", "peak_power_w"), w)?,
        };
        let params = SystemParams::new(slot_s, bandwidth, noise, peak)
            .map_err(|e| self.fail(key("system", "slot_ms"), e.to_string()))?;

        if raw.users.is_empty() {
            return Err(ConfigError::Invalid {
                path: self.path.clone(),
                line: 1,
                key: "users".into(),
                message: "at least one [[users]] block is required".into(),
            });
        }
        let traffic = raw.traffic.clone();
        let mut profiles = Vec::with_capacity(raw.users.len());
        let mut last_distance = 0.0;
        for (i, u) in raw.users.iter_mut().enumerate() {
            let d = self.positive(user_key(i, "distance_m"), u.distance_m)?;
            if d < last_distance {
                return Err(self.fail(
                    user_key(i, "distance_m"),
                    "users must be listed nearest first (decoding order)",
                ));
            }
            last_distance = d;
            let beta = self.finite(user_key(i, "path_loss_exp"), u.path_loss_exp)?;
            if beta < 0.0 {
                return Err(self.fail(user_key(i, "path_loss_exp"), format!("must be non-negative, got {beta}")));
            }
            let pc = match self.one_of(
                (user_key(i, "circuit_power_dbm"), u.circuit_power_dbm),
                (user_key(i, "circuit_power_w"), u.circuit_power_w),
            )? {
                Either::First(dbm) => dbm_to_watts(dbm),
                Either::Second(w) if w >= 0.0 => w,
                Either::Second(w) => {
                    return Err(self.fail(user_key(i, "circuit_power_w"), format!("must be non-negative, got {w}")))
                }
            };
            let d_max = self.positive(user_key(i, "delay_bound_ms"), u.delay_bound_ms)? * 1e-3;
            let eps = self.open_unit(user_key(i, "delay_tolerance"), u.delay_tolerance)?;
            let p = match u.arrival_prob.or(traffic.arrival_prob) {
                Some(p) if p > 0.0 && p <= 1.0 => p,
                Some(p) => {
                    let k = if u.arrival_prob.is_some() { user_key(i, "arrival_prob") } else { key("traffic", "arrival_prob") };
                    return Err(self.fail(k, format!("out of range: must lie in (0, 1], got {p}")));
                }
                None => return Err(self.fail(user_key(i, "arrival_prob"), "missing: set it here or in [traffic]")),
            };
            let l = match u.mean_burst_bits.or(traffic.mean_burst_bits) {
                Some(l) => {
                    let k = if u.mean_burst_bits.is_some() { user_key(i, "mean_burst_bits") } else { key("traffic", "mean_burst_bits") };
                    self.positive(k, l)?
                }
                None => return Err(self.fail(user_key(i, "mean_burst_bits"), "missing: set it here or in [traffic]")),
            };
            u.arrival_prob = Some(p);
            u.mean_burst_bits = Some(l);
            let profile = UserProfile::new(d, beta, p, l, pc, d_max, eps)
                .map_err(|e| self.fail(user_key(i, "distance_m"), e.to_string()))?;
            profiles.push(profile);
        }

        let o = &raw.optimizer;
        for (name, v) in [
            ("dinkelbach_tol", o.dinkelbach_tol),
            ("power_rel_tol", o.power_rel_tol),
            ("line_search_rel_tol", o.line_search_rel_tol),
            ("subgradient_step0", o.subgradient_step0),
            ("fd_rel_step", o.fd_rel_step),
        ] {
            self.positive(key("optimizer", name), v)?;
        }
        for (name, v) in [
            ("dinkelbach_max_iter", o.dinkelbach_max_iter),
            ("dual_max_iter", o.dual_max_iter),
            ("max_cycles", o.max_cycles),
        ] {
            if v == 0 {
                return Err(self.fail(key("optimizer", name), "must be at least 1"));
            }
        }

        let s = &raw.simulation;
        if s.n_slots == 0 {
            return Err(self.fail(key("simulation", "n_slots"), "must be at least 1"));
        }
        if s.seeds == 0 {
            return Err(self.fail(key("simulation", "seeds"), "must be at least 1"));
        }
        if s.delay_histogram_cap == 0 {
            return Err(self.fail(key("simulation", "delay_histogram_cap"), "must be at least 1"));
        }

        if let Some(g) = &raw.fig4.delay_grid_ms {
            self.grid(key("fig4", "delay_grid_ms"), g)?;
        }
        let f5 = &raw.fig5;
        self.grid(key("fig5", "delay_bounds_ms"), &f5.delay_bounds_ms)?;
        if f5.n_slots == 0 || f5.seeds == 0 {
            let name = if f5.n_slots == 0 { "n_slots" } else { "seeds" };
            return Err(self.fail(key("fig5", name), "must be at least 1"));
        }

        let v = &raw.validate;
        crate::validate::check_selection(&v.properties)
            .map_err(|m| self.fail(key("validate", "properties"), m))?;
        self.grid(key("validate", "exponent_scales"), &v.exponent_scales)?;
        if v.exponent_scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(self.fail(key("validate", "exponent_scales"), "must be strictly increasing"));
        }
        self.positive(key("validate", "monotone_slack"), v.monotone_slack)?;
        for (name, n) in [
            ("roundtrip_points", v.roundtrip_points),
            ("mc_configs", v.mc_configs),
            ("concavity_pairs", v.concavity_pairs),
            ("monotonicity_points", v.monotonicity_points),
        ] {
            if n == 0 {
                return Err(self.fail(key("validate", name), "must be at least 1"));
            }
        }
        if v.mc_samples < 10_000 {
            return Err(self.fail(key("validate", "mc_samples"), "must be at least 10000"));
        }

        if let Some(f) = raw.output.formats.iter().find(|f| f.as_str() != "csv") {
            return Err(self.fail(key("output", "formats"), format!("unsupported format `{f}`; only `csv` is written")));
        }
        if raw.output.formats.is_empty() {
            return Err(self.fail(key("output", "formats"), "at least one format is required"));
        }

        Ok(Scenario { path: path.to_path_buf(), raw, params, profiles })
    }

    fn grid(&self, k: Key<'_>, g: &[f64]) -> Result<(), ConfigError> {
        if g.is_empty() {
            return Err(self.fail(k, "grid is empty"));
        }
        if let Some(v) = g.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(self.fail(k, format!("grid values must be positive and finite, got {v}")));
        }
        Ok(())
    }
}

enum Either {
    First(f64),
    Second(f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
slot_ms = 1.0
bandwidth_hz = 18000.0
noise_power_w = 1e-16
peak_power_w = 10.0

[traffic]
arrival_prob = 0.5
mean_burst_bits = 100.0

[[users]]
distance_m = 100.0
path_loss_exp = 4.0
circuit_power_w = 0.01
delay_bound_ms = 10.0
delay_tolerance = 0.1
"#;

    fn p(text: &str) -> Result<Scenario, ConfigError> {
        parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let s = p(MINIMAL).unwrap();
        assert_eq!(s.profiles.len(), 1);
        assert_eq!(s.raw.simulation.n_slots, 10_000_000);
        assert_eq!(s.raw.users[0].arrival_prob, Some(0.5));
        assert_eq!(s.delay_grid_ms().len(), 20);
        assert_eq!(s.seeds(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn echo_parses_back_to_the_same_scenario() {
        let s = p(MINIMAL).unwrap();
        let again = p(&s.echo()).unwrap();
        assert_eq!(again.raw, s.raw);
    }

    #[test]
    fn unknown_key_is_anchored() {
        let text = MINIMAL.replace("bandwidth_hz = 18000.0", "bandwidth_hz = 18000.0\nbandwith = 3");
        let e = p(&text).unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, ConfigError::Syntax { line: 5, .. }), "{msg}");
        assert!(msg.contains("bandwith"), "{msg}");
    }

    #[test]
    fn range_error_names_the_key_and_line() {
        let text = MINIMAL.replace("delay_tolerance = 0.1", "delay_tolerance = 1.5");
        let e = p(&text).unwrap_err();
        assert_eq!(e.key(), Some("users[0].delay_tolerance"));
        assert!(matches!(e, ConfigError::Invalid { line: 17, .. }), "{e}");
        assert!(e.to_string().contains("out of range"));
    }

    #[test]
    fn missing_users_block_is_named() {
        let text = MINIMAL.split("[[users]]").next().unwrap();
        let e = p(text).unwrap_err();
        assert!(e.to_string().contains("users"), "{e}");
    }

    #[test]
    fn conflicting_units_are_rejected() {
        let text = MINIMAL.replace("peak_power_w = 10.0", "peak_power_w = 10.0\npeak_power_dbm = 40.0");
        let e = p(&text).unwrap_err();
        assert_eq!(e.key(), Some("system.peak_power_w"));
    }

    #[test]
    fn missing_traffic_is_reported_per_user() {
        let text = MINIMAL.replace("arrival_prob = 0.5", "");
        let e = p(&text).unwrap_err();
        assert_eq!(e.key(), Some("users[0].arrival_prob"));
    }

    #[test]
    fn users_must_be_ordered_by_distance() {
        let second = MINIMAL.split("[[users]]").nth(1).unwrap().replace("100.0\npath", "50.0\npath");
        let text = format!("{MINIMAL}\n[[users]]{second}");
        let e = p(&text).unwrap_err();
        assert_eq!(e.key(), Some("users[1].distance_m"));
        assert!(matches!(e, ConfigError::Invalid { line: 20, .. }), "{e}");
    }

    #[test]
    fn output_directory_precedence() {
        let mut s = p(MINIMAL).unwrap();
        assert_eq!(s.output_dir(Some(Path::new("flag"))), PathBuf::from("flag"));
        s.raw.output.directory = Some("cfg".into());
        assert_eq!(s.output_dir(None), PathBuf::from("cfg"));
    }

    #[test]
    fn locate_finds_array_entries() {
        let text = "[[users]]\na = 1\n[[users]]\na = 2\n[x]\na = 3\n";
        assert_eq!(locate(text, "users", Some(1), "a"), 4);
        assert_eq!(locate(text, "x", None, "a"), 6);
        assert_eq!(locate(text, "x", None, "b"), 5);
    }
}

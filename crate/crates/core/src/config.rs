//! Run configuration: a TOML document with `opo`, `seed`, `link`, `network`,
//! `sweep`, `spectrum` and `output` sections.
//!
//! Precedence is override > file > built-in default. Overrides use dotted
//! paths (`link.beta=0.95`); values are parsed as TOML scalars and fall back
//! to plain strings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::DeltaConvention;
use crate::link::{db_to_linear, LinkParams, DEFAULT_ALPHA_DB_PER_KM};
use crate::opo::{OpoParams, SeedNoiseModel, DEFAULT_CLEAN_THRESHOLD, DEFAULT_ENVELOPE_SCALE};
use crate::planner::{HeterodyneOverride, NetworkSpec};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "COMBQKD_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpoConfig {
    pub k_tau: f64,
    pub gamma_tau: f64,
    pub chi_over_k: f64,
    pub fsr_hz: f64,
    /// Comb tooth used for single-link evaluations.
    pub comb_index: u32,
}

impl Default for OpoConfig {
    fn default() -> Self {
        Self {
            k_tau: 0.05,
            gamma_tau: 0.0,
            chi_over_k: 0.75,
            fsr_hz: 15e9,
            comb_index: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub n_b: f64,
    pub n_a: f64,
    pub jitter_peak: f64,
    pub envelope_scale: f64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        let s = SeedNoiseModel::default();
        Self {
            n_b: s.n_b,
            n_a: s.n_a,
            jitter_peak: s.jitter_peak,
            envelope_scale: DEFAULT_ENVELOPE_SCALE,
        }
    }
}

/// How the distance axis maps onto the two arms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// The axis value is the user-to-user distance; each arm gets half.
    #[default]
    TotalSymmetric,
    /// Each arm gets the full axis value.
    PerArm,
}

/// Link section. Insertion losses are given in dB (negative for loss).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub eta1_db: f64,
    pub eta2_db: f64,
    pub l1_km: f64,
    pub l2_km: f64,
    pub alpha_db_per_km: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eta_det: f64,
    pub v_el: f64,
    pub eta_ws_db: f64,
    pub beta: f64,
    pub distance_mode: DistanceMode,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            eta1_db: -0.5,
            eta2_db: -0.5,
            l1_km: 0.0,
            l2_km: 0.0,
            alpha_db_per_km: DEFAULT_ALPHA_DB_PER_KM,
            eps1: 0.01,
            eps2: 0.01,
            eta_det: 0.9,
            v_el: 0.01,
            eta_ws_db: -0.2,
            beta: 0.98,
            distance_mode: DistanceMode::TotalSymmetric,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_users: usize,
    /// Defaults to `opo.fsr_hz`.
    pub fsr_hz: Option<f64>,
    pub mod_bandwidth_hz: f64,
    pub ws_min_spacing_hz: f64,
    pub comb_bandwidth_hz: f64,
    pub noise_clean_threshold: f64,
    /// Per-user arm lengths; when empty every user sits at `distance_km`.
    pub distances_km: Vec<f64>,
    pub distance_km: f64,
    pub heterodyne_overrides: Vec<HeterodyneOverride>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let spec = NetworkSpec::default();
        Self {
            n_users: spec.n_users,
            fsr_hz: None,
            mod_bandwidth_hz: spec.mod_bandwidth_hz,
            ws_min_spacing_hz: spec.ws_min_spacing_hz,
            comb_bandwidth_hz: spec.comb_bandwidth_hz,
            noise_clean_threshold: DEFAULT_CLEAN_THRESHOLD,
            distances_km: Vec::new(),
            distance_km: 0.0,
            heterodyne_overrides: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "distance_symmetric")]
    DistanceSymmetric,
    /// `k₁τ` as a multiple of `kτ`.
    #[serde(rename = "T_tot")]
    TotalLoss,
    #[serde(rename = "chi_over_k")]
    ChiOverK,
    /// Central-node transmittance, both modes locked equal (linear).
    #[serde(rename = "eta1_eta2")]
    SourceTransmittance,
    /// `ε₁ = ε₂`.
    #[serde(rename = "eps")]
    ExcessNoise,
    #[serde(rename = "eta_det")]
    DetectorEfficiency,
    #[serde(rename = "v_el")]
    ElectronicNoise,
    #[serde(rename = "beta")]
    Reconciliation,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::DistanceSymmetric => "distance_symmetric",
            SweepAxis::TotalLoss => "T_tot",
            SweepAxis::ChiOverK => "chi_over_k",
            SweepAxis::SourceTransmittance => "eta1_eta2",
            SweepAxis::ExcessNoise => "eps",
            SweepAxis::DetectorEfficiency => "eta_det",
            SweepAxis::ElectronicNoise => "v_el",
            SweepAxis::Reconciliation => "beta",
        }
    }

    /// Checks one axis value against the parameter's admissible range.
    pub fn check_value(self, x: f64) -> Result<()> {
        let ok = match self {
            SweepAxis::DistanceSymmetric
            | SweepAxis::ExcessNoise
            | SweepAxis::ElectronicNoise
            | SweepAxis::ChiOverK => x >= 0.0,
            SweepAxis::TotalLoss => x >= 1.0,
            SweepAxis::SourceTransmittance | SweepAxis::DetectorEfficiency | SweepAxis::Reconciliation => {
                x > 0.0 && x <= 1.0
            }
        };
        if ok && x.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "sweep value {x} is out of range for axis {}",
                self.name()
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepScale {
    #[default]
    Linear,
    Log,
}

/// One member of a curve family: a label and the overrides that define it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub label: String,
    #[serde(default)]
    pub set: BTreeMap<String, toml::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub scale: SweepScale,
    pub curves: Vec<CurveConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::DistanceSymmetric,
            start: 0.0,
            stop: 100.0,
            points: 200,
            scale: SweepScale::Linear,
            curves: Vec::new(),
        }
    }
}

impl SweepConfig {
    /// Ascending axis grid.
    pub fn grid(&self) -> Result<Vec<f64>> {
        let mut grid = linear_grid(
            self.start,
            self.stop,
            self.points,
            "sweep.start",
            "sweep.stop",
            "sweep.points",
        )?;
        if self.scale == SweepScale::Log {
            if !(self.start > 0.0) {
                return Err(Error::Config("log-scale sweeps need sweep.start > 0".into()));
            }
            let (lo, hi) = (self.start.ln(), self.stop.ln());
            let last = (self.points - 1) as f64;
            for (i, x) in grid.iter_mut().enumerate().skip(1).take(self.points - 2) {
                *x = (lo + (hi - lo) * i as f64 / last).exp();
            }
        }
        for &x in &grid {
            self.axis.check_value(x)?;
        }
        Ok(grid)
    }
}

/// Angular-frequency grid for noise spectra (rad/s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            omega_min: -5e4,
            omega_max: 5e4,
            points: 201,
        }
    }
}

impl SpectrumConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        linear_grid(
            self.omega_min,
            self.omega_max,
            self.points,
            "spectrum.omega_min",
            "spectrum.omega_max",
            "spectrum.points",
        )
    }
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
fn linear_grid(
    start: f64,
    stop: f64,
    points: usize,
    start_key: &str,
    stop_key: &str,
    points_key: &str,
) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Config(format!("{points_key} must be >= 2, got {points}")));
    }
    if !(stop > start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!(
            "{stop_key} ({stop}) must exceed {start_key} ({start})"
        )));
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                stop
            } else {
                start + (stop - start) * i as f64 / last
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
    /// Digits after the decimal point in scientific notation.
    pub precision: usize,
    /// Evaluation workers; 0 = all cores, 1 = sequential.
    pub workers: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: None,
            format: OutputFormat::Csv,
            precision: 9,
            workers: 0,
        }
    }
}

/// Complete batch configuration. Built-in defaults: Ω = 15 GHz, kτ = 0.05, χ = 0.75k, 0.5 dB central-node
/// loss, 0.2 dB waveshaper, η = 0.9, υ_el = 0.01, ε = 0.01, β = 0.98.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub convention: DeltaConvention,
    pub opo: OpoConfig,
    pub seed: SeedConfig,
    pub link: LinkConfig,
    pub network: Option<NetworkConfig>,
    pub sweep: SweepConfig,
    pub spectrum: SpectrumConfig,
    pub output: OutputConfig,
}

fn parse_override_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Writes `value` at dotted `path` inside `table`, creating sections.
fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key `{path}`")));
    }
    let (leaf, sections) = parts.split_last().expect("non-empty");
    let mut cursor = table;
    for section in sections {
        let entry = cursor
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{section}` is not a section")))?;
    }
    cursor.insert(leaf.to_string(), value);
    Ok(())
}

/// Applies `key=value` overrides.
pub fn apply_overrides(table: &mut toml::Table, sets: &[String]) -> Result<()> {
    for s in sets {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
        set_path(table, key.trim(), parse_override_value(value))?;
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_toml_with_overrides(text: &str, sets: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        apply_overrides(&mut table, sets)?;
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any) and applies `sets`.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, sets).map_err(|e| match (path, e) {
            (Some(p), Error::Config(m)) => Error::Config(format!("{}: {m}", p.display())),
            (_, e) => e,
        })
    }

    /// New configuration with additional overrides applied on top of this one.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_with_overrides(&text, sets)
    }

    /// Same, from already-typed values (used for curve families).
    pub fn with_values(&self, values: &BTreeMap<String, toml::Value>) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in values {
            set_path(&mut table, k, v.clone())?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Domain(m) => Error::Config(m),
            other => other,
        };
        self.opo_params().map_err(as_config)?;
        self.seed_model().validate().map_err(as_config)?;
        self.link_params().validate().map_err(as_config)?;
        if let Some(net) = &self.network {
            self.network_spec_from(net).validate().map_err(as_config)?;
            if !net.distances_km.is_empty() && net.distances_km.len() != net.n_users {
                return Err(Error::Config(format!(
                    "network.distances_km has {} entries for {} users",
                    net.distances_km.len(),
                    net.n_users
                )));
            }
            if net
                .distances_km
                .iter()
                .chain([&net.distance_km])
                .any(|d| !(*d >= 0.0))
            {
                return Err(Error::Config("network distances must be >= 0".into()));
            }
        }
        if self.output.precision == 0 || self.output.precision > 17 {
            return Err(Error::Config(format!(
                "output.precision must be in 1..=17, got {}",
                self.output.precision
            )));
        }
        Ok(())
    }

    pub fn opo_params(&self) -> Result<OpoParams> {
        OpoParams::new(
            self.opo.k_tau,
            self.opo.gamma_tau,
            self.opo.chi_over_k,
            self.opo.fsr_hz,
        )
        .map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("opo: {m}")),
            other => other,
        })
    }

    pub fn seed_model(&self) -> SeedNoiseModel {
        SeedNoiseModel {
            n_b: self.seed.n_b,
            n_a: self.seed.n_a,
            jitter_peak: self.seed.jitter_peak,
            envelope_scale: self.seed.envelope_scale,
        }
    }

    pub fn link_params(&self) -> LinkParams {
        let l = &self.link;
        LinkParams {
            eta1: db_to_linear(l.eta1_db),
            eta2: db_to_linear(l.eta2_db),
            l1_km: l.l1_km,
            l2_km: l.l2_km,
            alpha_db_per_km: l.alpha_db_per_km,
            eps1: l.eps1,
            eps2: l.eps2,
            eta_det: l.eta_det,
            v_el: l.v_el,
            eta_ws: db_to_linear(l.eta_ws_db),
            beta: l.beta,
        }
    }

    fn network_spec_from(&self, net: &NetworkConfig) -> NetworkSpec {
        NetworkSpec {
            n_users: net.n_users,
            fsr_hz: net.fsr_hz.unwrap_or(self.opo.fsr_hz),
            mod_bandwidth_hz: net.mod_bandwidth_hz,
            ws_min_spacing_hz: net.ws_min_spacing_hz,
            comb_bandwidth_hz: net.comb_bandwidth_hz,
            noise_clean_threshold: net.noise_clean_threshold,
            heterodyne_overrides: net.heterodyne_overrides.clone(),
        }
    }

    /// Network spec and per-user distances; errors when no network section
    /// is present.
    pub fn network(&self) -> Result<(NetworkSpec, Vec<f64>)> {
        let net = self
            .network
            .as_ref()
            .ok_or_else(|| Error::Config("missing [network] section".into()))?;
        let distances = if net.distances_km.is_empty() {
            vec![net.distance_km; net.n_users]
        } else {
            net.distances_km.clone()
        };
        Ok((self.network_spec_from(net), distances))
    }

    /// SHA-256 over the physics-relevant configuration. The output path and
    /// worker count are excluded so they cannot change emitted files.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.path = None;
        canonical.output.workers = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

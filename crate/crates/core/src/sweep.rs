//! Deterministic parameter sweeps and noise spectra.
//!
//! Rows are produced in ascending axis order regardless of executor, and the
//! renderers use fixed formatting, so equal configurations give byte-identical
//! files.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use crate::config::{DistanceMode, OutputFormat, RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::gaussian::DeltaConvention;
use crate::keyrate::{key_rate, KeyRateReport};
use crate::link::{propagate, LinkParams};
use crate::opo::{noise_breakdown, source_covariance, NoiseBreakdown, OpoParams, SeedNoiseModel};

pub const SWEEP_SCHEMA: &str = "combqkd.sweep.v1";
pub const SPECTRUM_SCHEMA: &str = "combqkd.spectrum.v1";
pub const KEYRATE_SCHEMA: &str = "combqkd.keyrate.v1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Resolved physical inputs for one source-to-pair link.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub opo: OpoParams,
    pub seed: SeedNoiseModel,
    pub link: LinkParams,
    pub comb_index: u32,
    pub distance_mode: DistanceMode,
    pub convention: DeltaConvention,
}

impl Scenario {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            opo: cfg.opo_params()?,
            seed: cfg.seed_model(),
            link: cfg.link_params(),
            comb_index: cfg.opo.comb_index,
            distance_mode: cfg.link.distance_mode,
            convention: cfg.convention,
        })
    }

    /// Copy with one axis parameter replaced.
    pub fn at(&self, axis: SweepAxis, x: f64) -> Result<Self> {
        axis.check_value(x)?;
        let mut s = self.clone();
        match axis {
            SweepAxis::DistanceSymmetric => {
                let arm = match self.distance_mode {
                    DistanceMode::TotalSymmetric => 0.5 * x,
                    DistanceMode::PerArm => x,
                };
                s.link.l1_km = arm;
                s.link.l2_km = arm;
            }
            SweepAxis::TotalLoss => s.opo = s.opo.with_total_loss_ratio(x)?,
            SweepAxis::ChiOverK => {
                s.opo = OpoParams::new(s.opo.k_tau, s.opo.gamma_tau, x, s.opo.fsr_hz)?;
            }
            SweepAxis::SourceTransmittance => {
                s.link.eta1 = x;
                s.link.eta2 = x;
            }
            SweepAxis::ExcessNoise => {
                s.link.eps1 = x;
                s.link.eps2 = x;
            }
            SweepAxis::DetectorEfficiency => s.link.eta_det = x,
            SweepAxis::ElectronicNoise => s.link.v_el = x,
            SweepAxis::Reconciliation => s.link.beta = x,
        }
        Ok(s)
    }

    /// Source → link → key rate.
    pub fn evaluate(&self) -> Result<KeyRateReport> {
        let source = source_covariance(&self.opo, &self.seed, self.comb_index)?;
        let received = propagate(&source.covariance, &self.link)?;
        key_rate(&received, self.link.beta, self.convention)
    }
}

/// Header data shared by every emitted file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetadata {
    pub schema: &'static str,
    pub config_hash: String,
    pub version: &'static str,
    pub convention: DeltaConvention,
}

impl RunMetadata {
    fn new(schema: &'static str, cfg: &RunConfig) -> Self {
        Self {
            schema,
            config_hash: cfg.config_hash(),
            version: TOOL_VERSION,
            convention: cfg.convention,
        }
    }

    fn csv_comment(&self, extra: &[(&str, &str)]) -> String {
        let mut line = format!(
            "# schema={} config_hash={} version={} convention={}",
            self.schema, self.config_hash, self.version, self.convention
        );
        for (k, v) in extra {
            let _ = write!(line, " {k}={v}");
        }
        line
    }
}

/// Key rate at the configured operating point.
pub fn evaluate_config(cfg: &RunConfig) -> Result<KeyRateReport> {
    Scenario::from_config(cfg)?.evaluate()
}

/// JSON document for a single evaluation.
pub fn keyrate_json(cfg: &RunConfig, report: &KeyRateReport) -> String {
    let meta = RunMetadata::new(KEYRATE_SCHEMA, cfg);
    let doc = json!({
        "meta": meta,
        "comb_index": cfg.opo.comb_index,
        "l1_km": cfg.link.l1_km,
        "l2_km": cfg.link.l2_km,
        "result": report.to_json(),
    });
    serde_json::to_string_pretty(&doc).expect("json") + "\n"
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub meta: RunMetadata,
    pub axis: SweepAxis,
    /// Curve label when part of a family.
    pub label: Option<String>,
    pub axis_values: Vec<f64>,
    pub reports: Vec<KeyRateReport>,
}

impl SweepResult {
    pub fn key_rates(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.key_rate).collect()
    }

    pub fn to_csv(&self, precision: usize) -> String {
        let mut out = String::new();
        let mut extra = vec![("axis", self.axis.name())];
        if let Some(l) = &self.label {
            extra.push(("curve", l.as_str()));
        }
        let _ = writeln!(out, "{}", self.meta.csv_comment(&extra));
        let _ = writeln!(
            out,
            "{},{}",
            self.axis.name(),
            KeyRateReport::CSV_FIELDS.join(",")
        );
        for (x, r) in self.axis_values.iter().zip(&self.reports) {
            let _ = writeln!(out, "{x:.precision$e},{}", r.csv_cells(precision).join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .axis_values
            .iter()
            .zip(&self.reports)
            .map(|(x, r)| {
                let mut row = r.to_json();
                row["x"] = json!(x);
                row
            })
            .collect();
        let doc = json!({
            "meta": self.meta,
            "axis": self.axis.name(),
            "curve": self.label,
            "rows": rows,
        });
        serde_json::to_string_pretty(&doc).expect("json") + "\n"
    }

    pub fn render(&self, format: OutputFormat, precision: usize) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(precision),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// One sweep over `cfg.sweep`, ignoring any curve family.
pub fn run_sweep(cfg: &RunConfig, label: Option<String>, executor: &Executor) -> Result<SweepResult> {
    let axis = cfg.sweep.axis;
    let axis_values = cfg.sweep.grid()?;
    let base = Scenario::from_config(cfg)?;
    let reports = executor.try_map(&axis_values, |&x| {
        base.at(axis, x)?.evaluate().map_err(|e| annotate(e, axis, x))
    })?;
    Ok(SweepResult {
        meta: RunMetadata::new(SWEEP_SCHEMA, cfg),
        axis,
        label,
        axis_values,
        reports,
    })
}

fn annotate(e: Error, axis: SweepAxis, x: f64) -> Error {
    let at = format!(" (at {} = {x})", axis.name());
    match e {
        Error::NonPhysical(m) => Error::NonPhysical(m + &at),
        Error::Domain(m) => Error::Domain(m + &at),
        Error::Config(m) => Error::Config(m + &at),
        other => other,
    }
}

/// Every curve in `cfg.sweep.curves`, or the single base sweep when none are
/// defined. Each curve's config (and hash) includes its own overrides.
pub fn run_family(cfg: &RunConfig, executor: &Executor) -> Result<Vec<SweepResult>> {
    if cfg.sweep.curves.is_empty() {
        return Ok(vec![run_sweep(cfg, None, executor)?]);
    }
    cfg.sweep
        .curves
        .iter()
        .map(|curve| {
            let mut curve_cfg = cfg.with_values(&curve.set)?;
            curve_cfg.sweep.curves.clear();
            run_sweep(&curve_cfg, Some(curve.label.clone()), executor)
        })
        .collect()
}

/// File-name suffix for a curve label: ASCII alphanumerics, `-` and `_`
/// kept, everything else mapped to `_`.
pub fn curve_suffix(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumResult {
    pub meta: RunMetadata,
    pub omegas: Vec<f64>,
    pub rows: Vec<NoiseBreakdown>,
}

impl SpectrumResult {
    pub fn to_csv(&self, precision: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.meta.csv_comment(&[]));
        let _ = writeln!(out, "omega_rad_s,{}", NoiseBreakdown::FIELD_NAMES.join(","));
        for (w, row) in self.omegas.iter().zip(&self.rows) {
            let cells: Vec<String> = row.fields().iter().map(|v| format!("{v:.precision$e}")).collect();
            let _ = writeln!(out, "{w:.precision$e},{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .omegas
            .iter()
            .zip(&self.rows)
            .map(|(w, row)| {
                let mut v = serde_json::to_value(row).expect("json");
                v["omega_rad_s"] = json!(w);
                v
            })
            .collect();
        serde_json::to_string_pretty(&json!({ "meta": self.meta, "rows": rows })).expect("json") + "\n"
    }

    pub fn render(&self, format: OutputFormat, precision: usize) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(precision),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Technical-noise breakdown over `cfg.spectrum`.
pub fn run_spectrum(cfg: &RunConfig, executor: &Executor) -> Result<SpectrumResult> {
    let omegas = cfg.spectrum.grid()?;
    let opo = cfg.opo_params()?;
    let seed = cfg.seed_model();
    seed.validate()?;
    let rows = executor.try_map(&omegas, |&w| noise_breakdown(&opo, &seed, w))?;
    Ok(SpectrumResult {
        meta: RunMetadata::new(SPECTRUM_SCHEMA, cfg),
        omegas,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(sets: &[&str]) -> RunConfig {
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        RunConfig::from_toml_with_overrides("", &sets).unwrap()
    }

    #[test]
    fn default_point_matches_family_start() {
        let r = evaluate_config(&RunConfig::default()).unwrap();
        assert_relative_eq!(r.key_rate, 0.22298, epsilon = 5e-5);
        assert!(r.secure);
    }

    #[test]
    fn distance_axis_splits_symmetric_length() {
        let base = Scenario::from_config(&RunConfig::default()).unwrap();
        let s = base.at(SweepAxis::DistanceSymmetric, 40.0).unwrap();
        assert_eq!((s.link.l1_km, s.link.l2_km), (20.0, 20.0));
        let per_arm = Scenario {
            distance_mode: DistanceMode::PerArm,
            ..base
        };
        let s = per_arm.at(SweepAxis::DistanceSymmetric, 40.0).unwrap();
        assert_eq!((s.link.l1_km, s.link.l2_km), (40.0, 40.0));
    }

    #[test]
    fn axes_touch_the_intended_parameter() {
        let base = Scenario::from_config(&RunConfig::default()).unwrap();
        assert_relative_eq!(
            base.at(SweepAxis::TotalLoss, 1.1).unwrap().opo.gamma_tau,
            0.005,
            epsilon = 1e-15
        );
        assert_eq!(base.at(SweepAxis::ChiOverK, 0.5).unwrap().opo.chi_over_k, 0.5);
        let s = base.at(SweepAxis::SourceTransmittance, 0.7).unwrap();
        assert_eq!((s.link.eta1, s.link.eta2), (0.7, 0.7));
        let s = base.at(SweepAxis::ExcessNoise, 0.05).unwrap();
        assert_eq!((s.link.eps1, s.link.eps2), (0.05, 0.05));
        assert_eq!(
            base.at(SweepAxis::DetectorEfficiency, 0.6).unwrap().link.eta_det,
            0.6
        );
        assert_eq!(base.at(SweepAxis::ElectronicNoise, 0.2).unwrap().link.v_el, 0.2);
        assert_eq!(base.at(SweepAxis::Reconciliation, 0.9).unwrap().link.beta, 0.9);
        assert!(base.at(SweepAxis::Reconciliation, 1.2).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = cfg(&["sweep.points=3", "sweep.stop=20", "output.precision=4"]);
        let r = run_sweep(&c, None, &Executor::Sequential).unwrap();
        let text = r.to_csv(4);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("# schema=combqkd.sweep.v1 config_hash="));
        assert!(lines[0].ends_with("axis=distance_symmetric"));
        assert!(lines[1].starts_with("distance_symmetric,a,b,c,i_ab_bits"));
        assert!(lines[2].starts_with("0.0000e0,"));
        assert!(lines[4].starts_with("2.0000e1,"));
        assert_eq!(lines[2].split(',').count(), 16);
    }

    #[test]
    fn sweep_is_sorted_and_executor_independent() {
        let c = cfg(&["sweep.points=17"]);
        let seq = run_sweep(&c, None, &Executor::Sequential).unwrap();
        assert!(seq.axis_values.windows(2).all(|w| w[0] < w[1]));
        let par = run_sweep(&c, None, &Executor::with_workers(4)).unwrap();
        assert_eq!(seq.to_csv(9), par.to_csv(9));
        assert_eq!(seq.to_json(), par.to_json());
    }

    #[test]
    fn family_curves_carry_labels_and_hashes() {
        let text = r#"
[sweep]
points = 5
stop = 40
curves = [
  { label = "g0", set = { "opo.gamma_tau" = 0.0 } },
  { label = "g2", set = { "opo.gamma_tau" = 0.002 } },
]
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        let fam = run_family(&c, &Executor::Sequential).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam[1].label.as_deref(), Some("g2"));
        assert_ne!(fam[0].meta.config_hash, fam[1].meta.config_hash);
        assert!(fam[0].reports[0].key_rate > fam[1].reports[0].key_rate);
        assert_eq!(curve_suffix("γτ=0.002"), "___0_002");
    }

    #[test]
    fn bad_point_reports_axis_value() {
        let c = cfg(&[
            "sweep.axis=chi_over_k",
            "sweep.start=0.5",
            "sweep.stop=1.5",
            "sweep.points=3",
        ]);
        let err = run_sweep(&c, None, &Executor::Sequential).unwrap_err();
        assert!(matches!(err, Error::AboveThreshold { .. }), "{err}");
    }

    #[test]
    fn spectrum_rows() {
        let c = cfg(&["spectrum.points=5"]);
        let s = run_spectrum(&c, &Executor::Sequential).unwrap();
        assert_eq!(s.rows.len(), 5);
        // even in ω
        assert_eq!(s.rows[0], s.rows[4]);
        let text = s.to_csv(6);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("omega_rad_s,seed_noise,"));
    }
}

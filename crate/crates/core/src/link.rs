//! Central-node insertion loss, fiber channels, waveshaper and detectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{check_physicality, TwoModeCovariance};

/// Default fiber attenuation magnitude (dB/km).
pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;

/// Converts a gain in dB (losses negative) to a linear transmittance.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(t: f64) -> f64 {
    10.0 * t.log10()
}

/// Everything between the source output and the users' detectors, plus the
/// reconciliation efficiency. Transmittances are linear.
///
/// Excess noise `eps1`/`eps2` is referred to the channel input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Central-node transmittance of mode A₀.
    pub eta1: f64,
    /// Central-node transmittance of mode B₀.
    pub eta2: f64,
    pub l1_km: f64,
    pub l2_km: f64,
    pub alpha_db_per_km: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Detector efficiency `η`, shared by both users.
    pub eta_det: f64,
    /// Detector electronic noise `υ_el` (SNU), shared by both users.
    pub v_el: f64,
    /// Receiver waveshaper transmittance `η_D`.
    pub eta_ws: f64,
    /// Reconciliation efficiency `β`.
    pub beta: f64,
}

impl Default for LinkParams {
    /// Central-node loss 0.5 dB per mode, η = 0.9, υ_el = 0.01, ε = 0.01,
    /// waveshaper 0.2 dB, β = 0.98, back-to-back fibers.
    fn default() -> Self {
        Self {
            eta1: db_to_linear(-0.5),
            eta2: db_to_linear(-0.5),
            l1_km: 0.0,
            l2_km: 0.0,
            alpha_db_per_km: DEFAULT_ALPHA_DB_PER_KM,
            eps1: 0.01,
            eps2: 0.01,
            eta_det: 0.9,
            v_el: 0.01,
            eta_ws: db_to_linear(-0.2),
            beta: 0.98,
        }
    }
}

impl LinkParams {
    /// Lossless components and detectors with ε = 0.01 and β = 0.98.
    pub fn ideal() -> Self {
        Self {
            eta1: 1.0,
            eta2: 1.0,
            eta_det: 1.0,
            v_el: 0.0,
            eta_ws: 1.0,
            ..Self::default()
        }
    }

    pub fn with_distances(self, l1_km: f64, l2_km: f64) -> Self {
        Self { l1_km, l2_km, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta_det", self.eta_det),
            ("eta_ws", self.eta_ws),
            ("beta", self.beta),
        ] {
            check_unit_interval(name, v)?;
        }
        for (name, v) in [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("v_el", self.v_el),
            ("l1_km", self.l1_km),
            ("l2_km", self.l2_km),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("link.{name} must be >= 0, got {v}")));
            }
        }
        if !(self.alpha_db_per_km > 0.0) || !self.alpha_db_per_km.is_finite() {
            return Err(Error::Domain(format!(
                "link.alpha_db_per_km must be > 0, got {}",
                self.alpha_db_per_km
            )));
        }
        Ok(())
    }

    pub fn t1(&self) -> Result<f64> {
        fiber_transmittance(self.l1_km, self.alpha_db_per_km)
    }

    pub fn t2(&self) -> Result<f64> {
        fiber_transmittance(self.l2_km, self.alpha_db_per_km)
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("link.{name} must be in (0, 1], got {v}")))
    }
}

/// Pure-loss channels on each mode: `V → ηV + 1 − η`, `C → √(η₁η₂)C`.
pub fn apply_source_loss(cm: &TwoModeCovariance, eta1: f64, eta2: f64) -> Result<TwoModeCovariance> {
    check_unit_interval("eta1", eta1)?;
    check_unit_interval("eta2", eta2)?;
    let scale = (eta1 * eta2).sqrt();
    TwoModeCovariance::new(
        eta1 * cm.a + 1.0 - eta1,
        eta2 * cm.b + 1.0 - eta2,
        scale * cm.c_x,
        scale * cm.c_p,
    )
}

/// `T = 10^(−αL/10)` with `α` a positive attenuation magnitude.
pub fn fiber_transmittance(length_km: f64, alpha_db_per_km: f64) -> Result<f64> {
    if !(length_km >= 0.0) || !length_km.is_finite() {
        return Err(Error::Domain(format!(
            "fiber length must be >= 0, got {length_km}"
        )));
    }
    if !(alpha_db_per_km > 0.0) {
        return Err(Error::Domain(format!(
            "attenuation must be > 0 dB/km, got {alpha_db_per_km}"
        )));
    }
    Ok(db_to_linear(-alpha_db_per_km * length_km))
}

/// Covariance at the detectors after fiber, waveshaper and detector.
///
/// Uses `(1 − T)W = 1 − T + Tε` so that `T = 1` needs no special case:
/// `a = η_Dη[T₁V₁ + T₁ε₁ + 1 − T₁] + 1 − η_Dη + υ_el`,
/// `c = η_Dη√(T₁T₂)·C₁₂`.
pub fn received_covariance(cm_out: &TwoModeCovariance, link: &LinkParams) -> Result<TwoModeCovariance> {
    link.validate()?;
    let (t1, t2) = (link.t1()?, link.t2()?);
    let det = link.eta_ws * link.eta_det;
    let arm = |v: f64, t: f64, eps: f64| det * (t * v + t * eps + 1.0 - t) + 1.0 - det + link.v_el;
    let scale = det * (t1 * t2).sqrt();
    let cm = TwoModeCovariance::new(
        arm(cm_out.a, t1, link.eps1),
        arm(cm_out.b, t2, link.eps2),
        scale * cm_out.c_x,
        scale * cm_out.c_p,
    )?;
    let report = check_physicality(&cm);
    if !report.physical {
        return Err(Error::NonPhysical(format!(
            "received covariance has min symplectic eigenvalue {:.9}",
            report.min_nu
        )));
    }
    Ok(cm)
}

/// Source covariance → central-node loss → channel and detection.
pub fn propagate(source: &TwoModeCovariance, link: &LinkParams) -> Result<TwoModeCovariance> {
    let emitted = apply_source_loss(source, link.eta1, link.eta2)?;
    received_covariance(&emitted, link)
}

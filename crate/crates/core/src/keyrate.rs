//! Asymptotic key rate for direct reconciliation with user A (heterodyne) as
//! the reference and user B measuring homodyne.
//!
//! `K = β·I_AB − χ_AE`, in bits per pulse. No finite-size corrections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    bosonic_entropy, conditional_eigenvalues_after_het_a, symplectic_eigenvalues, DeltaConvention,
    TwoModeCovariance, PHYSICALITY_TOLERANCE,
};

/// Flat record with stable field names, serialized as one JSON object or CSV
/// row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(rename = "i_ab_bits")]
    pub i_ab: f64,
    #[serde(rename = "chi_ae_bits")]
    pub chi_ae: f64,
    #[serde(rename = "key_rate_bits")]
    pub key_rate: f64,
    pub beta: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nu4: f64,
    pub convention: DeltaConvention,
    /// `key_rate > 0`.
    pub secure: bool,
    /// Set when a sub-unity eigenvalue was clamped before entering `G`
    /// (only possible under the `paper` convention).
    pub clamped: bool,
}

impl KeyRateReport {
    pub const CSV_FIELDS: [&'static str; 15] = [
        "a",
        "b",
        "c",
        "i_ab_bits",
        "chi_ae_bits",
        "key_rate_bits",
        "beta",
        "nu1",
        "nu2",
        "nu3",
        "nu4",
        "convention",
        "secure",
        "clamped",
        "regime",
    ];

    /// Always `"asymptotic"`.
    pub fn regime(&self) -> &'static str {
        "asymptotic"
    }

    pub fn nus(&self) -> [f64; 4] {
        [self.nu1, self.nu2, self.nu3, self.nu4]
    }

    /// CSV cells in [`Self::CSV_FIELDS`] order, floats in scientific notation
    /// with `precision` digits after the point.
    pub fn csv_cells(&self, precision: usize) -> Vec<String> {
        let f = |v: f64| format!("{v:.precision$e}");
        vec![
            f(self.a),
            f(self.b),
            f(self.c),
            f(self.i_ab),
            f(self.chi_ae),
            f(self.key_rate),
            f(self.beta),
            f(self.nu1),
            f(self.nu2),
            f(self.nu3),
            f(self.nu4),
            self.convention.to_string(),
            self.secure.to_string(),
            self.clamped.to_string(),
            self.regime().to_string(),
        ]
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["regime"] = serde_json::Value::from(self.regime());
        v
    }
}

/// `I_AB = ½ log₂[(a + 1) / (a + 1 − c²/b)]`.
pub fn mutual_information(cm: &TwoModeCovariance) -> Result<f64> {
    let denom = cm.a + 1.0 - cm.c_squared() / cm.b;
    if !(denom > 0.0) {
        return Err(Error::NonPhysical(format!(
            "a + 1 - c²/b = {denom:.3e} is not positive"
        )));
    }
    Ok(0.5 * ((cm.a + 1.0) / denom).log2())
}

/// Holevo bound together with the four eigenvalues it was computed from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolevoBound {
    pub chi_ae: f64,
    pub nus: [f64; 4],
    pub clamped: bool,
}

/// `χ_AE = G((ν₁−1)/2) + G((ν₂−1)/2) − G((ν₃−1)/2) − G((ν₄−1)/2)`.
pub fn holevo_bound(cm: &TwoModeCovariance, convention: DeltaConvention) -> Result<HolevoBound> {
    let joint = symplectic_eigenvalues(cm, convention)?;
    let cond = conditional_eigenvalues_after_het_a(cm, convention)?;
    let nus = [joint.first, joint.second, cond.first, cond.second];

    if convention == DeltaConvention::Standard {
        if let Some(nu) = nus[2..].iter().find(|&&nu| nu < 1.0 - PHYSICALITY_TOLERANCE) {
            return Err(Error::NonPhysical(format!(
                "conditional symplectic eigenvalue {nu:.9} < 1"
            )));
        }
    }

    let mut clamped = false;
    let mut g = |nu: f64| {
        let x = 0.5 * (nu - 1.0);
        if x < 0.0 {
            clamped |= x < -1e-9;
            bosonic_entropy(0.0)
        } else {
            bosonic_entropy(x)
        }
    };
    let chi_ae = g(nus[0])? + g(nus[1])? - g(nus[2])? - g(nus[3])?;
    Ok(HolevoBound { chi_ae, nus, clamped })
}

/// Full key-rate evaluation for one received state. A negative rate is a
/// valid result and is reported with `secure = false`.
pub fn key_rate(cm: &TwoModeCovariance, beta: f64, convention: DeltaConvention) -> Result<KeyRateReport> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must be in [0, 1], got {beta}")));
    }
    let i_ab = mutual_information(cm)?;
    let holevo = holevo_bound(cm, convention)?;
    let key_rate = beta * i_ab - holevo.chi_ae;
    let [nu1, nu2, nu3, nu4] = holevo.nus;
    Ok(KeyRateReport {
        a: cm.a,
        b: cm.b,
        c: cm.c(),
        i_ab,
        chi_ae: holevo.chi_ae,
        key_rate,
        beta,
        nu1,
        nu2,
        nu3,
        nu4,
        convention,
        secure: key_rate > 0.0,
        clamped: holevo.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cm(a: f64, b: f64, c: f64) -> TwoModeCovariance {
        TwoModeCovariance::sigma_z(a, b, c).unwrap()
    }

    #[test]
    fn uncorrelated_modes_share_nothing() {
        assert_eq!(mutual_information(&cm(5.0, 2.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn mutual_information_at_rounded_point() {
        assert_relative_eq!(
            mutual_information(&cm(24.521, 24.521, -24.491)).unwrap(),
            2.294_799_322_605_522,
            max_relative = 1e-12
        );
    }

    #[test]
    fn stronger_correlation_more_information() {
        let weak = mutual_information(&cm(10.0, 10.0, 4.0)).unwrap();
        let strong = mutual_information(&cm(10.0, 10.0, 8.0)).unwrap();
        assert!(strong > weak);
    }

    #[test]
    fn mutual_information_rejects_impossible_state() {
        assert!(mutual_information(&cm(1.0, 1.0, 2.0)).is_err());
    }

    #[test]
    fn pure_tmsv_leaks_nothing() {
        for v in [1.0, 2.0, 10.0, 25.0] {
            let h = holevo_bound(
                &TwoModeCovariance::two_mode_squeezed_vacuum(v).unwrap(),
                DeltaConvention::Standard,
            )
            .unwrap();
            assert!(h.chi_ae.abs() < 1e-6, "V = {v}: χ = {}", h.chi_ae);
        }
    }

    #[test]
    fn holevo_at_rounded_point() {
        let h = holevo_bound(&cm(24.521, 24.521, -24.491), DeltaConvention::Standard).unwrap();
        assert_relative_eq!(h.chi_ae, 0.462_697_483_215_472_8, max_relative = 1e-9);
        assert_relative_eq!(h.nus[0], 1.212_584_017_707_662, max_relative = 1e-12);
        assert_relative_eq!(h.nus[1], 1.212_584_017_707_662, max_relative = 1e-12);
        assert_relative_eq!(h.nus[3], 1.009_173_083_416_239_5, max_relative = 1e-9);
    }

    #[test]
    fn uncorrelated_symmetric_state_values() {
        // (ν₁, ν₂) = (V, V), (ν₃, ν₄) = (V, √V), so χ = G((V−1)/2) − G((√V−1)/2) > 0.
        let frozen = [
            (1.5, 0.377_123_131_188_572_9),
            (3.0, 0.854_578_902_665_269_9),
            (10.0, 1.683_355_067_322_487_5),
        ];
        for (v, expect) in frozen {
            let h = holevo_bound(&cm(v, v, 0.0), DeltaConvention::Standard).unwrap();
            assert_relative_eq!(h.chi_ae, expect, max_relative = 1e-9);
            assert_relative_eq!(h.nus[2], v, max_relative = 1e-12);
            assert_relative_eq!(h.nus[3], v.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn rounded_point_key_rate() {
        let r = key_rate(&cm(24.521, 24.521, -24.491), 0.98, DeltaConvention::Standard).unwrap();
        assert_relative_eq!(r.key_rate, 1.786_205_852_937_938_7, max_relative = 1e-9);
        assert!(r.secure);
        assert_eq!(r.key_rate, 0.98 * r.i_ab - r.chi_ae);
    }

    #[test]
    fn zero_efficiency_gives_no_key() {
        let r = key_rate(&cm(20.0, 18.0, -17.0), 0.0, DeltaConvention::Standard).unwrap();
        assert_eq!(r.key_rate, -r.chi_ae);
        assert!(r.key_rate <= 0.0);
        assert!(!r.secure);
    }

    #[test]
    fn vacuum_report() {
        let r = key_rate(&TwoModeCovariance::vacuum(), 0.95, DeltaConvention::Standard).unwrap();
        assert_eq!((r.i_ab, r.chi_ae, r.key_rate), (0.0, 0.0, 0.0));
        assert!(!r.secure);
    }

    #[test]
    fn beta_out_of_range() {
        assert!(key_rate(&TwoModeCovariance::vacuum(), 1.2, DeltaConvention::Standard).is_err());
        assert!(key_rate(&TwoModeCovariance::vacuum(), -0.1, DeltaConvention::Standard).is_err());
    }

    #[test]
    fn paper_convention_clamps_and_flags() {
        let r = key_rate(
            &TwoModeCovariance::two_mode_squeezed_vacuum(2.0).unwrap(),
            0.98,
            DeltaConvention::Paper,
        )
        .unwrap();
        assert!(r.clamped);
        assert!(r.nu2 < 1.0);
        let s = key_rate(
            &TwoModeCovariance::two_mode_squeezed_vacuum(2.0).unwrap(),
            0.98,
            DeltaConvention::Standard,
        )
        .unwrap();
        assert!(!s.clamped);
        assert_ne!(r.key_rate, s.key_rate);
    }

    #[test]
    fn conventions_agree_without_correlation() {
        let s = key_rate(&cm(4.0, 3.0, 0.0), 0.9, DeltaConvention::Standard).unwrap();
        let p = key_rate(&cm(4.0, 3.0, 0.0), 0.9, DeltaConvention::Paper).unwrap();
        assert_eq!(s.key_rate, p.key_rate);
        assert_eq!(s.nus(), p.nus());
    }

    #[test]
    fn json_field_names_are_stable() {
        let r = key_rate(&cm(24.521, 24.521, -24.491), 0.98, DeltaConvention::Standard).unwrap();
        let v = r.to_json();
        for key in [
            "i_ab_bits",
            "chi_ae_bits",
            "key_rate_bits",
            "nu1",
            "nu2",
            "nu3",
            "nu4",
            "convention",
            "secure",
            "regime",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["convention"], "standard");
        assert_eq!(v["regime"], "asymptotic");
        assert_eq!(r.csv_cells(9).len(), KeyRateReport::CSV_FIELDS.len());
    }

    fn physical_state() -> impl Strategy<Value = TwoModeCovariance> {
        (
            1.0f64..50.0,
            0.001f64..1.0,
            0.001f64..1.0,
            0.0f64..0.3,
            0.0f64..0.3,
        )
            .prop_map(|(v, e1, e2, x1, x2)| {
                let a = e1 * v + 1.0 - e1 + x1;
                let b = e2 * v + 1.0 - e2 + x2;
                let c = -(e1 * e2 * (v * v - 1.0)).sqrt();
                TwoModeCovariance::sigma_z(a, b, c).unwrap()
            })
    }

    proptest! {
        #[test]
        fn report_is_sign_invariant(state in physical_state(), beta in 0.5f64..1.0) {
            let plus = key_rate(&state, beta, DeltaConvention::Standard).unwrap();
            let minus = key_rate(&state.with_negated_correlation(), beta, DeltaConvention::Standard).unwrap();
            prop_assert_eq!(plus.key_rate, minus.key_rate);
            prop_assert_eq!(plus.nus(), minus.nus());
            prop_assert_eq!(plus.i_ab, minus.i_ab);
        }

        #[test]
        fn holevo_bound_is_non_negative(state in physical_state()) {
            let h = holevo_bound(&state, DeltaConvention::Standard).unwrap();
            prop_assert!(h.chi_ae >= -1e-9);
        }

        #[test]
        fn conventions_diverge_on_correlated_states(state in physical_state()) {
            prop_assume!(state.c_squared() > 1e-3);
            let s = symplectic_eigenvalues(&state, DeltaConvention::Standard).unwrap();
            let p = symplectic_eigenvalues(&state, DeltaConvention::Paper).unwrap();
            prop_assert!((s.first - p.first).abs() + (s.second - p.second).abs() > 1e-9);
        }
    }
}

//! Below-threshold type-II NOPA model.
//!
//! Rates are carried per round trip (`kτ`, `γτ`) together with the free
//! spectral range `Ω = 1/τ`. The covariance of a comb tooth depends only on
//! the ratios between `k`, `γ` and `χ`; absolute rates enter the cavity-length
//! jitter terms through `k²τ⁴`.
//!
//! Frequencies: `Ω` is an ordinary frequency in Hz, the analysis frequency `ω`
//! is angular (rad/s), and tooth `n` sits at `ω = 2πnΩ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{check_physicality, TwoModeCovariance};

/// Speed of light used by the cavity design rules (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Envelope constant of the technical-noise spectra, `4π × 10⁷`.
pub const DEFAULT_ENVELOPE_SCALE: f64 = 4.0 * PI * 1e7;

/// Default sideband cleanliness threshold for certifying a tooth noise-free.
pub const DEFAULT_CLEAN_THRESHOLD: f64 = 1e-6;

/// Cavity parameters of the OPO.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpoParams {
    /// Output-coupler loss per round trip, `kτ`.
    pub k_tau: f64,
    /// Additional intracavity loss per round trip, `γτ`.
    pub gamma_tau: f64,
    /// Parametric gain relative to the coupler rate, `χ/k`.
    pub chi_over_k: f64,
    /// Free spectral range `Ω` (Hz).
    pub fsr_hz: f64,
}

impl OpoParams {
    pub fn new(k_tau: f64, gamma_tau: f64, chi_over_k: f64, fsr_hz: f64) -> Result<Self> {
        if !(k_tau > 0.0 && k_tau < 1.0) {
            return Err(Error::Domain(format!("k_tau must lie in (0, 1), got {k_tau}")));
        }
        if !(gamma_tau >= 0.0) || !gamma_tau.is_finite() {
            return Err(Error::Domain(format!("gamma_tau must be >= 0, got {gamma_tau}")));
        }
        if !(chi_over_k >= 0.0) || !chi_over_k.is_finite() {
            return Err(Error::Domain(format!(
                "chi_over_k must be >= 0, got {chi_over_k}"
            )));
        }
        if !(fsr_hz > 0.0) || !fsr_hz.is_finite() {
            return Err(Error::Domain(format!("fsr_hz must be > 0, got {fsr_hz}")));
        }
        Ok(Self {
            k_tau,
            gamma_tau,
            chi_over_k,
            fsr_hz,
        })
    }

    /// Same cavity with total loss `k₁τ = ratio · kτ`.
    pub fn with_total_loss_ratio(self, ratio: f64) -> Result<Self> {
        if !(ratio >= 1.0) {
            return Err(Error::Domain(format!("T_tot / T_k must be >= 1, got {ratio}")));
        }
        Self::new(
            self.k_tau,
            (ratio - 1.0) * self.k_tau,
            self.chi_over_k,
            self.fsr_hz,
        )
    }

    /// Round-trip time `τ = 1/Ω` (s).
    pub fn tau(&self) -> f64 {
        1.0 / self.fsr_hz
    }

    pub fn k(&self) -> f64 {
        self.k_tau * self.fsr_hz
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_tau * self.fsr_hz
    }

    pub fn k1(&self) -> f64 {
        self.k() + self.gamma()
    }

    pub fn chi(&self) -> f64 {
        self.chi_over_k * self.k()
    }

    /// `k₁τ / kτ`.
    pub fn total_loss_ratio(&self) -> f64 {
        (self.k_tau + self.gamma_tau) / self.k_tau
    }

    fn below_threshold(&self) -> Result<()> {
        let (chi, k1) = (self.chi(), self.k1());
        if chi >= k1 {
            Err(Error::AboveThreshold { chi, k1 })
        } else {
            Ok(())
        }
    }
}

/// Spectral model of the seed's technical noise. All four spectra share the
/// Gaussian envelope `exp(−ω²/envelope_scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedNoiseModel {
    /// Peak seed excess noise above shot noise (SNU).
    pub n_b: f64,
    /// Peak squared mean quadrature amplitude `⟨X⟩² = ⟨P⟩²` (SNU).
    pub n_a: f64,
    /// Peak standard deviation of the cavity detuning jitter (rad/s).
    pub jitter_peak: f64,
    /// Envelope constant (rad²/s²).
    pub envelope_scale: f64,
}

impl Default for SeedNoiseModel {
    fn default() -> Self {
        Self {
            n_b: 1.0,
            n_a: 1.0,
            jitter_peak: 2.0 * PI * 1e7,
            envelope_scale: DEFAULT_ENVELOPE_SCALE,
        }
    }
}

impl SeedNoiseModel {
    /// Noiseless seed and rigid cavity.
    pub fn quiet() -> Self {
        Self {
            n_b: 0.0,
            n_a: 0.0,
            jitter_peak: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_b", self.n_b),
            ("n_a", self.n_a),
            ("jitter_peak", self.jitter_peak),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("seed.{name} must be >= 0, got {v}")));
            }
        }
        if !(self.envelope_scale > 0.0) || !self.envelope_scale.is_finite() {
            return Err(Error::Domain(format!(
                "seed.envelope_scale must be > 0, got {}",
                self.envelope_scale
            )));
        }
        Ok(())
    }

    pub fn envelope(&self, omega: f64) -> f64 {
        (-omega * omega / self.envelope_scale).exp()
    }

    /// Seed excess noise `N^{b_in}(ω)`, identical for signal and idler.
    pub fn excess_noise(&self, omega: f64) -> f64 {
        self.n_b * self.envelope(omega)
    }

    /// Mean input quadrature `⟨X^{b_in}⟩ = ⟨P^{b_in}⟩` (positive root).
    pub fn mean_quadrature(&self, omega: f64) -> f64 {
        (self.n_a * self.envelope(omega)).sqrt()
    }

    /// Detuning jitter standard deviation `σ_δΔ(ω)`.
    pub fn jitter_std(&self, omega: f64) -> f64 {
        self.jitter_peak * self.envelope(omega)
    }
}

/// Technical-noise contributions to the output covariance at one analysis
/// frequency (SNU).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseBreakdown {
    /// `Ñ^{in}`: seed excess noise on each quadrature variance.
    pub seed_noise: f64,
    /// `Ñ^{δΔ,x}`: jitter noise on the X variance.
    pub jitter_noise_x: f64,
    /// `Ñ^{δΔ,p}`: jitter noise on the P variance.
    pub jitter_noise_p: f64,
    /// `C̃^{in,x}`: added X–X covariance.
    pub cov_seed_x: f64,
    /// `C̃^{in,p}`: added P–P covariance.
    pub cov_seed_p: f64,
    /// `C̃^{xp}_{δΔ}`: X_s–P_i covariance.
    pub cov_xp: f64,
    /// `C̃^{px}_{δΔ}`: P_s–X_i covariance.
    pub cov_px: f64,
}

impl NoiseBreakdown {
    pub const FIELD_NAMES: [&'static str; 7] = [
        "seed_noise",
        "jitter_noise_x",
        "jitter_noise_p",
        "cov_seed_x",
        "cov_seed_p",
        "cov_xp",
        "cov_px",
    ];

    pub fn fields(&self) -> [f64; 7] {
        [
            self.seed_noise,
            self.jitter_noise_x,
            self.jitter_noise_p,
            self.cov_seed_x,
            self.cov_seed_p,
            self.cov_xp,
            self.cov_px,
        ]
    }

    /// Sum of absolute values of all seven contributions.
    pub fn total_magnitude(&self) -> f64 {
        self.fields().iter().map(|v| v.abs()).sum()
    }
}

/// Shared rational pieces of the resonant output covariance.
struct ResonantTerms {
    denominator: f64,
    /// `k² + χ² − γ²`
    direct_gain: f64,
}

fn resonant_terms(k: f64, gamma: f64, chi: f64) -> ResonantTerms {
    let k1 = k + gamma;
    let det = k1 * k1 - chi * chi;
    ResonantTerms {
        denominator: det * det,
        direct_gain: k * k + chi * chi - gamma * gamma,
    }
}

/// `(V₀, C₀)` for absolute rates `k`, `γ`, `χ`. Both are ratios of degree-4
/// homogeneous polynomials.
fn source_moments(k: f64, gamma: f64, chi: f64) -> (f64, f64) {
    let k1 = k + gamma;
    let t = resonant_terms(k, gamma, chi);
    let v0 = (4.0 * k * k1 * chi * chi + t.direct_gain * t.direct_gain + 4.0 * k * gamma * k1 * k1)
        / t.denominator;
    let c0 = (-4.0 * k * chi * t.direct_gain - 8.0 * k * k1 * gamma * chi) / t.denominator;
    (v0, c0)
}

/// Noise-free quadrature variance `V₀` and signal–idler X covariance `C₀` of
/// a high-frequency tooth. `C₀` is negative: X quadratures are anticorrelated.
pub fn ideal_source_moments(params: &OpoParams) -> Result<(f64, f64)> {
    params.below_threshold()?;
    Ok(source_moments(params.k(), params.gamma(), params.chi()))
}

/// Intracavity steady-state mean fields `(⟨a_s⟩, ⟨a_i⟩)` for coherent seed
/// amplitudes, zero mean detuning.
pub fn steady_state_mean(
    params: &OpoParams,
    seed_mean_s: Complex64,
    seed_mean_i: Complex64,
) -> Result<(Complex64, Complex64)> {
    params.below_threshold()?;
    let (k, k1, chi) = (params.k(), params.k1(), params.chi());
    let norm = (2.0 * k).sqrt() / (k1 * k1 - chi * chi);
    let mean = |own: Complex64, other: Complex64| (own * k1 - other.conj() * chi) * norm;
    Ok((mean(seed_mean_s, seed_mean_i), mean(seed_mean_i, seed_mean_s)))
}

/// Mean amplitude and phase quadratures of the signal and idler fields.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeans {
    pub x_s: f64,
    pub p_s: f64,
    pub x_i: f64,
    pub p_i: f64,
}

/// Mean output quadratures for given mean input quadratures:
/// `⟨X_s^out⟩ = [−2kχ⟨X_i^in⟩ + (k² + χ² − γ²)⟨X_s^in⟩] / (k₁² − χ²)`, and
/// likewise for P and with s ↔ i.
pub fn output_quadrature_mean(params: &OpoParams, input: QuadratureMeans) -> Result<QuadratureMeans> {
    params.below_threshold()?;
    let (k, gamma, chi, k1) = (params.k(), params.gamma(), params.chi(), params.k1());
    let direct = k * k + chi * chi - gamma * gamma;
    let det = k1 * k1 - chi * chi;
    let out = |own: f64, other: f64| (-2.0 * k * chi * other + direct * own) / det;
    Ok(QuadratureMeans {
        x_s: out(input.x_s, input.x_i),
        p_s: out(input.p_s, input.p_i),
        x_i: out(input.x_i, input.x_s),
        p_i: out(input.p_i, input.p_s),
    })
}

/// Technical-noise terms at angular analysis frequency `omega` (rad/s).
pub fn noise_breakdown(params: &OpoParams, seed: &SeedNoiseModel, omega: f64) -> Result<NoiseBreakdown> {
    params.below_threshold()?;
    let (k, gamma, chi) = (params.k(), params.gamma(), params.chi());
    let tau = params.tau();
    let t = resonant_terms(k, gamma, chi);

    let n_seed = seed.excess_noise(omega);
    let mean = seed.mean_quadrature(omega);
    let (x_s, x_i, p_s, p_i) = (mean, mean, mean, mean);
    let sigma = seed.jitter_std(omega);
    // 4k²τ⁴σ², written with kτ to stay well scaled.
    let jitter = 4.0 * params.k_tau * params.k_tau * (tau * sigma) * (tau * sigma);

    let seed_noise =
        (4.0 * k * k * chi * chi * n_seed + t.direct_gain * t.direct_gain * n_seed) / t.denominator;
    let seed_cov = -2.0 * k * chi * t.direct_gain * (n_seed + n_seed) / t.denominator;

    Ok(NoiseBreakdown {
        seed_noise,
        jitter_noise_x: jitter * p_s * p_s,
        jitter_noise_p: jitter * x_s * x_s,
        cov_seed_x: seed_cov - jitter * p_s * p_i,
        cov_seed_p: seed_cov - jitter * x_s * x_i,
        cov_xp: -jitter * p_s * x_i,
        cov_px: -jitter * p_i * x_s,
    })
}

/// Angular frequency of comb tooth `n`, `2πnΩ`.
pub fn tooth_omega(params: &OpoParams, comb_index: u32) -> f64 {
    2.0 * PI * f64::from(comb_index) * params.fsr_hz
}

/// Output of [`source_covariance`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    pub comb_index: u32,
    pub omega: f64,
    pub covariance: TwoModeCovariance,
    pub noise: NoiseBreakdown,
}

/// Covariance of the signal/idler pair at comb tooth `n` including technical
/// noise evaluated at `ω = 2πnΩ`.
///
/// The X and P variances differ only through the jitter terms; the larger of
/// the two is used for the symmetric `a = b`.
pub fn source_covariance(params: &OpoParams, seed: &SeedNoiseModel, comb_index: u32) -> Result<SourceState> {
    seed.validate()?;
    let (v0, c0) = ideal_source_moments(params)?;
    let omega = tooth_omega(params, comb_index);
    let noise = noise_breakdown(params, seed, omega)?;
    let variance = v0 + noise.seed_noise + noise.jitter_noise_x.max(noise.jitter_noise_p);
    let covariance =
        TwoModeCovariance::new(variance, variance, c0 + noise.cov_seed_x, -c0 + noise.cov_seed_p)?;
    let report = check_physicality(&covariance);
    if !report.physical {
        return Err(Error::NonPhysical(format!(
            "source covariance at tooth {comb_index} has min symplectic eigenvalue {:.9}",
            report.min_nu
        )));
    }
    Ok(SourceState {
        comb_index,
        omega,
        covariance,
        noise,
    })
}

/// Ratio of total technical noise at tooth `n` to its value at `ω = 0`.
/// Tooth 0 is 1 by definition; with no technical noise at all every other
/// tooth is 0.
pub fn sideband_cleanliness(params: &OpoParams, seed: &SeedNoiseModel, comb_index: u32) -> Result<f64> {
    if comb_index == 0 {
        return Ok(1.0);
    }
    let at_carrier = noise_breakdown(params, seed, 0.0)?.total_magnitude();
    if at_carrier == 0.0 {
        return Ok(0.0);
    }
    let at_tooth = noise_breakdown(params, seed, tooth_omega(params, comb_index))?.total_magnitude();
    Ok(at_tooth / at_carrier)
}

fn positive_length(name: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("{name} must be > 0, got {value}")))
    }
}

/// `Ω = c / 2L_cav`.
pub fn fsr_from_cavity(cavity_length_m: f64) -> Result<f64> {
    Ok(SPEED_OF_LIGHT / (2.0 * positive_length("cavity length", cavity_length_m)?))
}

pub fn cavity_length_for_fsr(fsr_hz: f64) -> Result<f64> {
    Ok(SPEED_OF_LIGHT / (2.0 * positive_length("free spectral range", fsr_hz)?))
}

/// Down-conversion bandwidth estimate `10c / L_cry`.
pub fn bandwidth_from_crystal(crystal_length_m: f64) -> Result<f64> {
    Ok(10.0 * SPEED_OF_LIGHT / positive_length("crystal length", crystal_length_m)?)
}

pub fn crystal_length_for_bandwidth(bandwidth_hz: f64) -> Result<f64> {
    Ok(10.0 * SPEED_OF_LIGHT / positive_length("bandwidth", bandwidth_hz)?)
}

/// Either side of the cavity design rules; whichever fields are given are
/// used to fill in the rest.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignRequest {
    pub cavity_length_m: Option<f64>,
    pub crystal_length_m: Option<f64>,
    pub target_fsr_hz: Option<f64>,
    pub target_bandwidth_hz: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityDesign {
    pub cavity_length_m: Option<f64>,
    pub fsr_hz: Option<f64>,
    pub crystal_length_m: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    /// Largest tooth index inside the down-conversion bandwidth,
    /// `⌊B / 2Ω⌋`, when both are known.
    pub max_tooth_index: Option<u64>,
}

impl CavityDesign {
    pub fn solve(req: &DesignRequest) -> Result<Self> {
        let (cavity_length_m, fsr_hz) = match (req.cavity_length_m, req.target_fsr_hz) {
            (Some(_), Some(_)) => {
                return Err(Error::Domain(
                    "give either a cavity length or a target FSR, not both".into(),
                ))
            }
            (Some(l), None) => (Some(l), Some(fsr_from_cavity(l)?)),
            (None, Some(f)) => (Some(cavity_length_for_fsr(f)?), Some(f)),
            (None, None) => (None, None),
        };
        let (crystal_length_m, bandwidth_hz) = match (req.crystal_length_m, req.target_bandwidth_hz) {
            (Some(_), Some(_)) => {
                return Err(Error::Domain(
                    "give either a crystal length or a target bandwidth, not both".into(),
                ))
            }
            (Some(l), None) => (Some(l), Some(bandwidth_from_crystal(l)?)),
            (None, Some(b)) => (Some(crystal_length_for_bandwidth(b)?), Some(b)),
            (None, None) => (None, None),
        };
        if fsr_hz.is_none() && bandwidth_hz.is_none() {
            return Err(Error::Domain(
                "nothing to design: no lengths or targets given".into(),
            ));
        }
        let max_tooth_index = match (fsr_hz, bandwidth_hz) {
            (Some(f), Some(b)) => Some((b / (2.0 * f)).floor() as u64),
            _ => None,
        };
        Ok(Self {
            cavity_length_m,
            fsr_hz,
            crystal_length_m,
            bandwidth_hz,
            max_tooth_index,
        })
    }
}

//! Two-mode Gaussian state primitives.
//!
//! Every state handled here has the block form
//!
//! ```text
//!     [ a·I            diag(c_x, c_p) ]
//!     [ diag(c_x, c_p) b·I            ]
//! ```
//!
//! with `c_p = -c_x` for states produced by the source and the link model
//! (the `C σ_z` structure). Symplectic quantities depend only on `c² = c_x²`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance applied to the radicals of the eigenvalue formulas, relative to
/// the magnitude of the squared term they are computed from.
pub const RADICAL_TOLERANCE: f64 = 1e-9;

/// Symplectic eigenvalues below `1 - PHYSICALITY_TOLERANCE` are unphysical.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-6;

/// Which expression is used for `Δ` in the symplectic eigenvalue formula.
///
/// `Standard` is `a² + b² − 2c²`, under which a pure two-mode squeezed vacuum
/// has both eigenvalues equal to one. `Paper` uses `a² + b² − c²`. It gives
/// sub-unity eigenvalues on pure states, which are reported rather than
/// rejected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaConvention {
    #[default]
    Standard,
    Paper,
}

impl DeltaConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            DeltaConvention::Standard => "standard",
            DeltaConvention::Paper => "paper",
        }
    }
}

impl fmt::Display for DeltaConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeltaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(DeltaConvention::Standard),
            "paper" => Ok(DeltaConvention::Paper),
            other => Err(Error::Config(format!(
                "convention must be `standard` or `paper`, got `{other}`"
            ))),
        }
    }
}

/// Covariance matrix of a two-mode Gaussian state in shot-noise units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoModeCovariance {
    /// Quadrature variance of mode A.
    pub a: f64,
    /// Quadrature variance of mode B.
    pub b: f64,
    /// X–X covariance.
    pub c_x: f64,
    /// P–P covariance.
    pub c_p: f64,
}

impl TwoModeCovariance {
    /// Builds a matrix from its four entries. Only finiteness and positive
    /// variances are enforced; physicality is a separate check.
    pub fn new(a: f64, b: f64, c_x: f64, c_p: f64) -> Result<Self> {
        if ![a, b, c_x, c_p].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!(
                "covariance entries must be finite, got a={a}, b={b}, c_x={c_x}, c_p={c_p}"
            )));
        }
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::Domain(format!(
                "quadrature variances must be positive, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b, c_x, c_p })
    }

    /// A `σ_z`-structured matrix: `c_x = c`, `c_p = −c`.
    pub fn sigma_z(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(a, b, c, -c)
    }

    pub fn vacuum() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c_x: 0.0,
            c_p: 0.0,
        }
    }

    /// Pure two-mode squeezed vacuum with quadrature variance `v ≥ 1`.
    pub fn two_mode_squeezed_vacuum(v: f64) -> Result<Self> {
        if !(v >= 1.0) {
            return Err(Error::Domain(format!("TMSV variance must be >= 1, got {v}")));
        }
        Self::sigma_z(v, v, (v * v - 1.0).sqrt())
    }

    /// The correlation `c` that enters every symplectic formula.
    pub fn c(&self) -> f64 {
        self.c_x
    }

    pub fn c_squared(&self) -> f64 {
        self.c_x * self.c_x
    }

    /// `D = ab − c²`, the square root of the determinant.
    pub fn d(&self) -> f64 {
        self.a * self.b - self.c_squared()
    }

    pub fn delta(&self, convention: DeltaConvention) -> f64 {
        let c2 = self.c_squared();
        match convention {
            DeltaConvention::Standard => self.a * self.a + self.b * self.b - 2.0 * c2,
            DeltaConvention::Paper => self.a * self.a + self.b * self.b - c2,
        }
    }

    /// Whether `c_p = −c_x` holds to relative precision `1e-9`.
    pub fn is_sigma_z_structured(&self) -> bool {
        (self.c_p + self.c_x).abs() <= 1e-9 * self.c_x.abs().max(1.0)
    }

    /// Same matrix with the correlation sign flipped.
    pub fn with_negated_correlation(&self) -> Self {
        Self {
            c_x: -self.c_x,
            c_p: -self.c_p,
            ..*self
        }
    }
}

/// A pair of symplectic eigenvalues ordered `first ≥ second`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymplecticPair {
    pub first: f64,
    pub second: f64,
}

/// `Δ² − 4D²` evaluated in factored form, `(Δ − 2D)(Δ + 2D)`, so that the
/// symmetric case `a = b` gives exactly zero under the standard convention.
fn eigen_radical(cm: &TwoModeCovariance, convention: DeltaConvention) -> f64 {
    let (a, b, c2) = (cm.a, cm.b, cm.c_squared());
    let diff = a - b;
    let sum = a + b;
    match convention {
        DeltaConvention::Standard => diff * diff * (sum * sum - 4.0 * c2),
        DeltaConvention::Paper => (diff * diff + c2) * (sum * sum - 3.0 * c2),
    }
}

fn clamp_radical(value: f64, scale: f64, what: &str) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -RADICAL_TOLERANCE * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NonPhysical(format!(
            "{what} radical is negative ({value:.3e})"
        )))
    }
}

/// Solves `ν² = ½[s ± √r]` for a pair whose product of squares is `p`.
fn pair_from_quadratic(sum: f64, radical: f64, product: f64, what: &str) -> Result<SymplecticPair> {
    let first_sq = 0.5 * (sum + radical.sqrt());
    if !(first_sq > 0.0) || product < 0.0 {
        return Err(Error::NonPhysical(format!(
            "{what} eigenvalues are not real and positive (ν₁² = {first_sq:.3e}, product = {product:.3e})"
        )));
    }
    let first = first_sq.sqrt();
    // ν₁²ν₂² = product; dividing avoids cancellation in ½[s − √r].
    let second = product.sqrt() / first;
    Ok(SymplecticPair { first, second })
}

/// Symplectic eigenvalues `ν₁ ≥ ν₂` of the two-mode matrix.
pub fn symplectic_eigenvalues(cm: &TwoModeCovariance, convention: DeltaConvention) -> Result<SymplecticPair> {
    let delta = cm.delta(convention);
    let d = cm.d();
    let radical = clamp_radical(eigen_radical(cm, convention), delta * delta, "Δ² − 4D²")?;
    let pair = pair_from_quadratic(delta, radical, d * d, "symplectic")?;
    if convention == DeltaConvention::Standard && pair.second < 1.0 - PHYSICALITY_TOLERANCE {
        return Err(Error::NonPhysical(format!(
            "smallest symplectic eigenvalue {:.9} < 1",
            pair.second
        )));
    }
    Ok(pair)
}

/// Eigenvalues `ν₃ ≥ ν₄` entering Eve's conditional entropy after user A's
/// heterodyne measurement:
/// `𝔸 = (a + bD + Δ)/(a + 1)`, `𝔹 = D(b + D)/(a + 1)`,
/// `ν²₃,₄ = ½[𝔸 ± √(𝔸² − 4𝔹)]`.
pub fn conditional_eigenvalues_after_het_a(
    cm: &TwoModeCovariance,
    convention: DeltaConvention,
) -> Result<SymplecticPair> {
    let delta = cm.delta(convention);
    let d = cm.d();
    let (a, b) = (cm.a, cm.b);
    let big_a = (a + b * d + delta) / (a + 1.0);
    let big_b = d * (b + d) / (a + 1.0);
    let radical = clamp_radical(big_a * big_a - 4.0 * big_b, big_a * big_a, "𝔸² − 4𝔹")?;
    pair_from_quadratic(big_a, radical, big_b, "conditional")
}

/// Bosonic thermal entropy in bits:
/// `G(x) = (x + 1) log₂(x + 1) − x log₂ x`, with `G(0) = 0`.
pub fn bosonic_entropy(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("G(x) requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// Diagnostic summary returned by [`check_physicality`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    /// Smallest symplectic eigenvalue (standard convention), 0 when the
    /// eigenvalues are not real.
    pub min_nu: f64,
    /// `|D − 1|`, zero for pure states.
    pub purity_defect: f64,
    /// Whether `c_p = −c_x`.
    pub sigma_z_structured: bool,
    /// `min_nu ≥ 1 − 1e-6`.
    pub physical: bool,
}

/// Never fails; reports how far the matrix is from the physical region.
pub fn check_physicality(cm: &TwoModeCovariance) -> PhysicalityReport {
    let delta = cm.delta(DeltaConvention::Standard);
    let d = cm.d();
    let radical = eigen_radical(cm, DeltaConvention::Standard).max(0.0);
    let first_sq = 0.5 * (delta + radical.sqrt());
    let min_nu = if d <= 0.0 || !(first_sq > 0.0) {
        0.0
    } else {
        d / first_sq.sqrt()
    };
    PhysicalityReport {
        min_nu,
        purity_defect: (d - 1.0).abs(),
        sigma_z_structured: cm.is_sigma_z_structured(),
        physical: min_nu.is_finite() && min_nu >= 1.0 - PHYSICALITY_TOLERANCE,
    }
}

//! Width dynamics of a Gaussian pointer state.
//!
//! With `psi ~ exp(-a (x - xbar)^2 + i pbar x / hbar)` the collapse equation
//! keeps the state Gaussian. Writing the Ito equation for `ln psi` (the
//! second-order noise term doubles the quadratic damping) and matching the
//! `(x - xbar)^2` coefficients gives a closed Riccati equation,
//!
//! ```text
//! da/dt = -(2 i hbar / M) a^2 + lambda M omega_G^2 / hbar
//! ```
//!
//! i.e. `c = 2` in units of `lambda M omega_G^2 / (2 hbar)`. The width is
//! deterministic; the noise only moves `xbar` and `pbar`. Position variance is
//! `1 / (4 Re a)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::probe::{characteristic_scales, ProbeParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn rhs(a: Complex64, hbar: f64, mass: f64, localization: f64) -> Complex64 {
    -2.0 * I * hbar / mass * a * a + localization
}

pub fn riccati_rhs(a: Complex64, params: &ProbeParams) -> Result<Complex64> {
    if a.re <= 0.0 || !a.re.is_finite() {
        return Err(Error::CollapsedWidth { re_a: a.re });
    }
    Ok(rhs(
        a,
        params.hbar(),
        params.mass(),
        params.localization_rate(),
    ))
}

/// Attracting root of the Riccati right-hand side.
pub(crate) fn fixed_point(hbar: f64, mass: f64, localization: f64) -> Complex64 {
    // The principal square root has Re >= 0; for localization > 0 its
    // imaginary part is negative, which makes the linearization
    // -4 i hbar a / M contracting.
    (-I * localization * mass / (2.0 * hbar)).sqrt()
}

pub(crate) fn fixed_point_variance(hbar: f64, mass: f64, localization: f64) -> f64 {
    1.0 / (4.0 * fixed_point(hbar, mass, localization).re)
}

/// `1 / |Re f'(a_inf)|`.
pub(crate) fn relaxation_time(params: &ProbeParams) -> f64 {
    let a = fixed_point(params.hbar(), params.mass(), params.localization_rate());
    params.mass() / (4.0 * params.hbar() * a.im.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumWidth {
    pub a_fixed: Complex64,
    /// `1 / (4 Re a_fixed)`.
    pub sigma_sq: f64,
    /// The commonly quoted closed form `2 hbar / (M omega_G sqrt(lambda))`.
    pub reference_sigma_sq: f64,
    /// `sigma_sq / reference_sigma_sq`.
    pub ratio_to_reference: f64,
}

pub fn equilibrium_width(params: &ProbeParams) -> EquilibriumWidth {
    let a_fixed = fixed_point(params.hbar(), params.mass(), params.localization_rate());
    let sigma_sq = 1.0 / (4.0 * a_fixed.re);
    let reference_sigma_sq =
        2.0 * params.hbar() / (params.mass() * params.omega_g() * params.lambda().sqrt());
    EquilibriumWidth {
        a_fixed,
        sigma_sq,
        reference_sigma_sq,
        ratio_to_reference: sigma_sq / reference_sigma_sq,
    }
}

/// One explicit-midpoint step of the width equation.
pub fn midpoint_step(a: Complex64, dt: f64, params: &ProbeParams) -> Result<Complex64> {
    let k1 = riccati_rhs(a, params)?;
    let half = a + 0.5 * dt * k1;
    let next = a + dt * riccati_rhs(half, params)?;
    if next.re <= 0.0 || !next.re.is_finite() {
        return Err(Error::StepSize {
            dt,
            suggested: characteristic_scales(params).dt_recommended,
        });
    }
    Ok(next)
}

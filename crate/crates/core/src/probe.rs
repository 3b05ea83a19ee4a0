//! Unit conventions, rigid-ball probe parameters and the scales derived from
//! them.
//!
//! All quantities are dimensionless internal values. With the defaults
//! `hbar = G = 1` a ball of unit mass and radius has collapse frequency
//! `omega_G = sqrt(G M / R^3) = 1`.

use std::f64::consts::PI;

use crate::error::{positive, Result};
use crate::pointer::riccati;

/// Decoherence strength that reproduces the standard Newtonian coupling.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    hbar: f64,
    g: f64,
}

impl UnitSystem {
    pub fn new(hbar: f64, g: f64) -> Result<Self> {
        Ok(Self {
            hbar: positive("hbar", hbar)?,
            g: positive("G", g)?,
        })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn g(&self) -> f64 {
        self.g
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self { hbar: 1.0, g: 1.0 }
    }
}

/// A homogeneous rigid ball together with the collapse coupling it feels.
///
/// Immutable after construction; every derived field is computed once by
/// [`make_probe_params`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeParams {
    units: UnitSystem,
    mass: f64,
    radius: f64,
    lambda: f64,
    omega_g: f64,
    sigma_inf_sq: f64,
    momentum_diffusion: f64,
    volume: f64,
}

pub fn make_probe_params(
    mass: f64,
    radius: f64,
    lambda: f64,
    units: UnitSystem,
) -> Result<ProbeParams> {
    let mass = positive("M", mass)?;
    let radius = positive("R", radius)?;
    let lambda = positive("lambda", lambda)?;
    // omega_G is read as sqrt(G M / R^3) so that M omega_G^2 x^2 is an energy.
    let omega_g = (units.g * mass / radius.powi(3)).sqrt();
    let momentum_diffusion = lambda * units.hbar * mass * omega_g * omega_g;
    let localization = momentum_diffusion / (units.hbar * units.hbar);
    let sigma_inf_sq = riccati::fixed_point_variance(units.hbar, mass, localization);
    for (field, value) in [
        ("omega_G", omega_g),
        ("D_p", momentum_diffusion),
        ("sigma_inf_sq", sigma_inf_sq),
    ] {
        positive(field, value)?;
    }
    Ok(ProbeParams {
        units,
        mass,
        radius,
        lambda,
        omega_g,
        sigma_inf_sq,
        momentum_diffusion,
        volume: 4.0 * PI * radius.powi(3) / 3.0,
    })
}

impl ProbeParams {
    pub fn new(mass: f64, radius: f64, lambda: f64) -> Result<Self> {
        make_probe_params(mass, radius, lambda, UnitSystem::default())
    }

    /// Same ball, different coupling.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        make_probe_params(self.mass, self.radius, lambda, self.units)
    }

    pub fn units(&self) -> UnitSystem {
        self.units
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar
    }

    pub fn g(&self) -> f64 {
        self.units.g
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn omega_g(&self) -> f64 {
        self.omega_g
    }

    /// Equilibrium squared width of the pointer state (Riccati fixed point).
    pub fn sigma_inf_sq(&self) -> f64 {
        self.sigma_inf_sq
    }

    /// Momentum diffusion coefficient per axis, `lambda hbar M omega_G^2`.
    pub fn momentum_diffusion(&self) -> f64 {
        self.momentum_diffusion
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// `lambda M omega_G^2 / hbar`, the coefficient of `(x - xbar)^2` in the
    /// Ito log-amplitude of the collapse equation. Units 1/(time length^2).
    pub fn localization_rate(&self) -> f64 {
        self.momentum_diffusion / (self.units.hbar * self.units.hbar)
    }

    /// Coordinate-diffusion gain `2 sigma_inf^2 / hbar` of the centroid SDE.
    pub fn coordinate_gain(&self) -> f64 {
        2.0 * self.sigma_inf_sq / self.units.hbar
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleReport {
    /// Relaxation time of the pointer-state width.
    pub t_collapse: f64,
    /// `1 / omega_G`.
    pub t_osc: f64,
    pub dt_recommended: f64,
    pub l_recommended: f64,
}

pub fn characteristic_scales(params: &ProbeParams) -> ScaleReport {
    let t_collapse = riccati::relaxation_time(params);
    let t_osc = 1.0 / params.omega_g;
    ScaleReport {
        t_collapse,
        t_osc,
        dt_recommended: 0.005 * t_collapse.min(t_osc),
        l_recommended: 40.0 * params.sigma_inf_sq.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_ball_scales() {
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        assert_eq!(p.omega_g(), 1.0);
        assert!((p.volume() - 4.18879).abs() < 1e-5);
        assert!((p.momentum_diffusion() - 0.5).abs() < 1e-15);
        assert_eq!(
            p.sigma_inf_sq(),
            crate::pointer::equilibrium_width(&p).sigma_sq
        );
    }

    #[test]
    fn heavier_ball() {
        let p = ProbeParams::new(4.0, 1.0, 0.5).unwrap();
        assert_eq!(p.omega_g(), 2.0);
        assert!((p.momentum_diffusion() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn scale_report() {
        let s = characteristic_scales(&ProbeParams::new(1.0, 1.0, 0.5).unwrap());
        assert!(s.dt_recommended <= 0.01);
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        assert!(s.l_recommended >= 20.0 * p.sigma_inf_sq().sqrt());
        let heavy = characteristic_scales(&ProbeParams::new(100.0, 1.0, 0.5).unwrap());
        assert!((heavy.t_osc - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input_by_name() {
        let err = ProbeParams::new(-1.0, 1.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("`M`"));
        let err = ProbeParams::new(1.0, f64::NAN, 0.5).unwrap_err();
        assert!(err.to_string().contains("`R`"));
        let err = ProbeParams::new(1.0, 1.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("`lambda`"));
        assert!(UnitSystem::new(0.0, 1.0).is_err());
        assert!(UnitSystem::new(1.0, f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn derived_invariants(
            m in 1e-3f64..1e4, r in 1e-2f64..1e2, lambda in 1e-2f64..4.0,
            hbar in 0.1f64..10.0, g in 0.1f64..10.0,
        ) {
            let units = UnitSystem::new(hbar, g).unwrap();
            let p = make_probe_params(m, r, lambda, units).unwrap();
            let w2 = p.omega_g() * p.omega_g();
            prop_assert!((w2 * r.powi(3) / (g * m) - 1.0).abs() < 1e-12);
            prop_assert!((p.volume() / (4.0 * PI * r.powi(3) / 3.0) - 1.0).abs() < 1e-12);
            prop_assert!((p.momentum_diffusion() / (lambda * hbar * m * w2) - 1.0).abs() < 1e-12);

            let heavy = make_probe_params(4.0 * m, r, lambda, units).unwrap();
            prop_assert!((heavy.omega_g() / p.omega_g() - 2.0).abs() < 1e-12);
            prop_assert!((heavy.momentum_diffusion() / p.momentum_diffusion() - 16.0).abs() < 1e-10);

            let again = make_probe_params(m, r, lambda, units).unwrap();
            prop_assert_eq!(p, again);

            let s = characteristic_scales(&p);
            prop_assert!(s.dt_recommended < 0.01 * s.t_collapse.min(s.t_osc));
            prop_assert!(s.l_recommended >= 20.0 * p.sigma_inf_sq().sqrt());
        }
    }
}

//! Single-ball collapse dynamics.
//!
//! The reduced collapse equation for one ball, in Ito form, reads
//!
//! ```text
//! d psi = [ -i p^2/(2 M hbar) - (lambda M omega_G^2 / 2 hbar) (x - <x>)^2 ] psi dt
//!         + (1/hbar) (x - <x>) dW psi,        dW^2 = D_p dt
//! ```
//!
//! It separates by Cartesian axis, so everything here is one-dimensional per
//! axis. Two solvers are provided: the Gaussian ansatz ([`evolve_gaussian`],
//! exact while the state stays Gaussian) and a split-step spectral grid
//! ([`grid::GridPropagator`]) for arbitrary states.

pub mod grid;
pub mod riccati;

use num_complex::Complex64;

pub use grid::{
    evolve_grid_sse, moments, simulate_sse_trajectory, GridPropagator, GridWavefunction, Moments,
    PointerSample, StepDiagnostics,
};
pub use riccati::{equilibrium_width, midpoint_step, riccati_rhs, EquilibriumWidth};

use crate::error::{Error, Result};
use crate::probe::{characteristic_scales, ProbeParams};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPointerState {
    pub xbar: Vec3,
    pub pbar: Vec3,
    /// Width parameter per axis, `psi ~ exp(-a (x - xbar)^2)`.
    pub a: [Complex64; 3],
}

impl GaussianPointerState {
    /// The equilibrium pointer state centred at `xbar` with momentum `pbar`.
    pub fn equilibrium(params: &ProbeParams, xbar: Vec3, pbar: Vec3) -> Self {
        let a = equilibrium_width(params).a_fixed;
        Self {
            xbar,
            pbar,
            a: [a; 3],
        }
    }

    pub fn sigma_sq(&self) -> Vec3 {
        Vec3::from_fn(|i, _| 1.0 / (4.0 * self.a[i].re))
    }
}

/// Centroid and width of one axis of a Gaussian pointer state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAxis {
    pub xbar: f64,
    pub pbar: f64,
    pub a: Complex64,
}

impl GaussianAxis {
    /// One Ito step driven by the momentum kick `dw` (variance `D_p dt`).
    ///
    /// The kick shifts the centroid by `2 sigma^2 dw / hbar` and the mean
    /// momentum by `-(Im a / Re a) dw`; at the fixed point `Im a = -Re a` this
    /// is the shared-noise centroid SDE `dp = dw`, `dx = p dt / M + 2
    /// sigma_inf^2 dw / hbar`.
    pub fn step(&self, dt: f64, dw: f64, params: &ProbeParams) -> Result<Self> {
        let limit = characteristic_scales(params).dt_recommended;
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepSize { dt, suggested: limit });
        }
        let a = self.a;
        if a.re <= 0.0 {
            return Err(Error::CollapsedWidth { re_a: a.re });
        }
        let gain = 1.0 / (2.0 * params.hbar() * a.re);
        Ok(Self {
            xbar: self.xbar + self.pbar / params.mass() * dt + gain * dw,
            pbar: self.pbar - a.im / a.re * dw,
            a: midpoint_step(a, dt, params)?,
        })
    }
}

pub fn evolve_gaussian(
    state: &GaussianPointerState,
    dt: f64,
    dw: Vec3,
    params: &ProbeParams,
) -> Result<GaussianPointerState> {
    let mut next = *state;
    for axis in 0..3 {
        let stepped = GaussianAxis {
            xbar: state.xbar[axis],
            pbar: state.pbar[axis],
            a: state.a[axis],
        }
        .step(dt, dw[axis], params)?;
        next.xbar[axis] = stepped.xbar;
        next.pbar[axis] = stepped.pbar;
        next.a[axis] = stepped.a;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{axis_increment, NoiseStream};

    #[test]
    fn free_flight_without_noise() {
        let p = ProbeParams::new(2.0, 1.0, 1e-300).unwrap();
        let p0 = Vec3::new(0.4, -0.2, 1.0);
        let mut s = GaussianPointerState::equilibrium(&p, Vec3::zeros(), p0);
        s.a = [Complex64::new(1.0, 0.0); 3];
        let dt = 0.002;
        for _ in 0..500 {
            s = evolve_gaussian(&s, dt, Vec3::zeros(), &p).unwrap();
        }
        assert!((s.xbar - p0 / 2.0).norm() < 1e-12);
        assert_eq!(s.pbar, p0);
    }

    #[test]
    fn rejects_oversized_steps() {
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        let s = GaussianPointerState::equilibrium(&p, Vec3::zeros(), Vec3::zeros());
        let dt = characteristic_scales(&p).dt_recommended * 2.0;
        assert!(matches!(
            evolve_gaussian(&s, dt, Vec3::zeros(), &p),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn equilibrium_centroid_moments() {
        // Ito moments of the linear SDE with shared noise:
        // Var p = D t, Cov(x, p) = D (t^2 / 2M + g t), g = 2 sigma^2 / hbar.
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        let dt = 1e-3;
        let steps = 2_000;
        let n = 4_000;
        let mut stats = crate::stats::EnsembleStats::default();
        let a = equilibrium_width(&p).a_fixed;
        for traj in 0..n {
            let mut stream = NoiseStream::for_axis(42, traj, 0);
            let mut s = GaussianAxis { xbar: 0.0, pbar: 0.0, a };
            for _ in 0..steps {
                let dw = axis_increment(&p, dt, &mut stream).unwrap();
                s = s.step(dt, dw, &p).unwrap();
            }
            stats.push(s.xbar, s.pbar);
        }
        let m = stats.moments();
        let t = dt * steps as f64;
        let d = p.momentum_diffusion();
        let ratio = m.var_p.value / (d * t);
        assert!((0.95..=1.05).contains(&ratio), "{ratio}");
        let g = p.coordinate_gain();
        let cov = d * (t * t / (2.0 * p.mass()) + g * t);
        assert!((m.cov_xp.value / cov - 1.0).abs() < 0.05, "{} vs {cov}", m.cov_xp.value);
    }

    #[test]
    fn axes_are_separable() {
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        let dt = 2e-3;
        let mut joint = GaussianPointerState::equilibrium(&p, Vec3::zeros(), Vec3::zeros());
        joint.a[1] = Complex64::new(2.0, 0.3);
        let mut streams = NoiseStream::axes(3, 0);
        let mut separate: Vec<GaussianAxis> = (0..3)
            .map(|i| GaussianAxis {
                xbar: 0.0,
                pbar: 0.0,
                a: joint.a[i],
            })
            .collect();
        let mut solo = NoiseStream::axes(3, 0);
        for _ in 0..500 {
            let dw = Vec3::from_fn(|i, _| axis_increment(&p, dt, &mut streams[i]).unwrap());
            joint = evolve_gaussian(&joint, dt, dw, &p).unwrap();
            for (i, s) in separate.iter_mut().enumerate() {
                let dw = axis_increment(&p, dt, &mut solo[i]).unwrap();
                *s = s.step(dt, dw, &p).unwrap();
            }
        }
        for (i, s) in separate.iter().enumerate() {
            assert_eq!(joint.xbar[i], s.xbar);
            assert_eq!(joint.pbar[i], s.pbar);
            assert_eq!(joint.a[i], s.a);
        }
    }
}

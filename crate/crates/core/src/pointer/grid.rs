//! Split-step spectral solver on a uniform periodic grid that follows the
//! centroid.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{step, Error, Result};
use crate::probe::{characteristic_scales, ProbeParams};

/// Centroid must stay this many widths from either edge.
const EDGE_MARGIN_SIGMAS: f64 = 5.0;
/// Tolerated departure of the per-step norm change from its exact Gaussian
/// expectation.
const INSTABILITY_TOLERANCE: f64 = 1e-3;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Wavefunction sampled at `x0 + i dx`, `i = 0..n`, periodic in `n dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub amplitudes: Vec<Complex64>,
    pub x0: f64,
    pub dx: f64,
}

impl GridWavefunction {
    /// Normalized Gaussian `exp(-a (x - xbar)^2 + i pbar (x - xbar) / hbar)`.
    pub fn gaussian(
        n: usize,
        x0: f64,
        dx: f64,
        xbar: f64,
        pbar: f64,
        a: Complex64,
        hbar: f64,
    ) -> Self {
        let amplitudes = (0..n)
            .map(|i| {
                let u = x0 + i as f64 * dx - xbar;
                (-a * u * u + Complex64::i() * (pbar * u / hbar)).exp()
            })
            .collect();
        let mut wf = Self { amplitudes, x0, dx };
        wf.normalize();
        wf
    }

    /// Equilibrium pointer state on the recommended domain `40 sigma_inf`
    /// centred on `xbar`.
    pub fn equilibrium(params: &ProbeParams, n: usize, xbar: f64, pbar: f64) -> Self {
        let length = characteristic_scales(params).l_recommended;
        Self::equilibrium_on(params, n, length, xbar, pbar)
    }

    /// Equilibrium pointer state on a domain of the given length.
    pub fn equilibrium_on(params: &ProbeParams, n: usize, length: f64, xbar: f64, pbar: f64) -> Self {
        let dx = length / n as f64;
        let a = super::equilibrium_width(params).a_fixed;
        Self::gaussian(n, xbar - length / 2.0, dx, xbar, pbar, a, params.hbar())
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn length(&self) -> f64 {
        self.dx * self.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dx
    }

    pub fn normalize(&mut self) {
        let s = self.norm().sqrt().recip();
        self.amplitudes.iter_mut().for_each(|c| *c *= s);
    }

    /// Mean and variance of position, without normalizing.
    pub(crate) fn position_moments(&self) -> (f64, f64, f64) {
        let (mut w, mut wx, mut wxx) = (0.0, 0.0, 0.0);
        for (i, c) in self.amplitudes.iter().enumerate() {
            let p = c.norm_sqr();
            // Offsets from x0 keep the sums well conditioned.
            let x = i as f64 * self.dx;
            w += p;
            wx += p * x;
            wxx += p * x * x;
        }
        let mean = wx / w;
        (self.x0 + mean, (wxx / w - mean * mean).max(0.0), w * self.dx)
    }

    /// Roll by whole cells so the centroid sits near the middle.
    fn recentre(&mut self, xbar: f64) -> bool {
        let centre = self.x0 + self.length() / 2.0;
        if (xbar - centre).abs() <= self.length() / 8.0 {
            return false;
        }
        let shift = ((xbar - centre) / self.dx).round() as isize;
        let n = self.len() as isize;
        let s = shift.rem_euclid(n) as usize;
        self.amplitudes.rotate_left(s);
        self.x0 += shift as f64 * self.dx;
        true
    }

    fn check_margin(&self, xbar: f64, var: f64) -> Result<()> {
        let margin = (xbar - self.x0).min(self.x0 + self.length() - xbar) / var.sqrt();
        if !(margin >= EDGE_MARGIN_SIGMAS) {
            return Err(Error::DomainEscape { xbar, margin });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub xbar: f64,
    pub pbar: f64,
    pub sigma_sq: f64,
    pub norm: f64,
}

/// Position mean and variance, spectral momentum mean and grid norm.
pub fn moments(wf: &GridWavefunction, hbar: f64) -> Moments {
    let (fwd, _) = plans(wf.len());
    let mut buf = wf.amplitudes.clone();
    fwd.process(&mut buf);
    momentum_moment(wf, &buf, hbar)
}

fn wavenumber(i: usize, n: usize, dx: f64) -> f64 {
    let j = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    2.0 * PI * j / (n as f64 * dx)
}

fn momentum_moment(wf: &GridWavefunction, spectrum: &[Complex64], hbar: f64) -> Moments {
    let n = wf.len();
    let (mut w, mut wk) = (0.0, 0.0);
    for (i, c) in spectrum.iter().enumerate() {
        let p = c.norm_sqr();
        w += p;
        // The Nyquist mode has no definite sign.
        if 2 * i != n {
            wk += p * wavenumber(i, n, wf.dx);
        }
    }
    let (xbar, sigma_sq, norm) = wf.position_moments();
    Moments {
        xbar,
        pbar: hbar * wk / w,
        sigma_sq,
        norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Relative norm change produced by the non-unitary factor, before
    /// renormalization.
    pub norm_drift: f64,
    pub recentred: bool,
}

/// Precomputed kinetic half-step factors and FFT plans for one grid.
pub struct GridPropagator {
    n: usize,
    dx: f64,
    dt: f64,
    kinetic_half: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl GridPropagator {
    pub fn new(n: usize, dx: f64, dt: f64, params: &ProbeParams) -> Result<Self> {
        let dt = step(dt)?;
        if n < 8 {
            return Err(Error::InvalidParameter {
                field: "N",
                value: n as f64,
                reason: "grid needs at least 8 points",
            });
        }
        let dx = crate::error::positive("dx", dx)?;
        let (fwd, inv) = plans(n);
        let (hbar, m) = (params.hbar(), params.mass());
        let inv_n = 1.0 / n as f64;
        let kinetic_half = (0..n)
            .map(|i| {
                let k = wavenumber(i, n, dx);
                Complex64::from_polar(inv_n, -hbar * k * k * dt / (4.0 * m))
            })
            .collect();
        let scratch = vec![Complex64::default(); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        Ok(Self {
            n,
            dx,
            dt,
            kinetic_half,
            fwd,
            inv,
            scratch,
        })
    }

    /// Propagator matched to a wavefunction's grid.
    pub fn for_wavefunction(wf: &GridWavefunction, dt: f64, params: &ProbeParams) -> Result<Self> {
        Self::new(wf.len(), wf.dx, dt, params)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check(&self, wf: &GridWavefunction) {
        assert_eq!(wf.len(), self.n, "grid size mismatch");
        assert_eq!(wf.dx, self.dx, "grid spacing mismatch");
    }

    /// Free evolution for `dt / 2`.
    fn kinetic_half_step(&mut self, wf: &mut GridWavefunction) {
        self.fwd.process_with_scratch(&mut wf.amplitudes, &mut self.scratch);
        for (c, k) in wf.amplitudes.iter_mut().zip(&self.kinetic_half) {
            *c *= k;
        }
        self.inv.process_with_scratch(&mut wf.amplitudes, &mut self.scratch);
    }

    /// One full step of free evolution.
    pub fn free_step(&mut self, wf: &mut GridWavefunction) {
        self.check(wf);
        self.kinetic_half_step(wf);
        self.kinetic_half_step(wf);
    }

    /// Moments using the propagator's plans.
    pub fn moments(&mut self, wf: &GridWavefunction, hbar: f64) -> Moments {
        let mut buf = wf.amplitudes.clone();
        self.fwd.process_with_scratch(&mut buf, &mut self.scratch);
        momentum_moment(wf, &buf, hbar)
    }

    /// Strang-split step with a multiplicative factor applied between two
    /// kinetic half-steps; the factor sees the post-half-step centroid and
    /// variance. Returns the pre-renormalization norm change and the variance
    /// the factor used.
    fn split_step(
        &mut self,
        wf: &mut GridWavefunction,
        factor: impl Fn(f64, f64) -> f64,
    ) -> (f64, f64) {
        self.check(wf);
        self.kinetic_half_step(wf);
        let (xbar, var, before) = wf.position_moments();
        for (i, c) in wf.amplitudes.iter_mut().enumerate() {
            let u = wf.x0 + i as f64 * wf.dx - xbar;
            *c *= factor(u, var);
        }
        let after = wf.norm();
        self.kinetic_half_step(wf);
        wf.normalize();
        (after / before - 1.0, var)
    }

    fn finish(&self, wf: &mut GridWavefunction, norm_drift: f64) -> Result<StepDiagnostics> {
        let (xbar, var, _) = wf.position_moments();
        let recentred = wf.recentre(xbar);
        wf.check_margin(xbar, var)?;
        Ok(StepDiagnostics {
            norm_drift,
            recentred,
        })
    }

    /// One step of the collapse SSE driven by the momentum kick `dw`.
    ///
    /// The multiplicative factor is the Ito-exact exponential
    /// `exp(-k u^2 dt + u dw / hbar)`, `u = x - xbar`, `k` the localization
    /// rate. A norm change more than `1e-3` away from its exact value for a
    /// Gaussian of the same variance signals that the grid cannot represent
    /// the step.
    pub fn sse_step(
        &mut self,
        wf: &mut GridWavefunction,
        dw: f64,
        params: &ProbeParams,
    ) -> Result<StepDiagnostics> {
        let k = params.localization_rate();
        let hbar = params.hbar();
        let dt = self.dt;
        let (drift, var) = self.split_step(wf, |u, _| (-k * u * u * dt + u * dw / hbar).exp());
        // Exact norm change for a Gaussian of variance `var`; the SSE keeps
        // states Gaussian, so what is left is discretization error.
        let spread = 1.0 + 4.0 * k * var * dt;
        let expected = (2.0 * var * dw * dw / (hbar * hbar * spread)).exp() / spread.sqrt() - 1.0;
        let residual = drift - expected;
        if !(residual.abs() <= INSTABILITY_TOLERANCE) {
            return Err(Error::Instability { residual });
        }
        self.finish(wf, drift)
    }

    /// Deterministic no-jump step of the jump unraveling:
    /// `exp(-(k/2)(u^2 - V) dt)` between kinetic half-steps, then
    /// renormalization.
    pub fn drift_step(
        &mut self,
        wf: &mut GridWavefunction,
        params: &ProbeParams,
    ) -> Result<StepDiagnostics> {
        let k = params.localization_rate();
        let dt = self.dt;
        let (drift, _) = self.split_step(wf, |u, var| (-0.5 * k * (u * u - var) * dt).exp());
        self.finish(wf, drift)
    }
}

/// Functional form of one SSE step. Builds a propagator per call; use
/// [`GridPropagator`] directly inside loops.
pub fn evolve_grid_sse(
    wf: &GridWavefunction,
    dt: f64,
    dw: f64,
    params: &ProbeParams,
) -> Result<(GridWavefunction, StepDiagnostics)> {
    let mut prop = GridPropagator::for_wavefunction(wf, dt, params)?;
    let mut next = wf.clone();
    let diag = prop.sse_step(&mut next, dw, params)?;
    Ok((next, diag))
}

/// One record of a grid trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerSample {
    pub t: f64,
    pub xbar: f64,
    pub pbar: f64,
    pub sigma_sq: f64,
    pub norm_drift: f64,
}

impl PointerSample {
    pub(crate) fn record(t: f64, m: &Moments, norm_drift: f64) -> Self {
        Self {
            t,
            xbar: m.xbar,
            pbar: m.pbar,
            sigma_sq: m.sigma_sq,
            norm_drift,
        }
    }
}

/// Number of whole steps of size `dt` in `t_final`.
pub(crate) fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let t_final = crate::error::positive("T", t_final)?;
    let n = (t_final / step(dt)?).round();
    if n < 1.0 {
        return Err(Error::InvalidParameter {
            field: "T",
            value: t_final,
            reason: "shorter than one step",
        });
    }
    Ok(n as usize)
}

/// Integrate the diffusive unraveling for `t_final`, recording moments at
/// `t = 0` and every `record_every` steps.
pub fn simulate_sse_trajectory(
    initial: &GridWavefunction,
    t_final: f64,
    dt: f64,
    stream: &mut crate::noise::NoiseStream,
    params: &ProbeParams,
    record_every: usize,
) -> Result<Vec<PointerSample>> {
    let steps = step_count(t_final, dt)?;
    let every = record_every.max(1);
    let mut prop = GridPropagator::for_wavefunction(initial, dt, params)?;
    let mut wf = initial.clone();
    let hbar = params.hbar();
    let mut out = vec![PointerSample::record(0.0, &prop.moments(&wf, hbar), 0.0)];
    for i in 1..=steps {
        let dw = crate::noise::axis_increment(params, dt, stream)?;
        let diag = prop.sse_step(&mut wf, dw, params)?;
        if i % every == 0 {
            let m = prop.moments(&wf, hbar);
            out.push(PointerSample::record(i as f64 * dt, &m, diag.norm_drift));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{equilibrium_width, GaussianAxis};

    fn free_params() -> ProbeParams {
        ProbeParams::new(1.0, 1.0, 1e-300).unwrap()
    }

    #[test]
    fn equilibrium_moments() {
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        let wf = GridWavefunction::equilibrium(&p, 1024, 0.0, 0.0);
        let m = moments(&wf, p.hbar());
        assert!(m.xbar.abs() < 1e-8);
        assert!(m.pbar.abs() < 1e-8);
        assert!((m.sigma_sq - p.sigma_inf_sq()).abs() < 1e-8);
        assert!((m.norm - 1.0).abs() < 1e-8);
    }

    #[test]
    fn boosted_momentum() {
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        let wf = GridWavefunction::equilibrium(&p, 1024, 0.3, 1.7);
        let m = moments(&wf, p.hbar());
        assert!((m.xbar - 0.3).abs() < 1e-10);
        assert!((m.pbar - 1.7).abs() < 1e-8);
    }

    #[test]
    fn free_spreading_matches_analytic() {
        // sigma^2(t) = sigma0^2 + (hbar t / 2 M sigma0)^2 for a real Gaussian.
        let p = free_params();
        let s0 = 0.5f64;
        let a = Complex64::new(1.0 / (4.0 * s0 * s0), 0.0);
        let mut wf = GridWavefunction::gaussian(1024, -20.0, 40.0 / 1024.0, 0.0, 0.0, a, 1.0);
        let dt = 0.001;
        let mut prop = GridPropagator::for_wavefunction(&wf, dt, &p).unwrap();
        for _ in 0..1000 {
            prop.sse_step(&mut wf, 0.0, &p).unwrap();
        }
        let m = prop.moments(&wf, 1.0);
        let expect = s0 * s0 + (1.0 / (2.0 * s0)).powi(2);
        assert!((m.sigma_sq - expect).abs() / expect < 1e-6, "{} {expect}", m.sigma_sq);
    }

    #[test]
    fn free_step_preserves_norm() {
        let p = free_params();
        let mut wf = GridWavefunction::gaussian(256, -10.0, 20.0 / 256.0, 0.0, 1.0, Complex64::new(1.0, 0.2), 1.0);
        let mut prop = GridPropagator::for_wavefunction(&wf, 0.01, &p).unwrap();
        for _ in 0..100 {
            prop.free_step(&mut wf);
        }
        assert!((wf.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_width_follows_riccati() {
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        let dt = 1e-3;
        let a0 = Complex64::new(0.3, 0.0);
        let mut wf = GridWavefunction::gaussian(1024, -15.0, 30.0 / 1024.0, 0.0, 0.0, a0, 1.0);
        let mut prop = GridPropagator::for_wavefunction(&wf, dt, &p).unwrap();
        let mut axis = GaussianAxis {
            xbar: 0.0,
            pbar: 0.0,
            a: a0,
        };
        for _ in 0..2000 {
            prop.sse_step(&mut wf, 0.0, &p).unwrap();
            axis = axis.step(dt, 0.0, &p).unwrap();
        }
        let grid = prop.moments(&wf, 1.0).sigma_sq;
        let ansatz = 1.0 / (4.0 * axis.a.re);
        assert!((grid / ansatz - 1.0).abs() < 1e-3, "{grid} {ansatz}");
        let fixed = equilibrium_width(&p).sigma_sq;
        assert!((grid / fixed - 1.0).abs() < 0.05);
    }

    #[test]
    fn recentres_and_keeps_position() {
        let p = free_params();
        let mut wf = GridWavefunction::gaussian(256, -10.0, 20.0 / 256.0, 0.0, 10.0, Complex64::new(2.0, 0.0), 1.0);
        let mut prop = GridPropagator::for_wavefunction(&wf, 0.001, &p).unwrap();
        let mut moved = false;
        for _ in 0..800 {
            moved |= prop.sse_step(&mut wf, 0.0, &p).unwrap().recentred;
        }
        assert!(moved);
        let m = prop.moments(&wf, 1.0);
        assert!((m.xbar - 8.0).abs() < 1e-3, "{}", m.xbar);
    }

    #[test]
    fn wide_state_escapes_domain() {
        let p = free_params();
        let mut wf = GridWavefunction::gaussian(256, -5.0, 10.0 / 256.0, 0.0, 0.0, Complex64::new(0.5, 0.0), 1.0);
        let mut prop = GridPropagator::for_wavefunction(&wf, 0.01, &p).unwrap();
        let err = (0..1000)
            .find_map(|_| prop.sse_step(&mut wf, 0.0, &p).err())
            .unwrap();
        assert!(matches!(err, Error::DomainEscape { .. }));
    }

    #[test]
    fn oversized_kick_is_unstable() {
        let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
        let wf = GridWavefunction::equilibrium(&p, 512, 0.0, 0.0);
        let dt = characteristic_scales(&p).dt_recommended;
        let typical = (p.momentum_diffusion() * dt).sqrt();
        assert!(evolve_grid_sse(&wf, dt, 3.0 * typical, &p).is_ok());
        let err = evolve_grid_sse(&wf, dt, 3.0, &p).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }), "{err:?}");
    }
}

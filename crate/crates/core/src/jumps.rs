//! Piecewise-deterministic (jump) unraveling of the collapse dynamics.
//!
//! Between jumps the state follows the norm-compensated flow
//! `-(k/2)((x - <x>)^2 - sigma^2)` on top of free evolution; jumps
//! `psi -> (x - <x>) psi / sigma` arrive at rate `k sigma^2`, with `k` the
//! localization rate. Jump times are found by integrating the rate until it
//! crosses an exponential threshold.
//!
//! A 3D ball is three independent axis processes, each with its own stream
//! ([`NoiseStream::for_axis`]). Competing per-axis clocks pick the jumping
//! axis with probability proportional to its rate, which is uniform for the
//! isotropic states the lab uses.

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::pointer::grid::step_count;
use crate::pointer::{GridPropagator, GridWavefunction, PointerSample, StepDiagnostics};
use crate::probe::ProbeParams;

/// Jump rate `lambda M omega_G^2 sigma^2 / hbar` of one axis.
pub fn jump_rate(wf: &GridWavefunction, params: &ProbeParams) -> f64 {
    let (_, var, _) = wf.position_moments();
    params.localization_rate() * var
}

/// One deterministic no-jump step. Builds a propagator per call; loops
/// should hold a [`GridPropagator`] and call [`GridPropagator::drift_step`].
pub fn drift_step(
    wf: &GridWavefunction,
    dt: f64,
    params: &ProbeParams,
) -> Result<(GridWavefunction, StepDiagnostics)> {
    let mut prop = GridPropagator::for_wavefunction(wf, dt, params)?;
    let mut next = wf.clone();
    let diag = prop.drift_step(&mut next, params)?;
    Ok((next, diag))
}

/// Apply the jump in place. Returns the norm before renormalization.
pub fn apply_jump(wf: &mut GridWavefunction) -> Result<f64> {
    let (xbar, var, norm) = wf.position_moments();
    let sigma = var.sqrt();
    if !(sigma >= wf.dx) {
        return Err(Error::Resolution { sigma, dx: wf.dx });
    }
    let scale = 1.0 / (sigma * norm.sqrt());
    let (x0, dx) = (wf.x0, wf.dx);
    for (i, c) in wf.amplitudes.iter_mut().enumerate() {
        *c *= (x0 + i as f64 * dx - xbar) * scale;
    }
    let before = wf.norm();
    wf.normalize();
    Ok(before)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpTrajectory {
    pub samples: Vec<PointerSample>,
    /// Strictly increasing.
    pub jump_times: Vec<f64>,
    /// Integrated rate accumulated since the previous jump, at each jump.
    pub integrated_rates: Vec<f64>,
}

impl JumpTrajectory {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    pub fn mean_waiting_time(&self) -> Option<f64> {
        let n = self.jump_times.len();
        (n >= 2).then(|| (self.jump_times[n - 1] - self.jump_times[0]) / (n - 1) as f64)
    }
}

/// Integrate one axis for `t_final`, recording moments at `t = 0` and every
/// `record_every` steps.
pub fn simulate_jump_trajectory(
    initial: &GridWavefunction,
    t_final: f64,
    dt: f64,
    stream: &mut NoiseStream,
    params: &ProbeParams,
    record_every: usize,
) -> Result<JumpTrajectory> {
    let steps = step_count(t_final, dt)?;
    let every = record_every.max(1);
    let hbar = params.hbar();
    let mut prop = GridPropagator::for_wavefunction(initial, dt, params)?;
    let mut wf = initial.clone();
    let mut out = JumpTrajectory {
        samples: vec![PointerSample::record(0.0, &prop.moments(&wf, hbar), 0.0)],
        jump_times: Vec::new(),
        integrated_rates: Vec::new(),
    };
    let mut threshold = stream.exponential();
    let mut integrated = 0.0;
    for i in 1..=steps {
        integrated += jump_rate(&wf, params) * dt;
        let diag = prop.drift_step(&mut wf, params)?;
        let t = i as f64 * dt;
        if integrated >= threshold {
            apply_jump(&mut wf)?;
            out.jump_times.push(t);
            out.integrated_rates.push(integrated);
            integrated = 0.0;
            threshold = stream.exponential();
        }
        if i % every == 0 {
            let m = prop.moments(&wf, hbar);
            out.samples.push(PointerSample::record(t, &m, diag.norm_drift));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::moments;
    use num_complex::Complex64;

    fn unit() -> ProbeParams {
        ProbeParams::new(1.0, 1.0, 0.5).unwrap()
    }

    fn gaussian(s2: f64, p0: f64) -> GridWavefunction {
        let a = Complex64::new(1.0 / (4.0 * s2), 0.0);
        GridWavefunction::gaussian(1024, -20.0, 40.0 / 1024.0, 0.3, p0, a, 1.0)
    }

    #[test]
    fn rate_examples() {
        let p = unit();
        let wf = gaussian(2.0, 0.0);
        assert!((jump_rate(&wf, &p) - 1.0).abs() < 1e-10);
        let wider = gaussian(4.0, 0.0);
        assert!((jump_rate(&wider, &p) / jump_rate(&wf, &p) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_coupling_is_free_evolution() {
        let p = ProbeParams::new(1.0, 1.0, 1e-300).unwrap();
        let wf = gaussian(0.5, 1.0);
        let (drifted, _) = drift_step(&wf, 0.01, &p).unwrap();
        let mut free = wf.clone();
        GridPropagator::for_wavefunction(&wf, 0.01, &p)
            .unwrap()
            .free_step(&mut free);
        let diff = drifted
            .amplitudes
            .iter()
            .zip(&free.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");

        let mut stream = NoiseStream::new(5, 0);
        let traj = simulate_jump_trajectory(&wf, 1.0, 0.01, &mut stream, &p, 10).unwrap();
        assert_eq!(traj.jump_count(), 0);
    }

    #[test]
    fn drift_norm_change_is_second_order() {
        let p = unit();
        for s2 in [0.3, 1.0, 3.0] {
            let wf = gaussian(s2, 0.5);
            let dt = 1e-7;
            let (_, fine) = drift_step(&wf, dt, &p).unwrap();
            assert!(fine.norm_drift.abs() < 1e-6 * dt * p.omega_g(), "{s2}: {}", fine.norm_drift);
            let (_, d4) = drift_step(&wf, 1e-4, &p).unwrap();
            let (_, d3) = drift_step(&wf, 1e-3, &p).unwrap();
            let order = (d3.norm_drift / d4.norm_drift).log10();
            assert!((order - 2.0).abs() < 0.05, "{s2}: {order}");
        }
    }

    #[test]
    fn drift_narrows_wide_states_monotonically() {
        let p = unit();
        let mut wf = gaussian(3.0, 0.0);
        let mut prop = GridPropagator::for_wavefunction(&wf, 2e-3, &p).unwrap();
        // Gaussian oracle: a' = -(2i hbar/M) a^2 + k/2, fixed point
        // sigma^2 = 1 / (4 Re sqrt(-i k M / 4 hbar)).
        let a = (Complex64::new(0.0, -p.localization_rate() / 4.0)).sqrt();
        let stationary = 1.0 / (4.0 * a.re);
        let mut last = f64::INFINITY;
        loop {
            prop.drift_step(&mut wf, &p).unwrap();
            let s2 = wf.position_moments().1;
            if s2 < stationary {
                break;
            }
            assert!(s2 < last);
            last = s2;
        }
        for _ in 0..20_000 {
            prop.drift_step(&mut wf, &p).unwrap();
        }
        let s2 = wf.position_moments().1;
        assert!((s2 / stationary - 1.0).abs() < 1e-3, "{s2} {stationary}");
    }

    #[test]
    fn jump_shape_and_norm() {
        let mut wf = gaussian(1.0, 0.7);
        let before_p = moments(&wf, 1.0).pbar;
        let norm = apply_jump(&mut wf).unwrap();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!((wf.norm() - 1.0).abs() < 1e-9);
        // Node at the old centroid, two symmetric lobes.
        let i0 = ((0.3 - wf.x0) / wf.dx).round() as usize;
        let peak = wf.amplitudes.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
        assert!(wf.amplitudes[i0].norm_sqr() < 1e-3 * peak);
        // Momentum against a brute-force finite-difference expectation.
        let n = wf.len();
        let mut acc = Complex64::default();
        for i in 0..n {
            let d = (wf.amplitudes[(i + 1) % n] - wf.amplitudes[(i + n - 1) % n]) / (2.0 * wf.dx);
            acc += wf.amplitudes[i].conj() * (-Complex64::i()) * d * wf.dx;
        }
        let after_p = moments(&wf, 1.0).pbar;
        assert!((after_p - acc.re).abs() < 1e-3, "{after_p} vs {}", acc.re);
        assert!((after_p - before_p).abs() < 1e-8, "{after_p} vs {before_p}");
    }

    #[test]
    fn unresolved_state_cannot_jump() {
        let mut wf = GridWavefunction::gaussian(64, -32.0, 1.0, 0.0, 0.0, Complex64::new(50.0, 0.0), 1.0);
        assert!(matches!(apply_jump(&mut wf), Err(Error::Resolution { .. })));
    }

    #[test]
    fn empirical_rate_and_waiting_times() {
        let p = unit();
        // Jump states spread far beyond sigma_inf; give them room.
        let length = 160.0 * p.sigma_inf_sq().sqrt();
        let wf = GridWavefunction::equilibrium_on(&p, 512, length, 0.0, 0.0);
        let mut stream = NoiseStream::new(11, 0);
        let dt = 2e-3;
        let traj = simulate_jump_trajectory(&wf, 600.0, dt, &mut stream, &p, 50).unwrap();
        assert!(traj.jump_count() >= 500, "{}", traj.jump_count());
        assert!(traj.jump_times.windows(2).all(|w| w[0] < w[1]));
        let mean_rate: f64 = traj.samples.iter().map(|s| s.sigma_sq).sum::<f64>()
            / traj.samples.len() as f64
            * p.localization_rate();
        let empirical = traj.jump_count() as f64 / 600.0;
        assert!((empirical / mean_rate - 1.0).abs() < 0.1, "{empirical} {mean_rate}");
        let (_, pval) = crate::stats::ks_exponential(&traj.integrated_rates);
        assert!(pval > 0.01, "{pval}");
    }
}

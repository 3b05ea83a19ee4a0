//! Equilibrium centroid dynamics of a pointer state.
//!
//! With the width relaxed to its fixed point, the centroid obeys the linear
//! Ito system
//!
//! ```text
//! dp = dW,    dx = p dt / M + beta dW,    beta = 2 sigma_inf^2 / hbar,
//! ```
//!
//! driven by a single increment `dW` of variance `D_p dt` per axis. The shared
//! noise makes `x` non-differentiable: `|dx - p dt / M|` scales as `sqrt(dt)`.

use crate::ensemble::{check_capacity, map_reduce, CHUNK, DEFAULT_CAPACITY};
use crate::error::{step, Error, Result};
use crate::noise::{axis_increment, NoiseStream};
use crate::probe::ProbeParams;
use crate::stats::{EnsembleStats, Estimate, Scalar};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidState {
    pub xbar: Vec3,
    pub pbar: Vec3,
    pub t: f64,
}

impl CentroidState {
    pub fn at_rest() -> Self {
        Self {
            xbar: Vec3::zeros(),
            pbar: Vec3::zeros(),
            t: 0.0,
        }
    }
}

/// Euler-Maruyama step; exact in distribution up to the `O(dt^2)` inertial
/// term dropped by using the old momentum.
pub fn step_centroid(state: &CentroidState, dt: f64, dw: Vec3, params: &ProbeParams) -> CentroidState {
    CentroidState {
        xbar: state.xbar + state.pbar * (dt / params.mass()) + dw * params.coordinate_gain(),
        pbar: state.pbar + dw,
        t: state.t + dt,
    }
}

/// Second moments per axis at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub t: f64,
    pub var_p: [Estimate; 3],
    pub var_x: [Estimate; 3],
    pub cov_xp: [Estimate; 3],
}

pub fn analytic_moments(params: &ProbeParams, t: f64) -> MomentReport {
    let d = params.momentum_diffusion();
    let m = params.mass();
    let b = params.coordinate_gain();
    let var_p = d * t;
    let var_x = d * (t.powi(3) / (3.0 * m * m) + b * b * t + b * t * t / m);
    let cov = d * (t * t / (2.0 * m) + b * t);
    MomentReport {
        t,
        var_p: [Estimate::exact(var_p); 3],
        var_x: [Estimate::exact(var_x); 3],
        cov_xp: [Estimate::exact(cov); 3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    /// Record moments every this many steps (and at the final step).
    pub sample_every: usize,
    /// Upper bound on `trajectories * steps`.
    pub capacity: f64,
}

impl EnsembleConfig {
    pub fn new(trajectories: usize, t_final: f64, dt: f64, seed: u64) -> Self {
        Self {
            trajectories,
            t_final,
            dt,
            seed,
            sample_every: usize::MAX,
            capacity: DEFAULT_CAPACITY,
        }
    }

    fn steps(&self) -> Result<usize> {
        crate::pointer::grid::step_count(self.t_final, self.dt)
    }

    /// Step indices at which moments are recorded.
    fn sample_steps(&self) -> Result<Vec<usize>> {
        let steps = self.steps()?;
        let every = self.sample_every.clamp(1, steps);
        let mut out: Vec<usize> = (1..=steps / every).map(|k| k * every).collect();
        if out.last() != Some(&steps) {
            out.push(steps);
        }
        Ok(out)
    }
}

/// Run independent centroid trajectories (trajectory `i` uses
/// `NoiseStream::axes(seed, i)`) and report ensemble moments at each sample
/// time. Bit-identical for any worker count.
pub fn ensemble_run(config: &EnsembleConfig, params: &ProbeParams) -> Result<Vec<MomentReport>> {
    if config.trajectories < 2 {
        return Err(Error::InvalidParameter {
            field: "n",
            value: config.trajectories as f64,
            reason: "need at least 2 trajectories",
        });
    }
    let dt = step(config.dt)?;
    let steps = config.steps()?;
    check_capacity(config.trajectories, steps, config.capacity)?;
    let samples = config.sample_steps()?;

    let stats = map_reduce(
        config.trajectories,
        CHUNK,
        |range| {
            let mut acc = vec![[EnsembleStats::default(); 3]; samples.len()];
            for traj in range {
                let mut streams = NoiseStream::axes(config.seed, traj as u64);
                let mut state = CentroidState::at_rest();
                let mut next_sample = 0;
                for i in 1..=steps {
                    let mut dw = Vec3::zeros();
                    for (axis, s) in streams.iter_mut().enumerate() {
                        dw[axis] = axis_increment(params, dt, s)?;
                    }
                    state = step_centroid(&state, dt, dw, params);
                    if samples[next_sample] == i {
                        for axis in 0..3 {
                            acc[next_sample][axis].push(state.xbar[axis], state.pbar[axis]);
                        }
                        next_sample += 1;
                    }
                }
            }
            Ok(acc)
        },
        |a, b| {
            for (sa, sb) in a.iter_mut().zip(&b) {
                for axis in 0..3 {
                    sa[axis].merge(&sb[axis]);
                }
            }
        },
    )?
    .expect("at least two trajectories");

    Ok(samples
        .iter()
        .zip(stats)
        .map(|(&i, per_axis)| {
            let m = per_axis.map(|s| s.moments());
            MomentReport {
                t: i as f64 * dt,
                var_p: m.map(|m| m.var_p),
                var_x: m.map(|m| m.var_x),
                cov_xp: m.map(|m| m.cov_xp),
            }
        })
        .collect())
}

/// One recorded trajectory, sampled every `sample_every` steps from `t = 0`.
pub fn simulate_centroid(
    params: &ProbeParams,
    t_final: f64,
    dt: f64,
    seed: u64,
    trajectory: u64,
    sample_every: usize,
) -> Result<Vec<CentroidState>> {
    let dt = step(dt)?;
    let steps = crate::pointer::grid::step_count(t_final, dt)?;
    let every = sample_every.max(1);
    let mut streams = NoiseStream::axes(seed, trajectory);
    let mut state = CentroidState::at_rest();
    let mut out = vec![state];
    for i in 1..=steps {
        let mut dw = Vec3::zeros();
        for (axis, s) in streams.iter_mut().enumerate() {
            dw[axis] = axis_increment(params, dt, s)?;
        }
        state = step_centroid(&state, dt, dw, params);
        state.t = i as f64 * dt;
        if i % every == 0 || i == steps {
            out.push(state);
        }
    }
    Ok(out)
}

/// Mean per-step departure from inertial flight, `|dx - p dt / M|`, along
/// the x axis.
pub fn discontinuity_metric(
    params: &ProbeParams,
    dt: f64,
    steps: usize,
    trajectories: usize,
    seed: u64,
) -> Result<Estimate> {
    let dt = step(dt)?;
    let acc = map_reduce(
        trajectories,
        CHUNK,
        |range| {
            let mut acc = Scalar::default();
            for traj in range {
                let mut stream = NoiseStream::for_axis(seed, traj as u64, 0);
                let (mut x, mut p) = (0.0, 0.0);
                for _ in 0..steps {
                    let dw = axis_increment(params, dt, &mut stream)?;
                    let next = step_centroid(
                        &CentroidState {
                            xbar: Vec3::new(x, 0.0, 0.0),
                            pbar: Vec3::new(p, 0.0, 0.0),
                            t: 0.0,
                        },
                        dt,
                        Vec3::new(dw, 0.0, 0.0),
                        params,
                    );
                    acc.push((next.xbar.x - x - p / params.mass() * dt).abs());
                    x = next.xbar.x;
                    p = next.pbar.x;
                }
            }
            Ok(acc)
        },
        |a, b| a.merge(&b),
    )?
    .unwrap_or_default();
    Ok(Estimate {
        value: acc.mean(),
        stderr: acc.stderr(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ProbeParams {
        ProbeParams::new(1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn noiseless_step_is_inertial() {
        let p = ProbeParams::new(2.0, 1.0, 0.5).unwrap();
        let s = CentroidState {
            xbar: Vec3::new(1.0, 0.0, 0.0),
            pbar: Vec3::new(4.0, -2.0, 0.0),
            t: 0.0,
        };
        let n = step_centroid(&s, 0.1, Vec3::zeros(), &p);
        assert_eq!(n.xbar, Vec3::new(1.2, -0.1, 0.0));
        assert_eq!(n.pbar, s.pbar);
    }

    #[test]
    fn analytic_limits() {
        let p = unit();
        let zero = analytic_moments(&p, 0.0);
        assert_eq!(zero.var_x[0].value, 0.0);
        assert_eq!(zero.cov_xp[2].value, 0.0);
        let a = analytic_moments(&p, 1.3);
        let b = analytic_moments(&p, 2.6);
        assert_eq!(b.var_p[0].value, 2.0 * a.var_p[0].value);
        for t in [0.01, 1.0, 10.0] {
            let m = analytic_moments(&p, t);
            let c = m.cov_xp[0].value;
            assert!(c * c <= m.var_x[0].value * m.var_p[0].value);
        }
    }

    #[test]
    fn small_time_covariance_is_shared_noise() {
        // At t = 0.01 the beta D t term carries the covariance; plain
        // Brownian motion (beta = 0) would give D t^2 / 2M only.
        let p = unit();
        let t = 0.01;
        let m = analytic_moments(&p, t);
        let shared = p.coordinate_gain() * p.momentum_diffusion() * t;
        assert!((m.cov_xp[0].value / shared - 1.0).abs() < 0.1);
    }

    #[test]
    fn rejects_oversized_requests() {
        let p = unit();
        let mut c = EnsembleConfig::new(1000, 10.0, 1e-3, 1);
        c.capacity = 1e6;
        assert!(matches!(ensemble_run(&c, &p), Err(Error::Capacity { .. })));
        let c = EnsembleConfig::new(1, 1.0, 1e-3, 1);
        assert!(ensemble_run(&c, &p).is_err());
    }

    #[test]
    fn reproducible_and_worker_independent() {
        let p = unit();
        let mut c = EnsembleConfig::new(150, 1.0, 1e-2, 9);
        c.sample_every = 25;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_run(&c, &p).unwrap())
        };
        let a = run(1);
        assert_eq!(a.len(), 4);
        assert_eq!(a, run(1));
        assert_eq!(a, run(4));
    }

    #[test]
    fn ensemble_matches_exact_moments() {
        let p = unit();
        let mut c = EnsembleConfig::new(4000, 2.0, 1e-3, 3);
        c.sample_every = 1000;
        for report in ensemble_run(&c, &p).unwrap() {
            let exact = analytic_moments(&p, report.t);
            for axis in 0..3 {
                assert!(report.var_p[axis].within(exact.var_p[axis].value, 4.0));
                assert!(report.cov_xp[axis].within(exact.cov_xp[axis].value, 4.0));
                assert!(report.var_x[axis].within(exact.var_x[axis].value, 4.0));
            }
        }
    }

    #[test]
    fn heavier_balls_fly_straighter() {
        // Var[x] / (p0 t / M)^2 with p0 scaled so the ballistic speed is fixed.
        let t = 1.0;
        let ratios: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&m| {
                let p = ProbeParams::new(m, 1.0, 0.5).unwrap();
                analytic_moments(&p, t).var_x[0].value / (t * t)
            })
            .collect();
        assert!(ratios[0] > ratios[1] && ratios[1] > ratios[2], "{ratios:?}");
    }

    #[test]
    fn departure_from_inertial_flight_scales_as_sqrt_dt() {
        let p = unit();
        let expect = |dt: f64| p.coordinate_gain() * (2.0 * p.momentum_diffusion() * dt / std::f64::consts::PI).sqrt();
        for dt in [1e-2, 1e-3] {
            let m = discontinuity_metric(&p, dt, 200, 50, 4).unwrap();
            assert!(m.within(expect(dt), 4.0), "{dt}: {m:?}");
        }
    }
}

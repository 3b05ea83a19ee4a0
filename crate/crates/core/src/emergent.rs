//! Observable field and the emergent pair force between two balls.
//!
//! The observable potential is the noise plus `2 lambda` times the
//! mean-field potential sourced by the balls' expected mass densities. Fed
//! back into the centroid dynamics it produces the pair force
//! `-2 lambda G M^2 / d^2`, which is Newton's law at `lambda = 1/2`.
//!
//! The acceptance experiment is quasi-static: each window re-pins the balls
//! at separation `d`, integrates their centroid SDEs for a short time and
//! records the momentum gained. Window statistics are averaged over all
//! pairs before fitting, so the position noise carried by the shared
//! increment does not bias the fit.

use std::sync::Arc;

use nalgebra::Matrix3;

use crate::ensemble::{check_capacity, map_reduce, CHUNK, DEFAULT_CAPACITY};
use crate::error::{positive, step, Error, Result};
use crate::noise::{axis_increment, BallStencil, FieldSampler, ForceProjector, Lattice, NoiseStream};
use crate::pointer::grid::step_count;
use crate::probe::ProbeParams;
use crate::stats::{Estimate, Scalar};
use crate::Vec3;

/// Potential of one uniform ball at distance `r` from its centre.
fn ball_potential(r: f64, params: &ProbeParams) -> f64 {
    let (g, m, big_r) = (params.g(), params.mass(), params.radius());
    if r >= big_r {
        -g * m / r
    } else {
        -g * m * (3.0 * big_r * big_r - r * r) / (2.0 * big_r.powi(3))
    }
}

/// Mean-field potential of balls with point-sharp centroids `centers`.
pub fn mean_field_potential(centers: &[Vec3], r: Vec3, params: &ProbeParams) -> f64 {
    centers.iter().map(|c| ball_potential((r - c).norm(), params)).sum()
}

/// Emergent force on the ball at `x1` from the ball at `x2`.
pub fn pair_force(x1: Vec3, x2: Vec3, params: &ProbeParams) -> Result<Vec3> {
    let sep = x1 - x2;
    let d = sep.norm();
    if d < 2.0 * params.radius() {
        return Err(Error::Overlap { d, t: 0.0 });
    }
    Ok(-2.0 * params.lambda() * params.g() * params.mass().powi(2) / d.powi(3) * sep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseCorrelation {
    /// Disjoint streams per ball.
    Independent,
    /// Both forces from one lattice field sample per step.
    FieldKernel { nodes_per_diameter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    None,
    MeanField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pinning {
    /// Reset positions and momenta at the start of every window.
    QuasiStatic,
    /// Continuous evolution; windows only segment the record.
    Free,
}

/// Two identical balls released from rest at `(+-d/2, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeEnsembleConfig {
    pub params: ProbeParams,
    pub separation: f64,
    pub noise: NoiseCorrelation,
    pub feedback: Feedback,
    pub pinning: Pinning,
    pub window: f64,
    pub pairs: usize,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    pub capacity: f64,
}

impl ProbeEnsembleConfig {
    pub fn quasi_static(params: ProbeParams, separation: f64, pairs: usize, t_final: f64, seed: u64) -> Self {
        Self {
            params,
            separation,
            noise: NoiseCorrelation::Independent,
            feedback: Feedback::MeanField,
            pinning: Pinning::QuasiStatic,
            window: 0.05,
            pairs,
            t_final,
            dt: 0.005,
            seed,
            capacity: DEFAULT_CAPACITY,
        }
    }

    fn validate(&self) -> Result<(usize, usize)> {
        let dt = step(self.dt)?;
        positive("d", self.separation)?;
        if self.separation < 2.0 * self.params.radius() {
            return Err(Error::Overlap {
                d: self.separation,
                t: 0.0,
            });
        }
        let per_window = step_count(self.window, dt)?;
        let windows = step_count(self.t_final, self.window)?;
        if self.pairs == 0 {
            return Err(Error::InvalidParameter {
                field: "pairs",
                value: 0.0,
                reason: "need at least one pair",
            });
        }
        if matches!(self.noise, NoiseCorrelation::FieldKernel { .. }) && self.pinning != Pinning::QuasiStatic {
            return Err(Error::Incompatible(
                "field_kernel noise needs quasi-static pinning (the lattice is fixed)".into(),
            ));
        }
        check_capacity(self.pairs, per_window * windows, self.capacity)?;
        Ok((per_window, windows))
    }
}

/// Statistics of one window, accumulated over pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindowStats {
    /// Window mean of `(e(t) . e0) / d(t)^2`, `e0` the initial unit vector
    /// from ball 2 to ball 1.
    pub inv_d2: Scalar,
    /// Relative momentum drift `(p1 - p2) . e0 / (2 tau)`.
    pub drift: Scalar,
    /// Drift of ball 1 alone, `p1 . e0 / tau`.
    pub drift_probe1: Scalar,
    /// Total momentum drift `(p1 + p2) . e0 / tau`.
    pub total: Scalar,
    /// Separation at the window end.
    pub separation: Scalar,
}

impl WindowStats {
    pub fn push(&mut self, inv_d2: f64, drift: f64, drift_probe1: f64, total: f64, separation: f64) {
        self.inv_d2.push(inv_d2);
        self.drift.push(drift);
        self.drift_probe1.push(drift_probe1);
        self.total.push(total);
        self.separation.push(separation);
    }

    pub fn merge(&mut self, other: &WindowStats) {
        self.inv_d2.merge(&other.inv_d2);
        self.drift.merge(&other.drift);
        self.drift_probe1.merge(&other.drift_probe1);
        self.total.merge(&other.total);
        self.separation.merge(&other.separation);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoProbeRecords {
    pub window: f64,
    pub pairs: usize,
    pub windows: Vec<WindowStats>,
}

impl TwoProbeRecords {
    /// All windows pooled.
    pub fn pooled(&self) -> WindowStats {
        let mut acc = WindowStats::default();
        self.windows.iter().for_each(|w| acc.merge(w));
        acc
    }
}

struct Ball {
    x: Vec3,
    p: Vec3,
}

fn step_pair(
    balls: &mut [Ball; 2],
    kicks: [Vec3; 2],
    config: &ProbeEnsembleConfig,
    t: f64,
) -> Result<()> {
    let params = &config.params;
    let dt = config.dt;
    let force = match config.feedback {
        Feedback::None => Vec3::zeros(),
        Feedback::MeanField => pair_force(balls[0].x, balls[1].x, params).map_err(|_| Error::Overlap {
            d: (balls[0].x - balls[1].x).norm(),
            t,
        })?,
    };
    let forces = [force, -force];
    let gain = params.coordinate_gain();
    for ((ball, kick), f) in balls.iter_mut().zip(kicks).zip(forces) {
        ball.x += ball.p * (dt / params.mass()) + kick * gain;
        ball.p += f * dt + kick;
    }
    let d = (balls[0].x - balls[1].x).norm();
    if d < 2.0 * params.radius() {
        return Err(Error::Overlap { d, t: t + dt });
    }
    Ok(())
}

enum Kicks {
    Independent([[NoiseStream; 3]; 2]),
    Field(Arc<ForceProjector>, NoiseStream),
}

impl Kicks {
    fn draw(&mut self, params: &ProbeParams, dt: f64) -> Result<[Vec3; 2]> {
        match self {
            Kicks::Independent(streams) => {
                let mut out = [Vec3::zeros(); 2];
                for (o, s) in out.iter_mut().zip(streams.iter_mut()) {
                    for axis in 0..3 {
                        o[axis] = axis_increment(params, dt, &mut s[axis])?;
                    }
                }
                Ok(out)
            }
            Kicks::Field(proj, stream) => {
                let f = proj.sample(stream);
                Ok([f[0] * dt, f[1] * dt])
            }
        }
    }
}

fn field_projector(config: &ProbeEnsembleConfig, nodes_per_diameter: usize) -> Result<ForceProjector> {
    let (x1, x2) = initial_positions(config);
    let lattice = Arc::new(Lattice::ball_cover(&[x1, x2], config.params.radius(), nodes_per_diameter));
    let sampler = FieldSampler::new(Arc::clone(&lattice), &config.params, config.dt)?;
    let s1 = BallStencil::new(&lattice, x1, &config.params)?;
    let s2 = BallStencil::new(&lattice, x2, &config.params)?;
    Ok(ForceProjector::new(&sampler, &[&s1, &s2]))
}

fn initial_positions(config: &ProbeEnsembleConfig) -> (Vec3, Vec3) {
    let half = Vec3::new(0.5 * config.separation, 0.0, 0.0);
    (half, -half)
}

/// Simulate `config.pairs` independent pairs. Pair `i` draws from streams
/// `2i` and `2i + 1` (independent noise) or the auxiliary stream of `i`
/// (field noise). Bit-identical for any worker count.
pub fn simulate_two_probe(config: &ProbeEnsembleConfig) -> Result<TwoProbeRecords> {
    let (per_window, windows) = config.validate()?;
    let projector = match config.noise {
        NoiseCorrelation::Independent => None,
        NoiseCorrelation::FieldKernel { nodes_per_diameter } => Some(Arc::new(field_projector(config, nodes_per_diameter)?)),
    };
    let tau = per_window as f64 * config.dt;
    let (x1, x2) = initial_positions(config);
    let stats = map_reduce(
        config.pairs,
        CHUNK,
        |range| {
            let mut acc = vec![WindowStats::default(); windows];
            for pair in range {
                let mut kicks = match &projector {
                    None => Kicks::Independent([
                        NoiseStream::axes(config.seed, 2 * pair as u64),
                        NoiseStream::axes(config.seed, 2 * pair as u64 + 1),
                    ]),
                    Some(p) => Kicks::Field(Arc::clone(p), NoiseStream::auxiliary(config.seed, pair as u64)),
                };
                let mut balls = [Ball { x: x1, p: Vec3::zeros() }, Ball { x: x2, p: Vec3::zeros() }];
                let mut t = 0.0;
                for stats in acc.iter_mut() {
                    if config.pinning == Pinning::QuasiStatic {
                        balls = [Ball { x: x1, p: Vec3::zeros() }, Ball { x: x2, p: Vec3::zeros() }];
                    }
                    let e_start = (balls[0].x - balls[1].x).normalize();
                    let p_start = [balls[0].p, balls[1].p];
                    let mut inv_d2 = 0.0;
                    for _ in 0..per_window {
                        let k = kicks.draw(&config.params, config.dt)?;
                        let sep = balls[0].x - balls[1].x;
                        inv_d2 += sep.dot(&e_start) / sep.norm().powi(3);
                        step_pair(&mut balls, k, config, t)?;
                        t += config.dt;
                    }
                    let dp1 = (balls[0].p - p_start[0]).dot(&e_start);
                    let dp2 = (balls[1].p - p_start[1]).dot(&e_start);
                    stats.push(
                        inv_d2 / per_window as f64,
                        (dp1 - dp2) / (2.0 * tau),
                        dp1 / tau,
                        (dp1 + dp2) / tau,
                        (balls[0].x - balls[1].x).norm(),
                    );
                }
            }
            Ok(acc)
        },
        |a, b| a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y)),
    )?
    .expect("at least one pair");
    Ok(TwoProbeRecords {
        window: tau,
        pairs: config.pairs,
        windows: stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCouplingReport {
    pub g_eff: f64,
    pub stderr: f64,
    pub n_trajectories: usize,
    pub windows: usize,
    pub window: f64,
    /// `2 lambda G`, the expected value of `g_eff`.
    pub target: f64,
    /// Mean total momentum drift of a pair (zero under conservation).
    pub total_drift: Estimate,
    /// Mean drift of ball 1 along the separation.
    pub probe_drift: Estimate,
}

/// Minimum number of pairs for a coupling estimate.
pub const MIN_PAIRS: usize = 100;

/// Fit the pair-averaged window drifts to `-c <1/d^2>` through the origin.
/// `G_eff = c / M^2` is the coupling an observer would read off Newton's law;
/// its expected value is `2 lambda G`.
pub fn estimate_effective_g(records: &TwoProbeRecords, config: &ProbeEnsembleConfig) -> Result<EffectiveCouplingReport> {
    if records.pairs < MIN_PAIRS {
        return Err(Error::LowStatistics {
            what: "emergent coupling fit (pairs)",
            have: records.pairs,
            need: MIN_PAIRS,
        });
    }
    let k = records.windows.len();
    if k < 2 {
        return Err(Error::LowStatistics {
            what: "emergent coupling fit (windows)",
            have: k,
            need: 2,
        });
    }
    let w: Vec<f64> = records.windows.iter().map(|s| s.inv_d2.mean()).collect();
    let y: Vec<f64> = records.windows.iter().map(|s| s.drift.mean()).collect();
    let sww: f64 = w.iter().map(|v| v * v).sum();
    let c = -w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sww;
    let rss: f64 = w.iter().zip(&y).map(|(a, b)| (b + c * a).powi(2)).sum();
    let c_err = (rss / (k - 1) as f64 / sww).sqrt();
    let scale = config.params.mass().powi(2);
    let g_eff = c / scale;
    let stderr = c_err / scale;
    if !(stderr <= 0.5 * g_eff.abs()) {
        return Err(Error::IllConditionedFit {
            relative_stderr: stderr / g_eff.abs(),
        });
    }
    let pooled = records.pooled();
    Ok(EffectiveCouplingReport {
        g_eff,
        stderr,
        n_trajectories: records.pairs,
        windows: k,
        window: records.window,
        target: 2.0 * config.params.lambda() * config.params.g(),
        total_drift: Estimate {
            value: pooled.total.mean(),
            stderr: pooled.total.stderr(),
        },
        probe_drift: Estimate {
            value: pooled.drift_probe1.mean(),
            stderr: pooled.drift_probe1.stderr(),
        },
    })
}

/// Empirical and lattice-predicted cross-covariance of the forces on two
/// balls driven by one field sample, `Cov(F1_i, F2_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCovarianceReport {
    pub empirical: Matrix3<f64>,
    pub stderr: Matrix3<f64>,
    pub predicted: Matrix3<f64>,
}

pub fn force_cross_covariance(
    params: &ProbeParams,
    separation: f64,
    nodes_per_diameter: usize,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<CrossCovarianceReport> {
    let mut config = ProbeEnsembleConfig::quasi_static(*params, separation, 1, 1.0, seed);
    config.dt = dt;
    config.noise = NoiseCorrelation::FieldKernel { nodes_per_diameter };
    config.validate()?;
    let proj = Arc::new(field_projector(&config, nodes_per_diameter)?);
    let full = proj.covariance();
    let predicted = Matrix3::from_fn(|i, j| full[(i, 3 + j)]);
    // Per-chunk sums of products; the mean force is zero by construction.
    let sums = map_reduce(
        samples,
        CHUNK,
        |range| {
            let mut acc = [[Scalar::default(); 3]; 3];
            for s in range {
                let mut stream = NoiseStream::auxiliary(seed, s as u64);
                let f = proj.sample(&mut stream);
                for (i, row) in acc.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        cell.push(f[0][i] * f[1][j]);
                    }
                }
            }
            Ok(acc)
        },
        |a, b| {
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j].merge(&b[i][j]);
                }
            }
        },
    )?
    .ok_or(Error::LowStatistics {
        what: "force covariance samples",
        have: 0,
        need: 2,
    })?;
    Ok(CrossCovarianceReport {
        empirical: Matrix3::from_fn(|i, j| sums[i][j].mean()),
        stderr: Matrix3::from_fn(|i, j| sums[i][j].stderr()),
        predicted,
    })
}

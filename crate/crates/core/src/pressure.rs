//! Classical analogue: a heavy rigid ball in a thin ideal gas.
//!
//! Molecules hit the ball as a Poisson process with rate
//! `Lambda = n 4 pi R^2 <v> / 4`. Each hit is an elastic hard-sphere collision
//! with a force perpendicular to the surface, so the ball's velocity jumps
//! along the impact normal and its path is a broken line. Summing the jump
//! magnitudes over a long run recovers the ambient pressure:
//!
//! ```text
//! P = M / (4 pi R^2 T) * sum_k |dv_k|
//! ```
//!
//! Hits are drawn by thinning against the exact relative flux onto the
//! moving ball, which supplies the drag that lets it thermalize. The
//! estimator itself assumes `m << M` and a ball much slower than the
//! molecules; the first is enforced, the second checked after the run.

use std::f64::consts::PI;

use crate::error::{positive, Error, Result};
use crate::noise::NoiseStream;
use crate::stats::{fit_line, LineFit, Scalar};
use crate::Vec3;

/// Largest allowed molecule-to-ball mass ratio.
pub const MAX_MASS_RATIO: f64 = 1e-3;
/// The run is flagged when the ball's r.m.s. speed exceeds this fraction of
/// `<v>`.
pub const MAX_SPEED_FRACTION: f64 = 0.1;
/// Minimum number of collisions for a pressure estimate.
pub const MIN_COLLISIONS: usize = 1000;
const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasConfig {
    /// Molecule number density.
    pub density: f64,
    pub molecule_mass: f64,
    /// Temperature in energy units.
    pub temperature: f64,
    pub ball_mass: f64,
    pub ball_radius: f64,
    pub duration: f64,
}

impl GasConfig {
    pub fn new(
        density: f64,
        molecule_mass: f64,
        temperature: f64,
        ball_mass: f64,
        ball_radius: f64,
        duration: f64,
    ) -> Result<Self> {
        if !(density >= 0.0 && density.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "n",
                value: density,
                reason: "must be finite and non-negative",
            });
        }
        positive("m", molecule_mass)?;
        positive("T_gas", temperature)?;
        positive("M", ball_mass)?;
        positive("R", ball_radius)?;
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "T",
                value: duration,
                reason: "must be finite and non-negative",
            });
        }
        if molecule_mass / ball_mass > MAX_MASS_RATIO {
            return Err(Error::InvalidParameter {
                field: "m",
                value: molecule_mass,
                reason: "molecule mass must not exceed 1e-3 of the ball mass",
            });
        }
        Ok(Self {
            density,
            molecule_mass,
            temperature,
            ball_mass,
            ball_radius,
            duration,
        })
    }

    /// Mean molecular speed `sqrt(8 T / (pi m))`.
    pub fn mean_speed(&self) -> f64 {
        (8.0 * self.temperature / (PI * self.molecule_mass)).sqrt()
    }

    pub fn surface(&self) -> f64 {
        4.0 * PI * self.ball_radius.powi(2)
    }

    pub fn collision_rate(&self) -> f64 {
        self.density * self.surface() * self.mean_speed() / 4.0
    }

    pub fn reduced_mass(&self) -> f64 {
        self.molecule_mass * self.ball_mass / (self.molecule_mass + self.ball_mass)
    }

    /// Ideal-gas pressure `n T`.
    pub fn ideal_pressure(&self) -> f64 {
        self.density * self.temperature
    }

    /// Duration giving `collisions` expected events.
    pub fn with_expected_collisions(&self, collisions: f64) -> Result<Self> {
        let mut out = *self;
        out.duration = collisions / self.collision_rate();
        GasConfig::new(
            out.density,
            out.molecule_mass,
            out.temperature,
            out.ball_mass,
            out.ball_radius,
            out.duration,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionRecord {
    pub time: f64,
    /// Outward unit normal at the impact point.
    pub normal: Vec3,
    pub molecule_velocity: Vec3,
    /// Ball velocity before the hit.
    pub ball_velocity: Vec3,
    /// Ball velocity jump.
    pub dv: Vec3,
}

impl CollisionRecord {
    /// Molecule velocity after the hit, from momentum conservation.
    pub fn molecule_outgoing(&self, gas: &GasConfig) -> Vec3 {
        self.molecule_velocity - self.dv * (gas.ball_mass / gas.molecule_mass)
    }
}

fn unit_vector(stream: &mut NoiseStream) -> Vec3 {
    loop {
        let v = Vec3::new(stream.standard_normal(), stream.standard_normal(), stream.standard_normal());
        let r = v.norm();
        if r > 1e-12 {
            return v / r;
        }
    }
}

fn thermal_speed(gas: &GasConfig) -> f64 {
    (gas.temperature / gas.molecule_mass).sqrt()
}

/// Candidate rate `n pi R^2 (<v> + |V|)`, an upper bound on the true
/// collision rate `n pi R^2 E|u - V|` of a ball moving at `V`.
fn candidate_rate(gas: &GasConfig, ball_velocity: Vec3) -> f64 {
    gas.density * PI * gas.ball_radius.powi(2) * (gas.mean_speed() + ball_velocity.norm())
}

/// One thinning candidate. Proposals come from `f(u) (|u| + |V|)` as a
/// mixture of the speed-weighted and plain Maxwellians; acceptance with
/// probability `|u - V| / (|u| + |V|)` leaves hits distributed as
/// `f(u) |u - V|`. The impact normal is cosine-weighted about `-w`.
fn propose(gas: &GasConfig, ball_velocity: Vec3, t: f64, stream: &mut NoiseStream) -> Option<CollisionRecord> {
    let sigma = thermal_speed(gas);
    let mean = gas.mean_speed();
    let speed_v = ball_velocity.norm();
    let u = if stream.uniform() * (mean + speed_v) < mean {
        let speed = sigma * (2.0 * (stream.exponential() + stream.exponential())).sqrt();
        unit_vector(stream) * speed
    } else {
        Vec3::new(stream.standard_normal(), stream.standard_normal(), stream.standard_normal()) * sigma
    };
    let w = u - ball_velocity;
    let accept = stream.uniform() * (u.norm() + speed_v);
    if accept >= w.norm() {
        return None;
    }
    let axis = -w.normalize();
    let cos = stream.uniform().sqrt();
    let phi = 2.0 * PI * stream.uniform();
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    let sin = (1.0 - cos * cos).sqrt();
    let normal = (axis * cos + (e1 * phi.cos() + e2 * phi.sin()) * sin).normalize();
    let approach = w.dot(&normal);
    (approach < 0.0).then(|| CollisionRecord {
        time: t,
        normal,
        molecule_velocity: u,
        ball_velocity,
        dv: normal * (2.0 * gas.reduced_mass() / gas.ball_mass * approach),
    })
}

/// One molecule hit at time `t` on a ball moving at `ball_velocity`:
/// molecule velocity weighted by the relative flux `|u - V|`, impact point
/// weighted by the normal flux, elastic hard-sphere reflection.
pub fn sample_collision(gas: &GasConfig, ball_velocity: Vec3, t: f64, stream: &mut NoiseStream) -> CollisionRecord {
    loop {
        if let Some(hit) = propose(gas, ball_velocity, t, stream) {
            return hit;
        }
    }
}

/// Ball state at a trajectory vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallState {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasRun {
    /// Vertices of the broken line: start, every collision, end.
    pub trajectory: Vec<BallState>,
    pub collisions: Vec<CollisionRecord>,
    /// Largest ball speed reached.
    pub max_speed: f64,
    /// Time-averaged r.m.s. ball speed.
    pub rms_speed: f64,
    /// Time-averaged ball kinetic energy per axis.
    pub mean_kinetic_energy_per_axis: f64,
    /// Set when the slow-ball assumption broke down.
    pub regime_warning: Option<String>,
}

/// Event-driven run of a ball starting at rest at the origin.
pub fn simulate_gas_brownian(gas: &GasConfig, seed: u64) -> GasRun {
    simulate_with_stream(gas, &mut NoiseStream::new(seed, 0), true)
}

fn simulate_with_stream(gas: &GasConfig, stream: &mut NoiseStream, keep_path: bool) -> GasRun {
    let mut state = BallState {
        t: 0.0,
        x: Vec3::zeros(),
        v: Vec3::zeros(),
    };
    let mut trajectory = vec![state];
    let mut collisions = Vec::new();
    let mut max_speed: f64 = 0.0;
    let mut energy_time = 0.0;
    let half_m = 0.5 * gas.ball_mass;
    loop {
        let rate = candidate_rate(gas, state.v);
        let wait = if rate > 0.0 {
            stream.exponential() / rate
        } else {
            f64::INFINITY
        };
        let next = (state.t + wait).min(gas.duration);
        let flight = next - state.t;
        energy_time += half_m * state.v.norm_squared() * flight;
        state.x += state.v * flight;
        state.t = next;
        if next >= gas.duration {
            break;
        }
        let Some(hit) = propose(gas, state.v, state.t, stream) else {
            continue;
        };
        state.v += hit.dv;
        max_speed = max_speed.max(state.v.norm());
        collisions.push(hit);
        if keep_path {
            trajectory.push(state);
        }
    }
    trajectory.push(state);
    let mean_energy = if gas.duration > 0.0 {
        energy_time / gas.duration
    } else {
        0.0
    };
    let rms_speed = (mean_energy / half_m).sqrt();
    GasRun {
        trajectory,
        collisions,
        max_speed,
        rms_speed,
        mean_kinetic_energy_per_axis: mean_energy / 3.0,
        regime_warning: regime_check(gas, rms_speed),
    }
}

/// Warning text when `rms_speed` breaks the slow-ball assumption.
pub fn regime_check(gas: &GasConfig, rms_speed: f64) -> Option<String> {
    let limit = MAX_SPEED_FRACTION * gas.mean_speed();
    (rms_speed > limit).then(|| {
        format!("ball r.m.s. speed {rms_speed:.4} exceeds 0.1 <v> = {limit:.4}; the slow-ball flux approximation is not reliable")
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureEstimate {
    pub pressure: f64,
    /// Batch-means standard error over equal time slices.
    pub stderr: f64,
    pub collisions: usize,
}

pub fn pressure_estimator(records: &[CollisionRecord], gas: &GasConfig) -> Result<PressureEstimate> {
    if records.len() < MIN_COLLISIONS {
        return Err(Error::LowStatistics {
            what: "pressure estimate (collisions)",
            have: records.len(),
            need: MIN_COLLISIONS,
        });
    }
    positive("T", gas.duration)?;
    let scale = gas.ball_mass / (gas.surface() * gas.duration);
    let mut total = 0.0;
    let mut batches = [0.0; BATCHES];
    for r in records {
        let jump = r.dv.norm();
        total += jump;
        let b = ((r.time / gas.duration * BATCHES as f64) as usize).min(BATCHES - 1);
        batches[b] += jump;
    }
    let batch_stats: Scalar = batches.iter().map(|s| s * scale * BATCHES as f64).collect();
    Ok(PressureEstimate {
        pressure: total * scale,
        stderr: batch_stats.stderr(),
        collisions: records.len(),
    })
}

/// Spread of the estimator across independent runs at each expected
/// collision count.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// `(expected collisions, mean estimate, sample standard deviation)`.
    pub points: Vec<(f64, f64, f64)>,
    /// Fit of `log10 sd` against `log10 N`.
    pub fit: LineFit,
}

/// Run `replicates` independent gases for each collision count. Replicate
/// `r` of level `i` uses stream `i * replicates + r`.
pub fn convergence_study(gas: &GasConfig, counts: &[f64], replicates: usize, seed: u64) -> Result<ConvergenceStudy> {
    if replicates < 2 || counts.len() < 2 {
        return Err(Error::LowStatistics {
            what: "convergence study",
            have: replicates.min(counts.len()),
            need: 2,
        });
    }
    use rayon::prelude::*;
    let points = counts
        .iter()
        .enumerate()
        .map(|(level, &n)| {
            let g = gas.with_expected_collisions(n)?;
            let estimates = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let mut stream = NoiseStream::new(seed, (level * replicates + r) as u64);
                    let run = simulate_with_stream(&g, &mut stream, false);
                    let scale = g.ball_mass / (g.surface() * g.duration);
                    run.collisions.iter().map(|c| c.dv.norm()).sum::<f64>() * scale
                })
                .collect::<Vec<_>>();
            let acc: Scalar = estimates.into_iter().collect();
            Ok((n, acc.mean(), acc.variance().sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.2.log10()).collect();
    Ok(ConvergenceStudy {
        fit: fit_line(&x, &y),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Scalar;

    fn gas(duration: f64) -> GasConfig {
        GasConfig::new(1e-3, 1e-3, 1.0, 1.0, 1.0, duration).unwrap()
    }

    #[test]
    fn validation() {
        assert!(GasConfig::new(1e-3, 2e-3, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(GasConfig::new(1e-3, 1e-3, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(GasConfig::new(-1.0, 1e-3, 1.0, 1.0, 1.0, 1.0).is_err());
        let g = gas(1.0);
        assert!((g.collision_rate() - 1e-3 * PI * g.mean_speed()).abs() < 1e-15);
    }

    #[test]
    fn collisions_are_radial_and_conserve_momentum() {
        let g = gas(1.0);
        let mut s = NoiseStream::new(1, 0);
        let v = Vec3::new(0.3, -0.2, 0.1);
        for _ in 0..10_000 {
            let c = sample_collision(&g, v, 0.0, &mut s);
            assert!(c.dv.norm() > 0.0);
            assert!(c.dv.cross(&c.normal).norm() <= 1e-12 * c.dv.norm());
            let before = c.molecule_velocity * g.molecule_mass + v * g.ball_mass;
            let after = c.molecule_outgoing(&g) * g.molecule_mass + (v + c.dv) * g.ball_mass;
            assert!((before - after).norm() <= 1e-12 * before.norm());
            // Elastic: kinetic energy is conserved too.
            let e = |m: f64, u: Vec3| 0.5 * m * u.norm_squared();
            let e0 = e(g.molecule_mass, c.molecule_velocity) + e(g.ball_mass, v);
            let e1 = e(g.molecule_mass, c.molecule_outgoing(&g)) + e(g.ball_mass, v + c.dv);
            assert!((e0 - e1).abs() <= 1e-12 * e0);
        }
    }

    #[test]
    fn heavy_ball_limit() {
        let mut s = NoiseStream::new(2, 0);
        let mut last_de = f64::INFINITY;
        for big in [1e3, 1e5, 1e7] {
            let g = GasConfig::new(1e-3, 1.0, 1.0, big, 1.0, 1.0).unwrap();
            let (mut de, mut dp) = (Scalar::default(), Scalar::default());
            for _ in 0..2000 {
                let c = sample_collision(&g, Vec3::zeros(), 0.0, &mut s);
                de.push(0.5 * big * c.dv.norm_squared());
                dp.push(big * c.dv.norm());
            }
            assert!(de.mean() < 0.02 * last_de);
            assert!((dp.mean() / (2.0 * (PI / 2.0).sqrt()) - 1.0).abs() < 0.05);
            last_de = de.mean();
        }
    }

    #[test]
    fn mean_momentum_transfer_matches_flux_average() {
        // Ball at rest: E|dp| = 2 mu E[s], E[s] = sqrt(pi T / 2m) for the
        // flux-weighted normal speed s.
        let g = gas(1.0);
        let mut s = NoiseStream::new(3, 0);
        let acc: Scalar = (0..100_000)
            .map(|_| sample_collision(&g, Vec3::zeros(), 0.0, &mut s).dv.norm() * g.ball_mass)
            .collect();
        let oracle = 2.0 * g.reduced_mass() * (PI * g.temperature / (2.0 * g.molecule_mass)).sqrt();
        assert!((acc.mean() / oracle - 1.0).abs() < 0.01, "{} {oracle}", acc.mean());
    }

    #[test]
    fn moving_ball_hit_rate() {
        let g = gas(1.0);
        let v = Vec3::new(0.0, 0.0, 1.5 * thermal_speed(&g));
        let mut s = NoiseStream::new(12, 0);
        let accepted: Scalar = (0..200_000)
            .map(|_| propose(&g, v, 0.0, &mut s).is_some() as u8 as f64)
            .collect();
        let mut s = NoiseStream::new(13, 0);
        let relative: Scalar = (0..200_000)
            .map(|_| {
                let u = Vec3::new(s.standard_normal(), s.standard_normal(), s.standard_normal()) * thermal_speed(&g);
                (u - v).norm()
            })
            .collect();
        let expected = relative.mean() / (g.mean_speed() + v.norm());
        assert!((accepted.mean() - expected).abs() < 4.0 * (accepted.stderr() + relative.stderr() / (g.mean_speed() + v.norm())));
        // Ball at rest: every candidate is a hit.
        assert!((0..1000).all(|_| propose(&g, Vec3::zeros(), 0.0, &mut s).is_some()));
    }

    #[test]
    fn empty_gas_flies_straight() {
        let g = GasConfig::new(0.0, 1e-3, 1.0, 1.0, 1.0, 50.0).unwrap();
        let run = simulate_gas_brownian(&g, 4);
        assert!(run.collisions.is_empty());
        assert_eq!(run.trajectory.len(), 2);
        assert_eq!(run.trajectory[1].x, Vec3::zeros());
        assert!(matches!(pressure_estimator(&run.collisions, &g), Err(Error::LowStatistics { .. })));
    }

    #[test]
    fn event_counts_are_poisson() {
        let g = gas(1.0).with_expected_collisions(40.0).unwrap();
        let counts: Scalar = (0..2000)
            .map(|r| simulate_with_stream(&g, &mut NoiseStream::new(5, r), false).collisions.len() as f64)
            .collect();
        let mean = g.collision_rate() * g.duration;
        assert!((counts.mean() - mean).abs() < 3.0 * counts.stderr());
        let dispersion = counts.variance() / counts.mean();
        assert!((0.9..=1.1).contains(&dispersion), "{dispersion}");
    }

    #[test]
    fn synthetic_records_give_exact_pressure() {
        let g = gas(250.0);
        let u = 3e-4;
        let records: Vec<_> = (0..10_000)
            .map(|k| CollisionRecord {
                time: k as f64 * 0.025,
                normal: Vec3::x(),
                molecule_velocity: Vec3::zeros(),
                ball_velocity: Vec3::zeros(),
                dv: Vec3::new(-u, 0.0, 0.0),
            })
            .collect();
        let est = pressure_estimator(&records, &g).unwrap();
        let exact = g.ball_mass * 1e4 * u / (4.0 * PI * g.duration);
        assert!((est.pressure / exact - 1.0).abs() < 1e-12);
        assert!(est.stderr < 1e-12 * exact);
    }

    #[test]
    fn thermalizes_and_recovers_ideal_gas_pressure() {
        let g = gas(1.0).with_expected_collisions(1e5).unwrap();
        let run = simulate_gas_brownian(&g, 6);
        assert!(run.regime_warning.is_none());
        let est = pressure_estimator(&run.collisions, &g).unwrap();
        let ratio = est.pressure / g.ideal_pressure();
        assert!((0.97..=1.03).contains(&ratio), "{ratio}");
        assert!((est.pressure - g.ideal_pressure()).abs() < 4.0 * est.stderr);
        let equipartition = run.mean_kinetic_energy_per_axis / (0.5 * g.temperature);
        assert!((equipartition - 1.0).abs() < 0.2, "{equipartition}");
    }

    #[test]
    fn hot_ball_is_flagged() {
        let g = gas(1.0);
        assert!(regime_check(&g, 0.09 * g.mean_speed()).is_none());
        assert!(regime_check(&g, 0.11 * g.mean_speed()).is_some());
        let run = simulate_gas_brownian(&g.with_expected_collisions(1e3).unwrap(), 8);
        assert!(run.rms_speed > 0.0 && run.max_speed >= run.rms_speed.min(run.max_speed));
        assert!(run.regime_warning.is_none());
    }

    #[test]
    fn estimator_converges_at_root_n() {
        let study = convergence_study(&gas(1.0), &[1e3, 1e4, 1e5], 48, 9).unwrap();
        assert!((study.fit.slope + 0.5).abs() < 0.1, "{:?}", study);
    }

    proptest::proptest! {
        #[test]
        fn rotation_invariance(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in 0.0f64..std::f64::consts::TAU) {
            let g = gas(1.0).with_expected_collisions(2000.0).unwrap();
            let run = simulate_gas_brownian(&g, 10);
            proptest::prop_assume!(run.collisions.len() >= MIN_COLLISIONS);
            let axis = nalgebra::Unit::new_normalize(Vec3::new(ax, ay, az + 1e-3));
            let rot = nalgebra::Rotation3::from_axis_angle(&axis, angle);
            let rotated: Vec<_> = run.collisions.iter().map(|c| CollisionRecord { dv: rot * c.dv, normal: rot * c.normal, ..*c }).collect();
            let a = pressure_estimator(&run.collisions, &g).unwrap().pressure;
            let b = pressure_estimator(&rotated, &g).unwrap().pressure;
            proptest::prop_assert!((a / b - 1.0).abs() < 1e-12);
        }
    }
}

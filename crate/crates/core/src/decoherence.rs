//! Mass-density distance, decoherence rates and two-branch superpositions.
//!
//! The squared distance between mass densities `f` and `g` is the
//! gravitational self-energy of their difference,
//! `G int int (f-g)(r) (f-g)(s) / |r - s|`. For two positions of one rigid
//! ball it reduces to `2 (U(0) - U(d))` with `U` the ball-ball interaction
//! energy, and the off-diagonal decay rate is `(lambda / 2 hbar)` times it.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::ensemble::{map_reduce, CHUNK};
use crate::error::{positive, step, Error, Result};
use crate::noise::{cell_fraction, NoiseStream};
use crate::probe::{ProbeParams, UnitSystem};
use crate::quadrature::{adaptive_simpson, cell_self_average};
use crate::stats::Estimate;
use crate::Vec3;

/// A rasterized ball needs this many cells across its diameter for the
/// lattice quadrature to hold 0.5% on the distance.
pub const MIN_CELLS_PER_DIAMETER: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum MassDensity {
    Ball { center: Vec3, mass: f64, radius: f64 },
    Lattice(LatticeDensity),
}

impl MassDensity {
    pub fn ball(center: Vec3, mass: f64, radius: f64) -> Result<Self> {
        Ok(Self::Ball {
            center,
            mass: positive("M", mass)?,
            radius: positive("R", radius)?,
        })
    }

    /// The probe ball centred at `center`.
    pub fn probe(params: &ProbeParams, center: Vec3) -> Self {
        Self::Ball {
            center,
            mass: params.mass(),
            radius: params.radius(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Ball { mass, .. } => *mass,
            Self::Lattice(l) => l.total_mass(),
        }
    }
}

/// Cell densities (mass per volume) on the cubic lattice `origin + h k`,
/// stored sparsely with sorted integer keys.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDensity {
    origin: Vec3,
    spacing: f64,
    cells: Vec<([i64; 3], f64)>,
}

impl LatticeDensity {
    pub fn new(origin: Vec3, spacing: f64, mut cells: Vec<([i64; 3], f64)>) -> Result<Self> {
        let spacing = positive("h", spacing)?;
        cells.sort_by_key(|c| c.0);
        if cells.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Incompatible("duplicate lattice cell".into()));
        }
        if let Some(&(_, v)) = cells.iter().find(|c| !(c.1 >= 0.0 && c.1.is_finite())) {
            return Err(Error::InvalidParameter {
                field: "density",
                value: v,
                reason: "lattice values must be finite and non-negative",
            });
        }
        let out = Self {
            origin,
            spacing,
            cells,
        };
        if !(out.total_mass() > 0.0) {
            return Err(Error::InvalidParameter {
                field: "M",
                value: out.total_mass(),
                reason: "lattice density carries no mass",
            });
        }
        Ok(out)
    }

    /// Ball rasterized with volume-fraction weights, rescaled so the lattice
    /// carries exactly the ball's mass.
    pub fn rasterize_ball(center: Vec3, mass: f64, radius: f64, origin: Vec3, spacing: f64) -> Result<Self> {
        let cells_per_diameter = 2.0 * radius / spacing;
        if cells_per_diameter < MIN_CELLS_PER_DIAMETER as f64 {
            return Err(Error::Precision {
                cells_per_diameter,
                required: MIN_CELLS_PER_DIAMETER,
            });
        }
        let rel = (center - origin) / spacing;
        let reach = radius / spacing + 1.0;
        let mut cells = Vec::new();
        let lo = rel.map(|v| (v - reach).floor() as i64);
        let hi = rel.map(|v| (v + reach).ceil() as i64);
        for i in lo.x..=hi.x {
            for j in lo.y..=hi.y {
                for k in lo.z..=hi.z {
                    let r = origin + Vec3::new(i as f64, j as f64, k as f64) * spacing;
                    let w = cell_fraction(r, spacing, center, radius);
                    if w > 0.0 {
                        cells.push(([i, j, k], w));
                    }
                }
            }
        }
        let total: f64 = cells.iter().map(|c| c.1).sum::<f64>() * spacing.powi(3);
        for c in &mut cells {
            c.1 *= mass / total;
        }
        Self::new(origin, spacing, cells)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.1).sum::<f64>() * self.spacing.powi(3)
    }

    fn aligned_with(&self, other: &LatticeDensity) -> bool {
        let h = self.spacing;
        if ((other.spacing - h) / h).abs() > 1e-12 {
            return false;
        }
        let shift = (other.origin - self.origin) / h;
        shift.iter().all(|v| (v - v.round()).abs() < 1e-9)
    }

    /// Cells of `other` re-keyed on this lattice.
    fn rekey(&self, other: &LatticeDensity) -> Vec<([i64; 3], f64)> {
        let shift = ((other.origin - self.origin) / self.spacing).map(|v| v.round() as i64);
        other
            .cells
            .iter()
            .map(|(k, v)| ([k[0] + shift.x, k[1] + shift.y, k[2] + shift.z], *v))
            .collect()
    }
}

/// Interaction energy `G int int f1 f2 / |r - s|` of two uniform balls with
/// centres `d` apart, by radial quadrature of ball 1's potential over the
/// part of each sphere about its centre that lies inside ball 2.
pub fn ball_interaction(m1: f64, r1: f64, m2: f64, r2: f64, d: f64, g: f64) -> f64 {
    if d >= r1 + r2 {
        return g * m1 * m2 / d;
    }
    let rho2 = m2 / (4.0 * PI * r2.powi(3) / 3.0);
    let potential = |r: f64| {
        if r >= r1 {
            g * m1 / r
        } else {
            g * m1 * (3.0 * r1 * r1 - r * r) / (2.0 * r1.powi(3))
        }
    };
    let area = |r: f64| {
        if r + d <= r2 {
            4.0 * PI * r * r
        } else if (r - d).abs() >= r2 {
            0.0
        } else {
            PI * r * (r2 * r2 - (r - d).powi(2)) / d
        }
    };
    let mut breaks = vec![0.0, (r2 - d).abs(), r1, d + r2];
    breaks.retain(|b| *b <= d + r2);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let scale = g * m1 * m2 / r1.min(r2);
    let tol = 1e-13 * scale / rho2;
    breaks
        .windows(2)
        .map(|w| adaptive_simpson(&|r| potential(r) * area(r), w[0], w[1], tol))
        .sum::<f64>()
        * rho2
}

/// Reduced overlap energy `U(x R) R / (G M^2)` of two equal balls on
/// `x in [0, 2]`.
struct OverlapTable {
    step: f64,
    values: Vec<f64>,
}

const TABLE_INTERVALS: usize = 512;

fn overlap_table() -> &'static OverlapTable {
    static TABLE: OnceLock<OverlapTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let step = 2.0 / TABLE_INTERVALS as f64;
        let values = (0..=TABLE_INTERVALS)
            .map(|i| ball_interaction(1.0, 1.0, 1.0, 1.0, i as f64 * step, 1.0))
            .collect();
        OverlapTable { step, values }
    })
}

impl OverlapTable {
    /// Catmull-Rom interpolation; end tangents use second-order one-sided
    /// differences.
    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len() - 1;
        let s = (x / self.step).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let v = &self.values;
        let p1 = v[i];
        let p2 = v[i + 1];
        let m1 = if i == 0 {
            0.5 * (-3.0 * p1 + 4.0 * p2 - v[2])
        } else {
            0.5 * (p2 - v[i - 1])
        };
        let m2 = if i + 1 == n {
            0.5 * (3.0 * p2 - 4.0 * p1 + v[n - 2])
        } else {
            0.5 * (v[i + 2] - p1)
        };
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p1 + (t3 - 2.0 * t2 + t) * m1 + (-2.0 * t3 + 3.0 * t2) * p2 + (t3 - t2) * m2
    }
}

/// `U(d) = G int int f_0 f_d / |r - s|` for two copies of the probe ball.
pub fn ball_pair_potential(d: f64, params: &ProbeParams) -> f64 {
    let (g, m, r) = (params.g(), params.mass(), params.radius());
    let d = d.abs();
    if d >= 2.0 * r {
        g * m * m / d
    } else {
        g * m * m / r * overlap_table().eval(d / r)
    }
}

/// `U(0) = 6 G M^2 / 5 R`.
pub fn self_energy(params: &ProbeParams) -> f64 {
    6.0 * params.g() * params.mass().powi(2) / (5.0 * params.radius())
}

pub fn dp_norm_sq(f: &MassDensity, g: &MassDensity, units: &UnitSystem) -> Result<f64> {
    use MassDensity::*;
    let gc = units.g();
    match (f, g) {
        (
            Ball {
                center: c1,
                mass: m1,
                radius: r1,
            },
            Ball {
                center: c2,
                mass: m2,
                radius: r2,
            },
        ) => {
            if c1 == c2 && m1 == m2 && r1 == r2 {
                return Ok(0.0);
            }
            let self1 = 6.0 * gc * m1 * m1 / (5.0 * r1);
            let self2 = 6.0 * gc * m2 * m2 / (5.0 * r2);
            let d = (c1 - c2).norm();
            let cross = if r1 == r2 && d < r1 + r2 {
                gc * m1 * m2 / r1 * overlap_table().eval(d / r1)
            } else {
                ball_interaction(*m1, *r1, *m2, *r2, d, gc)
            };
            Ok((self1 + self2 - 2.0 * cross).max(0.0))
        }
        (Lattice(a), Lattice(b)) => lattice_distance(a, b, gc),
        (Lattice(a), ball) | (ball, Lattice(a)) => {
            let Ball {
                center,
                mass,
                radius,
            } = ball
            else {
                unreachable!()
            };
            let b = LatticeDensity::rasterize_ball(*center, *mass, *radius, a.origin, a.spacing)?;
            lattice_distance(a, &b, gc)
        }
    }
}

fn lattice_distance(a: &LatticeDensity, b: &LatticeDensity, g: f64) -> Result<f64> {
    if !a.aligned_with(b) {
        return Err(Error::Incompatible(
            "lattice densities must share spacing and cell alignment".into(),
        ));
    }
    let mut diff: Vec<([i64; 3], f64)> = a.cells.clone();
    diff.extend(a.rekey(b).into_iter().map(|(k, v)| (k, -v)));
    diff.sort_by_key(|c| c.0);
    let mut merged: Vec<([i64; 3], f64)> = Vec::with_capacity(diff.len());
    for (k, v) in diff {
        match merged.last_mut() {
            Some(last) if last.0 == k => last.1 += v,
            _ => merged.push((k, v)),
        }
    }
    merged.retain(|c| c.1 != 0.0);
    let h = a.spacing;
    Ok(g * h.powi(5) * coulomb_form(&merged).max(0.0))
}

/// `sum_ab v_a v_b K_ab` in units of `1/h`, with `K_ab = 1/|k_a - k_b|` off
/// the diagonal and the cell self-average on it.
fn coulomb_form(cells: &[([i64; 3], f64)]) -> f64 {
    let pos: Vec<[f64; 3]> = cells
        .iter()
        .map(|(k, _)| [k[0] as f64, k[1] as f64, k[2] as f64])
        .collect();
    let diag = cell_self_average();
    // Rows in parallel, summed in row order.
    let rows: Vec<f64> = (0..cells.len())
        .into_par_iter()
        .map(|a| {
            let pa = pos[a];
            let va = cells[a].1;
            let mut row = 0.0;
            for (pb, (_, vb)) in pos[a + 1..].iter().zip(&cells[a + 1..]) {
                let r2 = (pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2);
                row += vb / r2.sqrt();
            }
            va * (2.0 * row + diag * va)
        })
        .collect();
    rows.iter().sum()
}

/// Off-diagonal decay rate `(lambda / 2 hbar) ||f_0 - f_d||^2` for the probe
/// ball displaced by `d`.
pub fn decoherence_rate(d: f64, params: &ProbeParams) -> f64 {
    params.lambda() / params.hbar() * (self_energy(params) - ball_pair_potential(d, params)).max(0.0)
}

/// Density matrix of one ball on the two-position subspace `{x_a, x_b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointDensityMatrix {
    pub x_a: Vec3,
    pub x_b: Vec3,
    pub rho: Matrix2<Complex64>,
}

impl TwoPointDensityMatrix {
    pub fn new(x_a: Vec3, x_b: Vec3, rho: Matrix2<Complex64>) -> Result<Self> {
        let out = Self { x_a, x_b, rho };
        let herm = (rho - rho.adjoint()).norm();
        let trace = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
        if herm > 1e-12 || trace > 1e-12 || out.min_eigenvalue() < -1e-12 {
            return Err(Error::InvalidParameter {
                field: "rho",
                value: herm.max(trace),
                reason: "must be Hermitian, unit-trace and positive semi-definite",
            });
        }
        Ok(out)
    }

    pub fn equal_superposition(x_a: Vec3, x_b: Vec3) -> Self {
        let half = Complex64::new(0.5, 0.0);
        Self {
            x_a,
            x_b,
            rho: Matrix2::from_element(half),
        }
    }

    pub fn coherence(&self) -> Complex64 {
        self.rho[(0, 1)]
    }

    /// Smaller eigenvalue of the Hermitian 2x2 matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let a = self.rho[(0, 0)].re;
        let d = self.rho[(1, 1)].re;
        let b = self.rho[(0, 1)].norm();
        0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt()
    }
}

pub fn evolve_two_point_superposition(
    rho: &TwoPointDensityMatrix,
    t: f64,
    params: &ProbeParams,
) -> TwoPointDensityMatrix {
    let decay = (-decoherence_rate((rho.x_a - rho.x_b).norm(), params) * t).exp();
    let mut out = *rho;
    out.rho[(0, 1)] *= decay;
    out.rho[(1, 0)] *= decay;
    out
}

/// Ensemble-averaged coherence `E[c_a c_b^*]` of the diffusive unraveling on
/// the two-position subspace of a ball displaced by `d`.
///
/// Branch amplitudes are multiplied each step by
/// `exp(-(lambda/hbar) E_a dt + (Phi_a - Phi_bar) / hbar)` and renormalized,
/// where `Phi_a` is the noise potential averaged over branch `a`'s density
/// (covariance `lambda hbar U_ab dt`), `Phi_bar` its population-weighted mean
/// and `E_a = U_aa - 2 sum_b p_b U_ab + sum_bc p_b p_c U_bc`. The mean of
/// `c_a c_b^*` then decays at exactly `decoherence_rate(d)`.
pub fn branch_coherence(
    d: f64,
    params: &ProbeParams,
    dt: f64,
    sample_steps: &[usize],
    trajectories: usize,
    seed: u64,
) -> Result<Vec<(f64, Estimate)>> {
    let dt = step(dt)?;
    let (lh, hbar) = (params.lambda() / params.hbar(), params.hbar());
    let u = Matrix2::new(
        self_energy(params),
        ball_pair_potential(d, params),
        ball_pair_potential(d, params),
        self_energy(params),
    );
    let chol = (u * (params.lambda() * hbar * dt))
        .cholesky()
        .ok_or_else(|| Error::KernelRegularization {
            min_eigenvalue: u.symmetric_eigenvalues().min(),
        })?
        .l();
    let steps = sample_steps.iter().copied().max().unwrap_or(0);
    let acc = map_reduce(
        trajectories,
        CHUNK,
        |range| {
            let mut sums = vec![crate::stats::Scalar::default(); sample_steps.len()];
            for traj in range {
                let mut stream = NoiseStream::auxiliary(seed, traj as u64);
                let mut c = Vector2::from_element(0.5f64.sqrt());
                for i in 1..=steps {
                    let z = Vector2::new(stream.standard_normal(), stream.standard_normal());
                    let phi = chol * z;
                    let p = c.map(|v| v * v);
                    let mean_u = u * p;
                    let ppu = p.dot(&mean_u);
                    let phi_bar = p.dot(&phi);
                    for a in 0..2 {
                        let e = u[(a, a)] - 2.0 * mean_u[a] + ppu;
                        c[a] *= (-lh * e * dt + (phi[a] - phi_bar) / hbar).exp();
                    }
                    c /= c.norm();
                    for (k, &s) in sample_steps.iter().enumerate() {
                        if s == i {
                            sums[k].push(c[0] * c[1]);
                        }
                    }
                }
            }
            Ok(sums)
        },
        |a, b| a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y)),
    )?
    .ok_or(Error::LowStatistics {
        what: "branch coherence",
        have: 0,
        need: 2,
    })?;
    Ok(sample_steps
        .iter()
        .zip(acc)
        .map(|(&s, a)| {
            (
                s as f64 * dt,
                Estimate {
                    value: a.mean(),
                    stderr: a.stderr(),
                },
            )
        })
        .collect())
}

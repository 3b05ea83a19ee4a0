//! Reproducible white-noise sources.
//!
//! Two discretizations of the same noise are provided. [`force_increment`]
//! draws the integrated momentum kick `F dt` of a single ball directly, with
//! variance `D_p dt` per axis. [`FieldSampler`] draws the underlying potential
//! field on a lattice, with covariance `lambda hbar G k(r, s) / dt`, and
//! [`BallStencil`] maps a field sample to the force it exerts on a ball. The
//! two agree as the lattice is refined.
//!
//! Randomness comes from ChaCha12 keyed by the run seed, with the 64-bit
//! ChaCha stream id used as the stream index, so any trajectory's noise can be
//! regenerated independently of how work is scheduled.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{step, Error, Result};
use crate::probe::ProbeParams;
use crate::quadrature::cell_self_average;
use crate::Vec3;

/// Stream slots reserved per trajectory: one per axis plus one auxiliary.
pub const STREAMS_PER_TRAJECTORY: u64 = 4;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream_index: u64,
    counter: u64,
    rng: ChaCha12Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        Self {
            seed,
            stream_index,
            counter: 0,
            rng,
        }
    }

    /// Stream for one Cartesian axis (0, 1, 2) of trajectory `trajectory`.
    pub fn for_axis(seed: u64, trajectory: u64, axis: usize) -> Self {
        assert!(axis < 3, "axis index {axis} out of range");
        Self::new(seed, trajectory * STREAMS_PER_TRAJECTORY + axis as u64)
    }

    /// Spare stream of a trajectory (jump thresholds, axis selection, ...).
    pub fn auxiliary(seed: u64, trajectory: u64) -> Self {
        Self::new(seed, trajectory * STREAMS_PER_TRAJECTORY + 3)
    }

    pub fn axes(seed: u64, trajectory: u64) -> [NoiseStream; 3] {
        std::array::from_fn(|axis| Self::for_axis(seed, trajectory, axis))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Number of samples drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.counter += 1;
        self.rng.sample(StandardNormal)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.counter += 1;
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn exponential(&mut self) -> f64 {
        self.counter += 1;
        self.rng.sample(Exp1)
    }
}

/// Momentum kick `F dt` on one axis: zero-mean Gaussian, variance `D_p dt`.
pub fn axis_increment(params: &ProbeParams, dt: f64, stream: &mut NoiseStream) -> Result<f64> {
    let dt = step(dt)?;
    Ok((params.momentum_diffusion() * dt).sqrt() * stream.standard_normal())
}

/// Isotropic momentum kick from one stream; advances its counter by 3.
pub fn force_increment(params: &ProbeParams, dt: f64, stream: &mut NoiseStream) -> Result<Vec3> {
    let dt = step(dt)?;
    let scale = (params.momentum_diffusion() * dt).sqrt();
    Ok(Vec3::new(
        scale * stream.standard_normal(),
        scale * stream.standard_normal(),
        scale * stream.standard_normal(),
    ))
}

/// Nodes of a (possibly irregular) lattice with the cell side they represent.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    nodes: Vec<Vec3>,
    spacing: f64,
}

impl Lattice {
    pub fn new(nodes: Vec<Vec3>, spacing: f64) -> Result<Self> {
        crate::error::positive("spacing", spacing)?;
        let mut seen: HashMap<[u64; 3], usize> = HashMap::with_capacity(nodes.len());
        for (i, r) in nodes.iter().enumerate() {
            let key = [r.x.to_bits(), r.y.to_bits(), r.z.to_bits()];
            if let Some(&first) = seen.get(&key) {
                return Err(Error::DegenerateKernel { first, second: i });
            }
            seen.insert(key, i);
        }
        Ok(Self { nodes, spacing })
    }

    /// Regular cubic lattice anchored at `centers[0]` holding every node needed
    /// to ball-average the field around each center with radius `radius`.
    pub fn ball_cover(centers: &[Vec3], radius: f64, nodes_per_diameter: usize) -> Self {
        assert!(!centers.is_empty() && nodes_per_diameter > 0);
        let h = 2.0 * radius / nodes_per_diameter as f64;
        let reach = radius + h * (0.5 * 3f64.sqrt() + 1.0) + 1e-9 * h;
        let origin = centers[0];
        let mut keys = Vec::new();
        for c in centers {
            let lo = (c - origin).map(|v| ((v - reach) / h).floor() as i64);
            let hi = (c - origin).map(|v| ((v + reach) / h).ceil() as i64);
            for i in lo.x..=hi.x {
                for j in lo.y..=hi.y {
                    for k in lo.z..=hi.z {
                        let r = origin + Vec3::new(i as f64, j as f64, k as f64) * h;
                        if (r - c).norm() <= reach {
                            keys.push([i, j, k]);
                        }
                    }
                }
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let nodes = keys
            .into_iter()
            .map(|[i, j, k]| origin + Vec3::new(i as f64, j as f64, k as f64) * h)
            .collect();
        Self { nodes, spacing: h }
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Regularized Coulomb kernel between nodes `a` and `b`: `1/|r_a - r_b|`
    /// off the diagonal, the cell self-average on it.
    pub fn kernel(&self, a: usize, b: usize) -> f64 {
        if a == b {
            cell_self_average() / self.spacing
        } else {
            1.0 / (self.nodes[a] - self.nodes[b]).norm()
        }
    }

    fn integer_keys(&self) -> Result<Vec<[i64; 3]>> {
        let h = self.spacing;
        let origin = self.nodes.first().copied().unwrap_or_else(Vec3::zeros);
        self.nodes
            .iter()
            .enumerate()
            .map(|(n, r)| {
                let q = (r - origin) / h;
                let key = [q.x.round() as i64, q.y.round() as i64, q.z.round() as i64];
                let off = (q - Vec3::new(key[0] as f64, key[1] as f64, key[2] as f64)).amax();
                if off > 1e-6 {
                    Err(Error::Coverage {
                        detail: format!("node {n} is off the regular lattice"),
                        required_spacing: h,
                    })
                } else {
                    Ok(key)
                }
            })
            .collect()
    }

    fn integer_index(&self) -> Result<HashMap<[i64; 3], usize>> {
        Ok(self
            .integer_keys()?
            .into_iter()
            .enumerate()
            .map(|(n, key)| (key, n))
            .collect())
    }
}

/// One sample of the potential field on a lattice, representing a step `dt`.
#[derive(Debug, Clone)]
pub struct LatticeField {
    pub lattice: Arc<Lattice>,
    pub values: Vec<f64>,
    pub dt: f64,
}

/// Cholesky factor of the lattice field covariance, built once and shared.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    lattice: Arc<Lattice>,
    factor: DMatrix<f64>,
    dt: f64,
}

impl FieldSampler {
    pub fn new(lattice: Arc<Lattice>, params: &ProbeParams, dt: f64) -> Result<Self> {
        let dt = step(dt)?;
        let n = lattice.len();
        let scale = params.lambda() * params.hbar() * params.g() / dt;
        let cov = DMatrix::from_fn(n, n, |a, b| scale * lattice.kernel(a, b));
        let factor = match cov.clone().cholesky() {
            Some(chol) => chol.unpack(),
            None => {
                let min_eigenvalue = cov.symmetric_eigenvalues().min();
                return Err(Error::KernelRegularization { min_eigenvalue });
            }
        };
        Ok(Self {
            lattice,
            factor,
            dt,
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn normals(&self, stream: &mut NoiseStream, count: usize) -> Vec<f64> {
        (0..self.lattice.len() * count)
            .map(|_| stream.standard_normal())
            .collect()
    }

    pub fn sample(&self, stream: &mut NoiseStream) -> LatticeField {
        let z = DMatrix::from_vec(self.lattice.len(), 1, self.normals(stream, 1));
        LatticeField {
            lattice: Arc::clone(&self.lattice),
            values: (&self.factor * z).as_slice().to_vec(),
            dt: self.dt,
        }
    }

    /// `count` consecutive samples computed as one matrix product.
    pub fn sample_block(&self, stream: &mut NoiseStream, count: usize) -> Vec<LatticeField> {
        let n = self.lattice.len();
        let z = DMatrix::from_vec(n, count, self.normals(stream, count));
        let values = &self.factor * z;
        values
            .column_iter()
            .map(|col| LatticeField {
                lattice: Arc::clone(&self.lattice),
                values: col.iter().copied().collect(),
                dt: self.dt,
            })
            .collect()
    }
}

/// Ball-averaged forces of a sampled field, with the stencils folded into the
/// Cholesky factor: `F_i = C_i L z` evaluated as `(C_i L) z`.
#[derive(Debug, Clone)]
pub struct ForceProjector {
    rows: DMatrix<f64>,
    nodes: usize,
}

impl ForceProjector {
    pub fn new(sampler: &FieldSampler, stencils: &[&BallStencil]) -> Self {
        let n = sampler.lattice.len();
        let mut c = DMatrix::zeros(3 * stencils.len(), n);
        for (s, stencil) in stencils.iter().enumerate() {
            for (node, coeff) in &stencil.coefficients {
                for axis in 0..3 {
                    c[(3 * s + axis, *node)] = coeff[axis];
                }
            }
        }
        Self {
            rows: c * &sampler.factor,
            nodes: n,
        }
    }

    /// Forces on each ball for one field sample; consumes exactly as many
    /// normals as [`FieldSampler::sample`].
    pub fn sample(&self, stream: &mut NoiseStream) -> Vec<Vec3> {
        let z = nalgebra::DVector::from_iterator(self.nodes, (0..self.nodes).map(|_| stream.standard_normal()));
        let f = &self.rows * z;
        f.as_slice().chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
    }

    /// Exact joint covariance of the stacked forces.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.rows * self.rows.transpose()
    }
}

pub fn sample_field_lattice(
    lattice: &Lattice,
    params: &ProbeParams,
    dt: f64,
    stream: &mut NoiseStream,
) -> Result<LatticeField> {
    Ok(FieldSampler::new(Arc::new(lattice.clone()), params, dt)?.sample(stream))
}

/// Linear map from lattice field values to the ball-averaged force
/// `-(M/V) sum_a W_a grad phi(a)`, with central-difference gradients and cell
/// weights `W_a` equal to the ball volume inside each cell.
#[derive(Debug, Clone)]
pub struct BallStencil {
    center: Vec3,
    coefficients: Vec<(usize, Vec3)>,
}

const MIN_NODES_PER_DIAMETER: f64 = 8.0;
const SUBSAMPLES: usize = 8;

impl BallStencil {
    pub fn new(lattice: &Lattice, center: Vec3, params: &ProbeParams) -> Result<Self> {
        let h = lattice.spacing();
        let radius = params.radius();
        let required_spacing = 2.0 * radius / MIN_NODES_PER_DIAMETER;
        if h > required_spacing * (1.0 + 1e-12) {
            return Err(Error::Coverage {
                detail: format!("{:.2} nodes per diameter", 2.0 * radius / h),
                required_spacing,
            });
        }
        let index = lattice.integer_index()?;
        let keys = lattice.integer_keys()?;
        let weights: Vec<f64> = lattice
            .nodes()
            .iter()
            .map(|r| cell_fraction(*r, h, center, radius))
            .collect();
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Err(Error::Coverage {
                detail: "no lattice cell intersects the ball".into(),
                required_spacing,
            });
        }
        // Normalize so the discrete ball has exactly the volume V_R.
        let norm = params.volume() / (total * h.powi(3));
        let prefactor = -params.mass() / params.volume() * h.powi(3) * norm / (2.0 * h);
        let mut coeffs = vec![Vec3::zeros(); lattice.len()];
        for (n, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let key = keys[n];
            for axis in 0..3 {
                let mut plus = key;
                let mut minus = key;
                plus[axis] += 1;
                minus[axis] -= 1;
                let (Some(&np), Some(&nm)) = (index.get(&plus), index.get(&minus)) else {
                    return Err(Error::Coverage {
                        detail: format!("missing gradient neighbour of cell {key:?}"),
                        required_spacing,
                    });
                };
                coeffs[np][axis] += prefactor * w;
                coeffs[nm][axis] -= prefactor * w;
            }
        }
        let coefficients: Vec<(usize, Vec3)> = coeffs
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.amax() > 0.0)
            .collect();
        Ok(Self {
            center,
            coefficients,
        })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn support(&self) -> usize {
        self.coefficients.len()
    }

    pub fn apply(&self, values: &[f64]) -> Vec3 {
        self.coefficients
            .iter()
            .fold(Vec3::zeros(), |acc, (n, c)| acc + c * values[*n])
    }

    /// Exact force cross-covariance `C_a K C_b^T` implied by the lattice kernel
    /// for a field step `dt`.
    pub fn covariance_with(
        &self,
        other: &BallStencil,
        lattice: &Lattice,
        params: &ProbeParams,
        dt: f64,
    ) -> Matrix3<f64> {
        let scale = params.lambda() * params.hbar() * params.g() / dt;
        let mut cov = Matrix3::zeros();
        for (a, ca) in &self.coefficients {
            let mut weighted = Vec3::zeros();
            for (b, cb) in &other.coefficients {
                weighted += cb * lattice.kernel(*a, *b);
            }
            cov += ca * weighted.transpose();
        }
        cov * scale
    }
}

/// Fraction of the cube of side `h` centred on `node` that lies in the ball.
pub(crate) fn cell_fraction(node: Vec3, h: f64, center: Vec3, radius: f64) -> f64 {
    let rel = node - center;
    let half = 0.5 * h;
    let nearest = rel.map(|v| (v.abs() - half).max(0.0)).norm();
    if nearest >= radius {
        return 0.0;
    }
    let farthest = rel.map(|v| v.abs() + half).norm();
    if farthest <= radius {
        return 1.0;
    }
    let step = h / SUBSAMPLES as f64;
    let mut inside = 0usize;
    for i in 0..SUBSAMPLES {
        for j in 0..SUBSAMPLES {
            for k in 0..SUBSAMPLES {
                let p = rel
                    + Vec3::new(
                        -half + (i as f64 + 0.5) * step,
                        -half + (j as f64 + 0.5) * step,
                        -half + (k as f64 + 0.5) * step,
                    );
                if p.norm_squared() < radius * radius {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / (SUBSAMPLES * SUBSAMPLES * SUBSAMPLES) as f64
}

pub fn ball_averaged_force(field: &LatticeField, center: Vec3, params: &ProbeParams) -> Result<Vec3> {
    Ok(BallStencil::new(&field.lattice, center, params)?.apply(&field.values))
}

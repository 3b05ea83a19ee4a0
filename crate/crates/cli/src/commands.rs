//! The experiments behind each subcommand.
//!
//! Every command first reads all of its parameters, then checks that no
//! unknown key is left, and only then starts computing.

use collapse_lab::decoherence::{
    branch_coherence, decoherence_rate, dp_norm_sq, evolve_two_point_superposition, LatticeDensity,
    MassDensity, TwoPointDensityMatrix,
};
use collapse_lab::emergent::{
    estimate_effective_g, simulate_two_probe, Feedback, NoiseCorrelation, Pinning, ProbeEnsembleConfig,
};
use collapse_lab::ensemble::{map_reduce, CHUNK};
use collapse_lab::jumps::simulate_jump_trajectory;
use collapse_lab::noise::{force_increment, BallStencil, Lattice, NoiseStream};
use collapse_lab::pointer::{
    equilibrium_width, simulate_sse_trajectory, GaussianAxis, GridWavefunction,
};
use collapse_lab::pressure::{pressure_estimator, simulate_gas_brownian, GasConfig};
use collapse_lab::stats::{ks_exponential, Scalar};
use collapse_lab::trajectories::{analytic_moments, ensemble_run, EnsembleConfig};
use collapse_lab::{characteristic_scales, make_probe_params, ProbeParams, UnitSystem, Vec3};
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::{Cell, Table};
use crate::CliError;

/// What a command produced.
pub struct RunOutput {
    pub table: Table,
    pub summary: Value,
    /// Additional files: path and rendered table.
    pub side_tables: Vec<(String, Table)>,
    /// Set when the run finished outside its regime of validity.
    pub regime_warning: Option<String>,
}

impl RunOutput {
    fn new(table: Table, summary: Value) -> Self {
        Self {
            table,
            summary,
            side_tables: Vec::new(),
            regime_warning: None,
        }
    }
}

pub type Prepared = Box<dyn FnOnce(u64) -> Result<RunOutput, CliError>>;

fn probe(cfg: &mut Config, lambda: f64) -> Result<ProbeParams, CliError> {
    let units = UnitSystem::new(cfg.positive("hbar", 1.0)?, cfg.positive("G", 1.0)?)?;
    Ok(make_probe_params(
        cfg.positive("mass", 1.0)?,
        cfg.positive("radius", 1.0)?,
        cfg.positive("lambda", lambda)?,
        units,
    )?)
}

fn steps(t: f64, dt: f64, key: &str) -> Result<usize, CliError> {
    let n = (t / dt).round();
    if n < 1.0 {
        return Err(CliError::Validation(format!("`{key}` = {t} is shorter than one step dt = {dt}")));
    }
    Ok(n as usize)
}

/// Parse parameters for `name`, returning the experiment to run.
pub fn prepare(name: &str, cfg: &mut Config) -> Result<Prepared, CliError> {
    let run: Prepared = match name {
        "pointer" => pointer(cfg)?,
        "jump" => jump(cfg)?,
        "trajectory" => trajectory(cfg)?,
        "two-probe" => two_probe(cfg)?,
        "decoherence" => decoherence(cfg)?,
        "pressure" => pressure(cfg)?,
        "noise-check" => noise_check(cfg)?,
        other => return Err(CliError::Usage(format!("unknown subcommand `{other}`"))),
    };
    cfg.finish()?;
    Ok(run)
}

const SAMPLE_COLUMNS: [(&str, &str); 6] = [
    ("traj", "-"),
    ("t", "time"),
    ("xbar", "length"),
    ("pbar", "momentum"),
    ("sigma_sq", "length^2"),
    ("norm_drift", "-"),
];

fn pointer(cfg: &mut Config) -> Result<Prepared, CliError> {
    let p = probe(cfg, 0.5)?;
    let scales = characteristic_scales(&p);
    let solver = cfg.choice("solver", "grid", &["grid", "gaussian"])?;
    let t = cfg.positive("T", 10.0 / p.omega_g())?;
    let dt = cfg.positive("dt", scales.dt_recommended)?;
    let grid = cfg.count("grid", 1024)?;
    let length = cfg.positive("length", scales.l_recommended)?;
    let trajectories = cfg.count("trajectories", 1)?;
    let stride = cfg.count("stride", 100)?;
    let x0 = cfg.f64("x0", 0.0)?;
    let p0 = cfg.f64("p0", 0.0)?;
    let n = steps(t, dt, "T")?;
    if dt > scales.dt_recommended * (1.0 + 1e-12) {
        return Err(CliError::Validation(format!(
            "`dt` = {dt} exceeds the recommended step {}",
            scales.dt_recommended
        )));
    }
    Ok(Box::new(move |seed| {
        let rows = map_reduce(
            trajectories,
            CHUNK,
            |range| {
                let mut rows = Vec::new();
                for traj in range {
                    let mut stream = NoiseStream::for_axis(seed, traj as u64, 0);
                    if solver == "grid" {
                        let wf = GridWavefunction::equilibrium_on(&p, grid, length, x0, p0);
                        for s in simulate_sse_trajectory(&wf, t, dt, &mut stream, &p, stride)? {
                            rows.push((traj, s.t, s.xbar, s.pbar, s.sigma_sq, s.norm_drift));
                        }
                    } else {
                        let mut g = GaussianAxis {
                            xbar: x0,
                            pbar: p0,
                            a: equilibrium_width(&p).a_fixed,
                        };
                        let width = |g: &GaussianAxis| 1.0 / (4.0 * g.a.re);
                        rows.push((traj, 0.0, g.xbar, g.pbar, width(&g), 0.0));
                        for i in 1..=n {
                            let dw = collapse_lab::noise::axis_increment(&p, dt, &mut stream)?;
                            g = g.step(dt, dw, &p)?;
                            if i % stride == 0 {
                                rows.push((traj, i as f64 * dt, g.xbar, g.pbar, width(&g), 0.0));
                            }
                        }
                    }
                }
                Ok(rows)
            },
            |a, b| a.extend(b),
        )?
        .unwrap_or_default();
        let mut table = Table::new(&SAMPLE_COLUMNS);
        for (traj, t, x, pb, s, d) in rows {
            table.push(vec![traj.into(), t.into(), x.into(), pb.into(), s.into(), d.into()]);
        }
        let width = equilibrium_width(&p);
        Ok(RunOutput::new(
            table,
            json!({
                "sigma_inf_sq": width.sigma_sq,
                "reference_sigma_sq": width.reference_sigma_sq,
                "ratio_to_reference": width.ratio_to_reference,
                "dt_recommended": scales.dt_recommended,
            }),
        ))
    }))
}

fn jump(cfg: &mut Config) -> Result<Prepared, CliError> {
    let p = probe(cfg, 0.5)?;
    let t = cfg.positive("T", 20.0)?;
    let dt = cfg.positive("dt", 2e-3)?;
    let grid = cfg.count("grid", 512)?;
    let length = cfg.positive("length", 160.0 * p.sigma_inf_sq().sqrt())?;
    let trajectories = cfg.count("trajectories", 1)?;
    let stride = cfg.count("stride", 100)?;
    steps(t, dt, "T")?;
    Ok(Box::new(move |seed| {
        let initial = GridWavefunction::equilibrium_on(&p, grid, length, 0.0, 0.0);
        let runs = map_reduce(
            trajectories,
            CHUNK,
            |range| {
                let mut out = Vec::new();
                for traj in range {
                    let mut stream = NoiseStream::auxiliary(seed, traj as u64);
                    out.push((traj, simulate_jump_trajectory(&initial, t, dt, &mut stream, &p, stride)?));
                }
                Ok(out)
            },
            |a, b| a.extend(b),
        )?
        .unwrap_or_default();
        let mut columns = SAMPLE_COLUMNS.to_vec();
        columns.push(("jumps", "count"));
        let mut table = Table::new(&columns);
        let mut waits = Vec::new();
        let mut total = 0;
        for (traj, run) in &runs {
            for s in &run.samples {
                let jumps = run.jump_times.iter().filter(|&&j| j <= s.t).count();
                table.push(vec![
                    (*traj).into(),
                    s.t.into(),
                    s.xbar.into(),
                    s.pbar.into(),
                    s.sigma_sq.into(),
                    s.norm_drift.into(),
                    jumps.into(),
                ]);
            }
            total += run.jump_count();
            waits.extend_from_slice(&run.integrated_rates);
        }
        let ks = (waits.len() >= 2).then(|| ks_exponential(&waits).1);
        Ok(RunOutput::new(
            table,
            json!({
                "jumps": total,
                "jump_rate": total as f64 / (t * trajectories as f64),
                "waiting_time_ks_pvalue": ks,
            }),
        ))
    }))
}

fn trajectory(cfg: &mut Config) -> Result<Prepared, CliError> {
    let p = probe(cfg, 0.5)?;
    let trajectories = cfg.count("trajectories", 1000)?;
    let t = cfg.positive("T", 10.0 / p.omega_g())?;
    let dt = cfg.positive("dt", 0.01)?;
    let stride = cfg.count("stride", 100)?;
    steps(t, dt, "T")?;
    if trajectories < 2 {
        return Err(CliError::Validation("`trajectories` must be at least 2".into()));
    }
    Ok(Box::new(move |seed| {
        let mut config = EnsembleConfig::new(trajectories, t, dt, seed);
        config.sample_every = stride;
        let reports = ensemble_run(&config, &p)?;
        let mut table = Table::new(&[
            ("t", "time"),
            ("axis", "-"),
            ("var_p", "momentum^2"),
            ("var_p_stderr", "momentum^2"),
            ("var_x", "length^2"),
            ("var_x_stderr", "length^2"),
            ("cov_xp", "length*momentum"),
            ("cov_xp_stderr", "length*momentum"),
            ("var_p_exact", "momentum^2"),
            ("var_x_exact", "length^2"),
            ("cov_xp_exact", "length*momentum"),
        ]);
        for r in &reports {
            let exact = analytic_moments(&p, r.t);
            for axis in 0..3 {
                table.push(vec![
                    r.t.into(),
                    axis.into(),
                    r.var_p[axis].value.into(),
                    r.var_p[axis].stderr.into(),
                    r.var_x[axis].value.into(),
                    r.var_x[axis].stderr.into(),
                    r.cov_xp[axis].value.into(),
                    r.cov_xp[axis].stderr.into(),
                    exact.var_p[axis].value.into(),
                    exact.var_x[axis].value.into(),
                    exact.cov_xp[axis].value.into(),
                ]);
            }
        }
        Ok(RunOutput::new(
            table,
            json!({ "momentum_diffusion": p.momentum_diffusion(), "coordinate_gain": p.coordinate_gain() }),
        ))
    }))
}

fn two_probe(cfg: &mut Config) -> Result<Prepared, CliError> {
    let p = probe(cfg, 0.5)?;
    let d = cfg.positive("d", 4.0)?;
    let pairs = cfg.count("pairs", 1000)?;
    let t = cfg.positive("T", 5.0)?;
    let dt = cfg.positive("dt", 0.005)?;
    let window = cfg.positive("window", 0.05)?;
    let noise = match cfg.choice("noise", "independent", &["independent", "field_kernel"])?.as_str() {
        "independent" => NoiseCorrelation::Independent,
        _ => NoiseCorrelation::FieldKernel {
            nodes_per_diameter: cfg.count("nodes", 12)?,
        },
    };
    let feedback = match cfg.choice("feedback", "mean_field", &["mean_field", "none"])?.as_str() {
        "mean_field" => Feedback::MeanField,
        _ => Feedback::None,
    };
    let pinning = match cfg.choice("pinning", "quasi_static", &["quasi_static", "free"])?.as_str() {
        "quasi_static" => Pinning::QuasiStatic,
        _ => Pinning::Free,
    };
    if d < 2.0 * p.radius() {
        return Err(CliError::Validation(format!("`d` = {d} is below 2R; the balls would overlap")));
    }
    Ok(Box::new(move |seed| {
        let mut config = ProbeEnsembleConfig::quasi_static(p, d, pairs, t, seed);
        config.dt = dt;
        config.window = window;
        config.noise = noise;
        config.feedback = feedback;
        config.pinning = pinning;
        let records = simulate_two_probe(&config)?;
        let mut table = Table::new(&[
            ("t", "time"),
            ("d", "length"),
            ("drift", "force"),
            ("drift_stderr", "force"),
            ("inv_d2", "1/length^2"),
        ]);
        for (k, w) in records.windows.iter().enumerate() {
            table.push(vec![
                ((k + 1) as f64 * records.window).into(),
                w.separation.mean().into(),
                w.drift.mean().into(),
                w.drift.stderr().into(),
                w.inv_d2.mean().into(),
            ]);
        }
        let summary = match estimate_effective_g(&records, &config) {
            Ok(r) => json!({
                "G_eff": r.g_eff,
                "stderr": r.stderr,
                "target_2_lambda_G": r.target,
                "n_trajectories": r.n_trajectories,
                "windows": r.windows,
                "window": r.window,
                "total_momentum_drift": r.total_drift.value,
                "total_momentum_drift_stderr": r.total_drift.stderr,
                "probe_drift": r.probe_drift.value,
                "probe_drift_stderr": r.probe_drift.stderr,
            }),
            Err(e) => json!({ "coupling_error": e.to_string() }),
        };
        Ok(RunOutput::new(table, summary))
    }))
}

fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<T>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Validation(format!("`{key}` must be a comma-separated list, got `{text}`")))
}

fn decoherence(cfg: &mut Config) -> Result<Prepared, CliError> {
    let p = probe(cfg, 0.5)?;
    let mode = cfg.choice("mode", "rate", &["rate", "coherence"])?;
    if mode == "rate" {
        let distances: Vec<f64> = parse_list("distances", &cfg.string("distances", "0,0.5,1,2,4,8")?)?;
        if distances.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(CliError::Validation("`distances` must be finite and non-negative".into()));
        }
        // 0 disables the lattice column.
        let cells: usize = cfg.get_usize("cells", 0)?;
        return Ok(Box::new(move |_seed| decoherence_rates(&p, &distances, cells)));
    }
    let d = cfg.f64("d", 4.0)?;
    if d < 0.0 {
        return Err(CliError::Validation(format!("`d` must be non-negative, got {d}")));
    }
    let trajectories = cfg.count("trajectories", 2000)?;
    let dt = cfg.positive("dt", 1e-3)?;
    let t = cfg.positive("T", 1.5)?;
    let stride = cfg.count("stride", 100)?;
    let n = steps(t, dt, "T")?;
    Ok(Box::new(move |seed| {
        let samples: Vec<usize> = (1..=n / stride).map(|k| k * stride).collect();
        let coherence = branch_coherence(d, &p, dt, &samples, trajectories, seed)?;
        let rho0 = TwoPointDensityMatrix::equal_superposition(Vec3::zeros(), Vec3::new(d, 0.0, 0.0));
        let mut table = Table::new(&[
            ("t", "time"),
            ("coherence", "-"),
            ("stderr", "-"),
            ("master_equation", "-"),
        ]);
        table.push(vec![0.0.into(), 0.5.into(), 0.0.into(), 0.5.into()]);
        for (t, c) in &coherence {
            let exact = evolve_two_point_superposition(&rho0, *t, &p).coherence().re;
            table.push(vec![(*t).into(), c.value.into(), c.stderr.into(), exact.into()]);
        }
        Ok(RunOutput::new(table, json!({ "d": d, "gamma": decoherence_rate(d, &p) })))
    }))
}

fn decoherence_rates(p: &ProbeParams, distances: &[f64], cells: usize) -> Result<RunOutput, CliError> {
    let mut table = Table::new(&[
        ("d", "length"),
        ("norm_sq", "energy"),
        ("gamma", "1/time"),
        ("norm_sq_lattice", "energy"),
        ("gamma_lattice", "1/time"),
    ]);
    let to_rate = p.lambda() / (2.0 * p.hbar());
    let origin = MassDensity::probe(p, Vec3::zeros());
    for &d in distances {
        let other = MassDensity::probe(p, Vec3::new(d, 0.0, 0.0));
        let norm_sq = dp_norm_sq(&origin, &other, &p.units())?;
        let lattice = if cells > 0 {
            let h = 2.0 * p.radius() / cells as f64;
            let a = LatticeDensity::rasterize_ball(Vec3::zeros(), p.mass(), p.radius(), Vec3::zeros(), h)?;
            let b = LatticeDensity::rasterize_ball(Vec3::new(d, 0.0, 0.0), p.mass(), p.radius(), Vec3::zeros(), h)?;
            dp_norm_sq(&MassDensity::Lattice(a), &MassDensity::Lattice(b), &p.units())?
        } else {
            f64::NAN
        };
        table.push(vec![
            d.into(),
            norm_sq.into(),
            (to_rate * norm_sq).into(),
            lattice.into(),
            (to_rate * lattice).into(),
        ]);
    }
    Ok(RunOutput::new(
        table,
        json!({ "saturation_gamma": decoherence_rate(f64::INFINITY, p), "cells_per_diameter": cells }),
    ))
}

fn pressure(cfg: &mut Config) -> Result<Prepared, CliError> {
    let n = cfg.f64("n", 1e-3)?;
    let m = cfg.positive("m", 1e-3)?;
    let temperature = cfg.positive("T_gas", 1.0)?;
    let big_m = cfg.positive("M", 1.0)?;
    let radius = cfg.positive("R", 1.0)?;
    let collisions = cfg.positive("collisions", 1e5)?;
    let base = GasConfig::new(n, m, temperature, big_m, radius, 1.0)?;
    let gas = match cfg.optional_string("duration") {
        Some(s) => {
            let duration: f64 = s
                .parse()
                .map_err(|_| CliError::Validation(format!("invalid value for `duration`: `{s}`")))?;
            GasConfig::new(n, m, temperature, big_m, radius, duration)?
        }
        None if n > 0.0 => base.with_expected_collisions(collisions)?,
        None => return Err(CliError::Validation("`n` = 0 needs an explicit `duration`".into())),
    };
    let collision_file = cfg.optional_string("collision_file");
    Ok(Box::new(move |seed| {
        let run = simulate_gas_brownian(&gas, seed);
        let estimate = pressure_estimator(&run.collisions, &gas).ok();
        let mut table = Table::new(&[
            ("pressure", "energy/length^3"),
            ("stderr", "energy/length^3"),
            ("collisions", "count"),
            ("ideal_pressure", "energy/length^3"),
            ("ball_rms_speed", "length/time"),
            ("regime_ok", "bool"),
        ]);
        let (value, err) = estimate.map(|e| (e.pressure, e.stderr)).unwrap_or((f64::NAN, f64::NAN));
        table.push(vec![
            value.into(),
            err.into(),
            run.collisions.len().into(),
            gas.ideal_pressure().into(),
            run.rms_speed.into(),
            Cell::Text(run.regime_warning.is_none().to_string()),
        ]);
        let mut out = RunOutput::new(
            table,
            json!({
                "duration": gas.duration,
                "collision_rate": gas.collision_rate(),
                "mean_kinetic_energy_per_axis": run.mean_kinetic_energy_per_axis,
                "max_speed": run.max_speed,
                "estimate_available": estimate.is_some(),
            }),
        );
        if let Some(path) = collision_file {
            let mut c = Table::new(&[
                ("time", "time"),
                ("nx", "-"),
                ("ny", "-"),
                ("nz", "-"),
                ("dvx", "length/time"),
                ("dvy", "length/time"),
                ("dvz", "length/time"),
            ]);
            for r in &run.collisions {
                c.push(vec![
                    r.time.into(),
                    r.normal.x.into(),
                    r.normal.y.into(),
                    r.normal.z.into(),
                    r.dv.x.into(),
                    r.dv.y.into(),
                    r.dv.z.into(),
                ]);
            }
            out.side_tables.push((path, c));
        }
        out.regime_warning = run.regime_warning;
        Ok(out)
    }))
}

fn noise_check(cfg: &mut Config) -> Result<Prepared, CliError> {
    let p = probe(cfg, 0.5)?;
    let nodes: Vec<usize> = parse_list("nodes", &cfg.string("nodes", "8,16")?)?;
    if nodes.iter().any(|&n| n < 8) {
        return Err(CliError::Validation("`nodes` entries must be at least 8 per diameter".into()));
    }
    let samples = cfg.count("samples", 100_000)?;
    let dt = cfg.positive("dt", 0.01)?;
    Ok(Box::new(move |seed| {
        let d = p.momentum_diffusion();
        let mut table = Table::new(&[
            ("method", "-"),
            ("nodes_per_diameter", "count"),
            ("ratio_x", "-"),
            ("ratio_y", "-"),
            ("ratio_z", "-"),
        ]);
        let mut stream = NoiseStream::auxiliary(seed, 0);
        let mut acc = [Scalar::default(); 3];
        for _ in 0..samples {
            let f = force_increment(&p, dt, &mut stream)?;
            for (a, v) in acc.iter_mut().zip(f.iter()) {
                a.push(v * v);
            }
        }
        table.push(vec![
            "direct".into(),
            0usize.into(),
            (acc[0].mean() / (d * dt)).into(),
            (acc[1].mean() / (d * dt)).into(),
            (acc[2].mean() / (d * dt)).into(),
        ]);
        for &n in &nodes {
            let lattice = Lattice::ball_cover(&[Vec3::zeros()], p.radius(), n);
            let stencil = BallStencil::new(&lattice, Vec3::zeros(), &p)?;
            let cov = stencil.covariance_with(&stencil, &lattice, &p, 1.0);
            table.push(vec![
                "lattice".into(),
                n.into(),
                (cov[(0, 0)] / d).into(),
                (cov[(1, 1)] / d).into(),
                (cov[(2, 2)] / d).into(),
            ]);
        }
        Ok(RunOutput::new(table, json!({ "momentum_diffusion": d })))
    }))
}

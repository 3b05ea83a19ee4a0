//! The ensemble of grid SSE trajectories must reproduce the master equation:
//! the density-matrix element between two branch centres a distance `d`
//! apart decays as `exp(-k d^2 t / 2)`.

use collapse_lab::ensemble::{map_reduce, CHUNK};
use collapse_lab::noise::{axis_increment, NoiseStream};
use collapse_lab::pointer::{GridPropagator, GridWavefunction};
use collapse_lab::ProbeParams;
use num_complex::Complex64;

const N: usize = 2048;
const DX: f64 = 1e-4;
const SIGMA0: f64 = 1e-3;
const D: f64 = 0.02;
// The instability guard compares each step with a Gaussian of equal
// variance; a two-peaked state needs kicks small enough that fourth-order
// terms stay below its tolerance.
const DT: f64 = 1e-7;

/// Even superposition of two narrow Gaussians at 0 and `D`; both lie on grid
/// points, and recentring moves the grid by whole cells so they stay there.
fn cat_state() -> GridWavefunction {
    let x0 = -924.0 * DX;
    let amplitudes = (0..N)
        .map(|i| {
            let x = x0 + i as f64 * DX;
            let g = |c: f64| (-(x - c).powi(2) / (4.0 * SIGMA0 * SIGMA0)).exp();
            Complex64::new(g(0.0) + g(D), 0.0)
        })
        .collect();
    let mut wf = GridWavefunction { amplitudes, x0, dx: DX };
    wf.normalize();
    wf
}

fn element(wf: &GridWavefunction, x: f64, y: f64) -> Complex64 {
    let at = |x: f64| wf.amplitudes[((x - wf.x0) / wf.dx).round() as usize];
    at(x) * at(y).conj()
}

#[test]
fn grid_unraveling_decoheres_at_the_localization_rate() {
    let p = ProbeParams::new(1e4, 1.0, 0.5).unwrap();
    let k = p.localization_rate();
    let gamma = k * D * D / 2.0;
    let samples = [250usize, 500, 1000];
    let trajectories = 400;
    let start = cat_state();
    let rho0 = element(&start, 0.0, D);

    let sums = map_reduce(
        trajectories,
        CHUNK,
        |range| {
            let mut acc = vec![(0.0, 0.0, 0.0); samples.len()];
            let mut prop = GridPropagator::for_wavefunction(&start, DT, &p)?;
            for traj in range {
                let mut wf = start.clone();
                let mut stream = NoiseStream::for_axis(7, traj as u64, 0);
                let mut next = 0;
                for step in 1..=samples[samples.len() - 1] {
                    let dw = axis_increment(&p, DT, &mut stream)?;
                    prop.sse_step(&mut wf, dw, &p)?;
                    if step == samples[next] {
                        let r = (element(&wf, 0.0, D) / rho0).re;
                        acc[next].0 += 1.0;
                        acc[next].1 += r;
                        acc[next].2 += r * r;
                        next += 1;
                    }
                }
            }
            Ok(acc)
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.0 += y.0;
                x.1 += y.1;
                x.2 += y.2;
            }
        },
    )
    .unwrap()
    .unwrap();

    for (&s, (n, sum, sq)) in samples.iter().zip(sums) {
        let t = s as f64 * DT;
        let mean = sum / n;
        let stderr = ((sq / n - mean * mean) / (n - 1.0)).sqrt();
        let expected = (-gamma * t).exp();
        eprintln!("t = {t:e}: {mean:.4} +- {stderr:.4} vs {expected:.4}");
        // Enough trajectories to tell the decay from no decay at all.
        assert!(stderr < 0.1 * (1.0 - expected), "too few trajectories: stderr {stderr}");
        assert!(
            (mean - expected).abs() <= 3.5 * stderr,
            "t = {t:e}: coherence {mean:.4} +- {stderr:.4}, master equation {expected:.4}"
        );
    }
}

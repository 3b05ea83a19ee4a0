//! Two balls driven by one lattice field feel correlated forces. The sample
//! cross-covariance must match the exact lattice prediction, and the
//! prediction must approach the continuum pair-kernel value.

use collapse_lab::emergent::force_cross_covariance;
use collapse_lab::ProbeParams;

#[test]
fn sampled_cross_covariance_matches_lattice_prediction() {
    let p = ProbeParams::new(1.0, 1.0, 0.5).unwrap();
    let report = force_cross_covariance(&p, 3.0, 8, 0.01, 20_000, 3).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let (e, s, q) = (report.empirical[(i, j)], report.stderr[(i, j)], report.predicted[(i, j)]);
            assert!((e - q).abs() <= 4.0 * s, "({i},{j}): sampled {e:e} +- {s:e}, predicted {q:e}");
        }
    }
    // Continuum value: the negated Hessian of the pair kernel, per unit
    // field step, i.e. -2 and +1 times lambda hbar G M^2 / (d^3 dt).
    let unit = p.lambda() * p.hbar() * p.g() * p.mass().powi(2) / (27.0 * 0.01);
    let c = report.predicted;
    assert!((c[(0, 0)] / (-2.0 * unit) - 1.0).abs() < 0.1, "axial {}", c[(0, 0)]);
    for t in 1..3 {
        assert!((c[(t, t)] / unit - 1.0).abs() < 0.1, "transverse {}", c[(t, t)]);
    }
}

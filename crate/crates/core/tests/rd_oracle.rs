use jscc_core::distortion::{DistortionSpec, RelaxationFunction};
use jscc_core::prob::{JointPmf, SourceModel};
use jscc_core::rd::{solve_rd, solve_rd_relaxed, RdOptions};

// Source P(0,0) = P(1,1) = 0.45, P(0,1) = P(1,0) = 0.05 under Hamming
// distortions at D_s = D_x = 0.1. The problem is invariant under flipping
// every bit and under swapping the roles of s and x, so by convexity an
// optimal test channel can be taken invariant too. Rows over reproductions
// (00, 01, 10, 11):
//   from 00: (a, b, b, c)    from 11: (c, b, b, a)
//   from 01: (d, e, f, d)    from 10: (d, f, e, d)
// Both expected distortions equal 0.9 (b + c) + 0.1 (d + f), and the rate is
// decreasing in distortion, so the constraint is active and fixes d.

const P_DIAG: f64 = 0.45;
const P_OFF: f64 = 0.05;
const D: f64 = 0.1;

fn rate_of(b: f64, c: f64, f: f64) -> Option<f64> {
    let d = (D - 2.0 * P_DIAG * (b + c)) / (2.0 * P_OFF) - f;
    let a = 1.0 - 2.0 * b - c;
    let e = 1.0 - 2.0 * d - f;
    if [a, b, c, d, e, f].iter().any(|&v| v < -1e-15) {
        return None;
    }
    let rows = [
        (P_DIAG, [a, b, b, c]),
        (P_OFF, [d, e, f, d]),
        (P_OFF, [d, f, e, d]),
        (P_DIAG, [c, b, b, a]),
    ];
    let mut out = [0.0; 4];
    for (p, w) in &rows {
        for j in 0..4 {
            out[j] += p * w[j];
        }
    }
    let mut mi = 0.0;
    for (p, w) in &rows {
        for j in 0..4 {
            if w[j] > 0.0 {
                mi += p * w[j] * (w[j] / out[j]).ln();
            }
        }
    }
    Some(mi)
}

/// Grid search over (b, c, f), refined around the incumbent.
fn grid_oracle() -> f64 {
    let mut center = [0.5, 0.5, 0.5];
    let mut half = 0.5;
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let steps = 20;
        let h = 2.0 * half / steps as f64;
        let mut incumbent = center;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let b = center[0] - half + h * i as f64;
                    let c = center[1] - half + h * j as f64;
                    let f = center[2] - half + h * k as f64;
                    if b < 0.0 || c < 0.0 || f < 0.0 {
                        continue;
                    }
                    if let Some(r) = rate_of(b, c, f) {
                        if r < best {
                            best = r;
                            incumbent = [b, c, f];
                        }
                    }
                }
            }
        }
        center = incumbent;
        half = 2.0 * h;
    }
    best
}

fn source() -> SourceModel<f64> {
    SourceModel::from_joint(JointPmf::new(vec![vec![P_DIAG, P_OFF], vec![P_OFF, P_DIAG]]).unwrap())
}

#[test]
fn two_constraint_rate_matches_grid_search() {
    let oracle = grid_oracle();
    let spec = DistortionSpec::hamming(2, 2, D, D).unwrap();
    let sol = solve_rd(&source(), &spec, &RdOptions::default()).unwrap();
    assert!((sol.rate - oracle).abs() < 2e-3, "solver {} oracle {}", sol.rate, oracle);
    assert!((sol.mutual_information - sol.rate).abs() < 1e-6);
    assert!(sol.achieved.0 <= D + 1e-6 && sol.achieved.1 <= D + 1e-6);
}

#[test]
fn relaxations_bracket_the_two_constraint_rate() {
    let src = source();
    let spec = DistortionSpec::hamming(2, 2, D, D).unwrap();
    let opts = RdOptions::default();
    let exact = solve_rd(&src, &spec, &opts).unwrap().rate;
    // A sum constraint admits every pair-feasible channel.
    let sum = solve_rd_relaxed(&src, &spec, &RelaxationFunction::linear(1.0, 1.0).unwrap(), &opts).unwrap();
    assert!(sum.rate() <= exact + 1e-7, "{} > {}", sum.rate(), exact);
    // Mean of a maximum dominates the maximum of means.
    let max = solve_rd_relaxed(&src, &spec, &RelaxationFunction::MaxNormalized, &opts).unwrap();
    assert!(max.rate() >= exact - 1e-7, "{} < {}", max.rate(), exact);
}

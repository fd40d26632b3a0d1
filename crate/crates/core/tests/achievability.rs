use approx::assert_abs_diff_eq;
use jscc_core::achievability::{
    achievability_bound, evaluate_terms, exact_step_integral, term_covering, term_first_layer,
    term_second_layer, term_semantic, AchievabilityConfig, AuxSearch, InnerLaw,
};
use jscc_core::distortion::DistortionSpec;
use jscc_core::info::StructuredChannel;
use jscc_core::prob::{JointPmf, Kernel, Matrix, Pmf, SourceModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn random_kernel(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Kernel<f64> {
    Kernel::new((0..inputs).map(|_| random_weights(rng, outputs)).collect()).unwrap()
}

fn random_joint(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> JointPmf<f64> {
    JointPmf::from_flat(rows, cols, random_weights(rng, rows * cols)).unwrap()
}

/// Both layer terms by direct summation over `(y1, y2, z)`.
fn layer_oracle(p12: &[Vec<f64>], w: &[Vec<Vec<f64>>], m1: f64, m2: f64) -> (f64, f64) {
    let (n1, n2, nz) = (p12.len(), p12[0].len(), w[0][0].len());
    let p1: Vec<f64> = p12.iter().map(|r| r.iter().sum()).collect();
    let mut z_given_1 = vec![vec![0.0; nz]; n1];
    for y1 in 0..n1 {
        for y2 in 0..n2 {
            for z in 0..nz {
                z_given_1[y1][z] += p12[y1][y2] / p1[y1] * w[y1][y2][z];
            }
        }
    }
    let pz: Vec<f64> = (0..nz).map(|z| (0..n1).map(|y1| p1[y1] * z_given_1[y1][z]).sum()).collect();
    let (mut t1, mut t3) = (0.0, 0.0);
    for y1 in 0..n1 {
        for y2 in 0..n2 {
            for z in 0..nz {
                let mass = p12[y1][y2] * w[y1][y2][z];
                if mass == 0.0 {
                    continue;
                }
                let i1 = (z_given_1[y1][z] / pz[z]).ln();
                let i2 = (w[y1][y2][z] / z_given_1[y1][z]).ln();
                t1 += mass * (-(i1 - m1.ln()).max(0.0)).exp();
                t3 += mass * (-(i2 - m2.ln()).max(0.0)).exp();
            }
        }
    }
    (t1, t3)
}

#[test]
fn layer_terms_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let k1 = Kernel::bsc(rng.gen_range(0.01..0.4)).unwrap();
        let k2 = random_kernel(&mut rng, 2, 3);
        let ch = StructuredChannel::product(&k1, &k2);
        let p12 = random_joint(&mut rng, 2, 2);
        let w: Vec<Vec<Vec<f64>>> =
            (0..2).map(|y1| (0..2).map(|y2| (0..ch.outputs()).map(|z| ch.prob(y1, y2, z)).collect()).collect()).collect();
        for (m1, m2) in [(1u64, 1u64), (2, 3), (5, 2)] {
            let (t1, t3) = layer_oracle(&p12.table().to_rows(), &w, m1 as f64, m2 as f64);
            assert_abs_diff_eq!(term_first_layer(m1, &p12, &ch).unwrap(), t1, epsilon = 1e-12);
            assert_abs_diff_eq!(term_second_layer(m2, &p12, &ch).unwrap(), t3, epsilon = 1e-12);
        }
    }
    // Coupled kernel that is not a product.
    let kernel = random_kernel(&mut rng, 4, 3);
    let ch = StructuredChannel::new(kernel, 2, 2).unwrap();
    let p12 = random_joint(&mut rng, 2, 2);
    let w: Vec<Vec<Vec<f64>>> =
        (0..2).map(|y1| (0..2).map(|y2| (0..3).map(|z| ch.prob(y1, y2, z)).collect()).collect()).collect();
    let (t1, t3) = layer_oracle(&p12.table().to_rows(), &w, 2.0, 2.0);
    assert_abs_diff_eq!(term_first_layer(2, &p12, &ch).unwrap(), t1, epsilon = 1e-12);
    assert_abs_diff_eq!(term_second_layer(2, &p12, &ch).unwrap(), t3, epsilon = 1e-12);
}

fn trapezoid(values: &[f64], weights: &[f64], m2: u64, n: usize) -> f64 {
    let g = |t: f64| -> f64 {
        let mass: f64 = values.iter().zip(weights).filter(|(v, _)| **v > t).map(|(_, w)| w).sum();
        mass.powi(m2 as i32)
    };
    let h = 1.0 / n as f64;
    let mut acc = 0.5 * (g(0.0) + g(1.0));
    for k in 1..n {
        acc += g(k as f64 * h);
    }
    acc * h
}

#[test]
fn step_integral_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m2 in [1u64, 2, 7] {
        let values: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
        let weights = random_weights(&mut rng, 6);
        let exact = exact_step_integral(&values, &Pmf::new(weights.clone()).unwrap(), m2).unwrap();
        assert_abs_diff_eq!(exact, trapezoid(&values, &weights, m2, 1_000_000), epsilon = 1e-5);
    }
}

/// Semantic term by looping over every symbol and integrating numerically.
fn semantic_oracle(m1: u64, m2: u64, joint: &[Vec<f64>], d_s: &Matrix<f64>, d_x: &Matrix<f64>, ds: f64, dx: f64, hat: &[Vec<f64>]) -> f64 {
    let (ns, nx) = (joint.len(), joint[0].len());
    let (nsh, nxh) = (hat.len(), hat[0].len());
    let p_xhat: Vec<f64> = (0..nxh).map(|xh| (0..nsh).map(|sh| hat[sh][xh]).sum()).collect();
    let mut total = 0.0;
    for x in 0..nx {
        let px: f64 = (0..ns).map(|s| joint[s][x]).sum();
        if px == 0.0 {
            continue;
        }
        let q: f64 = (0..nxh).filter(|&xh| d_x.get(x, xh) <= dx).map(|xh| p_xhat[xh]).sum();
        let t: f64 = (0..m1).map(|i| (1.0 - q).powi(i as i32)).sum();
        let pi: Vec<f64> = (0..nsh)
            .map(|sh| (0..ns).filter(|&s| d_s.get(s, sh) > ds).map(|s| joint[s][x]).sum::<f64>() / px)
            .collect();
        let mut inner = 0.0;
        for xh in 0..nxh {
            if d_x.get(x, xh) > dx || p_xhat[xh] == 0.0 {
                continue;
            }
            let cond: Vec<f64> = (0..nsh).map(|sh| hat[sh][xh] / p_xhat[xh]).collect();
            inner += p_xhat[xh] * trapezoid(&pi, &cond, m2, 200_000);
        }
        total += px * t * inner;
    }
    total
}

#[test]
fn semantic_term_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..4 {
        let joint = random_joint(&mut rng, 2, 2);
        let src = SourceModel::from_joint(joint.clone());
        let d_s = Matrix::from_rows(vec![vec![0.0, 1.0], vec![0.7, 0.2]]).unwrap();
        let d_x = Matrix::from_rows(vec![vec![0.1, 0.6], vec![0.5, 0.0]]).unwrap();
        let (ds, dx) = (0.3, 0.55);
        let spec = DistortionSpec::new(d_s.clone(), d_x.clone(), ds, dx).unwrap();
        let hat = random_joint(&mut rng, 2, 2);
        for (m1, m2) in [(1u64, 1u64), (3, 2), (2, 5)] {
            let ours = term_semantic(m1, m2, &hat, &src, &spec, InnerLaw::Conditional).unwrap();
            let oracle = semantic_oracle(m1, m2, &joint.table().to_rows(), &d_s, &d_x, ds, dx, &hat.table().to_rows());
            assert_abs_diff_eq!(ours, oracle, epsilon = 1e-5);
        }
    }
}

#[test]
fn degenerate_distortion_leaves_channel_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = SourceModel::from_joint(random_joint(&mut rng, 2, 2));
    let ch = StructuredChannel::product(&Kernel::bsc(0.1).unwrap(), &Kernel::bsc(0.2).unwrap());
    let spec = DistortionSpec::hamming(2, 2, 1.0, 1.0).unwrap();
    let res = achievability_bound(&src, &ch, &spec, &AchievabilityConfig::new(6)).unwrap();
    for b in &res.per_factorization {
        assert_eq!(b.covering, 0.0);
        assert_eq!(b.semantic, 0.0);
        assert_abs_diff_eq!(b.value(), (b.first_layer + b.second_layer).min(1.0), epsilon = 1e-15);
    }
}

fn simplex_points(resolution: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..=resolution {
        for b in 0..=resolution - a {
            for c in 0..=resolution - a - b {
                let d = resolution - a - b - c;
                out.push([a, b, c, d].iter().map(|&k| k as f64 / resolution as f64).collect());
            }
        }
    }
    out
}

#[test]
fn search_matches_exhaustive_grid() {
    let src = SourceModel::from_joint(JointPmf::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap());
    let ch = StructuredChannel::<f64>::noiseless(2, 2);
    let spec = DistortionSpec::hamming(2, 2, 0.2, 0.0).unwrap();
    let mut cfg = AchievabilityConfig::new(4);
    cfg.aux_search = AuxSearch::CoordinateDescent { restarts: 4, resolution: 20 };
    let res = achievability_bound(&src, &ch, &spec, &cfg).unwrap();

    let grid = simplex_points(20);
    assert_eq!(grid.len(), 1771);
    for found in &res.per_factorization {
        let (m1, m2) = (found.m1, found.m2);
        let best_channel = grid
            .iter()
            .map(|w| {
                let p = JointPmf::from_flat(2, 2, w.clone()).unwrap();
                term_first_layer(m1, &p, &ch).unwrap() + term_second_layer(m2, &p, &ch).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        let best_source = grid
            .iter()
            .map(|w| {
                let p = JointPmf::from_flat(2, 2, w.clone()).unwrap();
                term_covering(m1, &p.marginal(1).unwrap(), &src, &spec).unwrap()
                    + term_semantic(m1, m2, &p, &src, &spec, InnerLaw::Conditional).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        let oracle = (best_channel + best_source).min(1.0);
        assert!(found.value() <= oracle + 1e-12, "({m1},{m2}) {} > {oracle}", found.value());
        assert!(found.value() >= oracle - 0.05, "({m1},{m2}) {} << {oracle}", found.value());
    }
}

#[test]
fn bound_is_invariant_under_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let joint = random_joint(&mut rng, 2, 3);
    let d_s = Matrix::from_rows(vec![vec![0.0, 1.0], vec![0.8, 0.1]]).unwrap();
    let d_x = Matrix::from_rows(vec![vec![0.0, 0.4], vec![0.3, 0.2], vec![0.9, 0.0]]).unwrap();
    let spec = DistortionSpec::new(d_s.clone(), d_x.clone(), 0.5, 0.3).unwrap();
    let kernel = random_kernel(&mut rng, 4, 3);
    let ch = StructuredChannel::new(kernel.clone(), 2, 2).unwrap();
    let p12 = random_joint(&mut rng, 2, 2);
    let hat = random_joint(&mut rng, 2, 2);
    let base = evaluate_terms(3, 2, &p12, &hat, &SourceModel::from_joint(joint.clone()), &ch, &spec, InnerLaw::Conditional)
        .unwrap();

    // Swap the states, reverse the observations, swap ŝ and the channel
    // outputs 0 and 2.
    let ps = |s: usize| 1 - s;
    let px = |x: usize| 2 - x;
    let pz = |z: usize| [2, 1, 0][z];
    let joint2 = JointPmf::new((0..2).map(|s| (0..3).map(|x| joint.get(ps(s), px(x))).collect()).collect()).unwrap();
    let d_s2 = Matrix::from_fn(2, 2, |s, sh| d_s.get(ps(s), 1 - sh));
    let d_x2 = Matrix::from_fn(3, 2, |x, xh| d_x.get(px(x), xh));
    let spec2 = DistortionSpec::new(d_s2, d_x2, 0.5, 0.3).unwrap();
    let kernel2 = Kernel::new((0..4).map(|y| (0..3).map(|z| kernel.prob(y, pz(z))).collect()).collect()).unwrap();
    let ch2 = StructuredChannel::new(kernel2, 2, 2).unwrap();
    let hat2 = JointPmf::new((0..2).map(|sh| (0..2).map(|xh| hat.get(1 - sh, xh)).collect()).collect()).unwrap();
    let moved =
        evaluate_terms(3, 2, &p12, &hat2, &SourceModel::from_joint(joint2), &ch2, &spec2, InnerLaw::Conditional).unwrap();
    assert_abs_diff_eq!(base.first_layer, moved.first_layer, epsilon = 1e-12);
    assert_abs_diff_eq!(base.covering, moved.covering, epsilon = 1e-12);
    assert_abs_diff_eq!(base.second_layer, moved.second_layer, epsilon = 1e-12);
    assert_abs_diff_eq!(base.semantic, moved.semantic, epsilon = 1e-12);
}

fn arb_instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, u64, u64)> {
    (
        prop::collection::vec(0.01f64..1.0, 4),
        prop::collection::vec(0.0f64..1.0, 4),
        prop::collection::vec(0.01f64..1.0, 2),
        1u64..6,
        1u64..6,
    )
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let t: f64 = v.iter().sum();
    v.iter().map(|x| x / t).collect()
}

proptest! {
    #[test]
    fn terms_monotone_in_thresholds((src_w, hat_w, shat_w, m1, m2) in arb_instance(), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let src = SourceModel::from_joint(JointPmf::from_flat(2, 2, normalize(&src_w)).unwrap());
        let d_s = Matrix::from_rows(vec![vec![0.0, 1.0], vec![0.6, 0.3]]).unwrap();
        let d_x = Matrix::from_rows(vec![vec![0.2, 0.7], vec![0.5, 0.0]]).unwrap();
        let spec = |ds: f64, dx: f64| DistortionSpec::new(d_s.clone(), d_x.clone(), ds, dx).unwrap();
        let mut hw = hat_w.clone();
        hw[0] += 0.01;
        let hat = JointPmf::from_flat(2, 2, normalize(&hw)).unwrap();
        let p_xhat = hat.marginal(1).unwrap();
        let t2 = |s: &DistortionSpec<f64>| term_covering(m1, &p_xhat, &src, s).unwrap();
        let t4 = |h: &JointPmf<f64>, s: &DistortionSpec<f64>| term_semantic(m1, m2, h, &src, s, InnerLaw::Conditional).unwrap();
        for v in [t2(&spec(0.4, lo)), t4(&hat, &spec(lo, 0.4))] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(t2(&spec(0.4, hi)) <= t2(&spec(0.4, lo)) + 1e-12);
        prop_assert!(t4(&hat, &spec(hi, 0.4)) <= t4(&hat, &spec(lo, 0.4)) + 1e-12);
        // Product auxiliaries make T2 + T4 monotone in D_x as well.
        let product = JointPmf::product(&Pmf::new(normalize(&shat_w)).unwrap(), &p_xhat);
        let sum = |dx: f64| {
            let s = spec(0.4, dx);
            term_covering(m1, &p_xhat, &src, &s).unwrap() + t4(&product, &s)
        };
        prop_assert!(sum(hi) <= sum(lo) + 1e-12);
    }
}

//! Four-term achievability bound for layered random coding: a first-layer
//! channel codebook of size `M1` whose codewords index observation
//! reproductions, and `M2` second-layer codewords per first-layer word that
//! index state reproductions.
//!
//! - `T1 = E exp(-|ı(Y1; Z) - ln M1|⁺)`
//! - `T2 = E (1 - P_X̂(B(X)))^M1`
//! - `T3 = E exp(-|ı(Y2; Z | Y1) - ln M2|⁺)`
//! - `T4 = E[T(X) Σ_{x̂ ∈ B(X)} P(x̂) ∫₀¹ P[π(X, Ŝ) > t | x̂]^M2 dt]`
//!
//! `T1` and `T3` depend only on `P_{Y1 Y2}` and `T2`, `T4` only on
//! `P_{Ŝ X̂}`, so the two auxiliaries are searched separately.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distortion::DistortionSpec;
use crate::error::{Error, Result};
use crate::info::{InfoDensity, StructuredChannel};
use crate::prob::{JointPmf, Pmf, SourceModel};
use crate::rd::{solve_rd, RdOptions};
use crate::scalar::Scalar;

/// `exp(-|ı - c|⁺)`; a `-∞` density sits below any threshold.
fn excess_weight<T: Scalar>(density: InfoDensity<T>, threshold: T) -> T {
    match density {
        InfoDensity::Finite(i) => (-(i - threshold).max(T::zero())).exp(),
        InfoDensity::NegInfinite => T::one(),
    }
}

fn check_size(m: u64) -> Result<()> {
    if m == 0 {
        return Err(Error::BadArgs("codebook sizes must be positive".into()));
    }
    Ok(())
}

fn ln_size<T: Scalar>(m: u64) -> T {
    T::lit((m as f64).ln())
}

/// `E exp(-|ı(Y1; Z) - ln M1|⁺)` under `P_{Y1 Y2}` and the channel.
pub fn term_first_layer<T: Scalar>(m1: u64, p12: &JointPmf<T>, ch: &StructuredChannel<T>) -> Result<T> {
    check_size(m1)?;
    let law = ch.layered(p12)?;
    let threshold = ln_size(m1);
    let mut acc = T::zero();
    for y1 in 0..ch.first() {
        let p = law.p_y1.get(y1);
        if p <= T::zero() {
            continue;
        }
        for z in 0..ch.outputs() {
            let w = law.z_given_y1(y1, z);
            if w > T::zero() {
                acc = acc + p * w * excess_weight(law.first_density(y1, z)?, threshold);
            }
        }
    }
    Ok(acc.min(T::one()))
}

/// `E exp(-|ı(Y2; Z | Y1) - ln M2|⁺)`.
pub fn term_second_layer<T: Scalar>(m2: u64, p12: &JointPmf<T>, ch: &StructuredChannel<T>) -> Result<T> {
    check_size(m2)?;
    let law = ch.layered(p12)?;
    let threshold = ln_size(m2);
    let mut acc = T::zero();
    for y1 in 0..ch.first() {
        for y2 in 0..ch.second() {
            let p = p12.get(y1, y2);
            if p <= T::zero() {
                continue;
            }
            for z in 0..ch.outputs() {
                let w = ch.prob(y1, y2, z);
                if w > T::zero() {
                    acc = acc + p * w * excess_weight(law.second_density(ch, y1, y2, z)?, threshold);
                }
            }
        }
    }
    Ok(acc.min(T::one()))
}

fn check_reproduction<T: Scalar>(p_xhat: &Pmf<T>, spec: &DistortionSpec<T>) -> Result<()> {
    if p_xhat.len() != spec.observation_reproductions() {
        return Err(Error::DimMismatch { expected: spec.observation_reproductions(), got: p_xhat.len() });
    }
    Ok(())
}

/// `E (1 - P_X̂(B(X)))^M1`.
pub fn term_covering<T: Scalar>(m1: u64, p_xhat: &Pmf<T>, src: &SourceModel<T>, spec: &DistortionSpec<T>) -> Result<T> {
    check_size(m1)?;
    check_reproduction(p_xhat, spec)?;
    let power = T::lit(m1 as f64);
    let p_x = src.p_x();
    let mut acc = T::zero();
    for x in 0..src.observations() {
        let p = p_x.get(x);
        if p > T::zero() {
            let miss = (T::one() - spec.ball_probability(p_xhat, x)?).max(T::zero());
            acc = acc + p * miss.powf(power);
        }
    }
    Ok(acc.min(T::one()))
}

/// `P[d_s(S, ŝ) > D_s | X = x]`. Under the product law of the source and
/// the reproductions this does not depend on `x̂`.
pub fn pi_value<T: Scalar>(src: &SourceModel<T>, spec: &DistortionSpec<T>, x: usize, s_hat: usize) -> Result<T> {
    if x >= src.observations() {
        return Err(Error::IndexOutOfRange { index: x, size: src.observations() });
    }
    if s_hat >= spec.state_reproductions() {
        return Err(Error::IndexOutOfRange { index: s_hat, size: spec.state_reproductions() });
    }
    let p_x = src.p_x().get(x);
    if p_x <= T::zero() {
        return Err(Error::ZeroConditioningMass(x));
    }
    let mass: T = (0..src.states())
        .filter(|&s| spec.state_distortion(s, s_hat) > spec.threshold_s())
        .map(|s| src.prob(s, x))
        .sum();
    Ok((mass / p_x).min(T::one()))
}

/// `∫₀¹ g(t)^M2 dt` for the step function `g(t) = Σ_{v_j > t} w_j`,
/// summed exactly over its plateaus.
pub fn exact_step_integral<T: Scalar>(values: &[T], weights: &Pmf<T>, m2: u64) -> Result<T> {
    check_size(m2)?;
    if values.len() != weights.len() {
        return Err(Error::DimMismatch { expected: weights.len(), got: values.len() });
    }
    for &v in values {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(Error::ValueOutOfRange(v.as_f64()));
        }
    }
    let mut pts: Vec<(T, T)> =
        values.iter().copied().zip(weights.weights().iter().copied()).filter(|(_, w)| *w > T::zero()).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("values are finite"));
    let power = T::lit(m2 as f64);
    let mut remaining: T = pts.iter().map(|p| p.1).sum();
    let mut left = T::zero();
    let mut acc = T::zero();
    let mut k = 0;
    while k < pts.len() {
        let v = pts[k].0;
        if v > left {
            acc = acc + (v - left) * remaining.max(T::zero()).min(T::one()).powf(power);
            left = v;
        }
        while k < pts.len() && pts[k].0 == v {
            remaining = remaining - pts[k].1;
            k += 1;
        }
    }
    Ok(acc.min(T::one()))
}

/// `Σ_{i < M1} (1 - q)^i` in closed form; `M1` when `q = 0`.
pub fn t_factor<T: Scalar>(q: T, m1: u64) -> T {
    let n = T::lit(m1 as f64);
    if q <= T::zero() {
        return n;
    }
    if q >= T::one() {
        return T::one();
    }
    if q < T::lit(1e-3) {
        // 1 - (1 - q)^n cancels badly for small q.
        return -(n * (-q).ln_1p()).exp_m1() / q;
    }
    (T::one() - (T::one() - q).powf(n)) / q
}

/// Law of `Ŝ` inside the semantic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerLaw {
    /// `Ŝ ~ P_{Ŝ|X̂ = x̂}`.
    #[default]
    Conditional,
    /// `Ŝ ~ P_Ŝ`, ignoring `x̂`.
    Marginal,
}

/// Semantic term `T4`; `p_hat` has rows `ŝ` and columns `x̂`.
pub fn term_semantic<T: Scalar>(
    m1: u64,
    m2: u64,
    p_hat: &JointPmf<T>,
    src: &SourceModel<T>,
    spec: &DistortionSpec<T>,
    inner: InnerLaw,
) -> Result<T> {
    check_size(m1)?;
    check_size(m2)?;
    if p_hat.rows() != spec.state_reproductions() {
        return Err(Error::DimMismatch { expected: spec.state_reproductions(), got: p_hat.rows() });
    }
    if p_hat.cols() != spec.observation_reproductions() {
        return Err(Error::DimMismatch { expected: spec.observation_reproductions(), got: p_hat.cols() });
    }
    let p_xhat = p_hat.marginal(1)?;
    let p_shat = p_hat.marginal(0)?;
    let given = p_hat.condition(1)?;
    let p_x = src.p_x();
    let mut acc = T::zero();
    for x in 0..src.observations() {
        let px = p_x.get(x);
        if px <= T::zero() {
            continue;
        }
        let q = spec.ball_probability(&p_xhat, x)?;
        let values: Vec<T> =
            (0..spec.state_reproductions()).map(|sh| pi_value(src, spec, x, sh)).collect::<Result<_>>()?;
        let mut inner_sum = T::zero();
        for xh in 0..spec.observation_reproductions() {
            let w = p_xhat.get(xh);
            if w <= T::zero() || !spec.in_ball(x, xh) {
                continue;
            }
            let law = match inner {
                InnerLaw::Conditional => given.row(xh)?,
                InnerLaw::Marginal => &p_shat,
            };
            inner_sum = inner_sum + w * exact_step_integral(&values, law, m2)?;
        }
        acc = acc + px * t_factor(q, m1) * inner_sum;
    }
    Ok(acc.min(T::one()))
}

/// Auxiliary distributions and the four terms at one factorization.
#[derive(Debug, Clone)]
pub struct TermBreakdown<T = f64> {
    pub m1: u64,
    pub m2: u64,
    pub first_layer: T,
    pub covering: T,
    pub second_layer: T,
    pub semantic: T,
    pub p12: JointPmf<T>,
    pub p_hat: JointPmf<T>,
}

impl<T: Scalar> TermBreakdown<T> {
    /// Sum of the four terms clamped to `[0, 1]`.
    pub fn value(&self) -> T {
        self.total().min(T::one())
    }

    /// Unclamped sum of the four terms.
    pub fn total(&self) -> T {
        self.first_layer + self.covering + self.second_layer + self.semantic
    }
}

/// All four terms for fixed auxiliaries.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_terms<T: Scalar>(
    m1: u64,
    m2: u64,
    p12: &JointPmf<T>,
    p_hat: &JointPmf<T>,
    src: &SourceModel<T>,
    ch: &StructuredChannel<T>,
    spec: &DistortionSpec<T>,
    inner: InnerLaw,
) -> Result<TermBreakdown<T>> {
    Ok(TermBreakdown {
        m1,
        m2,
        first_layer: term_first_layer(m1, p12, ch)?,
        covering: term_covering(m1, &p_hat.marginal(1)?, src, spec)?,
        second_layer: term_second_layer(m2, p12, ch)?,
        semantic: term_semantic(m1, m2, p_hat, src, spec, inner)?,
        p12: p12.clone(),
        p_hat: p_hat.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuxSearch<T = f64> {
    Fixed { p12: JointPmf<T>, p_hat: JointPmf<T> },
    /// Unit-transfer descent on the simplex grid with step `1/resolution`.
    CoordinateDescent { restarts: usize, resolution: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Initializer {
    #[default]
    Uniform,
    /// Reproduction marginal of the rate-distortion solution, uniform
    /// channel input. Falls back to uniform when the thresholds are below
    /// the minimum achievable distortions.
    RdSeeded,
}

#[derive(Debug, Clone)]
pub struct AchievabilityConfig<T = f64> {
    pub m: u64,
    /// `(M1, M2)` pairs; every divisor pair of `M` when `None`.
    pub factorizations: Option<Vec<(u64, u64)>>,
    pub aux_search: AuxSearch<T>,
    pub initializer: Initializer,
    pub inner_law: InnerLaw,
    pub seed: u64,
    pub rd: RdOptions<T>,
}

impl<T: Scalar> AchievabilityConfig<T> {
    pub fn new(m: u64) -> Self {
        Self {
            m,
            factorizations: None,
            aux_search: AuxSearch::CoordinateDescent { restarts: 1, resolution: 20 },
            initializer: Initializer::Uniform,
            inner_law: InnerLaw::Conditional,
            seed: 0,
            rd: RdOptions::default(),
        }
    }

    pub fn pairs(&self) -> Result<Vec<(u64, u64)>> {
        check_size(self.m)?;
        let pairs = match &self.factorizations {
            Some(p) => p.clone(),
            None => divisor_pairs(self.m),
        };
        if pairs.is_empty() {
            return Err(Error::BadArgs("no factorizations".into()));
        }
        for &(a, b) in &pairs {
            if a == 0 || b == 0 || a.checked_mul(b) != Some(self.m) {
                return Err(Error::BadArgs(format!("factorization ({a}, {b}) does not multiply to {}", self.m)));
            }
        }
        if let AuxSearch::CoordinateDescent { restarts, resolution } = self.aux_search {
            if restarts == 0 || resolution == 0 {
                return Err(Error::BadArgs("aux search needs restarts and resolution >= 1".into()));
            }
        }
        Ok(pairs)
    }
}

/// `(M1, M2)` with `M1 M2 = m`, ordered by `M1`.
pub fn divisor_pairs(m: u64) -> Vec<(u64, u64)> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1u64;
    while d.saturating_mul(d) <= m {
        if m.is_multiple_of(d) {
            small.push((d, m / d));
            if d != m / d {
                large.push((m / d, d));
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

#[derive(Debug, Clone)]
pub struct AchievabilityResult<T = f64> {
    /// Best bound, clamped to `[0, 1]`.
    pub value: T,
    pub best: TermBreakdown<T>,
    /// Best breakdown per factorization, in configuration order.
    pub per_factorization: Vec<TermBreakdown<T>>,
}

/// Integer point on the simplex grid.
fn grid_to_pmf<T: Scalar>(counts: &[usize], resolution: usize) -> Vec<T> {
    counts.iter().map(|&c| T::lit(c as f64 / resolution as f64)).collect()
}

/// Largest-remainder rounding of a distribution onto the grid.
fn round_to_grid<T: Scalar>(p: &[T], resolution: usize) -> Vec<usize> {
    let scaled: Vec<f64> = p.iter().map(|v| v.as_f64() * resolution as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|v| v.floor().max(0.0) as usize).collect();
    let mut short = resolution.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts
}

/// Greedy descent over unit transfers, largest steps first.
fn descend_grid<T: Scalar>(
    mut counts: Vec<usize>,
    resolution: usize,
    f: &dyn Fn(&[T]) -> Result<T>,
) -> Result<(Vec<usize>, T)> {
    let mut current = f(&grid_to_pmf::<T>(&counts, resolution))?;
    let mut step = (resolution / 2).max(1);
    loop {
        let mut improved = false;
        for from in 0..counts.len() {
            for to in 0..counts.len() {
                if from == to || counts[from] < step {
                    continue;
                }
                counts[from] -= step;
                counts[to] += step;
                let v = f(&grid_to_pmf::<T>(&counts, resolution))?;
                if v < current - T::identity_tol() {
                    current = v;
                    improved = true;
                } else {
                    counts[from] += step;
                    counts[to] -= step;
                }
            }
        }
        if !improved {
            if step == 1 {
                break;
            }
            step /= 2;
        }
    }
    Ok((counts, current))
}

fn random_grid_point(rng: &mut ChaCha8Rng, cells: usize, resolution: usize) -> Vec<usize> {
    let mut counts = vec![0usize; cells];
    for _ in 0..resolution {
        counts[rng.gen_range(0..cells)] += 1;
    }
    counts
}

/// Minimizes `f` over distributions on `cells` atoms: the start point itself
/// plus grid descents from it and from random restarts.
fn minimize_simplex<T: Scalar>(
    start: &[T],
    restarts: usize,
    resolution: usize,
    seed: u64,
    stream: u64,
    f: &dyn Fn(&[T]) -> Result<T>,
) -> Result<(Vec<T>, T)> {
    let cells = start.len();
    let mut best = (start.to_vec(), f(start)?);
    for k in 0..restarts {
        let init = if k == 0 {
            round_to_grid(start, resolution)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream * 1_000_003 + k as u64);
            random_grid_point(&mut rng, cells, resolution)
        };
        let (counts, v) = descend_grid(init, resolution, f)?;
        if v < best.1 {
            best = (grid_to_pmf(&counts, resolution), v);
        }
    }
    Ok(best)
}

fn initial_aux<T: Scalar>(
    src: &SourceModel<T>,
    ch: &StructuredChannel<T>,
    spec: &DistortionSpec<T>,
    cfg: &AchievabilityConfig<T>,
) -> (JointPmf<T>, JointPmf<T>) {
    let p12 = JointPmf::uniform(ch.first(), ch.second());
    let uniform_hat = JointPmf::uniform(spec.state_reproductions(), spec.observation_reproductions());
    let p_hat = match cfg.initializer {
        Initializer::Uniform => uniform_hat,
        Initializer::RdSeeded => solve_rd(src, spec, &cfg.rd).map(|s| s.reproduction).unwrap_or(uniform_hat),
    };
    (p12, p_hat)
}

fn best_for_pair<T: Scalar>(
    index: usize,
    (m1, m2): (u64, u64),
    src: &SourceModel<T>,
    ch: &StructuredChannel<T>,
    spec: &DistortionSpec<T>,
    cfg: &AchievabilityConfig<T>,
    init: &(JointPmf<T>, JointPmf<T>),
) -> Result<TermBreakdown<T>> {
    let (p12, p_hat) = match &cfg.aux_search {
        AuxSearch::Fixed { p12, p_hat } => (p12.clone(), p_hat.clone()),
        AuxSearch::CoordinateDescent { restarts, resolution } => {
            let (n1, n2) = (ch.first(), ch.second());
            let channel_part = |w: &[T]| -> Result<T> {
                let p = JointPmf::from_flat_trusted(n1, n2, w.to_vec());
                Ok(term_first_layer(m1, &p, ch)? + term_second_layer(m2, &p, ch)?)
            };
            let (nsh, nxh) = (spec.state_reproductions(), spec.observation_reproductions());
            let source_part = |w: &[T]| -> Result<T> {
                let p = JointPmf::from_flat_trusted(nsh, nxh, w.to_vec());
                Ok(term_covering(m1, &p.marginal(1)?, src, spec)? + term_semantic(m1, m2, &p, src, spec, cfg.inner_law)?)
            };
            let stream = 2 * index as u64;
            let (w12, _) = minimize_simplex(init.0.flat(), *restarts, *resolution, cfg.seed, stream, &channel_part)?;
            let (what, _) = minimize_simplex(init.1.flat(), *restarts, *resolution, cfg.seed, stream + 1, &source_part)?;
            (JointPmf::from_flat_trusted(n1, n2, w12), JointPmf::from_flat_trusted(nsh, nxh, what))
        }
    };
    evaluate_terms(m1, m2, &p12, &p_hat, src, ch, spec, cfg.inner_law)
}

/// Achievability bound minimized over factorizations and auxiliaries.
/// Factorizations are evaluated in parallel on the current rayon pool; the
/// reduce keeps the first minimum of the unclamped sum in configuration order.
pub fn achievability_bound<T: Scalar>(
    src: &SourceModel<T>,
    ch: &StructuredChannel<T>,
    spec: &DistortionSpec<T>,
    cfg: &AchievabilityConfig<T>,
) -> Result<AchievabilityResult<T>> {
    let pairs = cfg.pairs()?;
    if spec.states() != src.states() || spec.observations() != src.observations() {
        return Err(Error::DimMismatch { expected: src.states() * src.observations(), got: spec.states() * spec.observations() });
    }
    let init = initial_aux(src, ch, spec, cfg);
    let per: Vec<TermBreakdown<T>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &pair)| best_for_pair(i, pair, src, ch, spec, cfg, &init))
        .collect::<Result<_>>()?;
    let mut win = 0;
    for (i, b) in per.iter().enumerate() {
        if b.total() < per[win].total() {
            win = i;
        }
    }
    Ok(AchievabilityResult { value: per[win].value().max(T::zero()), best: per[win].clone(), per_factorization: per })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::Kernel;
    use approx::assert_abs_diff_eq;

    fn uniform_binary_source() -> SourceModel<f64> {
        SourceModel::from_joint(JointPmf::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap())
    }

    #[test]
    fn t_factor_matches_partial_sum() {
        for q in [0.0f64, 0.3, 1.0] {
            for m1 in [1u64, 2, 5] {
                let literal: f64 = (0..m1).map(|i| (1.0 - q).powi(i as i32)).sum();
                assert_abs_diff_eq!(t_factor(q, m1), literal, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn t_factor_small_q_keeps_precision() {
        for q in [1e-15f64, 1e-9, 9.99e-4] {
            let literal: f64 = (0..7).map(|i| (1.0 - q).powi(i)).sum();
            assert_abs_diff_eq!(t_factor(q, 7), literal, epsilon = 1e-12);
        }
    }

    #[test]
    fn step_integral_examples() {
        let one = Pmf::new(vec![1.0]).unwrap();
        for m2 in [1, 3, 10] {
            assert_abs_diff_eq!(exact_step_integral(&[0.5], &one, m2).unwrap(), 0.5, epsilon = 1e-15);
        }
        let half = Pmf::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(exact_step_integral(&[0.2, 0.0], &half, 2).unwrap(), 0.05, epsilon = 1e-15);
        assert_eq!(exact_step_integral(&[1.5, 0.0], &half, 2), Err(Error::ValueOutOfRange(1.5)));
    }

    #[test]
    fn pi_value_examples() {
        let src = SourceModel::from_joint(JointPmf::new(vec![vec![0.45, 0.2], vec![0.05, 0.3]]).unwrap());
        let spec = DistortionSpec::hamming(2, 2, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(pi_value(&src, &spec, 0, 0).unwrap(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(pi_value(&src, &spec, 0, 1).unwrap(), 0.9, epsilon = 1e-12);
        let loose = DistortionSpec::hamming(2, 2, 1.0, 0.0).unwrap();
        assert_eq!(pi_value(&src, &loose, 0, 1).unwrap(), 0.0);
        let gap = SourceModel::from_joint(JointPmf::new(vec![vec![0.5, 0.0], vec![0.5, 0.0]]).unwrap());
        assert_eq!(pi_value(&gap, &spec, 1, 0), Err(Error::ZeroConditioningMass(1)));
    }

    #[test]
    fn covering_examples() {
        let src = uniform_binary_source();
        let p = Pmf::uniform(2);
        let exact = DistortionSpec::hamming(2, 2, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(term_covering(2, &p, &src, &exact).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(term_covering(1, &p, &src, &exact).unwrap(), 0.5, epsilon = 1e-15);
        assert!(term_covering(0, &p, &src, &exact).is_err());
        let loose = DistortionSpec::hamming(2, 2, 0.0, 1.0).unwrap();
        assert_eq!(term_covering(3, &p, &src, &loose).unwrap(), 0.0);
    }

    #[test]
    fn layer_examples() {
        let ch = StructuredChannel::<f64>::noiseless(4, 4);
        let p12 = JointPmf::uniform(4, 4);
        assert_abs_diff_eq!(term_first_layer(2, &p12, &ch).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(term_second_layer(2, &p12, &ch).unwrap(), 0.5, epsilon = 1e-12);
        let useless = StructuredChannel::new(Kernel::constant(4, Pmf::<f64>::uniform(3)), 2, 2).unwrap();
        assert_abs_diff_eq!(term_first_layer(1, &JointPmf::uniform(2, 2), &useless).unwrap(), 1.0, epsilon = 1e-15);
        let single = StructuredChannel::new(Kernel::bsc(0.1f64).unwrap(), 2, 1).unwrap();
        assert_abs_diff_eq!(term_second_layer(1, &JointPmf::uniform(2, 1), &single).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn semantic_vanishes_when_state_is_free() {
        let src = SourceModel::from_joint(JointPmf::new(vec![vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap());
        let spec = DistortionSpec::hamming(2, 2, 1.0, 0.0).unwrap();
        let p_hat = JointPmf::new(vec![vec![0.1, 0.3], vec![0.4, 0.2]]).unwrap();
        assert_eq!(term_semantic(3, 2, &p_hat, &src, &spec, InnerLaw::Conditional).unwrap(), 0.0);
    }

    #[test]
    fn semantic_full_ball_drops_t_factor() {
        let src = SourceModel::from_joint(JointPmf::new(vec![vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap());
        let spec = DistortionSpec::hamming(2, 2, 0.0, 1.0).unwrap();
        let p_hat = JointPmf::new(vec![vec![0.1, 0.3], vec![0.4, 0.2]]).unwrap();
        let a = term_semantic(1, 2, &p_hat, &src, &spec, InnerLaw::Conditional).unwrap();
        let b = term_semantic(7, 2, &p_hat, &src, &spec, InnerLaw::Conditional).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn divisor_pairs_cover_all() {
        assert_eq!(divisor_pairs(4), vec![(1, 4), (2, 2), (4, 1)]);
        assert_eq!(divisor_pairs(12), vec![(1, 12), (2, 6), (3, 4), (4, 3), (6, 2), (12, 1)]);
        assert_eq!(divisor_pairs(1), vec![(1, 1)]);
    }

    #[test]
    fn covering_plus_semantic_can_rise_with_observation_threshold() {
        // With correlated reproductions, enlarging the observation ball can
        // admit x̂ whose paired ŝ is poor, so T2 + T4 is not monotone in D_x.
        let src = SourceModel::from_joint(JointPmf::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        let d_x = crate::prob::Matrix::from_rows(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let d_s = crate::distortion::hamming(2, 2);
        let tight = DistortionSpec::new(d_s.clone(), d_x.clone(), 0.0, 0.0).unwrap();
        let wide = DistortionSpec::new(d_s, d_x, 0.0, 0.5).unwrap();
        // x̂ = 1 is paired with the wrong state.
        let p_hat = JointPmf::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let total = |spec: &DistortionSpec<f64>| {
            term_covering(2, &p_hat.marginal(1).unwrap(), &src, spec).unwrap()
                + term_semantic(2, 1, &p_hat, &src, spec, InnerLaw::Conditional).unwrap()
        };
        assert_abs_diff_eq!(total(&tight), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(total(&wide), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn clamped_when_terms_exceed_one() {
        let src = uniform_binary_source();
        let ch = StructuredChannel::<f64>::noiseless(4, 4);
        let spec = DistortionSpec::hamming(2, 2, 1.0, 1.0).unwrap();
        let mut cfg = AchievabilityConfig::new(4);
        cfg.aux_search = AuxSearch::Fixed { p12: JointPmf::uniform(4, 4), p_hat: JointPmf::uniform(2, 2) };
        let res = achievability_bound(&src, &ch, &spec, &cfg).unwrap();
        let pairs: Vec<(u64, u64)> = res.per_factorization.iter().map(|b| (b.m1, b.m2)).collect();
        assert_eq!(pairs, vec![(1, 4), (2, 2), (4, 1)]);
        let mid = &res.per_factorization[1];
        assert_abs_diff_eq!(mid.first_layer, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.second_layer, 0.5, epsilon = 1e-12);
        assert_eq!(mid.covering, 0.0);
        assert_eq!(mid.semantic, 0.0);
        assert_eq!(mid.value(), 1.0);
    }
}

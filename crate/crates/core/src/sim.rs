//! Monte Carlo estimate of the excess-distortion probability of the layered
//! random code: `M1` first-layer pairs `(x̂_i, y1_i)` and, under each, `M2`
//! second-layer pairs `(ŝ_ij, y2_ij)`.
//!
//! Every trial draws from its own ChaCha8 stream keyed by the master seed
//! and the trial index, so counts do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::achievability::pi_value;
use crate::distortion::DistortionSpec;
use crate::error::{Error, Result};
use crate::info::StructuredChannel;
use crate::prob::{Conditional, JointPmf, Pmf, SourceModel};
use crate::scalar::Scalar;

/// Trials per parallel work item in fixed-codebook mode.
const BATCH: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    m1: usize,
    m2: usize,
    /// `(x̂_i, y1_i)`.
    first_layer: Vec<(usize, usize)>,
    /// `(ŝ_ij, y2_ij)`, row-major in `(i, j)`.
    second_layer: Vec<(usize, usize)>,
    generation_seed: u64,
    stream: u64,
}

impl Codebook {
    pub fn sizes(&self) -> (usize, usize) {
        (self.m1, self.m2)
    }

    pub fn first(&self, i: usize) -> (usize, usize) {
        self.first_layer[i]
    }

    pub fn second(&self, i: usize, j: usize) -> (usize, usize) {
        self.second_layer[i * self.m2 + j]
    }

    pub fn generation_seed(&self) -> u64 {
        self.generation_seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

/// Codebook sizes and the two generating laws: `p_hat` on `Ŝ x X̂` and
/// `p12` on `Y1 x Y2`.
#[derive(Debug, Clone)]
pub struct Scheme<T = f64> {
    pub m1: usize,
    pub m2: usize,
    pub p_hat: JointPmf<T>,
    pub p12: JointPmf<T>,
}

fn conditional_row<T: Scalar>(c: &Conditional<T>, b: usize) -> Result<&Pmf<T>> {
    c.row(b).map_err(|_| Error::ZeroConditioningMass(b))
}

/// Samplers for one scheme, shared by all codebooks drawn from it.
struct Ensemble<T> {
    m1: usize,
    m2: usize,
    p_xhat: Pmf<T>,
    s_given_xhat: Conditional<T>,
    p_y1: Pmf<T>,
    y2_given_y1: Conditional<T>,
}

impl<T: Scalar> Ensemble<T> {
    fn new(m1: usize, m2: usize, p_hat: &JointPmf<T>, p12: &JointPmf<T>) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::BadArgs("codebook sizes must be positive".into()));
        }
        Ok(Self {
            m1,
            m2,
            p_xhat: p_hat.marginal(1)?,
            s_given_xhat: p_hat.condition(1)?,
            p_y1: p12.marginal(0)?,
            y2_given_y1: p12.condition(0)?,
        })
    }

    fn draw(&self, seed: u64, stream: u64) -> Result<Codebook> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut first_layer = Vec::with_capacity(self.m1);
        let mut second_layer = Vec::with_capacity(self.m1 * self.m2);
        for _ in 0..self.m1 {
            let xh = self.p_xhat.sample(&mut rng);
            let y1 = self.p_y1.sample(&mut rng);
            let s_row = conditional_row(&self.s_given_xhat, xh)?;
            let y2_row = conditional_row(&self.y2_given_y1, y1)?;
            for _ in 0..self.m2 {
                second_layer.push((s_row.sample(&mut rng), y2_row.sample(&mut rng)));
            }
            first_layer.push((xh, y1));
        }
        Ok(Codebook { m1: self.m1, m2: self.m2, first_layer, second_layer, generation_seed: seed, stream })
    }
}

/// Draws a codebook from the ensemble on the given ChaCha8 stream.
pub fn build_codebook<T: Scalar>(
    seed: u64,
    stream: u64,
    m1: usize,
    m2: usize,
    p_hat: &JointPmf<T>,
    p12: &JointPmf<T>,
) -> Result<Codebook> {
    Ensemble::new(m1, m2, p_hat, p12)?.draw(seed, stream)
}

/// Encoder output; `covered` is false when no first-layer word lies in the
/// observation ball and index 0 is sent anyway.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoded {
    pub i: usize,
    pub j: usize,
    pub covered: bool,
}

/// `π(x, ŝ)` for every observation and state reproduction. Observations of
/// zero probability get 1.
fn pi_table<T: Scalar>(src: &SourceModel<T>, spec: &DistortionSpec<T>) -> Result<Vec<Vec<T>>> {
    (0..src.observations())
        .map(|x| {
            (0..spec.state_reproductions())
                .map(|sh| match pi_value(src, spec, x, sh) {
                    Err(Error::ZeroConditioningMass(_)) => Ok(T::one()),
                    other => other,
                })
                .collect()
        })
        .collect()
}

fn encode_with<T: Scalar>(pi: &[Vec<T>], x: usize, cb: &Codebook, spec: &DistortionSpec<T>) -> Encoded {
    let hit = (0..cb.m1).find(|&i| spec.in_ball(x, cb.first(i).0));
    let i = hit.unwrap_or(0);
    let mut j = 0;
    for k in 1..cb.m2 {
        if pi[x][cb.second(i, k).0] < pi[x][cb.second(i, j).0] {
            j = k;
        }
    }
    Encoded { i, j, covered: hit.is_some() }
}

/// First first-layer word inside the observation ball, then the
/// second-layer word minimizing `π(x, ŝ_ij)`; ties go to the smallest index.
pub fn encode<T: Scalar>(x: usize, cb: &Codebook, src: &SourceModel<T>, spec: &DistortionSpec<T>) -> Result<Encoded> {
    if x >= src.observations() {
        return Err(Error::IndexOutOfRange { index: x, size: src.observations() });
    }
    Ok(encode_with(&pi_table(src, spec)?, x, cb, spec))
}

/// Maximum-likelihood decoding over all `(i, j)`; ties go to the
/// lexicographically smallest pair.
pub fn decode<T: Scalar>(z: usize, cb: &Codebook, ch: &StructuredChannel<T>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_p = T::neg_infinity();
    for i in 0..cb.m1 {
        let y1 = cb.first(i).1;
        for j in 0..cb.m2 {
            let p = ch.prob(y1, cb.second(i, j).1, z);
            if p > best_p {
                best_p = p;
                best = (i, j);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// One codebook, drawn on stream 1, reused by every trial.
    FixedCodebook,
    /// A fresh codebook for every `trials_per_codebook` consecutive trials.
    Ensemble { trials_per_codebook: u64 },
}

impl SimMode {
    pub fn label(&self) -> &'static str {
        match self {
            SimMode::FixedCodebook => "fixed_codebook",
            SimMode::Ensemble { .. } => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult<T = f64> {
    pub trials: u64,
    pub excess_count: u64,
    pub estimate: T,
    pub wilson_95: (T, T),
    pub mode: SimMode,
    pub master_seed: u64,
}

impl<T: Scalar> SimResult<T> {
    /// Binomial standard error `sqrt(p (1 - p) / n)` of the estimate.
    pub fn std_error(&self) -> T {
        let n = T::lit(self.trials as f64);
        (self.estimate * (T::one() - self.estimate) / n).sqrt()
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval<T: Scalar>(k: u64, n: u64, confidence: T) -> Result<(T, T)> {
    if n == 0 || k > n {
        return Err(Error::BadArgs(format!("need 0 <= k <= n and n >= 1, got k = {k}, n = {n}")));
    }
    let c = confidence.as_f64();
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::BadArgs(format!("confidence {c} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + c / 2.0);
    let (nf, p) = (n as f64, k as f64 / n as f64);
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok((T::lit(lo), T::lit(hi)))
}

/// Everything a trial needs, precomputed once.
struct Trial<'a, T> {
    source: Pmf<T>,
    nx: usize,
    pi: Vec<Vec<T>>,
    ch: &'a StructuredChannel<T>,
    spec: &'a DistortionSpec<T>,
}

impl<T: Scalar> Trial<'_, T> {
    fn excess(&self, cb: &Codebook, seed: u64, index: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * index);
        let a = self.source.sample(&mut rng);
        let (s, x) = (a / self.nx, a % self.nx);
        let enc = encode_with(&self.pi, x, cb, self.spec);
        let input = self.ch.input_index(cb.first(enc.i).1, cb.second(enc.i, enc.j).1);
        let z = self.ch.kernel().row(input).sample(&mut rng);
        let (i, j) = decode(z, cb, self.ch);
        self.spec.is_excess(s, x, cb.second(i, j).0, cb.first(i).0)
    }

    fn count(&self, cb: &Codebook, seed: u64, range: std::ops::Range<u64>) -> u64 {
        range.filter(|&t| self.excess(cb, seed, t)).count() as u64
    }
}

/// Runs `n_trials` encode/transmit/decode rounds and counts excess events.
///
/// Trial `t` uses stream `2t`; the codebook serving trial block `c` uses
/// stream `2c + 1`.
pub fn run_trials<T: Scalar>(
    src: &SourceModel<T>,
    ch: &StructuredChannel<T>,
    spec: &DistortionSpec<T>,
    scheme: &Scheme<T>,
    n_trials: u64,
    master_seed: u64,
    mode: SimMode,
) -> Result<SimResult<T>> {
    if n_trials == 0 {
        return Err(Error::BadArgs("n_trials must be at least 1".into()));
    }
    if spec.states() != src.states() || spec.observations() != src.observations() {
        return Err(Error::DimMismatch {
            expected: src.states() * src.observations(),
            got: spec.states() * spec.observations(),
        });
    }
    let (nsh, nxh) = (spec.state_reproductions(), spec.observation_reproductions());
    if (scheme.p_hat.rows(), scheme.p_hat.cols()) != (nsh, nxh) {
        return Err(Error::DimMismatch { expected: nsh * nxh, got: scheme.p_hat.rows() * scheme.p_hat.cols() });
    }
    if (scheme.p12.rows(), scheme.p12.cols()) != (ch.first(), ch.second()) {
        return Err(Error::DimMismatch { expected: ch.first() * ch.second(), got: scheme.p12.rows() * scheme.p12.cols() });
    }
    let ensemble = Ensemble::new(scheme.m1, scheme.m2, &scheme.p_hat, &scheme.p12)?;
    let trial = Trial { source: src.joint().as_pmf(), nx: src.observations(), pi: pi_table(src, spec)?, ch, spec };

    let excess_count: u64 = match mode {
        SimMode::FixedCodebook => {
            let cb = ensemble.draw(master_seed, 1)?;
            let batches = n_trials.div_ceil(BATCH);
            (0..batches)
                .into_par_iter()
                .map(|b| trial.count(&cb, master_seed, b * BATCH..((b + 1) * BATCH).min(n_trials)))
                .sum()
        }
        SimMode::Ensemble { trials_per_codebook } => {
            if trials_per_codebook == 0 {
                return Err(Error::BadArgs("trials_per_codebook must be at least 1".into()));
            }
            let books = n_trials.div_ceil(trials_per_codebook);
            (0..books)
                .into_par_iter()
                .map(|c| {
                    let cb = ensemble.draw(master_seed, 2 * c + 1)?;
                    let end = ((c + 1) * trials_per_codebook).min(n_trials);
                    Ok(trial.count(&cb, master_seed, c * trials_per_codebook..end))
                })
                .collect::<Result<Vec<u64>>>()?
                .into_iter()
                .sum()
        }
    };
    let estimate = T::lit(excess_count as f64 / n_trials as f64);
    Ok(SimResult {
        trials: n_trials,
        excess_count,
        estimate,
        wilson_95: wilson_interval(excess_count, n_trials, T::lit(0.95))?,
        mode,
        master_seed,
    })
}

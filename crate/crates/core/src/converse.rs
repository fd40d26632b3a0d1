//! Converse bound on the excess-distortion probability:
//! `ε ≥ inf_enc sup_γ { sup_ref P[ȷ(S,X) - ı(Y;Z) ≥ γ] - exp(-γ) }`,
//! maximized over a family of monotone relaxations.
//!
//! The inner supremum over `γ` is exact. The supremum over reference
//! outputs runs over a candidate list and the infimum over encoders is a
//! search, so the reported value can sit above the true infimum. When a
//! linear program over the fixed references certifies the search to within
//! `1e-4` the result is marked exact; the certified lower bound is reported
//! either way when available.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolutionStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distortion::{DistortionSpec, RelaxationFunction};
use crate::error::{Error, Result};
use crate::prob::{compose, Kernel, Pmf, SourceModel};
use crate::rd::{solve_rd_relaxed, RdOptions, RelaxedSolution};
use crate::scalar::Scalar;

/// Which tilted information enters the objective.
#[derive(Debug, Clone, PartialEq)]
pub enum TiltedVariant<T = f64> {
    /// `ȷ(s, x)` at the relaxed threshold; needs no decoder.
    FixedLevel,
    /// `ȷ(s, x) + λ (d̃ - D̃)` with reproductions drawn from `decoder(·|z)`,
    /// a kernel from channel outputs to flattened `(ŝ, x̂)`.
    Generalized { decoder: Kernel<T> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderSearch {
    /// Every map from observations to channel inputs.
    ExhaustiveDeterministic,
    /// Every encoder whose rows lie on the simplex grid of this resolution.
    SimplexGrid { resolution: usize },
    /// Pairwise mass-transfer descent from the uniform encoder plus random
    /// restarts.
    CoordinateDescent { restarts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exactness {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone)]
pub struct ConverseConfig<T = f64> {
    pub relaxations: Vec<RelaxationFunction<T>>,
    pub variant: TiltedVariant<T>,
    pub search: EncoderSearch,
    /// Extra reference outputs besides the induced, uniform and
    /// capacity-achieving ones.
    pub reference_outputs: Vec<Pmf<T>>,
    /// Include the uniform and capacity-achieving outputs.
    pub default_references: bool,
    /// Extra encoders evaluated alongside the search.
    pub extra_encoders: Vec<Kernel<T>>,
    /// Run the linear-programming certificate when small enough.
    pub certify: bool,
    /// Finish with a descent from the best candidate unless certified.
    pub polish: bool,
    /// Seed for coordinate-descent restarts.
    pub seed: u64,
    pub rd: RdOptions<T>,
}

impl<T: Scalar> ConverseConfig<T> {
    pub fn new(relaxations: Vec<RelaxationFunction<T>>) -> Self {
        Self {
            relaxations,
            variant: TiltedVariant::FixedLevel,
            search: EncoderSearch::ExhaustiveDeterministic,
            reference_outputs: Vec::new(),
            default_references: true,
            extra_encoders: Vec::new(),
            certify: true,
            polish: true,
            seed: 0,
            rd: RdOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.relaxations.is_empty() {
            return Err(Error::BadArgs("converse needs at least one relaxation".into()));
        }
        match self.search {
            EncoderSearch::SimplexGrid { resolution } if resolution < 2 => {
                Err(Error::BadArgs("simplex grid resolution must be at least 2".into()))
            }
            EncoderSearch::CoordinateDescent { restarts } if restarts < 1 => {
                Err(Error::BadArgs("coordinate descent needs at least one restart".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundResult<T = f64> {
    pub value: T,
    pub gamma_star: T,
    pub encoder_witness: Kernel<T>,
    pub reference_witness: Pmf<T>,
    pub relaxation_witness: RelaxationFunction<T>,
    pub exactness: Exactness,
    /// Lower bound on the true infimum, when the certificate ran.
    pub certified_lower_bound: Option<T>,
    /// Value per relaxation, in configuration order.
    pub per_relaxation: Vec<T>,
}

/// Largest encoder family enumerated explicitly.
pub const MAX_ENUMERATED: usize = 1_000_000;
/// Largest number of certificate constraints attempted.
pub const MAX_CERTIFICATE_ROWS: usize = 20_000;
const CERTIFIED_GAP: f64 = 1e-4;

fn check_source_channel<T: Scalar>(src: &SourceModel<T>, ch: &Kernel<T>, enc: &Kernel<T>) -> Result<()> {
    if enc.inputs() != src.observations() {
        return Err(Error::DimMismatch { expected: src.observations(), got: enc.inputs() });
    }
    if enc.outputs() != ch.inputs() {
        return Err(Error::DimMismatch { expected: ch.inputs(), got: enc.outputs() });
    }
    Ok(())
}

fn check_variant<T: Scalar>(variant: &TiltedVariant<T>, ch: &Kernel<T>, tilted: &RelaxedSolution<T>) -> Result<()> {
    if let TiltedVariant::Generalized { decoder } = variant {
        if decoder.inputs() != ch.outputs() {
            return Err(Error::DimMismatch { expected: ch.outputs(), got: decoder.inputs() });
        }
        if decoder.outputs() != tilted.distortion.cols() {
            return Err(Error::DimMismatch { expected: tilted.distortion.cols(), got: decoder.outputs() });
        }
    }
    Ok(())
}

/// Atoms `(ȷ - ı, mass)` of one `(s, x, y)` cell, pushed through the channel
/// and, for the generalized variant, the decoder.
#[allow(clippy::too_many_arguments)]
fn push_cell<T: Scalar>(
    out: &mut Vec<(T, T)>,
    ch: &Kernel<T>,
    tilted: &RelaxedSolution<T>,
    variant: &TiltedVariant<T>,
    reference: &Pmf<T>,
    s: usize,
    x: usize,
    y: usize,
    mass: T,
) -> Result<()> {
    let j = tilted.tilted_information(s, x);
    for z in 0..ch.outputs() {
        let w = ch.prob(y, z);
        if w <= T::zero() {
            continue;
        }
        let r = reference.get(z);
        if r <= T::zero() {
            return Err(Error::AbsoluteContinuityViolation { z });
        }
        let density = (w / r).ln();
        match variant {
            TiltedVariant::FixedLevel => out.push((j - density, mass * w)),
            TiltedVariant::Generalized { decoder } => {
                for rep in 0..decoder.outputs() {
                    let pd = decoder.prob(z, rep);
                    if pd > T::zero() {
                        out.push((tilted.generalized_tilted_flat(s, x, rep) - density, mass * w * pd));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Full atom list of `A = ȷ - ı(Y; Z)` under
/// `P_S P_{X|S} enc P_{Z|Y}` (and the decoder for the generalized variant),
/// with `ı` measured against `reference`.
pub fn objective_fixed<T: Scalar>(
    src: &SourceModel<T>,
    ch: &Kernel<T>,
    tilted: &RelaxedSolution<T>,
    enc: &Kernel<T>,
    reference: &Pmf<T>,
    variant: &TiltedVariant<T>,
) -> Result<Vec<(T, T)>> {
    check_source_channel(src, ch, enc)?;
    if reference.len() != ch.outputs() {
        return Err(Error::DimMismatch { expected: ch.outputs(), got: reference.len() });
    }
    check_variant(variant, ch, tilted)?;
    let mut out = Vec::new();
    for s in 0..src.states() {
        for x in 0..src.observations() {
            let p = src.prob(s, x);
            if p <= T::zero() {
                continue;
            }
            for y in 0..enc.outputs() {
                let e = enc.prob(x, y);
                if e > T::zero() {
                    push_cell(&mut out, ch, tilted, variant, reference, s, x, y, p * e)?;
                }
            }
        }
    }
    Ok(out)
}

/// Exact `sup_{γ ≥ 0} P[A ≥ γ] - exp(-γ)` over a finite atom list, clamped
/// at zero. Returns `(γ*, value)`; ties go to the smaller `γ`.
pub fn maximize_gamma<T: Scalar>(atoms: &[(T, T)]) -> Result<(T, T)> {
    if atoms.is_empty() {
        return Err(Error::EmptyAtoms);
    }
    let mut sorted: Vec<(T, T)> = atoms.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("atom values are not NaN"));
    let nonnegative: T = sorted.iter().filter(|(a, _)| *a >= T::zero()).map(|(_, m)| *m).sum();
    let mut best = (T::zero(), nonnegative - T::one());
    let mut tail = T::zero();
    let mut k = 0;
    while k < sorted.len() && sorted[k].0 >= T::zero() {
        let a = sorted[k].0;
        while k < sorted.len() && sorted[k].0 == a {
            tail = tail + sorted[k].1;
            k += 1;
        }
        let v = tail - (-a).exp();
        if v > best.1 || (v == best.1 && a < best.0) {
            best = (a, v);
        }
    }
    Ok((best.0, best.1.max(T::zero()).min(T::one())))
}

/// Output distribution of a capacity-achieving input, by a short
/// Blahut-Arimoto iteration from the uniform input.
pub fn capacity_output<T: Scalar>(ch: &Kernel<T>, iterations: usize) -> Pmf<T> {
    let n = ch.inputs();
    let mut p = vec![T::one() / T::lit(n as f64); n];
    for _ in 0..iterations {
        let q = compose(&Pmf::from_trusted(p.clone()), ch).expect("input matches channel");
        let mut next: Vec<T> = (0..n)
            .map(|y| {
                let d: T = (0..ch.outputs())
                    .filter(|&z| ch.prob(y, z) > T::zero())
                    .map(|z| ch.prob(y, z) * (ch.prob(y, z) / q.get(z)).ln())
                    .sum();
                p[y] * d.exp()
            })
            .collect();
        let total: T = next.iter().copied().sum();
        for v in &mut next {
            *v = *v / total;
        }
        p = next;
    }
    compose(&Pmf::from_trusted(p), ch).expect("input matches channel")
}

/// Inner value of one encoder: sup over `γ` and over the candidate
/// references plus the encoder-induced output.
#[derive(Debug, Clone)]
pub struct InnerValue<T> {
    pub value: T,
    pub gamma: T,
    pub reference: Pmf<T>,
}

/// Evaluates `sup_γ sup_ref` for a fixed encoder. References that violate
/// absolute continuity for this encoder are skipped; the induced output is
/// always tried first.
pub fn inner_value<T: Scalar>(
    src: &SourceModel<T>,
    ch: &Kernel<T>,
    tilted: &RelaxedSolution<T>,
    enc: &Kernel<T>,
    references: &[Pmf<T>],
    variant: &TiltedVariant<T>,
) -> Result<InnerValue<T>> {
    check_source_channel(src, ch, enc)?;
    let induced = compose(&compose(src.p_x(), enc)?, ch)?;
    let mut best: Option<InnerValue<T>> = None;
    for r in std::iter::once(&induced).chain(references) {
        let atoms = match objective_fixed(src, ch, tilted, enc, r, variant) {
            Ok(a) => a,
            Err(Error::AbsoluteContinuityViolation { .. }) => continue,
            Err(e) => return Err(e),
        };
        let (gamma, value) = maximize_gamma(&atoms)?;
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(InnerValue { value, gamma, reference: r.clone() });
        }
    }
    Ok(best.expect("the induced output is always admissible"))
}

/// Mixed-radix enumeration of deterministic maps on the observations with
/// positive mass; observations without mass map to input zero.
fn deterministic_encoder<T: Scalar>(support: &[usize], nx: usize, ny: usize, mut index: usize) -> Kernel<T> {
    let mut choice = vec![0usize; nx];
    for &x in support {
        choice[x] = index % ny;
        index /= ny;
    }
    Kernel::from_pmfs(choice.into_iter().map(|y| Pmf::point(ny, y)).collect()).expect("rows share the input alphabet")
}

fn checked_power(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

/// Compositions of `resolution` into `parts` nonnegative integers, in
/// lexicographic order.
pub fn simplex_grid(parts: usize, resolution: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(parts - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(parts, resolution, &mut Vec::new(), &mut out);
    }
    out
}

struct Search<'a, T> {
    src: &'a SourceModel<T>,
    ch: &'a Kernel<T>,
    tilted: &'a RelaxedSolution<T>,
    refs: &'a [Pmf<T>],
    variant: &'a TiltedVariant<T>,
    support: Vec<usize>,
}

impl<T: Scalar> Search<'_, T> {
    fn eval(&self, enc: &Kernel<T>) -> Result<InnerValue<T>> {
        inner_value(self.src, self.ch, self.tilted, enc, self.refs, self.variant)
    }

    fn nx(&self) -> usize {
        self.src.observations()
    }

    fn ny(&self) -> usize {
        self.ch.inputs()
    }

    /// Evaluates candidates in parallel; the minimum wins with ties broken
    /// by candidate order.
    fn best_of(&self, count: usize, make: impl Fn(usize) -> Kernel<T> + Sync) -> Result<Option<(Kernel<T>, InnerValue<T>)>> {
        let values: Vec<T> =
            (0..count).into_par_iter().map(|i| self.eval(&make(i)).map(|v| v.value)).collect::<Result<_>>()?;
        let mut best: Option<usize> = None;
        for (i, v) in values.iter().enumerate() {
            if best.is_none_or(|b| *v < values[b]) {
                best = Some(i);
            }
        }
        match best {
            Some(i) => {
                let enc = make(i);
                let v = self.eval(&enc)?;
                Ok(Some((enc, v)))
            }
            None => Ok(None),
        }
    }

    fn exhaustive(&self) -> Result<(Kernel<T>, InnerValue<T>)> {
        let (nx, ny) = (self.nx(), self.ny());
        let count = checked_power(ny, self.support.len())
            .filter(|&c| c <= MAX_ENUMERATED)
            .ok_or_else(|| Error::TooLarge(format!("{ny}^{} deterministic encoders", self.support.len())))?;
        Ok(self.best_of(count, |i| deterministic_encoder(&self.support, nx, ny, i))?.expect("at least one encoder"))
    }

    fn grid(&self, resolution: usize) -> Result<(Kernel<T>, InnerValue<T>)> {
        let (nx, ny) = (self.nx(), self.ny());
        let rows = simplex_grid(ny, resolution);
        let count = checked_power(rows.len(), self.support.len())
            .filter(|&c| c <= MAX_ENUMERATED)
            .ok_or_else(|| Error::TooLarge(format!("{}^{} grid encoders", rows.len(), self.support.len())))?;
        let scale = T::lit(resolution as f64);
        let make = |mut index: usize| {
            let mut out: Vec<Pmf<T>> = vec![Pmf::point(ny, 0); nx];
            for &x in &self.support {
                let row = &rows[index % rows.len()];
                index /= rows.len();
                out[x] = Pmf::from_trusted(row.iter().map(|&k| T::lit(k as f64) / scale).collect());
            }
            Kernel::from_pmfs(out).expect("rows share the input alphabet")
        };
        Ok(self.best_of(count, make)?.expect("at least one encoder"))
    }

    fn descend(&self, start: Kernel<T>) -> Result<(Kernel<T>, InnerValue<T>)> {
        let ny = self.ny();
        let mut rows = start.to_rows();
        let mut current = self.eval(&start)?;
        let mut step = T::lit(0.5);
        let floor = T::lit(1.0 / 1024.0);
        let improvement = T::identity_tol();
        while step >= floor {
            let mut improved = false;
            for &x in &self.support {
                for from in 0..ny {
                    for to in 0..ny {
                        if from == to || rows[x][from] <= T::zero() {
                            continue;
                        }
                        let delta = step.min(rows[x][from]);
                        let mut trial = rows.clone();
                        trial[x][from] = trial[x][from] - delta;
                        trial[x][to] = trial[x][to] + delta;
                        let enc = Kernel::from_pmfs(trial.iter().map(|r| Pmf::from_trusted(r.clone())).collect())
                            .expect("rows share the input alphabet");
                        let v = self.eval(&enc)?;
                        if v.value < current.value - improvement {
                            rows = trial;
                            current = v;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step = step / T::lit(2.0);
            }
        }
        let enc = Kernel::from_pmfs(rows.into_iter().map(Pmf::from_trusted).collect()).expect("rows share the input alphabet");
        Ok((enc, current))
    }

    fn coordinate_descent(&self, restarts: usize, seed: u64) -> Result<(Kernel<T>, InnerValue<T>)> {
        let (nx, ny) = (self.nx(), self.ny());
        let starts: Vec<Kernel<T>> = (0..restarts)
            .map(|k| {
                if k == 0 {
                    return Kernel::constant(nx, Pmf::uniform(ny));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let rows = (0..nx)
                    .map(|_| {
                        let raw: Vec<T> = (0..ny).map(|_| T::lit(rng.gen::<f64>())).collect();
                        Pmf::normalized(raw).unwrap_or_else(|_| Pmf::uniform(ny))
                    })
                    .collect();
                Kernel::from_pmfs(rows).expect("rows share the input alphabet")
            })
            .collect();
        let results: Vec<(Kernel<T>, InnerValue<T>)> =
            starts.into_par_iter().map(|s| self.descend(s)).collect::<Result<_>>()?;
        let mut best: Option<(Kernel<T>, InnerValue<T>)> = None;
        for r in results {
            if best.as_ref().is_none_or(|b| r.1.value < b.1.value) {
                best = Some(r);
            }
        }
        Ok(best.expect("at least one restart"))
    }
}

/// Certificate: minimizes `max_{ref, γ} P_ref[A ≥ γ] - exp(-γ)` over all
/// encoders for the fixed references, as a linear program in the encoder
/// rows. Returns the optimum (a lower bound on the infimum) and its encoder.
fn certify<T: Scalar>(search: &Search<'_, T>) -> Option<(f64, Kernel<T>)> {
    let (nx, ny) = (search.nx(), search.ny());
    let ch = search.ch;
    // References must cover every output any encoder could reach.
    let refs: Vec<&Pmf<T>> = search
        .refs
        .iter()
        .filter(|r| (0..ny).all(|y| (0..ch.outputs()).all(|z| ch.prob(y, z) <= T::zero() || r.get(z) > T::zero())))
        .collect();
    if refs.is_empty() || search.support.is_empty() {
        return None;
    }

    struct Piece {
        cell: usize,
        value: f64,
        mass: f64,
    }
    let mut families: Vec<(Vec<f64>, Vec<Piece>)> = Vec::new();
    let mut rows_needed = 0usize;
    for r in &refs {
        let mut pieces = Vec::new();
        for (slot, &x) in search.support.iter().enumerate() {
            for y in 0..ny {
                let mut cell = Vec::new();
                for s in 0..search.src.states() {
                    let p = search.src.prob(s, x);
                    if p > T::zero() {
                        push_cell(&mut cell, ch, search.tilted, search.variant, r, s, x, y, p).ok()?;
                    }
                }
                pieces.extend(cell.into_iter().map(|(a, m)| Piece { cell: slot * ny + y, value: a.as_f64(), mass: m.as_f64() }));
            }
        }
        let mut gammas: Vec<f64> = pieces.iter().map(|p| p.value.max(0.0)).collect();
        gammas.push(0.0);
        gammas.sort_by(|a, b| b.partial_cmp(a).expect("atom values are not NaN"));
        gammas.dedup();
        rows_needed += gammas.len();
        if rows_needed > MAX_CERTIFICATE_ROWS {
            return None;
        }
        pieces.sort_by(|a, b| b.value.partial_cmp(&a.value).expect("atom values are not NaN"));
        families.push((gammas, pieces));
    }

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let t = lp.add_var(1.0, (-1.0, 1.0));
    let cells: Vec<_> = (0..search.support.len() * ny).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    for slot in 0..search.support.len() {
        lp.add_constraint((0..ny).map(|y| (cells[slot * ny + y], 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    }
    for (gammas, pieces) in &families {
        let mut coef = vec![0.0f64; cells.len()];
        let mut k = 0;
        for &g in gammas {
            while k < pieces.len() && pieces[k].value >= g {
                coef[pieces[k].cell] += pieces[k].mass;
                k += 1;
            }
            let mut expr: Vec<_> = vec![(t, 1.0)];
            expr.extend(coef.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(i, &c)| (cells[i], -c)));
            lp.add_constraint(expr, ComparisonOp::Ge, -(-g).exp());
        }
    }
    let solution = lp.solve().ok()?.into_solution().ok()?;
    if solution.status() != SolutionStatus::Optimal {
        return None;
    }
    let mut rows: Vec<Pmf<T>> = vec![Pmf::point(ny, 0); nx];
    for (slot, &x) in search.support.iter().enumerate() {
        let raw: Vec<T> = (0..ny).map(|y| T::lit(solution[cells[slot * ny + y]].max(0.0))).collect();
        rows[x] = Pmf::normalized(raw).ok()?;
    }
    let enc = Kernel::from_pmfs(rows).ok()?;
    Some((solution.objective() - 1e-9, enc))
}

struct PerRelaxation<T> {
    enc: Kernel<T>,
    inner: InnerValue<T>,
    lower: Option<f64>,
}

fn bound_for_relaxation<T: Scalar>(
    src: &SourceModel<T>,
    ch: &Kernel<T>,
    spec: &DistortionSpec<T>,
    r: &RelaxationFunction<T>,
    cfg: &ConverseConfig<T>,
) -> Result<PerRelaxation<T>> {
    let tilted = solve_rd_relaxed(src, spec, r, &cfg.rd)?;
    check_variant(&cfg.variant, ch, &tilted)?;
    let mut refs = Vec::new();
    if cfg.default_references {
        refs.push(Pmf::uniform(ch.outputs()));
        refs.push(capacity_output(ch, 200));
    }
    for r in &cfg.reference_outputs {
        if r.len() != ch.outputs() {
            return Err(Error::DimMismatch { expected: ch.outputs(), got: r.len() });
        }
        refs.push(r.clone());
    }
    let p_x = src.p_x();
    let support: Vec<usize> = (0..src.observations()).filter(|&x| p_x.get(x) > T::zero()).collect();
    let search = Search { src, ch, tilted: &tilted, refs: &refs, variant: &cfg.variant, support };

    let (mut enc, mut inner) = match cfg.search {
        EncoderSearch::ExhaustiveDeterministic => search.exhaustive()?,
        EncoderSearch::SimplexGrid { resolution } => search.grid(resolution)?,
        EncoderSearch::CoordinateDescent { restarts } => search.coordinate_descent(restarts, cfg.seed)?,
    };
    let mut consider = |cand: Kernel<T>| -> Result<()> {
        let v = search.eval(&cand)?;
        if v.value < inner.value {
            enc = cand;
            inner = v;
        }
        Ok(())
    };
    for e in &cfg.extra_encoders {
        consider(e.clone())?;
    }
    let lower = if cfg.certify {
        match certify(&search) {
            Some((lb, lp_enc)) => {
                consider(lp_enc)?;
                Some(lb.max(0.0))
            }
            None => None,
        }
    } else {
        None
    };
    if cfg.polish && lower.is_none_or(|lb| inner.value.as_f64() - lb > CERTIFIED_GAP) {
        let (polished, v) = search.descend(enc.clone())?;
        if v.value < inner.value {
            enc = polished;
            inner = v;
        }
    }
    Ok(PerRelaxation { enc, inner, lower })
}

/// Converse bound maximized over the configured relaxations. Encoder
/// candidates are evaluated on the current rayon pool; the result does not
/// depend on scheduling.
pub fn converse_bound<T: Scalar>(
    src: &SourceModel<T>,
    ch: &Kernel<T>,
    spec: &DistortionSpec<T>,
    cfg: &ConverseConfig<T>,
) -> Result<BoundResult<T>> {
    cfg.validate()?;
    let per: Vec<PerRelaxation<T>> =
        cfg.relaxations.iter().map(|r| bound_for_relaxation(src, ch, spec, r, cfg)).collect::<Result<_>>()?;
    let mut win = 0;
    for (i, p) in per.iter().enumerate() {
        if p.inner.value > per[win].inner.value {
            win = i;
        }
    }
    let value = per[win].inner.value;
    let lower = per.iter().filter_map(|p| p.lower).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let exact = lower.is_some_and(|lb| value.as_f64() - lb <= CERTIFIED_GAP);
    Ok(BoundResult {
        value,
        gamma_star: per[win].inner.gamma,
        encoder_witness: per[win].enc.clone(),
        reference_witness: per[win].inner.reference.clone(),
        relaxation_witness: cfg.relaxations[win].clone(),
        exactness: if exact { Exactness::Exact } else { Exactness::Heuristic },
        certified_lower_bound: lower.map(|v| T::lit(v).min(value)),
        per_relaxation: per.iter().map(|p| p.inner.value).collect(),
    })
}

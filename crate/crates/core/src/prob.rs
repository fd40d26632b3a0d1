//! Finite-alphabet probability primitives.
//!
//! Everything here lives in the linear domain. Tables are small (tens of
//! symbols), and the log domain is only entered inside the information
//! measures and the rate-distortion solver.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::Empty);
        }
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimMismatch { expected: m, got: row.len() });
            }
            data.extend(row);
        }
        Ok(Self { rows: n, cols: m, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

fn check_weights<T: Scalar>(weights: &[T]) -> Result<T> {
    if weights.is_empty() {
        return Err(Error::Empty);
    }
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if w < T::zero() {
            return Err(Error::NegativeWeight { index, value: w.as_f64() });
        }
    }
    let sum: T = weights.iter().copied().sum();
    if (sum - T::one()).abs() > T::validation_tol() {
        return Err(Error::NotNormalized { sum: sum.as_f64() });
    }
    Ok(sum)
}

/// Probability mass function over `{0, .., len-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf<T = f64> {
    weights: Vec<T>,
}

impl<T: Scalar> Pmf<T> {
    /// Validates `weights` and wraps them unchanged.
    pub fn new(weights: Vec<T>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(Self { weights })
    }

    /// Wraps weights produced by an internal computation that already
    /// guarantees normalization (ratios, products of pmfs).
    pub(crate) fn from_trusted(weights: Vec<T>) -> Self {
        debug_assert!(!weights.is_empty());
        Self { weights }
    }

    /// Normalizes a nonnegative vector with positive mass.
    pub fn normalized(mut weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if w < T::zero() {
                return Err(Error::NegativeWeight { index, value: w.as_f64() });
            }
        }
        let sum: T = weights.iter().copied().sum();
        if sum <= T::zero() {
            return Err(Error::NotNormalized { sum: sum.as_f64() });
        }
        for w in &mut weights {
            *w = *w / sum;
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform pmf needs a nonempty alphabet");
        Self { weights: vec![T::one() / T::lit(n as f64); n] }
    }

    pub fn point(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass index out of range");
        let mut weights = vec![T::zero(); n];
        weights[at] = T::one();
        Self { weights }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<T> {
        self.weights
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().enumerate().filter(|(_, w)| **w > T::zero()).map(|(i, _)| i)
    }

    pub fn entropy(&self) -> T {
        self.weights
            .iter()
            .filter(|&&w| w > T::zero())
            .map(|&w| -w * w.ln())
            .sum()
    }

    /// Draws one symbol by inverting the cumulative weights.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::lit(rng.gen::<f64>());
        let mut acc = T::zero();
        let mut last_positive = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > T::zero() {
                last_positive = i;
            }
            acc = acc + w;
            if u < acc {
                return i;
            }
        }
        // Rounding left the total just under u.
        last_positive
    }
}

/// Validates raw weights as a probability vector.
pub fn validate_pmf<T: Scalar>(raw: Vec<T>) -> Result<Pmf<T>> {
    Pmf::new(raw)
}

/// Joint pmf over a two-dimensional product alphabet.
///
/// Axis 0 indexes rows, axis 1 indexes columns.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf<T = f64> {
    table: Matrix<T>,
}

impl<T: Scalar> JointPmf<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let table = Matrix::from_rows(rows)?;
        check_weights(table.as_slice())?;
        Ok(Self { table })
    }

    /// Builds the joint from a flat row-major vector.
    pub fn from_flat(rows: usize, cols: usize, flat: Vec<T>) -> Result<Self> {
        if flat.len() != rows * cols {
            return Err(Error::DimMismatch { expected: rows * cols, got: flat.len() });
        }
        check_weights(&flat)?;
        Ok(Self { table: Matrix { rows, cols, data: flat } })
    }

    pub(crate) fn from_flat_trusted(rows: usize, cols: usize, flat: Vec<T>) -> Self {
        debug_assert_eq!(flat.len(), rows * cols);
        Self { table: Matrix { rows, cols, data: flat } }
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        let w = T::one() / T::lit((rows * cols) as f64);
        Self::from_flat_trusted(rows, cols, vec![w; rows * cols])
    }

    /// Independent joint `p(a) q(b)`.
    pub fn product(p: &Pmf<T>, q: &Pmf<T>) -> Self {
        let table = Matrix::from_fn(p.len(), q.len(), |a, b| p.get(a) * q.get(b));
        Self { table }
    }

    /// Joint `p(a) k(b|a)` with rows indexed by `a`.
    pub fn from_marginal_kernel(p: &Pmf<T>, k: &Kernel<T>) -> Result<Self> {
        if p.len() != k.inputs() {
            return Err(Error::DimMismatch { expected: k.inputs(), got: p.len() });
        }
        let table = Matrix::from_fn(p.len(), k.outputs(), |a, b| p.get(a) * k.prob(a, b));
        Ok(Self { table })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.table.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.table.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.table.get(a, b)
    }

    pub fn table(&self) -> &Matrix<T> {
        &self.table
    }

    /// Flattened view, row-major: index `a * cols + b`.
    pub fn flat(&self) -> &[T] {
        self.table.as_slice()
    }

    pub fn as_pmf(&self) -> Pmf<T> {
        Pmf::from_trusted(self.table.data.clone())
    }

    pub fn marginal(&self, axis: usize) -> Result<Pmf<T>> {
        match axis {
            0 => Ok(Pmf::from_trusted(
                (0..self.rows()).map(|a| self.table.row(a).iter().copied().sum()).collect(),
            )),
            1 => Ok(Pmf::from_trusted(
                (0..self.cols()).map(|b| (0..self.rows()).map(|a| self.get(a, b)).sum()).collect(),
            )),
            other => Err(Error::BadAxis(other)),
        }
    }

    /// Conditional of the other axis given `given_axis`.
    ///
    /// Rows for conditioning symbols with zero marginal are left undefined.
    pub fn condition(&self, given_axis: usize) -> Result<Conditional<T>> {
        let marg = self.marginal(given_axis)?;
        let rows = (0..marg.len())
            .map(|b| {
                let m = marg.get(b);
                if m <= T::zero() {
                    return None;
                }
                let row: Vec<T> = match given_axis {
                    0 => self.table.row(b).iter().map(|&v| v / m).collect(),
                    _ => (0..self.rows()).map(|a| self.get(a, b) / m).collect(),
                };
                Some(Pmf::from_trusted(row))
            })
            .collect();
        Ok(Conditional { rows })
    }

    /// Swaps the two axes.
    pub fn transpose(&self) -> Self {
        Self { table: Matrix::from_fn(self.cols(), self.rows(), |a, b| self.get(b, a)) }
    }
}

/// Conditional distribution whose rows may be undefined where the
/// conditioning symbol has zero mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional<T = f64> {
    pub(crate) rows: Vec<Option<Pmf<T>>>,
}

impl<T: Scalar> Conditional<T> {
    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn is_defined(&self, b: usize) -> bool {
        self.rows.get(b).is_some_and(Option::is_some)
    }

    pub fn row(&self, b: usize) -> Result<&Pmf<T>> {
        match self.rows.get(b) {
            None => Err(Error::IndexOutOfRange { index: b, size: self.rows.len() }),
            Some(None) => Err(Error::ZeroMarginalRow(b)),
            Some(Some(p)) => Ok(p),
        }
    }

    /// Probability `k(a|b)`, zero for undefined rows.
    pub fn prob_or_zero(&self, b: usize, a: usize) -> T {
        self.rows[b].as_ref().map_or(T::zero(), |p| p.get(a))
    }

    /// Converts into a full kernel, failing on the first undefined row.
    pub fn into_kernel(self) -> Result<Kernel<T>> {
        let mut out = Vec::with_capacity(self.rows.len());
        for (b, row) in self.rows.into_iter().enumerate() {
            out.push(row.ok_or(Error::ZeroMarginalRow(b))?);
        }
        Kernel::from_pmfs(out)
    }
}

/// Stochastic matrix: one pmf per input symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T = f64> {
    rows: Vec<Pmf<T>>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let rows = rows.into_iter().map(Pmf::new).collect::<Result<Vec<_>>>()?;
        Self::from_pmfs(rows)
    }

    pub fn from_pmfs(rows: Vec<Pmf<T>>) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty)?.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != first) {
            return Err(Error::DimMismatch { expected: first, got: bad.len() });
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: (0..n).map(|i| Pmf::point(n, i)).collect() }
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: T) -> Result<Self> {
        Self::new(vec![vec![T::one() - p, p], vec![p, T::one() - p]])
    }

    /// Every input produces the same output law.
    pub fn constant(inputs: usize, out: Pmf<T>) -> Self {
        Self { rows: vec![out; inputs] }
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    #[inline]
    pub fn prob(&self, input: usize, output: usize) -> T {
        self.rows[input].get(output)
    }

    pub fn row(&self, input: usize) -> &Pmf<T> {
        &self.rows[input]
    }

    pub fn rows(&self) -> &[Pmf<T>] {
        &self.rows
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows.iter().map(|r| r.weights().to_vec()).collect()
    }

    /// Output law `Σ_y p(y) k(·|y)`.
    pub fn compose(&self, p: &Pmf<T>) -> Result<Pmf<T>> {
        compose(p, self)
    }
}

/// Pushes `p` through `k`.
pub fn compose<T: Scalar>(p: &Pmf<T>, k: &Kernel<T>) -> Result<Pmf<T>> {
    if p.len() != k.inputs() {
        return Err(Error::DimMismatch { expected: k.inputs(), got: p.len() });
    }
    let mut out = vec![T::zero(); k.outputs()];
    for (y, &py) in p.weights().iter().enumerate() {
        if py <= T::zero() {
            continue;
        }
        for (z, o) in out.iter_mut().enumerate() {
            *o = *o + py * k.prob(y, z);
        }
    }
    Ok(Pmf::from_trusted(out))
}

/// Joint law `P_{SX}` of the hierarchical source. Rows index the hidden
/// state `S`, columns the observation `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel<T = f64> {
    joint: JointPmf<T>,
    p_s: Pmf<T>,
    p_x: Pmf<T>,
}

impl<T: Scalar> SourceModel<T> {
    pub fn from_joint(joint: JointPmf<T>) -> Self {
        let p_s = joint.marginal(0).expect("axis 0");
        let p_x = joint.marginal(1).expect("axis 1");
        Self { joint, p_s, p_x }
    }

    /// Builds `P_{SX}` from `P_S` and the observation kernel `P_{X|S}`.
    pub fn from_parts(p_s: &Pmf<T>, p_x_given_s: &Kernel<T>) -> Result<Self> {
        Ok(Self::from_joint(JointPmf::from_marginal_kernel(p_s, p_x_given_s)?))
    }

    pub fn joint(&self) -> &JointPmf<T> {
        &self.joint
    }

    pub fn states(&self) -> usize {
        self.joint.rows()
    }

    pub fn observations(&self) -> usize {
        self.joint.cols()
    }

    #[inline]
    pub fn prob(&self, s: usize, x: usize) -> T {
        self.joint.get(s, x)
    }

    pub fn p_s(&self) -> &Pmf<T> {
        &self.p_s
    }

    pub fn p_x(&self) -> &Pmf<T> {
        &self.p_x
    }

    /// `P_{S|X}`, rows indexed by `x`.
    pub fn s_given_x(&self) -> Conditional<T> {
        self.joint.condition(1).expect("axis 1")
    }

    /// `P_{X|S}`, rows indexed by `s`.
    pub fn x_given_s(&self) -> Conditional<T> {
        self.joint.condition(0).expect("axis 0")
    }

    pub fn entropy(&self) -> T {
        self.joint.as_pmf().entropy()
    }
}

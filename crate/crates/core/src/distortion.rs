//! Distortion measures, the joint excess-distortion event and the
//! scalarizations that turn it into a single-distortion event.
//!
//! The excess event uses strict inequalities (`d > D`) and distortion balls
//! use the non-strict complement (`d <= D`). Relaxation soundness relies on
//! the two agreeing at the boundary.

use crate::error::{Error, Result};
use crate::prob::{Matrix, Pmf};
use crate::scalar::Scalar;

/// Distortion matrices for the state and the observation together with the
/// two thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSpec<T = f64> {
    d_s: Matrix<T>,
    d_x: Matrix<T>,
    threshold_s: T,
    threshold_x: T,
}

fn check_matrix<T: Scalar>(m: &Matrix<T>) -> Result<()> {
    for (index, &v) in m.as_slice().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if v < T::zero() {
            return Err(Error::NegativeWeight { index, value: v.as_f64() });
        }
    }
    Ok(())
}

fn check_threshold<T: Scalar>(t: T) -> Result<()> {
    if t.is_nan() || t < T::zero() {
        return Err(Error::BadArgs(format!("threshold {t} must be nonnegative")));
    }
    Ok(())
}

impl<T: Scalar> DistortionSpec<T> {
    pub fn new(d_s: Matrix<T>, d_x: Matrix<T>, threshold_s: T, threshold_x: T) -> Result<Self> {
        check_matrix(&d_s)?;
        check_matrix(&d_x)?;
        check_threshold(threshold_s)?;
        check_threshold(threshold_x)?;
        Ok(Self { d_s, d_x, threshold_s, threshold_x })
    }

    /// Hamming distortion on both components with square reproduction
    /// alphabets.
    pub fn hamming(states: usize, observations: usize, threshold_s: T, threshold_x: T) -> Result<Self> {
        Self::new(hamming(states, states), hamming(observations, observations), threshold_s, threshold_x)
    }

    /// Same matrices, new thresholds.
    pub fn with_thresholds(&self, threshold_s: T, threshold_x: T) -> Result<Self> {
        Self::new(self.d_s.clone(), self.d_x.clone(), threshold_s, threshold_x)
    }

    pub fn d_s(&self) -> &Matrix<T> {
        &self.d_s
    }

    pub fn d_x(&self) -> &Matrix<T> {
        &self.d_x
    }

    #[inline]
    pub fn state_distortion(&self, s: usize, s_hat: usize) -> T {
        self.d_s.get(s, s_hat)
    }

    #[inline]
    pub fn observation_distortion(&self, x: usize, x_hat: usize) -> T {
        self.d_x.get(x, x_hat)
    }

    pub fn threshold_s(&self) -> T {
        self.threshold_s
    }

    pub fn threshold_x(&self) -> T {
        self.threshold_x
    }

    pub fn states(&self) -> usize {
        self.d_s.rows()
    }

    pub fn state_reproductions(&self) -> usize {
        self.d_s.cols()
    }

    pub fn observations(&self) -> usize {
        self.d_x.rows()
    }

    pub fn observation_reproductions(&self) -> usize {
        self.d_x.cols()
    }

    fn check_indices(&self, s: usize, x: usize, s_hat: usize, x_hat: usize) -> Result<()> {
        for (index, size) in [
            (s, self.states()),
            (x, self.observations()),
            (s_hat, self.state_reproductions()),
            (x_hat, self.observation_reproductions()),
        ] {
            if index >= size {
                return Err(Error::IndexOutOfRange { index, size });
            }
        }
        Ok(())
    }

    /// Membership in the joint excess-distortion event.
    pub fn excess_indicator(&self, s: usize, x: usize, s_hat: usize, x_hat: usize) -> Result<bool> {
        self.check_indices(s, x, s_hat, x_hat)?;
        Ok(self.is_excess(s, x, s_hat, x_hat))
    }

    /// Unchecked variant of [`Self::excess_indicator`] for inner loops.
    #[inline]
    pub fn is_excess(&self, s: usize, x: usize, s_hat: usize, x_hat: usize) -> bool {
        self.d_s.get(s, s_hat) > self.threshold_s || self.d_x.get(x, x_hat) > self.threshold_x
    }

    #[inline]
    pub fn in_ball(&self, x: usize, x_hat: usize) -> bool {
        self.d_x.get(x, x_hat) <= self.threshold_x
    }

    /// `P_{X̂}` mass of the observation ball `{x̂ : d_x(x, x̂) <= D_x}`.
    pub fn ball_probability(&self, p_xhat: &Pmf<T>, x: usize) -> Result<T> {
        if x >= self.observations() {
            return Err(Error::IndexOutOfRange { index: x, size: self.observations() });
        }
        if p_xhat.len() != self.observation_reproductions() {
            return Err(Error::DimMismatch { expected: self.observation_reproductions(), got: p_xhat.len() });
        }
        let mass: T = (0..p_xhat.len()).filter(|&xh| self.in_ball(x, xh)).map(|xh| p_xhat.get(xh)).sum();
        Ok(mass.min(T::one()))
    }

    /// Largest state and observation distortion values.
    pub fn max_distortions(&self) -> (T, T) {
        (self.d_s.max(), self.d_x.max())
    }
}

/// Hamming matrix `d(i, j) = 1{i != j}` of the given shape.
pub fn hamming<T: Scalar>(rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |i, j| if i == j { T::zero() } else { T::one() })
}

/// Relaxed distortion value; `Infinite` arises for a zero threshold paired
/// with a positive distortion under the normalized-max scalarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelaxedValue<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> RelaxedValue<T> {
    pub fn finite(self) -> Result<T> {
        match self {
            RelaxedValue::Finite(v) => Ok(v),
            RelaxedValue::Infinite => Err(Error::DegenerateThreshold),
        }
    }

    /// Maps `Infinite` to the scalar's infinity.
    pub fn to_scalar(self) -> T {
        match self {
            RelaxedValue::Finite(v) => v,
            RelaxedValue::Infinite => T::infinity(),
        }
    }

    pub fn exceeds(self, threshold: T) -> bool {
        match self {
            RelaxedValue::Finite(v) => v > threshold,
            RelaxedValue::Infinite => true,
        }
    }
}

/// Monotone lookup table over a grid of `(d_s, d_x)` levels.
///
/// Evaluation at an arbitrary point uses the largest level not exceeding
/// each coordinate, clamped to the first level, which keeps the extension
/// monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationTable<T = f64> {
    s_levels: Vec<T>,
    x_levels: Vec<T>,
    values: Matrix<T>,
}

impl<T: Scalar> RelaxationTable<T> {
    pub fn new(s_levels: Vec<T>, x_levels: Vec<T>, values: Matrix<T>) -> Result<Self> {
        for levels in [&s_levels, &x_levels] {
            if levels.is_empty() {
                return Err(Error::Empty);
            }
            if levels.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::BadArgs("relaxation levels must be strictly increasing".into()));
            }
        }
        if values.rows() != s_levels.len() {
            return Err(Error::DimMismatch { expected: s_levels.len(), got: values.rows() });
        }
        if values.cols() != x_levels.len() {
            return Err(Error::DimMismatch { expected: x_levels.len(), got: values.cols() });
        }
        if let Some(index) = values.as_slice().iter().position(|v| v.is_nan()) {
            return Err(Error::NonFinite { index });
        }
        // Exhaustive pairwise check over the dominance order.
        let (n, m) = (s_levels.len(), x_levels.len());
        for i in 0..n {
            for j in 0..m {
                for i2 in i..n {
                    for j2 in j..m {
                        if values.get(i2, j2) < values.get(i, j) {
                            return Err(Error::NonMonotoneRelaxation { from: (i, j), to: (i2, j2) });
                        }
                    }
                }
            }
        }
        Ok(Self { s_levels, x_levels, values })
    }

    /// Tabulates `f` over every distortion value the spec can produce plus
    /// its thresholds.
    pub fn tabulate(spec: &DistortionSpec<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let levels = |m: &Matrix<T>, t: T| {
            let mut v: Vec<T> = m.as_slice().to_vec();
            v.push(t);
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite distortions"));
            v.dedup();
            v
        };
        let s_levels = levels(spec.d_s(), spec.threshold_s());
        let x_levels = levels(spec.d_x(), spec.threshold_x());
        let values = Matrix::from_fn(s_levels.len(), x_levels.len(), |i, j| f(s_levels[i], x_levels[j]));
        Self::new(s_levels, x_levels, values)
    }

    fn floor_index(levels: &[T], v: T) -> usize {
        levels.iter().rposition(|&l| l <= v).unwrap_or(0)
    }

    pub fn eval(&self, d_s: T, d_x: T) -> T {
        self.values.get(Self::floor_index(&self.s_levels, d_s), Self::floor_index(&self.x_levels, d_x))
    }
}

/// Monotone scalarization `d(d_s, d_x)` of the two distortions.
#[derive(Debug, Clone, PartialEq)]
pub enum RelaxationFunction<T = f64> {
    /// `a d_s + b d_x`.
    Linear { a: T, b: T },
    /// `max(d_s / D_s, d_x / D_x)`; the relaxed event coincides with the
    /// excess event when both thresholds are positive.
    MaxNormalized,
    Table(RelaxationTable<T>),
}

impl<T: Scalar> RelaxationFunction<T> {
    pub fn linear(a: T, b: T) -> Result<Self> {
        if !(a >= T::zero() && b >= T::zero()) || !a.is_finite() || !b.is_finite() {
            return Err(Error::BadArgs("linear relaxation needs finite a, b >= 0".into()));
        }
        if a == T::zero() && b == T::zero() {
            return Err(Error::BadArgs("linear relaxation needs a or b positive".into()));
        }
        Ok(Self::Linear { a, b })
    }

    pub fn label(&self) -> String {
        match self {
            Self::Linear { a, b } => format!("linear({a};{b})"),
            Self::MaxNormalized => "max_normalized".to_string(),
            Self::Table(_) => "table".to_string(),
        }
    }

    fn apply(&self, spec: &DistortionSpec<T>, ds: T, dx: T) -> RelaxedValue<T> {
        match self {
            Self::Linear { a, b } => RelaxedValue::Finite(*a * ds + *b * dx),
            Self::MaxNormalized => {
                let part = |d: T, t: T| {
                    if t > T::zero() {
                        Some(d / t)
                    } else if d > T::zero() {
                        None
                    } else {
                        Some(T::zero())
                    }
                };
                match (part(ds, spec.threshold_s()), part(dx, spec.threshold_x())) {
                    (Some(u), Some(v)) => RelaxedValue::Finite(u.max(v)),
                    _ => RelaxedValue::Infinite,
                }
            }
            Self::Table(t) => RelaxedValue::Finite(t.eval(ds, dx)),
        }
    }

    /// `d(d_s(s, ŝ), d_x(x, x̂))`.
    pub fn relaxed_distortion(
        &self,
        spec: &DistortionSpec<T>,
        s: usize,
        x: usize,
        s_hat: usize,
        x_hat: usize,
    ) -> Result<RelaxedValue<T>> {
        spec.check_indices(s, x, s_hat, x_hat)?;
        Ok(self.apply(spec, spec.state_distortion(s, s_hat), spec.observation_distortion(x, x_hat)))
    }

    /// Relaxed threshold `d(D_s, D_x)`; identically one for the
    /// normalized-max scalarization.
    pub fn relaxed_threshold(&self, spec: &DistortionSpec<T>) -> T {
        match self {
            Self::MaxNormalized => T::one(),
            _ => self.apply(spec, spec.threshold_s(), spec.threshold_x()).to_scalar(),
        }
    }

    /// Relaxed distortion between source pair `(s, x)` and reproduction pair
    /// `(ŝ, x̂)` as a matrix over flattened indices `s * |X| + x` and
    /// `ŝ * |X̂| + x̂`; infinite entries are stored as the scalar infinity.
    pub fn relaxed_matrix(&self, spec: &DistortionSpec<T>) -> Matrix<T> {
        let (nx, nxh) = (spec.observations(), spec.observation_reproductions());
        Matrix::from_fn(spec.states() * nx, spec.state_reproductions() * nxh, |src, rep| {
            let (s, x) = (src / nx, src % nx);
            let (sh, xh) = (rep / nxh, rep % nxh);
            self.apply(spec, spec.state_distortion(s, sh), spec.observation_distortion(x, xh)).to_scalar()
        })
    }
}

//! Information densities and mutual information, in nats.

use crate::error::{Error, Result};
use crate::prob::{compose, Conditional, JointPmf, Kernel, Pmf};
use crate::scalar::Scalar;

/// Pointwise information density. `NegInfinite` marks a zero transition
/// probability; such pairs carry no mass under the joint law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InfoDensity<T> {
    Finite(T),
    NegInfinite,
}

impl<T: Scalar> InfoDensity<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            InfoDensity::Finite(v) => Some(v),
            InfoDensity::NegInfinite => None,
        }
    }

    /// Value with the sentinel mapped to the scalar's negative infinity.
    pub fn to_scalar(self) -> T {
        match self {
            InfoDensity::Finite(v) => v,
            InfoDensity::NegInfinite => T::neg_infinity(),
        }
    }
}

fn log_ratio<T: Scalar>(num: T, den: T, z: usize) -> Result<InfoDensity<T>> {
    if num <= T::zero() {
        return Ok(InfoDensity::NegInfinite);
    }
    if den <= T::zero() {
        return Err(Error::AbsoluteContinuityViolation { z });
    }
    Ok(InfoDensity::Finite((num / den).ln()))
}

/// `log k(z|y) / q(z)` with `q` the output law induced by `p_in`.
pub fn info_density<T: Scalar>(p_in: &Pmf<T>, k: &Kernel<T>, y: usize, z: usize) -> Result<InfoDensity<T>> {
    let q = compose(p_in, k)?;
    info_density_with_reference(k, &q, y, z)
}

/// `log k(z|y) / r(z)` against a caller-supplied reference output law.
pub fn info_density_with_reference<T: Scalar>(
    k: &Kernel<T>,
    reference: &Pmf<T>,
    y: usize,
    z: usize,
) -> Result<InfoDensity<T>> {
    if reference.len() != k.outputs() {
        return Err(Error::DimMismatch { expected: k.outputs(), got: reference.len() });
    }
    if y >= k.inputs() {
        return Err(Error::IndexOutOfRange { index: y, size: k.inputs() });
    }
    if z >= k.outputs() {
        return Err(Error::IndexOutOfRange { index: z, size: k.outputs() });
    }
    log_ratio(k.prob(y, z), reference.get(z), z)
}

/// `I(Y; Z)` in nats.
pub fn mutual_information<T: Scalar>(p_in: &Pmf<T>, k: &Kernel<T>) -> Result<T> {
    let q = compose(p_in, k)?;
    let mut acc = T::zero();
    for y in p_in.support() {
        for z in 0..k.outputs() {
            let w = k.prob(y, z);
            if w > T::zero() {
                acc = acc + p_in.get(y) * w * (w / q.get(z)).ln();
            }
        }
    }
    Ok(acc.max(T::zero()))
}

/// Channel whose input alphabet is the product `Y1 x Y2`; input `(y1, y2)`
/// is row `y1 * |Y2| + y2` of the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredChannel<T = f64> {
    kernel: Kernel<T>,
    first: usize,
    second: usize,
}

impl<T: Scalar> StructuredChannel<T> {
    pub fn new(kernel: Kernel<T>, first: usize, second: usize) -> Result<Self> {
        if first == 0 || second == 0 {
            return Err(Error::Empty);
        }
        if kernel.inputs() != first * second {
            return Err(Error::DimMismatch { expected: first * second, got: kernel.inputs() });
        }
        Ok(Self { kernel, first, second })
    }

    /// Product channel: `Z = (Z1, Z2)` with `Z1 ~ k1(.|y1)`, `Z2 ~ k2(.|y2)`
    /// independently; output index `z1 * |Z2| + z2`.
    pub fn product(k1: &Kernel<T>, k2: &Kernel<T>) -> Self {
        let (n1, n2) = (k1.inputs(), k2.inputs());
        let (m1, m2) = (k1.outputs(), k2.outputs());
        let rows = (0..n1 * n2)
            .map(|y| {
                let (y1, y2) = (y / n2, y % n2);
                Pmf::from_trusted(
                    (0..m1 * m2).map(|z| k1.prob(y1, z / m2) * k2.prob(y2, z % m2)).collect(),
                )
            })
            .collect();
        Self { kernel: Kernel::from_pmfs(rows).expect("uniform row length"), first: n1, second: n2 }
    }

    /// Noiseless channel revealing `(y1, y2)`.
    pub fn noiseless(first: usize, second: usize) -> Self {
        Self { kernel: Kernel::identity(first * second), first, second }
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn second(&self) -> usize {
        self.second
    }

    pub fn outputs(&self) -> usize {
        self.kernel.outputs()
    }

    #[inline]
    pub fn input_index(&self, y1: usize, y2: usize) -> usize {
        y1 * self.second + y2
    }

    #[inline]
    pub fn prob(&self, y1: usize, y2: usize, z: usize) -> T {
        self.kernel.prob(self.input_index(y1, y2), z)
    }

    fn check_input(&self, p12: &JointPmf<T>) -> Result<()> {
        if p12.rows() != self.first {
            return Err(Error::DimMismatch { expected: self.first, got: p12.rows() });
        }
        if p12.cols() != self.second {
            return Err(Error::DimMismatch { expected: self.second, got: p12.cols() });
        }
        Ok(())
    }

    /// Laws induced by the input distribution `P_{Y1 Y2}`.
    pub fn layered(&self, p12: &JointPmf<T>) -> Result<LayeredLaw<T>> {
        self.check_input(p12)?;
        let p_y1 = p12.marginal(0)?;
        let y2_given_y1 = p12.condition(0)?;
        let nz = self.outputs();
        let mut z_given_y1 = Vec::with_capacity(self.first);
        for y1 in 0..self.first {
            if p_y1.get(y1) <= T::zero() {
                z_given_y1.push(None);
                continue;
            }
            let mut row = vec![T::zero(); nz];
            for y2 in 0..self.second {
                let w = y2_given_y1.prob_or_zero(y1, y2);
                if w <= T::zero() {
                    continue;
                }
                for (z, r) in row.iter_mut().enumerate() {
                    *r = *r + w * self.prob(y1, y2, z);
                }
            }
            z_given_y1.push(Some(row));
        }
        let mut p_z = vec![T::zero(); nz];
        for (y1, row) in z_given_y1.iter().enumerate() {
            if let Some(row) = row {
                for (z, pz) in p_z.iter_mut().enumerate() {
                    *pz = *pz + p_y1.get(y1) * row[z];
                }
            }
        }
        Ok(LayeredLaw { p_y1, y2_given_y1, z_given_y1, p_z: Pmf::from_trusted(p_z) })
    }

    /// Effective first-layer kernel `P_{Z|Y1}`; rows for `y1` outside the
    /// support of `P_{Y1}` are undefined.
    pub fn first_layer_kernel(&self, p12: &JointPmf<T>) -> Result<Conditional<T>> {
        let law = self.layered(p12)?;
        Ok(law.first_layer_conditional())
    }
}

/// `P_{Y1}`, `P_{Y2|Y1}`, `P_{Z|Y1}` and `P_Z` for a structured channel fed
/// by a joint input law.
#[derive(Debug, Clone)]
pub struct LayeredLaw<T> {
    pub p_y1: Pmf<T>,
    pub y2_given_y1: Conditional<T>,
    z_given_y1: Vec<Option<Vec<T>>>,
    pub p_z: Pmf<T>,
}

impl<T: Scalar> LayeredLaw<T> {
    /// `P_{Z|Y1}(z|y1)`; zero when `y1` has no mass.
    pub fn z_given_y1(&self, y1: usize, z: usize) -> T {
        self.z_given_y1[y1].as_ref().map_or(T::zero(), |r| r[z])
    }

    pub fn first_layer_conditional(&self) -> Conditional<T> {
        Conditional {
            rows: self.z_given_y1.iter().map(|r| r.as_ref().map(|r| Pmf::from_trusted(r.clone()))).collect(),
        }
    }

    /// `ı(y1; z) = log P_{Z|Y1}(z|y1) / P_Z(z)`.
    pub fn first_density(&self, y1: usize, z: usize) -> Result<InfoDensity<T>> {
        if self.p_y1.get(y1) <= T::zero() {
            return Err(Error::ZeroConditioningMass(y1));
        }
        log_ratio(self.z_given_y1(y1, z), self.p_z.get(z), z)
    }

    /// `ı(y2; z | y1) = log P_{Z|Y1 Y2}(z|y1, y2) / P_{Z|Y1}(z|y1)`.
    pub fn second_density(&self, ch: &StructuredChannel<T>, y1: usize, y2: usize, z: usize) -> Result<InfoDensity<T>> {
        if self.p_y1.get(y1) <= T::zero() {
            return Err(Error::ZeroConditioningMass(y1));
        }
        log_ratio(ch.prob(y1, y2, z), self.z_given_y1(y1, z), z)
    }
}

/// Conditional information density `ı(y2; z | y1)` under `P_{Y1 Y2}`.
pub fn cond_info_density<T: Scalar>(
    p12: &JointPmf<T>,
    ch: &StructuredChannel<T>,
    y1: usize,
    y2: usize,
    z: usize,
) -> Result<InfoDensity<T>> {
    if y1 >= ch.first() || y2 >= ch.second() || z >= ch.outputs() {
        return Err(Error::BadArgs(format!("symbol ({y1}, {y2}, {z}) out of range")));
    }
    ch.layered(p12)?.second_density(ch, y1, y2, z)
}

//! n-fold memoryless extensions of a source, a channel and a distortion
//! pair. Letters are indexed big-endian: `(a_1, .., a_n)` maps to
//! `Σ a_k |A|^(n-k)`.

use crate::distortion::DistortionSpec;
use crate::error::{Error, Result};
use crate::info::StructuredChannel;
use crate::prob::{JointPmf, Kernel, Matrix, SourceModel};
use crate::scalar::Scalar;

/// Largest table (joint atoms or matrix cells) an expansion may produce.
pub const MAX_ATOMS: usize = 1_000_000;

fn power(base: usize, n: usize) -> Result<usize> {
    let mut acc: usize = 1;
    for _ in 0..n {
        acc = acc
            .checked_mul(base)
            .filter(|&v| v <= MAX_ATOMS)
            .ok_or_else(|| Error::TooLarge(format!("{base}^{n} exceeds {MAX_ATOMS} atoms")))?;
    }
    Ok(acc)
}

fn check_cells(rows: usize, cols: usize) -> Result<()> {
    match rows.checked_mul(cols) {
        Some(c) if c <= MAX_ATOMS => Ok(()),
        _ => Err(Error::TooLarge(format!("{rows} x {cols} table exceeds {MAX_ATOMS} atoms"))),
    }
}

fn check_length(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::BadArgs("blocklength must be at least 1".into()));
    }
    Ok(())
}

/// Letter `k` (0-based, most significant first) of `index` in base `base`.
#[inline]
fn letter(index: usize, base: usize, n: usize, k: usize) -> usize {
    index / base.pow((n - 1 - k) as u32) % base
}

fn product_matrix<T: Scalar>(m: &Matrix<T>, n: usize, combine: impl Fn(&[T]) -> T) -> Result<Matrix<T>> {
    let (r, c) = (power(m.rows(), n)?, power(m.cols(), n)?);
    check_cells(r, c)?;
    let mut buf = vec![T::zero(); n];
    let mut data = Vec::with_capacity(r * c);
    for a in 0..r {
        for b in 0..c {
            for (k, v) in buf.iter_mut().enumerate() {
                *v = m.get(letter(a, m.rows(), n, k), letter(b, m.cols(), n, k));
            }
            data.push(combine(&buf));
        }
    }
    let rows = data.chunks(c).map(|row| row.to_vec()).collect();
    Matrix::from_rows(rows)
}

/// I.i.d. source `P_{S^n X^n} = Π P_{SX}(s_k, x_k)`.
pub fn product_source<T: Scalar>(src: &SourceModel<T>, n: usize) -> Result<SourceModel<T>> {
    check_length(n)?;
    let joint = product_matrix(src.joint().table(), n, |v| v.iter().fold(T::one(), |acc, &p| acc * p))?;
    Ok(SourceModel::from_joint(JointPmf::from_flat(joint.rows(), joint.cols(), joint.as_slice().to_vec())?))
}

/// Memoryless channel over `(Y1^n, Y2^n)`; letter `k` of the input is
/// `(y1_k, y2_k)`.
pub fn product_channel<T: Scalar>(ch: &StructuredChannel<T>, n: usize) -> Result<StructuredChannel<T>> {
    check_length(n)?;
    let (f, s, nz) = (power(ch.first(), n)?, power(ch.second(), n)?, power(ch.outputs(), n)?);
    check_cells(f * s, nz)?;
    let rows = (0..f * s)
        .map(|input| {
            let (y1, y2) = (input / s, input % s);
            (0..nz)
                .map(|z| {
                    (0..n).fold(T::one(), |acc, k| {
                        acc * ch.prob(
                            letter(y1, ch.first(), n, k),
                            letter(y2, ch.second(), n, k),
                            letter(z, ch.outputs(), n, k),
                        )
                    })
                })
                .collect()
        })
        .collect();
    StructuredChannel::new(Kernel::new(rows)?, f, s)
}

/// Per-letter averaged distortions `(1/n) Σ d(a_k, b_k)` with the
/// thresholds unchanged.
pub fn product_distortion<T: Scalar>(spec: &DistortionSpec<T>, n: usize) -> Result<DistortionSpec<T>> {
    check_length(n)?;
    let scale = T::one() / T::lit(n as f64);
    let average = |v: &[T]| v.iter().copied().sum::<T>() * scale;
    DistortionSpec::new(
        product_matrix(spec.d_s(), n, average)?,
        product_matrix(spec.d_x(), n, average)?,
        spec.threshold_s(),
        spec.threshold_x(),
    )
}

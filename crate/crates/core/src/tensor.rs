//! Third-order tensors and the primitives the rest of the pipeline is built on.
//!
//! A [`Tensor3`] has shape `rows × cols × phases`. Storage is phase-major: each
//! temporal phase is a contiguous row-major image, so element `(i, j, k)` lives
//! at `(k * rows + i) * cols + j`. This is also the byte order of the on-disk
//! container.
//!
//! Unfolding convention (frozen): the mode-`n` unfolding is an
//! `I_n × (∏ other dims)` matrix whose columns enumerate the remaining indices
//! in lexicographic order, so the higher-numbered remaining index varies
//! fastest. For mode 1 the column of `(j, k)` is `j * I3 + k`, for mode 2 the
//! column of `(i, k)` is `i * I3 + k` and for mode 3 the column of `(i, j)` is
//! `i * I2 + j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{gemm, View};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    ShortAxis,
    FourChamber,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::ShortAxis, Modality::FourChamber];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::ShortAxis => "short_axis",
            Modality::FourChamber => "four_chamber",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "short_axis" | "sa" => Ok(Modality::ShortAxis),
            "four_chamber" | "fc" => Ok(Modality::FourChamber),
            other => Err(Error::invalid(format!("unknown image modality `{other}`"))),
        }
    }
}

/// A tensor mode, 1-based as in the usual notation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn new(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::invalid(format!(
                "mode {n} is invalid for a third-order tensor"
            ))),
        }
    }

    /// Zero-based axis index.
    pub fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Self {
        Tensor3 {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    /// Builds a tensor from phase-major storage.
    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::shape(format!("dimensions must be >= 1, got {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} values supplied for a {}x{}x{} tensor ({expected} expected)",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [r, c, p] = dims;
        let mut data = Vec::with_capacity(r * c * p);
        for k in 0..p {
            for i in 0..r {
                for j in 0..c {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[0] + i) * self.dims[1] + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// One temporal phase as a row-major `rows × cols` slice.
    pub fn phase(&self, k: usize) -> &[f64] {
        let n = self.dims[0] * self.dims[1];
        &self.data[k * n..(k + 1) * n]
    }

    pub fn phase_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.dims[0] * self.dims[1];
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                index,
                context: String::new(),
            }),
            None => Ok(()),
        }
    }

    /// Rows `[start, end)` of every phase.
    pub fn row_slice(&self, start: usize, end: usize) -> Result<Tensor3> {
        if start >= end || end > self.dims[0] {
            return Err(Error::invalid(format!(
                "row range {start}..{end} outside 0..{}",
                self.dims[0]
            )));
        }
        let [_, c, p] = self.dims;
        let mut data = Vec::with_capacity((end - start) * c * p);
        for k in 0..p {
            let phase = self.phase(k);
            data.extend_from_slice(&phase[start * c..end * c]);
        }
        Ok(Tensor3 {
            dims: [end - start, c, p],
            data,
        })
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.require_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            data,
        })
    }

    pub fn require_same_shape(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// One subject's image tensor for one view.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorSample {
    pub modality: Modality,
    pub data: Tensor3,
}

/// A projected low-dimensional tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTensor(pub Tensor3);

impl ReducedTensor {
    pub fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }
}

/// Z-scores all voxels of one tensor with the population standard deviation.
/// A zero-variance tensor maps to all zeros.
pub fn zscore_normalize(t: &Tensor3) -> Result<Tensor3> {
    if t.len() < 2 {
        return Err(Error::invalid("z-score normalization needs at least 2 elements"));
    }
    t.check_finite()?;
    let n = t.len() as f64;
    let mean = t.data.iter().sum::<f64>() / n;
    let var = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let data = if std > 0.0 && std.is_finite() {
        t.data.iter().map(|v| (v - mean) / std).collect()
    } else {
        vec![0.0; t.len()]
    };
    Ok(Tensor3 { dims: t.dims, data })
}

pub const POOL_FACTORS: [usize; 4] = [2, 4, 8, 16];

/// In-plane max pooling with non-overlapping `factor × factor` blocks.
pub fn maxpool_downsample(t: &Tensor3, factor: usize) -> Result<Tensor3> {
    if !POOL_FACTORS.contains(&factor) {
        return Err(Error::invalid(format!(
            "pooling factor {factor} not in {POOL_FACTORS:?}"
        )));
    }
    let [r, c, p] = t.dims;
    if r % factor != 0 || c % factor != 0 {
        return Err(Error::shape(format!(
            "{r}x{c} in-plane size is not divisible by pooling factor {factor}"
        )));
    }
    let (or, oc) = (r / factor, c / factor);
    let mut out = Tensor3::filled([or, oc, p], f64::NEG_INFINITY);
    for k in 0..p {
        let src = t.phase(k);
        let dst = out.phase_mut(k);
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let drow = &mut dst[(i / factor) * oc..(i / factor + 1) * oc];
            for (j, &v) in row.iter().enumerate() {
                let d = &mut drow[j / factor];
                if v > *d {
                    *d = v;
                }
            }
        }
    }
    Ok(out)
}

pub fn unfold(t: &Tensor3, mode: Mode) -> DMatrix<f64> {
    let [r, c, p] = t.dims;
    match mode {
        Mode::One => DMatrix::from_fn(r, c * p, |i, col| t.get(i, col / p, col % p)),
        Mode::Two => DMatrix::from_fn(c, r * p, |j, col| t.get(col / p, j, col % p)),
        Mode::Three => DMatrix::from_fn(p, r * c, |k, col| t.get(col / c, col % c, k)),
    }
}

pub fn fold(m: &DMatrix<f64>, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
    let [r, c, p] = dims;
    let expected = match mode {
        Mode::One => (r, c * p),
        Mode::Two => (c, r * p),
        Mode::Three => (p, r * c),
    };
    if m.shape() != expected || dims.contains(&0) {
        return Err(Error::shape(format!(
            "a {}x{} matrix cannot fold on mode {} into {dims:?}",
            m.nrows(),
            m.ncols(),
            mode.axis() + 1
        )));
    }
    Ok(match mode {
        Mode::One => Tensor3::from_fn(dims, |i, j, k| m[(i, j * p + k)]),
        Mode::Two => Tensor3::from_fn(dims, |i, j, k| m[(j, i * p + k)]),
        Mode::Three => Tensor3::from_fn(dims, |i, j, k| m[(k, i * c + j)]),
    })
}

/// `t ×ₙ Uᵀ` for `U` of shape `I_n × P`; the result has `P` entries on mode `n`.
pub fn mode_product(t: &Tensor3, u: &DMatrix<f64>, mode: Mode) -> Result<Tensor3> {
    let [r, c, p] = t.dims;
    let axis = mode.axis();
    if u.nrows() != t.dims[axis] || u.ncols() == 0 {
        return Err(Error::shape(format!(
            "projection {}x{} does not match mode-{} size {}",
            u.nrows(),
            u.ncols(),
            axis + 1,
            t.dims[axis]
        )));
    }
    let out_n = u.ncols();
    let mut dims = t.dims;
    dims[axis] = out_n;
    let mut out = vec![0.0; dims.iter().product()];
    let uv = View::col_major(u.as_slice(), t.dims[axis], out_n);
    match mode {
        Mode::One => {
            // Each phase is a column-major (cols × rows) matrix B; the result
            // phase is B · U.
            let (src_len, dst_len) = (r * c, out_n * c);
            for k in 0..p {
                let b = View::col_major(&t.data[k * src_len..(k + 1) * src_len], c, r);
                gemm(1.0, b, uv, 0.0, &mut out[k * dst_len..(k + 1) * dst_len], 1, c);
            }
        }
        Mode::Two => {
            // Storage is column-major (cols × rows·phases); result = Uᵀ · A.
            let a = View::col_major(&t.data, c, r * p);
            gemm(1.0, uv.t(), a, 0.0, &mut out, 1, out_n);
        }
        Mode::Three => {
            // Storage is column-major (rows·cols × phases); result = C · U.
            let cm = View::col_major(&t.data, r * c, p);
            gemm(1.0, cm, uv, 0.0, &mut out, 1, r * c);
        }
    }
    Ok(Tensor3 { dims, data: out })
}

/// Applies `Uₙᵀ` on every mode in order 1, 2, 3.
pub fn multi_mode_product(t: &Tensor3, us: [&DMatrix<f64>; 3]) -> Result<Tensor3> {
    let y = mode_product(t, us[0], Mode::One)?;
    let y = mode_product(&y, us[1], Mode::Two)?;
    mode_product(&y, us[2], Mode::Three)
}

/// Adds the mode-`n` Gram matrix `T₍ₙ₎ T₍ₙ₎ᵀ` of `t` into `acc`.
pub(crate) fn accumulate_gram(t: &Tensor3, mode: Mode, acc: &mut DMatrix<f64>) {
    let [r, c, p] = t.dims;
    let n = acc.nrows();
    assert_eq!(n, t.dims[mode.axis()]);
    let acc = acc.as_mut_slice();
    match mode {
        Mode::One => {
            let len = r * c;
            for k in 0..p {
                let b = View::col_major(&t.data[k * len..(k + 1) * len], c, r);
                gemm(1.0, b.t(), b, 1.0, acc, 1, n);
            }
        }
        Mode::Two => {
            let a = View::col_major(&t.data, c, r * p);
            gemm(1.0, a, a.t(), 1.0, acc, 1, n);
        }
        Mode::Three => {
            let cm = View::col_major(&t.data, r * c, p);
            gemm(1.0, cm.t(), cm, 1.0, acc, 1, n);
        }
    }
}

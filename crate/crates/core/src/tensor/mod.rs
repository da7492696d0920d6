//! Dense 4-mode tensors with observation masks.
//!
//! Storage is linear with the mode-1 index fastest, i.e. entry
//! `(i1, i2, i3, m)` lives at `i1 + I1·(i2 + I2·(i3 + I3·m))` (0-based).
//! Mode-`n` matricization places the fiber with fixed non-`n` indices in
//! column `j = Σ_{k≠n} i_k · Π_{l<k, l≠n} I_l`, so a column index is simply the
//! linear index with mode `n` removed. Three-mode tensors are stored with
//! `M = 1`.

pub mod io;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub type Dims = [usize; 4];

/// A tensor mode, 1-based in the public constructor and 0-based internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode(usize);

impl Mode {
    pub const ONE: Mode = Mode(0);
    pub const TWO: Mode = Mode(1);
    pub const THREE: Mode = Mode(2);
    pub const FOUR: Mode = Mode(3);

    /// Mode `n` for `n ∈ {1, 2, 3, 4}`.
    pub fn new(n: usize) -> Result<Self> {
        if (1..=4).contains(&n) {
            Ok(Mode(n - 1))
        } else {
            Err(Error::InvalidMode { mode: n, order: 4 })
        }
    }

    /// Zero-based position of the mode.
    pub fn index(self) -> usize {
        self.0
    }

    /// One-based mode number.
    pub fn number(self) -> usize {
        self.0 + 1
    }
}

/// Splits a linear index into `(inner, i_n, outer)` around mode `n`:
/// `linear = inner + stride · (i_n + I_n · outer)`.
#[inline]
fn strides(dims: &Dims, mode: Mode) -> (usize, usize, usize) {
    let n = mode.index();
    let inner: usize = dims[..n].iter().product();
    let outer: usize = dims[n + 1..].iter().product();
    (inner, dims[n], outer)
}

fn check_dims(dims: &Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "tensor dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Dense 4-mode tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} need {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        check_dims(&dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        })
    }

    /// Builds a tensor from `f(i1, i2, i3, m)` with 0-based indices.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(&dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for m in 0..dims[3] {
            for i3 in 0..dims[2] {
                for i2 in 0..dims[1] {
                    for i1 in 0..dims[0] {
                        data.push(f(i1, i2, i3, m));
                    }
                }
            }
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn linear_index(&self, i1: usize, i2: usize, i3: usize, m: usize) -> usize {
        let [d1, d2, d3, _] = self.dims;
        i1 + d1 * (i2 + d2 * (i3 + d3 * m))
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize, m: usize) -> f64 {
        self.data[self.linear_index(i1, i2, i3, m)]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, m: usize, v: f64) {
        let l = self.linear_index(i1, i2, i3, m);
        self.data[l] = v;
    }

    pub fn fnorm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Size of one mode-4 slice (`I1·I2·I3`).
    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// The `m`-th mode-4 slice as a tensor with `M = 1`.
    pub fn slice4(&self, m: usize) -> Tensor4 {
        let len = self.slice_len();
        let [d1, d2, d3, _] = self.dims;
        Tensor4 {
            dims: [d1, d2, d3, 1],
            data: self.data[m * len..(m + 1) * len].to_vec(),
        }
    }

    /// Stacks equally-shaped `M = 1` tensors along mode 4.
    pub fn stack4(slices: &[Tensor4]) -> Result<Tensor4> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
        let [d1, d2, d3, _] = first.dims;
        let mut data = Vec::with_capacity(first.len() * slices.len());
        for s in slices {
            if s.dims != [d1, d2, d3, 1] {
                return Err(Error::DimensionMismatch(format!(
                    "cannot stack {:?} onto {:?}",
                    s.dims, first.dims
                )));
            }
            data.extend_from_slice(&s.data);
        }
        Tensor4::new([d1, d2, d3, slices.len()], data)
    }

    /// Mode-`n` matricization: an `I_n × Π_{k≠n} I_k` matrix.
    pub fn matricize(&self, mode: Mode) -> DenseMatrix {
        let (inner, dn, outer) = strides(&self.dims, mode);
        let mut out = DenseMatrix::zeros(dn, inner * outer);
        for b in 0..outer {
            for i in 0..dn {
                let base = inner * (i + dn * b);
                for a in 0..inner {
                    out[(i, a + inner * b)] = self.data[base + a];
                }
            }
        }
        out
    }

    /// Inverse of [`Tensor4::matricize`].
    pub fn dematricize(mat: &DenseMatrix, mode: Mode, dims: Dims) -> Result<Tensor4> {
        check_dims(&dims)?;
        let (inner, dn, outer) = strides(&dims, mode);
        if mat.nrows() != dn || mat.ncols() != inner * outer {
            return Err(Error::DimensionMismatch(format!(
                "{}×{} matrix cannot be a mode-{} unfolding of {dims:?}",
                mat.nrows(),
                mat.ncols(),
                mode.number()
            )));
        }
        let mut data = vec![0.0; dims.iter().product()];
        for b in 0..outer {
            for i in 0..dn {
                let base = inner * (i + dn * b);
                for a in 0..inner {
                    data[base + a] = mat[(i, a + inner * b)];
                }
            }
        }
        Ok(Tensor4 { dims, data })
    }

    /// Mode-`n` product `t ×_n u` for `u: J × I_n`.
    pub fn mode_product(&self, u: &DenseMatrix, mode: Mode) -> Result<Tensor4> {
        let (inner, dn, outer) = strides(&self.dims, mode);
        if u.ncols() != dn {
            return Err(Error::DimensionMismatch(format!(
                "mode-{} product needs {} columns, matrix is {}×{}",
                mode.number(),
                dn,
                u.nrows(),
                u.ncols()
            )));
        }
        let jn = u.nrows();
        let mut dims = self.dims;
        dims[mode.index()] = jn;
        check_dims(&dims)?;
        let mut data = vec![0.0; inner * jn * outer];
        for b in 0..outer {
            for i in 0..dn {
                let src = &self.data[inner * (i + dn * b)..inner * (i + dn * b) + inner];
                for j in 0..jn {
                    let w = u[(j, i)];
                    if w == 0.0 {
                        continue;
                    }
                    let dst = &mut data[inner * (j + jn * b)..inner * (j + jn * b) + inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        Ok(Tensor4 { dims, data })
    }

    /// `t ×_n u` applied for modes 1..3 in order; `None` entries are skipped.
    pub fn multi_mode_product(&self, mats: [Option<&DenseMatrix>; 3]) -> Result<Tensor4> {
        let mut cur: Option<Tensor4> = None;
        for (k, mat) in mats.iter().enumerate() {
            if let Some(u) = mat {
                let src = cur.as_ref().unwrap_or(self);
                cur = Some(src.mode_product(u, Mode(k))?);
            }
        }
        Ok(cur.unwrap_or_else(|| self.clone()))
    }

    /// Tucker reconstruction `core ×₁ U1ᵀ ×₂ U2ᵀ ×₃ U3ᵀ` for factors stored as
    /// `P_n × I_n` basis matrices.
    pub fn expand(&self, factors: [&DenseMatrix; 3]) -> Result<Tensor4> {
        let t = [
            factors[0].transpose(),
            factors[1].transpose(),
            factors[2].transpose(),
        ];
        self.multi_mode_product([Some(&t[0]), Some(&t[1]), Some(&t[2])])
    }

    /// Projection `t ×₁ U1 ×₂ U2 ×₃ U3`.
    pub fn project(&self, factors: [&DenseMatrix; 3]) -> Result<Tensor4> {
        self.multi_mode_product([Some(factors[0]), Some(factors[1]), Some(factors[2])])
    }
}

/// Observation pattern of a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPattern {
    /// Nothing missing.
    Complete,
    /// Every frame `(:, :, i3, m)` is either fully observed or fully missing.
    ImageWise,
    /// Arbitrary missing entries.
    EntryWise,
}

/// Observation state of one frame `(:, :, i3, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    Observed,
    Missing,
    Partial,
}

/// Per-row available column sets of a matricized mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilitySets {
    pub mode: Mode,
    /// `rows[i]`: strictly increasing observed column indices of row `i`.
    pub rows: Vec<Vec<usize>>,
    /// Column set shared by every row, when all rows agree. Always present
    /// for image-wise masks in modes 1 and 2.
    pub shared: Option<Vec<usize>>,
    pub ncols: usize,
}

/// A tensor plus its observation mask (`true` = observed). Values at missing
/// positions are always stored as `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTensor4 {
    values: Tensor4,
    mask: Vec<bool>,
}

impl MaskedTensor4 {
    /// Pairs `values` with `mask`, zeroing the missing positions.
    pub fn new(values: Tensor4, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries, tensor has {}",
                mask.len(),
                values.len()
            )));
        }
        let mut out = Self { values, mask };
        out.zero_missing();
        Ok(out)
    }

    pub fn fully_observed(values: Tensor4) -> Self {
        let mask = vec![true; values.len()];
        Self { values, mask }
    }

    fn zero_missing(&mut self) {
        for (v, &obs) in self.values.data.iter_mut().zip(&self.mask) {
            if !obs {
                *v = 0.0;
            }
        }
    }

    pub fn dims(&self) -> Dims {
        self.values.dims
    }

    pub fn values(&self) -> &Tensor4 {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn into_parts(self) -> (Tensor4, Vec<bool>) {
        (self.values, self.mask)
    }

    #[inline]
    pub fn is_observed(&self, i1: usize, i2: usize, i3: usize, m: usize) -> bool {
        self.mask[self.values.linear_index(i1, i2, i3, m)]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Marks the given linear positions missing.
    pub fn mask_out(&mut self, positions: impl IntoIterator<Item = usize>) {
        for l in positions {
            self.mask[l] = false;
            self.values.data[l] = 0.0;
        }
    }

    /// The projection that keeps observed entries and zeroes the rest.
    pub fn project_omega(&self) -> MaskedTensor4 {
        let mut out = self.clone();
        out.zero_missing();
        out
    }

    /// `‖P_Ω(self)‖²_F`.
    pub fn masked_fnorm_sq(&self) -> f64 {
        self.values
            .data
            .iter()
            .zip(&self.mask)
            .filter(|(_, &obs)| obs)
            .map(|(v, _)| v * v)
            .sum()
    }

    /// `‖P_Ω(self − other)‖²_F`, with `other` unmasked.
    pub fn masked_residual_sq(&self, other: &Tensor4) -> Result<f64> {
        if other.dims != self.values.dims {
            return Err(Error::DimensionMismatch(format!(
                "residual between {:?} and {:?}",
                self.values.dims, other.dims
            )));
        }
        Ok(self
            .values
            .data
            .iter()
            .zip(&other.data)
            .zip(&self.mask)
            .filter(|(_, &obs)| obs)
            .map(|((a, b), _)| (a - b) * (a - b))
            .sum())
    }

    /// Mode-`n` matricization of values and mask.
    pub fn matricize(&self, mode: Mode) -> (DenseMatrix, DMatrix<bool>) {
        let vals = self.values.matricize(mode);
        let (inner, dn, outer) = strides(&self.values.dims, mode);
        let mut mask = DMatrix::from_element(dn, inner * outer, false);
        for b in 0..outer {
            for i in 0..dn {
                let base = inner * (i + dn * b);
                for a in 0..inner {
                    mask[(i, a + inner * b)] = self.mask[base + a];
                }
            }
        }
        (vals, mask)
    }

    /// Inverse of [`MaskedTensor4::matricize`].
    pub fn dematricize(
        vals: &DenseMatrix,
        mask: &DMatrix<bool>,
        mode: Mode,
        dims: Dims,
    ) -> Result<MaskedTensor4> {
        let values = Tensor4::dematricize(vals, mode, dims)?;
        if mask.shape() != vals.shape() {
            return Err(Error::DimensionMismatch("mask/value unfolding shapes differ".into()));
        }
        let (inner, dn, outer) = strides(&dims, mode);
        let mut flat = vec![false; values.len()];
        for b in 0..outer {
            for i in 0..dn {
                let base = inner * (i + dn * b);
                for a in 0..inner {
                    flat[base + a] = mask[(i, a + inner * b)];
                }
            }
        }
        MaskedTensor4::new(values, flat)
    }

    /// Observed column sets per row of the mode-`n` unfolding.
    pub fn availability_sets(&self, mode: Mode) -> AvailabilitySets {
        let (inner, dn, outer) = strides(&self.values.dims, mode);
        let mut rows = vec![Vec::new(); dn];
        for b in 0..outer {
            for (i, row) in rows.iter_mut().enumerate() {
                let base = inner * (i + dn * b);
                for a in 0..inner {
                    if self.mask[base + a] {
                        row.push(a + inner * b);
                    }
                }
            }
        }
        let shared = if rows.windows(2).all(|w| w[0] == w[1]) {
            rows.first().cloned()
        } else {
            None
        };
        AvailabilitySets {
            mode,
            rows,
            shared,
            ncols: inner * outer,
        }
    }

    pub fn frame_status(&self, i3: usize, m: usize) -> FrameStatus {
        let [d1, d2, _, _] = self.values.dims;
        let start = self.values.linear_index(0, 0, i3, m);
        let frame = &self.mask[start..start + d1 * d2];
        if frame.iter().all(|&b| b) {
            FrameStatus::Observed
        } else if frame.iter().all(|&b| !b) {
            FrameStatus::Missing
        } else {
            FrameStatus::Partial
        }
    }

    pub fn pattern(&self) -> MaskPattern {
        if self.mask.iter().all(|&b| b) {
            return MaskPattern::Complete;
        }
        let [_, _, d3, dm] = self.values.dims;
        for m in 0..dm {
            for i3 in 0..d3 {
                if self.frame_status(i3, m) == FrameStatus::Partial {
                    return MaskPattern::EntryWise;
                }
            }
        }
        MaskPattern::ImageWise
    }

    /// The `m`-th mode-4 slice with its mask.
    pub fn slice4(&self, m: usize) -> MaskedTensor4 {
        let len = self.values.slice_len();
        MaskedTensor4 {
            values: self.values.slice4(m),
            mask: self.mask[m * len..(m + 1) * len].to_vec(),
        }
    }

    /// Stacks `M = 1` masked tensors along mode 4.
    pub fn stack4(slices: &[MaskedTensor4]) -> Result<MaskedTensor4> {
        let vals: Vec<Tensor4> = slices.iter().map(|s| s.values.clone()).collect();
        let values = Tensor4::stack4(&vals)?;
        let mask = slices.iter().flat_map(|s| s.mask.iter().copied()).collect();
        Ok(MaskedTensor4 { values, mask })
    }

    /// Resizes mode 3 to `len`: extra frames are appended as missing, surplus
    /// frames are dropped.
    pub fn resize_mode3(&self, len: usize) -> Result<MaskedTensor4> {
        let [d1, d2, d3, dm] = self.values.dims;
        let dims = [d1, d2, len, dm];
        check_dims(&dims)?;
        let frame = d1 * d2;
        let mut data = vec![0.0; dims.iter().product()];
        let mut mask = vec![false; data.len()];
        let keep = d3.min(len);
        for m in 0..dm {
            for i3 in 0..keep {
                let src = frame * (i3 + d3 * m);
                let dst = frame * (i3 + len * m);
                data[dst..dst + frame].copy_from_slice(&self.values.data[src..src + frame]);
                mask[dst..dst + frame].copy_from_slice(&self.mask[src..src + frame]);
            }
        }
        Ok(MaskedTensor4 {
            values: Tensor4 { dims, data },
            mask,
        })
    }
}

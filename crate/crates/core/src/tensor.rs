//! Dense row-major tensors and the neural-net primitives everything else
//! composes: convolution, pooling, bilinear resizing, normalization, linear
//! maps, activations. No broadcasting rules, no views, no autodiff graph;
//! every operation checks shapes up front and allocates its output.
//!
//! All operations are pure. Where rayon is used internally, each output
//! element is computed independently with a fixed summation order, so
//! results do not depend on the thread count.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Numeric precision of a tensor's payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

/// Scalar types the engine runs on. Single precision is the main inference
/// path; double precision backs the oracle and verification paths.
pub trait Element:
    num_traits::Float + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    const PRECISION: Precision = Precision::Single;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const PRECISION: Precision = Precision::Double;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense n-dimensional array, row-major, extents all positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Element> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::shape(format!("extents must be positive, got {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} imply {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        debug_assert!(n > 0, "zero-sized tensor {dims:?}");
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(dims: &[usize], v: T) -> Self {
        let mut t = Self::zeros(dims);
        t.data.fill(v);
        t
    }

    /// Builds a tensor by evaluating `f` at every flat (row-major) index.
    pub fn from_fn(dims: &[usize], f: impl FnMut(usize) -> T) -> Self {
        let n: usize = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: (0..n).map(f).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() || dims.contains(&0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {dims:?}",
                self.dims,
                self.data.len()
            )));
        }
        Ok(Tensor { dims, data: self.data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Errors if any element is NaN or infinite. `context` names the value
    /// for the report.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context.to_string()));
        }
        Ok(())
    }

    pub(crate) fn dim4(&self, what: &str) -> Result<(usize, usize, usize, usize)> {
        if self.dims.len() != 4 {
            return Err(Error::shape(format!(
                "{what}: expected rank 4, got {:?}",
                self.dims
            )));
        }
        Ok((self.dims[0], self.dims[1], self.dims[2], self.dims[3]))
    }

    pub(crate) fn expect_dims(&self, dims: &[usize], what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(format!(
                "{what}: expected {dims:?}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

pub fn sigmoid_scalar<T: Element>(v: T) -> T {
    // split on sign so exp never overflows
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn softplus_scalar<T: Element>(v: T) -> T {
    // ln(1+e^v); for large v the direct form overflows while v + ln(1+e^-v)
    // stays exact to working precision
    if v > T::from_f64(20.0) {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn silu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid_scalar(v))
}

pub fn softplus<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(softplus_scalar)
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    b.expect_dims(a.dims(), "add")?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect();
    Ok(Tensor { dims: a.dims.clone(), data })
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    b.expect_dims(a.dims(), "mul")?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect();
    Ok(Tensor { dims: a.dims.clone(), data })
}

pub fn scale<T: Element>(a: &Tensor<T>, s: T) -> Tensor<T> {
    a.map(|v| v * s)
}

/// Cross-correlation over [B,C,H,W] with an [O,C/groups,kh,kw] kernel.
/// Output extents follow the usual floor formula
/// `H' = (H + 2*padding - kh)/stride + 1`.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<Tensor<T>> {
    let (b, c, h, w) = input.dim4("conv2d input")?;
    let (o, cg, kh, kw) = kernel.dim4("conv2d kernel")?;
    if groups == 0 || c % groups != 0 || o % groups != 0 {
        return Err(Error::shape(format!(
            "conv2d: groups {groups} must divide channels {c} and outputs {o}"
        )));
    }
    if cg != c / groups {
        return Err(Error::shape(format!(
            "conv2d: kernel expects {cg} channels per group, input has {}",
            c / groups
        )));
    }
    if stride == 0 {
        return Err(Error::domain("conv2d: stride must be positive"));
    }
    if let Some(bt) = bias {
        bt.expect_dims(&[o], "conv2d bias")?;
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(Error::shape(format!(
            "conv2d: {kh}x{kw} kernel does not fit {h}x{w} input with padding {padding}"
        )));
    }
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;

    let ocg = o / groups;
    let xd = input.data();
    let kd = kernel.data();
    let mut out = Tensor::zeros(&[b, o, ho, wo]);
    out.data_mut()
        .par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(plane, dst)| {
            let bi = plane / o;
            let oi = plane % o;
            let c0 = (oi / ocg) * cg;
            let kbase = oi * cg * kh * kw;
            let bv = bias.map_or(T::zero(), |t| t.data()[oi]);
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bv;
                    for ci in 0..cg {
                        let plane_in = ((bi * c) + c0 + ci) * h * w;
                        let krow = kbase + ci * kh * kw;
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row_in = plane_in + iy as usize * w;
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc = acc + xd[row_in + ix as usize] * kd[krow + ky * kw + kx];
                            }
                        }
                    }
                    dst[oy * wo + ox] = acc;
                }
            }
        });
    Ok(out)
}

/// Mean over k-by-k windows. Requires the window to fit the input.
pub fn avg_pool2d<T: Element>(input: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    let (b, c, h, w) = input.dim4("avg_pool2d input")?;
    if k == 0 || stride == 0 {
        return Err(Error::domain("avg_pool2d: k and stride must be positive"));
    }
    if h < k || w < k {
        return Err(Error::shape(format!(
            "avg_pool2d: {k}x{k} window larger than {h}x{w} input"
        )));
    }
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let inv = T::from_f64(1.0 / (k * k) as f64);
    let xd = input.data();
    let mut out = Tensor::zeros(&[b, c, ho, wo]);
    for plane in 0..b * c {
        let src = &xd[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out.data[plane * ho * wo..(plane + 1) * ho * wo];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = T::zero();
                for ky in 0..k {
                    let row = (oy * stride + ky) * w + ox * stride;
                    for kx in 0..k {
                        acc = acc + src[row + kx];
                    }
                }
                dst[oy * wo + ox] = acc * inv;
            }
        }
    }
    Ok(out)
}

/// Bilinear resampling with the half-pixel (align-corners-false) convention:
/// source coordinate = (i + 0.5) * H/H2 - 0.5, clamped to the valid range.
/// Same-size calls and constant inputs reproduce exactly.
pub fn bilinear_resize<T: Element>(input: &Tensor<T>, h2: usize, w2: usize) -> Result<Tensor<T>> {
    let (b, c, h, w) = input.dim4("bilinear_resize input")?;
    if h2 == 0 || w2 == 0 {
        return Err(Error::shape("bilinear_resize: target extents must be positive"));
    }
    if h2 == h && w2 == w {
        return Ok(input.clone());
    }
    // precompute per-axis sample positions and weights
    let axis = |n: usize, n2: usize| -> Vec<(usize, usize, f64)> {
        (0..n2)
            .map(|i| {
                let s = ((i as f64 + 0.5) * n as f64 / n2 as f64 - 0.5).clamp(0.0, (n - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = axis(h, h2);
    let xs = axis(w, w2);
    let xd = input.data();
    let mut out = Tensor::zeros(&[b, c, h2, w2]);
    for plane in 0..b * c {
        let src = &xd[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out.data[plane * h2 * w2..(plane + 1) * h2 * w2];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v00 = src[y0 * w + x0].as_f64();
                let v01 = src[y0 * w + x1].as_f64();
                let v10 = src[y1 * w + x0].as_f64();
                let v11 = src[y1 * w + x1].as_f64();
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                dst[oy * w2 + ox] = T::from_f64(top + (bot - top) * fy);
            }
        }
    }
    Ok(out)
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes over the trailing dimension, then applies the learned affine.
pub fn layer_norm<T: Element>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    offset: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = *x.dims().last().unwrap();
    gain.expect_dims(&[d], "layer_norm gain")?;
    offset.expect_dims(&[d], "layer_norm offset")?;
    let rows = x.len() / d;
    let mut out = Tensor::zeros(x.dims());
    for r in 0..rows {
        let src = &x.data[r * d..(r + 1) * d];
        let dst = &mut out.data[r * d..(r + 1) * d];
        normalize_row(src, gain.data(), offset.data(), dst);
    }
    Ok(out)
}

/// Layer norm across the channel dimension of a [B,C,H,W] map, per pixel.
pub fn layer_norm_channels<T: Element>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    offset: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("layer_norm_channels input")?;
    gain.expect_dims(&[c], "layer_norm gain")?;
    offset.expect_dims(&[c], "layer_norm offset")?;
    let hw = h * w;
    let mut out = Tensor::zeros(x.dims());
    let mut col = vec![T::zero(); c];
    let mut res = vec![T::zero(); c];
    for bi in 0..b {
        for p in 0..hw {
            let base = bi * c * hw + p;
            for (ci, cv) in col.iter_mut().enumerate() {
                *cv = x.data[base + ci * hw];
            }
            normalize_row(&col, gain.data(), offset.data(), &mut res);
            for (ci, rv) in res.iter().enumerate() {
                out.data[base + ci * hw] = *rv;
            }
        }
    }
    Ok(out)
}

// Statistics in f64 regardless of T: the mean-0/var-1 contract is tight and
// single-precision accumulation drifts on wide rows.
fn normalize_row<T: Element>(src: &[T], gain: &[T], offset: &[T], dst: &mut [T]) {
    let d = src.len();
    let mut mean = 0.0;
    for v in src {
        mean += v.as_f64();
    }
    mean /= d as f64;
    let mut var = 0.0;
    for v in src {
        let e = v.as_f64() - mean;
        var += e * e;
    }
    var /= d as f64;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for i in 0..d {
        let n = (src[i].as_f64() - mean) * inv;
        dst[i] = T::from_f64(n) * gain[i] + offset[i];
    }
}

/// Per-channel affine `y = gain[c]*x + offset[c]`, i.e. batch norm folded to
/// inference form.
pub fn channel_affine<T: Element>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    offset: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("channel_affine input")?;
    gain.expect_dims(&[c], "channel_affine gain")?;
    offset.expect_dims(&[c], "channel_affine offset")?;
    let hw = h * w;
    let mut out = Tensor::zeros(x.dims());
    for plane in 0..b * c {
        let ci = plane % c;
        let (g, s) = (gain.data()[ci], offset.data()[ci]);
        for p in 0..hw {
            out.data[plane * hw + p] = x.data[plane * hw + p] * g + s;
        }
    }
    Ok(out)
}

/// Affine map over the trailing dimension: x[..., Din] x W[Dout, Din] + b.
pub fn linear<T: Element>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    if w.rank() != 2 {
        return Err(Error::shape(format!("linear: weight must be rank 2, got {:?}", w.dims())));
    }
    let (dout, din) = (w.dims()[0], w.dims()[1]);
    let d = *x.dims().last().unwrap();
    if d != din {
        return Err(Error::shape(format!(
            "linear: input features {d} do not match weight columns {din}"
        )));
    }
    if let Some(bt) = b {
        bt.expect_dims(&[dout], "linear bias")?;
    }
    let rows = x.len() / din;
    let mut dims = x.dims().to_vec();
    *dims.last_mut().unwrap() = dout;
    let xd = x.data();
    let wd = w.data();
    let mut out = Tensor::zeros(&dims);
    out.data_mut()
        .par_chunks_mut(dout)
        .enumerate()
        .for_each(|(r, dst)| {
            debug_assert!(r < rows);
            let src = &xd[r * din..(r + 1) * din];
            for (o, slot) in dst.iter_mut().enumerate() {
                let wrow = &wd[o * din..(o + 1) * din];
                let mut acc = b.map_or(T::zero(), |t| t.data()[o]);
                for i in 0..din {
                    acc = acc + src[i] * wrow[i];
                }
                *slot = acc;
            }
        });
    Ok(out)
}

/// Pointwise (1x1) linear map across channels of a [B,C,H,W] map.
pub fn linear_channels<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (bn, c, h, wt) = x.dim4("linear_channels input")?;
    if w.rank() != 2 || w.dims()[1] != c {
        return Err(Error::shape(format!(
            "linear_channels: weight {:?} does not match {c} input channels",
            w.dims()
        )));
    }
    let dout = w.dims()[0];
    if let Some(bt) = b {
        bt.expect_dims(&[dout], "linear_channels bias")?;
    }
    let hw = h * wt;
    let xd = x.data();
    let wd = w.data();
    let mut out = Tensor::zeros(&[bn, dout, h, wt]);
    out.data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(plane, dst)| {
            let bi = plane / dout;
            let oi = plane % dout;
            let bv = b.map_or(T::zero(), |t| t.data()[oi]);
            let wrow = &wd[oi * c..(oi + 1) * c];
            for p in 0..hw {
                let mut acc = bv;
                for ci in 0..c {
                    acc = acc + xd[(bi * c + ci) * hw + p] * wrow[ci];
                }
                dst[p] = acc;
            }
        });
    Ok(out)
}

/// Softmax across the channel dimension of [B,C,H,W]; per-pixel channel sums
/// come out as 1 up to rounding.
pub fn softmax_channel<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("softmax_channel input")?;
    let hw = h * w;
    let mut out = Tensor::zeros(x.dims());
    for bi in 0..b {
        for p in 0..hw {
            let base = bi * c * hw + p;
            let mut m = x.data[base];
            for ci in 1..c {
                m = m.max(x.data[base + ci * hw]);
            }
            let mut sum = T::zero();
            for ci in 0..c {
                let e = (x.data[base + ci * hw] - m).exp();
                out.data[base + ci * hw] = e;
                sum = sum + e;
            }
            for ci in 0..c {
                out.data[base + ci * hw] = out.data[base + ci * hw] / sum;
            }
        }
    }
    Ok(out)
}

/// Spatial mean per (batch, channel): [B,C,H,W] -> [B,C].
pub fn global_avg_pool<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("global_avg_pool input")?;
    let hw = (h * w) as f64;
    let mut out = Tensor::zeros(&[b, c]);
    for plane in 0..b * c {
        let mut acc = 0.0;
        for v in &x.data[plane * h * w..(plane + 1) * h * w] {
            acc += v.as_f64();
        }
        out.data[plane] = T::from_f64(acc / hw);
    }
    Ok(out)
}

/// Mean across channels: [B,C,H,W] -> [B,1,H,W].
pub fn channel_mean<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("channel_mean input")?;
    let hw = h * w;
    let inv = 1.0 / c as f64;
    let mut out = Tensor::zeros(&[b, 1, h, w]);
    for bi in 0..b {
        for p in 0..hw {
            let mut acc = 0.0;
            for ci in 0..c {
                acc += x.data[(bi * c + ci) * hw + p].as_f64();
            }
            out.data[bi * hw + p] = T::from_f64(acc * inv);
        }
    }
    Ok(out)
}

/// Concatenates along the channel axis; all inputs must agree on B, H, W.
pub fn concat_channels<T: Element>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if xs.is_empty() {
        return Err(Error::shape("concat_channels: no inputs"));
    }
    let (b, _, h, w) = xs[0].dim4("concat_channels input")?;
    let mut ctotal = 0;
    for t in xs {
        let (tb, tc, th, tw) = t.dim4("concat_channels input")?;
        if (tb, th, tw) != (b, h, w) {
            return Err(Error::shape(format!(
                "concat_channels: {:?} does not match first input {:?}",
                t.dims(),
                xs[0].dims()
            )));
        }
        ctotal += tc;
    }
    let hw = h * w;
    let mut out = Tensor::zeros(&[b, ctotal, h, w]);
    for bi in 0..b {
        let mut coff = 0;
        for t in xs {
            let tc = t.dims()[1];
            let src = &t.data[bi * tc * hw..(bi + 1) * tc * hw];
            let dst = &mut out.data[(bi * ctotal + coff) * hw..(bi * ctotal + coff + tc) * hw];
            dst.copy_from_slice(src);
            coff += tc;
        }
    }
    Ok(out)
}

/// Copies channels [from, to) into a new tensor.
pub fn slice_channels<T: Element>(x: &Tensor<T>, from: usize, to: usize) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("slice_channels input")?;
    if from >= to || to > c {
        return Err(Error::shape(format!(
            "slice_channels: [{from}, {to}) out of range for {c} channels"
        )));
    }
    let hw = h * w;
    let cn = to - from;
    let mut out = Tensor::zeros(&[b, cn, h, w]);
    for bi in 0..b {
        let src = &x.data[(bi * c + from) * hw..(bi * c + to) * hw];
        out.data[bi * cn * hw..(bi + 1) * cn * hw].copy_from_slice(src);
    }
    Ok(out)
}

/// Multiplies each channel plane by a per-(batch, channel) scalar.
pub fn mul_channels<T: Element>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("mul_channels input")?;
    s.expect_dims(&[b, c], "mul_channels scales")?;
    let hw = h * w;
    let mut out = x.clone();
    for plane in 0..b * c {
        let f = s.data()[plane];
        for v in &mut out.data[plane * hw..(plane + 1) * hw] {
            *v = *v * f;
        }
    }
    Ok(out)
}

/// Multiplies every channel by a shared [B,1,H,W] spatial map.
pub fn mul_spatial<T: Element>(x: &Tensor<T>, m: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dim4("mul_spatial input")?;
    m.expect_dims(&[b, 1, h, w], "mul_spatial map")?;
    let hw = h * w;
    let mut out = x.clone();
    for bi in 0..b {
        let plane = &m.data[bi * hw..(bi + 1) * hw];
        for ci in 0..c {
            let dst = &mut out.data[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for p in 0..hw {
                dst[p] = dst[p] * plane[p];
            }
        }
    }
    Ok(out)
}

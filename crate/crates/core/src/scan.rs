//! Scanning orders that serialize a 2-D feature map into a 1-D token
//! sequence, as explicit index permutations.
//!
//! Four orders are supported. On a 4x4 grid with window 2 they read:
//!
//!   horizontal            vertical              local_window(2)
//!   0  1  2  3            0  4  8 12            0  1 | 4  5
//!   4  5  6  7            1  5  9 13            2  3 | 6  7
//!   8  9 10 11            2  6 10 14            ------+------
//!  12 13 14 15            3  7 11 15            8  9 |12 13
//!                                              10 11 |14 15
//!
//! (the numbers give each pixel's position in the output sequence;
//! local_window_flipped reverses the order inside every window). A
//! `Permutation` maps sequence position -> flat row-major pixel index and is
//! checked to be a bijection at construction.

use crate::error::{Error, Result};
use crate::tensor::{
    channel_mean, concat_channels, conv2d, global_avg_pool, linear, linear_channels, mul_channels,
    mul_spatial, relu, sigmoid, Element, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanKind {
    Horizontal,
    Vertical,
    LocalWindow,
    LocalWindowFlipped,
}

/// A scanning order plus its window size (meaningful for the local kinds).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanStrategy {
    pub kind: ScanKind,
    pub window: usize,
}

impl ScanStrategy {
    pub fn horizontal() -> Self {
        ScanStrategy { kind: ScanKind::Horizontal, window: 2 }
    }

    pub fn vertical() -> Self {
        ScanStrategy { kind: ScanKind::Vertical, window: 2 }
    }

    pub fn local_window(window: usize) -> Self {
        ScanStrategy { kind: ScanKind::LocalWindow, window }
    }

    pub fn local_window_flipped(window: usize) -> Self {
        ScanStrategy { kind: ScanKind::LocalWindowFlipped, window }
    }
}

impl std::str::FromStr for ScanStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(Self::horizontal()),
            "vertical" => Ok(Self::vertical()),
            "local_window" => Ok(Self::local_window(2)),
            "local_window_flipped" => Ok(Self::local_window_flipped(2)),
            other => Err(Error::domain(format!(
                "unknown scan strategy '{other}' (expected horizontal, vertical, \
                 local_window or local_window_flipped)"
            ))),
        }
    }
}

/// Bijection on [0, L): `order[s]` is the flat row-major pixel index placed
/// at sequence position s.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || seen[i] {
                return Err(Error::domain(format!(
                    "order is not a bijection on [0, {})",
                    order.len()
                )));
            }
            seen[i] = true;
        }
        Ok(Permutation { order })
    }

    pub fn identity(l: usize) -> Self {
        Permutation { order: (0..l).collect() }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Same traversal walked back to front; a bijection stays a bijection.
    pub fn reversed(&self) -> Permutation {
        let mut order = self.order.clone();
        order.reverse();
        Permutation { order }
    }
}

/// Builds the pixel visiting order for one strategy on an H-by-W grid.
pub fn build_scan_order(h: usize, w: usize, s: ScanStrategy) -> Result<Permutation> {
    if h == 0 || w == 0 {
        return Err(Error::domain("scan order needs a non-empty grid"));
    }
    let l = h * w;
    let order = match s.kind {
        ScanKind::Horizontal => (0..l).collect(),
        ScanKind::Vertical => {
            let mut order = Vec::with_capacity(l);
            for x in 0..w {
                for y in 0..h {
                    order.push(y * w + x);
                }
            }
            order
        }
        ScanKind::LocalWindow | ScanKind::LocalWindowFlipped => {
            let k = s.window;
            if k == 0 || !h.is_multiple_of(k) || !w.is_multiple_of(k) {
                return Err(Error::domain(format!(
                    "window {k} does not divide grid {h}x{w}"
                )));
            }
            let mut order = Vec::with_capacity(l);
            let mut win = Vec::with_capacity(k * k);
            for wy in 0..h / k {
                for wx in 0..w / k {
                    win.clear();
                    for iy in 0..k {
                        for ix in 0..k {
                            win.push((wy * k + iy) * w + wx * k + ix);
                        }
                    }
                    if s.kind == ScanKind::LocalWindowFlipped {
                        win.reverse();
                    }
                    order.extend_from_slice(&win);
                }
            }
            order
        }
    };
    Permutation::new(order)
}

/// Reads a [B,C,H,W] map into a [B,L,C] sequence following the permutation.
pub fn gather_sequence<T: Element>(f: &Tensor<T>, p: &Permutation) -> Result<Tensor<T>> {
    let (b, c, h, w) = f.dim4("gather_sequence input")?;
    let l = h * w;
    if p.len() != l {
        return Err(Error::shape(format!(
            "permutation length {} does not match {h}x{w} map",
            p.len()
        )));
    }
    let fd = f.data();
    let mut out = Tensor::zeros(&[b, l, c]);
    let od = out.data_mut();
    for bi in 0..b {
        for (s, &pix) in p.order().iter().enumerate() {
            for ci in 0..c {
                od[(bi * l + s) * c + ci] = fd[(bi * c + ci) * l + pix];
            }
        }
    }
    Ok(out)
}

/// Writes a [B,L,C] sequence back onto the [B,C,H,W] grid; exact inverse of
/// `gather_sequence` under the same permutation.
pub fn scatter_sequence<T: Element>(
    seq: &Tensor<T>,
    p: &Permutation,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    if seq.rank() != 3 {
        return Err(Error::shape(format!(
            "scatter_sequence: expected [B,L,C], got {:?}",
            seq.dims()
        )));
    }
    let (b, l, c) = (seq.dims()[0], seq.dims()[1], seq.dims()[2]);
    if l != h * w || p.len() != l {
        return Err(Error::shape(format!(
            "scatter_sequence: sequence length {l} vs {h}x{w} grid with permutation {}",
            p.len()
        )));
    }
    let sd = seq.data();
    let mut out = Tensor::zeros(&[b, c, h, w]);
    let od = out.data_mut();
    for bi in 0..b {
        for (s, &pix) in p.order().iter().enumerate() {
            for ci in 0..c {
                od[(bi * c + ci) * l + pix] = sd[(bi * l + s) * c + ci];
            }
        }
    }
    Ok(out)
}

/// Weights of the spatial-and-channel attention merge. With C output
/// channels the concatenated input carries 4C; the channel branch squeezes
/// to C (reduction 4) and back.
#[derive(Clone, Debug)]
pub struct ScAttnWeights<T: Element> {
    pub ch_fc1_w: Tensor<T>, // [C, 4C]
    pub ch_fc1_b: Tensor<T>, // [C]
    pub ch_fc2_w: Tensor<T>, // [4C, C]
    pub ch_fc2_b: Tensor<T>, // [4C]
    pub sp_conv_w: Tensor<T>, // [1,1,3,3]
    pub sp_conv_b: Tensor<T>, // [1]
    pub merge_w: Tensor<T>,  // [C, 4C]
    pub merge_b: Tensor<T>,  // [C]
}

/// Fuses the four directional scan outputs: concatenate, scale by channel
/// attention, scale by spatial attention, then a pointwise merge back to C
/// channels.
pub fn scattn_merge<T: Element>(
    dir_feats: &[Tensor<T>; 4],
    weights: &ScAttnWeights<T>,
) -> Result<Tensor<T>> {
    let dims = dir_feats[0].dims();
    for f in &dir_feats[1..] {
        f.expect_dims(dims, "scattn direction")?;
    }
    let cat = concat_channels(&[&dir_feats[0], &dir_feats[1], &dir_feats[2], &dir_feats[3]])?;

    // channel attention: squeeze-excite over the 4C concatenated channels
    let pooled = global_avg_pool(&cat)?;
    let hidden = relu(&linear(&pooled, &weights.ch_fc1_w, Some(&weights.ch_fc1_b))?);
    let ch = sigmoid(&linear(&hidden, &weights.ch_fc2_w, Some(&weights.ch_fc2_b))?);
    let cat = mul_channels(&cat, &ch)?;

    // spatial attention: one 3x3 conv over the channel mean
    let mean = channel_mean(&cat)?;
    let sp = sigmoid(&conv2d(&mean, &weights.sp_conv_w, Some(&weights.sp_conv_b), 1, 1, 1)?);
    let cat = mul_spatial(&cat, &sp)?;

    linear_channels(&cat, &weights.merge_w, Some(&weights.merge_b))
}

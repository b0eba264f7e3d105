//! The spatial Mamba block: the unit the Mamba branch stacks two of per
//! stage, plus the patch embedding/merging stem that feeds it.
//!
//! One block runs
//!
//! ```text
//! norm -> project C->2E -> split
//!   flow A: depthwise 3x3 -> SiLU -> {gather, selective scan, scatter} x4
//!           -> attention merge
//!   flow B: SiLU gate, multiplied into the merged map
//! -> project E->C -> norm -> x + gate * out
//! ```
//!
//! The four scan branches differ only in their token ordering; each owns its
//! delta/B/C projection heads while the diagonal transition A is shared
//! across directions.

use crate::error::{Error, Result};
use crate::scan::{
    build_scan_order, gather_sequence, scatter_sequence, scattn_merge, Permutation, ScAttnWeights,
    ScanStrategy,
};
use crate::ssm::{discretize, scan_blocked, ScanInputs};
use crate::tensor::{
    add, conv2d, layer_norm_channels, linear, linear_channels, mul, scale, silu, slice_channels,
    softplus, Element, Tensor,
};

/// Patch size of the embedding stem.
pub const PATCH: usize = 4;

/// A scanning order together with an optional whole-sequence reversal.
/// Reversal composes on top of the base strategy, so e.g. a right-to-left
/// horizontal scan does not need its own strategy kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Direction {
    pub strategy: ScanStrategy,
    pub reversed: bool,
}

impl Direction {
    pub fn forward(strategy: ScanStrategy) -> Self {
        Direction { strategy, reversed: false }
    }

    pub fn reversed(strategy: ScanStrategy) -> Self {
        Direction { strategy, reversed: true }
    }

    pub fn permutation(&self, h: usize, w: usize) -> Result<Permutation> {
        let p = build_scan_order(h, w, self.strategy)?;
        Ok(if self.reversed { p.reversed() } else { p })
    }
}

/// Shape parameters of one block: C channels in and out, E = expansion * C
/// internal width, N states per channel, and the block size handed to the
/// scan kernel.
#[derive(Clone, Copy, Debug)]
pub struct SmbConfig {
    pub c: usize,
    pub e: usize,
    pub n: usize,
    pub scan_block: usize,
    pub directions: [Direction; 4],
}

impl SmbConfig {
    /// Default direction set: horizontal, vertical, and the two local-window
    /// orders. The second block of a stage walks the horizontal scan
    /// back-to-front so the pair covers both sequence ends.
    pub fn with_default_directions(
        c: usize,
        e: usize,
        n: usize,
        window: usize,
        reverse_horizontal: bool,
        scan_block: usize,
    ) -> Self {
        let horizontal = if reverse_horizontal {
            Direction::reversed(ScanStrategy::horizontal())
        } else {
            Direction::forward(ScanStrategy::horizontal())
        };
        SmbConfig {
            c,
            e,
            n,
            scan_block,
            directions: [
                horizontal,
                Direction::forward(ScanStrategy::vertical()),
                Direction::forward(ScanStrategy::local_window(window)),
                Direction::forward(ScanStrategy::local_window_flipped(window)),
            ],
        }
    }
}

/// Per-direction projection heads for the selective-scan parameters.
#[derive(Clone, Debug)]
pub struct DirectionHeads<T: Element> {
    pub delta_w: Tensor<T>, // [E, E]
    pub delta_b: Tensor<T>, // [E]
    pub b_w: Tensor<T>,     // [N, E]
    pub b_b: Tensor<T>,     // [N]
    pub c_w: Tensor<T>,     // [N, E]
    pub c_b: Tensor<T>,     // [N]
}

#[derive(Clone, Debug)]
pub struct SmbWeights<T: Element> {
    pub pre_norm_gain: Tensor<T>,    // [C]
    pub pre_norm_offset: Tensor<T>,  // [C]
    pub in_proj_w: Tensor<T>,        // [2E, C]
    pub in_proj_b: Tensor<T>,        // [2E]
    pub dw_conv_w: Tensor<T>,        // [E, 1, 3, 3]
    pub dw_conv_b: Tensor<T>,        // [E]
    pub heads: [DirectionHeads<T>; 4],
    pub a: Tensor<T>,                // [E, N], strictly negative
    pub scattn: ScAttnWeights<T>,
    pub out_proj_w: Tensor<T>,       // [C, E]
    pub out_proj_b: Tensor<T>,       // [C]
    pub post_norm_gain: Tensor<T>,   // [C]
    pub post_norm_offset: Tensor<T>, // [C]
    pub res_gate: T,
}

/// Runs one direction branch on the post-conv feature map: gather the
/// sequence, project the per-token scan parameters, discretize and scan.
/// Returns the sequence-domain output together with the permutation used,
/// so callers can scatter (or inspect causality before the merge).
pub fn scan_direction<T: Element>(
    feat: &Tensor<T>,
    dir: &Direction,
    heads: &DirectionHeads<T>,
    a: &Tensor<T>,
    scan_block: usize,
) -> Result<(Tensor<T>, Permutation)> {
    let (_, _, h, w) = feat.dim4("scan_direction input")?;
    let p = dir.permutation(h, w)?;
    let seq = gather_sequence(feat, &p)?;
    let delta = softplus(&linear(&seq, &heads.delta_w, Some(&heads.delta_b))?);
    let bmat = linear(&seq, &heads.b_w, Some(&heads.b_b))?;
    let cmat = linear(&seq, &heads.c_w, Some(&heads.c_b))?;
    let inputs = ScanInputs::new(seq, delta, bmat, cmat, a.clone())?;
    let step = discretize(&inputs)?;
    let y = scan_blocked(&step, &inputs.x, &inputs.cmat, scan_block)?;
    Ok((y, p))
}

/// One spatial Mamba block; shape-preserving, residual.
pub fn smb_forward<T: Element>(
    x: &Tensor<T>,
    w: &SmbWeights<T>,
    cfg: &SmbConfig,
) -> Result<Tensor<T>> {
    let (_, c, h, wd) = x.dim4("smb input")?;
    if c != cfg.c {
        return Err(Error::shape(format!(
            "smb: input has {c} channels, config says {}",
            cfg.c
        )));
    }

    let t = layer_norm_channels(x, &w.pre_norm_gain, &w.pre_norm_offset)?;
    let proj = linear_channels(&t, &w.in_proj_w, Some(&w.in_proj_b))?;
    let flow = slice_channels(&proj, 0, cfg.e)?;
    let gate = slice_channels(&proj, cfg.e, 2 * cfg.e)?;

    let flow = silu(&conv2d(&flow, &w.dw_conv_w, Some(&w.dw_conv_b), 1, 1, cfg.e)?);

    let mut scattered: Vec<Tensor<T>> = Vec::with_capacity(4);
    for (dir, heads) in cfg.directions.iter().zip(&w.heads) {
        let (y, p) = scan_direction(&flow, dir, heads, &w.a, cfg.scan_block)?;
        scattered.push(scatter_sequence(&y, &p, h, wd)?);
    }
    let dirs: [Tensor<T>; 4] = match scattered.try_into() {
        Ok(a) => a,
        Err(_) => unreachable!(),
    };
    let merged = scattn_merge(&dirs, &w.scattn)?;

    let gated = mul(&merged, &silu(&gate))?;
    let out = linear_channels(&gated, &w.out_proj_w, Some(&w.out_proj_b))?;
    let out = layer_norm_channels(&out, &w.post_norm_gain, &w.post_norm_offset)?;
    let out = add(x, &scale(&out, w.res_gate))?;
    out.validate_finite("smb output")?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PatchEmbedWeights<T: Element> {
    pub w: Tensor<T>, // [C, 3, 4, 4]
    pub b: Tensor<T>, // [C]
}

/// Non-overlapping 4x4 patches of an RGB image, linearly projected to C
/// channels: [B,3,H,W] -> [B,C,H/4,W/4].
pub fn patch_embed<T: Element>(img: &Tensor<T>, w: &PatchEmbedWeights<T>) -> Result<Tensor<T>> {
    let (_, _, h, wd) = img.dim4("patch_embed input")?;
    if h % PATCH != 0 || wd % PATCH != 0 {
        return Err(Error::domain(format!(
            "patch_embed: {h}x{wd} is not divisible by the patch size {PATCH}"
        )));
    }
    conv2d(img, &w.w, Some(&w.b), PATCH, 0, 1)
}

#[derive(Clone, Debug)]
pub struct PatchMergeWeights<T: Element> {
    pub w: Tensor<T>, // [2C, 4C]
    pub b: Tensor<T>, // [2C]
}

/// Concatenates each 2x2 neighborhood (order: top-left, top-right,
/// bottom-left, bottom-right) into 4C channels and projects to 2C:
/// [B,C,H,W] -> [B,2C,H/2,W/2].
pub fn patch_merge<T: Element>(f: &Tensor<T>, w: &PatchMergeWeights<T>) -> Result<Tensor<T>> {
    let (b, c, h, wd) = f.dim4("patch_merge input")?;
    if h % 2 != 0 || wd % 2 != 0 {
        return Err(Error::domain(format!(
            "patch_merge: {h}x{wd} has odd extents"
        )));
    }
    let (h2, w2) = (h / 2, wd / 2);
    let fd = f.data();
    let mut grouped = Tensor::zeros(&[b, 4 * c, h2, w2]);
    let gd = grouped.data_mut();
    for bi in 0..b {
        for (corner, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
            for ci in 0..c {
                let src = &fd[(bi * c + ci) * h * wd..(bi * c + ci + 1) * h * wd];
                let dst_plane = (bi * 4 * c + corner * c + ci) * h2 * w2;
                for oy in 0..h2 {
                    for ox in 0..w2 {
                        gd[dst_plane + oy * w2 + ox] = src[(oy * 2 + dy) * wd + ox * 2 + dx];
                    }
                }
            }
        }
    }
    linear_channels(&grouped, &w.w, Some(&w.b))
}

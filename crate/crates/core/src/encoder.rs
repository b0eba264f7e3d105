//! Two-branch encoder: a plain convolutional pyramid alongside a Mamba
//! pyramid, reconciled to a fixed geometry and fused stage by stage.
//!
//! On an H-by-W input (H, W divisible by 32):
//!
//! ```text
//! conv branch   H/2   H/4   H/8   H/16      (two 3x3 convs + 2x2 avg pool)
//! mamba branch  H/4   H/8   H/16  H/32      (patch embed/merge + 2 SMBs)
//! ```
//!
//! Stage i fuses conv stage i with the 2x-upsampled Mamba stage i: the conv
//! map goes through one extra 3x3 conv, the Mamba map through a
//! squeeze-excite channel attention, and the two are added element-wise.
//! Channel widths double per stage from the configured base.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::smb::{patch_embed, patch_merge, smb_forward, PatchEmbedWeights, PatchMergeWeights, SmbWeights};
use crate::tensor::{
    add, avg_pool2d, bilinear_resize, conv2d, global_avg_pool, linear, mul_channels, relu,
    sigmoid, Element, Tensor,
};

/// Weights of one conv-branch stage: two 3x3 same-padding convolutions.
#[derive(Clone, Debug)]
pub struct ConvStageWeights<T: Element> {
    pub conv1_w: Tensor<T>, // [Cout, Cin, 3, 3]
    pub conv1_b: Tensor<T>,
    pub conv2_w: Tensor<T>, // [Cout, Cout, 3, 3]
    pub conv2_b: Tensor<T>,
}

/// conv -> ReLU -> conv -> ReLU -> 2x2/2 average pool; spatial dims halve.
pub fn conv_stage<T: Element>(f: &Tensor<T>, w: &ConvStageWeights<T>) -> Result<Tensor<T>> {
    let (_, _, h, wd) = f.dim4("conv_stage input")?;
    if h % 2 != 0 || wd % 2 != 0 {
        return Err(Error::domain(format!(
            "conv_stage: {h}x{wd} input cannot be pooled in half"
        )));
    }
    let t = relu(&conv2d(f, &w.conv1_w, Some(&w.conv1_b), 1, 1, 1)?);
    let t = relu(&conv2d(&t, &w.conv2_w, Some(&w.conv2_b), 1, 1, 1)?);
    avg_pool2d(&t, 2, 2)
}

/// Weights of the per-stage fusion: the extra conv on the conv-branch map
/// and the squeeze-excite attention on the Mamba-branch map (reduction 4).
#[derive(Clone, Debug)]
pub struct EnhanceWeights<T: Element> {
    pub conv_w: Tensor<T>,   // [C, C, 3, 3]
    pub conv_b: Tensor<T>,   // [C]
    pub se_fc1_w: Tensor<T>, // [C/4, C]
    pub se_fc1_b: Tensor<T>, // [C/4]
    pub se_fc2_w: Tensor<T>, // [C, C/4]
    pub se_fc2_b: Tensor<T>, // [C]
}

/// One encoder stage's output triple. The three maps share shape exactly;
/// `scale_denom` records the resolution as input/scale_denom.
#[derive(Clone, Debug)]
pub struct StageFeatures<T: Element> {
    pub f_conv: Tensor<T>,
    pub f_ssm: Tensor<T>,
    pub f_fused: Tensor<T>,
    pub scale_denom: usize,
}

/// Brings a Mamba-stage map up to the paired conv-stage map's size, applies
/// the per-stage enhancements, and fuses by element-wise addition.
pub fn align_and_enhance<T: Element>(
    f_ssm_raw: &Tensor<T>,
    f_conv_raw: &Tensor<T>,
    w: &EnhanceWeights<T>,
    scale_denom: usize,
) -> Result<StageFeatures<T>> {
    let (_, cc, ch, cw) = f_conv_raw.dim4("align_and_enhance conv map")?;
    let (_, sc, _, _) = f_ssm_raw.dim4("align_and_enhance ssm map")?;
    if cc != sc {
        return Err(Error::shape(format!(
            "align_and_enhance: channel mismatch conv {cc} vs ssm {sc}"
        )));
    }
    let f_ssm_up = bilinear_resize(f_ssm_raw, ch, cw)?;

    let f_conv = conv2d(f_conv_raw, &w.conv_w, Some(&w.conv_b), 1, 1, 1)?;

    let pooled = global_avg_pool(&f_ssm_up)?;
    let hidden = relu(&linear(&pooled, &w.se_fc1_w, Some(&w.se_fc1_b))?);
    let att = sigmoid(&linear(&hidden, &w.se_fc2_w, Some(&w.se_fc2_b))?);
    let f_ssm = mul_channels(&f_ssm_up, &att)?;

    let f_fused = add(&f_ssm, &f_conv)?;
    f_fused.validate_finite("fused stage features")?;
    Ok(StageFeatures { f_conv, f_ssm, f_fused, scale_denom })
}

/// Two spatial Mamba blocks back to back; the downsampling that opens a
/// stage (patch embed or merge) happens in `encode`.
pub fn mamba_stage<T: Element>(
    f: &Tensor<T>,
    blocks: &[SmbWeights<T>; 2],
    cfg: &ModelConfig,
    stage: usize,
) -> Result<Tensor<T>> {
    let smb_cfg = cfg.smb_config(stage);
    let t = smb_forward(f, &blocks[0], &smb_cfg)?;
    smb_forward(&t, &blocks[1], &smb_cfg)
}

#[derive(Clone, Debug)]
pub struct EncoderWeights<T: Element> {
    pub conv_stages: [ConvStageWeights<T>; 4],
    pub patch_embed: PatchEmbedWeights<T>,
    pub patch_merges: [PatchMergeWeights<T>; 3],
    pub smbs: [[SmbWeights<T>; 2]; 4],
    pub enhance: [EnhanceWeights<T>; 4],
}

/// Runs both branches over a [B,3,H,W] image and fuses them per stage.
pub fn encode<T: Element>(
    img: &Tensor<T>,
    w: &EncoderWeights<T>,
    cfg: &ModelConfig,
) -> Result<[StageFeatures<T>; 4]> {
    let (_, c, h, wd) = img.dim4("encoder input")?;
    if c != 3 {
        return Err(Error::shape(format!("encoder input must be RGB, got {c} channels")));
    }
    if h % 32 != 0 || wd % 32 != 0 {
        return Err(Error::shape(format!(
            "encoder input extents must be divisible by 32, got {h}x{wd}"
        )));
    }

    let mut f_convs = Vec::with_capacity(4);
    let mut cur = img.clone();
    for stage_w in &w.conv_stages {
        cur = conv_stage(&cur, stage_w)?;
        f_convs.push(cur.clone());
    }

    let mut f_ssms = Vec::with_capacity(4);
    let mut m = patch_embed(img, &w.patch_embed)?;
    m = mamba_stage(&m, &w.smbs[0], cfg, 0)?;
    f_ssms.push(m.clone());
    for stage in 1..4 {
        m = patch_merge(&m, &w.patch_merges[stage - 1])?;
        m = mamba_stage(&m, &w.smbs[stage], cfg, stage)?;
        f_ssms.push(m.clone());
    }

    let mut out = Vec::with_capacity(4);
    for i in 0..4 {
        out.push(align_and_enhance(
            &f_ssms[i],
            &f_convs[i],
            &w.enhance[i],
            2 << i,
        )?);
    }
    match out.try_into() {
        Ok(arr) => Ok(arr),
        Err(_) => unreachable!(),
    }
}

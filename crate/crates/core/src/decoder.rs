//! Decoder: walks the encoder pyramid coarse to fine. Each step upsamples
//! the running map to the next finer stage, concatenates that stage's fused
//! features, and mixes them with two conv+affine+ReLU blocks. A final
//! bilinear resize to the input resolution and a 1x1 head produce per-pixel
//! class probabilities.

use crate::encoder::StageFeatures;
use crate::error::{Error, Result};
use crate::tensor::{
    bilinear_resize, channel_affine, concat_channels, conv2d, linear_channels, relu,
    softmax_channel, Element, Tensor,
};

/// One refinement step's weights: two 3x3 same-padding convolutions, each
/// followed by a per-channel affine (a norm layer folded to eval form).
#[derive(Clone, Debug)]
pub struct DecoderStageWeights<T: Element> {
    pub conv1_w: Tensor<T>, // [Cout, Cin, 3, 3]
    pub conv1_b: Tensor<T>,
    pub aff1_gain: Tensor<T>,
    pub aff1_offset: Tensor<T>,
    pub conv2_w: Tensor<T>, // [Cout, Cout, 3, 3]
    pub conv2_b: Tensor<T>,
    pub aff2_gain: Tensor<T>,
    pub aff2_offset: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct DecoderWeights<T: Element> {
    /// Refinement steps in application order: stage 4+3, then +2, then +1.
    pub stages: [DecoderStageWeights<T>; 3],
    pub head_w: Tensor<T>, // [2, C1]
    pub head_b: Tensor<T>, // [2]
}

fn conv_block<T: Element>(x: &Tensor<T>, w: &DecoderStageWeights<T>) -> Result<Tensor<T>> {
    let t = conv2d(x, &w.conv1_w, Some(&w.conv1_b), 1, 1, 1)?;
    let t = relu(&channel_affine(&t, &w.aff1_gain, &w.aff1_offset)?);
    let t = conv2d(&t, &w.conv2_w, Some(&w.conv2_b), 1, 1, 1)?;
    Ok(relu(&channel_affine(&t, &w.aff2_gain, &w.aff2_offset)?))
}

/// Decodes fused encoder stages into a [B,2,out_h,out_w] probability map.
/// Channel 0 scores background, channel 1 the positive class; the two sum
/// to one at every pixel.
pub fn decode<T: Element>(
    stages: &[StageFeatures<T>; 4],
    w: &DecoderWeights<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::domain("decode: output extents must be positive"));
    }
    let mut f = stages[3].f_fused.clone();
    for (step, stage_w) in w.stages.iter().enumerate() {
        let finer = &stages[2 - step].f_fused;
        let (_, _, th, tw) = finer.dim4("decoder skip features")?;
        let up = bilinear_resize(&f, th, tw)?;
        let cat = concat_channels(&[&up, finer])?;
        f = conv_block(&cat, stage_w)?;
    }
    let full = bilinear_resize(&f, out_h, out_w)?;
    let logits = linear_channels(&full, &w.head_w, Some(&w.head_b))?;
    let y = softmax_channel(&logits)?;
    y.validate_finite("decoder output")?;
    Ok(y)
}

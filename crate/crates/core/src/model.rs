//! Whole-model assembly: configuration, seeded weight initialization, the
//! checkpoint name mapping, and image/scene inference entry points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::HashMap;

use crate::data::checkpoint::TensorEntry;
use crate::data::{decode_mask, plan_tiles, split_scene, stitch_predictions, MaskImage, SceneImage};
use crate::decoder::{decode, DecoderStageWeights, DecoderWeights};
use crate::encoder::{encode, ConvStageWeights, EncoderWeights, EnhanceWeights, StageFeatures};
use crate::error::{Error, Result};
use crate::smb::{DirectionHeads, PatchEmbedWeights, PatchMergeWeights, SmbConfig, SmbWeights};
use crate::scan::ScAttnWeights;
use crate::tensor::{Element, Tensor};

/// Architecture hyperparameters. Channel widths double per stage from
/// `base_channels`; every selective-scan branch shares `state_dim` and the
/// `expansion` factor; `window` sets the local scan orders' window side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub state_dim: usize,
    pub window: usize,
    pub expansion: usize,
    /// Block length of the chunked scan; purely an execution knob.
    pub scan_block: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { base_channels: 16, state_dim: 16, window: 2, expansion: 2, scan_block: 64 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 4 || !self.base_channels.is_multiple_of(4) {
            return Err(Error::domain(format!(
                "base_channels must be a positive multiple of 4, got {}",
                self.base_channels
            )));
        }
        if self.state_dim == 0 || self.window == 0 || self.expansion == 0 || self.scan_block == 0 {
            return Err(Error::domain(
                "state_dim, window, expansion and scan_block must be positive",
            ));
        }
        Ok(())
    }

    pub fn stage_channels(&self) -> [usize; 4] {
        let c = self.base_channels;
        [c, 2 * c, 4 * c, 8 * c]
    }

    pub fn smb_config(&self, stage: usize) -> SmbConfig {
        let c = self.stage_channels()[stage];
        SmbConfig::with_default_directions(
            c,
            self.expansion * c,
            self.state_dim,
            self.window,
            false,
            self.scan_block,
        )
    }
}

#[derive(Clone, Debug)]
pub struct ModelWeights<T: Element> {
    pub encoder: EncoderWeights<T>,
    pub decoder: DecoderWeights<T>,
}

// All random draws happen in f64 and are narrowed afterwards, so a seed
// names the same weights in every precision.
struct Init {
    rng: ChaCha20Rng,
}

impl Init {
    fn xavier<T: Element>(&mut self, dims: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut t = Tensor::zeros(dims);
        for v in t.data_mut() {
            *v = T::from_f64(self.rng.random_range(-bound..bound));
        }
        t
    }

    fn conv<T: Element>(&mut self, o: usize, i: usize, k: usize) -> Tensor<T> {
        self.xavier(&[o, i, k, k], i * k * k, o * k * k)
    }

    fn lin<T: Element>(&mut self, o: usize, i: usize) -> Tensor<T> {
        self.xavier(&[o, i], i, o)
    }

    // Step-size biases start the softplus output log-uniform in [0.01, 0.1].
    fn delta_bias<T: Element>(&mut self, e: usize) -> Tensor<T> {
        let (lo, hi) = (0.01f64.ln(), 0.1f64.ln());
        let mut t = Tensor::zeros(&[e]);
        for v in t.data_mut() {
            let dt = self.rng.random_range(lo..hi).exp();
            *v = T::from_f64((dt.exp() - 1.0).ln());
        }
        t
    }

    fn smb<T: Element>(&mut self, c: usize, e: usize, n: usize) -> SmbWeights<T> {
        let heads = std::array::from_fn(|_| DirectionHeads {
            delta_w: self.lin(e, e),
            delta_b: self.delta_bias(e),
            b_w: self.lin(n, e),
            b_b: Tensor::zeros(&[n]),
            c_w: self.lin(n, e),
            c_b: Tensor::zeros(&[n]),
        });
        SmbWeights {
            pre_norm_gain: Tensor::full(&[c], T::one()),
            pre_norm_offset: Tensor::zeros(&[c]),
            in_proj_w: self.lin(2 * e, c),
            in_proj_b: Tensor::zeros(&[2 * e]),
            dw_conv_w: self.xavier(&[e, 1, 3, 3], 9, 9),
            dw_conv_b: Tensor::zeros(&[e]),
            heads,
            a: Tensor::from_fn(&[e, n], |i| T::from_f64(-(((i % n) + 1) as f64))),
            scattn: ScAttnWeights {
                ch_fc1_w: self.lin(e, 4 * e),
                ch_fc1_b: Tensor::zeros(&[e]),
                ch_fc2_w: self.lin(4 * e, e),
                ch_fc2_b: Tensor::zeros(&[4 * e]),
                sp_conv_w: self.xavier(&[1, 1, 3, 3], 9, 9),
                sp_conv_b: Tensor::zeros(&[1]),
                merge_w: self.lin(e, 4 * e),
                merge_b: Tensor::zeros(&[e]),
            },
            out_proj_w: self.lin(c, e),
            out_proj_b: Tensor::zeros(&[c]),
            post_norm_gain: Tensor::full(&[c], T::one()),
            post_norm_offset: Tensor::zeros(&[c]),
            res_gate: T::one(),
        }
    }
}

/// Builds a full weight set from a seed. The draw order is fixed, so one
/// seed names one model, bit for bit, run after run.
pub fn init_weights<T: Element>(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights<T>> {
    cfg.validate()?;
    let ch = cfg.stage_channels();
    let n = cfg.state_dim;
    let mut init = Init { rng: ChaCha20Rng::seed_from_u64(seed) };

    let ins = [3, ch[0], ch[1], ch[2]];
    let conv_stages: [ConvStageWeights<T>; 4] = std::array::from_fn(|s| ConvStageWeights {
        conv1_w: init.conv(ch[s], ins[s], 3),
        conv1_b: Tensor::zeros(&[ch[s]]),
        conv2_w: init.conv(ch[s], ch[s], 3),
        conv2_b: Tensor::zeros(&[ch[s]]),
    });

    let patch_embed = PatchEmbedWeights {
        w: init.xavier(&[ch[0], 3, 4, 4], 3 * 16, ch[0] * 16),
        b: Tensor::zeros(&[ch[0]]),
    };
    let patch_merges: [PatchMergeWeights<T>; 3] = std::array::from_fn(|i| PatchMergeWeights {
        w: init.lin(ch[i + 1], 4 * ch[i]),
        b: Tensor::zeros(&[ch[i + 1]]),
    });
    let smbs: [[SmbWeights<T>; 2]; 4] = std::array::from_fn(|s| {
        let e = cfg.expansion * ch[s];
        std::array::from_fn(|_| init.smb(ch[s], e, n))
    });
    let enhance: [EnhanceWeights<T>; 4] = std::array::from_fn(|s| {
        let c = ch[s];
        EnhanceWeights {
            conv_w: init.conv(c, c, 3),
            conv_b: Tensor::zeros(&[c]),
            se_fc1_w: init.lin(c / 4, c),
            se_fc1_b: Tensor::zeros(&[c / 4]),
            se_fc2_w: init.lin(c, c / 4),
            se_fc2_b: Tensor::zeros(&[c]),
        }
    });

    let dec_stage = |init: &mut Init, cin: usize, cout: usize| DecoderStageWeights {
        conv1_w: init.conv(cout, cin, 3),
        conv1_b: Tensor::zeros(&[cout]),
        aff1_gain: Tensor::full(&[cout], T::one()),
        aff1_offset: Tensor::zeros(&[cout]),
        conv2_w: init.conv(cout, cout, 3),
        conv2_b: Tensor::zeros(&[cout]),
        aff2_gain: Tensor::full(&[cout], T::one()),
        aff2_offset: Tensor::zeros(&[cout]),
    };
    let stages = [
        dec_stage(&mut init, ch[3] + ch[2], ch[2]),
        dec_stage(&mut init, ch[2] + ch[1], ch[1]),
        dec_stage(&mut init, ch[1] + ch[0], ch[0]),
    ];
    let decoder = DecoderWeights {
        stages,
        head_w: init.lin(2, ch[0]),
        head_b: Tensor::zeros(&[2]),
    };

    Ok(ModelWeights {
        encoder: EncoderWeights { conv_stages, patch_embed, patch_merges, smbs, enhance },
        decoder,
    })
}

fn push<T: Element>(out: &mut Vec<TensorEntry>, name: String, t: &Tensor<T>) {
    out.push(TensorEntry {
        name,
        dims: t.dims().to_vec(),
        data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
    });
}

/// Flattens the weights into named checkpoint entries. Values narrow to f32
/// on the way out regardless of the in-memory precision.
pub fn to_entries<T: Element>(w: &ModelWeights<T>) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    for (s, cs) in w.encoder.conv_stages.iter().enumerate() {
        push(&mut out, format!("enc.conv{s}.conv1_w"), &cs.conv1_w);
        push(&mut out, format!("enc.conv{s}.conv1_b"), &cs.conv1_b);
        push(&mut out, format!("enc.conv{s}.conv2_w"), &cs.conv2_w);
        push(&mut out, format!("enc.conv{s}.conv2_b"), &cs.conv2_b);
    }
    push(&mut out, "enc.embed.w".into(), &w.encoder.patch_embed.w);
    push(&mut out, "enc.embed.b".into(), &w.encoder.patch_embed.b);
    for (s, pm) in w.encoder.patch_merges.iter().enumerate() {
        push(&mut out, format!("enc.merge{s}.w"), &pm.w);
        push(&mut out, format!("enc.merge{s}.b"), &pm.b);
    }
    for (s, pair) in w.encoder.smbs.iter().enumerate() {
        for (b, smb) in pair.iter().enumerate() {
            let p = format!("enc.smb{s}{b}");
            push(&mut out, format!("{p}.pre_norm_g"), &smb.pre_norm_gain);
            push(&mut out, format!("{p}.pre_norm_o"), &smb.pre_norm_offset);
            push(&mut out, format!("{p}.in_proj_w"), &smb.in_proj_w);
            push(&mut out, format!("{p}.in_proj_b"), &smb.in_proj_b);
            push(&mut out, format!("{p}.dw_w"), &smb.dw_conv_w);
            push(&mut out, format!("{p}.dw_b"), &smb.dw_conv_b);
            for (d, h) in smb.heads.iter().enumerate() {
                push(&mut out, format!("{p}.dir{d}.delta_w"), &h.delta_w);
                push(&mut out, format!("{p}.dir{d}.delta_b"), &h.delta_b);
                push(&mut out, format!("{p}.dir{d}.b_w"), &h.b_w);
                push(&mut out, format!("{p}.dir{d}.b_b"), &h.b_b);
                push(&mut out, format!("{p}.dir{d}.c_w"), &h.c_w);
                push(&mut out, format!("{p}.dir{d}.c_b"), &h.c_b);
            }
            push(&mut out, format!("{p}.a"), &smb.a);
            push(&mut out, format!("{p}.attn.ch1_w"), &smb.scattn.ch_fc1_w);
            push(&mut out, format!("{p}.attn.ch1_b"), &smb.scattn.ch_fc1_b);
            push(&mut out, format!("{p}.attn.ch2_w"), &smb.scattn.ch_fc2_w);
            push(&mut out, format!("{p}.attn.ch2_b"), &smb.scattn.ch_fc2_b);
            push(&mut out, format!("{p}.attn.sp_w"), &smb.scattn.sp_conv_w);
            push(&mut out, format!("{p}.attn.sp_b"), &smb.scattn.sp_conv_b);
            push(&mut out, format!("{p}.attn.merge_w"), &smb.scattn.merge_w);
            push(&mut out, format!("{p}.attn.merge_b"), &smb.scattn.merge_b);
            push(&mut out, format!("{p}.out_w"), &smb.out_proj_w);
            push(&mut out, format!("{p}.out_b"), &smb.out_proj_b);
            push(&mut out, format!("{p}.post_norm_g"), &smb.post_norm_gain);
            push(&mut out, format!("{p}.post_norm_o"), &smb.post_norm_offset);
            out.push(TensorEntry {
                name: format!("{p}.res_gate"),
                dims: vec![],
                data: vec![smb.res_gate.as_f64() as f32],
            });
        }
    }
    for (s, e) in w.encoder.enhance.iter().enumerate() {
        let p = format!("enc.enh{s}");
        push(&mut out, format!("{p}.conv_w"), &e.conv_w);
        push(&mut out, format!("{p}.conv_b"), &e.conv_b);
        push(&mut out, format!("{p}.se1_w"), &e.se_fc1_w);
        push(&mut out, format!("{p}.se1_b"), &e.se_fc1_b);
        push(&mut out, format!("{p}.se2_w"), &e.se_fc2_w);
        push(&mut out, format!("{p}.se2_b"), &e.se_fc2_b);
    }
    for (s, d) in w.decoder.stages.iter().enumerate() {
        let p = format!("dec.stage{s}");
        push(&mut out, format!("{p}.conv1_w"), &d.conv1_w);
        push(&mut out, format!("{p}.conv1_b"), &d.conv1_b);
        push(&mut out, format!("{p}.aff1_g"), &d.aff1_gain);
        push(&mut out, format!("{p}.aff1_o"), &d.aff1_offset);
        push(&mut out, format!("{p}.conv2_w"), &d.conv2_w);
        push(&mut out, format!("{p}.conv2_b"), &d.conv2_b);
        push(&mut out, format!("{p}.aff2_g"), &d.aff2_gain);
        push(&mut out, format!("{p}.aff2_o"), &d.aff2_offset);
    }
    push(&mut out, "dec.head_w".into(), &w.decoder.head_w);
    push(&mut out, "dec.head_b".into(), &w.decoder.head_b);
    out
}

struct Fetch {
    map: HashMap<String, TensorEntry>,
}

impl Fetch {
    fn t<T: Element>(&mut self, name: String, dims: &[usize]) -> Result<Tensor<T>> {
        let e = self
            .map
            .remove(&name)
            .ok_or_else(|| Error::shape(format!("checkpoint is missing tensor '{name}'")))?;
        if e.dims != dims {
            return Err(Error::shape(format!(
                "tensor '{name}' has dims {:?}, the configured model wants {:?}",
                e.dims, dims
            )));
        }
        let data = e.data.iter().map(|&v| T::from_f64(v as f64)).collect();
        Tensor::new(dims.to_vec(), data)
    }

    // Scalars are stored as rank-0 entries holding exactly one value.
    fn scalar<T: Element>(&mut self, name: String) -> Result<T> {
        let e = self
            .map
            .remove(&name)
            .ok_or_else(|| Error::shape(format!("checkpoint is missing scalar '{name}'")))?;
        if !e.dims.is_empty() || e.data.len() != 1 {
            return Err(Error::shape(format!(
                "entry '{name}' should be a scalar, has dims {:?}",
                e.dims
            )));
        }
        Ok(T::from_f64(e.data[0] as f64))
    }
}

/// Rebuilds typed weights from checkpoint entries, checking every tensor
/// against the configured architecture.
pub fn from_entries<T: Element>(entries: Vec<TensorEntry>, cfg: &ModelConfig) -> Result<ModelWeights<T>> {
    cfg.validate()?;
    let ch = cfg.stage_channels();
    let n = cfg.state_dim;
    let mut f = Fetch { map: HashMap::new() };
    for e in entries {
        let name = e.name.clone();
        if f.map.insert(name.clone(), e).is_some() {
            return Err(Error::shape(format!("checkpoint names tensor '{name}' twice")));
        }
    }

    let mut conv_stages = Vec::with_capacity(4);
    let mut prev = 3;
    for (s, &c) in ch.iter().enumerate() {
        conv_stages.push(ConvStageWeights {
            conv1_w: f.t(format!("enc.conv{s}.conv1_w"), &[c, prev, 3, 3])?,
            conv1_b: f.t(format!("enc.conv{s}.conv1_b"), &[c])?,
            conv2_w: f.t(format!("enc.conv{s}.conv2_w"), &[c, c, 3, 3])?,
            conv2_b: f.t(format!("enc.conv{s}.conv2_b"), &[c])?,
        });
        prev = c;
    }
    let patch_embed = PatchEmbedWeights {
        w: f.t("enc.embed.w".into(), &[ch[0], 3, 4, 4])?,
        b: f.t("enc.embed.b".into(), &[ch[0]])?,
    };
    let mut patch_merges = Vec::with_capacity(3);
    for s in 0..3 {
        patch_merges.push(PatchMergeWeights {
            w: f.t(format!("enc.merge{s}.w"), &[ch[s + 1], 4 * ch[s]])?,
            b: f.t(format!("enc.merge{s}.b"), &[ch[s + 1]])?,
        });
    }
    let mut smbs = Vec::with_capacity(4);
    for (s, &c) in ch.iter().enumerate() {
        let e = cfg.expansion * c;
        let mut pair = Vec::with_capacity(2);
        for b in 0..2 {
            let p = format!("enc.smb{s}{b}");
            let mut heads = Vec::with_capacity(4);
            for d in 0..4 {
                heads.push(DirectionHeads {
                    delta_w: f.t(format!("{p}.dir{d}.delta_w"), &[e, e])?,
                    delta_b: f.t(format!("{p}.dir{d}.delta_b"), &[e])?,
                    b_w: f.t(format!("{p}.dir{d}.b_w"), &[n, e])?,
                    b_b: f.t(format!("{p}.dir{d}.b_b"), &[n])?,
                    c_w: f.t(format!("{p}.dir{d}.c_w"), &[n, e])?,
                    c_b: f.t(format!("{p}.dir{d}.c_b"), &[n])?,
                });
            }
            let heads: [DirectionHeads<T>; 4] = match heads.try_into() {
                Ok(h) => h,
                Err(_) => unreachable!(),
            };
            pair.push(SmbWeights {
                pre_norm_gain: f.t(format!("{p}.pre_norm_g"), &[c])?,
                pre_norm_offset: f.t(format!("{p}.pre_norm_o"), &[c])?,
                in_proj_w: f.t(format!("{p}.in_proj_w"), &[2 * e, c])?,
                in_proj_b: f.t(format!("{p}.in_proj_b"), &[2 * e])?,
                dw_conv_w: f.t(format!("{p}.dw_w"), &[e, 1, 3, 3])?,
                dw_conv_b: f.t(format!("{p}.dw_b"), &[e])?,
                heads,
                a: f.t(format!("{p}.a"), &[e, n])?,
                scattn: ScAttnWeights {
                    ch_fc1_w: f.t(format!("{p}.attn.ch1_w"), &[e, 4 * e])?,
                    ch_fc1_b: f.t(format!("{p}.attn.ch1_b"), &[e])?,
                    ch_fc2_w: f.t(format!("{p}.attn.ch2_w"), &[4 * e, e])?,
                    ch_fc2_b: f.t(format!("{p}.attn.ch2_b"), &[4 * e])?,
                    sp_conv_w: f.t(format!("{p}.attn.sp_w"), &[1, 1, 3, 3])?,
                    sp_conv_b: f.t(format!("{p}.attn.sp_b"), &[1])?,
                    merge_w: f.t(format!("{p}.attn.merge_w"), &[e, 4 * e])?,
                    merge_b: f.t(format!("{p}.attn.merge_b"), &[e])?,
                },
                out_proj_w: f.t(format!("{p}.out_w"), &[c, e])?,
                out_proj_b: f.t(format!("{p}.out_b"), &[c])?,
                post_norm_gain: f.t(format!("{p}.post_norm_g"), &[c])?,
                post_norm_offset: f.t(format!("{p}.post_norm_o"), &[c])?,
                res_gate: f.scalar(format!("{p}.res_gate"))?,
            });
        }
        let pair: [SmbWeights<T>; 2] = match pair.try_into() {
            Ok(p) => p,
            Err(_) => unreachable!(),
        };
        smbs.push(pair);
    }
    let mut enhance = Vec::with_capacity(4);
    for (s, &c) in ch.iter().enumerate() {
        let p = format!("enc.enh{s}");
        enhance.push(EnhanceWeights {
            conv_w: f.t(format!("{p}.conv_w"), &[c, c, 3, 3])?,
            conv_b: f.t(format!("{p}.conv_b"), &[c])?,
            se_fc1_w: f.t(format!("{p}.se1_w"), &[c / 4, c])?,
            se_fc1_b: f.t(format!("{p}.se1_b"), &[c / 4])?,
            se_fc2_w: f.t(format!("{p}.se2_w"), &[c, c / 4])?,
            se_fc2_b: f.t(format!("{p}.se2_b"), &[c])?,
        });
    }
    let mut dec_stages = Vec::with_capacity(3);
    for (s, (cin, cout)) in
        [(ch[3] + ch[2], ch[2]), (ch[2] + ch[1], ch[1]), (ch[1] + ch[0], ch[0])].iter().enumerate()
    {
        let p = format!("dec.stage{s}");
        dec_stages.push(DecoderStageWeights {
            conv1_w: f.t(format!("{p}.conv1_w"), &[*cout, *cin, 3, 3])?,
            conv1_b: f.t(format!("{p}.conv1_b"), &[*cout])?,
            aff1_gain: f.t(format!("{p}.aff1_g"), &[*cout])?,
            aff1_offset: f.t(format!("{p}.aff1_o"), &[*cout])?,
            conv2_w: f.t(format!("{p}.conv2_w"), &[*cout, *cout, 3, 3])?,
            conv2_b: f.t(format!("{p}.conv2_b"), &[*cout])?,
            aff2_gain: f.t(format!("{p}.aff2_g"), &[*cout])?,
            aff2_offset: f.t(format!("{p}.aff2_o"), &[*cout])?,
        });
    }
    let decoder = DecoderWeights {
        stages: match dec_stages.try_into() {
            Ok(s) => s,
            Err(_) => unreachable!(),
        },
        head_w: f.t("dec.head_w".into(), &[2, ch[0]])?,
        head_b: f.t("dec.head_b".into(), &[2])?,
    };

    if let Some(name) = f.map.keys().next() {
        return Err(Error::shape(format!(
            "checkpoint carries unknown tensor '{name}' ({} extra in total)",
            f.map.len()
        )));
    }
    Ok(ModelWeights {
        encoder: EncoderWeights {
            conv_stages: match conv_stages.try_into() {
                Ok(c) => c,
                Err(_) => unreachable!(),
            },
            patch_embed,
            patch_merges: match patch_merges.try_into() {
                Ok(m) => m,
                Err(_) => unreachable!(),
            },
            smbs: match smbs.try_into() {
                Ok(s) => s,
                Err(_) => unreachable!(),
            },
            enhance: match enhance.try_into() {
                Ok(e) => e,
                Err(_) => unreachable!(),
            },
        },
        decoder,
    })
}

/// Full forward pass over a [B,3,H,W] batch; H and W must be divisible by
/// 32. Returns [B,2,H,W] per-pixel probabilities.
pub fn forward<T: Element>(
    img: &Tensor<T>,
    w: &ModelWeights<T>,
    cfg: &ModelConfig,
) -> Result<Tensor<T>> {
    let (_, _, h, wd) = img.dim4("model input")?;
    let stages = encode(img, &w.encoder, cfg)?;
    decode(&stages, &w.decoder, h, wd)
}

/// Encoder stages of a single image, for callers that want the pyramid.
pub fn forward_stages<T: Element>(
    img: &Tensor<T>,
    w: &ModelWeights<T>,
    cfg: &ModelConfig,
) -> Result<[StageFeatures<T>; 4]> {
    encode(img, &w.encoder, cfg)
}

/// Segments one image. Returns the hard mask and the [2,H,W] probabilities.
pub fn infer_image<T: Element>(
    img: &SceneImage,
    w: &ModelWeights<T>,
    cfg: &ModelConfig,
) -> Result<(MaskImage, Tensor<T>)> {
    let x = img.to_tensor::<T>();
    let y = forward(&x, w, cfg)?;
    let (h, wd) = (img.height(), img.width());
    let probs = y.reshape(vec![2, h, wd])?;
    let mask = decode_mask(&probs)?;
    Ok((mask, probs))
}

/// Segments a scene larger than one tile: plans an overlapping tile grid,
/// runs every tile through the model, and stitches the probabilities.
pub fn infer_scene<T: Element>(
    scene: &SceneImage,
    w: &ModelWeights<T>,
    cfg: &ModelConfig,
    tile: usize,
    nx: usize,
    ny: usize,
) -> Result<(MaskImage, Tensor<T>)> {
    let grid = plan_tiles(scene.width(), scene.height(), tile, nx, ny)?;
    let crops = split_scene(scene, &grid)?;
    let mut preds = Vec::with_capacity(crops.len());
    for crop in &crops {
        let (_, probs) = infer_image(crop, w, cfg)?;
        preds.push(probs);
    }
    let stitched = stitch_predictions(&preds, &grid, scene.width(), scene.height())?;
    let mask = decode_mask(&stitched)?;
    Ok((mask, stitched))
}

//! Training losses over soft predictions and evaluation metrics over hard
//! masks. All reductions accumulate in f64 regardless of the tensor element
//! type so large images do not lose low-order bits.

use crate::data::{MaskClass, MaskImage};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Floor applied inside logarithms so empty predicted mass stays finite.
pub const LOG_CLAMP: f64 = 1e-12;

/// Mixing weights of the total loss. Both must be non-negative.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda1: 0.5, lambda2: 0.5 }
    }
}

impl LossWeights {
    // negated comparisons so NaN weights fail validation too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(Error::domain(format!(
                "loss weights must be non-negative, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

fn check_pair<T: Element>(y: &Tensor<T>, t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    let (b, c, h, w) = y.dim4(what)?;
    if c != 2 {
        return Err(Error::shape(format!("{what}: expected 2 channels, got {c}")));
    }
    t.expect_dims(y.dims(), what)?;
    Ok((b, h * w))
}

// Targets must be an exact one-hot field: every value 0 or 1, channels
// summing to 1 at each pixel.
fn check_one_hot<T: Element>(t: &Tensor<T>, batch: usize, pixels: usize) -> Result<()> {
    let d = t.data();
    for b in 0..batch {
        let base = b * 2 * pixels;
        for p in 0..pixels {
            let t0 = d[base + p].as_f64();
            let t1 = d[base + pixels + p].as_f64();
            let binary = |v: f64| v == 0.0 || v == 1.0;
            if !binary(t0) || !binary(t1) || t0 + t1 != 1.0 {
                return Err(Error::domain(format!(
                    "target is not one-hot at batch {b} pixel {p}: ({t0}, {t1})"
                )));
            }
        }
    }
    Ok(())
}

/// Cross-entropy between a [B,2,H,W] probability field and a one-hot target,
/// averaged over pixels.
pub fn ce_loss<T: Element>(y: &Tensor<T>, t: &Tensor<T>) -> Result<f64> {
    let (batch, pixels) = check_pair(y, t, "ce_loss")?;
    check_one_hot(t, batch, pixels)?;
    let yd = y.data();
    let td = t.data();
    let mut acc = 0.0f64;
    for i in 0..yd.len() {
        let tv = td[i].as_f64();
        if tv != 0.0 {
            let p = yd[i].as_f64().clamp(LOG_CLAMP, 1.0);
            acc -= tv * p.ln();
        }
    }
    Ok(acc / (batch * pixels) as f64)
}

// Intersection and union mass of one soft channel against its binary target.
fn soft_iou_sums<T: Element>(y: &[T], t: &[T]) -> Result<(f64, f64)> {
    let mut inter = 0.0f64;
    let mut sum_t = 0.0f64;
    let mut sum_y = 0.0f64;
    for (yv, tv) in y.iter().zip(t) {
        let yf = yv.as_f64();
        let tf = tv.as_f64();
        if !(0.0..=1.0).contains(&yf) {
            return Err(Error::domain(format!("soft prediction {yf} outside [0, 1]")));
        }
        inter += yf * tf;
        sum_t += tf;
        sum_y += yf;
    }
    Ok((inter, sum_t + sum_y - inter))
}

fn iou_term(inter: f64, union: f64, what: &str) -> f64 {
    if union == 0.0 {
        log::warn!("{what}: prediction and target are both empty, scoring 0 loss");
        0.0
    } else {
        1.0 - inter / union
    }
}

/// Soft intersection-over-union loss of a single [H,W] channel against a
/// binary target of the same shape. Degenerate all-empty pairs score 0.
pub fn iou_loss<T: Element>(y: &Tensor<T>, t: &Tensor<T>) -> Result<f64> {
    if y.rank() != 2 {
        return Err(Error::shape(format!("iou_loss expects [H,W], got {:?}", y.dims())));
    }
    t.expect_dims(y.dims(), "iou_loss target")?;
    for v in t.data() {
        let tv = v.as_f64();
        if tv != 0.0 && tv != 1.0 {
            return Err(Error::domain(format!("iou_loss target value {tv} is not binary")));
        }
    }
    let (inter, union) = soft_iou_sums(y.data(), t.data())?;
    Ok(iou_term(inter, union, "iou_loss"))
}

/// Mean of the per-class soft IoU losses over a [B,2,H,W] batch; sums pool
/// all batch elements of a class before the ratio is taken.
pub fn miou_loss<T: Element>(y: &Tensor<T>, t: &Tensor<T>) -> Result<f64> {
    let (batch, pixels) = check_pair(y, t, "miou_loss")?;
    check_one_hot(t, batch, pixels)?;
    let mut acc = 0.0f64;
    for ch in 0..2 {
        let mut inter = 0.0f64;
        let mut union = 0.0f64;
        for b in 0..batch {
            let base = (b * 2 + ch) * pixels;
            let (i, u) =
                soft_iou_sums(&y.data()[base..base + pixels], &t.data()[base..base + pixels])?;
            inter += i;
            union += u;
        }
        acc += iou_term(inter, union, "miou_loss");
    }
    Ok(acc / 2.0)
}

/// Weighted sum of cross-entropy and mean soft IoU loss.
pub fn total_loss<T: Element>(y: &Tensor<T>, t: &Tensor<T>, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.lambda1 * ce_loss(y, t)? + w.lambda2 * miou_loss(y, t)?)
}

/// Per-class and overall segmentation quality, all in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub iou_blk: f64,
    pub iou_mat: f64,
    pub miou: f64,
    pub f1_blk: f64,
    pub f1_mat: f64,
    pub mean_f1: f64,
    pub acc: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "IoU_blk,IoU_mat,mIoU,F1_blk,F1_mat,mean_F1,ACC";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.iou_blk, self.iou_mat, self.miou, self.f1_blk, self.f1_mat, self.mean_f1, self.acc
        )
    }
}

// Ratio in percent; a vacuous denominator means the class is absent from
// both masks and counts as perfect.
fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Confusion-count metrics of a predicted mask against ground truth.
pub fn evaluate(pred: &MaskImage, gt: &MaskImage) -> Result<MetricsReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::shape(format!(
            "evaluate: mask sizes differ, {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut tp = [0u64; 2];
    let mut fp = [0u64; 2];
    let mut fneg = [0u64; 2];
    for (p, g) in pred.labels().iter().zip(gt.labels()) {
        for (ci, class) in [MaskClass::Blk, MaskClass::Mat].into_iter().enumerate() {
            match (*p == class, *g == class) {
                (true, true) => tp[ci] += 1,
                (true, false) => fp[ci] += 1,
                (false, true) => fneg[ci] += 1,
                (false, false) => {}
            }
        }
    }
    let iou_blk = pct(tp[0], tp[0] + fp[0] + fneg[0]);
    let iou_mat = pct(tp[1], tp[1] + fp[1] + fneg[1]);
    let f1_blk = pct(2 * tp[0], 2 * tp[0] + fp[0] + fneg[0]);
    let f1_mat = pct(2 * tp[1], 2 * tp[1] + fp[1] + fneg[1]);
    let total = pred.labels().len() as u64;
    Ok(MetricsReport {
        iou_blk,
        iou_mat,
        miou: 0.5 * (iou_blk + iou_mat),
        f1_blk,
        f1_mat,
        mean_f1: 0.5 * (f1_blk + f1_mat),
        acc: pct(tp[0] + tp[1], total),
    })
}

//! On-disk data handling: 8-bit image buffers, binary masks, scene tiling,
//! the rectangle-mixing augmentation, and the weight checkpoint format.

pub mod checkpoint;
pub mod netpbm;
mod tiling;

pub use tiling::{plan_tiles, split_scene, stitch_predictions, TileGrid};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneImage {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

/// Single-channel 8-bit image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

/// The two segmentation classes: background and the positive material class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskClass {
    Blk,
    Mat,
}

/// Per-pixel hard labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    labels: Vec<MaskClass>,
}

fn check_len(len: usize, want: usize, what: &str) -> Result<()> {
    if len != want {
        return Err(Error::shape(format!("{what}: buffer holds {len} values, expected {want}")));
    }
    Ok(())
}

// Shared bounds check for rectangular crops.
fn check_crop(x: usize, y: usize, w: usize, h: usize, iw: usize, ih: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::domain("crop extents must be positive"));
    }
    if x + w > iw || y + h > ih {
        return Err(Error::shape(format!(
            "crop {w}x{h}+{x}+{y} exceeds the {iw}x{ih} image"
        )));
    }
    Ok(())
}

impl SceneImage {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        check_len(rgb.len(), width * height * 3, "SceneImage")?;
        Ok(SceneImage { width, height, rgb })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<SceneImage> {
        check_crop(x, y, w, h, self.width, self.height)?;
        let mut rgb = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            rgb.extend_from_slice(&self.rgb[start..start + w * 3]);
        }
        Ok(SceneImage { width: w, height: h, rgb })
    }

    /// [1,3,H,W] tensor with bytes scaled to [0, 1].
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let (w, h) = (self.width, self.height);
        Tensor::from_fn(&[1, 3, h, w], |i| {
            let ch = i / (w * h);
            let p = i % (w * h);
            T::from_f64(self.rgb[p * 3 + ch] as f64 / 255.0)
        })
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        check_len(pixels.len(), width * height, "GrayImage")?;
        Ok(GrayImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        check_crop(x, y, w, h, self.width, self.height)?;
        let mut pixels = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        Ok(GrayImage { width: w, height: h, pixels })
    }
}

impl MaskImage {
    pub fn new(width: usize, height: usize, labels: Vec<MaskClass>) -> Result<Self> {
        check_len(labels.len(), width * height, "MaskImage")?;
        Ok(MaskImage { width, height, labels })
    }

    /// Thresholds an 8-bit mask: values of 128 and above are the material
    /// class, everything below is background.
    pub fn from_gray(g: &GrayImage) -> MaskImage {
        let labels = g
            .pixels
            .iter()
            .map(|&v| if v >= 128 { MaskClass::Mat } else { MaskClass::Blk })
            .collect();
        MaskImage { width: g.width, height: g.height, labels }
    }

    pub fn to_gray(&self) -> GrayImage {
        let pixels = self
            .labels
            .iter()
            .map(|&c| if c == MaskClass::Mat { 255 } else { 0 })
            .collect();
        GrayImage { width: self.width, height: self.height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[MaskClass] {
        &self.labels
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<MaskImage> {
        check_crop(x, y, w, h, self.width, self.height)?;
        let mut labels = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            labels.extend_from_slice(&self.labels[start..start + w]);
        }
        Ok(MaskImage { width: w, height: h, labels })
    }
}

/// One-hot [2,H,W] tensor from a mask; channel 0 is background.
pub fn encode_mask<T: Element>(m: &MaskImage) -> Tensor<T> {
    let (w, h) = (m.width, m.height);
    Tensor::from_fn(&[2, h, w], |i| {
        let ch = i / (w * h);
        let label = m.labels[i % (w * h)];
        let hit = (ch == 1) == (label == MaskClass::Mat);
        T::from_f64(if hit { 1.0 } else { 0.0 })
    })
}

/// Argmax over a [2,H,W] probability field; exact ties go to background.
pub fn decode_mask<T: Element>(y: &Tensor<T>) -> Result<MaskImage> {
    if y.rank() != 3 || y.dims()[0] != 2 {
        return Err(Error::shape(format!("decode_mask expects [2,H,W], got {:?}", y.dims())));
    }
    let h = y.dims()[1];
    let w = y.dims()[2];
    let d = y.data();
    let labels = (0..w * h)
        .map(|p| {
            if d[w * h + p].as_f64() > d[p].as_f64() {
                MaskClass::Mat
            } else {
                MaskClass::Blk
            }
        })
        .collect();
    Ok(MaskImage { width: w, height: h, labels })
}

/// Axis-aligned pixel rectangle; empty extents are allowed and paste nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Pastes the rectangle of image/mask B over image/mask A. Returns the mixed
/// pair and the exact fraction of pasted pixels.
pub fn paste_region(
    img_a: &SceneImage,
    mask_a: &MaskImage,
    img_b: &SceneImage,
    mask_b: &MaskImage,
    rect: Rect,
) -> Result<(SceneImage, MaskImage, f64)> {
    let (w, h) = (img_a.width, img_a.height);
    if img_b.width != w
        || img_b.height != h
        || mask_a.width != w
        || mask_a.height != h
        || mask_b.width != w
        || mask_b.height != h
    {
        return Err(Error::shape("paste_region: images and masks must share one size"));
    }
    if rect.x + rect.w > w || rect.y + rect.h > h {
        return Err(Error::shape(format!(
            "paste_region: rectangle {}x{}+{}+{} exceeds the {w}x{h} frame",
            rect.w, rect.h, rect.x, rect.y
        )));
    }
    let mut img = img_a.clone();
    let mut mask = mask_a.clone();
    for row in rect.y..rect.y + rect.h {
        let a = (row * w + rect.x) * 3;
        let b = a + rect.w * 3;
        img.rgb[a..b].copy_from_slice(&img_b.rgb[a..b]);
        let a = row * w + rect.x;
        let b = a + rect.w;
        mask.labels[a..b].copy_from_slice(&mask_b.labels[a..b]);
    }
    let weight = (rect.w * rect.h) as f64 / (w * h) as f64;
    Ok((img, mask, weight))
}

/// Rectangle-mixing augmentation. Draws an area fraction r uniformly from
/// [0.1, 0.5], shapes a sqrt(r)-scaled rectangle at a uniform position, and
/// pastes that window of pair B over pair A. Deterministic per seed.
pub fn cutmix(
    img_a: &SceneImage,
    mask_a: &MaskImage,
    img_b: &SceneImage,
    mask_b: &MaskImage,
    seed: u64,
) -> Result<(SceneImage, MaskImage, f64)> {
    let (w, h) = (img_a.width, img_a.height);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let r: f64 = rng.random_range(0.1..0.5);
    let rw = ((w as f64 * r.sqrt()).round() as usize).clamp(1, w);
    let rh = ((h as f64 * r.sqrt()).round() as usize).clamp(1, h);
    let x = rng.random_range(0..=w - rw);
    let y = rng.random_range(0..=h - rh);
    paste_region(img_a, mask_a, img_b, mask_b, Rect { x, y, w: rw, h: rh })
}

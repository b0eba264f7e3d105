//! Fixed-count tiling of large scenes into square crops with overlap, and
//! the averaging stitch that reassembles per-tile probability maps.

use crate::data::SceneImage;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Tile anchor layout over one scene. Anchors are stored row-major: the
/// y coordinate varies slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub tile: usize,
    pub nx: usize,
    pub ny: usize,
    pub anchors: Vec<(usize, usize)>,
}

impl TileGrid {
    pub fn count(&self) -> usize {
        self.anchors.len()
    }
}

// Evenly spreads n anchor coordinates over [0, span - tile] by rounding.
fn axis_anchor(i: usize, span: usize, tile: usize, n: usize) -> usize {
    ((i * (span - tile)) as f64 / (n - 1) as f64).round() as usize
}

/// Plans an nx-by-ny grid of tile-sized crops covering a width-by-height
/// scene. The first anchor is (0, 0) and the last flushes the far corner;
/// interiors overlap whenever nx*tile exceeds the width (same for y).
pub fn plan_tiles(width: usize, height: usize, tile: usize, nx: usize, ny: usize) -> Result<TileGrid> {
    if tile == 0 || tile > width || tile > height {
        return Err(Error::domain(format!(
            "tile size {tile} does not fit a {width}x{height} scene"
        )));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::domain(format!("tile counts must be at least 2, got {nx}x{ny}")));
    }
    if nx * tile < width || ny * tile < height {
        return Err(Error::domain(format!(
            "{nx}x{ny} tiles of {tile} cannot cover {width}x{height}"
        )));
    }
    let mut anchors = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = axis_anchor(j, height, tile, ny);
        for i in 0..nx {
            anchors.push((axis_anchor(i, width, tile, nx), y));
        }
    }
    Ok(TileGrid { tile, nx, ny, anchors })
}

/// Crops every planned tile out of the scene, in anchor order.
pub fn split_scene(scene: &SceneImage, grid: &TileGrid) -> Result<Vec<SceneImage>> {
    grid.anchors
        .iter()
        .map(|&(x, y)| scene.crop(x, y, grid.tile, grid.tile))
        .collect()
}

/// Reassembles per-tile [2,tile,tile] probability maps into one [2,H,W]
/// field: overlapping predictions are averaged per pixel, then each pixel's
/// channels are renormalized to sum to one.
pub fn stitch_predictions<T: Element>(
    tiles: &[Tensor<T>],
    grid: &TileGrid,
    width: usize,
    height: usize,
) -> Result<Tensor<T>> {
    if tiles.len() != grid.anchors.len() {
        return Err(Error::shape(format!(
            "stitch: {} tiles for {} anchors",
            tiles.len(),
            grid.anchors.len()
        )));
    }
    let t = grid.tile;
    let mut sum = vec![0.0f64; 2 * width * height];
    let mut cover = vec![0u32; width * height];
    for (tile, &(ax, ay)) in tiles.iter().zip(&grid.anchors) {
        tile.expect_dims(&[2, t, t], "stitch tile")?;
        if ax + t > width || ay + t > height {
            return Err(Error::shape(format!(
                "stitch: anchor ({ax}, {ay}) overruns the {width}x{height} scene"
            )));
        }
        let d = tile.data();
        for row in 0..t {
            for col in 0..t {
                let p = (ay + row) * width + ax + col;
                sum[p] += d[row * t + col].as_f64();
                sum[width * height + p] += d[t * t + row * t + col].as_f64();
                cover[p] += 1;
            }
        }
    }
    let mut out = vec![T::zero(); 2 * width * height];
    for p in 0..width * height {
        if cover[p] == 0 {
            return Err(Error::domain(format!(
                "stitch: pixel {} is covered by no tile",
                p
            )));
        }
        let c = cover[p] as f64;
        let a = sum[p] / c;
        let b = sum[width * height + p] / c;
        let norm = a + b;
        let (a, b) = if norm > 0.0 { (a / norm, b / norm) } else { (0.5, 0.5) };
        out[p] = T::from_f64(a);
        out[width * height + p] = T::from_f64(b);
    }
    Tensor::new(vec![2, height, width], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{decode_mask, encode_mask, MaskClass, MaskImage};

    #[test]
    fn survey_scene_layout() {
        let g = plan_tiles(5472, 3648, 384, 15, 10).unwrap();
        assert_eq!(g.count(), 150);
        assert_eq!(g.anchors[0], (0, 0));
        assert_eq!(g.anchors[149], (5088, 3264));
        // x anchors repeat every row
        assert_eq!(g.anchors[15], (0, g.anchors[15].1));
        for w in g.anchors.windows(1) {
            let (x, y) = w[0];
            assert!(x + 384 <= 5472 && y + 384 <= 3648);
        }
    }

    #[test]
    fn degenerate_grid_repeats_the_origin() {
        let g = plan_tiles(384, 384, 384, 2, 2).unwrap();
        assert_eq!(g.anchors, vec![(0, 0); 4]);
    }

    #[test]
    fn exact_double_cover_splits_without_overlap() {
        let g = plan_tiles(768, 384, 384, 2, 2).unwrap();
        let xs: Vec<_> = g.anchors.iter().map(|a| a.0).collect();
        assert_eq!(xs, vec![0, 384, 0, 384]);
    }

    #[test]
    fn impossible_plans_are_rejected() {
        assert!(plan_tiles(300, 300, 384, 2, 2).is_err());
        assert!(plan_tiles(5472, 3648, 384, 1, 10).is_err());
        assert!(plan_tiles(2000, 2000, 384, 2, 2).is_err());
    }

    #[test]
    fn overlap_averages_and_renormalizes() {
        // two 2x2 tiles on a 3x2 scene overlap in the middle column
        let g = plan_tiles(3, 2, 2, 2, 2).unwrap();
        assert_eq!(g.anchors, vec![(0, 0), (1, 0), (0, 0), (1, 0)]);
        let tile_a = Tensor::from_fn(&[2, 2, 2], |i| if i < 4 { 0.2 } else { 0.8 });
        let tile_b = Tensor::from_fn(&[2, 2, 2], |i| if i < 4 { 0.6 } else { 0.4 });
        let tiles = vec![tile_a.clone(), tile_b.clone(), tile_a, tile_b];
        let y = stitch_predictions::<f64>(&tiles, &g, 3, 2).unwrap();
        for row in 0..2 {
            let v = |c: usize, col: usize| y.data()[c * 6 + row * 3 + col];
            assert!((v(0, 0) - 0.2).abs() < 1e-12);
            assert!((v(0, 1) - 0.4).abs() < 1e-12);
            assert!((v(0, 2) - 0.6).abs() < 1e-12);
            for col in 0..3 {
                assert!((v(0, col) + v(1, col) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stitch_of_split_hard_labels_restores_the_mask() {
        let (w, h) = (40, 24);
        let labels: Vec<_> = (0..w * h)
            .map(|i| if (i * 7 + i / w) % 3 == 0 { MaskClass::Mat } else { MaskClass::Blk })
            .collect();
        let mask = MaskImage::new(w, h, labels).unwrap();
        let g = plan_tiles(w, h, 8, 6, 4).unwrap();
        let tiles: Vec<Tensor<f64>> = g
            .anchors
            .iter()
            .map(|&(x, y)| encode_mask(&mask.crop(x, y, 8, 8).unwrap()))
            .collect();
        let y = stitch_predictions(&tiles, &g, w, h).unwrap();
        assert_eq!(decode_mask(&y).unwrap(), mask);
    }

    #[test]
    fn tile_count_mismatch_is_rejected() {
        let g = plan_tiles(3, 2, 2, 2, 2).unwrap();
        let tiles = vec![Tensor::<f64>::zeros(&[2, 2, 2]); 3];
        assert!(stitch_predictions(&tiles, &g, 3, 2).is_err());
    }
}

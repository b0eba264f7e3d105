//! Release gate. Each test pins one contract the crate promises and prints a
//! single `PASS <contract>` line, so a log scrape shows the whole gate at a
//! glance. The oracles are written from scratch inside this file (plain
//! recurrence loops, central finite differences, naive pixel counting), not
//! shared with the library, so a defect cannot hide in common code.

use std::time::Instant;

use blacksoil_core::data::checkpoint::{
    encode_checkpoint, load_checkpoint, save_checkpoint, TensorEntry,
};
use blacksoil_core::data::netpbm::{
    decode_ppm, encode_pgm, encode_ppm, load_pgm, load_ppm,
};
use blacksoil_core::data::{
    cutmix, decode_mask, encode_mask, plan_tiles, stitch_predictions, GrayImage, MaskClass,
    MaskImage, SceneImage,
};
use blacksoil_core::loss::{ce_loss, evaluate, iou_loss, miou_loss, total_loss, LossWeights};
use blacksoil_core::encoder::mamba_stage;
use blacksoil_core::model::{forward_stages, infer_image, init_weights, ModelConfig};
use blacksoil_core::scan::{
    build_scan_order, gather_sequence, scatter_sequence, ScAttnWeights, ScanStrategy,
};
use blacksoil_core::smb::{
    patch_embed, patch_merge, smb_forward, DirectionHeads, SmbConfig, SmbWeights,
};
use blacksoil_core::ssm::{
    discretize, scan_backward, scan_blocked, scan_materialized, scan_sequential, ScanInputs,
    MATERIALIZED_MAX_L,
};
use blacksoil_core::tensor::{Element, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn rt(r: &mut ChaCha20Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| r.random_range(lo..hi))
}

/// Relative gap with an absolute floor of 1, so near-zero values compare
/// absolutely instead of dividing by noise.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn max_rel<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| rel(x.as_f64(), y.as_f64()))
        .fold(0.0, f64::max)
}

fn random_scan_inputs(
    r: &mut ChaCha20Rng,
    b: usize,
    l: usize,
    d: usize,
    n: usize,
) -> ScanInputs<f64> {
    ScanInputs::new(
        rt(r, &[b, l, d], -1.0, 1.0),
        rt(r, &[b, l, d], 1e-3, 0.1),
        rt(r, &[b, l, n], -1.0, 1.0),
        rt(r, &[b, l, n], -1.0, 1.0),
        rt(r, &[d, n], -2.0, -0.05),
    )
    .unwrap()
}

fn cast_inputs(i: &ScanInputs<f64>) -> ScanInputs<f32> {
    ScanInputs::new(i.x.cast(), i.delta.cast(), i.bmat.cast(), i.cmat.cast(), i.a.cast()).unwrap()
}

/// From-scratch recurrence: discretize and step one state at a time, in plain
/// nested loops, double precision.
fn oracle_scan(i: &ScanInputs<f64>) -> Tensor<f64> {
    let (b, l, d, n) = i.dims();
    let (xd, dd, bd, cd, ad) = (i.x.data(), i.delta.data(), i.bmat.data(), i.cmat.data(), i.a.data());
    let mut y = Tensor::zeros(&[b, l, d]);
    let yd = y.data_mut();
    for bi in 0..b {
        for di in 0..d {
            let mut h = vec![0.0f64; n];
            for li in 0..l {
                let xv = xd[(bi * l + li) * d + di];
                let dt = dd[(bi * l + li) * d + di];
                let mut acc = 0.0;
                for ni in 0..n {
                    let a = ad[di * n + ni];
                    let s = dt * a;
                    let g = if s.abs() < 1e-6 { dt * (1.0 + 0.5 * s) } else { s.exp_m1() / a };
                    h[ni] = s.exp() * h[ni] + g * bd[(bi * l + li) * n + ni] * xv;
                    acc += cd[(bi * l + li) * n + ni] * h[ni];
                }
                yd[(bi * l + li) * d + di] = acc;
            }
        }
    }
    y
}

#[test]
fn scan_kernels_agree_across_block_sizes() {
    let t0 = Instant::now();
    let mut r = rng(0xACC0);
    let (mut worst64, mut worst32, mut worst_mat, mut worst_orc) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut cases, mut short_cases) = (0usize, 0usize);
    for k in 0..110 {
        let b = r.random_range(1..=4usize);
        // every third instance is short enough for the dense oracle
        let l = if k % 3 == 0 { r.random_range(1..=32usize) } else { r.random_range(1..=256usize) };
        let d = r.random_range(1..=8usize);
        let n = r.random_range(1..=16usize);
        let block = r.random_range(1..=l + 8);
        let inputs = random_scan_inputs(&mut r, b, l, d, n);

        let step = discretize(&inputs).unwrap();
        let seq = scan_sequential(&step, &inputs.x, &inputs.cmat).unwrap();
        let blk = scan_blocked(&step, &inputs.x, &inputs.cmat, block).unwrap();
        worst64 = worst64.max(max_rel(&seq, &blk));
        worst_orc = worst_orc.max(max_rel(&seq, &oracle_scan(&inputs)));

        let inputs32 = cast_inputs(&inputs);
        let step32 = discretize(&inputs32).unwrap();
        let seq32 = scan_sequential(&step32, &inputs32.x, &inputs32.cmat).unwrap();
        let blk32 = scan_blocked(&step32, &inputs32.x, &inputs32.cmat, block).unwrap();
        worst32 = worst32.max(max_rel(&seq32, &blk32));

        if l <= 32 {
            let mat = scan_materialized(&step, &inputs.x, &inputs.cmat, MATERIALIZED_MAX_L).unwrap();
            worst_mat = worst_mat.max(max_rel(&seq, &mat));
            short_cases += 1;
        }
        cases += 1;
    }
    assert!(cases >= 100, "only {cases} instances");
    assert!(short_cases >= 20, "only {short_cases} short instances");
    assert!(worst64 <= 1e-10, "blocked vs sequential f64 rel {worst64:e}");
    assert!(worst32 <= 1e-4, "blocked vs sequential f32 rel {worst32:e}");
    assert!(worst_mat <= 1e-12, "materialized vs sequential rel {worst_mat:e}");
    assert!(worst_orc <= 1e-12, "oracle vs sequential rel {worst_orc:e}");
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 30.0, "triangle took {secs:.1}s");
    println!(
        "PASS scan kernel triangle: {cases} instances ({short_cases} dense), worst rel f64 \
         {worst64:.2e}, f32 {worst32:.2e}, materialized {worst_mat:.2e}, oracle {worst_orc:.2e}, \
         {secs:.1}s"
    );
}

#[test]
fn scan_gradients_match_central_differences() {
    let t0 = Instant::now();
    let mut r = rng(0xACC1);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probes = 0usize;
    for case in 0..22 {
        let b = r.random_range(1..=2usize);
        let l = r.random_range(1..=16usize);
        let d = r.random_range(1..=4usize);
        let n = r.random_range(1..=4usize);
        // step sizes kept off the lower bound so the -h probe stays positive
        let inputs = ScanInputs::new(
            rt(&mut r, &[b, l, d], -1.0, 1.0),
            rt(&mut r, &[b, l, d], 1e-2, 0.1),
            rt(&mut r, &[b, l, n], -1.0, 1.0),
            rt(&mut r, &[b, l, n], -1.0, 1.0),
            rt(&mut r, &[d, n], -1.5, -0.1),
        )
        .unwrap();
        let gy = rt(&mut r, &[b, l, d], -1.0, 1.0);
        let grads = scan_backward(&inputs, &gy).unwrap();
        let objective = |i: &ScanInputs<f64>| -> f64 {
            let step = discretize(i).unwrap();
            let y = scan_sequential(&step, &i.x, &i.cmat).unwrap();
            y.data().iter().zip(gy.data()).map(|(a, g)| a * g).sum()
        };
        for field in 0..5usize {
            let len = match field {
                0 | 1 => b * l * d,
                2 | 3 => b * l * n,
                _ => d * n,
            };
            let perturbed = |i: usize, eps: f64| -> ScanInputs<f64> {
                let mut p = inputs.clone();
                let t = match field {
                    0 => &mut p.x,
                    1 => &mut p.delta,
                    2 => &mut p.bmat,
                    3 => &mut p.cmat,
                    _ => &mut p.a,
                };
                t.data_mut()[i] += eps;
                p
            };
            for i in 0..len {
                let fd = (objective(&perturbed(i, h)) - objective(&perturbed(i, -h))) / (2.0 * h);
                let an = match field {
                    0 => grads.d_x.data()[i],
                    1 => grads.d_delta.data()[i],
                    2 => grads.d_bmat.data()[i],
                    3 => grads.d_cmat.data()[i],
                    _ => grads.d_a.data()[i],
                };
                let gap = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-3);
                worst = worst.max(gap);
                assert!(
                    gap <= 1e-3,
                    "case {case} field {field} index {i}: analytic {an} vs difference {fd}"
                );
                probes += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 60.0, "gradient check took {secs:.1}s");
    println!(
        "PASS scan gradient check: 22 instances, {probes} probed elements, worst rel {worst:.2e}, \
         {secs:.1}s"
    );
}

#[test]
fn pixel_orders_are_bijections_with_exact_round_trips() {
    let strategies = [
        ScanStrategy::horizontal(),
        ScanStrategy::vertical(),
        ScanStrategy::local_window(2),
        ScanStrategy::local_window_flipped(2),
    ];
    let mut r = rng(0xACC2);
    let mut grids = 0usize;
    for s in strategies {
        for hh in [2usize, 4, 8, 16] {
            for ww in [2usize, 4, 8, 16] {
                let p = build_scan_order(hh, ww, s).unwrap();
                // bijection: every pixel index appears exactly once
                let mut seen = vec![false; hh * ww];
                for &i in p.order() {
                    assert!(i < hh * ww && !seen[i], "{s:?} {hh}x{ww} repeats index {i}");
                    seen[i] = true;
                }
                let f = rt(&mut r, &[1, 3, hh, ww], -1.0, 1.0);
                let seq = gather_sequence(&f, &p).unwrap();
                let back = scatter_sequence(&seq, &p, hh, ww).unwrap();
                assert_eq!(f.data(), back.data(), "{s:?} {hh}x{ww} round trip");
                grids += 1;
            }
        }
    }
    let w2 = build_scan_order(4, 4, ScanStrategy::local_window(2)).unwrap();
    assert_eq!(w2.order(), &[0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15]);
    let w2f = build_scan_order(4, 4, ScanStrategy::local_window_flipped(2)).unwrap();
    assert_eq!(w2f.order(), &[5, 4, 1, 0, 7, 6, 3, 2, 13, 12, 9, 8, 15, 14, 11, 10]);
    let v = build_scan_order(2, 3, ScanStrategy::vertical()).unwrap();
    assert_eq!(v.order(), &[0, 3, 1, 4, 2, 5]);
    // a window the size of the whole grid degenerates to the row-major walk
    for side in [2usize, 4, 8, 16] {
        let win = build_scan_order(side, side, ScanStrategy::local_window(side)).unwrap();
        let hor = build_scan_order(side, side, ScanStrategy::horizontal()).unwrap();
        assert_eq!(win.order(), hor.order(), "window {side} on {side}x{side}");
    }
    println!(
        "PASS pixel scan orders: 4 strategies x {grids_per} grids bijective with exact gather \
         and scatter round trips, window lists verified",
        grids_per = grids / 4
    );
}

#[test]
fn forward_emits_unit_probability_mass_deterministically() {
    let cfg = ModelConfig::default();
    let weights = init_weights::<f32>(&cfg, 11).unwrap();
    let mut r = rng(0xACC3);
    let mut worst = 0.0f64;
    for side in [384usize, 64] {
        let rgb: Vec<u8> = (0..side * side * 3).map(|_| r.random_range(0..=255u32) as u8).collect();
        let bytes = encode_ppm(&SceneImage::new(side, side, rgb).unwrap());
        let img = decode_ppm(&bytes).unwrap();
        let (mask, probs) = infer_image(&img, &weights, &cfg).unwrap();
        assert_eq!(probs.dims(), &[2, side, side]);
        for p in 0..side * side {
            let sum = probs.data()[p].as_f64() + probs.data()[side * side + p].as_f64();
            worst = worst.max((sum - 1.0).abs());
        }
        assert!(worst <= 1e-5, "channel sums drift {worst:e} at {side}");
        // a second run over a fresh parse must be bit for bit the same
        let again = decode_ppm(&bytes).unwrap();
        let (mask2, probs2) = infer_image(&again, &weights, &cfg).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&probs), bits(&probs2), "probabilities differ at {side}");
        assert_eq!(mask.labels(), mask2.labels(), "masks differ at {side}");
        assert_eq!(mask.to_gray().pixels(), mask2.to_gray().pixels());
    }
    println!(
        "PASS forward contract: 384 and 64 inputs give [2,H,W] with channel sums within \
         {worst:.2e} of 1, repeated runs bit-identical"
    );
}

/// Cross-entropy recomputed with bare loops.
fn naive_ce(y: &Tensor<f64>, t: &Tensor<f64>) -> f64 {
    let (b, hw) = (y.dims()[0], y.dims()[2] * y.dims()[3]);
    let mut acc = 0.0;
    for bi in 0..b {
        for ch in 0..2 {
            for p in 0..hw {
                let i = (bi * 2 + ch) * hw + p;
                if t.data()[i] != 0.0 {
                    acc -= t.data()[i] * y.data()[i].clamp(1e-12, 1.0).ln();
                }
            }
        }
    }
    acc / (b * hw) as f64
}

/// Mean soft IoU loss recomputed with bare loops, pooling the batch per class.
fn naive_miou(y: &Tensor<f64>, t: &Tensor<f64>) -> f64 {
    let (b, hw) = (y.dims()[0], y.dims()[2] * y.dims()[3]);
    let mut acc = 0.0;
    for ch in 0..2 {
        let (mut inter, mut union) = (0.0, 0.0);
        for bi in 0..b {
            for p in 0..hw {
                let i = (bi * 2 + ch) * hw + p;
                let (yv, tv) = (y.data()[i], t.data()[i]);
                inter += yv * tv;
                union += yv + tv - yv * tv;
            }
        }
        acc += if union == 0.0 { 0.0 } else { 1.0 - inter / union };
    }
    acc / 2.0
}

fn random_one_hot(r: &mut ChaCha20Rng, b: usize, hh: usize, ww: usize) -> Tensor<f64> {
    let labels: Vec<usize> = (0..b * hh * ww).map(|_| r.random_range(0..2usize)).collect();
    Tensor::from_fn(&[b, 2, hh, ww], |i| {
        let hw = hh * ww;
        let ch = (i / hw) % 2;
        let pix = (i / (2 * hw)) * hw + i % hw;
        if labels[pix] == ch { 1.0 } else { 0.0 }
    })
}

#[test]
fn loss_identities_hold_and_total_recomposes() {
    let mut r = rng(0xACC4);

    let t = random_one_hot(&mut r, 2, 8, 8);
    let ce_perfect = ce_loss(&t, &t).unwrap();
    assert!(ce_perfect.abs() <= 1e-9, "perfect cross-entropy {ce_perfect:e}");
    assert_eq!(miou_loss(&t, &t).unwrap(), 0.0);

    let uniform = Tensor::from_fn(t.dims(), |_| 0.5);
    let ce_uniform = ce_loss(&uniform, &t).unwrap();
    assert!(
        (ce_uniform - std::f64::consts::LN_2).abs() <= 1e-6,
        "uniform cross-entropy {ce_uniform} vs ln 2"
    );

    let yb = Tensor::from_fn(&[6, 7], |i| f64::from(i % 3 == 0));
    let tb = Tensor::from_fn(&[6, 7], |i| f64::from(i % 3 != 0));
    assert_eq!(iou_loss(&yb, &tb).unwrap(), 1.0, "disjoint masks must score loss 1");

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = r.random_range(1..=3usize);
        let hh = r.random_range(2..=10usize);
        let ww = r.random_range(2..=10usize);
        let y = rt(&mut r, &[b, 2, hh, ww], 0.0, 1.0);
        let t = random_one_hot(&mut r, b, hh, ww);
        let w = LossWeights {
            lambda1: r.random_range(0.0..2.0),
            lambda2: r.random_range(0.0..2.0),
        };
        let total = total_loss(&y, &t, &w).unwrap();
        let again = w.lambda1 * naive_ce(&y, &t) + w.lambda2 * naive_miou(&y, &t);
        worst = worst.max((total - again).abs());
    }
    assert!(worst <= 1e-12, "total loss recomposition gap {worst:e}");
    println!(
        "PASS loss identities: perfect/uniform/disjoint cases exact, 100 random totals \
         recompose within {worst:.2e}"
    );
}

#[test]
fn confusion_metrics_equal_naive_counting() {
    let mut r = rng(0xACC5);
    let flip = |v: bool| if v { MaskClass::Mat } else { MaskClass::Blk };
    for case in 0..1000 {
        let w = r.random_range(1..=64usize);
        let h = r.random_range(1..=64usize);
        let pred = MaskImage::new(w, h, (0..w * h).map(|_| flip(r.random_bool(0.5))).collect())
            .unwrap();
        let gt = MaskImage::new(w, h, (0..w * h).map(|_| flip(r.random_bool(0.5))).collect())
            .unwrap();
        let rep = evaluate(&pred, &gt).unwrap();

        // independent counting pass, one pixel at a time
        let (mut tp_b, mut fp_b, mut fn_b) = (0u64, 0u64, 0u64);
        let (mut tp_m, mut fp_m, mut fn_m) = (0u64, 0u64, 0u64);
        for yy in 0..h {
            for xx in 0..w {
                let p = pred.labels()[yy * w + xx] == MaskClass::Mat;
                let g = gt.labels()[yy * w + xx] == MaskClass::Mat;
                if p && g {
                    tp_m += 1;
                } else if p && !g {
                    fp_m += 1;
                    fn_b += 1;
                } else if !p && g {
                    fn_m += 1;
                    fp_b += 1;
                } else {
                    tp_b += 1;
                }
            }
        }
        let pct = |n: u64, d: u64| if d == 0 { 100.0 } else { 100.0 * n as f64 / d as f64 };
        let iou_blk = pct(tp_b, tp_b + fp_b + fn_b);
        let iou_mat = pct(tp_m, tp_m + fp_m + fn_m);
        let f1_blk = pct(2 * tp_b, 2 * tp_b + fp_b + fn_b);
        let f1_mat = pct(2 * tp_m, 2 * tp_m + fp_m + fn_m);
        let acc = pct(tp_b + tp_m, (w * h) as u64);
        assert_eq!(rep.iou_blk, iou_blk, "case {case} iou_blk");
        assert_eq!(rep.iou_mat, iou_mat, "case {case} iou_mat");
        assert_eq!(rep.miou, 0.5 * (iou_blk + iou_mat), "case {case} miou");
        assert_eq!(rep.f1_blk, f1_blk, "case {case} f1_blk");
        assert_eq!(rep.f1_mat, f1_mat, "case {case} f1_mat");
        assert_eq!(rep.mean_f1, 0.5 * (f1_blk + f1_mat), "case {case} mean_f1");
        assert_eq!(rep.acc, acc, "case {case} acc");
    }

    use MaskClass::{Blk, Mat};
    let pred = MaskImage::new(2, 2, vec![Blk, Blk, Mat, Mat]).unwrap();
    let gt = MaskImage::new(2, 2, vec![Blk, Mat, Mat, Mat]).unwrap();
    let rep = evaluate(&pred, &gt).unwrap();
    assert_eq!(rep.acc, 75.0);
    assert_eq!(rep.iou_blk, 50.0);
    assert!((rep.iou_mat - 200.0 / 3.0).abs() <= 1e-9, "iou_mat {}", rep.iou_mat);
    println!(
        "PASS confusion metrics: 1000 random masks equal naive counting in every column, hand \
         case scores 75.0 / 50.0 / 66.67"
    );
}

#[test]
fn survey_tile_plan_covers_every_pixel() {
    let (sw, sh, tile) = (5472usize, 3648usize, 384usize);
    let grid = plan_tiles(sw, sh, tile, 15, 10).unwrap();
    assert_eq!(grid.count(), 150);
    assert_eq!(grid.anchors[0], (0, 0));
    assert_eq!(*grid.anchors.last().unwrap(), (5088, 3264));
    let mut hit = vec![false; sw * sh];
    for &(ax, ay) in &grid.anchors {
        assert!(ax + tile <= sw && ay + tile <= sh, "tile at ({ax},{ay}) leaves the scene");
        for y in ay..ay + tile {
            hit[y * sw + ax..y * sw + ax + tile].fill(true);
        }
    }
    let missed = hit.iter().filter(|&&v| !v).count();
    assert_eq!(missed, 0, "{missed} pixels uncovered");

    // hard labels split into overlapping tiles and stitched back are unchanged
    let mut r = rng(0xACC6);
    let (mw, mh, mt) = (96usize, 64usize, 16usize);
    let mask = MaskImage::new(
        mw,
        mh,
        (0..mw * mh)
            .map(|_| if r.random_bool(0.5) { MaskClass::Mat } else { MaskClass::Blk })
            .collect(),
    )
    .unwrap();
    let small = plan_tiles(mw, mh, mt, 8, 5).unwrap();
    let tiles: Vec<Tensor<f64>> = small
        .anchors
        .iter()
        .map(|&(x, y)| encode_mask(&mask.crop(x, y, mt, mt).unwrap()))
        .collect();
    let stitched = stitch_predictions(&tiles, &small, mw, mh).unwrap();
    assert_eq!(decode_mask(&stitched).unwrap().labels(), mask.labels());
    println!(
        "PASS tile protocol: 150 anchors from (0,0) to (5088,3264) cover 5472x3648 exhaustively, \
         stitched split restores hard labels"
    );
}

#[test]
fn cutmix_weight_equals_pasted_area_fraction() {
    let (w, h) = (37usize, 23usize);
    let mut r = rng(0xACC7);
    let rgb_a: Vec<u8> = (0..w * h * 3).map(|_| r.random_range(0..=255u32) as u8).collect();
    // B differs from A in every byte, so changed pixels mark the paste exactly
    let rgb_b: Vec<u8> = rgb_a.iter().map(|v| v.wrapping_add(1)).collect();
    let img_a = SceneImage::new(w, h, rgb_a).unwrap();
    let img_b = SceneImage::new(w, h, rgb_b).unwrap();
    let mask_a = MaskImage::new(w, h, vec![MaskClass::Blk; w * h]).unwrap();
    let mask_b = MaskImage::new(w, h, vec![MaskClass::Mat; w * h]).unwrap();
    for seed in 0..100u64 {
        let (img, mask, weight) = cutmix(&img_a, &mask_a, &img_b, &mask_b, seed).unwrap();
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0usize, 0usize);
        let mut changed = 0usize;
        for p in 0..w * h {
            let is_b = img.rgb()[p * 3..p * 3 + 3] == img_b.rgb()[p * 3..p * 3 + 3];
            if is_b {
                changed += 1;
                x0 = x0.min(p % w);
                x1 = x1.max(p % w);
                y0 = y0.min(p / w);
                y1 = y1.max(p / w);
                assert_eq!(mask.labels()[p], MaskClass::Mat, "seed {seed} pixel {p}");
            } else {
                assert_eq!(
                    &img.rgb()[p * 3..p * 3 + 3],
                    &img_a.rgb()[p * 3..p * 3 + 3],
                    "seed {seed} pixel {p} outside the paste was touched"
                );
                assert_eq!(mask.labels()[p], MaskClass::Blk, "seed {seed} pixel {p}");
            }
        }
        assert!(changed > 0, "seed {seed} pasted nothing");
        assert_eq!(changed, (x1 - x0 + 1) * (y1 - y0 + 1), "seed {seed} paste is not a rectangle");
        assert_eq!(weight, changed as f64 / (w * h) as f64, "seed {seed} weight");
    }
    println!(
        "PASS cutmix: 100 seeded draws paste one rectangle, weight equals its exact pixel \
         fraction, outside pixels byte-identical"
    );
}

fn random_smb_weights(r: &mut ChaCha20Rng, c: usize, e: usize, n: usize) -> SmbWeights<f64> {
    SmbWeights {
        pre_norm_gain: rt(r, &[c], 0.5, 1.5),
        pre_norm_offset: rt(r, &[c], -0.3, 0.3),
        in_proj_w: rt(r, &[2 * e, c], -0.5, 0.5),
        in_proj_b: rt(r, &[2 * e], -0.2, 0.2),
        dw_conv_w: rt(r, &[e, 1, 3, 3], -0.5, 0.5),
        dw_conv_b: rt(r, &[e], -0.2, 0.2),
        heads: std::array::from_fn(|_| DirectionHeads {
            delta_w: rt(r, &[e, e], -0.3, 0.3),
            delta_b: rt(r, &[e], -1.0, 0.0),
            b_w: rt(r, &[n, e], -0.5, 0.5),
            b_b: rt(r, &[n], -0.2, 0.2),
            c_w: rt(r, &[n, e], -0.5, 0.5),
            c_b: rt(r, &[n], -0.2, 0.2),
        }),
        a: rt(r, &[e, n], -1.5, -0.1),
        scattn: ScAttnWeights {
            ch_fc1_w: rt(r, &[e, 4 * e], -0.3, 0.3),
            ch_fc1_b: rt(r, &[e], -0.2, 0.2),
            ch_fc2_w: rt(r, &[4 * e, e], -0.3, 0.3),
            ch_fc2_b: rt(r, &[4 * e], -0.2, 0.2),
            sp_conv_w: rt(r, &[1, 1, 3, 3], -0.5, 0.5),
            sp_conv_b: rt(r, &[1], -0.2, 0.2),
            merge_w: rt(r, &[e, 4 * e], -0.3, 0.3),
            merge_b: rt(r, &[e], -0.2, 0.2),
        },
        out_proj_w: Tensor::zeros(&[c, e]),
        out_proj_b: Tensor::zeros(&[c]),
        post_norm_gain: rt(r, &[c], 0.5, 1.5),
        post_norm_offset: rt(r, &[c], -0.3, 0.3),
        res_gate: 0.0,
    }
}

#[test]
fn smb_with_zeroed_projection_and_gate_is_identity() {
    let mut r = rng(0xACC8);
    for case in 0..20 {
        let c = if case % 2 == 0 { 4 } else { 8 };
        let e = 2 * c;
        let n = if case % 3 == 0 { 2 } else { 4 };
        let hh = [4usize, 6, 8][case % 3];
        let ww = [4usize, 6, 8][(case + 1) % 3];
        let b = 1 + case % 2;
        let cfg = SmbConfig::with_default_directions(c, e, n, 2, false, 8);
        let w = random_smb_weights(&mut r, c, e, n);
        let x = rt(&mut r, &[b, c, hh, ww], -1.0, 1.0);
        let y = smb_forward(&x, &w, &cfg).unwrap();
        assert_eq!(x.data(), y.data(), "case {case} ({b},{c},{hh},{ww})");
    }
    println!(
        "PASS block residual identity: zero output projection and zero gate return the input \
         bit-exactly on 20 random inputs"
    );
}

#[test]
fn mamba_stage_grids_follow_the_scale_ladder() {
    let cfg = ModelConfig::default();
    let weights = init_weights::<f32>(&cfg, 5).unwrap();
    let mut r = rng(0xACC9);
    let img = Tensor::<f32>::from_fn(&[1, 3, 384, 384], |_| r.random_range(0.0f64..1.0) as f32);
    let chans = [16usize, 32, 64, 128];
    let grids = [96usize, 48, 24, 12];

    // the scan branch itself: embed, then merge+stage three times
    let mut m = patch_embed(&img, &weights.encoder.patch_embed).unwrap();
    m = mamba_stage(&m, &weights.encoder.smbs[0], &cfg, 0).unwrap();
    assert_eq!(m.dims(), &[1, chans[0], grids[0], grids[0]], "stage 0 scan grid");
    for stage in 1..4 {
        m = patch_merge(&m, &weights.encoder.patch_merges[stage - 1]).unwrap();
        m = mamba_stage(&m, &weights.encoder.smbs[stage], &cfg, stage).unwrap();
        assert_eq!(
            m.dims(),
            &[1, chans[stage], grids[stage], grids[stage]],
            "stage {stage} scan grid"
        );
    }

    // after fusion every stage sits on the twice-finer conv grid
    let stages = forward_stages(&img, &weights, &cfg).unwrap();
    for (i, st) in stages.iter().enumerate() {
        let fused_side = 2 * grids[i];
        assert_eq!(st.f_ssm.dims(), &[1, chans[i], fused_side, fused_side], "stage {i} aligned");
        assert_eq!(st.f_fused.dims(), &[1, chans[i], fused_side, fused_side], "stage {i} fusion");
        assert_eq!(st.scale_denom, 2 << i, "stage {i} denominator");
    }
    println!("PASS scale ladder: 384x384 input scans at 96/48/24/12 across the four stages");
}

#[test]
fn image_and_checkpoint_round_trips_are_bit_exact() {
    let dir = std::env::temp_dir().join(format!("blacksoil-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut r = rng(0xACCA);
    let mut artifacts = 0usize;

    for (k, (w, h)) in [(1usize, 1usize), (3, 2), (17, 9), (64, 33)].into_iter().enumerate() {
        let img = SceneImage::new(
            w,
            h,
            (0..w * h * 3).map(|_| r.random_range(0..=255u32) as u8).collect(),
        )
        .unwrap();
        let path = dir.join(format!("rt{k}.ppm"));
        std::fs::write(&path, encode_ppm(&img)).unwrap();
        let loaded = load_ppm(&path).unwrap();
        assert_eq!(loaded, img);
        assert_eq!(encode_ppm(&loaded), encode_ppm(&img));
        artifacts += 1;
    }
    for (k, (w, h)) in [(2usize, 5usize), (7, 7), (31, 12), (64, 64)].into_iter().enumerate() {
        let img =
            GrayImage::new(w, h, (0..w * h).map(|_| r.random_range(0..=255u32) as u8).collect())
                .unwrap();
        let path = dir.join(format!("rt{k}.pgm"));
        std::fs::write(&path, encode_pgm(&img)).unwrap();
        let loaded = load_pgm(&path).unwrap();
        assert_eq!(loaded, img);
        assert_eq!(encode_pgm(&loaded), encode_pgm(&img));
        artifacts += 1;
    }
    for k in 0..4usize {
        let mut entries = Vec::new();
        for e in 0..=k {
            let rank = r.random_range(0..=3usize);
            let dims: Vec<usize> = (0..rank).map(|_| r.random_range(1..=5usize)).collect();
            let volume = dims.iter().product::<usize>();
            let mut data: Vec<f32> =
                (0..volume).map(|_| r.random_range(-10.0f64..10.0) as f32).collect();
            // keep the awkward encodings honest: negative zero and a subnormal
            data[0] = if e % 2 == 0 { -0.0 } else { 1.0e-40 };
            entries.push(TensorEntry { name: format!("t{k}.{e}"), dims, data });
        }
        let path = dir.join(format!("rt{k}.ckpt"));
        save_checkpoint(&path, &entries).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.len(), entries.len());
        for (a, b) in entries.iter().zip(&loaded) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.dims, b.dims);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.data), bits(&b.data), "entry {} data bits", a.name);
        }
        assert_eq!(encode_checkpoint(&loaded), encode_checkpoint(&entries));
        artifacts += 1;
    }
    std::fs::remove_dir_all(&dir).ok();
    assert!(artifacts >= 10);
    println!("PASS artifact round trips: {artifacts} seeded files reload bit-exactly");
}

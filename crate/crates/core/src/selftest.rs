//! Built-in verification suite behind the `selftest` subcommand. Each check
//! compares a fast code path against an independent oracle (a slower
//! formulation, a hand-enumerated value, or naive counting) and reports one
//! pass/fail line. Everything is seeded, so a failure reproduces exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::checkpoint::{decode_checkpoint, encode_checkpoint, TensorEntry};
use crate::data::netpbm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm};
use crate::data::{
    cutmix, decode_mask, encode_mask, plan_tiles, split_scene, stitch_predictions, GrayImage,
    MaskClass, MaskImage, SceneImage,
};
use crate::loss::{ce_loss, evaluate, iou_loss, miou_loss, total_loss, LossWeights};
use crate::model::{forward, init_weights, ModelConfig};
use crate::scan::{build_scan_order, gather_sequence, scatter_sequence, ScanStrategy};
use crate::smb::{smb_forward, DirectionHeads, SmbConfig, SmbWeights};
use crate::ssm::{
    discretize, scan_backward, scan_blocked, scan_materialized, scan_sequential, ScanInputs,
};
use crate::scan::ScAttnWeights;
use crate::tensor::{Element, Tensor};

type CheckResult = std::result::Result<(), String>;

pub struct Check {
    pub name: &'static str,
    pub run: fn() -> CheckResult,
}

/// All checks, in execution order.
pub fn all_checks() -> Vec<Check> {
    vec![
        Check { name: "discretize-hand-values", run: discretize_hand_values },
        Check { name: "scan-triangle-f32", run: scan_triangle_f32 },
        Check { name: "scan-triangle-f64", run: scan_triangle_f64 },
        Check { name: "scan-vs-materialized", run: scan_vs_materialized },
        Check { name: "scan-gradient-fd", run: scan_gradient_fd },
        Check { name: "scan-order-enumeration", run: scan_order_enumeration },
        Check { name: "permutation-round-trips", run: permutation_round_trips },
        Check { name: "smb-residual-identity", run: smb_residual_identity },
        Check { name: "loss-identities", run: loss_identities },
        Check { name: "metrics-counting-oracle", run: metrics_counting_oracle },
        Check { name: "tiling-protocol", run: tiling_protocol },
        Check { name: "cutmix-weights", run: cutmix_weights },
        Check { name: "io-round-trips", run: io_round_trips },
        Check { name: "forward-determinism", run: forward_determinism },
    ]
}

/// Runs every check, printing one line per check. Returns true iff all pass.
pub fn run_all(out: &mut dyn std::io::Write) -> std::io::Result<bool> {
    let mut ok = true;
    for c in all_checks() {
        match (c.run)() {
            Ok(()) => writeln!(out, "ok   {}", c.name)?,
            Err(msg) => {
                ok = false;
                writeln!(out, "FAIL {}: {msg}", c.name)?;
            }
        }
    }
    writeln!(out, "{}", if ok { "selftest passed" } else { "selftest FAILED" })?;
    Ok(ok)
}

fn fail(msg: impl Into<String>) -> CheckResult {
    Err(msg.into())
}

fn ensure(cond: bool, msg: impl Into<String>) -> CheckResult {
    if cond {
        Ok(())
    } else {
        fail(msg)
    }
}

// Mixed relative/absolute deviation; the 1.0 floor keeps near-zero outputs
// from inflating the ratio.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn max_rel<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| rel(x.as_f64(), y.as_f64()))
        .fold(0.0, f64::max)
}

fn random_inputs(rng: &mut ChaCha20Rng, b: usize, l: usize, d: usize, n: usize) -> ScanInputs<f64> {
    let x = Tensor::from_fn(&[b, l, d], |_| rng.random_range(-1.0..1.0));
    let delta = Tensor::from_fn(&[b, l, d], |_| rng.random_range(1e-3..0.1));
    let bmat = Tensor::from_fn(&[b, l, n], |_| rng.random_range(-1.0..1.0));
    let cmat = Tensor::from_fn(&[b, l, n], |_| rng.random_range(-1.0..1.0));
    let a = Tensor::from_fn(&[d, n], |_| rng.random_range(-2.0..-0.05));
    ScanInputs::new(x, delta, bmat, cmat, a).expect("random inputs are in-domain")
}

fn cast_inputs(i: &ScanInputs<f64>) -> ScanInputs<f32> {
    ScanInputs::new(
        i.x.cast(),
        i.delta.cast(),
        i.bmat.cast(),
        i.cmat.cast(),
        i.a.cast(),
    )
    .expect("casting preserves the domain")
}

fn discretize_hand_values() -> CheckResult {
    // a = -1, delta = ln 2: the transition halves and the input term matches
    let inputs = ScanInputs::new(
        Tensor::new(vec![1, 1, 1], vec![0.0]).unwrap(),
        Tensor::new(vec![1, 1, 1], vec![std::f64::consts::LN_2]).unwrap(),
        Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(),
        Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(),
        Tensor::new(vec![1, 1], vec![-1.0]).unwrap(),
    )
    .unwrap();
    let step = discretize(&inputs).map_err(|e| e.to_string())?;
    ensure((step.abar.data()[0] - 0.5).abs() < 1e-15, "abar(ln 2, -1) should be 1/2")?;
    ensure((step.bbar.data()[0] - 0.5).abs() < 1e-15, "bbar(ln 2, -1, 1) should be 1/2")?;

    // transition always lands strictly inside (0, 1) for negative a
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..100 {
        let i = random_inputs(&mut rng, 1, 3, 2, 2);
        let s = discretize(&i).map_err(|e| e.to_string())?;
        for &v in s.abar.data() {
            ensure(v > 0.0 && v < 1.0, format!("abar {v} escaped (0, 1)"))?;
        }
    }
    Ok(())
}

fn triangle_case<T: Element>(src: &ScanInputs<f64>, tol: f64, blocks: &[usize]) -> CheckResult
where
    ScanInputs<T>: InputsFrom,
{
    let inputs = <ScanInputs<T> as InputsFrom>::from64(src);
    let step = discretize(&inputs).map_err(|e| e.to_string())?;
    let want = scan_sequential(&step, &inputs.x, &inputs.cmat).map_err(|e| e.to_string())?;
    for &blk in blocks {
        let got = scan_blocked(&step, &inputs.x, &inputs.cmat, blk).map_err(|e| e.to_string())?;
        let err = max_rel(&got, &want);
        ensure(
            err <= tol,
            format!("blocked(block={blk}) deviates from sequential by {err:.3e} (tol {tol:.0e})"),
        )?;
    }
    Ok(())
}

// Tiny adapter so one triangle driver serves both precisions.
trait InputsFrom {
    fn from64(src: &ScanInputs<f64>) -> Self;
}

impl InputsFrom for ScanInputs<f64> {
    fn from64(src: &ScanInputs<f64>) -> Self {
        src.clone()
    }
}

impl InputsFrom for ScanInputs<f32> {
    fn from64(src: &ScanInputs<f64>) -> Self {
        cast_inputs(src)
    }
}

fn triangle(seed: u64, tol32: Option<f64>, tol64: Option<f64>) -> CheckResult {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for case in 0..30 {
        let b = rng.random_range(1..=3);
        let l = rng.random_range(1..=200);
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=16);
        let src = random_inputs(&mut rng, b, l, d, n);
        let blocks = [1, 7, 64, l, l + 9];
        if let Some(t) = tol32 {
            triangle_case::<f32>(&src, t, &blocks)
                .map_err(|m| format!("case {case} (L={l}, D={d}, N={n}): {m}"))?;
        }
        if let Some(t) = tol64 {
            triangle_case::<f64>(&src, t, &blocks)
                .map_err(|m| format!("case {case} (L={l}, D={d}, N={n}): {m}"))?;
        }
    }
    Ok(())
}

fn scan_triangle_f32() -> CheckResult {
    triangle(21, Some(1e-4), None)
}

fn scan_triangle_f64() -> CheckResult {
    triangle(22, None, Some(1e-10))
}

fn scan_vs_materialized() -> CheckResult {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    for case in 0..30 {
        let b = rng.random_range(1..=2);
        let l = rng.random_range(1..=32);
        let d = rng.random_range(1..=4);
        let n = rng.random_range(1..=8);
        let inputs = random_inputs(&mut rng, b, l, d, n);
        let step = discretize(&inputs).map_err(|e| e.to_string())?;
        let fast = scan_sequential(&step, &inputs.x, &inputs.cmat).map_err(|e| e.to_string())?;
        let slow =
            scan_materialized(&step, &inputs.x, &inputs.cmat, 64).map_err(|e| e.to_string())?;
        let err = max_rel(&fast, &slow);
        ensure(err <= 1e-12, format!("case {case} (L={l}): materialized gap {err:.3e}"))?;
    }
    Ok(())
}

fn scan_gradient_fd() -> CheckResult {
    let mut rng = ChaCha20Rng::seed_from_u64(24);
    let h = 1e-5;
    for case in 0..6 {
        let b = rng.random_range(1..=2);
        let l = rng.random_range(2..=16);
        let d = rng.random_range(1..=4);
        let n = rng.random_range(1..=4);
        let inputs = random_inputs(&mut rng, b, l, d, n);
        let gy = Tensor::from_fn(&[b, l, d], |_| rng.random_range(-1.0..1.0));
        let grads = scan_backward(&inputs, &gy).map_err(|e| e.to_string())?;

        // J = sum(y * gy); central differences on a handful of coordinates
        let objective = |i: &ScanInputs<f64>| -> f64 {
            let step = discretize(i).unwrap();
            let y = scan_sequential(&step, &i.x, &i.cmat).unwrap();
            y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum()
        };
        let fields: [(&str, &Tensor<f64>); 5] = [
            ("x", &grads.d_x),
            ("delta", &grads.d_delta),
            ("bmat", &grads.d_bmat),
            ("cmat", &grads.d_cmat),
            ("a", &grads.d_a),
        ];
        for (field, analytic) in fields {
            let len = analytic.len();
            for probe in 0..4usize.min(len) {
                let idx = if len <= 4 { probe } else { rng.random_range(0..len) };
                let mut plus = inputs.clone();
                let mut minus = inputs.clone();
                {
                    let (p, m) = match field {
                        "x" => (&mut plus.x, &mut minus.x),
                        "delta" => (&mut plus.delta, &mut minus.delta),
                        "bmat" => (&mut plus.bmat, &mut minus.bmat),
                        "cmat" => (&mut plus.cmat, &mut minus.cmat),
                        _ => (&mut plus.a, &mut minus.a),
                    };
                    p.data_mut()[idx] += h;
                    m.data_mut()[idx] -= h;
                }
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = analytic.data()[idx];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                ensure(
                    err <= 1e-3,
                    format!(
                        "case {case}: d{field}[{idx}] analytic {an:.6e} vs fd {fd:.6e} (rel {err:.3e})"
                    ),
                )?;
            }
        }
    }
    Ok(())
}

fn scan_order_enumeration() -> CheckResult {
    let lw = build_scan_order(4, 4, ScanStrategy::local_window(2)).map_err(|e| e.to_string())?;
    let want = [0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15];
    ensure(lw.order() == want, format!("window-2 order on 4x4 is {:?}", lw.order()))?;

    let fl = build_scan_order(4, 4, ScanStrategy::local_window_flipped(2))
        .map_err(|e| e.to_string())?;
    let want_fl = [5, 4, 1, 0, 7, 6, 3, 2, 13, 12, 9, 8, 15, 14, 11, 10];
    ensure(fl.order() == want_fl, format!("flipped order on 4x4 is {:?}", fl.order()))?;

    let v = build_scan_order(2, 3, ScanStrategy::vertical()).map_err(|e| e.to_string())?;
    ensure(v.order() == [0, 3, 1, 4, 2, 5], format!("column-major order is {:?}", v.order()))?;

    // window that spans the whole grid degenerates to the horizontal scan
    let whole = build_scan_order(4, 4, ScanStrategy::local_window(4)).map_err(|e| e.to_string())?;
    let horiz = build_scan_order(4, 4, ScanStrategy::horizontal()).map_err(|e| e.to_string())?;
    ensure(whole.order() == horiz.order(), "grid-sized window should scan row-major")
}

fn permutation_round_trips() -> CheckResult {
    let mut rng = ChaCha20Rng::seed_from_u64(25);
    for h in [2usize, 4, 8, 16] {
        for w in [2usize, 4, 8, 16] {
            for s in [
                ScanStrategy::horizontal(),
                ScanStrategy::vertical(),
                ScanStrategy::local_window(2),
                ScanStrategy::local_window_flipped(2),
            ] {
                let p = build_scan_order(h, w, s).map_err(|e| e.to_string())?;
                let mut seen = vec![false; h * w];
                for &i in p.order() {
                    if seen[i] {
                        return fail(format!("{s:?} on {h}x{w} visits pixel {i} twice"));
                    }
                    seen[i] = true;
                }
                let f = Tensor::from_fn(&[2, 3, h, w], |_| rng.random_range(-1.0..1.0));
                let seq = gather_sequence(&f, &p).map_err(|e| e.to_string())?;
                let back = scatter_sequence(&seq, &p, h, w).map_err(|e| e.to_string())?;
                ensure(
                    back.data() == f.data(),
                    format!("scatter(gather(f)) changed values for {s:?} on {h}x{w}"),
                )?;
            }
        }
    }
    Ok(())
}

type DrawTensor<'a> = &'a mut dyn FnMut(&[usize], f64, f64) -> Tensor<f64>;

fn random_smb_weights(seed: u64, c: usize, e: usize, n: usize) -> SmbWeights<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rt = move |dims: &[usize], lo: f64, hi: f64| {
        Tensor::from_fn(dims, |_| rng.random_range(lo..hi))
    };
    let head = |rt: DrawTensor| DirectionHeads {
        delta_w: rt(&[e, e], -0.3, 0.3),
        delta_b: rt(&[e], -1.0, 0.0),
        b_w: rt(&[n, e], -0.3, 0.3),
        b_b: rt(&[n], -0.1, 0.1),
        c_w: rt(&[n, e], -0.3, 0.3),
        c_b: rt(&[n], -0.1, 0.1),
    };
    SmbWeights {
        pre_norm_gain: Tensor::full(&[c], 1.0),
        pre_norm_offset: Tensor::zeros(&[c]),
        in_proj_w: rt(&[2 * e, c], -0.3, 0.3),
        in_proj_b: rt(&[2 * e], -0.1, 0.1),
        dw_conv_w: rt(&[e, 1, 3, 3], -0.3, 0.3),
        dw_conv_b: rt(&[e], -0.1, 0.1),
        heads: [head(&mut rt), head(&mut rt), head(&mut rt), head(&mut rt)],
        a: rt(&[e, n], -2.0, -0.1),
        scattn: ScAttnWeights {
            ch_fc1_w: rt(&[e, 4 * e], -0.3, 0.3),
            ch_fc1_b: rt(&[e], -0.1, 0.1),
            ch_fc2_w: rt(&[4 * e, e], -0.3, 0.3),
            ch_fc2_b: rt(&[4 * e], -0.1, 0.1),
            sp_conv_w: rt(&[1, 1, 3, 3], -0.3, 0.3),
            sp_conv_b: rt(&[1], -0.1, 0.1),
            merge_w: rt(&[e, 4 * e], -0.3, 0.3),
            merge_b: rt(&[e], -0.1, 0.1),
        },
        out_proj_w: rt(&[c, e], -0.3, 0.3),
        out_proj_b: rt(&[c], -0.1, 0.1),
        post_norm_gain: Tensor::full(&[c], 1.0),
        post_norm_offset: Tensor::zeros(&[c]),
        res_gate: 1.0,
    }
}

fn smb_residual_identity() -> CheckResult {
    let (c, e, n) = (3, 6, 4);
    let cfg = SmbConfig::with_default_directions(c, e, n, 2, false, 16);
    let mut rng = ChaCha20Rng::seed_from_u64(26);
    for case in 0..20 {
        let mut w = random_smb_weights(100 + case, c, e, n);
        w.out_proj_w = Tensor::zeros(&[c, e]);
        w.out_proj_b = Tensor::zeros(&[c]);
        w.res_gate = 0.0;
        let x = Tensor::from_fn(&[1, c, 4, 8], |_| rng.random_range(-2.0..2.0));
        let y = smb_forward(&x, &w, &cfg).map_err(|e| e.to_string())?;
        ensure(
            y.data() == x.data(),
            format!("case {case}: zeroed output path still changed the input"),
        )?;
    }
    Ok(())
}

fn loss_identities() -> CheckResult {
    let mut rng = ChaCha20Rng::seed_from_u64(27);
    let t = Tensor::from_fn(&[1, 2, 4, 4], |i| {
        if i < 16 {
            if i % 3 == 0 { 1.0 } else { 0.0 }
        } else if (i - 16) % 3 == 0 {
            0.0
        } else {
            1.0
        }
    });
    let ce_perfect = ce_loss(&t, &t).map_err(|e| e.to_string())?;
    ensure(ce_perfect.abs() <= 1e-9, format!("perfect ce is {ce_perfect:.3e}"))?;
    let miou_perfect = miou_loss(&t, &t).map_err(|e| e.to_string())?;
    ensure(miou_perfect == 0.0, format!("perfect miou loss is {miou_perfect:.3e}"))?;

    let uniform = Tensor::full(&[1, 2, 4, 4], 0.5);
    let ce_u = ce_loss(&uniform, &t).map_err(|e| e.to_string())?;
    ensure(
        (ce_u - (2.0f64).ln()).abs() <= 1e-6,
        format!("uniform ce is {ce_u}, wanted ln 2"),
    )?;

    let ya = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let tb = Tensor::new(vec![2, 2], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let disjoint = iou_loss(&ya, &tb).map_err(|e| e.to_string())?;
    ensure(disjoint == 1.0, format!("disjoint iou loss is {disjoint}"))?;

    // weighted total recomposed from its parts, random trials
    for case in 0..100 {
        let labels: Vec<usize> = (0..16).map(|_| rng.random_range(0..2)).collect();
        let t = Tensor::from_fn(&[1, 2, 4, 4], |i| {
            let ch = i / 16;
            if labels[i % 16] == ch { 1.0 } else { 0.0 }
        });
        let y = Tensor::from_fn(&[1, 2, 4, 4], |i| {
            if i < 16 { rng.random_range(0.0..1.0) } else { 0.0 }
        });
        let y = {
            // make the two channels complementary so they form probabilities
            let mut d = y.into_data();
            for p in 0..16 {
                d[16 + p] = 1.0 - d[p];
            }
            Tensor::new(vec![1, 2, 4, 4], d).unwrap()
        };
        let w = LossWeights {
            lambda1: rng.random_range(0.0..2.0),
            lambda2: rng.random_range(0.0..2.0),
        };
        let got = total_loss(&y, &t, &w).map_err(|e| e.to_string())?;
        let want = w.lambda1 * ce_loss(&y, &t).map_err(|e| e.to_string())?
            + w.lambda2 * miou_loss(&y, &t).map_err(|e| e.to_string())?;
        ensure(
            (got - want).abs() <= 1e-12,
            format!("case {case}: total {got} vs recomposed {want}"),
        )?;
    }
    Ok(())
}

fn metrics_counting_oracle() -> CheckResult {
    let mut rng = ChaCha20Rng::seed_from_u64(28);
    for case in 0..300 {
        let w = rng.random_range(1..=32);
        let h = rng.random_range(1..=32);
        let draw = |rng: &mut ChaCha20Rng| {
            let labels = (0..w * h)
                .map(|_| if rng.random_range(0..2) == 1 { MaskClass::Mat } else { MaskClass::Blk })
                .collect();
            MaskImage::new(w, h, labels).unwrap()
        };
        let pred = draw(&mut rng);
        let gt = draw(&mut rng);
        let m = evaluate(&pred, &gt).map_err(|e| e.to_string())?;

        // naive recount straight from the label pairs
        let (mut tp, mut fp, mut fneg, mut correct) = ([0u64; 2], [0u64; 2], [0u64; 2], 0u64);
        for (p, g) in pred.labels().iter().zip(gt.labels()) {
            if p == g {
                correct += 1;
            }
            for (ci, cl) in [MaskClass::Blk, MaskClass::Mat].into_iter().enumerate() {
                if *p == cl && *g == cl {
                    tp[ci] += 1;
                } else if *p == cl {
                    fp[ci] += 1;
                } else if *g == cl {
                    fneg[ci] += 1;
                }
            }
        }
        let frac = |n: u64, d: u64| if d == 0 { 100.0 } else { 100.0 * n as f64 / d as f64 };
        let pairs = [
            (m.iou_blk, frac(tp[0], tp[0] + fp[0] + fneg[0])),
            (m.iou_mat, frac(tp[1], tp[1] + fp[1] + fneg[1])),
            (m.f1_blk, frac(2 * tp[0], 2 * tp[0] + fp[0] + fneg[0])),
            (m.f1_mat, frac(2 * tp[1], 2 * tp[1] + fp[1] + fneg[1])),
            (m.acc, frac(correct, (w * h) as u64)),
        ];
        for (i, (got, want)) in pairs.into_iter().enumerate() {
            ensure(got == want, format!("case {case} column {i}: {got} vs recount {want}"))?;
        }
    }

    let pred = MaskImage::new(
        2,
        2,
        vec![MaskClass::Blk, MaskClass::Blk, MaskClass::Mat, MaskClass::Mat],
    )
    .unwrap();
    let gt = MaskImage::new(
        2,
        2,
        vec![MaskClass::Blk, MaskClass::Mat, MaskClass::Mat, MaskClass::Mat],
    )
    .unwrap();
    let m = evaluate(&pred, &gt).map_err(|e| e.to_string())?;
    ensure(m.acc == 75.0, format!("hand case acc {}", m.acc))?;
    ensure(m.iou_blk == 50.0, format!("hand case iou_blk {}", m.iou_blk))?;
    ensure((m.iou_mat - 200.0 / 3.0).abs() < 1e-9, format!("hand case iou_mat {}", m.iou_mat))
}

fn tiling_protocol() -> CheckResult {
    let g = plan_tiles(5472, 3648, 384, 15, 10).map_err(|e| e.to_string())?;
    ensure(g.count() == 150, format!("{} anchors for the survey frame", g.count()))?;
    ensure(g.anchors[0] == (0, 0), "first anchor must be the origin")?;
    ensure(g.anchors[149] == (5088, 3264), format!("last anchor is {:?}", g.anchors[149]))?;

    let mut covered = vec![false; 5472 * 3648];
    for &(x, y) in &g.anchors {
        for row in y..y + 384 {
            covered[row * 5472 + x..row * 5472 + x + 384].fill(true);
        }
    }
    ensure(covered.iter().all(|&c| c), "tile plan leaves pixels uncovered")?;

    // hard labels survive a split/stitch cycle untouched
    let (w, h) = (96, 64);
    let mut rng = ChaCha20Rng::seed_from_u64(29);
    let labels: Vec<_> = (0..w * h)
        .map(|_| if rng.random_range(0..2) == 1 { MaskClass::Mat } else { MaskClass::Blk })
        .collect();
    let mask = MaskImage::new(w, h, labels).unwrap();
    let grid = plan_tiles(w, h, 32, 4, 3).map_err(|e| e.to_string())?;
    let tiles: Vec<Tensor<f64>> = grid
        .anchors
        .iter()
        .map(|&(x, y)| encode_mask(&mask.crop(x, y, 32, 32).unwrap()))
        .collect();
    let y = stitch_predictions(&tiles, &grid, w, h).map_err(|e| e.to_string())?;
    let back = decode_mask(&y).map_err(|e| e.to_string())?;
    ensure(back == mask, "stitched argmax differs from the split mask")?;

    // scenes split in anchor order
    let scene = SceneImage::new(
        96,
        64,
        (0..96 * 64 * 3).map(|i| (i % 251) as u8).collect(),
    )
    .unwrap();
    let crops = split_scene(&scene, &grid).map_err(|e| e.to_string())?;
    ensure(crops.len() == grid.count(), "split count mismatch")?;
    let first = scene.crop(0, 0, 32, 32).unwrap();
    ensure(crops[0] == first, "first crop should sit at the origin")
}

fn cutmix_weights() -> CheckResult {
    let (w, h) = (48, 36);
    let base: Vec<u8> = (0..w * h * 3).map(|i| (i % 249) as u8).collect();
    let img_a = SceneImage::new(w, h, base.clone()).unwrap();
    // B differs from A at every pixel, so pasted pixels are exactly the ones
    // that changed
    let img_b = SceneImage::new(w, h, base.iter().map(|v| v.wrapping_add(1)).collect()).unwrap();
    let mask_a = MaskImage::new(w, h, vec![MaskClass::Blk; w * h]).unwrap();
    let mask_b = MaskImage::new(w, h, vec![MaskClass::Mat; w * h]).unwrap();
    for seed in 0..100 {
        let (img, mask, weight) =
            cutmix(&img_a, &mask_a, &img_b, &mask_b, seed).map_err(|e| e.to_string())?;
        let changed =
            img.rgb().chunks(3).zip(img_a.rgb().chunks(3)).filter(|(a, b)| a != b).count();
        let flipped = mask.labels().iter().filter(|&&c| c == MaskClass::Mat).count();
        let want = changed as f64 / (w * h) as f64;
        ensure(
            weight == want,
            format!("seed {seed}: weight {weight} but {changed} of {} pixels pasted", w * h),
        )?;
        ensure(flipped == changed, format!("seed {seed}: mask and image disagree on the rectangle"))?;
        ensure(
            (0.05..0.6).contains(&weight),
            format!("seed {seed}: weight {weight} far outside the sampling band"),
        )?;
    }
    Ok(())
}

fn io_round_trips() -> CheckResult {
    let mut rng = ChaCha20Rng::seed_from_u64(30);
    for case in 0..10 {
        let w = rng.random_range(1..=24);
        let h = rng.random_range(1..=24);
        let rgb: Vec<u8> = (0..w * h * 3).map(|_| rng.random_range(0..=255)).collect();
        let img = SceneImage::new(w, h, rgb).unwrap();
        let bytes = encode_ppm(&img);
        let back = decode_ppm(&bytes).map_err(|e| e.to_string())?;
        ensure(back == img, format!("ppm case {case} changed pixels"))?;
        ensure(encode_ppm(&back) == bytes, format!("ppm case {case} is not byte-stable"))?;

        let px: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..=255)).collect();
        let gray = GrayImage::new(w, h, px).unwrap();
        let gbytes = encode_pgm(&gray);
        let gback = decode_pgm(&gbytes).map_err(|e| e.to_string())?;
        ensure(gback == gray, format!("pgm case {case} changed pixels"))?;

        let entries: Vec<TensorEntry> = (0..rng.random_range(1..=4))
            .map(|k| TensorEntry {
                name: format!("t{case}.{k}"),
                dims: vec![w, 2],
                data: (0..w * 2).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
            })
            .collect();
        let cbytes = encode_checkpoint(&entries);
        let centries = decode_checkpoint(&cbytes).map_err(|e| e.to_string())?;
        ensure(centries == entries, format!("checkpoint case {case} changed tensors"))?;
        ensure(
            encode_checkpoint(&centries) == cbytes,
            format!("checkpoint case {case} is not byte-stable"),
        )?;
    }
    Ok(())
}

fn forward_determinism() -> CheckResult {
    let cfg = ModelConfig { base_channels: 4, state_dim: 4, window: 2, expansion: 2, scan_block: 16 };
    let weights = init_weights::<f32>(&cfg, 9).map_err(|e| e.to_string())?;
    let img = Tensor::from_fn(&[1, 3, 64, 64], |i| ((i * 131 % 255) as f32) / 255.0);
    let y1 = forward(&img, &weights, &cfg).map_err(|e| e.to_string())?;
    let y2 = forward(&img, &weights, &cfg).map_err(|e| e.to_string())?;
    ensure(y1.data() == y2.data(), "two identical forward passes disagree bitwise")?;
    ensure(y1.dims() == [1, 2, 64, 64], format!("output dims {:?}", y1.dims()))?;
    for p in 0..64 * 64 {
        let s = y1.data()[p] + y1.data()[64 * 64 + p];
        ensure(
            (s - 1.0).abs() < 1e-5,
            format!("pixel {p}: channel sum {s} strays from 1"),
        )?;
    }
    Ok(())
}

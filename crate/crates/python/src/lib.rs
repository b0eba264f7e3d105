//! Python bindings for the segmentation core. Tensors cross the boundary as
//! flat row-major `float` lists plus explicit extents, masks as 8-bit pixel
//! lists (128 and above is the positive class), so the module needs nothing
//! beyond the standard library on the Python side.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use blacksoil_core::data::checkpoint::{load_checkpoint, save_checkpoint};
use blacksoil_core::data::netpbm::{load_ppm, save_pgm};
use blacksoil_core::data::{plan_tiles, GrayImage, MaskImage};
use blacksoil_core::loss;
use blacksoil_core::model::{self, ModelConfig};
use blacksoil_core::scan::{build_scan_order, ScanStrategy};
use blacksoil_core::ssm::{discretize, scan_backward, scan_blocked, scan_sequential, ScanInputs};
use blacksoil_core::tensor::Tensor;
use blacksoil_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn strategy_for(name: &str, window: Option<usize>) -> PyResult<ScanStrategy> {
    let mut s: ScanStrategy = name.parse().map_err(py_err)?;
    if let Some(w) = window {
        s.window = w;
    }
    Ok(s)
}

/// Pixel visiting order of one scan strategy on an h-by-w grid, as flat
/// row-major pixel indices.
#[pyfunction]
#[pyo3(signature = (h, w, strategy, window=None))]
fn scan_order(h: usize, w: usize, strategy: &str, window: Option<usize>) -> PyResult<Vec<usize>> {
    let p = build_scan_order(h, w, strategy_for(strategy, window)?).map_err(py_err)?;
    Ok(p.order().to_vec())
}

#[allow(clippy::too_many_arguments)]
fn scan_inputs(
    x: Vec<f64>,
    delta: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    a: Vec<f64>,
    batch: usize,
    length: usize,
    channels: usize,
    states: usize,
) -> PyResult<ScanInputs<f64>> {
    ScanInputs::new(
        Tensor::new(vec![batch, length, channels], x).map_err(py_err)?,
        Tensor::new(vec![batch, length, channels], delta).map_err(py_err)?,
        Tensor::new(vec![batch, length, states], b).map_err(py_err)?,
        Tensor::new(vec![batch, length, states], c).map_err(py_err)?,
        Tensor::new(vec![channels, states], a).map_err(py_err)?,
    )
    .map_err(py_err)
}

/// Selective state-space scan. `x` and `delta` are [batch, length, channels],
/// `b` and `c` are [batch, length, states], `a` is [channels, states] and
/// strictly negative; `delta` is strictly positive. Returns the flat
/// [batch, length, channels] output; `block` switches to the chunked kernel.
#[pyfunction]
#[pyo3(signature = (x, delta, b, c, a, batch, length, channels, states, block=None))]
#[allow(clippy::too_many_arguments)]
fn selective_scan(
    x: Vec<f64>,
    delta: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    a: Vec<f64>,
    batch: usize,
    length: usize,
    channels: usize,
    states: usize,
    block: Option<usize>,
) -> PyResult<Vec<f64>> {
    let inputs = scan_inputs(x, delta, b, c, a, batch, length, channels, states)?;
    let step = discretize(&inputs).map_err(py_err)?;
    let y = match block {
        Some(bl) => scan_blocked(&step, &inputs.x, &inputs.cmat, bl),
        None => scan_sequential(&step, &inputs.x, &inputs.cmat),
    }
    .map_err(py_err)?;
    Ok(y.data().to_vec())
}

/// Analytic gradients of `sum(grad_y * scan(x, delta, b, c, a))` with respect
/// to every input, keyed "x", "delta", "b", "c", "a".
#[pyfunction]
#[pyo3(signature = (x, delta, b, c, a, grad_y, batch, length, channels, states))]
#[allow(clippy::too_many_arguments)]
fn scan_gradients(
    x: Vec<f64>,
    delta: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    a: Vec<f64>,
    grad_y: Vec<f64>,
    batch: usize,
    length: usize,
    channels: usize,
    states: usize,
) -> PyResult<HashMap<&'static str, Vec<f64>>> {
    let inputs = scan_inputs(x, delta, b, c, a, batch, length, channels, states)?;
    let gy = Tensor::new(vec![batch, length, channels], grad_y).map_err(py_err)?;
    let g = scan_backward(&inputs, &gy).map_err(py_err)?;
    Ok(HashMap::from([
        ("x", g.d_x.data().to_vec()),
        ("delta", g.d_delta.data().to_vec()),
        ("b", g.d_bmat.data().to_vec()),
        ("c", g.d_cmat.data().to_vec()),
        ("a", g.d_a.data().to_vec()),
    ]))
}

fn loss_pair(
    y: Vec<f64>,
    t: Vec<f64>,
    batch: usize,
    height: usize,
    width: usize,
) -> PyResult<(Tensor<f64>, Tensor<f64>)> {
    let dims = vec![batch, 2, height, width];
    Ok((
        Tensor::new(dims.clone(), y).map_err(py_err)?,
        Tensor::new(dims, t).map_err(py_err)?,
    ))
}

/// Pixel-averaged cross-entropy of a flat [batch, 2, height, width]
/// probability field against a one-hot target of the same layout.
#[pyfunction]
fn ce_loss(y: Vec<f64>, t: Vec<f64>, batch: usize, height: usize, width: usize) -> PyResult<f64> {
    let (y, t) = loss_pair(y, t, batch, height, width)?;
    loss::ce_loss(&y, &t).map_err(py_err)
}

/// Mean soft IoU loss over the two classes, batch pooled per class.
#[pyfunction]
fn miou_loss(y: Vec<f64>, t: Vec<f64>, batch: usize, height: usize, width: usize) -> PyResult<f64> {
    let (y, t) = loss_pair(y, t, batch, height, width)?;
    loss::miou_loss(&y, &t).map_err(py_err)
}

/// `lambda1 * ce_loss + lambda2 * miou_loss` in one call.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn total_loss(
    y: Vec<f64>,
    t: Vec<f64>,
    batch: usize,
    height: usize,
    width: usize,
    lambda1: f64,
    lambda2: f64,
) -> PyResult<f64> {
    let (y, t) = loss_pair(y, t, batch, height, width)?;
    loss::total_loss(&y, &t, &loss::LossWeights { lambda1, lambda2 }).map_err(py_err)
}

/// Confusion-count quality of a predicted mask against ground truth. Both
/// masks are flat 8-bit pixel lists; values of 128 and above are the positive
/// class. Returns the seven percent scores keyed like the CSV header.
#[pyfunction]
fn evaluate_masks(
    pred: Vec<u8>,
    gt: Vec<u8>,
    width: usize,
    height: usize,
) -> PyResult<HashMap<&'static str, f64>> {
    let p = MaskImage::from_gray(&GrayImage::new(width, height, pred).map_err(py_err)?);
    let g = MaskImage::from_gray(&GrayImage::new(width, height, gt).map_err(py_err)?);
    let r = loss::evaluate(&p, &g).map_err(py_err)?;
    Ok(HashMap::from([
        ("IoU_blk", r.iou_blk),
        ("IoU_mat", r.iou_mat),
        ("mIoU", r.miou),
        ("F1_blk", r.f1_blk),
        ("F1_mat", r.f1_mat),
        ("mean_F1", r.mean_f1),
        ("ACC", r.acc),
    ]))
}

/// (x, y) crop anchors of an nx-by-ny tile grid over a scene, row-major with
/// y varying slowest.
#[pyfunction]
fn plan_tile_anchors(
    width: usize,
    height: usize,
    tile: usize,
    nx: usize,
    ny: usize,
) -> PyResult<Vec<(usize, usize)>> {
    Ok(plan_tiles(width, height, tile, nx, ny).map_err(py_err)?.anchors)
}

fn config(
    channels: usize,
    state_dim: usize,
    window: usize,
    expansion: usize,
    block: usize,
) -> ModelConfig {
    ModelConfig { base_channels: channels, state_dim, window, expansion, scan_block: block }
}

/// Draws fresh seeded model weights and writes them as a checkpoint file.
#[pyfunction]
#[pyo3(signature = (path, seed=0, channels=16, state_dim=16, window=2, expansion=2, block=64))]
fn init_checkpoint(
    path: PathBuf,
    seed: u64,
    channels: usize,
    state_dim: usize,
    window: usize,
    expansion: usize,
    block: usize,
) -> PyResult<()> {
    let cfg = config(channels, state_dim, window, expansion, block);
    let w = model::init_weights::<f32>(&cfg, seed).map_err(py_err)?;
    save_checkpoint(&path, &model::to_entries(&w)).map_err(py_err)
}

/// Segments one PPM image with a checkpoint and writes the mask as a binary
/// PGM; `probs_prefix` additionally writes `{prefix}_blk.pgm` and
/// `{prefix}_mat.pgm` probability planes. The config arguments must match
/// the checkpoint.
#[pyfunction]
#[pyo3(signature = (weights, image, out, probs_prefix=None, channels=16, state_dim=16,
                    window=2, expansion=2, block=64))]
#[allow(clippy::too_many_arguments)]
fn infer_files(
    weights: PathBuf,
    image: PathBuf,
    out: PathBuf,
    probs_prefix: Option<String>,
    channels: usize,
    state_dim: usize,
    window: usize,
    expansion: usize,
    block: usize,
) -> PyResult<()> {
    let cfg = config(channels, state_dim, window, expansion, block);
    let entries = load_checkpoint(&weights).map_err(py_err)?;
    let w = model::from_entries::<f32>(entries, &cfg).map_err(py_err)?;
    let img = load_ppm(&image).map_err(py_err)?;
    let (mask, probs) = model::infer_image(&img, &w, &cfg).map_err(py_err)?;
    save_pgm(&out, &mask.to_gray()).map_err(py_err)?;
    if let Some(prefix) = probs_prefix {
        let hw = img.width() * img.height();
        for (ch, suffix) in ["blk", "mat"].into_iter().enumerate() {
            let plane: Vec<u8> = probs.data()[ch * hw..(ch + 1) * hw]
                .iter()
                .map(|p| (f64::from(*p) * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            let g = GrayImage::new(img.width(), img.height(), plane).map_err(py_err)?;
            save_pgm(&PathBuf::from(format!("{prefix}_{suffix}.pgm")), &g).map_err(py_err)?;
        }
    }
    Ok(())
}

#[pymodule]
fn blacksoil(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(scan_order, m)?)?;
    m.add_function(wrap_pyfunction!(selective_scan, m)?)?;
    m.add_function(wrap_pyfunction!(scan_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(ce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(miou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_masks, m)?)?;
    m.add_function(wrap_pyfunction!(plan_tile_anchors, m)?)?;
    m.add_function(wrap_pyfunction!(init_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(infer_files, m)?)?;
    Ok(())
}

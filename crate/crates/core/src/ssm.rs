//! Selective state-space scan kernel.
//!
//! The continuous system h' = A h + B x, y = C h is discretized per token
//! with zero-order hold over the step size delta:
//!
//! ```text
//! abar = exp(delta * a)                  (per channel d, state n)
//! bbar = ((exp(delta * a) - 1) / a) * B
//! ```
//!
//! and then run as the linear recurrence
//!
//! ```text
//! h_l = abar_l * h_{l-1} + bbar_l * x_l        (elementwise over n)
//! y_l = sum_n c_l[n] * h_l[n]
//! ```
//!
//! A is diagonal per channel and strictly negative, delta strictly positive,
//! so 0 < abar < 1 and the recurrence is stable. Three evaluation routes are
//! provided: the plain sequential recurrence, an O(L^2) materialized-matrix
//! oracle for cross-checking, and a blocked evaluation built on the
//! associative combinator (a1,u1)∘(a2,u2) = (a2*a1, a2*u1+u2). A blocked run
//! with block >= L executes the exact same instruction sequence as the
//! sequential route.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};
use rayon::prelude::*;

/// Below this magnitude of delta*a, (exp(s)-1)/a is evaluated by its
/// second-order Taylor form delta*(1 + s/2) to avoid cancellation.
pub const ZOH_TAYLOR_THRESHOLD: f64 = 1e-6;

/// Longest sequence the materialized oracle accepts by default.
pub const MATERIALIZED_MAX_L: usize = 64;

/// Everything the selective scan consumes: per-token input x, step sizes,
/// input/output projections B and C, and the shared diagonal transition A.
#[derive(Clone, Debug)]
pub struct ScanInputs<T: Element> {
    /// [B,L,D] input sequence features.
    pub x: Tensor<T>,
    /// [B,L,D] step sizes, strictly positive.
    pub delta: Tensor<T>,
    /// [B,L,N] input projection.
    pub bmat: Tensor<T>,
    /// [B,L,N] output projection.
    pub cmat: Tensor<T>,
    /// [D,N] diagonal transition entries, strictly negative.
    pub a: Tensor<T>,
}

impl<T: Element> ScanInputs<T> {
    // negated comparisons so NaN steps and transitions fail validation too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(
        x: Tensor<T>,
        delta: Tensor<T>,
        bmat: Tensor<T>,
        cmat: Tensor<T>,
        a: Tensor<T>,
    ) -> Result<Self> {
        if x.rank() != 3 {
            return Err(Error::shape(format!("scan x: expected rank 3, got {:?}", x.dims())));
        }
        let (b, l, d) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        delta.expect_dims(&[b, l, d], "scan delta")?;
        if bmat.rank() != 3 || bmat.dims()[0] != b || bmat.dims()[1] != l {
            return Err(Error::shape(format!(
                "scan B: expected [{b},{l},N], got {:?}",
                bmat.dims()
            )));
        }
        let n = bmat.dims()[2];
        cmat.expect_dims(&[b, l, n], "scan C")?;
        a.expect_dims(&[d, n], "scan A")?;
        if delta.data().iter().any(|v| !(*v > T::zero())) {
            return Err(Error::domain("scan delta must be strictly positive"));
        }
        if a.data().iter().any(|v| !(*v < T::zero())) {
            return Err(Error::domain("scan A must be strictly negative"));
        }
        Ok(ScanInputs { x, delta, bmat, cmat, a })
    }

    /// (batch, length, channels, state dim)
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.x.dims()[0],
            self.x.dims()[1],
            self.x.dims()[2],
            self.bmat.dims()[2],
        )
    }
}

/// Per-token discretized transition and input terms, both [B,L,D,N].
#[derive(Clone, Debug)]
pub struct DiscretizedStep<T: Element> {
    pub abar: Tensor<T>,
    pub bbar: Tensor<T>,
}

impl<T: Element> DiscretizedStep<T> {
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.abar.dims();
        (d[0], d[1], d[2], d[3])
    }
}

/// exp(s) and the input-term factor g = (exp(s)-1)/a for s = dt*a, with the
/// Taylor fallback near s = 0.
#[inline]
fn zoh_pair<T: Element>(dt: T, a: T) -> (T, T) {
    let s = dt * a;
    let abar = s.exp();
    let g = if s.abs().as_f64() < ZOH_TAYLOR_THRESHOLD {
        dt * (T::one() + s * T::from_f64(0.5))
    } else {
        s.exp_m1() / a
    };
    (abar, g)
}

/// Zero-order-hold discretization of the full input batch.
pub fn discretize<T: Element>(inputs: &ScanInputs<T>) -> Result<DiscretizedStep<T>> {
    let (b, l, d, n) = inputs.dims();
    let ad = inputs.a.data();
    let dd = inputs.delta.data();
    let bd = inputs.bmat.data();
    let mut abar = Tensor::zeros(&[b, l, d, n]);
    let mut bbar = Tensor::zeros(&[b, l, d, n]);
    abar.data_mut()
        .par_chunks_mut(n)
        .zip(bbar.data_mut().par_chunks_mut(n))
        .enumerate()
        .for_each(|(row, (ab, bb))| {
            // row enumerates (b, l, d)
            let di = row % d;
            let bl = row / d;
            let dt = dd[row];
            for ni in 0..n {
                let (e, g) = zoh_pair(dt, ad[di * n + ni]);
                ab[ni] = e;
                bb[ni] = g * bd[bl * n + ni];
            }
        });
    Ok(DiscretizedStep { abar, bbar })
}

fn check_scan_shapes<T: Element>(
    step: &DiscretizedStep<T>,
    x: &Tensor<T>,
    cmat: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (b, l, d, n) = step.dims();
    step.bbar.expect_dims(&[b, l, d, n], "scan bbar")?;
    x.expect_dims(&[b, l, d], "scan x")?;
    cmat.expect_dims(&[b, l, n], "scan C")?;
    Ok((b, l, d, n))
}

/// Recurrence over positions [l0, l1) of one (batch, channel) lane, starting
/// from state h, writing outputs into ylane (indexed by position).
#[inline]
#[allow(clippy::too_many_arguments)]
fn lane_run<T: Element>(
    abar: &[T],
    bbar: &[T],
    xd: &[T],
    cd: &[T],
    ylane: &mut [T],
    h: &mut [T],
    bi: usize,
    di: usize,
    (l0, l1): (usize, usize),
    (l, d, n): (usize, usize, usize),
) {
    for li in l0..l1 {
        let row = ((bi * l + li) * d + di) * n;
        let crow = (bi * l + li) * n;
        let xv = xd[(bi * l + li) * d + di];
        let mut acc = T::zero();
        for ni in 0..n {
            let hn = abar[row + ni] * h[ni] + bbar[row + ni] * xv;
            h[ni] = hn;
            acc = acc + cd[crow + ni] * hn;
        }
        ylane[li] = acc;
    }
}

fn scan_lanes<T: Element>(
    step: &DiscretizedStep<T>,
    x: &Tensor<T>,
    cmat: &Tensor<T>,
    block: usize,
) -> Result<Tensor<T>> {
    let (b, l, d, n) = check_scan_shapes(step, x, cmat)?;
    let abar = step.abar.data();
    let bbar = step.bbar.data();
    let xd = x.data();
    let cd = cmat.data();

    // lanes laid out [B,D,L] so each can be a contiguous mutable chunk
    let mut lanes = vec![T::zero(); b * d * l];
    lanes.par_chunks_mut(l).enumerate().for_each(|(lane, ylane)| {
        let bi = lane / d;
        let di = lane % d;
        let mut h = vec![T::zero(); n];
        if block >= l {
            lane_run(abar, bbar, xd, cd, ylane, &mut h, bi, di, (0, l), (l, d, n));
            return;
        }
        let nblocks = l.div_ceil(block);
        // phase 1: per-block aggregates (prod of abar, block run from zero)
        let mut agg_a = vec![T::one(); nblocks * n];
        let mut agg_u = vec![T::zero(); nblocks * n];
        for j in 0..nblocks {
            let aj = &mut agg_a[j * n..(j + 1) * n];
            let uj = &mut agg_u[j * n..(j + 1) * n];
            for li in j * block..((j + 1) * block).min(l) {
                let row = ((bi * l + li) * d + di) * n;
                let xv = xd[(bi * l + li) * d + di];
                for ni in 0..n {
                    uj[ni] = abar[row + ni] * uj[ni] + bbar[row + ni] * xv;
                    aj[ni] = aj[ni] * abar[row + ni];
                }
            }
        }
        // phase 2: carry states across blocks, left to right
        let mut carries = vec![T::zero(); nblocks * n];
        for j in 1..nblocks {
            for ni in 0..n {
                carries[j * n + ni] = agg_a[(j - 1) * n + ni] * carries[(j - 1) * n + ni]
                    + agg_u[(j - 1) * n + ni];
            }
        }
        // phase 3: rerun each block from its carry, emitting outputs
        for j in 0..nblocks {
            h.copy_from_slice(&carries[j * n..(j + 1) * n]);
            let span = (j * block, ((j + 1) * block).min(l));
            lane_run(abar, bbar, xd, cd, ylane, &mut h, bi, di, span, (l, d, n));
        }
    });

    // transpose [B,D,L] -> [B,L,D]
    let mut out = Tensor::zeros(&[b, l, d]);
    let od = out.data_mut();
    for bi in 0..b {
        for di in 0..d {
            let lane = &lanes[(bi * d + di) * l..(bi * d + di + 1) * l];
            for li in 0..l {
                od[(bi * l + li) * d + di] = lane[li];
            }
        }
    }
    Ok(out)
}

/// Plain left-to-right evaluation of the recurrence.
pub fn scan_sequential<T: Element>(
    step: &DiscretizedStep<T>,
    x: &Tensor<T>,
    cmat: &Tensor<T>,
) -> Result<Tensor<T>> {
    let l = x.dims().get(1).copied().unwrap_or(0).max(1);
    scan_lanes(step, x, cmat, l)
}

/// Blocked evaluation via the associative combinator; agrees with the
/// sequential route within 1e-4 relative in single precision (1e-10 double)
/// and exactly when block >= L.
pub fn scan_blocked<T: Element>(
    step: &DiscretizedStep<T>,
    x: &Tensor<T>,
    cmat: &Tensor<T>,
    block: usize,
) -> Result<Tensor<T>> {
    if block == 0 {
        return Err(Error::domain("scan block size must be positive"));
    }
    scan_lanes(step, x, cmat, block)
}

/// Brute-force oracle: materializes, per (batch, channel), the L-by-L
/// lower-triangular operator with entries
/// M[l,k] = sum_n c_l[n] * (prod_{j=k+1..l} abar_j[n]) * bbar_k[n]
/// and applies it to x. Quadratic in L, so refuses sequences longer than
/// `max_l`.
pub fn scan_materialized<T: Element>(
    step: &DiscretizedStep<T>,
    x: &Tensor<T>,
    cmat: &Tensor<T>,
    max_l: usize,
) -> Result<Tensor<T>> {
    let (b, l, d, n) = check_scan_shapes(step, x, cmat)?;
    if l > max_l {
        return Err(Error::domain(format!(
            "materialized scan is an O(L^2) oracle; L={l} exceeds max_l={max_l}"
        )));
    }
    let abar = step.abar.data();
    let bbar = step.bbar.data();
    let xd = x.data();
    let cd = cmat.data();
    let mut out = Tensor::zeros(&[b, l, d]);
    let od = out.data_mut();
    let mut m = vec![T::zero(); l * l];
    let mut prod = vec![T::one(); n];
    for bi in 0..b {
        for di in 0..d {
            m.fill(T::zero());
            for k in 0..l {
                prod.fill(T::one());
                let bbar_k = &bbar[((bi * l + k) * d + di) * n..];
                for li in k..l {
                    if li > k {
                        let arow = &abar[((bi * l + li) * d + di) * n..];
                        for ni in 0..n {
                            prod[ni] = prod[ni] * arow[ni];
                        }
                    }
                    let crow = &cd[(bi * l + li) * n..];
                    let mut acc = T::zero();
                    for ni in 0..n {
                        acc = acc + crow[ni] * prod[ni] * bbar_k[ni];
                    }
                    m[li * l + k] = acc;
                }
            }
            for li in 0..l {
                let mut acc = T::zero();
                for k in 0..=li {
                    acc = acc + m[li * l + k] * xd[(bi * l + k) * d + di];
                }
                od[(bi * l + li) * d + di] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss with respect to every scan input, given the
/// loss gradient at the scan output.
#[derive(Clone, Debug)]
pub struct ScanGradients<T: Element> {
    pub d_x: Tensor<T>,
    pub d_delta: Tensor<T>,
    pub d_bmat: Tensor<T>,
    pub d_cmat: Tensor<T>,
    pub d_a: Tensor<T>,
}

/// Analytic reverse pass through discretize + scan.
///
/// Recomputes the forward states, then runs the adjoint recurrence
/// lam_l = gy_l * c_l + abar_{l+1} * lam_{l+1} per lane and chains the
/// per-element gradients through the ZOH formulas (both branches of the
/// Taylor guard have their own derivatives). Double precision is the
/// intended carrier for verification work.
pub fn scan_backward<T: Element>(
    inputs: &ScanInputs<T>,
    grad_y: &Tensor<T>,
) -> Result<ScanGradients<T>> {
    let (b, l, d, n) = inputs.dims();
    grad_y.expect_dims(&[b, l, d], "scan grad_y")?;
    let step = discretize(inputs)?;
    let abar = step.abar.data();
    let bbar = step.bbar.data();
    let xd = inputs.x.data();
    let dd = inputs.delta.data();
    let bd = inputs.bmat.data();
    let cd = inputs.cmat.data();
    let ad = inputs.a.data();
    let gy = grad_y.data();

    // forward again, retaining every state
    let mut h_all = vec![T::zero(); b * l * d * n];
    for bi in 0..b {
        for di in 0..d {
            let mut h = vec![T::zero(); n];
            for li in 0..l {
                let row = ((bi * l + li) * d + di) * n;
                let xv = xd[(bi * l + li) * d + di];
                for ni in 0..n {
                    h[ni] = abar[row + ni] * h[ni] + bbar[row + ni] * xv;
                    h_all[row + ni] = h[ni];
                }
            }
        }
    }

    let mut d_x = Tensor::zeros(&[b, l, d]);
    let mut d_delta = Tensor::zeros(&[b, l, d]);
    let mut d_bmat = Tensor::zeros(&[b, l, n]);
    let mut d_cmat = Tensor::zeros(&[b, l, n]);
    let mut d_a = Tensor::zeros(&[d, n]);

    let half = T::from_f64(0.5);
    let mut lam = vec![T::zero(); n];
    let mut carry = vec![T::zero(); n];
    for bi in 0..b {
        for di in 0..d {
            lam.fill(T::zero());
            carry.fill(T::zero());
            for li in (0..l).rev() {
                let row = ((bi * l + li) * d + di) * n;
                let crow = (bi * l + li) * n;
                let g_out = gy[(bi * l + li) * d + di];
                let xv = xd[(bi * l + li) * d + di];
                let dt = dd[(bi * l + li) * d + di];
                let mut acc_dx = T::zero();
                let mut acc_ddt = T::zero();
                for ni in 0..n {
                    let lv = g_out * cd[crow + ni] + carry[ni];
                    lam[ni] = lv;

                    // output projection sees the state directly
                    d_cmat.data_mut()[crow + ni] =
                        d_cmat.data_mut()[crow + ni] + g_out * h_all[row + ni];

                    let h_prev = if li == 0 {
                        T::zero()
                    } else {
                        h_all[row - d * n + ni]
                    };
                    let d_abar = lv * h_prev;
                    let d_bbar = lv * xv;
                    acc_dx = acc_dx + lv * bbar[row + ni];

                    // chain through abar = exp(dt*a), bbar = g(dt,a)*B
                    let av = ad[di * n + ni];
                    let s = dt * av;
                    let e = abar[row + ni];
                    let bv = bd[crow + ni];
                    let (dg_ddt, dg_da) = if s.abs().as_f64() < ZOH_TAYLOR_THRESHOLD {
                        (T::one() + s, dt * dt * half)
                    } else {
                        let g = s.exp_m1() / av;
                        (e, (dt * e - g) / av)
                    };
                    acc_ddt = acc_ddt + d_abar * (av * e) + d_bbar * bv * dg_ddt;
                    d_a.data_mut()[di * n + ni] =
                        d_a.data_mut()[di * n + ni] + d_abar * (dt * e) + d_bbar * bv * dg_da;

                    let g = if s.abs().as_f64() < ZOH_TAYLOR_THRESHOLD {
                        dt * (T::one() + s * half)
                    } else {
                        s.exp_m1() / av
                    };
                    d_bmat.data_mut()[crow + ni] = d_bmat.data_mut()[crow + ni] + d_bbar * g;

                    carry[ni] = abar[row + ni] * lv;
                }
                d_x.data_mut()[(bi * l + li) * d + di] = acc_dx;
                d_delta.data_mut()[(bi * l + li) * d + di] = acc_ddt;
            }
        }
    }

    Ok(ScanGradients { d_x, d_delta, d_bmat, d_cmat, d_a })
}

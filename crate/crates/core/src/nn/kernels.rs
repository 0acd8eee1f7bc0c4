//! Slice-level compute kernels: im2col convolution, pooling and batch normalisation.
//!
//! Every kernel works on a canonical `[N, C, D, H, W]` view; 1-D and 2-D
//! layers map their spatial axes onto the trailing dimensions. Parallel
//! reductions use fixed-size sample chunks combined in index order, so results
//! do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per partial sum in parallel weight-gradient reductions.
const GRAD_CHUNK: usize = 4;

/// `C = alpha * op(A) * op(B) + beta * C` on row-major slices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    c: &mut [f32],
    beta: f32,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices are at least as long as the strided extents asserted above.
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Spatial extents of a single sample, canonicalised to three axes.
pub(crate) type Dims3 = [usize; 3];

/// Geometry of a convolution in canonical 3-D form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvPlan {
    pub c_in: usize,
    pub c_out: usize,
    pub input: Dims3,
    pub kernel: Dims3,
    pub stride: Dims3,
    pub dilation: Dims3,
    pub pad: Dims3,
    pub output: Dims3,
}

pub(crate) fn out_extent(n: usize, k: usize, s: usize, d: usize, p: usize) -> Option<usize> {
    let span = d * (k - 1) + 1;
    let padded = n + 2 * p;
    (padded >= span).then(|| (padded - span) / s + 1)
}

impl ConvPlan {
    pub fn new(
        c_in: usize,
        c_out: usize,
        input: Dims3,
        kernel: Dims3,
        stride: Dims3,
        dilation: Dims3,
        pad: Dims3,
    ) -> Result<Self> {
        let mut output = [0; 3];
        for i in 0..3 {
            output[i] = out_extent(input[i], kernel[i], stride[i], dilation[i], pad[i]).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "kernel {:?} (dilation {:?}) larger than padded input {:?} (padding {:?})",
                    kernel, dilation, input, pad
                ))
            })?;
        }
        Ok(ConvPlan { c_in, c_out, input, kernel, stride, dilation, pad, output })
    }

    fn k_rows(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }

    fn out_len(&self) -> usize {
        self.output.iter().product()
    }

    fn in_len(&self) -> usize {
        self.c_in * self.input.iter().product::<usize>()
    }
}

/// Input index along one axis for output position `o` and kernel tap `k`, if inside the input.
#[inline]
fn src_index(o: usize, k: usize, s: usize, d: usize, p: usize, n: usize) -> Option<usize> {
    let i = (o * s + k * d) as isize - p as isize;
    (i >= 0 && (i as usize) < n).then_some(i as usize)
}

/// Kernel taps `[lo, hi)` (unit dilation) that land inside the input for output position `o`.
#[inline]
fn tap_range(o: usize, k: usize, s: usize, p: usize, n: usize) -> (usize, usize) {
    let start = (o * s) as isize - p as isize;
    let lo = (-start).max(0) as usize;
    let hi = (n as isize - start).clamp(0, k as isize) as usize;
    (lo.min(hi), hi)
}

/// Range of output positions along one axis whose source index is inside the input.
#[inline]
fn valid_range(out: usize, k: usize, s: usize, d: usize, p: usize, n: usize) -> (usize, usize) {
    let offset = (k * d) as isize - p as isize;
    // o * s + offset >= 0  and  o * s + offset < n
    let lo = if offset >= 0 { 0 } else { ((-offset) as usize).div_ceil(s) };
    let hi_num = n as isize - offset;
    let hi = if hi_num <= 0 { 0 } else { ((hi_num as usize).div_ceil(s)).min(out) };
    (lo.min(hi), hi)
}

fn im2col(plan: &ConvPlan, x: &[f32], col: &mut [f32]) {
    let [id, ih, iw] = plan.input;
    let [od, oh, ow] = plan.output;
    let [kd, kh, kw] = plan.kernel;
    let [sd, sh, sw] = plan.stride;
    let [dd, dh, dw] = plan.dilation;
    let [pd, ph, pw] = plan.pad;
    let p_len = od * oh * ow;
    let mut row = 0;
    for c in 0..plan.c_in {
        let xc = &x[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut col[row * p_len..(row + 1) * p_len];
                    let (w_lo, w_hi) = valid_range(ow, e, sw, dw, pw, iw);
                    for z in 0..od {
                        let Some(zi) = src_index(z, a, sd, dd, pd, id) else {
                            dst[z * oh * ow..(z + 1) * oh * ow].fill(0.0);
                            continue;
                        };
                        for y in 0..oh {
                            let out_row = &mut dst[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                            let Some(yi) = src_index(y, b, sh, dh, ph, ih) else {
                                out_row.fill(0.0);
                                continue;
                            };
                            let src = &xc[(zi * ih + yi) * iw..(zi * ih + yi + 1) * iw];
                            out_row[..w_lo].fill(0.0);
                            out_row[w_hi..].fill(0.0);
                            let base = (e * dw) as isize - pw as isize;
                            for (o, v) in out_row[w_lo..w_hi].iter_mut().enumerate() {
                                *v = src[(((w_lo + o) * sw) as isize + base) as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im(plan: &ConvPlan, col: &[f32], dx: &mut [f32]) {
    let [id, ih, iw] = plan.input;
    let [od, oh, ow] = plan.output;
    let [kd, kh, kw] = plan.kernel;
    let [sd, sh, sw] = plan.stride;
    let [dd, dh, dw] = plan.dilation;
    let [pd, ph, pw] = plan.pad;
    let p_len = od * oh * ow;
    let mut row = 0;
    for c in 0..plan.c_in {
        let xc = &mut dx[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &col[row * p_len..(row + 1) * p_len];
                    let (w_lo, w_hi) = valid_range(ow, e, sw, dw, pw, iw);
                    for z in 0..od {
                        let Some(zi) = src_index(z, a, sd, dd, pd, id) else { continue };
                        for y in 0..oh {
                            let Some(yi) = src_index(y, b, sh, dh, ph, ih) else { continue };
                            let g = &src[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                            let dst = &mut xc[(zi * ih + yi) * iw..(zi * ih + yi + 1) * iw];
                            let base = (e * dw) as isize - pw as isize;
                            for o in w_lo..w_hi {
                                dst[((o * sw) as isize + base) as usize] += g[o];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Per-frame geometry of a 3-D convolution with unit depth stride.
///
/// Such a convolution is evaluated as one 2-D im2col over every input frame,
/// a single GEMM against the weights arranged as `[(c_out, kd), (c_in, kh, kw)]`
/// and a shift-add over the `kd` depth taps. This avoids replicating each frame
/// `kd` times in the column buffer.
fn frame_plan(plan: &ConvPlan) -> Option<ConvPlan> {
    (plan.kernel[0] > 1 && plan.stride[0] == 1).then(|| ConvPlan {
        c_in: plan.c_in,
        c_out: plan.c_out,
        input: plan.input,
        kernel: [1, plan.kernel[1], plan.kernel[2]],
        stride: [1, plan.stride[1], plan.stride[2]],
        dilation: [1, plan.dilation[1], plan.dilation[2]],
        pad: [0, plan.pad[1], plan.pad[2]],
        output: [plan.input[0], plan.output[1], plan.output[2]],
    })
}

/// `[c_out, c_in, kd, r]` weights to `[c_out, kd, c_in, r]` (and back with `inverse`).
fn depth_major(plan: &ConvPlan, w: &[f32], inverse: bool) -> Vec<f32> {
    let (co, ci, kd) = (plan.c_out, plan.c_in, plan.kernel[0]);
    let r = plan.kernel[1] * plan.kernel[2];
    let mut out = vec![0.0f32; w.len()];
    for o in 0..co {
        for c in 0..ci {
            for a in 0..kd {
                let std = ((o * ci + c) * kd + a) * r;
                let dm = ((o * kd + a) * ci + c) * r;
                let (src, dst) = if inverse { (dm, std) } else { (std, dm) };
                out[dst..dst + r].copy_from_slice(&w[src..src + r]);
            }
        }
    }
    out
}

/// Input frame feeding output frame `z` through depth tap `a`.
#[inline]
fn depth_source(plan: &ConvPlan, z: usize, a: usize) -> Option<usize> {
    src_index(z, a, 1, plan.dilation[0], plan.pad[0], plan.input[0])
}

fn conv_forward_framed(plan: &ConvPlan, fp: &ConvPlan, x: &[f32], wd: &[f32], col: &mut [f32], zbuf: &mut [f32], y: &mut [f32]) {
    let kd = plan.kernel[0];
    let plane = plan.output[1] * plan.output[2];
    let fp_len = fp.out_len();
    im2col(fp, x, col);
    sgemm(plan.c_out * kd, fp.k_rows(), fp_len, wd, false, col, false, zbuf, 0.0);
    y.fill(0.0);
    for co in 0..plan.c_out {
        for a in 0..kd {
            let zrow = &zbuf[(co * kd + a) * fp_len..(co * kd + a + 1) * fp_len];
            for z in 0..plan.output[0] {
                let Some(zi) = depth_source(plan, z, a) else { continue };
                let dst = &mut y[(co * plan.output[0] + z) * plane..(co * plan.output[0] + z + 1) * plane];
                for (d, &v) in dst.iter_mut().zip(&zrow[zi * plane..(zi + 1) * plane]) {
                    *d += v;
                }
            }
        }
    }
}

/// Scatters `dy` `[c_out, od, plane]` onto the per-input-frame layout `[(c_out, kd), id, plane]`.
fn spread_depth(plan: &ConvPlan, dy: &[f32], dz: &mut [f32]) {
    let kd = plan.kernel[0];
    let plane = plan.output[1] * plan.output[2];
    let id = plan.input[0];
    dz.fill(0.0);
    for co in 0..plan.c_out {
        for a in 0..kd {
            let row = &mut dz[(co * kd + a) * id * plane..(co * kd + a + 1) * id * plane];
            for z in 0..plan.output[0] {
                let Some(zi) = depth_source(plan, z, a) else { continue };
                let src = &dy[(co * plan.output[0] + z) * plane..(co * plan.output[0] + z + 1) * plane];
                row[zi * plane..(zi + 1) * plane].copy_from_slice(src);
            }
        }
    }
}

/// Cross-correlation forward. `x` is `[n, c_in, input...]`, `w` is `[c_out, c_in, kernel...]`.
pub(crate) fn conv_forward(plan: &ConvPlan, n: usize, x: &[f32], w: &[f32], bias: Option<&[f32]>) -> Vec<f32> {
    let k = plan.k_rows();
    let p = plan.out_len();
    let in_len = plan.in_len();
    let mut out = vec![0.0f32; n * plan.c_out * p];
    let framed = frame_plan(plan).map(|fp| (fp, depth_major(plan, w, false)));
    out.par_chunks_mut(plan.c_out * p).enumerate().for_each_init(
        || match &framed {
            Some((fp, _)) => (vec![0.0f32; fp.k_rows() * fp.out_len()], vec![0.0f32; plan.c_out * plan.kernel[0] * fp.out_len()]),
            None => (vec![0.0f32; k * p], Vec::new()),
        },
        |(col, zbuf), (i, y)| {
            let xi = &x[i * in_len..(i + 1) * in_len];
            match &framed {
                Some((fp, wd)) => conv_forward_framed(plan, fp, xi, wd, col, zbuf, y),
                None => {
                    im2col(plan, xi, col);
                    sgemm(plan.c_out, k, p, w, false, col, false, y, 0.0);
                }
            }
            if let Some(b) = bias {
                for (co, row) in y.chunks_mut(p).enumerate() {
                    row.iter_mut().for_each(|v| *v += b[co]);
                }
            }
        },
    );
    out
}

/// Weight and bias gradients of a convolution.
pub(crate) fn conv_backward_params(
    plan: &ConvPlan,
    n: usize,
    x: &[f32],
    dy: &[f32],
    want_bias: bool,
) -> (Vec<f32>, Option<Vec<f32>>) {
    let k = plan.k_rows();
    let p = plan.out_len();
    let in_len = plan.in_len();
    let out_len = plan.c_out * p;
    let fp = frame_plan(plan);
    let chunks: Vec<(Vec<f32>, Vec<f64>)> = (0..n.div_ceil(GRAD_CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut dw = vec![0.0f32; plan.c_out * k];
            let mut db = vec![0.0f64; if want_bias { plan.c_out } else { 0 }];
            let (mut col, mut dz) = match &fp {
                Some(fp) => (vec![0.0f32; fp.k_rows() * fp.out_len()], vec![0.0f32; plan.c_out * plan.kernel[0] * fp.out_len()]),
                None => (vec![0.0f32; k * p], Vec::new()),
            };
            for i in ci * GRAD_CHUNK..((ci + 1) * GRAD_CHUNK).min(n) {
                let g = &dy[i * out_len..(i + 1) * out_len];
                match &fp {
                    Some(fp) => {
                        im2col(fp, &x[i * in_len..(i + 1) * in_len], &mut col);
                        spread_depth(plan, g, &mut dz);
                        sgemm(plan.c_out * plan.kernel[0], fp.out_len(), fp.k_rows(), &dz, false, &col, true, &mut dw, 1.0);
                    }
                    None => {
                        im2col(plan, &x[i * in_len..(i + 1) * in_len], &mut col);
                        sgemm(plan.c_out, p, k, g, false, &col, true, &mut dw, 1.0);
                    }
                }
                for (co, acc) in db.iter_mut().enumerate() {
                    *acc += g[co * p..(co + 1) * p].iter().map(|&v| v as f64).sum::<f64>();
                }
            }
            (dw, db)
        })
        .collect();
    let mut dw = vec![0.0f32; plan.c_out * k];
    let mut db = vec![0.0f64; if want_bias { plan.c_out } else { 0 }];
    for (cw, cb) in chunks {
        dw.iter_mut().zip(cw).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(cb).for_each(|(a, b)| *a += b);
    }
    if fp.is_some() {
        dw = depth_major(plan, &dw, true);
    }
    (dw, want_bias.then(|| db.into_iter().map(|v| v as f32).collect()))
}

/// Input gradient of a convolution.
pub(crate) fn conv_backward_input(plan: &ConvPlan, n: usize, w: &[f32], dy: &[f32]) -> Vec<f32> {
    let k = plan.k_rows();
    let p = plan.out_len();
    let in_len = plan.in_len();
    let out_len = plan.c_out * p;
    let mut dx = vec![0.0f32; n * in_len];
    let framed = frame_plan(plan).map(|fp| (fp, depth_major(plan, w, false)));
    dx.par_chunks_mut(in_len).enumerate().for_each_init(
        || match &framed {
            Some((fp, _)) => (vec![0.0f32; fp.k_rows() * fp.out_len()], vec![0.0f32; plan.c_out * plan.kernel[0] * fp.out_len()]),
            None => (vec![0.0f32; k * p], Vec::new()),
        },
        |(col, dz), (i, dxi)| {
            let g = &dy[i * out_len..(i + 1) * out_len];
            match &framed {
                Some((fp, wd)) => {
                    spread_depth(plan, g, dz);
                    sgemm(fp.k_rows(), plan.c_out * plan.kernel[0], fp.out_len(), wd, true, dz, false, col, 0.0);
                    col2im(fp, col, dxi);
                }
                None => {
                    sgemm(k, plan.c_out, p, w, true, g, false, col, 0.0);
                    col2im(plan, col, dxi);
                }
            }
        },
    );
    dx
}

/// Max pooling over `[n*c, input...]` planes; returns values and flat argmax indices.
pub(crate) fn max_pool_forward(
    planes: usize,
    input: Dims3,
    kernel: Dims3,
    stride: Dims3,
    pad: Dims3,
    x: &[f32],
) -> Result<(Dims3, Vec<f32>, Vec<u32>)> {
    let mut output = [0; 3];
    for i in 0..3 {
        output[i] = out_extent(input[i], kernel[i], stride[i], 1, pad[i])
            .ok_or_else(|| Error::InvalidArgument(format!("pool kernel {kernel:?} larger than input {input:?}")))?;
    }
    let in_len: usize = input.iter().product();
    let out_len: usize = output.iter().product();
    let mut vals = vec![0.0f32; planes * out_len];
    let mut idx = vec![0u32; planes * out_len];
    let taps = |axis: usize| -> Vec<(usize, usize, usize)> {
        (0..output[axis])
            .map(|o| {
                let (lo, hi) = tap_range(o, kernel[axis], stride[axis], pad[axis], input[axis]);
                (lo, hi, o * stride[axis] + lo - pad[axis])
            })
            .collect()
    };
    let (tz, ty, tw) = (taps(0), taps(1), taps(2));
    vals.par_chunks_mut(out_len).zip(idx.par_chunks_mut(out_len)).enumerate().for_each(|(pl, (v, ix))| {
        let xp = &x[pl * in_len..(pl + 1) * in_len];
        let mut o = 0;
        for &(za, zb, z0) in &tz {
            for &(ya, yb, y0) in &ty {
                for &(wa, wb, w0) in &tw {
                    let mut best_i = (z0 * input[1] + y0) * input[2] + w0;
                    let mut best = xp[best_i];
                    for zi in z0..z0 + (zb - za) {
                        for yi in y0..y0 + (yb - ya) {
                            let row = (zi * input[1] + yi) * input[2];
                            for flat in row + w0..row + w0 + (wb - wa) {
                                // Strict comparison keeps the first maximum in scan order.
                                if xp[flat] > best {
                                    best = xp[flat];
                                    best_i = flat;
                                }
                            }
                        }
                    }
                    v[o] = best;
                    ix[o] = best_i as u32;
                    o += 1;
                }
            }
        }
    });
    Ok((output, vals, idx))
}

pub(crate) fn max_pool_backward(planes: usize, in_len: usize, out_len: usize, idx: &[u32], dy: &[f32]) -> Vec<f32> {
    let mut dx = vec![0.0f32; planes * in_len];
    dx.par_chunks_mut(in_len).enumerate().for_each(|(pl, d)| {
        for o in 0..out_len {
            d[idx[pl * out_len + o] as usize] += dy[pl * out_len + o];
        }
    });
    dx
}

/// Per-channel mean and biased variance of `[n, c, s]`, accumulated in `f64`.
pub(crate) fn channel_moments(n: usize, c: usize, s: usize, x: &[f32]) -> (Vec<f64>, Vec<f64>) {
    (0..c)
        .into_par_iter()
        .map(|ch| {
            let count = (n * s) as f64;
            let mut sum = 0.0f64;
            for i in 0..n {
                sum += x[(i * c + ch) * s..(i * c + ch + 1) * s].iter().map(|&v| v as f64).sum::<f64>();
            }
            let mean = sum / count;
            let mut sq = 0.0f64;
            for i in 0..n {
                sq += x[(i * c + ch) * s..(i * c + ch + 1) * s]
                    .iter()
                    .map(|&v| {
                        let d = v as f64 - mean;
                        d * d
                    })
                    .sum::<f64>();
            }
            (mean, sq / count)
        })
        .unzip()
}

/// Applies `y = x * scale[c] + shift[c]` over `[n, c, s]`.
pub(crate) fn channel_affine(n: usize, c: usize, s: usize, x: &[f32], scale: &[f32], shift: &[f32]) -> Vec<f32> {
    let mut y = vec![0.0f32; n * c * s];
    y.par_chunks_mut(c * s).enumerate().for_each(|(i, yi)| {
        for ch in 0..c {
            let src = &x[(i * c + ch) * s..(i * c + ch + 1) * s];
            for (o, &v) in yi[ch * s..(ch + 1) * s].iter_mut().zip(src) {
                *o = v * scale[ch] + shift[ch];
            }
        }
    });
    y
}

/// Per-channel sums of `a` and of `a * b` over `[n, c, s]`.
pub(crate) fn channel_sums(n: usize, c: usize, s: usize, a: &[f32], b: &[f32]) -> (Vec<f64>, Vec<f64>) {
    (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut sa = 0.0f64;
            let mut sab = 0.0f64;
            for i in 0..n {
                let r = (i * c + ch) * s..(i * c + ch + 1) * s;
                for (&u, &v) in a[r.clone()].iter().zip(&b[r]) {
                    sa += u as f64;
                    sab += u as f64 * v as f64;
                }
            }
            (sa, sab)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sliding-window oracle for 1-D cross-correlation with zero padding.
    fn conv1d_oracle(x: &[f32], k: &[f32], pad: usize, dil: usize) -> Vec<f32> {
        let span = dil * (k.len() - 1);
        let n_out = x.len() + 2 * pad - span;
        (0..n_out)
            .map(|o| {
                k.iter()
                    .enumerate()
                    .map(|(j, &kv)| {
                        let i = o as isize + (j * dil) as isize - pad as isize;
                        if i >= 0 && (i as usize) < x.len() {
                            kv * x[i as usize]
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn conv1d_same_padding_example() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let k = [1.0, 0.0, -1.0];
        let expected = conv1d_oracle(&x, &k, 1, 1);
        assert_eq!(expected, vec![-2.0, -2.0, -2.0, 3.0]);
        let plan = ConvPlan::new(1, 1, [1, 1, 4], [1, 1, 3], [1; 3], [1; 3], [0, 0, 1]).unwrap();
        assert_eq!(conv_forward(&plan, 1, &x, &k, None), expected);
    }

    #[test]
    fn dilated_strided_conv_matches_oracle() {
        let x: Vec<f32> = (0..11).map(|v| (v as f32 * 0.7).sin()).collect();
        let k = [0.5, -1.0, 2.0];
        let plan = ConvPlan::new(1, 1, [1, 1, 11], [1, 1, 3], [1, 1, 2], [1, 1, 3], [0, 0, 2]).unwrap();
        let full = conv1d_oracle(&x, &k, 2, 3);
        let strided: Vec<f32> = full.iter().step_by(2).copied().collect();
        let got = conv_forward(&plan, 1, &x, &k, None);
        assert_eq!(got.len(), strided.len());
        for (a, b) in got.iter().zip(&strided) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    /// The depth-factorised path must agree with plain im2col on every output and gradient.
    #[test]
    fn framed_conv3d_matches_generic_im2col() {
        let mut rng = crate::tensor::Rng::new(5);
        for (dil, pad) in [(1, 2), (2, 1), (1, 0)] {
            let plan = ConvPlan::new(2, 3, [6, 9, 8], [3, 3, 2], [1, 2, 1], [dil, 1, 1], [pad, 1, 0]).unwrap();
            assert!(frame_plan(&plan).is_some());
            let n = 2;
            let x = rng.normal_tensor(&[n * plan.in_len()], 0.0, 1.0).into_data();
            let w = rng.normal_tensor(&[plan.c_out * plan.k_rows()], 0.0, 1.0).into_data();
            let dy = rng.normal_tensor(&[n * plan.c_out * plan.out_len()], 0.0, 1.0).into_data();
            let k = plan.k_rows();
            let p = plan.out_len();
            let mut col = vec![0.0f32; k * p];
            let mut y_ref = vec![0.0f32; n * plan.c_out * p];
            let mut dw_ref = vec![0.0f32; plan.c_out * k];
            let mut dx_ref = vec![0.0f32; n * plan.in_len()];
            for i in 0..n {
                im2col(&plan, &x[i * plan.in_len()..(i + 1) * plan.in_len()], &mut col);
                sgemm(plan.c_out, k, p, &w, false, &col, false, &mut y_ref[i * plan.c_out * p..(i + 1) * plan.c_out * p], 0.0);
                let g = &dy[i * plan.c_out * p..(i + 1) * plan.c_out * p];
                sgemm(plan.c_out, p, k, g, false, &col, true, &mut dw_ref, 1.0);
                sgemm(k, plan.c_out, p, &w, true, g, false, &mut col, 0.0);
                col2im(&plan, &col, &mut dx_ref[i * plan.in_len()..(i + 1) * plan.in_len()]);
            }
            let close = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-4);
            assert!(close(&conv_forward(&plan, n, &x, &w, None), &y_ref));
            assert!(close(&conv_backward_params(&plan, n, &x, &dy, false).0, &dw_ref));
            assert!(close(&conv_backward_input(&plan, n, &w, &dy), &dx_ref));
        }
    }

    #[test]
    fn max_pool_matches_window_scan() {
        let mut rng = crate::tensor::Rng::new(9);
        let input = [3, 7, 6];
        let (kernel, stride, pad) = ([2, 3, 3], [1, 2, 2], [1, 1, 1]);
        let x = rng.normal_tensor(&[2 * 126], 0.0, 1.0).into_data();
        let (out, vals, idx) = max_pool_forward(2, input, kernel, stride, pad, &x).unwrap();
        let mut o = 0;
        for pl in 0..2 {
            for z in 0..out[0] {
                for y in 0..out[1] {
                    for w in 0..out[2] {
                        let mut window = Vec::new();
                        for a in 0..kernel[0] {
                            for b in 0..kernel[1] {
                                for e in 0..kernel[2] {
                                    let (Some(zi), Some(yi), Some(wi)) = (
                                        src_index(z, a, stride[0], 1, pad[0], input[0]),
                                        src_index(y, b, stride[1], 1, pad[1], input[1]),
                                        src_index(w, e, stride[2], 1, pad[2], input[2]),
                                    ) else {
                                        continue;
                                    };
                                    window.push((zi * input[1] + yi) * input[2] + wi);
                                }
                            }
                        }
                        let best = window.iter().copied().fold(window[0], |b, i| if x[pl * 126 + i] > x[pl * 126 + b] { i } else { b });
                        assert_eq!(idx[o] as usize, best);
                        assert_eq!(vals[o], x[pl * 126 + best]);
                        o += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        assert!(ConvPlan::new(1, 1, [1, 1, 3], [1, 1, 5], [1; 3], [1; 3], [0; 3]).is_err());
    }

    #[test]
    fn valid_range_agrees_with_src_index() {
        for n in 1..7 {
            for k in 0..4 {
                for s in 1..4 {
                    for d in 1..3 {
                        for p in 0..4 {
                            let out = 9;
                            let (lo, hi) = valid_range(out, k, s, d, p, n);
                            for o in 0..out {
                                assert_eq!(src_index(o, k, s, d, p, n).is_some(), (lo..hi).contains(&o));
                            }
                        }
                    }
                }
            }
        }
    }
}

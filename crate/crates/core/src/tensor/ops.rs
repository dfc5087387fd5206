use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Epsilon inside the batch-norm square root.
pub const BN_EPS: f64 = 1e-5;
/// Epsilon inside the layer-norm square root.
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOpts {
    pub stride: usize,
    /// Zero padding on (rows, columns).
    pub pad: (usize, usize),
    pub groups: usize,
}

impl Conv2dOpts {
    pub fn new(stride: usize, pad: usize) -> Self {
        Conv2dOpts {
            stride,
            pad: (pad, pad),
            groups: 1,
        }
    }
}

/// Square-kernel, ungrouped 2-D cross-correlation over `[B, Cin, H, W]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    if weight.rank() == 4 && weight.dim(2) != weight.dim(3) {
        return Err(Error::shape(
            "conv2d",
            "kernel",
            format!("expected square kernel, got {:?}", weight.shape()),
        ));
    }
    conv2d_ext(x, weight, bias, Conv2dOpts::new(stride, pad))
}

/// General 2-D cross-correlation: rectangular kernels, per-axis padding and groups.
///
/// `weight` is `[Cout, Cin / groups, kh, kw]`.
pub fn conv2d_ext(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, opts: Conv2dOpts) -> Result<Tensor> {
    const OP: &str = "conv2d";
    x.expect_rank(OP, 4)?;
    weight.expect_rank(OP, 4)?;
    let (b, cin, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (cout, cin_g, kh, kw) = (weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3));
    let g = opts.groups;
    let (ph, pw) = opts.pad;
    let s = opts.stride;
    if s == 0 || g == 0 {
        return Err(Error::shape(OP, "stride", "stride and groups must be at least 1"));
    }
    if cin % g != 0 || cout % g != 0 {
        return Err(Error::shape(
            OP,
            "groups",
            format!("{g} groups do not divide Cin={cin}, Cout={cout}"),
        ));
    }
    if cin_g != cin / g {
        return Err(Error::shape(
            OP,
            "Cin",
            format!("input has {cin} channels, weight expects {}", cin_g * g),
        ));
    }
    if h + 2 * ph < kh {
        return Err(Error::shape(
            OP,
            "H",
            format!("padded height {} smaller than kernel {kh}", h + 2 * ph),
        ));
    }
    if w + 2 * pw < kw {
        return Err(Error::shape(
            OP,
            "W",
            format!("padded width {} smaller than kernel {kw}", w + 2 * pw),
        ));
    }
    if let Some(bias) = bias {
        if bias.len() != cout {
            return Err(Error::shape(
                OP,
                "Cout",
                format!("bias has {} entries, weight has {cout} filters", bias.len()),
            ));
        }
    }
    let ho = (h + 2 * ph - kh) / s + 1;
    let wo = (w + 2 * pw - kw) / s + 1;
    let plane = ho * wo;
    let mut out = vec![0.0f32; b * cout * plane];
    let xd = x.data();
    let wd = weight.data();

    if g == 1 {
        let k = cin * kh * kw;
        let pointwise = kh == 1 && kw == 1 && s == 1 && ph == 0 && pw == 0;
        let mut cols = if pointwise { Vec::new() } else { vec![0.0f32; k * plane] };
        for bi in 0..b {
            let xb = &xd[bi * cin * h * w..(bi + 1) * cin * h * w];
            let src: &[f32] = if pointwise {
                xb
            } else {
                im2col(xb, cin, h, w, kh, kw, s, ph, pw, ho, wo, &mut cols);
                &cols
            };
            let ob = &mut out[bi * cout * plane..(bi + 1) * cout * plane];
            gemm(cout, k, plane, wd, k, 1, src, plane, 1, 0.0, ob);
        }
    } else {
        let cout_g = cout / g;
        for bi in 0..b {
            for oc in 0..cout {
                let grp = oc / cout_g;
                let ob = &mut out[(bi * cout + oc) * plane..(bi * cout + oc + 1) * plane];
                for icl in 0..cin_g {
                    let ic = grp * cin_g + icl;
                    let xp = &xd[(bi * cin + ic) * h * w..(bi * cin + ic + 1) * h * w];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = wd[((oc * cin_g + icl) * kh + ky) * kw + kx];
                            for oy in 0..ho {
                                let iy = (oy * s + ky) as isize - ph as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row = &xp[iy as usize * w..(iy as usize + 1) * w];
                                let orow = &mut ob[oy * wo..(oy + 1) * wo];
                                for (ox, o) in orow.iter_mut().enumerate() {
                                    let ix = (ox * s + kx) as isize - pw as isize;
                                    if ix >= 0 && ix < w as isize {
                                        *o += wv * row[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if let Some(bias) = bias {
        let bd = bias.data();
        for (i, chunk) in out.chunks_mut(plane).enumerate() {
            let bv = bd[i % cout];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(Tensor::from_parts(vec![b, cout, ho, wo], out))
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    s: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
    cols: &mut [f32],
) {
    let plane = ho * wo;
    for c in 0..cin {
        let xp = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - ph as isize;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        drow.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let srow = &xp[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - pw as isize;
                        *d = if ix >= 0 && ix < w as isize {
                            srow[ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Depthwise/grouped 1-D convolution over `[B, C, L]` with stride 1.
///
/// `weight` is `[Cout, C / groups, k]`.
pub fn conv1d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, pad: usize, groups: usize) -> Result<Tensor> {
    x.expect_rank("conv1d", 3)?;
    weight.expect_rank("conv1d", 3)?;
    let (b, c, l) = (x.dim(0), x.dim(1), x.dim(2));
    let (co, cg, k) = (weight.dim(0), weight.dim(1), weight.dim(2));
    let x4 = Tensor::from_parts(vec![b, c, 1, l], x.data().to_vec());
    let w4 = Tensor::from_parts(vec![co, cg, 1, k], weight.data().to_vec());
    let y = conv2d_ext(
        &x4,
        &w4,
        bias,
        Conv2dOpts {
            stride: 1,
            pad: (0, pad),
            groups,
        },
    )?;
    let lo = y.dim(3);
    Ok(Tensor::from_parts(vec![b, co, lo], y.into_data()))
}

/// Batch normalization with statistics taken from the batch itself and no affine
/// transform. Returns the normalized tensor and the per-channel standard
/// deviation `sqrt(var + eps)` measured before normalization.
pub fn batchnorm(x: &Tensor) -> Result<(Tensor, Vec<f32>)> {
    x.expect_rank("batchnorm", 4)?;
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let plane = h * w;
    let count = b * plane;
    if count < 2 {
        return Err(Error::shape(
            "batchnorm",
            "B*H*W",
            format!("need at least 2 values per channel, got {count}"),
        ));
    }
    let xd = x.data();
    let mut out = vec![0.0f32; xd.len()];
    let mut sigmas = Vec::with_capacity(c);
    for ch in 0..c {
        let mut sum = 0.0f64;
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            sum += xd[off..off + plane].iter().map(|&v| v as f64).sum::<f64>();
        }
        let mean = sum / count as f64;
        let mut ss = 0.0f64;
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            ss += xd[off..off + plane]
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>();
        }
        let var = ss / count as f64;
        let sigma = (var + BN_EPS).sqrt();
        let inv = 1.0 / sigma;
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            for (o, &v) in out[off..off + plane].iter_mut().zip(&xd[off..off + plane]) {
                *o = ((v as f64 - mean) * inv) as f32;
            }
        }
        sigmas.push(sigma as f32);
    }
    Ok((Tensor::from_parts(x.shape().to_vec(), out), sigmas))
}

/// Per-position normalization over the last axis (no affine transform).
pub fn layernorm(x: &Tensor) -> Tensor {
    let d = *x.shape().last().expect("rank >= 1");
    let mut out = vec![0.0f32; x.len()];
    for (o, row) in out.chunks_mut(d).zip(x.data().chunks(d)) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for (oo, &v) in o.iter_mut().zip(row) {
            *oo = ((v as f64 - mean) * inv) as f32;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

#[inline]
pub(crate) fn sigmoid_scalar(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn silu_scalar(v: f32) -> f32 {
    v * sigmoid_scalar(v)
}

pub fn silu(x: &Tensor) -> Tensor {
    x.map(silu_scalar)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f32::tanh)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn scale(x: &Tensor, s: f32) -> Tensor {
    x.map(|v| v * s)
}

fn check_axis(op: &'static str, x: &Tensor, axis: usize) -> Result<()> {
    if axis >= x.rank() {
        return Err(Error::Axis {
            op,
            axis,
            rank: x.rank(),
        });
    }
    Ok(())
}

/// `(outer, axis length, inner)` decomposition of a shape around `axis`.
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("softmax", x, axis)?;
    let (outer, n, inner) = around(x.shape(), axis);
    let xd = x.data();
    let mut out = vec![0.0f32; xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| xd[idx(k)]).fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f64;
            for k in 0..n {
                let e = (xd[idx(k)] - max).exp();
                out[idx(k)] = e;
                sum += e as f64;
            }
            let inv = (1.0 / sum) as f32;
            for k in 0..n {
                out[idx(k)] *= inv;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, "shape", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat", "inputs", "nothing to concatenate"))?;
    check_axis("concat", first, axis)?;
    let mut total = 0;
    for p in parts {
        if p.rank() != first.rank() {
            return Err(Error::shape(
                "concat",
                "rank",
                format!("{:?} vs {:?}", first.shape(), p.shape()),
            ));
        }
        for d in 0..first.rank() {
            if d != axis && p.dim(d) != first.dim(d) {
                return Err(Error::shape(
                    "concat",
                    format!("axis {d}"),
                    format!("{:?} vs {:?}", first.shape(), p.shape()),
                ));
            }
        }
        total += p.dim(axis);
    }
    let (outer, _, inner) = around(first.shape(), axis);
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.dim(axis) * inner;
            out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

pub fn split(x: &Tensor, axis: usize, parts: usize) -> Result<Vec<Tensor>> {
    check_axis("split", x, axis)?;
    if parts == 0 || !x.dim(axis).is_multiple_of(parts) {
        return Err(Error::shape(
            "split",
            format!("axis {axis}"),
            format!("length {} not divisible into {parts} parts", x.dim(axis)),
        ));
    }
    split_sizes(x, axis, &vec![x.dim(axis) / parts; parts])
}

pub fn split_sizes(x: &Tensor, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
    check_axis("split", x, axis)?;
    if sizes.iter().sum::<usize>() != x.dim(axis) || sizes.contains(&0) {
        return Err(Error::shape(
            "split",
            format!("axis {axis}"),
            format!("sizes {sizes:?} do not partition {}", x.dim(axis)),
        ));
    }
    let (outer, n, inner) = around(x.shape(), axis);
    let mut start = 0;
    let mut out = Vec::with_capacity(sizes.len());
    for &sz in sizes {
        let mut data = Vec::with_capacity(outer * sz * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&x.data()[base..base + sz * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = sz;
        out.push(Tensor::from_parts(shape, data));
        start += sz;
    }
    Ok(out)
}

pub fn maxpool2d(x: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    x.expect_rank("maxpool2d", 4)?;
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    if k == 0 || stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::shape(
            "maxpool2d",
            "kernel",
            format!("k={k} stride={stride} pad={pad} on {h}x{w}"),
        ));
    }
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let xd = x.data();
    let mut out = vec![f32::NEG_INFINITY; b * c * ho * wo];
    for p in 0..b * c {
        let xp = &xd[p * h * w..(p + 1) * h * w];
        let op = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for oy in 0..ho {
            let y0 = (oy * stride) as isize - pad as isize;
            for ox in 0..wo {
                let x0 = (ox * stride) as isize - pad as isize;
                let mut m = f32::NEG_INFINITY;
                for iy in y0.max(0)..(y0 + k as isize).min(h as isize) {
                    for ix in x0.max(0)..(x0 + k as isize).min(w as isize) {
                        m = m.max(xp[iy as usize * w + ix as usize]);
                    }
                }
                op[oy * wo + ox] = m;
            }
        }
    }
    Ok(Tensor::from_parts(vec![b, c, ho, wo], out))
}

/// `[B, C, H, W] -> [B, C]`.
pub fn avgpool_global(x: &Tensor) -> Result<Tensor> {
    x.expect_rank("avgpool_global", 4)?;
    let plane = x.dim(2) * x.dim(3);
    let data = x
        .data()
        .chunks(plane)
        .map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
        .collect();
    Ok(Tensor::from_parts(vec![x.dim(0), x.dim(1)], data))
}

/// `[M, K] x [K, N] -> [M, N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.expect_rank("matmul", 2)?;
    b.expect_rank("matmul", 2)?;
    let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
    if b.dim(0) != k {
        return Err(Error::shape(
            "matmul",
            "K",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0f32; m * n];
    gemm(m, k, n, a.data(), k, 1, b.data(), n, 1, 0.0, &mut out);
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// `x[..., in] · weightᵀ + bias` with `weight` shaped `[out, in]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    weight.expect_rank("linear", 2)?;
    let (out_f, in_f) = (weight.dim(0), weight.dim(1));
    let last = *x.shape().last().expect("rank >= 1");
    if last != in_f {
        return Err(Error::shape(
            "linear",
            "in_features",
            format!("input has {last}, weight expects {in_f}"),
        ));
    }
    if let Some(bias) = bias {
        if bias.len() != out_f {
            return Err(Error::shape(
                "linear",
                "out_features",
                format!("bias {} vs {out_f}", bias.len()),
            ));
        }
    }
    let rows = x.len() / in_f;
    let mut out = vec![0.0f32; rows * out_f];
    gemm(
        rows,
        in_f,
        out_f,
        x.data(),
        in_f,
        1,
        weight.data(),
        1,
        in_f,
        0.0,
        &mut out,
    );
    if let Some(bias) = bias {
        for row in out.chunks_mut(out_f) {
            row.iter_mut().zip(bias.data()).for_each(|(o, b)| *o += b);
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_f;
    Ok(Tensor::from_parts(shape, out))
}

/// Square root of the sum of squares, accumulated in `f64`.
pub fn frobenius_norm(x: &Tensor) -> f64 {
    x.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Six nested loops, no im2col.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, s: usize, p: usize) -> Vec<f32> {
        let (bn, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, _, k, _) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
        let ho = (h + 2 * p - k) / s + 1;
        let wo = (wd + 2 * p - k) / s + 1;
        let mut out = vec![0.0f32; bn * cout * ho * wo];
        for bi in 0..bn {
            for oc in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.data()[oc] as f64;
                        for ic in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x.data()[((bi * cin + ic) * h + iy as usize) * wd + ix as usize] as f64
                                            * w.data()[((oc * cin + ic) * k + ky) * k + kx] as f64;
                                    }
                                }
                            }
                        }
                        out[((bi * cout + oc) * ho + oy) * wo + ox] = acc as f32;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_shape_algebra() {
        let x = Tensor::zeros(&[1, 10, 64, 64]);
        let w = Tensor::zeros(&[16, 10, 3, 3]);
        let y = conv2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 16, 32, 32]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let w = t(&[1, 1, 1, 1], &[1.0]);
        assert_eq!(conv2d(&x, &w, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn conv_ones_sum_to_nine() {
        let x = Tensor::full(&[1, 1, 4, 4], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = Rng::new(11);
        for &(b, cin, cout, hw, k, s, p) in &[
            (2, 8, 5, 16, 3, 1, 1),
            (2, 8, 4, 16, 3, 2, 1),
            (1, 3, 6, 9, 1, 1, 0),
            (2, 4, 3, 7, 5, 1, 2),
            (1, 2, 2, 8, 3, 2, 0),
        ] {
            let x = Tensor::randn(&[b, cin, hw, hw], 1.0, &mut rng);
            let w = Tensor::randn(&[cout, cin, k, k], 1.0, &mut rng);
            let bias = Tensor::randn(&[cout], 1.0, &mut rng);
            let y = conv2d(&x, &w, Some(&bias), s, p).unwrap();
            let r = naive_conv(&x, &w, &bias, s, p);
            for (a, e) in y.data().iter().zip(&r) {
                assert!((a - e).abs() <= 1e-5 * e.abs().max(1.0), "{a} vs {e}");
            }
        }
    }

    #[test]
    fn grouped_conv_matches_per_group_dense() {
        let mut rng = Rng::new(5);
        let x = Tensor::randn(&[2, 4, 6, 6], 1.0, &mut rng);
        let w = Tensor::randn(&[4, 2, 3, 3], 1.0, &mut rng);
        let opts = Conv2dOpts {
            stride: 1,
            pad: (1, 1),
            groups: 2,
        };
        let y = conv2d_ext(&x, &w, None, opts).unwrap();
        let xs = split(&x, 1, 2).unwrap();
        let ws = split(&w, 0, 2).unwrap();
        let ys: Vec<Tensor> = (0..2).map(|g| conv2d(&xs[g], &ws[g], None, 1, 1).unwrap()).collect();
        let expect = concat(&[&ys[0], &ys[1]], 1).unwrap();
        for (a, e) in y.data().iter().zip(expect.data()) {
            assert!((a - e).abs() < 1e-5);
        }
    }

    #[test]
    fn conv_reports_offending_dimension() {
        let x = Tensor::zeros(&[1, 3, 8, 8]);
        let w = Tensor::zeros(&[4, 2, 3, 3]);
        let err = conv2d(&x, &w, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("Cin"), "{err}");
        let w = Tensor::zeros(&[4, 3, 3, 3]);
        let small = Tensor::zeros(&[1, 3, 2, 2]);
        assert!(conv2d(&small, &w, None, 1, 0).unwrap_err().to_string().contains("H"));
    }

    #[test]
    fn batchnorm_cases() {
        let x = t(&[1, 1, 1, 2], &[-1.0, 1.0]);
        let (y, s) = batchnorm(&x).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-5 && (y.data()[1] - 1.0).abs() < 1e-5);
        assert!((s[0] as f64 - (1.0 + BN_EPS).sqrt()).abs() < 1e-7);

        let (y, s) = batchnorm(&Tensor::full(&[2, 1, 2, 2], 5.0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!((s[0] as f64 - BN_EPS.sqrt()).abs() < 1e-9);

        let (_, s) = batchnorm(&t(&[1, 1, 1, 2], &[0.0, 2.0])).unwrap();
        assert!((s[0] as f64 - (1.0 + 1e-5f64).sqrt()).abs() < 1e-7);

        assert!(batchnorm(&Tensor::zeros(&[1, 3, 1, 1])).is_err());
    }

    #[test]
    fn batchnorm_normalizes_random_input() {
        let mut rng = Rng::new(2);
        let x = Tensor::randn(&[4, 3, 5, 5], 3.0, &mut rng).map(|v| v + 7.0);
        let (y, _) = batchnorm(&x).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|b| y.data()[(b * 3 + c) * 25..(b * 3 + c + 1) * 25].to_vec())
                .map(|v| v as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn elementwise_examples() {
        let s = softmax(&t(&[2], &[0.0, 0.0]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        assert_eq!(silu(&t(&[1], &[0.0])).data(), &[0.0]);
        let y = maxpool2d(&Tensor::zeros(&[1, 1, 8, 8]), 5, 1, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 8, 8]);
        assert!(softmax(&t(&[2], &[0.0, 0.0]), 1).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Rng::new(9);
        let x = Tensor::randn(&[3, 7, 5], 4.0, &mut rng);
        for axis in 0..3 {
            let y = softmax(&x, axis).unwrap();
            let (outer, n, inner) = around(x.shape(), axis);
            for o in 0..outer {
                for i in 0..inner {
                    let s: f64 = (0..n).map(|k| y.data()[(o * n + k) * inner + i] as f64).sum();
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn layernorm_rows() {
        let mut rng = Rng::new(3);
        let x = Tensor::randn(&[4, 16], 5.0, &mut rng);
        let y = layernorm(&x);
        for row in y.data().chunks(16) {
            let m = row.iter().map(|&v| v as f64).sum::<f64>() / 16.0;
            let v = row.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / 16.0;
            assert!(m.abs() < 1e-5 && (v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn concat_split_inverse() {
        let mut rng = Rng::new(4);
        let x = Tensor::randn(&[2, 6, 3], 1.0, &mut rng);
        let parts = split(&x, 1, 3).unwrap();
        let refs: Vec<&Tensor> = parts.iter().collect();
        assert_eq!(concat(&refs, 1).unwrap(), x);
        assert!(split(&x, 1, 4).is_err());
        assert!(split(&x, 3, 1).is_err());
    }

    #[test]
    fn linear_and_matmul_agree() {
        let mut rng = Rng::new(8);
        let x = Tensor::randn(&[5, 4], 1.0, &mut rng);
        let w = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let y = linear(&x, &w, None).unwrap();
        let mut wt = vec![0.0; 12];
        for o in 0..3 {
            for i in 0..4 {
                wt[i * 3 + o] = w.data()[o * 4 + i];
            }
        }
        let z = matmul(&x, &t(&[4, 3], &wt)).unwrap();
        for (a, b) in y.data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn conv1d_depthwise_shift() {
        // kernel [0, 0, 1] picks the next element.
        let x = t(&[1, 1, 4], &[1., 2., 3., 4.]);
        let w = t(&[1, 1, 3], &[0., 0., 1.]);
        let y = conv1d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.data(), &[2., 3., 4., 0.]);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&Tensor::zeros(&[3])), 0.0);
        assert_eq!(frobenius_norm(&t(&[2], &[3.0, 4.0])), 5.0);
        assert!((frobenius_norm(&Tensor::full(&[2, 2, 2], 1.0)) - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn avgpool_means() {
        let y = avgpool_global(&t(&[1, 2, 1, 2], &[1., 3., 5., 7.])).unwrap();
        assert_eq!(y.data(), &[2.0, 6.0]);
    }
}

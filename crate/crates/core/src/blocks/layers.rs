//! Forward implementations of every backbone block.
//!
//! Each layer owns its weight tensors and reports the multiplies it performs to a
//! [`Trace`], counted from the shapes the ops actually see.

use super::Trace;
use crate::error::Result;
use crate::tensor::{
    self, add, batchnorm, concat, conv2d_ext, layernorm, linear, maxpool2d, silu, split, Conv2dOpts, Rng, Tensor,
};

fn gaussian(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    Tensor::randn(shape, 1.0 / (fan_in as f32).sqrt(), rng)
}

/// Largest divisor of `n` that does not exceed `cap`.
pub(crate) fn largest_divisor_at_most(n: usize, cap: usize) -> usize {
    (1..=cap.min(n).max(1))
        .rev()
        .find(|d| n.is_multiple_of(*d))
        .unwrap_or(1)
}

pub(crate) trait Params {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub w: Tensor,
    pub b: Tensor,
    pub opts: Conv2dOpts,
}

impl Conv {
    pub fn new(cin: usize, cout: usize, kernel: (usize, usize), opts: Conv2dOpts, rng: &mut Rng) -> Self {
        let fan_in = cin / opts.groups * kernel.0 * kernel.1;
        Conv {
            w: gaussian(&[cout, cin / opts.groups, kernel.0, kernel.1], fan_in, rng),
            b: gaussian(&[cout], fan_in, rng),
            opts,
        }
    }

    pub fn square(cin: usize, cout: usize, k: usize, stride: usize, rng: &mut Rng) -> Self {
        Conv::new(cin, cout, (k, k), Conv2dOpts::new(stride, k / 2), rng)
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let y = conv2d_ext(x, &self.w, Some(&self.b), self.opts)?;
        let per_out = self.w.dim(1) * self.w.dim(2) * self.w.dim(3);
        t.count(y.len() * per_out);
        Ok(y)
    }
}

impl Params for Conv {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn new(fin: usize, fout: usize, rng: &mut Rng) -> Self {
        Linear {
            w: gaussian(&[fout, fin], fin, rng),
            b: gaussian(&[fout], fin, rng),
        }
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let y = linear(x, &self.w, Some(&self.b))?;
        t.count(y.len() * self.w.dim(1));
        Ok(y)
    }
}

impl Params for Linear {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

fn bn(x: &Tensor, t: &mut Trace) -> Result<Tensor> {
    let (y, sigmas) = batchnorm(x)?;
    t.record_bn(&sigmas);
    Ok(y)
}

/// Convolution followed by optional batch norm and SiLU.
#[derive(Clone, Debug)]
pub(crate) struct ConvUnit {
    pub conv: Conv,
    pub bn: bool,
    pub act: bool,
}

impl ConvUnit {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, rng: &mut Rng) -> Self {
        ConvUnit {
            conv: Conv::square(cin, cout, k, stride, rng),
            bn: true,
            act: true,
        }
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let mut y = self.conv.forward(x, t)?;
        if self.bn {
            y = bn(&y, t)?;
        }
        if self.act {
            y = silu(&y);
        }
        Ok(y)
    }
}

impl Params for ConvUnit {
    fn params(&self) -> Vec<&Tensor> {
        self.conv.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.conv.params_mut()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct C2f {
    cv1: ConvUnit,
    bottlenecks: Vec<(ConvUnit, ConvUnit)>,
    cv2: ConvUnit,
    shortcut: bool,
}

impl C2f {
    pub fn new(cin: usize, cout: usize, n: usize, shortcut: bool, rng: &mut Rng) -> Self {
        let h = cout / 2;
        let cv1 = ConvUnit::new(cin, 2 * h, 1, 1, rng);
        let bottlenecks = (0..n)
            .map(|_| (ConvUnit::new(h, h, 3, 1, rng), ConvUnit::new(h, h, 3, 1, rng)))
            .collect();
        let cv2 = ConvUnit::new((2 + n) * h, cout, 1, 1, rng);
        C2f {
            cv1,
            bottlenecks,
            cv2,
            shortcut,
        }
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let y = self.cv1.forward(x, t)?;
        let mut parts = split(&y, 1, 2)?;
        for (a, b) in &self.bottlenecks {
            let cur = parts.last().unwrap();
            let mut z = b.forward(&a.forward(cur, t)?, t)?;
            if self.shortcut {
                z = add(&z, cur)?;
            }
            parts.push(z);
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        self.cv2.forward(&concat(&refs, 1)?, t)
    }
}

impl Params for C2f {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.cv1.params();
        for (a, b) in &self.bottlenecks {
            p.extend(a.params());
            p.extend(b.params());
        }
        p.extend(self.cv2.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.cv1.params_mut();
        for (a, b) in &mut self.bottlenecks {
            p.extend(a.params_mut());
            p.extend(b.params_mut());
        }
        p.extend(self.cv2.params_mut());
        p
    }
}

/// How pixels are grouped into token sequences for attention or scanning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Partition {
    /// Contiguous `p x p` windows (largest divisors of H and W not above `p`).
    Window(usize),
    /// Strided grid: each group takes one pixel from every cell of a `p x p` grid.
    Grid(usize),
}

impl Partition {
    /// Pixel indices (`y * W + x`) of every group, each in row-major order.
    pub fn groups(self, h: usize, w: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        match self {
            Partition::Window(p) => {
                let (wh, ww) = (largest_divisor_at_most(h, p), largest_divisor_at_most(w, p));
                for by in 0..h / wh {
                    for bx in 0..w / ww {
                        let mut g = Vec::with_capacity(wh * ww);
                        for dy in 0..wh {
                            for dx in 0..ww {
                                g.push((by * wh + dy) * w + bx * ww + dx);
                            }
                        }
                        out.push(g);
                    }
                }
            }
            Partition::Grid(p) => {
                let (gh, gw) = (largest_divisor_at_most(h, p), largest_divisor_at_most(w, p));
                let (sh, sw) = (h / gh, w / gw);
                for ry in 0..sh {
                    for rx in 0..sw {
                        let mut g = Vec::with_capacity(gh * gw);
                        for gy in 0..gh {
                            for gx in 0..gw {
                                g.push((gy * sh + ry) * w + gx * sw + rx);
                            }
                        }
                        out.push(g);
                    }
                }
            }
        }
        out
    }
}

/// Gather `[B, C, H, W]` into `[B * groups, L, C]` token sequences.
fn gather(x: &Tensor, groups: &[Vec<usize>]) -> Tensor {
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let plane = h * w;
    let l = groups[0].len();
    let xd = x.data();
    let mut out = vec![0.0f32; b * groups.len() * l * c];
    let mut o = 0;
    for bi in 0..b {
        for g in groups {
            for &pix in g {
                for ch in 0..c {
                    out[o] = xd[(bi * c + ch) * plane + pix];
                    o += 1;
                }
            }
        }
    }
    Tensor::from_parts(vec![b * groups.len(), l, c], out)
}

/// Inverse of [`gather`].
fn scatter(tokens: &Tensor, groups: &[Vec<usize>], b: usize, h: usize, w: usize) -> Tensor {
    let c = tokens.dim(2);
    let plane = h * w;
    let td = tokens.data();
    let mut out = vec![0.0f32; b * c * plane];
    let mut o = 0;
    for bi in 0..b {
        for g in groups {
            for &pix in g {
                for ch in 0..c {
                    out[(bi * c + ch) * plane + pix] = td[o];
                    o += 1;
                }
            }
        }
    }
    Tensor::from_parts(vec![b, c, h, w], out)
}

/// Pre-norm transformer unit over one partition of the feature map.
#[derive(Clone, Debug)]
pub(crate) struct AttentionUnit {
    partition: Partition,
    heads: usize,
    qkv: Linear,
    proj: Linear,
    fc1: Linear,
    fc2: Linear,
}

impl AttentionUnit {
    pub fn new(c: usize, heads: usize, partition: Partition, rng: &mut Rng) -> Self {
        AttentionUnit {
            partition,
            heads,
            qkv: Linear::new(c, 3 * c, rng),
            proj: Linear::new(c, c, rng),
            fc1: Linear::new(c, 4 * c, rng),
            fc2: Linear::new(4 * c, c, rng),
        }
    }

    /// Multi-head softmax attention over `[S, L, 3C]` packed q/k/v, giving `[S, L, C]`.
    fn attend(&self, qkv: &Tensor, t: &mut Trace) -> Tensor {
        let (s, l, c3) = (qkv.dim(0), qkv.dim(1), qkv.dim(2));
        let c = c3 / 3;
        let d = c / self.heads;
        let scale = 1.0 / (d as f32).sqrt();
        let q = qkv.data();
        let mut out = vec![0.0f32; s * l * c];
        let mut probs = vec![0.0f32; l];
        for si in 0..s {
            let base = si * l * c3;
            for hd in 0..self.heads {
                let (qo, ko, vo) = (hd * d, c + hd * d, 2 * c + hd * d);
                for i in 0..l {
                    let qi = &q[base + i * c3 + qo..base + i * c3 + qo + d];
                    let mut max = f32::NEG_INFINITY;
                    for (j, p) in probs.iter_mut().enumerate() {
                        let kj = &q[base + j * c3 + ko..base + j * c3 + ko + d];
                        *p = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                        max = max.max(*p);
                    }
                    let mut sum = 0.0f32;
                    for p in probs.iter_mut() {
                        *p = (*p - max).exp();
                        sum += *p;
                    }
                    let mut row_sum = 0.0f64;
                    for p in probs.iter_mut() {
                        *p /= sum;
                        row_sum += *p as f64;
                    }
                    t.record_attention_row(row_sum);
                    let o = &mut out[(si * l + i) * c + qo..(si * l + i) * c + qo + d];
                    for (j, &p) in probs.iter().enumerate() {
                        let vj = &q[base + j * c3 + vo..base + j * c3 + vo + d];
                        for (oo, &v) in o.iter_mut().zip(vj) {
                            *oo += p * v;
                        }
                    }
                }
            }
        }
        Tensor::from_parts(vec![s, l, c], out)
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let (b, h, w) = (x.dim(0), x.dim(2), x.dim(3));
        let groups = self.partition.groups(h, w);
        let tokens = gather(x, &groups);
        let qkv = self.qkv.forward(&layernorm(&tokens), t)?;
        let attn = self.proj.forward(&self.attend(&qkv, t), t)?;
        let tokens = add(&tokens, &attn)?;
        let hidden = silu(&self.fc1.forward(&layernorm(&tokens), t)?);
        let tokens = add(&tokens, &self.fc2.forward(&hidden, t)?)?;
        Ok(scatter(&tokens, &groups, b, h, w))
    }
}

impl Params for AttentionUnit {
    fn params(&self) -> Vec<&Tensor> {
        [&self.qkv, &self.proj, &self.fc1, &self.fc2]
            .into_iter()
            .flat_map(|l| l.params())
            .collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        [&mut self.qkv, &mut self.proj, &mut self.fc1, &mut self.fc2]
            .into_iter()
            .flat_map(|l| l.params_mut())
            .collect()
    }
}

/// Window attention followed by grid attention, stacked `repeats` times.
#[derive(Clone, Debug)]
pub(crate) struct MaxVit {
    units: Vec<AttentionUnit>,
}

impl MaxVit {
    pub fn new(c: usize, repeats: usize, heads: usize, window: usize, rng: &mut Rng) -> Self {
        let mut units = Vec::with_capacity(2 * repeats);
        for _ in 0..repeats {
            units.push(AttentionUnit::new(c, heads, Partition::Window(window), rng));
            units.push(AttentionUnit::new(c, heads, Partition::Grid(window), rng));
        }
        MaxVit { units }
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let mut y = x.clone();
        for u in &self.units {
            y = u.forward(&y, t)?;
        }
        Ok(y)
    }
}

impl Params for MaxVit {
    fn params(&self) -> Vec<&Tensor> {
        self.units.iter().flat_map(|u| u.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.units.iter_mut().flat_map(|u| u.params_mut()).collect()
    }
}

fn softplus(v: f32) -> f32 {
    if v > 20.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

/// One selective-scan head: input projection into a signal and a gate branch,
/// causal-free depthwise conv along the sequence, and a diagonal state-space scan.
#[derive(Clone, Debug)]
pub(crate) struct SsmHead {
    in_proj: Linear,
    /// `[C, 1, 3]` depthwise kernel and `[C]` bias.
    conv_w: Tensor,
    conv_b: Tensor,
    x_proj: Linear,
    /// `A = -exp(a_log)`, `[C, N]`.
    a_log: Tensor,
    d: Tensor,
    /// Softplus of this scalar is the step size.
    dt: Tensor,
}

impl SsmHead {
    fn new(c: usize, n: usize, rng: &mut Rng) -> Self {
        let a_log = (0..c * n).map(|_| rng.uniform() as f32).collect();
        SsmHead {
            in_proj: Linear::new(c, 2 * c, rng),
            conv_w: gaussian(&[c, 1, 3], 3, rng),
            conv_b: gaussian(&[c], 3, rng),
            x_proj: Linear::new(c, 2 * n, rng),
            a_log: Tensor::from_parts(vec![c, n], a_log),
            d: gaussian(&[c], 1, rng),
            dt: gaussian(&[1], 1, rng),
        }
    }

    /// `u`: `[S, L, C]` normalized tokens. Returns the gated scan output `[S, L, C]`.
    fn forward(&self, u: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let (s, l, c) = (u.dim(0), u.dim(1), u.dim(2));
        let n = self.a_log.dim(1);
        let xz = self.in_proj.forward(u, t)?;
        let halves = split(&xz, 2, 2)?;
        let (xs, z) = (&halves[0], &halves[1]);

        let xd = xs.data();
        let (cw, cb) = (self.conv_w.data(), self.conv_b.data());
        let mut conv = vec![0.0f32; s * l * c];
        for si in 0..s {
            for li in 0..l {
                let o = (si * l + li) * c;
                for ch in 0..c {
                    let mut acc = cb[ch];
                    for k in 0..3 {
                        let pos = li as isize + k as isize - 1;
                        if pos >= 0 && (pos as usize) < l {
                            acc += cw[ch * 3 + k] * xd[(si * l + pos as usize) * c + ch];
                        }
                    }
                    conv[o + ch] = tensor::silu_scalar(acc);
                }
            }
        }
        t.count(s * l * c * 3);
        let xc = Tensor::from_parts(vec![s, l, c], conv);
        let bc = self.x_proj.forward(&xc, t)?;

        let delta = softplus(self.dt.data()[0]);
        let mut a_bar = vec![0.0f32; c * n];
        let mut b_coef = vec![0.0f32; c * n];
        for (i, &al) in self.a_log.data().iter().enumerate() {
            let a = -al.exp();
            let e = (delta * a).exp();
            a_bar[i] = e;
            b_coef[i] = (e - 1.0) / a;
        }

        let (xcd, bcd, zd, dd) = (xc.data(), bc.data(), z.data(), self.d.data());
        let mut out = vec![0.0f32; s * l * c];
        let mut state = vec![0.0f32; c * n];
        for si in 0..s {
            state.iter_mut().for_each(|v| *v = 0.0);
            for li in 0..l {
                let row = si * l + li;
                let bt = &bcd[row * 2 * n..row * 2 * n + n];
                let ct = &bcd[row * 2 * n + n..(row + 1) * 2 * n];
                for ch in 0..c {
                    let xv = xcd[row * c + ch];
                    let hs = &mut state[ch * n..(ch + 1) * n];
                    let (ab, bcf) = (&a_bar[ch * n..(ch + 1) * n], &b_coef[ch * n..(ch + 1) * n]);
                    let mut y = 0.0f32;
                    for k in 0..n {
                        hs[k] = ab[k] * hs[k] + bcf[k] * bt[k] * xv;
                        y += ct[k] * hs[k];
                    }
                    y += dd[ch] * xv;
                    out[row * c + ch] = y * tensor::silu_scalar(zd[row * c + ch]);
                }
            }
        }
        Ok(Tensor::from_parts(vec![s, l, c], out))
    }
}

impl Params for SsmHead {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.in_proj.params();
        p.extend([&self.conv_w, &self.conv_b]);
        p.extend(self.x_proj.params());
        p.extend([&self.a_log, &self.d, &self.dt]);
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.in_proj.params_mut();
        p.extend([&mut self.conv_w, &mut self.conv_b]);
        p.extend(self.x_proj.params_mut());
        p.extend([&mut self.a_log, &mut self.d, &mut self.dt]);
        p
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Mamba {
    window: usize,
    heads: Vec<SsmHead>,
    out_proj: Linear,
}

impl Mamba {
    pub fn new(c: usize, heads: usize, state: usize, window: usize, rng: &mut Rng) -> Self {
        let hs = (0..heads).map(|_| SsmHead::new(c, state, rng)).collect();
        Mamba {
            window,
            heads: hs,
            out_proj: Linear::new(heads * c, c, rng),
        }
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let (b, h, w) = (x.dim(0), x.dim(2), x.dim(3));
        let groups = Partition::Window(self.window).groups(h, w);
        let tokens = gather(x, &groups);
        let u = layernorm(&tokens);
        let outs = self
            .heads
            .iter()
            .map(|hd| hd.forward(&u, t))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = outs.iter().collect();
        let y = self.out_proj.forward(&concat(&refs, 2)?, t)?;
        Ok(scatter(&add(&tokens, &y)?, &groups, b, h, w))
    }
}

impl Params for Mamba {
    fn params(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self.heads.iter().flat_map(|h| h.params()).collect();
        p.extend(self.out_proj.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self.heads.iter_mut().flat_map(|h| h.params_mut()).collect();
        p.extend(self.out_proj.params_mut());
        p
    }
}

/// Phase-aware token mixing along one spatial axis: the projected features become
/// a wave `(x cos phi, x sin phi)` that a grouped conv mixes along that axis.
#[derive(Clone, Debug)]
pub(crate) struct PhaseBranch {
    fc: Conv,
    phase: Tensor,
    mix: Conv,
}

impl PhaseBranch {
    fn new(c: usize, vertical: bool, rng: &mut Rng) -> Self {
        let (kernel, pad) = if vertical { ((5, 1), (2, 0)) } else { ((1, 5), (0, 2)) };
        PhaseBranch {
            fc: Conv::square(c, c, 1, 1, rng),
            phase: gaussian(&[c], 1, rng),
            mix: Conv::new(
                2 * c,
                c,
                kernel,
                Conv2dOpts {
                    stride: 1,
                    pad,
                    groups: c,
                },
                rng,
            ),
        }
    }

    fn forward(&self, u: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let xh = self.fc.forward(u, t)?;
        let (b, c, h, w) = (xh.dim(0), xh.dim(1), xh.dim(2), xh.dim(3));
        let plane = h * w;
        let mut wave = vec![0.0f32; b * 2 * c * plane];
        for bi in 0..b {
            for ch in 0..c {
                let (sin, cos) = self.phase.data()[ch].sin_cos();
                let src = &xh.data()[(bi * c + ch) * plane..(bi * c + ch + 1) * plane];
                let re = (bi * 2 * c + 2 * ch) * plane;
                let im = re + plane;
                for (i, &v) in src.iter().enumerate() {
                    wave[re + i] = v * cos;
                    wave[im + i] = v * sin;
                }
            }
        }
        self.mix.forward(&Tensor::from_parts(vec![b, 2 * c, h, w], wave), t)
    }
}

impl Params for PhaseBranch {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.fc.params();
        p.push(&self.phase);
        p.extend(self.mix.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.fc.params_mut();
        p.push(&mut self.phase);
        p.extend(self.mix.params_mut());
        p
    }
}

#[derive(Clone, Debug)]
pub(crate) struct WaveUnit {
    along_h: PhaseBranch,
    along_w: PhaseBranch,
    channel: Conv,
    proj: Conv,
    fc1: Conv,
    fc2: Conv,
}

impl WaveUnit {
    fn new(c: usize, rng: &mut Rng) -> Self {
        WaveUnit {
            along_h: PhaseBranch::new(c, true, rng),
            along_w: PhaseBranch::new(c, false, rng),
            channel: Conv::square(c, c, 1, 1, rng),
            proj: Conv::square(c, c, 1, 1, rng),
            fc1: Conv::square(c, 4 * c, 1, 1, rng),
            fc2: Conv::square(4 * c, c, 1, 1, rng),
        }
    }

    fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let u = bn(x, t)?;
        let mixed = add(
            &add(&self.along_h.forward(&u, t)?, &self.along_w.forward(&u, t)?)?,
            &self.channel.forward(&u, t)?,
        )?;
        let x = add(x, &self.proj.forward(&mixed, t)?)?;
        let v = bn(&x, t)?;
        let hidden = silu(&self.fc1.forward(&v, t)?);
        add(&x, &self.fc2.forward(&hidden, t)?)
    }
}

impl Params for WaveUnit {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.along_h.params();
        p.extend(self.along_w.params());
        for c in [&self.channel, &self.proj, &self.fc1, &self.fc2] {
            p.extend(c.params());
        }
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.along_h.params_mut();
        p.extend(self.along_w.params_mut());
        for c in [&mut self.channel, &mut self.proj, &mut self.fc1, &mut self.fc2] {
            p.extend(c.params_mut());
        }
        p
    }
}

#[derive(Clone, Debug)]
pub(crate) struct WaveMlp {
    units: Vec<WaveUnit>,
}

impl WaveMlp {
    pub fn new(c: usize, repeats: usize, rng: &mut Rng) -> Self {
        WaveMlp {
            units: (0..repeats).map(|_| WaveUnit::new(c, rng)).collect(),
        }
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let mut y = x.clone();
        for u in &self.units {
            y = u.forward(&y, t)?;
        }
        Ok(y)
    }
}

impl Params for WaveMlp {
    fn params(&self) -> Vec<&Tensor> {
        self.units.iter().flat_map(|u| u.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.units.iter_mut().flat_map(|u| u.params_mut()).collect()
    }
}

/// Convolutional LSTM cell. Gates come from a depthwise 3x3 over `concat(x, h)`
/// followed by a pointwise projection to the four gates `i, f, o, g`.
#[derive(Clone, Debug)]
pub(crate) struct ConvLstm {
    pub depthwise: Conv,
    pub pointwise: Conv,
}

impl ConvLstm {
    pub fn new(c: usize, rng: &mut Rng) -> Self {
        ConvLstm {
            depthwise: Conv::new(
                2 * c,
                2 * c,
                (3, 3),
                Conv2dOpts {
                    stride: 1,
                    pad: (1, 1),
                    groups: 2 * c,
                },
                rng,
            ),
            pointwise: Conv::square(2 * c, 4 * c, 1, 1, rng),
        }
    }

    /// One step. Returns `(h', c')`.
    pub fn forward(&self, x: &Tensor, h: &Tensor, c: &Tensor, t: &mut Trace) -> Result<(Tensor, Tensor)> {
        let gates = self
            .pointwise
            .forward(&self.depthwise.forward(&concat(&[x, h], 1)?, t)?, t)?;
        let g = split(&gates, 1, 4)?;
        let (i, f, o, cand) = (&g[0], &g[1], &g[2], &g[3]);
        let mut c_next = vec![0.0f32; c.len()];
        let mut h_next = vec![0.0f32; c.len()];
        for k in 0..c.len() {
            let cn = tensor::sigmoid_scalar(f.data()[k]) * c.data()[k]
                + tensor::sigmoid_scalar(i.data()[k]) * cand.data()[k].tanh();
            c_next[k] = cn;
            h_next[k] = tensor::sigmoid_scalar(o.data()[k]) * cn.tanh();
        }
        Ok((
            Tensor::from_parts(c.shape().to_vec(), h_next),
            Tensor::from_parts(c.shape().to_vec(), c_next),
        ))
    }
}

impl Params for ConvLstm {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.depthwise.params();
        p.extend(self.pointwise.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.depthwise.params_mut();
        p.extend(self.pointwise.params_mut());
        p
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Sppf {
    cv1: ConvUnit,
    cv2: ConvUnit,
}

impl Sppf {
    pub fn new(c: usize, rng: &mut Rng) -> Self {
        Sppf {
            cv1: ConvUnit::new(c, c / 2, 1, 1, rng),
            cv2: ConvUnit::new(2 * c, c, 1, 1, rng),
        }
    }

    pub fn forward(&self, x: &Tensor, t: &mut Trace) -> Result<Tensor> {
        let y = self.cv1.forward(x, t)?;
        let p1 = maxpool2d(&y, 5, 1, 2)?;
        let p2 = maxpool2d(&p1, 5, 1, 2)?;
        let p3 = maxpool2d(&p2, 5, 1, 2)?;
        self.cv2.forward(&concat(&[&y, &p1, &p2, &p3], 1)?, t)
    }
}

impl Params for Sppf {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.cv1.params();
        p.extend(self.cv2.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.cv1.params_mut();
        p.extend(self.cv2.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisor_rule() {
        assert_eq!(largest_divisor_at_most(16, 4), 4);
        assert_eq!(largest_divisor_at_most(2, 4), 2);
        assert_eq!(largest_divisor_at_most(6, 4), 3);
        assert_eq!(largest_divisor_at_most(10, 8), 5);
        assert_eq!(largest_divisor_at_most(7, 4), 1);
    }

    #[test]
    fn partitions_cover_every_pixel_once() {
        for part in [Partition::Window(4), Partition::Grid(4), Partition::Window(8)] {
            for (h, w) in [(8, 8), (2, 2), (16, 12), (10, 6)] {
                let mut seen: Vec<usize> = part.groups(h, w).into_iter().flatten().collect();
                seen.sort_unstable();
                assert_eq!(seen, (0..h * w).collect::<Vec<_>>(), "{part:?} {h}x{w}");
            }
        }
    }

    #[test]
    fn grid_groups_are_strided() {
        let g = Partition::Grid(2).groups(4, 4);
        assert_eq!(g[0], vec![0, 2, 8, 10]);
        let w = Partition::Window(2).groups(4, 4);
        assert_eq!(w[0], vec![0, 1, 4, 5]);
    }

    #[test]
    fn gather_scatter_inverse() {
        let x = Tensor::randn(&[2, 3, 4, 6], 1.0, &mut Rng::new(0));
        let g = Partition::Grid(4).groups(4, 6);
        assert_eq!(scatter(&gather(&x, &g), &g, 2, 4, 6), x);
    }

    #[test]
    fn lstm_gate_identity() {
        let mut rng = Rng::new(1);
        let mut cell = ConvLstm::new(3, &mut rng);
        cell.pointwise.w = Tensor::zeros(cell.pointwise.w.shape());
        let mut bias = vec![0.0f32; 12];
        bias[..3].fill(-100.0);
        bias[3..6].fill(100.0);
        cell.pointwise.b = Tensor::new(vec![12], bias).unwrap();
        let x = Tensor::randn(&[1, 3, 4, 4], 1.0, &mut rng);
        let h = Tensor::randn(&[1, 3, 4, 4], 1.0, &mut rng);
        let c = Tensor::randn(&[1, 3, 4, 4], 1.0, &mut rng);
        let (_, c2) = cell.forward(&x, &h, &c, &mut Trace::default()).unwrap();
        for (a, b) in c2.data().iter().zip(c.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_rows_are_normalized() {
        let mut rng = Rng::new(2);
        let block = MaxVit::new(64, 1, 2, 4, &mut rng);
        let x = Tensor::randn(&[2, 64, 8, 8], 1.0, &mut rng);
        let mut t = Trace::default();
        block.forward(&x, &mut t).unwrap();
        assert!(t.attention_rows() > 0);
        assert!(t.max_attention_row_error() < 1e-5);
    }
}

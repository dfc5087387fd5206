//! Empirical neural tangent kernel on a handful of probe inputs.
//!
//! The Jacobian of a scalar-output model with respect to every parameter is taken
//! by central finite differences, giving `Theta = J J^T` over the probes.

use super::ScoreConfig;
use crate::blocks::{ComputeGraph, RecurrentState};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

const NTK_STREAM: u64 = 0x006e_746b;

/// A scalar function of an input with individually addressable parameters.
pub trait ParamFunction {
    fn num_params(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, v: f64);
    fn eval(&self, x: &Tensor) -> Result<f64>;
}

/// `f(x) = w . x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub w: Vec<f64>,
}

impl ParamFunction for LinearProbe {
    fn num_params(&self) -> usize {
        self.w.len()
    }

    fn param(&self, i: usize) -> f64 {
        self.w[i]
    }

    fn set_param(&mut self, i: usize, v: f64) {
        self.w[i] = v;
    }

    fn eval(&self, x: &Tensor) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::shape(
                "linear probe",
                "input",
                format!("expected {} values, got {}", self.w.len(), x.len()),
            ));
        }
        Ok(self.w.iter().zip(x.data()).map(|(w, &v)| w * v as f64).sum())
    }
}

/// The graph's output, global-average-pooled and averaged to one scalar per input.
pub struct GraphFunction {
    graph: ComputeGraph,
    /// `(tensor index, offset)` of each flat parameter index is found by scanning `sizes`.
    sizes: Vec<usize>,
}

impl GraphFunction {
    pub fn new(graph: ComputeGraph) -> Self {
        let sizes = graph.param_tensors().iter().map(|t| t.len()).collect();
        GraphFunction { graph, sizes }
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (t, &n) in self.sizes.iter().enumerate() {
            if i < n {
                return (t, i);
            }
            i -= n;
        }
        panic!("parameter index out of range");
    }
}

impl ParamFunction for GraphFunction {
    fn num_params(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn param(&self, i: usize) -> f64 {
        let (t, o) = self.locate(i);
        self.graph.param_tensors()[t].data()[o] as f64
    }

    fn set_param(&mut self, i: usize, v: f64) {
        let (t, o) = self.locate(i);
        self.graph.param_tensors_mut()[t].data_mut()[o] = v as f32;
    }

    fn eval(&self, x: &Tensor) -> Result<f64> {
        let (y, _) = self.graph.forward(x, RecurrentState::new())?;
        Ok(y.data().iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64)
    }
}

/// `J[p][i] = d f(probe_p) / d theta_i` by central differences of step `h`.
///
/// The divisor is the difference actually stored, so models that hold parameters
/// at reduced precision are not biased by rounding of `theta +- h`.
pub fn jacobian<F: ParamFunction>(f: &mut F, probes: &[Tensor], h: f64) -> Result<Vec<Vec<f64>>> {
    let n = f.num_params();
    let mut jac = vec![vec![0.0; n]; probes.len()];
    for i in 0..n {
        let theta = f.param(i);
        f.set_param(i, theta + h);
        let up = f.param(i);
        let plus = probes.iter().map(|x| f.eval(x)).collect::<Result<Vec<_>>>()?;
        f.set_param(i, theta - h);
        let down = f.param(i);
        let minus = probes.iter().map(|x| f.eval(x)).collect::<Result<Vec<_>>>()?;
        f.set_param(i, theta);
        let step = up - down;
        for (p, row) in jac.iter_mut().enumerate() {
            row[i] = (plus[p] - minus[p]) / step;
        }
    }
    Ok(jac)
}

/// `Theta = J J^T`, row-major `m x m`.
pub fn gram(jac: &[Vec<f64>]) -> Vec<f64> {
    let m = jac.len();
    let mut g = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let v: f64 = jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum();
            g[a * m + b] = v;
            g[b * m + a] = v;
        }
    }
    g
}

/// Eigenvalues of a symmetric `n x n` matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * n + p], m[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `lambda_min / lambda_max` of a kernel matrix, or its reciprocal when `reciprocal`.
pub fn condition_ratio(theta: &[f64], m: usize, reciprocal: bool) -> Result<f64> {
    let ev = symmetric_eigenvalues(theta, m);
    let (lo, hi) = (ev[0], ev[m - 1]);
    if hi <= 0.0 {
        return Err(Error::Degenerate("kernel has no positive eigenvalue".into()));
    }
    let r = lo / hi;
    Ok(if reciprocal { 1.0 / r } else { r })
}

pub fn ntk_cond_of<F: ParamFunction>(f: &mut F, probes: &[Tensor], step: f64, reciprocal: bool) -> Result<f64> {
    let jac = jacobian(f, probes, step)?;
    condition_ratio(&gram(&jac), probes.len(), reciprocal)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NtkResult {
    Value(f64),
    /// The graph has more parameters than finite differencing is allowed to touch.
    Unavailable {
        params: usize,
    },
}

impl NtkResult {
    pub fn value(self) -> Option<f64> {
        match self {
            NtkResult::Value(v) => Some(v),
            NtkResult::Unavailable { .. } => None,
        }
    }
}

/// NTK ratio of a graph over `cfg.ntk_probe_count` Gaussian probes, each evaluated
/// on its own so batch statistics do not couple them.
pub fn ntk_cond(graph: &ComputeGraph, cfg: &ScoreConfig) -> Result<NtkResult> {
    let params = graph.num_params();
    if params > cfg.ntk_max_params {
        return Ok(NtkResult::Unavailable { params });
    }
    let (h, w) = graph.input_hw();
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let mut rng = Rng::with_stream(seed, NTK_STREAM);
    let probes: Vec<Tensor> = (0..cfg.ntk_probe_count)
        .map(|_| Tensor::randn(&[1, graph.input_channels(), h, w], 1.0, &mut rng))
        .collect();
    let mut f = GraphFunction::new(graph.clone());
    ntk_cond_of(&mut f, &probes, cfg.ntk_fd_step, cfg.ntk_reciprocal).map(NtkResult::Value)
}

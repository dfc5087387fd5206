use super::ScoreConfig;
use crate::blocks::{ComputeGraph, RecurrentState, Trace};
use crate::error::Result;
use crate::tensor::{frobenius_norm, Rng, Tensor};

/// Stream id separating input/noise draws from weight initialization.
const ZEN_STREAM: u64 = 0x007a_656e;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZenScore {
    /// Mean over seeds; `-inf` when some seed produced no output change.
    pub value: f64,
    pub zero_delta: bool,
}

/// Mean over the batch of `||f(x_b) - f(x_b + alpha * eps_b)||_F`, plus the
/// batch-norm spreads measured on the unperturbed pass.
fn delta_and_bn(graph: &ComputeGraph, x: &Tensor, eps: &Tensor, alpha: f32) -> Result<(f64, f64)> {
    let mut trace = Trace::default();
    let (y0, _) = graph.forward_traced(x, RecurrentState::new(), &mut trace)?;
    let shifted = Tensor::from_parts(
        x.shape().to_vec(),
        x.data().iter().zip(eps.data()).map(|(a, e)| a + alpha * e).collect(),
    );
    let (y1, _) = graph.forward(&shifted, RecurrentState::new())?;
    let b = y0.dim(0);
    let per = y0.len() / b;
    let mut delta = 0.0;
    for i in 0..b {
        let diff: Vec<f32> = y0.data()[i * per..(i + 1) * per]
            .iter()
            .zip(&y1.data()[i * per..(i + 1) * per])
            .map(|(a, c)| a - c)
            .collect();
        delta += frobenius_norm(&Tensor::from_parts(vec![per], diff));
    }
    Ok((delta / b as f64, trace.bn_log_sigmas().iter().sum()))
}

/// Score for one explicit `(x, eps)` pair: `ln(delta) + sum of per-layer mean ln(sigma)`.
pub fn zen_score_single(graph: &ComputeGraph, x: &Tensor, eps: &Tensor, alpha: f32) -> Result<f64> {
    let (delta, bn) = delta_and_bn(graph, x, eps, alpha)?;
    Ok(if delta > 0.0 {
        delta.ln() + bn
    } else {
        f64::NEG_INFINITY
    })
}

/// Expressivity score averaged over `cfg.seeds`, each drawing a fresh Gaussian batch
/// and perturbation at the configured geometry.
pub fn zen_score(graph: &ComputeGraph, cfg: &ScoreConfig) -> Result<ZenScore> {
    let (h, w) = graph.input_hw();
    let shape = [cfg.batch, graph.input_channels(), h, w];
    let mut total = 0.0;
    let mut zero_delta = false;
    for &seed in &cfg.seeds {
        let mut rng = Rng::with_stream(seed, ZEN_STREAM);
        let x = Tensor::randn(&shape, 1.0, &mut rng);
        let eps = Tensor::randn(&shape, 1.0, &mut rng);
        let s = zen_score_single(graph, &x, &eps, cfg.noise_alpha as f32)?;
        zero_delta |= s == f64::NEG_INFINITY;
        total += s;
    }
    let value = if zero_delta {
        f64::NEG_INFINITY
    } else {
        total / cfg.seeds.len() as f64
    };
    Ok(ZenScore { value, zero_delta })
}

//! Shared inputs for the benchmarks.

use hybridnas::genome::Genome;
use hybridnas::proxies::ScoreConfig;
use hybridnas::tensor::{Rng, Tensor};

pub const SMALL_GENOME: &str =
    "SHIST|Ch16|L1:maxvit,m2.00,r1|L2:mamba,m1.50,h1,hm1.0|L3:c2f,m1.75,r3|L4:wavemlp,m1.33,r3";

pub fn small_genome() -> Genome {
    SMALL_GENOME.parse().expect("fixture genome parses")
}

/// One seed, batch 2: enough to time a scoring pass without the default averaging.
pub fn quick_score_config() -> ScoreConfig {
    ScoreConfig {
        batch: 2,
        seeds: vec![0],
        ..ScoreConfig::default()
    }
}

pub fn randn(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut Rng::new(seed))
}

/// Two length-`n` vectors with many ties.
pub fn tied_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Rng::new(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.below(50) as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v + rng.below(20) as f64).collect();
    (x, y)
}

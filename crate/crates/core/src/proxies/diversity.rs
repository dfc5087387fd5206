use crate::genome::Genome;

/// Largest pairwise count difference sum for four layers over four block types,
/// reached when every layer uses the same block.
pub const MAX_PAIRWISE_SUM: usize = 12;

/// `sum_{i<j} |counts[i] - counts[j]|`.
pub fn pairwise_sum(counts: &[usize; 4]) -> usize {
    let mut s = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            s += counts[i].abs_diff(counts[j]);
        }
    }
    s
}

/// `1 - pairwise_sum / 12`: 0 when all layers share a block, 1 when all differ.
pub fn diversity_from_counts(counts: &[usize; 4]) -> f64 {
    1.0 - pairwise_sum(counts) as f64 / MAX_PAIRWISE_SUM as f64
}

pub fn diversity_index(g: &Genome) -> f64 {
    diversity_from_counts(&g.block_counts())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(diversity_from_counts(&[4, 0, 0, 0]), 0.0);
        assert_eq!(diversity_from_counts(&[1, 1, 1, 1]), 1.0);
        assert_eq!(pairwise_sum(&[2, 1, 1, 0]), 6);
        assert_eq!(diversity_from_counts(&[2, 1, 1, 0]), 0.5);
        assert_eq!(diversity_from_counts(&[3, 1, 0, 0]), 1.0 - 10.0 / 12.0);
        assert_eq!(diversity_from_counts(&[2, 2, 0, 0]), 1.0 - 8.0 / 12.0);
    }

    #[test]
    fn mixed_genome_is_fully_diverse() {
        let g: Genome = "SHIST|Ch16|L1:maxvit,m2.00,r1|L2:mamba,m1.50,h1,hm1.0|L3:c2f,m1.75,r3|L4:wavemlp,m1.33,r3"
            .parse()
            .unwrap();
        assert_eq!(diversity_index(&g), 1.0);
    }
}

//! A small Markov-chain language for smoke tests and demos.
//!
//! Word frequencies follow a Zipf-like law and every word has a handful of
//! preferred successors, so sentences have both lexical and sequential
//! regularities that random substitution destroys.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::derive_seed;

#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    words: Vec<String>,
    start: WeightedIndex<f64>,
    successors: Vec<WeightedIndex<f64>>,
}

impl SyntheticLanguage {
    /// Builds a language over `vocab_size` words; `seed` fixes its transition structure.
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        assert!(vocab_size >= 2, "need at least two words");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = (0..vocab_size).map(|i| format!("w{i:03}")).collect();
        let zipf: Vec<f64> = (0..vocab_size).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let successors = (0..vocab_size)
            .map(|_| {
                // Background Zipf mass plus a few strongly preferred successors.
                let mut weights: Vec<f64> = zipf.iter().map(|z| 0.2 * z).collect();
                for _ in 0..3 {
                    let next = rng.gen_range(0..vocab_size);
                    weights[next] += 1.0;
                }
                WeightedIndex::new(weights).expect("positive weights")
            })
            .collect();
        SyntheticLanguage {
            words,
            start: WeightedIndex::new(&zipf).expect("positive weights"),
            successors,
        }
    }

    /// `count` sentences with lengths uniform in `min_len..=max_len`.
    pub fn sample(&self, count: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<String> {
        assert!(1 <= min_len && min_len <= max_len);
        (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
                let len = rng.gen_range(min_len..=max_len);
                let mut cur = self.start.sample(&mut rng);
                let mut out = vec![self.words[cur].as_str()];
                for _ in 1..len {
                    cur = self.successors[cur].sample(&mut rng);
                    out.push(&self.words[cur]);
                }
                out.join(" ")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_shapes_and_determinism() {
        let lang = SyntheticLanguage::new(50, 1);
        let a = lang.sample(40, 3, 10, 9);
        assert_eq!(a, lang.sample(40, 3, 10, 9));
        assert_ne!(a, lang.sample(40, 3, 10, 10));
        for line in &a {
            let n = line.split_whitespace().count();
            assert!((3..=10).contains(&n));
        }
    }
}

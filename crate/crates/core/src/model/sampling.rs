use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SocProblem;

/// Realization indices `(j_0, …, j_{T-1})` of one scenario, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePath {
    pub indices: Vec<usize>,
    pub seed: u64,
}

/// Mixes `stream` into `base` (splitmix64 finalizer); used to derive
/// independent, order-free seeds for iterations and evaluation paths.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one index per stage from the stage distribution.
pub fn sample_path(problem: &SocProblem, seed: u64) -> SamplePath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = problem
        .stage_data
        .iter()
        .map(|s| {
            if s.realizations.len() == 1 {
                return 0;
            }
            WeightedIndex::new(s.realizations.iter().map(|r| r.prob))
                .expect("validated probabilities")
                .sample(&mut rng)
        })
        .collect();
    SamplePath { indices, seed }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ground-truth data: planted dictionaries with known feature directions and
//! a toy next-token model whose MLP block can be patched.

mod planted;
mod toylm;

pub use planted::{
    gen_planted, gen_planted_sharded, recovery_score, InputDist, PlantedDictionary, PlantedRows,
    PlantedSpec, RecoveryReport,
};
pub use toylm::{cross_entropy, gen_toy_corpus, write_toy_corpus, CorpusSampling, ToyCorpus, ToyLm, ToyLmConfig};

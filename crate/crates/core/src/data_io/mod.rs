//! Toy distributions, pair datasets, and their on-disk formats.

mod pairs;
mod toy;

pub use pairs::{
    generate_pairs, generate_pairs_with, load_pairs, meta_path, save_pairs, Pair, PairDataset,
    Provenance, PAIR_MAGIC, PAIR_VERSION,
};
pub use toy::{index_rng, sample_data, sample_noise, standard_normal, DistKind, ToyDistribution};

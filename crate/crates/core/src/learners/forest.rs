//! Random forest: bagged CART trees with per-node feature subsampling and
//! majority voting. Tree seeds derive from (forest seed, tree index), so the
//! ensemble is identical no matter how trees are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::tree::{self, TreeModel};
use super::{maybe_par_map, FeaturesPerSplit, RfParams};
use crate::flowstore::FeatureView;
use crate::{seeding, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ForestModel<S: Scalar> {
    pub(crate) trees: Vec<TreeModel<S>>,
}

impl<S: Scalar> ForestModel<S> {
    /// Majority vote over trees; ties resolve to the lowest class position.
    pub(crate) fn predict_pos(&self, row: &[S], k: usize) -> usize {
        let mut votes = vec![0u32; k];
        for t in &self.trees {
            votes[t.predict_pos(row) as usize] += 1;
        }
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate().skip(1) {
            if v > votes[best] {
                best = i;
            }
        }
        best
    }
}

pub(crate) fn fit_forest<S: Scalar>(
    x: &FeatureView<S>,
    y_pos: &[u32],
    k: usize,
    params: &RfParams,
    seed: u64,
    workers: usize,
) -> ForestModel<S> {
    let p = x.ncols();
    let per_split = match params.features_per_split {
        FeaturesPerSplit::Sqrt => (p as f64).sqrt().ceil() as usize,
        FeaturesPerSplit::All => p,
        FeaturesPerSplit::Fixed(m) => m.min(p),
    }
    .max(1);

    let trees = maybe_par_map(workers, params.n_trees, |i| {
        let mut rng = ChaCha20Rng::seed_from_u64(seeding::split_seed(seed, i as u64));
        let n = x.nrows();
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let full: Vec<usize> = (0..p).collect();
        tree::grow(x, y_pos, k, rows, &params.tree, || {
            if per_split >= p {
                full.clone()
            } else {
                let mut subset = rand::seq::index::sample(&mut rng, p, per_split).into_vec();
                subset.sort_unstable();
                subset
            }
        })
    });
    ForestModel { trees }
}

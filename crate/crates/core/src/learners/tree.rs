//! CART decision tree, gini impurity, exact splits on raw feature values.
//!
//! Shared by the standalone DT learner and the random forest (which passes a
//! per-node candidate-feature sampler). Grown iteratively with an explicit
//! work stack, so unbounded depth cannot overflow the call stack.

use serde::{Deserialize, Serialize};

use super::DtParams;
use crate::flowstore::FeatureView;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub(crate) enum Node<S: Scalar> {
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: S, left: u32, right: u32 },
    /// Class position (index into the model's ascending class list).
    Leaf { class_pos: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TreeModel<S: Scalar> {
    pub(crate) nodes: Vec<Node<S>>,
}

impl<S: Scalar> TreeModel<S> {
    pub(crate) fn predict_pos(&self, row: &[S]) -> u32 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { class_pos } => return class_pos,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }
}

/// Fit on all features (the standalone DT path).
pub(crate) fn fit_tree<S: Scalar>(
    x: &FeatureView<S>,
    y_pos: &[u32],
    k: usize,
    params: &DtParams,
) -> TreeModel<S> {
    let all: Vec<usize> = (0..x.ncols()).collect();
    grow(x, y_pos, k, (0..x.nrows()).collect(), params, || all.clone())
}

/// Winning split of one node, if any.
struct BestSplit<S> {
    score: f64,
    feature: usize,
    threshold: S,
    /// Largest left-side value; rows with value <= this go left.
    left_max: S,
}

/// Grow a tree over `rows`. `pick` supplies the candidate features for each
/// node, ascending; it is consulted once per node that survives the
/// early-stop checks, in deterministic node order.
pub(crate) fn grow<S: Scalar>(
    x: &FeatureView<S>,
    y_pos: &[u32],
    k: usize,
    rows: Vec<usize>,
    params: &DtParams,
    mut pick: impl FnMut() -> Vec<usize>,
) -> TreeModel<S> {
    assert!(!rows.is_empty(), "cannot grow a tree over zero rows");
    let mut nodes: Vec<Node<S>> = vec![Node::Leaf { class_pos: 0 }];
    // (slot to fill, rows of the node, depth)
    let mut work: Vec<(usize, Vec<usize>, u32)> = vec![(0, rows, 0)];
    let mut counts = vec![0u64; k];
    let mut sorted: Vec<(S, u32)> = Vec::new();

    while let Some((slot, rows, depth)) = work.pop() {
        counts.iter_mut().for_each(|c| *c = 0);
        for &r in &rows {
            counts[y_pos[r] as usize] += 1;
        }
        let majority = argmax_count(&counts);
        let n = rows.len();
        let pure = counts[majority as usize] as usize == n;
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if pure || n < params.min_samples_split || depth_capped {
            nodes[slot] = Node::Leaf { class_pos: majority };
            continue;
        }

        let best = find_split(x, y_pos, &rows, &counts, &pick(), &mut sorted);
        let Some(best) = best else {
            nodes[slot] = Node::Leaf { class_pos: majority };
            continue;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| x.get(r, best.feature) <= best.left_max);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let left = nodes.len() as u32;
        let right = left + 1;
        nodes.push(Node::Leaf { class_pos: 0 });
        nodes.push(Node::Leaf { class_pos: 0 });
        nodes[slot] =
            Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        // Right pushed first so the left child is processed (and numbered) next.
        work.push((right as usize, right_rows, depth + 1));
        work.push((left as usize, left_rows, depth + 1));
    }
    TreeModel { nodes }
}

/// Highest count wins; ties go to the lowest class position.
fn argmax_count(counts: &[u64]) -> u32 {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best as u32
}

/// Scan every candidate feature for the boundary maximizing the gini score
/// `Σ_child (Σ_c count_c²)/n_child`. Strictly-greater updates with features
/// ascending and boundaries left-to-right make ties resolve to the lowest
/// feature index, then the lowest threshold.
fn find_split<S: Scalar>(
    x: &FeatureView<S>,
    y_pos: &[u32],
    rows: &[usize],
    parent_counts: &[u64],
    features: &[usize],
    sorted: &mut Vec<(S, u32)>,
) -> Option<BestSplit<S>> {
    let n = rows.len() as f64;
    let parent_sq: f64 = parent_counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    let parent_score = parent_sq / n;
    let k = parent_counts.len();

    let mut best: Option<BestSplit<S>> = None;
    let mut left = vec![0u64; k];
    for &f in features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (x.get(r, f), y_pos[r])));
        sorted.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        left.iter_mut().for_each(|c| *c = 0);
        // Σ count² on both sides, updated incrementally: moving one row of a
        // class from right (count r) to left (count l) changes the squares by
        // +2l+1 and −(2r−1).
        let mut sq_left = 0.0f64;
        let mut sq_right = parent_sq;
        for i in 1..sorted.len() {
            let class = sorted[i - 1].1 as usize;
            let l = left[class];
            let r = parent_counts[class] - l;
            sq_left += (2 * l + 1) as f64;
            sq_right -= (2 * r - 1) as f64;
            left[class] = l + 1;
            let (vl, vr) = (sorted[i - 1].0, sorted[i].0);
            if vl == vr {
                continue;
            }
            let nl = i as f64;
            let nr = n - nl;
            let score = sq_left / nl + sq_right / nr;
            if score > parent_score && best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(BestSplit { score, feature: f, threshold: midpoint(vl, vr), left_max: vl });
            }
        }
    }
    best
}

/// Split threshold between adjacent values; falls back to the left value when
/// the float midpoint collapses onto the right one, so training rows always
/// land on the side they were partitioned to.
fn midpoint<S: Scalar>(vl: S, vr: S) -> S {
    let two = S::from_u8(2).unwrap();
    let mid = (vl + vr) / two;
    if mid < vr { mid.max(vl) } else { vl }
}

#[cfg(test)]
mod tests {
    use super::super::testhelp::view;
    use super::*;

    fn fit(x: &FeatureView<f64>, y: &[u32], k: usize) -> TreeModel<f64> {
        fit_tree(x, y, k, &DtParams::default())
    }

    #[test]
    fn single_threshold_problem() {
        let x = view(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let t = fit(&x, &[0, 0, 1, 1], 2);
        // Boundary between 2.0 and 3.0: midpoint threshold.
        assert_eq!(t.predict_pos(&[2.4]), 0);
        assert_eq!(t.predict_pos(&[2.5]), 0); // <= 2.5 goes left
        assert_eq!(t.predict_pos(&[2.6]), 1);
    }

    #[test]
    fn memorizes_duplicate_free_data() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(31);
        let rows: Vec<Vec<f64>> =
            (0..80).map(|_| (0..3).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let y: Vec<u32> = (0..80).map(|_| rng.random_range(0..3)).collect();
        let x = view(rows);
        let t = fit(&x, &y, 3);
        for (r, &label) in y.iter().enumerate() {
            assert_eq!(t.predict_pos(x.row(r)), label, "row {r} not memorized");
        }
    }

    #[test]
    fn leaf_ties_resolve_to_lowest_class() {
        // No feature separates the classes: single leaf, counts tied.
        let x = view(vec![vec![5.0], vec![5.0]]);
        let t = fit(&x, &[1, 0], 2);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_pos(&[5.0]), 0);
    }

    #[test]
    fn depth_cap_stops_growth() {
        let x = view(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let t = fit_tree(&x, &[0, 1, 0, 1], 2, &DtParams { max_depth: Some(0), min_samples_split: 2 });
        assert_eq!(t.nodes.len(), 1, "depth 0 must yield a single leaf");
    }

    #[test]
    fn rebuilding_is_deterministic() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> =
            (0..60).map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<u32> = (0..60).map(|_| rng.random_range(0..2)).collect();
        let x = view(rows);
        assert_eq!(fit(&x, &y, 2), fit(&x, &y, 2));
    }
}

//! Histogram gradient boosting with equal-frequency binning.
//!
//! Features are quantized once into at most `max_bins` bins per feature;
//! boosting rounds then grow depth-free best-first trees over bin indices
//! using second-order (gradient/hessian) split gains, with logistic loss for
//! binary targets and softmax with one tree per class otherwise. Leaf values
//! carry the learning rate. The per-iteration training loss is recorded so
//! callers can audit that optimization never regresses.

use serde::{Deserialize, Serialize};

use super::{argmax_lowest, maybe_par_map, HgbParams};
use crate::flowstore::FeatureView;
use crate::Scalar;

/// Guards second-order denominators; no hyperparameter maps to it.
const HESS_EPS: f64 = 1e-12;
/// Split gains at or below this are treated as noise, not structure.
const MIN_GAIN: f64 = 1e-12;

/// Per-feature quantile binning fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    /// Ascending cut points per feature; `bin = #edges < value`.
    edges: Vec<Vec<f64>>,
    /// One training value inside each bin.
    reps: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn fit<S: Scalar>(x: &FeatureView<S>, max_bins: usize) -> BinMapper {
        let (n, p) = (x.nrows(), x.ncols());
        let mut edges = Vec::with_capacity(p);
        let mut reps = Vec::with_capacity(p);
        for f in 0..p {
            let mut values: Vec<f64> = (0..n).map(|r| x.get(r, f).to_f64().unwrap()).collect();
            values.sort_unstable_by(f64::total_cmp);
            let mut distinct: Vec<f64> = values.clone();
            distinct.dedup();

            let mut feat_edges: Vec<f64> = Vec::new();
            if distinct.len() <= max_bins {
                for pair in distinct.windows(2) {
                    feat_edges.push(cut_between(pair[0], pair[1]));
                }
            } else {
                for k in 1..max_bins {
                    let pos = k * n / max_bins;
                    if pos == 0 || pos >= n || values[pos - 1] == values[pos] {
                        continue;
                    }
                    feat_edges.push(cut_between(values[pos - 1], values[pos]));
                }
                feat_edges.dedup();
            }

            let mut feat_reps: Vec<f64> = Vec::new();
            for &v in &distinct {
                let b = feat_edges.partition_point(|&e| e < v);
                if b == feat_reps.len() {
                    feat_reps.push(v);
                }
            }
            debug_assert_eq!(feat_reps.len(), feat_edges.len() + 1);
            edges.push(feat_edges);
            reps.push(feat_reps);
        }
        BinMapper { edges, reps }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    /// Values at a cut point fall in the lower bin.
    pub fn bin(&self, feature: usize, value: f64) -> usize {
        self.edges[feature].partition_point(|&e| e < value)
    }

    pub fn representative(&self, feature: usize, bin: usize) -> f64 {
        self.reps[feature][bin]
    }

    fn bin_row<S: Scalar>(&self, row: &[S], out: &mut Vec<u8>) {
        out.clear();
        out.extend(
            row.iter().enumerate().map(|(f, v)| self.bin(f, v.to_f64().unwrap()) as u8),
        );
    }
}

/// Cut between adjacent training values; the midpoint unless float rounding
/// collapses it onto the upper value, in which case the lower value itself
/// becomes the cut (values at a cut sort into the lower bin).
fn cut_between(vl: f64, vr: f64) -> f64 {
    let mid = vl + (vr - vl) / 2.0;
    if mid < vr { mid.max(vl) } else { vl }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum HNode {
    /// `bin_index(feature) <= bin` goes left.
    Split { feature: u32, bin: u8, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HTree {
    nodes: Vec<HNode>,
}

impl HTree {
    fn predict_bins(&self, bins: &[u8]) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                HNode::Leaf { value } => return value,
                HNode::Split { feature, bin, left, right } => {
                    at = if bins[feature as usize] <= bin { left as usize } else { right as usize };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgbModel {
    pub(crate) mapper: BinMapper,
    /// Baseline score per class (log odds for binary, log priors otherwise).
    pub(crate) f0: Vec<f64>,
    /// `trees[iteration][class]`; binary has one tree per iteration.
    trees: Vec<Vec<HTree>>,
    /// Entry 0: loss at the baseline; entry i: loss after iteration i.
    pub(crate) train_losses: Vec<f64>,
}

impl HgbModel {
    pub(crate) fn predict_pos<S: Scalar>(&self, row: &[S]) -> usize {
        let mut bins = Vec::new();
        self.mapper.bin_row(row, &mut bins);
        if self.f0.len() == 1 {
            let mut score = self.f0[0];
            for it in &self.trees {
                score += it[0].predict_bins(&bins);
            }
            usize::from(score > 0.0)
        } else {
            let mut scores = self.f0.clone();
            for it in &self.trees {
                for (s, t) in scores.iter_mut().zip(it) {
                    *s += t.predict_bins(&bins);
                }
            }
            argmax_lowest(&scores)
        }
    }
}

struct GrowInput<'a> {
    binned: &'a [u8],
    p: usize,
    n_bins: &'a [usize],
    g: &'a [f64],
    h: &'a [f64],
    params: &'a HgbParams,
    workers: usize,
}

#[derive(Clone, Copy)]
struct CandSplit {
    gain: f64,
    feature: usize,
    bin: u8,
}

struct OpenLeaf {
    slot: usize,
    rows: Vec<usize>,
    best: Option<CandSplit>,
}

fn leaf_value(rows: &[usize], inp: &GrowInput) -> f64 {
    let gsum: f64 = rows.iter().map(|&r| inp.g[r]).sum();
    let hsum: f64 = rows.iter().map(|&r| inp.h[r]).sum();
    -inp.params.learning_rate * gsum / (hsum + HESS_EPS)
}

/// Histograms of (Σg, Σh, count) per bin for every feature over `rows`.
/// The serial and per-feature-parallel paths add in identical row order.
fn histograms(rows: &[usize], inp: &GrowInput) -> Vec<Vec<(f64, f64, u32)>> {
    if inp.workers <= 1 {
        let mut hist: Vec<Vec<(f64, f64, u32)>> =
            inp.n_bins.iter().map(|&b| vec![(0.0, 0.0, 0); b]).collect();
        for &r in rows {
            let offset = r * inp.p;
            for (f, h) in hist.iter_mut().enumerate() {
                let cell = &mut h[inp.binned[offset + f] as usize];
                cell.0 += inp.g[r];
                cell.1 += inp.h[r];
                cell.2 += 1;
            }
        }
        hist
    } else {
        maybe_par_map(inp.workers, inp.p, |f| {
            let mut h = vec![(0.0, 0.0, 0); inp.n_bins[f]];
            for &r in rows {
                let cell = &mut h[inp.binned[r * inp.p + f] as usize];
                cell.0 += inp.g[r];
                cell.1 += inp.h[r];
                cell.2 += 1;
            }
            h
        })
    }
}

fn evaluate(rows: &[usize], inp: &GrowInput) -> Option<CandSplit> {
    if rows.len() < 2 * inp.params.min_samples_leaf {
        return None;
    }
    let hist = histograms(rows, inp);
    let (gt, ht): (f64, f64) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + inp.g[r], h + inp.h[r]));
    let total = rows.len() as u32;
    let parent = gt * gt / (ht + HESS_EPS);

    let mut best: Option<CandSplit> = None;
    for (f, fh) in hist.iter().enumerate() {
        let (mut gl, mut hl, mut cl) = (0.0f64, 0.0f64, 0u32);
        for b in 0..fh.len().saturating_sub(1) {
            gl += fh[b].0;
            hl += fh[b].1;
            cl += fh[b].2;
            if (cl as usize) < inp.params.min_samples_leaf {
                continue;
            }
            let cr = total - cl;
            if (cr as usize) < inp.params.min_samples_leaf {
                break;
            }
            let (gr, hr) = (gt - gl, ht - hl);
            let gain =
                0.5 * (gl * gl / (hl + HESS_EPS) + gr * gr / (hr + HESS_EPS) - parent);
            if gain > MIN_GAIN && best.is_none_or(|c| gain > c.gain) {
                best = Some(CandSplit { gain, feature: f, bin: b as u8 });
            }
        }
    }
    best
}

/// Best-first growth up to `max_leaf_nodes` leaves. Equal gains keep the
/// first candidate in scan order, both across open leaves and inside the
/// split scan (lowest feature, then lowest bin); every choice is
/// deterministic.
fn grow_htree(all_rows: Vec<usize>, inp: &GrowInput) -> HTree {
    let mut nodes = vec![HNode::Leaf { value: 0.0 }];
    let best = evaluate(&all_rows, inp);
    let mut open = vec![OpenLeaf { slot: 0, rows: all_rows, best }];
    let mut leaves = 1usize;

    while leaves < inp.params.max_leaf_nodes {
        let Some(pick) = open
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.best.map(|b| (i, b.gain)))
            .fold(None::<(usize, f64)>, |acc, (i, gain)| match acc {
                Some((_, g)) if g >= gain => acc,
                _ => Some((i, gain)),
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let OpenLeaf { slot, rows, best } = open.swap_remove(pick);
        let split = best.unwrap();

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| inp.binned[r * inp.p + split.feature] <= split.bin);
        let left = nodes.len() as u32;
        let right = left + 1;
        nodes.push(HNode::Leaf { value: 0.0 });
        nodes.push(HNode::Leaf { value: 0.0 });
        nodes[slot] = HNode::Split {
            feature: split.feature as u32,
            bin: split.bin,
            left,
            right,
        };
        let lb = evaluate(&left_rows, inp);
        let rb = evaluate(&right_rows, inp);
        open.push(OpenLeaf { slot: left as usize, rows: left_rows, best: lb });
        open.push(OpenLeaf { slot: right as usize, rows: right_rows, best: rb });
        leaves += 1;
    }

    for leaf in open {
        nodes[leaf.slot] = HNode::Leaf { value: leaf_value(&leaf.rows, inp) };
    }
    HTree { nodes }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn fit_hgb<S: Scalar>(
    x: &FeatureView<S>,
    y_pos: &[u32],
    k: usize,
    params: &HgbParams,
    workers: usize,
) -> HgbModel {
    let (n, p) = (x.nrows(), x.ncols());
    let mapper = BinMapper::fit(x, params.max_bins);
    let n_bins: Vec<usize> = (0..p).map(|f| mapper.n_bins(f)).collect();
    let mut binned = vec![0u8; n * p];
    let mut scratch = Vec::new();
    for (r, row) in x.rows().enumerate() {
        mapper.bin_row(row, &mut scratch);
        binned[r * p..(r + 1) * p].copy_from_slice(&scratch);
    }

    let all_rows: Vec<usize> = (0..n).collect();
    let mut trees: Vec<Vec<HTree>> = Vec::with_capacity(params.n_iter);
    let mut train_losses = Vec::with_capacity(params.n_iter + 1);

    if k == 2 {
        let t: Vec<f64> = y_pos.iter().map(|&c| f64::from(c)).collect();
        let pos = t.iter().sum::<f64>();
        let f0 = (pos / (n as f64 - pos)).ln();
        let mut scores = vec![f0; n];
        let logloss = |scores: &[f64]| -> f64 {
            scores
                .iter()
                .zip(&t)
                .map(|(&z, &ti)| z.max(0.0) + (-z.abs()).exp().ln_1p() - ti * z)
                .sum::<f64>()
                / n as f64
        };
        train_losses.push(logloss(&scores));
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..params.n_iter {
            for i in 0..n {
                let pi = sigmoid(scores[i]);
                g[i] = pi - t[i];
                h[i] = pi * (1.0 - pi);
            }
            let inp = GrowInput { binned: &binned, p, n_bins: &n_bins, g: &g, h: &h, params, workers };
            let tree = grow_htree(all_rows.clone(), &inp);
            for i in 0..n {
                scores[i] += tree.predict_bins(&binned[i * p..(i + 1) * p]);
            }
            train_losses.push(logloss(&scores));
            trees.push(vec![tree]);
        }
        HgbModel { mapper, f0: vec![f0], trees, train_losses }
    } else {
        let f0: Vec<f64> = (0..k)
            .map(|c| {
                let count = y_pos.iter().filter(|&&y| y as usize == c).count();
                (count as f64 / n as f64).ln()
            })
            .collect();
        let mut scores = vec![0.0; n * k];
        for row in scores.chunks_exact_mut(k) {
            row.copy_from_slice(&f0);
        }
        let softmax_loss = |scores: &[f64]| -> f64 {
            let mut loss = 0.0;
            for i in 0..n {
                let row = &scores[i * k..(i + 1) * k];
                let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
                loss += lse - row[y_pos[i] as usize];
            }
            loss / n as f64
        };
        train_losses.push(softmax_loss(&scores));

        let mut probs = vec![0.0; n * k];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..params.n_iter {
            for i in 0..n {
                let row = &scores[i * k..(i + 1) * k];
                let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let mut z = 0.0;
                for c in 0..k {
                    let e = (row[c] - m).exp();
                    probs[i * k + c] = e;
                    z += e;
                }
                for c in 0..k {
                    probs[i * k + c] /= z;
                }
            }
            let mut round = Vec::with_capacity(k);
            for c in 0..k {
                for i in 0..n {
                    let pc = probs[i * k + c];
                    g[i] = pc - f64::from(y_pos[i] as usize == c);
                    h[i] = pc * (1.0 - pc);
                }
                let inp =
                    GrowInput { binned: &binned, p, n_bins: &n_bins, g: &g, h: &h, params, workers };
                round.push(grow_htree(all_rows.clone(), &inp));
            }
            for i in 0..n {
                let bins = &binned[i * p..(i + 1) * p];
                for (c, tree) in round.iter().enumerate() {
                    scores[i * k + c] += tree.predict_bins(bins);
                }
            }
            train_losses.push(softmax_loss(&scores));
            trees.push(round);
        }
        HgbModel { mapper, f0, trees, train_losses }
    }
}

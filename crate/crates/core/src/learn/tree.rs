//! Decision trees: Gini CART classifiers for the forest and least-squares
//! regression trees for boosting.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::WeedClass;

const N_CLASSES: usize = WeedClass::COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(L),
}

/// Flat node arena; node 0 is the root. `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    nodes: Vec<Node<L>>,
}

impl<L: Copy> Tree<L> {
    pub fn predict(&self, x: &[f64]) -> L {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk<L>(nodes: &[Node<L>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub type ClassificationTree = Tree<WeedClass>;
pub type RegressionTree = Tree<f64>;

/// Majority class; ties go to the lower ordinal.
pub fn majority(counts: &[usize; N_CLASSES]) -> WeedClass {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    WeedClass::ALL[best]
}

/// Split point between two adjacent sorted values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CartParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

struct CartBuilder<'a, R> {
    x: &'a [&'a [f64]],
    y: &'a [WeedClass],
    params: CartParams,
    rng: &'a mut R,
    nodes: Vec<Node<WeedClass>>,
    feature_order: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

/// Grows a Gini CART tree on the rows listed in `sample` (duplicates allowed,
/// as produced by bootstrapping).
pub fn fit_classification_tree<R: Rng>(
    x: &[&[f64]],
    y: &[WeedClass],
    sample: Vec<usize>,
    params: CartParams,
    rng: &mut R,
) -> ClassificationTree {
    let n_features = x.first().map_or(0, |r| r.len());
    let mut b = CartBuilder {
        x,
        y,
        params,
        rng,
        nodes: Vec::new(),
        feature_order: (0..n_features).collect(),
        scratch: Vec::new(),
    };
    b.grow(sample, 0);
    Tree { nodes: b.nodes }
}

impl<R: Rng> CartBuilder<'_, R> {
    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let mut counts = [0usize; N_CLASSES];
        for &i in &sample {
            counts[self.y[i].ordinal()] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(&counts)));

        let n = sample.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || n < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&sample, &counts) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .into_iter()
            .partition(|&i| self.x[i][feature] <= threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Examines a random subset of `features_per_split` features; if none of
    /// them admits a valid split, keeps drawing until one does or all are
    /// exhausted.
    fn best_split(&mut self, sample: &[usize], counts: &[usize; N_CLASSES]) -> Option<(usize, f64)> {
        let n = sample.len();
        let min_leaf = self.params.min_leaf.max(1);
        self.feature_order.shuffle(self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for pos in 0..self.feature_order.len() {
            if pos >= self.params.features_per_split && best.is_some() {
                break;
            }
            let f = self.feature_order[pos];
            self.scratch.clear();
            self.scratch.extend(sample.iter().map(|&i| (self.x[i][f], i)));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = [0usize; N_CLASSES];
            for p in 1..n {
                let (prev, prev_i) = self.scratch[p - 1];
                left[self.y[prev_i].ordinal()] += 1;
                let cur = self.scratch[p].0;
                if prev >= cur || p < min_leaf || n - p < min_leaf {
                    continue;
                }
                // maximizing sum(c^2)/n over both children minimizes weighted Gini
                let (nl, nr) = (p as f64, (n - p) as f64);
                let mut sl = 0.0;
                let mut sr = 0.0;
                for c in 0..N_CLASSES {
                    let lc = left[c] as f64;
                    let rc = (counts[c] - left[c]) as f64;
                    sl += lc * lc;
                    sr += rc * rc;
                }
                let score = sl / nl + sr / nr;
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, f, midpoint(prev, cur)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Row indices sorted by each feature's value, shared by every regression
/// tree grown on the same matrix.
pub struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: &[&[f64]]) -> Self {
        let n_features = x.first().map_or(0, |r| r.len());
        let order = (0..n_features)
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]));
                idx
            })
            .collect();
        SortedColumns { order }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RegressionParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Least-squares regression tree grown level by level over presorted
/// columns. Leaves hold the mean target of their rows.
pub fn fit_regression_tree(
    x: &[&[f64]],
    sorted: &SortedColumns,
    target: &[f64],
    params: RegressionParams,
) -> RegressionTree {
    let n = x.len();
    let min_leaf = params.min_leaf.max(1);
    let mut nodes: Vec<Node<f64>> = Vec::new();
    let mean = target.iter().sum::<f64>() / n as f64;
    nodes.push(Node::Leaf(mean));

    // rows currently in an expandable node: slot into `active`, or usize::MAX
    let mut slot_of = vec![0usize; n];
    let mut active: Vec<usize> = vec![0];
    let mut sums = vec![target.iter().sum::<f64>()];
    let mut counts = vec![n];

    for _depth in 0..params.max_depth {
        let k = active.len();
        if k == 0 {
            break;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        let parent_score: Vec<f64> = (0..k).map(|a| sums[a] * sums[a] / counts[a] as f64).collect();
        let mut left_sum = vec![0.0; k];
        let mut left_n = vec![0usize; k];
        let mut last = vec![f64::NAN; k];
        for (f, order) in sorted.order.iter().enumerate() {
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            left_n.iter_mut().for_each(|v| *v = 0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &r in order {
                let r = r as usize;
                let a = slot_of[r];
                if a == usize::MAX {
                    continue;
                }
                let v = x[r][f];
                let ln = left_n[a];
                if ln >= min_leaf && counts[a] - ln >= min_leaf && v > last[a] {
                    let ls = left_sum[a];
                    let rs = sums[a] - ls;
                    let rn = (counts[a] - ln) as f64;
                    let gain = ls * ls / ln as f64 + rs * rs / rn - parent_score[a];
                    if best[a].is_none_or(|b| gain > b.gain) {
                        best[a] = Some(Candidate {
                            gain,
                            feature: f,
                            threshold: midpoint(last[a], v),
                        });
                    }
                }
                left_sum[a] += target[r];
                left_n[a] += 1;
                last[a] = v;
            }
        }

        // children of split nodes become the next level's active set
        let mut child_slot = vec![(usize::MAX, usize::MAX); k];
        let mut next_active = Vec::new();
        let mut next_sums = Vec::new();
        let mut next_counts = Vec::new();
        for a in 0..k {
            let Some(c) = best[a] else { continue };
            let tolerance = 1e-12 * parent_score[a].abs().max(1e-300);
            if c.gain <= tolerance {
                continue;
            }
            let l = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[active[a]] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: l,
                right: l + 1,
            };
            child_slot[a] = (next_active.len(), next_active.len() + 1);
            next_active.extend([l, l + 1]);
            next_sums.extend([0.0, 0.0]);
            next_counts.extend([0, 0]);
        }
        for r in 0..n {
            let a = slot_of[r];
            if a == usize::MAX {
                continue;
            }
            let (l, rr) = child_slot[a];
            if l == usize::MAX {
                slot_of[r] = usize::MAX;
                continue;
            }
            let Node::Split { feature, threshold, .. } = nodes[active[a]] else {
                unreachable!()
            };
            let s = if x[r][feature] <= threshold { l } else { rr };
            slot_of[r] = s;
            next_sums[s] += target[r];
            next_counts[s] += 1;
        }
        for s in 0..next_active.len() {
            nodes[next_active[s]] = Node::Leaf(next_sums[s] / next_counts[s] as f64);
        }
        active = next_active;
        sums = next_sums;
        counts = next_counts;
    }
    Tree { nodes }
}

//! Exact-split binary regression/classification trees.
//!
//! Every feature is pre-sorted once per fit; each node keeps the sorted
//! member list of every feature and partitions them stably when it splits,
//! so candidate thresholds are scanned in a single sweep per feature.
//! Splits are `x[feature] <= threshold` to the left. Among equal gains the
//! lowest feature index wins, then the lowest threshold.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// `(feature, threshold)` of every internal node in node order.
    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Column-major copy of the training matrix with per-feature sort orders.
pub(crate) struct Presorted {
    cols: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Array2<f64>) -> Self {
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { cols, order }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Criterion {
    /// Gini impurity over class indices.
    Gini { n_classes: usize },
    /// Squared error around the node mean.
    Variance,
    /// Second-order boosting gain with L2 leaf penalty.
    Newton { lambda: f64 },
}

/// Per-sample training signal. `weight` is zero for out-of-bag samples.
pub(crate) struct Targets<'a> {
    /// Class index (Gini), target (Variance) or gradient (Newton).
    pub y: &'a [f64],
    /// Hessian, Newton only.
    pub h: Option<&'a [f64]>,
    pub weight: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per node; `None` examines all.
    pub max_features: Option<usize>,
}

/// Additive node statistics.
#[derive(Clone)]
struct Stats {
    w: f64,
    n: usize,
    /// Gini: per-class weight. Variance: [Σwy]. Newton: [G, H].
    acc: Vec<f64>,
}

impl Stats {
    fn zero(c: Criterion) -> Self {
        let len = match c {
            Criterion::Gini { n_classes } => n_classes,
            Criterion::Variance => 1,
            Criterion::Newton { .. } => 2,
        };
        Stats {
            w: 0.0,
            n: 0,
            acc: vec![0.0; len],
        }
    }

    #[inline]
    fn add(&mut self, c: Criterion, t: &Targets, i: usize, sign: f64) {
        let w = t.weight[i];
        self.w += sign * w;
        if sign > 0.0 {
            self.n += 1;
        } else {
            self.n -= 1;
        }
        match c {
            Criterion::Gini { .. } => self.acc[t.y[i] as usize] += sign * w,
            Criterion::Variance => self.acc[0] += sign * w * t.y[i],
            Criterion::Newton { .. } => {
                self.acc[0] += sign * w * t.y[i];
                self.acc[1] += sign * w * t.h.expect("hessian")[i];
            }
        }
    }

    /// Larger is purer; gain of a split is `score(L) + score(R) - score(parent)`.
    fn score(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Gini { .. } => {
                if self.w <= 0.0 {
                    0.0
                } else {
                    self.acc.iter().map(|a| a * a).sum::<f64>() / self.w
                }
            }
            Criterion::Variance => {
                if self.w <= 0.0 {
                    0.0
                } else {
                    self.acc[0] * self.acc[0] / self.w
                }
            }
            Criterion::Newton { lambda } => self.acc[0] * self.acc[0] / (self.acc[1] + lambda),
        }
    }

    fn leaf_value(&self, c: Criterion) -> Vec<f64> {
        match c {
            Criterion::Gini { .. } => self.acc.iter().map(|a| a / self.w).collect(),
            Criterion::Variance => vec![self.acc[0] / self.w],
            Criterion::Newton { lambda } => vec![-self.acc[0] / (self.acc[1] + lambda)],
        }
    }

    fn is_pure(&self, c: Criterion, t: &Targets, members: &[u32]) -> bool {
        match c {
            Criterion::Gini { .. } => self.acc.iter().filter(|&&a| a > 0.0).count() <= 1,
            Criterion::Variance => {
                let first = t.y[members[0] as usize];
                members.iter().all(|&i| t.y[i as usize] == first)
            }
            Criterion::Newton { .. } => false,
        }
    }
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

pub(crate) fn build<R: Rng>(
    data: &Presorted,
    targets: &Targets,
    criterion: Criterion,
    params: &TreeParams,
    rng: &mut R,
) -> Tree {
    let orders: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&i| targets.weight[i as usize] > 0.0).collect())
        .collect();
    let mut tree = Tree { nodes: Vec::new() };
    let mut go_left = vec![false; targets.y.len()];
    grow(data, targets, criterion, params, rng, orders, 0, &mut tree, &mut go_left);
    tree
}

#[allow(clippy::too_many_arguments)]
fn grow<R: Rng>(
    data: &Presorted,
    t: &Targets,
    c: Criterion,
    p: &TreeParams,
    rng: &mut R,
    orders: Vec<Vec<u32>>,
    depth: usize,
    tree: &mut Tree,
    go_left: &mut [bool],
) -> usize {
    let id = tree.nodes.len();
    let members = &orders[0];
    let mut total = Stats::zero(c);
    for &i in members {
        total.add(c, t, i as usize, 1.0);
    }
    tree.nodes.push(Node::Leaf {
        value: total.leaf_value(c),
    });

    let depth_ok = p.max_depth.is_none_or(|d| depth < d);
    if !depth_ok
        || members.len() < p.min_samples_split.max(2)
        || members.len() < 2 * p.min_samples_leaf.max(1)
        || total.is_pure(c, t, members)
    {
        return id;
    }

    let d = data.n_features();
    let candidates: Vec<usize> = match p.max_features {
        Some(m) if m < d => {
            let mut f = sample(rng, d, m.max(1)).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..d).collect(),
    };

    let parent_score = total.score(c);
    let mut best: Option<Best> = None;
    let min_leaf = p.min_samples_leaf.max(1);
    for &f in &candidates {
        let col = &data.cols[f];
        let order = &orders[f];
        let mut left = Stats::zero(c);
        let mut right = total.clone();
        for k in 0..order.len() - 1 {
            let i = order[k] as usize;
            left.add(c, t, i, 1.0);
            right.add(c, t, i, -1.0);
            let a = col[i];
            let b = col[order[k + 1] as usize];
            if a == b || left.n < min_leaf || right.n < min_leaf {
                continue;
            }
            let gain = left.score(c) + right.score(c) - parent_score;
            if best.as_ref().is_none_or(|bst| gain > bst.gain) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(Best {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }

    let tol = 1e-12 * parent_score.abs().max(1e-12);
    let Some(best) = best.filter(|b| b.gain > tol) else {
        return id;
    };

    let col = &data.cols[best.feature];
    for &i in members {
        go_left[i as usize] = col[i as usize] <= best.threshold;
    }
    let (left_orders, right_orders): (Vec<Vec<u32>>, Vec<Vec<u32>>) = orders
        .iter()
        .map(|o| o.iter().partition(|&&i| go_left[i as usize]))
        .unzip();
    drop(orders);

    let left = grow(data, t, c, p, rng, left_orders, depth + 1, tree, go_left);
    let right = grow(data, t, c, p, rng, right_orders, depth + 1, tree, go_left);
    tree.nodes[id] = Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(depth: Option<usize>) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }

    #[test]
    fn stump_on_single_informative_feature() {
        // F2 is noise, F1 separates at 0.5
        let x = Array2::from_shape_vec((6, 2), vec![0.1, 0.9, 0.2, 0.1, 0.4, 0.5, 0.6, 0.3, 0.8, 0.7, 0.95, 0.2]).unwrap();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let w = [1.0; 6];
        let t = Targets {
            y: &y,
            h: None,
            weight: &w,
        };
        let tree = build(
            &Presorted::new(&x),
            &t,
            Criterion::Gini { n_classes: 2 },
            &params(Some(1)),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        let (f, thr) = tree.splits().next().unwrap();
        assert_eq!(f, 0);
        assert!(thr > 0.4 && thr <= 0.6);
        assert_eq!(tree.leaf_value(&[0.9, 0.0]), &[0.0, 1.0]);
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn equal_gain_prefers_lower_feature() {
        // both features separate identically
        let x = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let y = [0.0, 0.0, 1.0, 1.0];
        let w = [1.0; 4];
        let t = Targets {
            y: &y,
            h: None,
            weight: &w,
        };
        let tree = build(
            &Presorted::new(&x),
            &t,
            Criterion::Variance,
            &params(None),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(tree.splits().next(), Some((0, 1.5)));
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [5.0, 5.0, 100.0, 5.0];
        let w = [1.0, 1.0, 0.0, 1.0];
        let t = Targets {
            y: &y,
            h: None,
            weight: &w,
        };
        let tree = build(
            &Presorted::new(&x),
            &t,
            Criterion::Variance,
            &params(None),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.leaf_value(&[2.0]), &[5.0]);
    }
}

//! Level-wise exact greedy tree growth over presorted columns.
//!
//! Each level makes one pass over every feature's presorted row order and
//! evaluates all split points of all open nodes at once, so no per-node
//! sorting is needed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::Matrix;

const NONE: u32 = u32::MAX;

/// Column-major copy of a design with per-feature row orders.
pub(crate) struct SortedColumns {
    n: usize,
    d: usize,
    values: Vec<f64>,
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub(crate) fn new(x: &Matrix) -> Self {
        let (n, d) = x.shape();
        let cols: Vec<(Vec<f64>, Vec<u32>)> = (0..d)
            .into_par_iter()
            .map(|f| {
                let col: Vec<f64> = (0..n).map(|i| x.get(i, f)).collect();
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                (col, order)
            })
            .collect();
        let mut values = Vec::with_capacity(n * d);
        let mut order = Vec::with_capacity(d);
        for (c, o) in cols {
            values.extend(c);
            order.push(o);
        }
        Self { n, d, values, order }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn d(&self) -> usize {
        self.d
    }

    #[inline]
    fn value(&self, f: usize, row: usize) -> f64 {
        self.values[f * self.n + row]
    }
}

/// One node of a fitted tree. Internal nodes route `x[feature] <= threshold`
/// to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Split feature, or `None` for a leaf.
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Mean target vector (forest) or weight (boosting) of the node.
    pub value: Vec<f64>,
    /// Training rows routed here, counting bootstrap multiplicity.
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match node.feature {
                None => return &node.value,
                Some(f) => {
                    i = if x[f] <= node.threshold {
                        node.left as usize
                    } else {
                        node.right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            match n.feature {
                None => 0,
                Some(_) => 1 + walk(t, n.left as usize).max(walk(t, n.right as usize)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature.is_none()).count()
    }
}

/// Split-quality rule plugged into the grower.
pub(crate) trait Criterion {
    type Stats: Clone;

    fn zero(&self) -> Self::Stats;
    fn add(&self, s: &mut Self::Stats, row: usize, weight: f64);
    fn minus(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    /// Whether a node with these rows may be split at all.
    fn can_split(&self, s: &Self::Stats, rows: &[u32]) -> bool;
    /// Gain of splitting `parent` into `left` and the remainder, `None` if
    /// a child is too small.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats) -> Option<f64>;
    /// Whether the best gain justifies splitting.
    fn accept(&self, gain: f64) -> bool;
    fn leaf_value(&self, s: &Self::Stats, rows: &[u32]) -> Vec<f64>;
}

struct Open<S> {
    node: usize,
    stats: S,
    rows: Vec<u32>,
    mask: Vec<bool>,
    splittable: bool,
}

/// Grow one tree. `weights[i]` is the multiplicity of row `i` (0 excludes
/// it); `mask_for_node` draws the candidate features of each new node.
pub(crate) fn grow<C: Criterion>(
    cols: &SortedColumns,
    weights: &[f64],
    criterion: &C,
    max_depth: usize,
    mut mask_for_node: impl FnMut() -> Vec<bool>,
) -> Tree {
    let n = cols.n();
    let d = cols.d();
    let mut nodes: Vec<TreeNode> = Vec::new();

    let root_rows: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let mut root_stats = criterion.zero();
    for &r in &root_rows {
        criterion.add(&mut root_stats, r as usize, weights[r as usize]);
    }
    nodes.push(placeholder(&root_rows, weights));
    let mut open = vec![make_open(criterion, 0, root_stats, root_rows, &mut mask_for_node)];
    let mut slot_of_row = vec![NONE; n];

    let mut depth = 0;
    while !open.is_empty() {
        if depth >= max_depth {
            for o in open.drain(..) {
                finish_leaf(criterion, &mut nodes[o.node], &o.stats, &o.rows);
            }
            break;
        }

        slot_of_row.iter_mut().for_each(|s| *s = NONE);
        for (slot, o) in open.iter().enumerate() {
            if o.splittable {
                for &r in &o.rows {
                    slot_of_row[r as usize] = slot as u32;
                }
            }
        }

        // (gain, feature, threshold)
        let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; open.len()];
        let mut left: Vec<C::Stats> = vec![criterion.zero(); open.len()];
        let mut prev: Vec<Option<f64>> = vec![None; open.len()];
        let mut active = vec![false; open.len()];
        for f in 0..d {
            for (slot, o) in open.iter().enumerate() {
                active[slot] = o.splittable && o.mask[f];
                if active[slot] {
                    left[slot] = criterion.zero();
                    prev[slot] = None;
                }
            }
            if !active.contains(&true) {
                continue;
            }
            let column = &cols.values[f * n..(f + 1) * n];
            for &row in &cols.order[f] {
                let slot = slot_of_row[row as usize];
                if slot == NONE || !active[slot as usize] {
                    continue;
                }
                let slot = slot as usize;
                let o = &open[slot];
                let v = column[row as usize];
                if let Some(pv) = prev[slot] {
                    if v > pv {
                        if let Some(g) = criterion.gain(&o.stats, &left[slot]) {
                            if best[slot].is_none_or(|(bg, _, _)| g > bg) {
                                best[slot] = Some((g, f, midpoint(pv, v)));
                            }
                        }
                    }
                }
                criterion.add(&mut left[slot], row as usize, weights[row as usize]);
                prev[slot] = Some(v);
            }
        }

        let mut next = Vec::new();
        for (o, b) in open.into_iter().zip(best) {
            match b {
                Some((g, f, thr)) if criterion.accept(g) => {
                    let (lrows, rrows): (Vec<u32>, Vec<u32>) =
                        o.rows.iter().partition(|&&r| cols.value(f, r as usize) <= thr);
                    let mut ls = criterion.zero();
                    for &r in &lrows {
                        criterion.add(&mut ls, r as usize, weights[r as usize]);
                    }
                    let rs = criterion.minus(&o.stats, &ls);
                    let li = nodes.len();
                    nodes.push(placeholder(&lrows, weights));
                    let ri = nodes.len();
                    nodes.push(placeholder(&rrows, weights));
                    let parent = &mut nodes[o.node];
                    parent.feature = Some(f);
                    parent.threshold = thr;
                    parent.left = li as u32;
                    parent.right = ri as u32;
                    parent.value = criterion.leaf_value(&o.stats, &o.rows);
                    next.push(make_open(criterion, li, ls, lrows, &mut mask_for_node));
                    next.push(make_open(criterion, ri, rs, rrows, &mut mask_for_node));
                }
                _ => finish_leaf(criterion, &mut nodes[o.node], &o.stats, &o.rows),
            }
        }
        open = next;
        depth += 1;
    }
    Tree { nodes }
}

fn make_open<C: Criterion>(
    criterion: &C,
    node: usize,
    stats: C::Stats,
    rows: Vec<u32>,
    mask_for_node: &mut impl FnMut() -> Vec<bool>,
) -> Open<C::Stats> {
    let splittable = criterion.can_split(&stats, &rows);
    // masks are drawn only for splittable nodes so leaves consume no randomness
    let mask = if splittable { mask_for_node() } else { Vec::new() };
    Open {
        node,
        stats,
        rows,
        mask,
        splittable,
    }
}

fn placeholder(rows: &[u32], weights: &[f64]) -> TreeNode {
    TreeNode {
        feature: None,
        threshold: 0.0,
        left: 0,
        right: 0,
        value: Vec::new(),
        n_samples: rows.iter().map(|&r| weights[r as usize] as usize).sum(),
    }
}

fn finish_leaf<C: Criterion>(criterion: &C, node: &mut TreeNode, stats: &C::Stats, rows: &[u32]) {
    node.feature = None;
    node.value = criterion.leaf_value(stats, rows);
}

/// Split point strictly below `hi` and not below `lo`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Uniform choice of `k` of `d` features, as a mask.
pub(crate) fn sample_mask(d: usize, k: usize, rng: &mut impl rand::Rng) -> Vec<bool> {
    if k >= d {
        return vec![true; d];
    }
    let mut idx: Vec<usize> = (0..d).collect();
    for i in 0..k {
        let j = rng.random_range(i..d);
        idx.swap(i, j);
    }
    let mut mask = vec![false; d];
    for &i in &idx[..k] {
        mask[i] = true;
    }
    mask
}

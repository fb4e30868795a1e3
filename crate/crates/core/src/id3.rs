//! ID3 decision trees over categorical vectors.
//!
//! Information gain is recomputed on every subset (not once per attribute),
//! splits are multiway on every observed value, and each internal node keeps
//! the modal target of its subset as the default answer for values it never
//! saw.

use std::collections::BTreeMap;

/// Attribute values and targets are interned ids.
pub type Sym = u32;

/// Id that matches no child: used for values a model has never seen.
pub const UNSEEN: Sym = Sym::MAX;

const GAIN_EPS: f64 = 1e-12;

/// Row-major categorical vectors with one target each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    arity: usize,
    attrs: Vec<Sym>,
    targets: Vec<Sym>,
}

impl Dataset {
    pub fn new(arity: usize) -> Self {
        Dataset {
            arity,
            attrs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn push(&mut self, attrs: &[Sym], target: Sym) {
        assert_eq!(attrs.len(), self.arity, "vector arity");
        self.attrs.extend_from_slice(attrs);
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn row(&self, i: usize) -> &[Sym] {
        &self.attrs[i * self.arity..(i + 1) * self.arity]
    }

    pub fn target(&self, i: usize) -> Sym {
        self.targets[i]
    }

    fn value(&self, row: u32, attr: usize) -> Sym {
        self.attrs[row as usize * self.arity + attr]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Splits must gain strictly more than this (bits).
    pub min_gain: f64,
    pub max_depth: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            min_gain: 0.0,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Leaf(Sym),
    Internal {
        attr: usize,
        default: Sym,
        children: BTreeMap<Sym, TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, vector: &[Sym]) -> Sym {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Internal {
                    attr,
                    default,
                    children,
                } => match children.get(&vector[*attr]) {
                    Some(child) => node = child,
                    None => return *default,
                },
            }
        }
    }

    /// Leaf → 1; internal → 1 (the default return) + Σ (1 + size(child)).
    pub fn size(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Internal { children, .. } => 1 + children.values().map(|c| 1 + c.size()).sum::<usize>(),
        }
    }

    /// (internal nodes, leaves, edges).
    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            TreeNode::Leaf(_) => (0, 1, 0),
            TreeNode::Internal { children, .. } => {
                children.values().fold((1, 0, children.len()), |(i, l, e), c| {
                    let (ci, cl, ce) = c.shape();
                    (i + ci, l + cl, e + ce)
                })
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Internal { children, .. } => 1 + children.values().map(TreeNode::depth).max().unwrap_or(0),
        }
    }
}

fn xlog2x(n: u32) -> f64 {
    if n == 0 {
        0.0
    } else {
        let x = n as f64;
        x * x.log2()
    }
}

/// Entropy in bits of a multiset given by its counts.
pub fn entropy(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let h = xlog2x(n) - counts.iter().map(|&c| xlog2x(c)).sum::<f64>();
    (h / n as f64).max(0.0)
}

/// Gain of `attr` over the whole dataset.
pub fn info_gain(data: &Dataset, attr: usize) -> f64 {
    let rows: Vec<u32> = (0..data.len() as u32).collect();
    gain_on(data, &rows, attr, &target_counts(data, &rows))
}

fn target_counts(data: &Dataset, rows: &[u32]) -> Vec<(Sym, u32)> {
    let mut t: Vec<Sym> = rows.iter().map(|&r| data.targets[r as usize]).collect();
    t.sort_unstable();
    run_lengths(&t)
}

fn run_lengths<T: PartialEq + Copy>(sorted: &[T]) -> Vec<(T, u32)> {
    let mut out: Vec<(T, u32)> = Vec::new();
    for &x in sorted {
        match out.last_mut() {
            Some((y, n)) if *y == x => *n += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

fn gain_on(data: &Dataset, rows: &[u32], attr: usize, parent: &[(Sym, u32)]) -> f64 {
    let n = rows.len();
    if n == 0 {
        return 0.0;
    }
    let counts: Vec<u32> = parent.iter().map(|(_, c)| *c).collect();
    let parent_h = entropy(&counts);
    let mut pairs: Vec<u64> = rows
        .iter()
        .map(|&r| (u64::from(data.value(r, attr)) << 32) | u64::from(data.targets[r as usize]))
        .collect();
    pairs.sort_unstable();
    // Σ_v (n_v log n_v − Σ_t c_vt log c_vt) / n is the weighted child entropy
    let mut weighted = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let value = pairs[i] >> 32;
        let mut n_v = 0u32;
        let mut inner = 0.0;
        while i < pairs.len() && pairs[i] >> 32 == value {
            let pair = pairs[i];
            let mut c = 0u32;
            while i < pairs.len() && pairs[i] == pair {
                c += 1;
                i += 1;
            }
            n_v += c;
            inner += xlog2x(c);
        }
        weighted += xlog2x(n_v) - inner;
    }
    (parent_h - weighted / n as f64).max(0.0)
}

/// Most frequent target; ties go to the smallest id.
fn modal(counts: &[(Sym, u32)]) -> Sym {
    let mut best = counts[0];
    for &(s, c) in &counts[1..] {
        if c > best.1 {
            best = (s, c);
        }
    }
    best.0
}

pub fn train_tree(data: &Dataset, tc: &TrainConfig) -> TreeNode {
    assert!(!data.is_empty(), "cannot train on an empty dataset");
    let rows: Vec<u32> = (0..data.len() as u32).collect();
    let mut used = vec![false; data.arity];
    build(data, rows, &mut used, 0, tc)
}

fn build(data: &Dataset, rows: Vec<u32>, used: &mut [bool], depth: usize, tc: &TrainConfig) -> TreeNode {
    let counts = target_counts(data, &rows);
    let default = modal(&counts);
    if counts.len() == 1 || tc.max_depth.is_some_and(|d| depth >= d) {
        return TreeNode::Leaf(default);
    }
    let mut best: Option<(usize, f64)> = None;
    for attr in (0..data.arity).filter(|&a| !used[a]) {
        let g = gain_on(data, &rows, attr, &counts);
        if best.is_none_or(|(_, b)| g > b + GAIN_EPS) {
            best = Some((attr, g));
        }
    }
    let Some((attr, gain)) = best else {
        return TreeNode::Leaf(default);
    };
    if gain <= tc.min_gain + GAIN_EPS {
        return TreeNode::Leaf(default);
    }
    let mut parts: BTreeMap<Sym, Vec<u32>> = BTreeMap::new();
    for r in rows {
        parts.entry(data.value(r, attr)).or_default().push(r);
    }
    used[attr] = true;
    let children = parts
        .into_iter()
        .map(|(v, sub)| (v, build(data, sub, used, depth + 1, tc)))
        .collect();
    used[attr] = false;
    TreeNode::Internal {
        attr,
        default,
        children,
    }
}

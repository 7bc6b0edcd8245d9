//! Kd-hierarchies over multi-dimensional keys and product-domain summaries.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::aggregate::{run_policy, Policy};
use crate::hierarchy::{Linearization, Tree};
use crate::ipps::{compute_threshold, ipps_probabilities, WeightedKey};
use crate::prob::{Coin, Prob};
use crate::sample::Sample;
use crate::state::SummaryState;
use crate::structures::HierarchyDomain;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub enum Axis {
    /// Integer coordinates with their natural order.
    Ordered,
    /// Coordinates are external ids of leaves in this tree.
    Hierarchy(Arc<Tree>),
}

#[derive(Clone, Debug)]
pub struct ProductDomain {
    pub axes: Vec<Axis>,
}

impl ProductDomain {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("product domain needs at least one axis".into()));
        }
        Ok(Self { axes })
    }

    pub fn ordered(d: usize) -> Self {
        Self {
            axes: vec![Axis::Ordered; d.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn validate(&self, keys: &[WeightedKey]) -> Result<()> {
        for k in keys {
            if k.coords.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: k.coords.len(),
                });
            }
            for (a, axis) in self.axes.iter().enumerate() {
                if let Axis::Hierarchy(t) = axis {
                    let ok = t.node_of(k.coords[a]).is_some_and(|v| t.is_leaf(v));
                    if !ok {
                        return Err(Error::InvalidHierarchy(format!(
                            "key {} coordinate {} is not a leaf of axis {a}",
                            k.id, k.coords[a]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether a key with these coordinates lies in the box.
    pub fn contains(&self, q: &BoxQuery, coords: &[u64]) -> bool {
        q.ranges.iter().zip(&self.axes).zip(coords).all(|((r, axis), &c)| match (r, axis) {
            (AxisRange::Interval { lo, hi }, _) => *lo <= c && c <= *hi,
            (AxisRange::Node(id), Axis::Hierarchy(t)) => {
                match (t.node_of(*id), t.node_of(c)) {
                    (Some(a), Some(b)) => t.is_ancestor(a, b),
                    _ => false,
                }
            }
            (AxisRange::Node(_), Axis::Ordered) => false,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AxisRange {
    /// Inclusive coordinate interval.
    Interval { lo: u64, hi: u64 },
    /// Every leaf under a hierarchy node, by external id.
    Node(u64),
}

/// Axis-parallel box: one range per axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoxQuery {
    pub ranges: Vec<AxisRange>,
}

impl BoxQuery {
    pub fn interval(lo: &[u64], hi: &[u64]) -> Self {
        Self {
            ranges: lo
                .iter()
                .zip(hi)
                .map(|(&lo, &hi)| AxisRange::Interval { lo, hi })
                .collect(),
        }
    }
}

/// Maps coordinates on one axis to positions on a line.
#[derive(Clone, Debug)]
enum AxisMap {
    Ordered,
    Hierarchy {
        tree: Arc<Tree>,
        lin: Linearization,
    },
}

impl AxisMap {
    fn position(&self, c: u64) -> Option<u64> {
        match self {
            AxisMap::Ordered => Some(c),
            AxisMap::Hierarchy { tree, lin } => {
                tree.node_of(c).and_then(|v| lin.rank(v)).map(|r| r as u64)
            }
        }
    }

    fn interval(&self, r: &AxisRange) -> Option<(u64, u64)> {
        match (r, self) {
            (AxisRange::Interval { lo, hi }, _) => Some((*lo, *hi)),
            (AxisRange::Node(id), AxisMap::Hierarchy { tree, lin }) => {
                let (lo, hi) = lin.span(tree.node_of(*id)?);
                (lo <= hi).then_some((lo as u64, hi as u64))
            }
            (AxisRange::Node(_), AxisMap::Ordered) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    /// Positions `<= at` on `axis` go left.
    Plane { axis: usize, at: u64 },
    /// Every axis is constant: the first `left` keys in index order go left.
    Index { left: usize },
}

#[derive(Clone, Debug)]
pub struct KdNode {
    pub depth: usize,
    pub mass: f64,
    /// Inclusive per-axis position bounds.
    pub region: Vec<(u64, u64)>,
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
    /// Key indices, only on leaves.
    pub keys: Vec<usize>,
    pub s_leaf: bool,
}

impl KdNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct KdTree {
    nodes: Vec<KdNode>,
    maps: Vec<AxisMap>,
    s_leaves: Vec<usize>,
    leaf_of_key: HashMap<usize, usize>,
}

/// Builds a kd-hierarchy over `keys` (indices into `all_keys`) with the
/// given per-key masses.
///
/// Axes are cut at the weighted median, cycling through axes by depth and
/// skipping axes that are constant inside the node.
pub fn build_kd_hierarchy(
    all_keys: &[WeightedKey],
    keys: &[usize],
    probs: &[f64],
    domain: &ProductDomain,
) -> Result<KdTree> {
    if keys.is_empty() {
        return Err(Error::EmptyKeySet);
    }
    domain.validate(&keys.iter().map(|&k| all_keys[k].clone()).collect::<Vec<_>>())?;
    let d = domain.dim();
    let maps: Vec<AxisMap> = domain
        .axes
        .iter()
        .enumerate()
        .map(|(a, axis)| match axis {
            Axis::Ordered => AxisMap::Ordered,
            Axis::Hierarchy(tree) => {
                let mut own = vec![0.0; tree.len()];
                for &k in keys {
                    let v = tree.node_of(all_keys[k].coords[a]).expect("validated leaf");
                    own[v] += probs[k];
                }
                let mass = tree.subtree_sums(&own);
                AxisMap::Hierarchy {
                    tree: tree.clone(),
                    lin: Linearization::by_mass(tree, &mass),
                }
            }
        })
        .collect();
    let pos = |k: usize, a: usize| -> u64 {
        maps[a].position(all_keys[k].coords[a]).expect("validated coordinate")
    };

    let mut region = vec![(u64::MAX, 0u64); d];
    for &k in keys {
        for (a, r) in region.iter_mut().enumerate() {
            let p = pos(k, a);
            *r = (r.0.min(p), r.1.max(p));
        }
    }
    let mut sorted_keys = keys.to_vec();
    sorted_keys.sort_unstable();
    let mut nodes = vec![KdNode {
        depth: 0,
        mass: sorted_keys.iter().map(|&k| probs[k]).sum(),
        region,
        split: None,
        children: None,
        parent: None,
        keys: Vec::new(),
        s_leaf: false,
    }];
    let mut work = vec![(0usize, sorted_keys)];
    while let Some((v, members)) = work.pop() {
        if members.len() == 1 {
            nodes[v].keys = members;
            continue;
        }
        let depth = nodes[v].depth;
        let axis = (0..d)
            .map(|t| (depth + t) % d)
            .find(|&a| nodes[v].region[a].0 < nodes[v].region[a].1);
        let (split, left, right) = match axis {
            Some(a) => {
                let mut by_pos = members;
                by_pos.sort_by_key(|&k| (pos(k, a), k));
                let cut = median_cut(&by_pos, |k| pos(k, a), probs);
                let at = pos(by_pos[cut - 1], a);
                let right = by_pos.split_off(cut);
                (Split::Plane { axis: a, at }, by_pos, right)
            }
            None => {
                let mut by_index = members;
                let cut = median_cut(&by_index, |k| k as u64, probs);
                let right = by_index.split_off(cut);
                (Split::Index { left: cut }, by_index, right)
            }
        };
        let mut child_ids = [0; 2];
        for (slot, part) in [&left, &right].into_iter().enumerate() {
            let mut region = nodes[v].region.clone();
            if let Split::Plane { axis, at } = split {
                region[axis] = if slot == 0 {
                    (region[axis].0, at)
                } else {
                    (at + 1, region[axis].1)
                };
            }
            child_ids[slot] = nodes.len();
            nodes.push(KdNode {
                depth: depth + 1,
                mass: part.iter().map(|&k| probs[k]).sum(),
                region,
                split: None,
                children: None,
                parent: Some(v),
                keys: Vec::new(),
                s_leaf: false,
            });
        }
        nodes[v].split = Some(split);
        nodes[v].children = Some((child_ids[0], child_ids[1]));
        work.push((child_ids[1], right));
        work.push((child_ids[0], left));
    }

    let mut s_leaves = Vec::new();
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        if nodes[v].mass <= 1.0 + crate::EPS_NUM || nodes[v].is_leaf() {
            nodes[v].s_leaf = true;
            s_leaves.push(v);
        } else if let Some((l, r)) = nodes[v].children {
            stack.push(r);
            stack.push(l);
        }
    }
    let leaf_of_key = nodes
        .iter()
        .enumerate()
        .flat_map(|(v, n)| n.keys.iter().map(move |&k| (k, v)))
        .collect();
    Ok(KdTree {
        nodes,
        maps,
        s_leaves,
        leaf_of_key,
    })
}

/// Number of leading entries of `sorted` that go left: the boundary between
/// groups of equal `key` minimizing the mass imbalance, smallest on ties.
fn median_cut(sorted: &[usize], key: impl Fn(usize) -> u64, probs: &[f64]) -> usize {
    let total: f64 = sorted.iter().map(|&k| probs[k]).sum();
    let mut best = (f64::INFINITY, 1);
    let mut left = 0.0;
    for i in 0..sorted.len() - 1 {
        left += probs[sorted[i]];
        if key(sorted[i]) == key(sorted[i + 1]) {
            continue;
        }
        let imbalance = (2.0 * left - total).abs();
        if imbalance < best.0 {
            best = (imbalance, i + 1);
        }
    }
    best.1
}

impl KdTree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[KdNode] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &KdNode {
        &self.nodes[v]
    }

    pub fn s_leaves(&self) -> &[usize] {
        &self.s_leaves
    }

    pub fn leaf_of_key(&self, k: usize) -> Option<usize> {
        self.leaf_of_key.get(&k).copied()
    }

    pub fn dim(&self) -> usize {
        self.maps.len()
    }

    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Position of a coordinate vector in the tree's axis space.
    pub fn position(&self, coords: &[u64]) -> Option<Vec<u64>> {
        self.maps.iter().zip(coords).map(|(m, &c)| m.position(c)).collect()
    }

    /// Leaf reached by following split planes; constant-axis splits go left.
    pub fn route(&self, coords: &[u64]) -> Option<usize> {
        let p = self.position(coords)?;
        let mut v = 0;
        while let (Some(split), Some((l, r))) = (self.nodes[v].split, self.nodes[v].children) {
            v = match split {
                Split::Plane { axis, at } if p[axis] > at => r,
                _ => l,
            };
        }
        Some(v)
    }

    /// First s-leaf on the routing path of `coords`.
    pub fn route_to_s_leaf(&self, coords: &[u64]) -> Option<usize> {
        let p = self.position(coords)?;
        let mut v = 0;
        loop {
            if self.nodes[v].s_leaf {
                return Some(v);
            }
            let (Some(split), Some((l, r))) = (self.nodes[v].split, self.nodes[v].children) else {
                return Some(v);
            };
            v = match split {
                Split::Plane { axis, at } if p[axis] > at => r,
                _ => l,
            };
        }
    }

    fn query_box(&self, q: &BoxQuery) -> Option<Vec<(u64, u64)>> {
        self.maps.iter().zip(&q.ranges).map(|(m, r)| m.interval(r)).collect()
    }

    /// How the region of node `v` relates to the query box.
    pub fn relation(&self, v: usize, q: &BoxQuery) -> Relation {
        match self.query_box(q) {
            Some(b) => relate(&self.nodes[v].region, &b),
            None => Relation::Outside,
        }
    }

    /// The node structure as a plain tree; node ids equal kd node indices.
    pub fn to_tree(&self) -> Tree {
        let children = self
            .nodes
            .iter()
            .map(|n| n.children.map(|(l, r)| vec![l, r]).unwrap_or_default())
            .collect();
        Tree::from_children(children, 0).expect("kd tree is a tree")
    }

    /// The equivalent tree hierarchy with each key on its kd leaf.
    pub fn as_hierarchy(&self, key_count: usize) -> HierarchyDomain {
        let tree = self.to_tree();
        let mut leaf_of = vec![0; key_count];
        for (v, n) in self.nodes.iter().enumerate() {
            for &k in &n.keys {
                leaf_of[k] = v;
            }
        }
        HierarchyDomain::attached_anywhere(tree, leaf_of)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Inside,
    Outside,
    Partial,
}

fn relate(region: &[(u64, u64)], b: &[(u64, u64)]) -> Relation {
    let mut inside = true;
    for (&(rl, rh), &(bl, bh)) in region.iter().zip(b) {
        if rh < bl || rl > bh || bl > bh {
            return Relation::Outside;
        }
        if rl < bl || rh > bh {
            inside = false;
        }
    }
    if inside {
        Relation::Inside
    } else {
        Relation::Partial
    }
}

/// s-leaves whose region meets the box without lying inside it.
pub fn boundary_cells(tree: &KdTree, q: &BoxQuery) -> Vec<usize> {
    let Some(b) = tree.query_box(q) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        let n = &tree.nodes[v];
        if relate(&n.region, &b) != Relation::Partial {
            continue;
        }
        if n.s_leaf {
            out.push(v);
        } else if let Some((l, r)) = n.children {
            stack.push(r);
            stack.push(l);
        }
    }
    out.sort_unstable();
    out
}

/// Maximal nodes lying fully inside or fully outside the box, found by
/// descending through partially covered nodes above the s-leaf level.
pub fn interior_cover(tree: &KdTree, q: &BoxQuery) -> Vec<usize> {
    let Some(b) = tree.query_box(q) else {
        return vec![0];
    };
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        let n = &tree.nodes[v];
        match relate(&n.region, &b) {
            Relation::Inside | Relation::Outside => out.push(v),
            Relation::Partial => {
                if let (false, Some((l, r))) = (n.s_leaf, n.children) {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Policy that builds a kd-hierarchy over the unset keys from the current
/// probabilities and aggregates bottom-up through it.
#[derive(Clone, Debug)]
pub struct ProductPolicy<'a> {
    pub keys: &'a [WeightedKey],
    pub domain: &'a ProductDomain,
}

impl Policy for ProductPolicy<'_> {
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()> {
        let unset: Vec<usize> = state.unset_indices().collect();
        if unset.is_empty() {
            return Ok(());
        }
        let probs: Vec<f64> = state.probs().iter().map(Prob::to_f64).collect();
        let tree = build_kd_hierarchy(self.keys, &unset, &probs, self.domain)?;
        tree.as_hierarchy(self.keys.len()).aggregate(state, coin).map(|_| ())
    }
}

/// Threshold, set-aside of certain keys, kd-hierarchy and bottom-up
/// aggregation in one call.
pub fn summarize_product<R: Rng + ?Sized>(
    keys: &[WeightedKey],
    s: usize,
    domain: &ProductDomain,
    rng: &mut R,
) -> Result<Sample> {
    let t = compute_threshold(keys, s)?;
    let state = ipps_probabilities(keys, &t);
    let chosen = run_policy(state, &ProductPolicy { keys, domain }, rng)?;
    Ok(Sample::from_indices(keys, &chosen, t))
}

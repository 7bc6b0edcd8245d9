//! Structure-aware summarization over disjoint ranges, hierarchies and
//! ordered domains, plus the deterministic and systematic order variants.

use std::collections::BTreeMap;

use rand::Rng;

use crate::aggregate::{run_policy, Policy};
use crate::hierarchy::Tree;
use crate::ipps::{compute_threshold, ipps_probabilities, WeightedKey};
use crate::prob::{Coin, Prob};
use crate::sample::Sample;
use crate::state::SummaryState;
use crate::{Error, Result};

/// Merges key `k` into the running leftover `active`.
///
/// Set keys pass through untouched. Returns the leftover after the merge,
/// which is whichever of the two stayed unset.
pub fn absorb<P: Prob, C: Coin<P> + ?Sized>(
    state: &mut SummaryState<P>,
    active: Option<usize>,
    k: usize,
    coin: &mut C,
) -> Result<Option<usize>> {
    if state.is_set(k) {
        return Ok(active);
    }
    let Some(a) = active else {
        return Ok(Some(k));
    };
    state.pair_aggregate(a, k, coin)?;
    Ok([a, k].into_iter().find(|&x| !state.is_set(x)))
}

/// Chains `keys` in order, starting from `active`.
pub fn chain<P: Prob, C: Coin<P> + ?Sized>(
    state: &mut SummaryState<P>,
    mut active: Option<usize>,
    keys: impl IntoIterator<Item = usize>,
    coin: &mut C,
) -> Result<Option<usize>> {
    for k in keys {
        active = absorb(state, active, k, coin)?;
    }
    Ok(active)
}

/// Keys placed on the nodes of a tree.
#[derive(Clone, Debug)]
pub struct HierarchyDomain {
    pub tree: Tree,
    leaf_of: Vec<usize>,
    attached: Vec<Vec<usize>>,
}

impl HierarchyDomain {
    /// `leaf_of[k]` is the leaf node holding key `k`.
    pub fn new(tree: Tree, leaf_of: Vec<usize>) -> Result<Self> {
        for (k, &v) in leaf_of.iter().enumerate() {
            if v >= tree.len() || !tree.is_leaf(v) {
                return Err(Error::InvalidHierarchy(format!("key {k} is not on a leaf")));
            }
        }
        Ok(Self::attached_anywhere(tree, leaf_of))
    }

    /// Like `new` but keys may sit on internal nodes too.
    pub fn attached_anywhere(tree: Tree, leaf_of: Vec<usize>) -> Self {
        let mut attached = vec![Vec::new(); tree.len()];
        for (k, &v) in leaf_of.iter().enumerate() {
            attached[v].push(k);
        }
        Self {
            tree,
            leaf_of,
            attached,
        }
    }

    pub fn key_count(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn leaf_of(&self, key: usize) -> usize {
        self.leaf_of[key]
    }

    pub fn keys_at(&self, v: usize) -> &[usize] {
        &self.attached[v]
    }

    /// Sum of `values[k]` over the keys beneath each node.
    pub fn node_sums(&self, values: &[f64]) -> Vec<f64> {
        let mut own = vec![0.0; self.tree.len()];
        for (k, &v) in self.leaf_of.iter().enumerate() {
            own[v] += values[k];
        }
        self.tree.subtree_sums(&own)
    }

    /// Runs bottom-up aggregation and returns the root's leftover, if any.
    pub fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<Option<usize>> {
        let mut leftover: Vec<Option<usize>> = vec![None; self.tree.len()];
        for v in self.tree.post_order() {
            let mut active = chain(state, None, self.attached[v].iter().copied(), coin)?;
            for &c in self.tree.children(v) {
                if let Some(k) = leftover[c].take() {
                    active = absorb(state, active, k, coin)?;
                }
            }
            leftover[v] = active;
        }
        Ok(leftover[self.tree.root()])
    }
}

impl Policy for HierarchyDomain {
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()> {
        HierarchyDomain::aggregate(self, state, coin).map(|_| ())
    }
}

/// Keys listed in sorted order.
#[derive(Clone, Debug)]
pub struct OrderDomain {
    permutation: Vec<usize>,
}

impl OrderDomain {
    pub fn new(permutation: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; permutation.len()];
        for &k in &permutation {
            if k >= seen.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
        }
        Ok(Self { permutation })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            permutation: (0..n).collect(),
        }
    }

    /// Sorts keys by one coordinate, ties by id.
    pub fn by_axis(keys: &[WeightedKey], axis: usize) -> Self {
        let mut permutation: Vec<usize> = (0..keys.len()).collect();
        permutation.sort_by_key(|&k| (keys[k].coords[axis], keys[k].id));
        Self { permutation }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Position of each key in the order.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.permutation.len()];
        for (pos, &k) in self.permutation.iter().enumerate() {
            r[k] = pos;
        }
        r
    }

    /// Values rearranged into sorted order.
    pub fn arrange<T: Clone>(&self, values: &[T]) -> Vec<T> {
        self.permutation.iter().map(|&k| values[k].clone()).collect()
    }
}

impl Policy for OrderDomain {
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()> {
        chain(state, None, self.permutation.iter().copied(), coin).map(|_| ())
    }
}

/// Every key belongs to exactly one range.
#[derive(Clone, Debug)]
pub struct DisjointRangeDomain {
    range_of: Vec<u64>,
    groups: BTreeMap<u64, Vec<usize>>,
}

impl DisjointRangeDomain {
    pub fn new(range_of: Vec<u64>) -> Self {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (k, &r) in range_of.iter().enumerate() {
            groups.entry(r).or_default().push(k);
        }
        Self { range_of, groups }
    }

    pub fn range_of(&self, key: usize) -> u64 {
        self.range_of[key]
    }

    pub fn ranges(&self) -> impl Iterator<Item = (u64, &[usize])> {
        self.groups.iter().map(|(&r, ks)| (r, ks.as_slice()))
    }

    /// The equivalent two-level hierarchy: root, one node per range, one
    /// leaf per key.
    pub fn as_hierarchy(&self) -> HierarchyDomain {
        let n = self.range_of.len();
        let mut children = vec![Vec::new()];
        let mut leaf_of = vec![0; n];
        for ks in self.groups.values() {
            let node = children.len();
            children.push(Vec::new());
            for &k in ks {
                let leaf = children.len();
                children.push(Vec::new());
                children[node].push(leaf);
                leaf_of[k] = leaf;
            }
        }
        for r in 1..children.len() {
            if !children[r].is_empty() {
                children[0].push(r);
            }
        }
        let tree = Tree::from_children(children, 0).expect("two-level tree is valid");
        HierarchyDomain::attached_anywhere(tree, leaf_of)
    }
}

impl Policy for DisjointRangeDomain {
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()> {
        let mut outer = None;
        for ks in self.groups.values() {
            if let Some(k) = chain(state, None, ks.iter().copied(), coin)? {
                outer = absorb(state, outer, k, coin)?;
            }
        }
        Ok(())
    }
}

pub fn summarize_hierarchy<R: Rng + ?Sized>(
    state: SummaryState<f64>,
    dom: &HierarchyDomain,
    rng: &mut R,
) -> Result<Vec<usize>> {
    run_policy(state, dom, rng)
}

pub fn summarize_order<R: Rng + ?Sized>(
    state: SummaryState<f64>,
    dom: &OrderDomain,
    rng: &mut R,
) -> Result<Vec<usize>> {
    run_policy(state, dom, rng)
}

pub fn summarize_disjoint<R: Rng + ?Sized>(
    state: SummaryState<f64>,
    dom: &DisjointRangeDomain,
    rng: &mut R,
) -> Result<Vec<usize>> {
    run_policy(state, dom, rng)
}

/// Computes the threshold and probabilities for `keys`, runs `policy` and
/// packages the result.
pub fn sample_with<Pol: Policy + ?Sized, R: Rng + ?Sized>(
    keys: &[WeightedKey],
    s: usize,
    policy: &Pol,
    rng: &mut R,
) -> Result<Sample> {
    let t = compute_threshold(keys, s)?;
    let state = ipps_probabilities(keys, &t);
    let chosen = run_policy(state, policy, rng)?;
    Ok(Sample::from_indices(keys, &chosen, t))
}

/// Positions whose cumulative interval `(c_{i-1}, c_i]` contains a point
/// `h + alpha` for an integer `h`.
pub fn systematic_sample<P: Prob>(probs: &[P], alpha: &P) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cum = P::zero();
    let mut prev = (cum.clone() - alpha.clone()).floor_snapped();
    for (i, p) in probs.iter().enumerate() {
        cum = cum + p.clone();
        let cur = (cum.clone() - alpha.clone()).floor_snapped();
        if cur > prev {
            out.push(i);
        }
        prev = cur;
    }
    out
}

/// The `alpha = 0` systematic set: positions whose interval holds an integer.
pub fn deterministic_order_set<P: Prob>(probs: &[P]) -> Vec<usize> {
    systematic_sample(probs, &P::zero())
}

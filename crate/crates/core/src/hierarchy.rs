//! Rooted trees over keys, stored as child adjacency with external node ids.

use std::collections::HashMap;

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    ids: Vec<u64>,
    labels: Vec<String>,
    index: HashMap<u64, usize>,
}

impl Tree {
    /// Builds a tree from `(node_id, parent_id)` pairs; the root has no parent.
    pub fn from_parents(entries: &[(u64, Option<u64>)]) -> Result<Self> {
        let labelled: Vec<_> = entries.iter().map(|&(id, p)| (id, p, String::new())).collect();
        Self::from_labelled(labelled)
    }

    pub fn from_labelled(entries: Vec<(u64, Option<u64>, String)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidHierarchy("no nodes".into()));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (k, (id, _, _)) in entries.iter().enumerate() {
            if index.insert(*id, k).is_some() {
                return Err(Error::InvalidHierarchy(format!("node {id} listed twice")));
            }
        }
        let n = entries.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (k, (id, p, _)) in entries.iter().enumerate() {
            match p {
                None => {
                    if let Some(r) = root {
                        let other: &(u64, Option<u64>, String) = &entries[r];
                        return Err(Error::InvalidHierarchy(format!(
                            "two roots: {} and {id}",
                            other.0
                        )));
                    }
                    root = Some(k);
                }
                Some(p) => {
                    let &pk = index.get(p).ok_or_else(|| {
                        Error::InvalidHierarchy(format!("node {id} has unknown parent {p}"))
                    })?;
                    parent[k] = Some(pk);
                    children[pk].push(k);
                }
            }
        }
        let root = root.ok_or_else(|| Error::InvalidHierarchy("no root".into()))?;
        let mut ids = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (id, _, label) in entries {
            ids.push(id);
            labels.push(label);
        }
        let tree = Self {
            parent,
            children,
            root,
            ids,
            labels,
            index,
        };
        let reached = tree.pre_order().len();
        if reached != n {
            return Err(Error::InvalidHierarchy(format!(
                "{} nodes unreachable from the root (cycle or disconnected part)",
                n - reached
            )));
        }
        Ok(tree)
    }

    /// Builds a tree from child lists over internal indices; ids equal indices.
    pub fn from_children(children: Vec<Vec<usize>>, root: usize) -> Result<Self> {
        let n = children.len();
        let mut entries: Vec<(u64, Option<u64>)> = (0..n as u64).map(|i| (i, None)).collect();
        for (v, cs) in children.iter().enumerate() {
            for &c in cs {
                if c >= n || entries[c].1.is_some() || c == root {
                    return Err(Error::InvalidHierarchy(format!("bad child {c} of {v}")));
                }
                entries[c].1 = Some(v as u64);
            }
        }
        let mut tree = Self::from_parents(&entries)?;
        // Keep the caller's child order.
        tree.children = children;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn id(&self, v: usize) -> u64 {
        self.ids[v]
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn node_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.is_leaf(v)).collect()
    }

    pub fn pre_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        out
    }

    /// Children before parents, siblings in child-list order.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                out.push(v);
            } else {
                stack.push((v, true));
                stack.extend(self.children[v].iter().rev().map(|&c| (c, false)));
            }
        }
        out
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.len()];
        for v in self.pre_order() {
            if let Some(p) = self.parent[v] {
                depth[v] = depth[p] + 1;
            }
        }
        depth
    }

    /// Sums per-node values over each subtree.
    pub fn subtree_sums(&self, own: &[f64]) -> Vec<f64> {
        let mut acc = own.to_vec();
        for v in self.post_order() {
            if let Some(p) = self.parent[v] {
                acc[p] += acc[v];
            }
        }
        acc
    }

    /// Whether `a` is `b` or an ancestor of `b`.
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut v = Some(b);
        while let Some(x) = v {
            if x == a {
                return true;
            }
            v = self.parent[x];
        }
        false
    }
}

/// Depth-first leaf order of a tree with a chosen child order.
///
/// Every node covers a contiguous run of leaf ranks, so a node query on a
/// hierarchy axis becomes an interval query on ranks.
#[derive(Clone, Debug)]
pub struct Linearization {
    rank: Vec<Option<usize>>,
    span: Vec<(usize, usize)>,
    leaves: Vec<usize>,
}

impl Linearization {
    /// Children are visited in decreasing `mass`, ties by child-list order.
    pub fn by_mass(tree: &Tree, mass: &[f64]) -> Self {
        let mut order: Vec<Vec<usize>> = (0..tree.len()).map(|v| tree.children(v).to_vec()).collect();
        for cs in &mut order {
            cs.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]));
        }
        Self::with_order(tree, &order)
    }

    pub fn with_order(tree: &Tree, order: &[Vec<usize>]) -> Self {
        let n = tree.len();
        let mut rank = vec![None; n];
        let mut span = vec![(usize::MAX, 0); n];
        let mut leaves = Vec::new();
        let mut stack = vec![(tree.root(), false)];
        while let Some((v, done)) = stack.pop() {
            if done {
                let (lo, hi) = order[v]
                    .iter()
                    .fold((usize::MAX, 0), |(lo, hi), &c| (lo.min(span[c].0), hi.max(span[c].1)));
                span[v] = (lo, hi);
            } else if order[v].is_empty() {
                rank[v] = Some(leaves.len());
                span[v] = (leaves.len(), leaves.len());
                leaves.push(v);
            } else {
                stack.push((v, true));
                stack.extend(order[v].iter().rev().map(|&c| (c, false)));
            }
        }
        Self { rank, span, leaves }
    }

    pub fn rank(&self, leaf: usize) -> Option<usize> {
        self.rank[leaf]
    }

    /// Inclusive leaf-rank range covered by node `v`.
    pub fn span(&self, v: usize) -> (usize, usize) {
        self.span[v]
    }

    pub fn leaf_at(&self, rank: usize) -> usize {
        self.leaves[rank]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }
}

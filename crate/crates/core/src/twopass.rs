//! Two sequential passes with memory proportional to the sample size.
//!
//! Pass one draws a guide sample of size `s'` and the threshold `τ_s`. The
//! guide defines a partition of the key domain whose cells hold little
//! probability mass. Pass two aggregates each key with the single active
//! key of its cell; the leftover active keys are aggregated at the end.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use num_traits::{One, Zero};
use rand::Rng;

use crate::hierarchy::{Linearization, Tree};
use crate::ipps::{Threshold, ThresholdStream, WeightedKey};
use crate::prob::RngCoin;
use crate::product::{build_kd_hierarchy, KdTree, ProductDomain};
use crate::sample::{SampledKey, Sample};
use crate::state::{aggregate_pair, SummaryState};
use crate::structures::{chain, HierarchyDomain};
use crate::{Error, Result};

/// A forward-only source of records that can be scanned from the start.
pub trait RecordSource {
    fn scan(&mut self, visit: &mut dyn FnMut(WeightedKey) -> Result<()>) -> Result<()>;

    /// Number of completed or started scans.
    fn passes(&self) -> usize;
}

/// In-memory records, handed out one at a time.
#[derive(Clone, Debug)]
pub struct MemorySource<'a> {
    keys: &'a [WeightedKey],
    passes: usize,
}

impl<'a> MemorySource<'a> {
    pub fn new(keys: &'a [WeightedKey]) -> Self {
        Self { keys, passes: 0 }
    }
}

impl RecordSource for MemorySource<'_> {
    fn scan(&mut self, visit: &mut dyn FnMut(WeightedKey) -> Result<()>) -> Result<()> {
        self.passes += 1;
        for k in self.keys {
            visit(k.clone())?;
        }
        Ok(())
    }

    fn passes(&self) -> usize {
        self.passes
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GuideSampler {
    /// Fixed-size stream VarOpt.
    #[default]
    VarOpt,
    /// Independent IPPS inclusion with expected size `s'`.
    Poisson,
}

#[derive(Debug)]
struct Large {
    key: WeightedKey,
    seq: u64,
}

impl PartialEq for Large {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Large {}
impl PartialOrd for Large {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Large {
    // Reversed so the binary heap pops the smallest weight first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .weight
            .total_cmp(&self.key.weight)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Stream VarOpt of fixed size `k`.
///
/// Keys heavier than the running threshold sit in a heap with their own
/// weight; the rest share the adjusted weight `tau`.
#[derive(Debug)]
pub struct StreamVarOpt {
    k: usize,
    large: BinaryHeap<Large>,
    small: Vec<WeightedKey>,
    tau: f64,
    seq: u64,
}

impl StreamVarOpt {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroSampleSize);
        }
        Ok(Self {
            k,
            large: BinaryHeap::with_capacity(k + 1),
            small: Vec::with_capacity(k + 1),
            tau: 0.0,
            seq: 0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.large.len() + self.small.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push<R: Rng + ?Sized>(&mut self, key: WeightedKey, rng: &mut R) {
        self.seq += 1;
        if self.len() < self.k {
            self.large.push(Large { key, seq: self.seq });
            return;
        }
        let mut moved: Vec<WeightedKey> = Vec::new();
        let mut w = self.tau * self.small.len() as f64;
        if key.weight > self.tau {
            self.large.push(Large { key, seq: self.seq });
        } else {
            w += key.weight;
            moved.push(key);
        }
        while let Some(min) = self.large.peek() {
            let c = self.small.len() + moved.len();
            if c >= 2 && min.key.weight * (c - 1) as f64 >= w {
                break;
            }
            let min = self.large.pop().expect("peeked").key;
            w += min.weight;
            moved.push(min);
        }
        let tau = w / (self.small.len() + moved.len() - 1) as f64;
        let mut r = rng.random::<f64>();
        let mut dropped = false;
        for i in 0..moved.len() {
            r -= 1.0 - moved[i].weight / tau;
            if r < 0.0 {
                moved.swap_remove(i);
                dropped = true;
                break;
            }
        }
        if !dropped {
            if self.small.is_empty() {
                moved.pop();
            } else {
                let i = rng.random_range(0..self.small.len());
                self.small.swap_remove(i);
            }
        }
        self.small.extend(moved);
        self.tau = tau;
    }

    pub fn into_keys(self) -> Vec<WeightedKey> {
        let mut out: Vec<WeightedKey> = self.large.into_iter().map(|l| l.key).collect();
        out.extend(self.small);
        out
    }
}

/// Poisson IPPS guide for an expected size `k`, pruned lazily as the
/// running threshold rises.
#[derive(Debug)]
struct PoissonGuide {
    k: usize,
    stream: ThresholdStream,
    kept: Vec<(WeightedKey, f64)>,
}

impl PoissonGuide {
    fn new(k: usize) -> Result<Self> {
        Ok(Self {
            k,
            stream: ThresholdStream::new(k)?,
            kept: Vec::new(),
        })
    }

    fn push<R: Rng + ?Sized>(&mut self, key: WeightedKey, rng: &mut R) {
        self.stream.push(key.weight);
        let u = rng.random::<f64>();
        if u * self.stream.tau() < key.weight {
            self.kept.push((key, u));
        }
        if self.kept.len() > 2 * self.k + 16 {
            self.prune();
        }
    }

    fn prune(&mut self) {
        let tau = self.stream.tau();
        self.kept.retain(|(k, u)| u * tau < k.weight);
    }

    fn into_keys(mut self) -> Vec<WeightedKey> {
        if self.stream.seen() >= self.k {
            self.prune();
        }
        self.kept.into_iter().map(|(k, _)| k).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FirstPass {
    pub guide: Vec<WeightedKey>,
    pub threshold: Threshold,
    pub records: usize,
}

/// One pass producing the guide sample and `τ_s`.
pub fn first_pass<S: RecordSource + ?Sized, R: Rng + ?Sized>(
    src: &mut S,
    s: usize,
    s_prime: usize,
    sampler: GuideSampler,
    rng: &mut R,
) -> Result<FirstPass> {
    if s_prime < s {
        return Err(Error::InvalidArgument(format!(
            "guide size {s_prime} is smaller than sample size {s}"
        )));
    }
    let mut thresh = ThresholdStream::new(s)?;
    let mut records = 0usize;
    let guide = match sampler {
        GuideSampler::VarOpt => {
            let mut v = StreamVarOpt::new(s_prime)?;
            src.scan(&mut |k| {
                records += 1;
                thresh.push(k.weight);
                v.push(k, rng);
                Ok(())
            })?;
            v.into_keys()
        }
        GuideSampler::Poisson => {
            let mut g = PoissonGuide::new(s_prime)?;
            src.scan(&mut |k| {
                records += 1;
                thresh.push(k.weight);
                g.push(k, rng);
                Ok(())
            })?;
            g.into_keys()
        }
    };
    Ok(FirstPass {
        guide,
        threshold: thresh.finish()?,
        records,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HierarchyStrategy {
    /// Order the leaves depth-first and partition the order.
    #[default]
    Linearize,
    /// One cell per ancestor of a guide key; keys go to the lowest one.
    LowestSelectedAncestor,
}

/// Which structure the summary should respect.
#[derive(Clone, Debug)]
pub enum Structure {
    /// Keys ordered by one coordinate.
    Order { axis: usize },
    /// One coordinate names the key's range.
    Disjoint { axis: usize },
    /// One coordinate is a leaf id of the tree.
    Hierarchy {
        axis: usize,
        tree: Arc<Tree>,
        strategy: HierarchyStrategy,
    },
    Product(ProductDomain),
}

#[derive(Clone, Debug)]
enum Cells {
    Single,
    /// Cell = number of bounds strictly below the coordinate.
    Order { axis: usize, bounds: Vec<u64> },
    /// Hit ranges get odd cells, gaps between them even cells.
    Disjoint { axis: usize, hits: Vec<u64> },
    Linearized {
        axis: usize,
        tree: Arc<Tree>,
        lin: Linearization,
        bounds: Vec<u64>,
    },
    Ancestor {
        axis: usize,
        tree: Arc<Tree>,
        cell_of_node: HashMap<usize, usize>,
        cell_tree: Tree,
    },
    Product {
        kd: Box<KdTree>,
        cell_of_leaf: HashMap<usize, usize>,
    },
}

/// Partition of the key domain built from a guide sample.
#[derive(Clone, Debug)]
pub struct Partition {
    cells: Cells,
    count: usize,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Cell holding `key`.
    pub fn cell_of(&self, key: &WeightedKey) -> Result<usize> {
        let coord = |axis: usize| {
            key.coords
                .get(axis)
                .copied()
                .ok_or(Error::KeyOutsidePartition(key.id))
        };
        match &self.cells {
            Cells::Single => Ok(0),
            Cells::Order { axis, bounds } => {
                let x = coord(*axis)?;
                Ok(bounds.partition_point(|&b| b < x))
            }
            Cells::Disjoint { axis, hits } => {
                let r = coord(*axis)?;
                Ok(match hits.binary_search(&r) {
                    Ok(i) => 2 * i + 1,
                    Err(i) => 2 * i,
                })
            }
            Cells::Linearized {
                axis,
                tree,
                lin,
                bounds,
            } => {
                let x = tree
                    .node_of(coord(*axis)?)
                    .and_then(|v| lin.rank(v))
                    .ok_or(Error::KeyOutsidePartition(key.id))? as u64;
                Ok(bounds.partition_point(|&b| b < x))
            }
            Cells::Ancestor {
                axis,
                tree,
                cell_of_node,
                ..
            } => {
                let mut v = tree.node_of(coord(*axis)?);
                while let Some(x) = v {
                    if let Some(&c) = cell_of_node.get(&x) {
                        return Ok(c);
                    }
                    v = tree.parent(x);
                }
                Err(Error::KeyOutsidePartition(key.id))
            }
            Cells::Product { kd, cell_of_leaf } => kd
                .route(&key.coords)
                .and_then(|v| cell_of_leaf.get(&v).copied())
                .ok_or(Error::KeyOutsidePartition(key.id)),
        }
    }

    /// The kd-hierarchy behind a product partition.
    pub fn kd_tree(&self) -> Option<&KdTree> {
        match &self.cells {
            Cells::Product { kd, .. } => Some(kd),
            _ => None,
        }
    }

    /// Aggregates the leftover active keys, one per cell, following the
    /// structure; returns the indices into `residual` that end selected.
    fn aggregate_residual<R: Rng + ?Sized>(
        &self,
        residual: &[(usize, f64)],
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let mut state = SummaryState::new(residual.iter().map(|r| r.1).collect());
        let mut coin = RngCoin(rng);
        match &self.cells {
            Cells::Ancestor { cell_tree, .. } => {
                let leaf_of = residual.iter().map(|r| r.0).collect();
                HierarchyDomain::attached_anywhere(cell_tree.clone(), leaf_of)
                    .aggregate(&mut state, &mut coin)?;
            }
            Cells::Product { kd, cell_of_leaf } => {
                let node_of_cell: HashMap<usize, usize> =
                    cell_of_leaf.iter().map(|(&v, &c)| (c, v)).collect();
                let leaf_of = residual.iter().map(|r| node_of_cell[&r.0]).collect();
                HierarchyDomain::attached_anywhere(kd.to_tree(), leaf_of)
                    .aggregate(&mut state, &mut coin)?;
            }
            _ => {
                // Residual is sorted by cell, so this follows the cell order.
                chain(&mut state, None, 0..residual.len(), &mut coin)?;
            }
        }
        state.resolve_residual()?;
        Ok(state.selected())
    }
}

/// Builds the partition from the light keys of the guide sample.
pub fn build_partition(guide: &[WeightedKey], structure: &Structure, threshold: &Threshold) -> Result<Partition> {
    let light: Vec<&WeightedKey> = guide.iter().filter(|k| !threshold.is_heavy(k.weight)).collect();
    let sorted_unique = |mut v: Vec<u64>| {
        v.sort_unstable();
        v.dedup();
        v
    };
    let coord = |k: &WeightedKey, axis: usize| {
        k.coords.get(axis).copied().ok_or(Error::DimensionMismatch {
            expected: axis + 1,
            found: k.coords.len(),
        })
    };
    let (cells, count) = match structure {
        Structure::Order { axis } => {
            let bounds = sorted_unique(light.iter().map(|k| coord(k, *axis)).collect::<Result<_>>()?);
            let count = bounds.len() + 1;
            (Cells::Order { axis: *axis, bounds }, count)
        }
        Structure::Disjoint { axis } => {
            let hits = sorted_unique(light.iter().map(|k| coord(k, *axis)).collect::<Result<_>>()?);
            let count = 2 * hits.len() + 1;
            (Cells::Disjoint { axis: *axis, hits }, count)
        }
        Structure::Hierarchy {
            axis,
            tree,
            strategy: HierarchyStrategy::Linearize,
        } => {
            let mut own = vec![0.0; tree.len()];
            let mut leaves = Vec::with_capacity(light.len());
            for k in &light {
                let v = leaf_node(tree, coord(k, *axis)?, k.id)?;
                own[v] += threshold.prob(k.weight);
                leaves.push(v);
            }
            let lin = Linearization::by_mass(tree, &tree.subtree_sums(&own));
            let bounds = sorted_unique(
                leaves
                    .iter()
                    .map(|&v| lin.rank(v).expect("leaf has a rank") as u64)
                    .collect(),
            );
            let count = bounds.len() + 1;
            (
                Cells::Linearized {
                    axis: *axis,
                    tree: tree.clone(),
                    lin,
                    bounds,
                },
                count,
            )
        }
        Structure::Hierarchy {
            axis,
            tree,
            strategy: HierarchyStrategy::LowestSelectedAncestor,
        } => {
            let mut selected = vec![false; tree.len()];
            selected[tree.root()] = true;
            for k in &light {
                let mut v = Some(leaf_node(tree, coord(k, *axis)?, k.id)?);
                while let Some(x) = v {
                    if std::mem::replace(&mut selected[x], true) {
                        break;
                    }
                    v = tree.parent(x);
                }
            }
            // Cells in pre-order; the cell tree keeps selected nodes only.
            let order: Vec<usize> = tree.pre_order().into_iter().filter(|&v| selected[v]).collect();
            let cell_of_node: HashMap<usize, usize> = order.iter().enumerate().map(|(c, &v)| (v, c)).collect();
            let mut children = vec![Vec::new(); order.len()];
            for &v in &order {
                for &c in tree.children(v) {
                    if let Some(&cc) = cell_of_node.get(&c) {
                        children[cell_of_node[&v]].push(cc);
                    }
                }
            }
            let cell_tree = Tree::from_children(children, 0)?;
            let count = order.len();
            (
                Cells::Ancestor {
                    axis: *axis,
                    tree: tree.clone(),
                    cell_of_node,
                    cell_tree,
                },
                count,
            )
        }
        Structure::Product(domain) => {
            if light.is_empty() {
                (Cells::Single, 1)
            } else {
                let keys: Vec<WeightedKey> = light.iter().map(|&k| k.clone()).collect();
                let probs: Vec<f64> = keys.iter().map(|k| threshold.prob(k.weight)).collect();
                let idx: Vec<usize> = (0..keys.len()).collect();
                let kd = build_kd_hierarchy(&keys, &idx, &probs, domain)?;
                let cell_of_leaf: HashMap<usize, usize> = kd
                    .nodes()
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.is_leaf())
                    .enumerate()
                    .map(|(c, (v, _))| (v, c))
                    .collect();
                let count = cell_of_leaf.len();
                (
                    Cells::Product {
                        kd: Box::new(kd),
                        cell_of_leaf,
                    },
                    count,
                )
            }
        }
    };
    Ok(Partition { cells, count })
}

fn leaf_node(tree: &Tree, id: u64, key: u64) -> Result<usize> {
    tree.node_of(id)
        .filter(|&v| tree.is_leaf(v))
        .ok_or_else(|| Error::InvalidHierarchy(format!("key {key} coordinate {id} is not a leaf")))
}

#[derive(Clone, Debug)]
struct Active {
    key: WeightedKey,
    p: f64,
}

/// State of the second pass: the growing sample and one active key per cell.
#[derive(Debug)]
pub struct IoAggregate<'p> {
    partition: &'p Partition,
    threshold: Threshold,
    active: Vec<Option<Active>>,
    active_count: usize,
    sample: Vec<WeightedKey>,
    max_retained: usize,
}

impl<'p> IoAggregate<'p> {
    pub fn new(partition: &'p Partition, threshold: Threshold) -> Self {
        Self {
            partition,
            threshold,
            active: vec![None; partition.len()],
            active_count: 0,
            sample: Vec::new(),
            max_retained: 0,
        }
    }

    /// Processes one record.
    pub fn push<R: Rng + ?Sized>(&mut self, key: WeightedKey, rng: &mut R) -> Result<()> {
        let p = self.threshold.prob(key.weight);
        if p >= 1.0 {
            self.sample.push(key);
        } else {
            let cell = self.partition.cell_of(&key)?;
            match self.active[cell].take() {
                None => {
                    self.active[cell] = Some(Active { key, p });
                    self.active_count += 1;
                }
                Some(a) => {
                    let (pa, pk) = aggregate_pair(a.p, p, &mut RngCoin(&mut *rng));
                    self.active_count -= 1;
                    for (k, q) in [(a.key, pa), (key, pk)] {
                        if q.is_one() {
                            self.sample.push(k);
                        } else if !q.is_zero() {
                            self.active[cell] = Some(Active { key: k, p: q });
                            self.active_count += 1;
                        }
                    }
                }
            }
        }
        self.max_retained = self.max_retained.max(self.sample.len() + self.active_count);
        Ok(())
    }

    /// Largest number of keys held at once.
    pub fn max_retained(&self) -> usize {
        self.max_retained
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    /// Aggregates the leftover active keys following the structure.
    pub fn finalize<R: Rng + ?Sized>(self, rng: &mut R) -> Result<Sample> {
        let mut residual_keys = Vec::new();
        let mut residual = Vec::new();
        for (cell, a) in self.active.into_iter().enumerate() {
            if let Some(a) = a {
                residual.push((cell, a.p));
                residual_keys.push(a.key);
            }
        }
        let chosen = self.partition.aggregate_residual(&residual, rng)?;
        let mut members: Vec<SampledKey> = self.sample.iter().map(SampledKey::from).collect();
        members.extend(chosen.into_iter().map(|i| SampledKey::from(&residual_keys[i])));
        Ok(Sample {
            members,
            threshold: self.threshold,
        })
    }
}

/// Second pass: IO-aggregate every record, then finalize.
pub fn io_aggregate_pass<S: RecordSource + ?Sized, R: Rng + ?Sized>(
    src: &mut S,
    partition: &Partition,
    threshold: Threshold,
    rng: &mut R,
) -> Result<(Sample, usize)> {
    let mut io = IoAggregate::new(partition, threshold);
    src.scan(&mut |k| io.push(k, rng))?;
    let retained = io.max_retained();
    Ok((io.finalize(rng)?, retained))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoPassConfig {
    pub s: usize,
    pub s_prime: usize,
    pub sampler: GuideSampler,
}

impl TwoPassConfig {
    /// `s' = factor * s`.
    pub fn with_factor(s: usize, factor: usize) -> Self {
        Self {
            s,
            s_prime: s * factor.max(1),
            sampler: GuideSampler::VarOpt,
        }
    }

    /// `s' = ceil(c * s * ln s)`, at least `s`.
    pub fn with_log_factor(s: usize, c: f64) -> Self {
        let s_prime = ((c * s as f64 * (s as f64).ln().max(1.0)).ceil() as usize).max(s);
        Self {
            s,
            s_prime,
            sampler: GuideSampler::VarOpt,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TwoPassOutput {
    pub sample: Sample,
    pub cells: usize,
    pub guide_size: usize,
    pub max_retained: usize,
    pub records: usize,
}

/// Both passes end to end.
pub fn two_pass<S: RecordSource + ?Sized, R: Rng + ?Sized>(
    src: &mut S,
    structure: &Structure,
    config: TwoPassConfig,
    rng: &mut R,
) -> Result<TwoPassOutput> {
    let first = first_pass(src, config.s, config.s_prime, config.sampler, rng)?;
    let partition = build_partition(&first.guide, structure, &first.threshold)?;
    let (sample, max_retained) = io_aggregate_pass(src, &partition, first.threshold, rng)?;
    Ok(TwoPassOutput {
        sample,
        cells: partition.len(),
        guide_size: first.guide.len(),
        max_retained,
        records: first.records,
    })
}

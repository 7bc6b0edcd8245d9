//! Range-sum estimation, discrepancy measurement and the baseline samplers.

use std::collections::HashSet;

use rand::Rng;

use crate::aggregate::{run_policy, ObliviousPolicy};
use crate::ipps::WeightedKey;
use crate::product::{Axis, AxisRange, BoxQuery, ProductDomain};
use crate::sample::{SampledKey, Sample};
use crate::state::SummaryState;
use crate::{Error, Result};

/// Union of pairwise disjoint boxes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RangeQuery {
    pub ranges: Vec<BoxQuery>,
}

impl RangeQuery {
    pub fn new(ranges: Vec<BoxQuery>) -> Self {
        Self { ranges }
    }

    pub fn single(b: BoxQuery) -> Self {
        Self { ranges: vec![b] }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Errors unless every pair of boxes is disjoint.
    pub fn check_disjoint(&self, domain: &ProductDomain) -> Result<()> {
        for (i, a) in self.ranges.iter().enumerate() {
            for b in &self.ranges[i + 1..] {
                if boxes_overlap(domain, a, b) {
                    return Err(Error::OverlappingRanges);
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, domain: &ProductDomain, coords: &[u64]) -> bool {
        self.ranges.iter().any(|b| domain.contains(b, coords))
    }
}

fn boxes_overlap(domain: &ProductDomain, a: &BoxQuery, b: &BoxQuery) -> bool {
    domain
        .axes
        .iter()
        .zip(a.ranges.iter().zip(&b.ranges))
        .all(|(axis, (ra, rb))| match (ra, rb, axis) {
            (AxisRange::Interval { lo: al, hi: ah }, AxisRange::Interval { lo: bl, hi: bh }, _) => {
                al <= bh && bl <= ah
            }
            (AxisRange::Node(x), AxisRange::Node(y), Axis::Hierarchy(t)) => {
                match (t.node_of(*x), t.node_of(*y)) {
                    (Some(u), Some(v)) => t.is_ancestor(u, v) || t.is_ancestor(v, u),
                    _ => false,
                }
            }
            // Mixed forms cannot be compared cheaply; assume they meet.
            _ => true,
        })
}

/// HT estimate of the total weight inside the query.
pub fn estimate_range(sample: &Sample, q: &RangeQuery, domain: &ProductDomain) -> Result<f64> {
    q.check_disjoint(domain)?;
    Ok(sample.estimate(|k: &SampledKey| q.contains(domain, &k.coords)))
}

/// `| |S ∩ R| - p(R) |`.
pub fn discrepancy(count: usize, mass: f64) -> f64 {
    (count as f64 - mass).abs()
}

/// Membership lookup of a sample by key id.
pub fn member_ids(sample: &Sample) -> HashSet<u64> {
    sample.members.iter().map(|k| k.id).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeEntry {
    pub query: usize,
    pub mass: f64,
    pub count: usize,
    pub discrepancy: f64,
    pub estimate: f64,
    pub true_weight: f64,
    pub abs_error: f64,
    /// Multi-range fractional-part bound for this query.
    pub mu: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscrepancyReport {
    pub per_range: Vec<RangeEntry>,
    pub max_discrepancy: f64,
}

/// Evaluates a battery of queries against a sample.
///
/// `probs[k]` is the pre-sampling probability of `keys[k]`.
pub fn max_discrepancy<'q>(
    sample: &Sample,
    keys: &[WeightedKey],
    probs: &[f64],
    domain: &ProductDomain,
    queries: impl IntoIterator<Item = &'q RangeQuery>,
) -> Result<DiscrepancyReport> {
    let ids = member_ids(sample);
    let mut report = DiscrepancyReport::default();
    for (qi, q) in queries.into_iter().enumerate() {
        q.check_disjoint(domain)?;
        let mut masses = vec![0.0; q.len()];
        let mut count = 0;
        let mut true_weight = 0.0;
        for (k, key) in keys.iter().enumerate() {
            if let Some(h) = q.ranges.iter().position(|b| domain.contains(b, &key.coords)) {
                masses[h] += probs[k];
                true_weight += key.weight;
                count += usize::from(ids.contains(&key.id));
            }
        }
        let mass: f64 = masses.iter().sum();
        let estimate = sample.estimate(|k| q.contains(domain, &k.coords));
        let entry = RangeEntry {
            query: qi,
            mass,
            count,
            discrepancy: discrepancy(count, mass),
            estimate,
            true_weight,
            abs_error: (estimate - true_weight).abs(),
            mu: multi_range_mu(&masses),
        };
        report.max_discrepancy = report.max_discrepancy.max(entry.discrepancy);
        report.per_range.push(entry);
    }
    Ok(report)
}

/// Largest `| |S ∩ I| - p(I) |` over every interval `I` of an ordered
/// domain, from the extremes of the running sum of `x_i - p_i`.
pub fn max_interval_discrepancy(probs: &[f64], included: &[bool]) -> f64 {
    let (mut c, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    for (p, &x) in probs.iter().zip(included) {
        c += f64::from(u8::from(x)) - p;
        lo = lo.min(c);
        hi = hi.max(c);
    }
    hi - lo
}

/// Whether every prefix count is the floor or ceiling of its prefix mass.
pub fn prefixes_within_floor_ceiling(probs: &[f64], included: &[bool]) -> bool {
    let (mut mass, mut count) = (0.0f64, 0.0f64);
    probs.iter().zip(included).all(|(p, &x)| {
        mass += p;
        count += f64::from(u8::from(x));
        count >= (mass - 1e-9).floor() && count <= (mass + 1e-9).ceil()
    })
}

/// `μ = Σ_h (p(R_h) - ⌊p(R_h)⌋)`, snapping near-integral masses.
pub fn multi_range_mu(masses: &[f64]) -> f64 {
    masses
        .iter()
        .map(|&m| {
            let f = m - m.floor();
            if !(1e-9..=1.0 - 1e-9).contains(&f) {
                0.0
            } else {
                f
            }
        })
        .sum()
}

/// Independent inclusion of each key with probability `probs[i]`.
pub fn poisson_sample<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| rng.random::<f64>() < p)
        .map(|(i, _)| i)
        .collect()
}

/// VarOpt sample with uniformly random pair choices.
pub fn oblivious_varopt<R: Rng + ?Sized>(state: SummaryState<f64>, rng: &mut R) -> Result<Vec<usize>> {
    let policy = ObliviousPolicy { seed: rng.random() };
    run_policy(state, &policy, rng)
}

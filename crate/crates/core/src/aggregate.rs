//! Pair-selection policies, the aggregation driver and an exact oracle that
//! enumerates every branch of a policy on small rational inputs.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use crate::prob::{Coin, FixedCoin, Prob, RngCoin};
use crate::state::SummaryState;
use crate::{seeded_rng, Error, Result, SampleRng};

/// Largest key count accepted by [`enumerate_distribution`].
pub const MAX_ENUMERATION_KEYS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairChoice {
    pub i: usize,
    pub j: usize,
}

impl PairChoice {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

/// Aggregates one pair using the uniform value `u` in `[0, 1)`.
pub fn pair_aggregate(state: &mut SummaryState<f64>, c: PairChoice, u: f64) -> Result<()> {
    state.pair_aggregate(c.i, c.j, &mut FixedCoin(u))
}

/// A complete aggregation strategy.
///
/// `aggregate` must leave no unset entry when the total is integral and the
/// arithmetic exact; in float mode at most one entry may be left over for
/// residual snapping.
pub trait Policy {
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()>;
}

/// Picks the next pair given the current state, or `None` when done.
pub trait PairSelector {
    fn next_pair<P: Prob>(&mut self, state: &SummaryState<P>) -> Option<PairChoice>;
}

/// Runs `selector` to exhaustion, rejecting pairs that break its contract.
pub fn drive<P, C, S>(state: &mut SummaryState<P>, selector: &mut S, coin: &mut C) -> Result<()>
where
    P: Prob,
    C: Coin<P> + ?Sized,
    S: PairSelector + ?Sized,
{
    while let Some(c) = selector.next_pair(state) {
        check_choice(state, c)?;
        state.pair_aggregate(c.i, c.j, coin)?;
    }
    Ok(())
}

pub(crate) fn check_choice<P: Prob>(state: &SummaryState<P>, c: PairChoice) -> Result<()> {
    let n = state.len();
    if c.i >= n || c.j >= n {
        return Err(Error::PolicyContract(format!(
            "pair ({}, {}) out of range for {n} keys",
            c.i, c.j
        )));
    }
    if c.i == c.j {
        return Err(Error::PolicyContract(format!("pair ({}, {}) repeats a key", c.i, c.j)));
    }
    for k in [c.i, c.j] {
        if state.is_set(k) {
            return Err(Error::PolicyContract(format!("policy chose set entry {k}")));
        }
    }
    Ok(())
}

/// A policy that drives a fresh selector built by the closure on every run.
#[derive(Clone, Copy, Debug)]
pub struct Selecting<F>(pub F);

impl<F, S> Policy for Selecting<F>
where
    F: Fn() -> S,
    S: PairSelector,
{
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()> {
        drive(state, &mut (self.0)(), coin)
    }
}

/// Runs `policy` with a float coin drawn from `rng`, settles float residue
/// and returns the indices of the selected keys.
pub fn run_policy<Pol, R>(mut state: SummaryState<f64>, policy: &Pol, rng: &mut R) -> Result<Vec<usize>>
where
    Pol: Policy + ?Sized,
    R: Rng + ?Sized,
{
    policy.aggregate(&mut state, &mut RngCoin(rng))?;
    state.resolve_residual()?;
    Ok(state.selected())
}

/// Chains along index order: the leftover of each step meets the next unset
/// key. Also the "lowest index first" rule for arbitrary choices.
#[derive(Clone, Debug, Default)]
pub struct IndexChain {
    last: Option<PairChoice>,
    scan: usize,
}

impl IndexChain {
    pub fn new() -> Self {
        Self::default()
    }
}

impl PairSelector for IndexChain {
    fn next_pair<P: Prob>(&mut self, state: &SummaryState<P>) -> Option<PairChoice> {
        let next_unset = |scan: &mut usize| {
            while *scan < state.len() {
                let k = *scan;
                *scan += 1;
                if !state.is_set(k) {
                    return Some(k);
                }
            }
            None
        };
        let held = self
            .last
            .and_then(|c| [c.i, c.j].into_iter().find(|&k| !state.is_set(k)));
        let a = match held {
            Some(a) => a,
            None => next_unset(&mut self.scan)?,
        };
        let b = next_unset(&mut self.scan)?;
        let c = PairChoice::new(a, b);
        self.last = Some(c);
        Some(c)
    }
}

/// Policy form of [`IndexChain`].
#[derive(Clone, Copy, Debug, Default)]
pub struct LowestIndexPairs;

impl Policy for LowestIndexPairs {
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()> {
        drive(state, &mut IndexChain::new(), coin)
    }
}

/// Uniformly random unset pair, ignoring any structure.
///
/// Pair choices come from a private generator so a replayed run with the
/// same branch decisions makes the same choices.
#[derive(Clone, Debug)]
pub struct RandomPairs {
    rng: SampleRng,
    pool: Option<Vec<usize>>,
    last: (usize, usize),
}

impl RandomPairs {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seeded_rng(seed),
            pool: None,
            last: (0, 0),
        }
    }
}

impl PairSelector for RandomPairs {
    fn next_pair<P: Prob>(&mut self, state: &SummaryState<P>) -> Option<PairChoice> {
        let pool = match &mut self.pool {
            Some(pool) => {
                let (a, b) = self.last;
                if state.is_set(pool[b]) {
                    pool.swap_remove(b);
                }
                if state.is_set(pool[a]) {
                    pool.swap_remove(a);
                }
                pool
            }
            None => self.pool.insert(state.unset_indices().collect()),
        };
        if pool.len() < 2 {
            return None;
        }
        let a = self.rng.random_range(0..pool.len());
        let mut b = self.rng.random_range(0..pool.len() - 1);
        if b >= a {
            b += 1;
        }
        self.last = (a.min(b), a.max(b));
        Some(PairChoice::new(pool[a], pool[b]))
    }
}

/// Structure-oblivious policy: random unset pairs from a seeded chooser.
#[derive(Clone, Copy, Debug)]
pub struct ObliviousPolicy {
    pub seed: u64,
}

impl Policy for ObliviousPolicy {
    fn aggregate<P: Prob, C: Coin<P> + ?Sized>(
        &self,
        state: &mut SummaryState<P>,
        coin: &mut C,
    ) -> Result<()> {
        drive(state, &mut RandomPairs::new(self.seed), coin)
    }
}

/// Stops `inner` after `left` pairs.
#[derive(Clone, Debug)]
pub struct Limit<S> {
    pub inner: S,
    pub left: usize,
}

impl<S: PairSelector> PairSelector for Limit<S> {
    fn next_pair<P: Prob>(&mut self, state: &SummaryState<P>) -> Option<PairChoice> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        self.inner.next_pair(state)
    }
}

/// Runs `first` until it is done, then `second`.
#[derive(Clone, Debug)]
pub struct Chain<A, B> {
    pub first: Option<A>,
    pub second: B,
}

impl<A, B> Chain<A, B> {
    pub fn new(first: A, second: B) -> Self {
        Self {
            first: Some(first),
            second,
        }
    }
}

impl<A: PairSelector, B: PairSelector> PairSelector for Chain<A, B> {
    fn next_pair<P: Prob>(&mut self, state: &SummaryState<P>) -> Option<PairChoice> {
        if let Some(first) = &mut self.first {
            if let Some(c) = first.next_pair(state) {
                return Some(c);
            }
            self.first = None;
        }
        self.second.next_pair(state)
    }
}

/// Exact distribution over final samples, keyed by membership bitmask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeDistribution {
    n: usize,
    outcomes: BTreeMap<u64, BigRational>,
}

impl OutcomeDistribution {
    pub fn from_outcomes(n: usize, outcomes: BTreeMap<u64, BigRational>) -> Self {
        Self { n, outcomes }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn outcomes(&self) -> &BTreeMap<u64, BigRational> {
        &self.outcomes
    }

    pub fn outcomes_mut(&mut self) -> &mut BTreeMap<u64, BigRational> {
        &mut self.outcomes
    }

    /// Outcomes as sorted member index lists.
    pub fn iter_members(&self) -> impl Iterator<Item = (Vec<usize>, BigRational)> + '_ {
        self.outcomes
            .iter()
            .map(move |(&m, p)| ((0..self.n).filter(|&i| m >> i & 1 == 1).collect(), p.clone()))
    }

    pub fn probability_of(&self, members: &[usize]) -> BigRational {
        let mask = members.iter().fold(0u64, |m, &i| m | 1 << i);
        self.outcomes.get(&mask).cloned().unwrap_or_else(BigRational::zero)
    }

    /// `Pr[J ⊆ S]` for the subset given as a bitmask.
    pub fn prob_all_in(&self, subset: u64) -> BigRational {
        self.sum_where(|m| m & subset == subset)
    }

    /// `Pr[J ∩ S = ∅]` for the subset given as a bitmask.
    pub fn prob_none_in(&self, subset: u64) -> BigRational {
        self.sum_where(|m| m & subset == 0)
    }

    pub fn marginal(&self, i: usize) -> BigRational {
        self.prob_all_in(1 << i)
    }

    pub fn total(&self) -> BigRational {
        self.sum_where(|_| true)
    }

    /// Exact distribution of `f(outcome)`.
    pub fn pushforward<K: Ord>(&self, f: impl Fn(u64) -> K) -> BTreeMap<K, BigRational> {
        let mut out = BTreeMap::new();
        for (&m, p) in &self.outcomes {
            *out.entry(f(m)).or_insert_with(BigRational::zero) += p;
        }
        out
    }

    fn sum_where(&self, pred: impl Fn(u64) -> bool) -> BigRational {
        self.outcomes
            .iter()
            .filter(|(&m, _)| pred(m))
            .fold(BigRational::zero(), |acc, (_, p)| acc + p)
    }
}

/// Coin for replay enumeration: follows the script, then takes the first
/// branch, and records each decision with its exact probability.
struct ReplayCoin<'a> {
    script: &'a [bool],
    decisions: Vec<(bool, bool)>,
    weight: BigRational,
}

impl Coin<BigRational> for ReplayCoin<'_> {
    fn flip(&mut self, first: &BigRational) -> bool {
        let pos = self.decisions.len();
        let forced = if first.is_zero() {
            Some(false)
        } else if first.is_one() {
            Some(true)
        } else {
            None
        };
        let take = forced.unwrap_or_else(|| self.script.get(pos).copied().unwrap_or(true));
        let branch = if take {
            first.clone()
        } else {
            BigRational::one() - first
        };
        self.weight *= branch;
        // Only a free first-branch choice has an unexplored sibling.
        self.decisions.push((take, forced.is_none() && take));
        take
    }
}

/// Exhaustively expands every branch of `policy` on `probs`.
pub fn enumerate_distribution<Pol: Policy + ?Sized>(
    probs: &[BigRational],
    policy: &Pol,
) -> Result<OutcomeDistribution> {
    let n = probs.len();
    if n > MAX_ENUMERATION_KEYS {
        return Err(Error::EnumerationLimit {
            n,
            max: MAX_ENUMERATION_KEYS,
        });
    }
    let total = probs.iter().fold(BigRational::zero(), |a, b| a + b);
    if !total.is_integer() {
        return Err(Error::NonIntegralMass(total.to_f64()));
    }
    let mut outcomes: BTreeMap<u64, BigRational> = BTreeMap::new();
    let mut script: Vec<bool> = Vec::new();
    loop {
        let mut state = SummaryState::new(probs.to_vec());
        let mut coin = ReplayCoin {
            script: &script,
            decisions: Vec::new(),
            weight: BigRational::one(),
        };
        policy.aggregate(&mut state, &mut coin)?;
        if state.unset_count() != 0 {
            return Err(Error::PolicyContract(format!(
                "{} entries left unset in exact mode",
                state.unset_count()
            )));
        }
        let mask = state.selected().iter().fold(0u64, |m, &i| m | 1 << i);
        *outcomes.entry(mask).or_insert_with(BigRational::zero) += coin.weight;

        let Some(k) = coin.decisions.iter().rposition(|&(_, open)| open) else {
            break;
        };
        script = coin.decisions[..k].iter().map(|&(b, _)| b).collect();
        script.push(false);
    }
    Ok(OutcomeDistribution { n, outcomes })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Outcome probabilities do not sum to 1.
    TotalMass(BigRational),
    Marginal {
        key: usize,
        expected: BigRational,
        found: BigRational,
    },
    Size {
        members: usize,
        expected: BigRational,
    },
    Inclusion { subset: Vec<usize> },
    Exclusion { subset: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TotalMass(t) => write!(f, "total mass {t} != 1"),
            Violation::Marginal { key, expected, found } => {
                write!(f, "marginal of key {key}: expected {expected}, found {found}")
            }
            Violation::Size { members, expected } => {
                write!(f, "outcome with {members} members, expected {expected}")
            }
            Violation::Inclusion { subset } => write!(f, "inclusion bound fails for {subset:?}"),
            Violation::Exclusion { subset } => write!(f, "exclusion bound fails for {subset:?}"),
        }
    }
}

/// Violated VarOpt conditions; empty when all hold.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VarOptReport {
    pub violations: Vec<Violation>,
}

impl VarOptReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks marginals, sample size and the inclusion/exclusion product bounds
/// of every subset, exactly.
pub fn verify_varopt(dist: &OutcomeDistribution, probs: &[BigRational]) -> VarOptReport {
    let n = probs.len();
    let mut violations = Vec::new();
    let total = dist.total();
    if !total.is_one() {
        violations.push(Violation::TotalMass(total));
    }
    for (i, p) in probs.iter().enumerate() {
        let found = dist.marginal(i);
        if &found != p {
            violations.push(Violation::Marginal {
                key: i,
                expected: p.clone(),
                found,
            });
        }
    }
    let size = probs.iter().fold(BigRational::zero(), |a, b| a + b);
    for &m in dist.outcomes().keys() {
        let members = m.count_ones() as usize;
        if BigRational::from_integer(members.into()) != size {
            violations.push(Violation::Size {
                members,
                expected: size.clone(),
            });
        }
    }
    for subset in 1u64..(1u64 << n) {
        if subset.count_ones() < 2 {
            continue;
        }
        let ids: Vec<usize> = (0..n).filter(|&i| subset >> i & 1 == 1).collect();
        let incl = ids.iter().fold(BigRational::one(), |a, &i| a * &probs[i]);
        let excl = ids
            .iter()
            .fold(BigRational::one(), |a, &i| a * (BigRational::one() - &probs[i]));
        if dist.prob_all_in(subset) > incl {
            violations.push(Violation::Inclusion { subset: ids.clone() });
        }
        if dist.prob_none_in(subset) > excl {
            violations.push(Violation::Exclusion { subset: ids });
        }
    }
    VarOptReport { violations }
}

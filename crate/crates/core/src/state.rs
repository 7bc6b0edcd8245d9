use crate::prob::{Coin, Prob, EPS_NUM};
use crate::{Error, Result};

/// The two-entry aggregation rule on bare values.
///
/// Below 1 the pair's mass moves onto one entry; at or above 1 one entry
/// becomes 1 and the other keeps the excess.
pub fn aggregate_pair<P: Prob, C: Coin<P> + ?Sized>(pi: P, pj: P, coin: &mut C) -> (P, P) {
    let sum = pi.clone() + pj.clone();
    if !sum.reaches_one() {
        let first = pi / sum.clone();
        if coin.flip(&first) {
            (sum, P::zero())
        } else {
            (P::zero(), sum)
        }
    } else {
        let two = P::one() + P::one();
        let first = (P::one() - pj.clone()) / (two - pi - pj);
        let rest = (sum - P::one()).settle();
        if coin.flip(&first) {
            (P::one(), rest)
        } else {
            (rest, P::one())
        }
    }
}

/// One recorded pair aggregation: indices and the values before and after.
#[derive(Clone, Debug)]
pub struct Step<P> {
    pub i: usize,
    pub j: usize,
    pub before: (P, P),
    pub after: (P, P),
}

/// Per-key inclusion probabilities in the middle of aggregation.
///
/// An entry is *set* once it reaches exactly 0 or 1; set entries are never
/// modified again.
#[derive(Clone, Debug)]
pub struct SummaryState<P = f64> {
    probs: Vec<P>,
    set_mask: Vec<bool>,
    unset: usize,
    trace: Option<Vec<Step<P>>>,
}

impl<P: Prob> SummaryState<P> {
    pub fn new(probs: Vec<P>) -> Self {
        let set_mask: Vec<bool> = probs.iter().map(Prob::is_set).collect();
        let unset = set_mask.iter().filter(|s| !**s).count();
        Self {
            probs,
            set_mask,
            unset,
            trace: None,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[P] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> &P {
        &self.probs[i]
    }

    pub fn set_mask(&self) -> &[bool] {
        &self.set_mask
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.set_mask[i]
    }

    pub fn unset_count(&self) -> usize {
        self.unset
    }

    pub fn unset_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.set_mask
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(i, _)| i)
    }

    pub fn total(&self) -> P {
        self.probs.iter().cloned().fold(P::zero(), |a, b| a + b)
    }

    /// Indices whose probability is exactly 1.
    pub fn selected(&self) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_one())
            .map(|(i, _)| i)
            .collect()
    }

    /// Start recording every pair aggregation.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[Step<P>]> {
        self.trace.as_deref()
    }

    /// Aggregates entries `i` and `j`; afterwards at least one of them is set.
    pub fn pair_aggregate<C: Coin<P> + ?Sized>(
        &mut self,
        i: usize,
        j: usize,
        coin: &mut C,
    ) -> Result<()> {
        if self.set_mask[i] {
            return Err(Error::EntryAlreadySet(i));
        }
        if self.set_mask[j] {
            return Err(Error::EntryAlreadySet(j));
        }
        if i == j {
            return Err(Error::PolicyContract(format!("pair ({i}, {j}) repeats a key")));
        }
        let pi = self.probs[i].clone();
        let pj = self.probs[j].clone();
        let (ni, nj) = aggregate_pair(pi.clone(), pj.clone(), coin);
        if let Some(t) = self.trace.as_mut() {
            t.push(Step {
                i,
                j,
                before: (pi, pj),
                after: (ni.clone(), nj.clone()),
            });
        }
        self.assign(i, ni);
        self.assign(j, nj);
        Ok(())
    }

    fn assign(&mut self, i: usize, p: P) {
        if p.is_set() {
            self.set_mask[i] = true;
            self.unset -= 1;
        }
        self.probs[i] = p;
    }

    /// Settles a single remaining unset entry left over by float drift.
    ///
    /// With exact arithmetic and an integral total no entry can remain; in
    /// float mode the leftover must lie within tolerance of 0 or 1.
    pub fn resolve_residual(&mut self) -> Result<()> {
        if self.unset == 0 {
            return Ok(());
        }
        if self.unset > 1 {
            return Err(Error::PolicyContract(format!(
                "{} entries left unset after aggregation",
                self.unset
            )));
        }
        let i = self.unset_indices().next().expect("one unset entry");
        let p = self.probs[i].to_f64();
        let tol = EPS_NUM * (self.len() as f64).max(1.0);
        let snapped = if p <= tol {
            P::zero()
        } else if p >= 1.0 - tol {
            P::one()
        } else {
            return Err(Error::NonIntegralMass(p));
        };
        self.assign(i, snapped);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{ratio, FixedCoin, ScriptedCoin};
    use num_rational::BigRational;

    #[test]
    fn new_marks_boundary_entries() {
        let s = SummaryState::new(vec![0.0, 0.5, 1.0, 0.5]);
        assert_eq!(s.set_mask(), &[true, false, true, false]);
        assert_eq!(s.unset_count(), 2);
        assert_eq!(s.selected(), vec![2]);
    }

    #[test]
    fn set_entry_is_rejected() {
        let mut s = SummaryState::new(vec![1.0, 0.5, 0.5]);
        let err = s.pair_aggregate(0, 1, &mut FixedCoin(0.1)).unwrap_err();
        assert!(matches!(err, Error::EntryAlreadySet(0)));
        assert_eq!(err.to_string(), "entry already set: key 0");
    }

    #[test]
    fn exact_sum_one_sets_both() {
        let mut s: SummaryState<BigRational> =
            SummaryState::new(vec![ratio(3, 5), ratio(2, 5)]);
        s.pair_aggregate(0, 1, &mut ScriptedCoin::new(vec![false])).unwrap();
        assert_eq!(s.probs(), &[ratio(0, 1), ratio(1, 1)]);
        assert_eq!(s.unset_count(), 0);
    }

    #[test]
    fn residual_snaps_within_tolerance() {
        let mut s = SummaryState::new(vec![1.0 - 1e-13]);
        s.resolve_residual().unwrap();
        assert_eq!(s.selected(), vec![0]);

        let mut s = SummaryState::new(vec![0.4]);
        assert!(matches!(s.resolve_residual(), Err(Error::NonIntegralMass(_))));
    }
}

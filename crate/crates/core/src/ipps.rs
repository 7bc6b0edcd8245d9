//! Keys, IPPS thresholds and inclusion probabilities.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;

use crate::prob::EPS_NUM;
use crate::state::SummaryState;
use crate::{Error, Result};

/// A weighted key: the unit of ingestion.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedKey {
    pub id: u64,
    pub coords: Vec<u64>,
    pub weight: f64,
}

impl WeightedKey {
    pub fn new(id: u64, coords: Vec<u64>, weight: f64) -> Self {
        Self { id, coords, weight }
    }

    /// A one-dimensional key whose coordinate equals its id.
    pub fn scalar(id: u64, weight: f64) -> Self {
        Self::new(id, vec![id], weight)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Checks the dataset invariants: positive finite weights, one dimension,
/// unique ids.
pub fn validate_keys(keys: &[WeightedKey]) -> Result<()> {
    let dim = keys.first().map(WeightedKey::dim).unwrap_or(0);
    let mut ids = std::collections::HashSet::with_capacity(keys.len());
    for k in keys {
        if !(k.weight > 0.0 && k.weight.is_finite()) {
            return Err(Error::InvalidWeight {
                id: k.id,
                weight: k.weight,
            });
        }
        if k.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: k.dim(),
            });
        }
        if !ids.insert(k.id) {
            return Err(Error::DuplicateId(k.id));
        }
    }
    Ok(())
}

/// IPPS threshold `tau` for a target sample size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    pub tau: f64,
    pub target_size: usize,
}

impl Threshold {
    pub fn prob(&self, weight: f64) -> f64 {
        if weight >= self.tau {
            1.0
        } else {
            weight / self.tau
        }
    }

    pub fn is_heavy(&self, weight: f64) -> bool {
        weight >= self.tau
    }
}

/// One-pass threshold computation over a stream of weights.
///
/// Keeps at most `s - 1` heavy candidates in a min-heap and the total `L`
/// of every other weight seen, with `tau = L / (s - |H|)`.
#[derive(Clone, Debug)]
pub struct ThresholdStream {
    s: usize,
    heap: BinaryHeap<Reverse<OrderedFloat<f64>>>,
    light_total: f64,
    tau: f64,
    seen: usize,
}

impl ThresholdStream {
    pub fn new(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::ZeroSampleSize);
        }
        Ok(Self {
            s,
            heap: BinaryHeap::with_capacity(s),
            light_total: 0.0,
            tau: 0.0,
            seen: 0,
        })
    }

    pub fn push(&mut self, w: f64) {
        self.seen += 1;
        if w < self.tau {
            self.light_total += w;
        } else {
            self.heap.push(Reverse(OrderedFloat(w)));
        }
        // Both branches change L or |H|, so tau is refreshed before the
        // heap is re-examined.
        loop {
            if self.heap.len() < self.s {
                self.tau = self.light_total / (self.s - self.heap.len()) as f64;
            }
            let evict = self.heap.len() == self.s
                || self.heap.peek().is_some_and(|m| m.0 .0 < self.tau);
            if !evict {
                break;
            }
            let Reverse(OrderedFloat(a)) = self.heap.pop().expect("non-empty heap");
            self.light_total += a;
        }
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Number of heavy candidates currently held.
    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn finish(self) -> Result<Threshold> {
        if self.seen < self.s {
            return Err(Error::SampleSizeExceedsPopulation {
                requested: self.s,
                available: self.seen,
            });
        }
        Ok(Threshold {
            tau: self.tau,
            target_size: self.s,
        })
    }
}

/// Computes `tau_s` in one pass (streaming heap method).
pub fn compute_threshold(keys: &[WeightedKey], s: usize) -> Result<Threshold> {
    threshold_of_weights(keys.iter().map(|k| k.weight), s)
}

pub fn threshold_of_weights(weights: impl IntoIterator<Item = f64>, s: usize) -> Result<Threshold> {
    let mut stream = ThresholdStream::new(s)?;
    for w in weights {
        stream.push(w);
    }
    stream.finish()
}

/// Reference threshold: scan the sorted-weight breakpoints for the smallest
/// number `k` of forced keys such that `R_k / (s - k)` caps every remaining
/// weight, where `R_k` is the total of all but the `k` largest weights.
pub fn threshold_by_breakpoints(weights: &[f64], s: usize) -> Result<Threshold> {
    if s == 0 {
        return Err(Error::ZeroSampleSize);
    }
    if s > weights.len() {
        return Err(Error::SampleSizeExceedsPopulation {
            requested: s,
            available: weights.len(),
        });
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // suffix[k] = sum of sorted[k..]
    let mut suffix = vec![0.0; sorted.len() + 1];
    for k in (0..sorted.len()).rev() {
        suffix[k] = suffix[k + 1] + sorted[k];
    }
    for k in 0..s {
        let tau = suffix[k] / (s - k) as f64;
        if sorted[k] <= tau {
            return Ok(Threshold { tau, target_size: s });
        }
    }
    unreachable!("k = s - 1 always yields a valid threshold")
}

/// `p_i = min{1, w_i / tau}`, with the float residual absorbed so the total
/// equals the target size exactly.
pub fn ipps_probabilities(keys: &[WeightedKey], t: &Threshold) -> SummaryState<f64> {
    let probs: Vec<f64> = keys.iter().map(|k| t.prob(k.weight)).collect();
    SummaryState::new(snap_total(probs, t.target_size as f64))
}

/// Adds the residual `target - sum(probs)` to the largest unset entry.
pub fn snap_total(mut probs: Vec<f64>, target: f64) -> Vec<f64> {
    let largest = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0 && **p < 1.0)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let Some(i) = largest else {
        return probs;
    };
    for _ in 0..4 {
        let residual = target - probs.iter().sum::<f64>();
        if residual == 0.0 || residual.abs() > EPS_NUM * target.max(1.0) {
            break;
        }
        probs[i] = (probs[i] + residual).clamp(f64::MIN_POSITIVE, 1.0);
    }
    probs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn keys(ws: &[f64]) -> Vec<WeightedKey> {
        ws.iter()
            .enumerate()
            .map(|(i, &w)| WeightedKey::scalar(i as u64, w))
            .collect()
    }

    /// Independent oracle: try tau = (total of all but the k largest) / (s - k)
    /// for every k and keep the largest tau that solves the size equation
    /// directly.
    fn oracle_tau(ws: &[f64], s: usize) -> f64 {
        let mut sorted = ws.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        (0..s)
            .map(|k| sorted[k..].iter().sum::<f64>() / (s - k) as f64)
            .filter(|tau| {
                let total: f64 = ws.iter().map(|w| (w / tau).min(1.0)).sum();
                (total - s as f64).abs() < 1e-9
            })
            .fold(None, |best: Option<f64>, t| Some(best.map_or(t, |b| b.max(t))))
            .expect("some breakpoint solves the equation")
    }

    #[test]
    fn heavy_key_threshold() {
        assert_relative_eq!(oracle_tau(&[5.0, 1.0, 1.0, 1.0], 2), 3.0);
        let t = compute_threshold(&keys(&[5.0, 1.0, 1.0, 1.0]), 2).unwrap();
        assert_relative_eq!(t.tau, 3.0);
        let st = ipps_probabilities(&keys(&[5.0, 1.0, 1.0, 1.0]), &t);
        assert_eq!(st.probs()[0], 1.0);
        for p in &st.probs()[1..] {
            assert_relative_eq!(*p, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_relative_eq!(st.total(), 2.0);
        assert_eq!(st.set_mask(), &[true, false, false, false]);
    }

    #[test]
    fn uniform_threshold() {
        let ws = vec![1.0; 10];
        assert_relative_eq!(oracle_tau(&ws, 4), 2.5);
        let t = compute_threshold(&keys(&ws), 4).unwrap();
        assert_relative_eq!(t.tau, 2.5);
        let st = ipps_probabilities(&keys(&ws), &t);
        assert!(st.probs().iter().all(|p| (p - 0.4).abs() < 1e-12));
    }

    #[test]
    fn full_population_threshold() {
        let t = compute_threshold(&keys(&[7.0, 2.0]), 2).unwrap();
        assert_eq!(t.tau, 2.0);
        assert_eq!(threshold_by_breakpoints(&[7.0, 2.0], 2).unwrap().tau, 2.0);
        let st = ipps_probabilities(&keys(&[7.0, 2.0]), &t);
        assert_eq!(st.probs(), &[1.0, 1.0]);
    }

    #[test]
    fn oversized_sample_is_rejected() {
        let err = compute_threshold(&keys(&[1.0, 2.0]), 3).unwrap_err();
        assert!(err.to_string().contains("sample size exceeds population"));
        assert!(threshold_by_breakpoints(&[1.0], 2).is_err());
    }

    #[test]
    fn weight_equal_to_tau_is_set() {
        let t = Threshold { tau: 2.0, target_size: 1 };
        let st = ipps_probabilities(&keys(&[2.0]), &t);
        assert_eq!(st.probs(), &[1.0]);
        assert!(st.is_set(0));
    }

    #[test]
    fn figure_tree_probabilities_sum_to_four() {
        let ws = [3.0, 6.0, 4.0, 7.0, 1.0, 8.0, 4.0, 2.0, 3.0, 2.0];
        let t = compute_threshold(&keys(&ws), 4).unwrap();
        assert_relative_eq!(t.tau, 10.0);
        let st = ipps_probabilities(&keys(&ws), &t);
        let expect = [0.3, 0.6, 0.4, 0.7, 0.1, 0.8, 0.4, 0.2, 0.3, 0.2];
        for (p, e) in st.probs().iter().zip(expect) {
            assert_relative_eq!(*p, e, epsilon = 1e-12);
        }
        assert_eq!(st.probs().iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn validate_rejects_bad_input() {
        assert!(validate_keys(&keys(&[1.0, 0.0])).is_err());
        assert!(validate_keys(&keys(&[1.0, -1.0])).is_err());
        let dup = vec![WeightedKey::scalar(1, 1.0), WeightedKey::scalar(1, 2.0)];
        assert!(matches!(validate_keys(&dup), Err(Error::DuplicateId(1))));
        let mixed = vec![WeightedKey::new(0, vec![1], 1.0), WeightedKey::new(1, vec![1, 2], 1.0)];
        assert!(matches!(validate_keys(&mixed), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn stream_matches_breakpoint_scan(
            ws in prop::collection::vec(0.001f64..1000.0, 1..300),
            frac in 0.0f64..1.0,
        ) {
            let s = 1 + ((ws.len() - 1) as f64 * frac) as usize;
            let a = threshold_of_weights(ws.iter().copied(), s).unwrap();
            let b = threshold_by_breakpoints(&ws, s).unwrap();
            prop_assert!((a.tau - b.tau).abs() <= 1e-9 * b.tau);
            let total: f64 = ws.iter().map(|w| (w / a.tau).min(1.0)).sum();
            prop_assert!((total - s as f64).abs() <= 1e-9 * s as f64);
        }

        #[test]
        fn heavy_tailed_threshold(
            ws in prop::collection::vec(0.0f64..8.0, 2..1000).prop_map(|v| v.into_iter().map(|e| 10f64.powf(e - 4.0)).collect::<Vec<_>>()),
            frac in 0.0f64..1.0,
        ) {
            let s = 1 + ((ws.len() - 1) as f64 * frac) as usize;
            let t = threshold_of_weights(ws.iter().copied(), s).unwrap();
            let total: f64 = ws.iter().map(|w| (w / t.tau).min(1.0)).sum();
            prop_assert!((total - s as f64).abs() <= 1e-9 * s as f64);
        }

        #[test]
        fn tau_decreases_with_sample_size(
            ws in prop::collection::vec(0.01f64..100.0, 3..200),
        ) {
            let n = ws.len();
            let mut prev: Option<Threshold> = None;
            for s in 1..n {
                let t = threshold_by_breakpoints(&ws, s).unwrap();
                if let Some(p) = prev {
                    let any_light = ws.iter().any(|w| *w < p.tau);
                    if any_light {
                        prop_assert!(t.tau < p.tau);
                    }
                }
                prev = Some(t);
            }
        }
    }
}

use num_rational::BigRational;
use num_traits::Zero;

use crate::ipps::{Threshold, WeightedKey};
use crate::prob::exact;

/// A sampled key with its original weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledKey {
    pub id: u64,
    pub coords: Vec<u64>,
    pub weight: f64,
}

impl From<&WeightedKey> for SampledKey {
    fn from(k: &WeightedKey) -> Self {
        Self {
            id: k.id,
            coords: k.coords.clone(),
            weight: k.weight,
        }
    }
}

/// A final sample together with the threshold it was drawn under.
///
/// Heavy members (`weight >= tau`) keep their exact weight as adjusted
/// weight; every light member stands for `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub members: Vec<SampledKey>,
    pub threshold: Threshold,
}

impl Sample {
    pub fn from_indices(keys: &[WeightedKey], indices: &[usize], threshold: Threshold) -> Self {
        Self {
            members: indices.iter().map(|&i| SampledKey::from(&keys[i])).collect(),
            threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.threshold.tau
    }

    pub fn heavy_keys(&self) -> impl Iterator<Item = &SampledKey> {
        let tau = self.threshold.tau;
        self.members.iter().filter(move |k| k.weight >= tau)
    }

    pub fn adjusted_weight(&self, k: &SampledKey) -> f64 {
        if self.threshold.is_heavy(k.weight) {
            k.weight
        } else {
            self.threshold.tau
        }
    }

    pub fn ids(&self) -> Vec<u64> {
        self.members.iter().map(|k| k.id).collect()
    }

    /// Horvitz-Thompson estimate of the total weight of keys matching `pred`.
    pub fn estimate(&self, pred: impl Fn(&SampledKey) -> bool) -> f64 {
        ht_estimate(self, pred)
    }
}

/// Heavy members matching `pred` contribute their weight; each light member
/// matching `pred` contributes `tau`.
pub fn ht_estimate(sample: &Sample, pred: impl Fn(&SampledKey) -> bool) -> f64 {
    let tau = sample.threshold.tau;
    let mut heavy = 0.0;
    let mut light = 0usize;
    for k in sample.members.iter().filter(|k| pred(k)) {
        if k.weight >= tau {
            heavy += k.weight;
        } else {
            light += 1;
        }
    }
    heavy + light as f64 * tau
}

/// The same estimate in exact rational arithmetic.
pub fn ht_estimate_exact(sample: &Sample, pred: impl Fn(&SampledKey) -> bool) -> BigRational {
    let tau = exact(sample.threshold.tau);
    let mut total = BigRational::zero();
    for k in sample.members.iter().filter(|k| pred(k)) {
        let w = exact(k.weight);
        if w >= tau {
            total += w;
        } else {
            total += tau.clone();
        }
    }
    total
}

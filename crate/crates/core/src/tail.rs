//! Chernoff tail bounds on the number of sampled keys in a subset.

use crate::{Error, Result};

/// Expected count `mu`, deviation point `a` and sample size `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailBoundQuery {
    pub mu: f64,
    pub a: f64,
    pub s: usize,
}

impl TailBoundQuery {
    pub fn new(mu: f64, a: f64, s: usize) -> Result<Self> {
        let sf = s as f64;
        if s == 0 || !(0.0..=sf).contains(&mu) || !(0.0..=sf).contains(&a) {
            return Err(Error::InvalidArgument(format!(
                "tail bound needs 0 <= mu, a <= s (mu={mu}, a={a}, s={s})"
            )));
        }
        Ok(Self { mu, a, s })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `Pr[X >= a]` for `a >= mu`.
    Above,
    /// `Pr[X <= a]` for `a <= mu`.
    Below,
}

/// `e^{a - mu} (mu / a)^a`, clamped to `[0, 1]`.
///
/// Outside its regime (`a < mu` above, `a > mu` below) the bound is the
/// trivial 1.
pub fn tail_bound(q: TailBoundQuery, dir: Direction) -> f64 {
    let TailBoundQuery { mu, a, .. } = q;
    match dir {
        Direction::Above if a < mu => return 1.0,
        Direction::Below if a > mu => return 1.0,
        _ => {}
    }
    if a == mu {
        return 1.0;
    }
    if a == 0.0 {
        // lim_{a -> 0} (mu / a)^a = 1
        return (-mu).exp().clamp(0.0, 1.0);
    }
    if mu == 0.0 {
        return 0.0;
    }
    let log = (a - mu) + a * (mu / a).ln();
    log.exp().clamp(0.0, 1.0)
}

//! Arithmetic modes for probability vectors and the random choice made by
//! each aggregation step.
//!
//! Aggregation code is generic over [`Prob`] so the same algorithm runs in
//! floating point (production) and in exact rationals (oracle tests).

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

/// Relative numeric tolerance for floating-point probability mass.
pub const EPS_NUM: f64 = 1e-9;

pub trait Prob:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// Whether a pair sum takes the `>= 1` branch of pair aggregation.
    fn reaches_one(&self) -> bool;

    /// Snaps values within tolerance of 0 or 1 onto the boundary.
    fn settle(self) -> Self;

    /// Floor, treating values within tolerance of an integer as that integer.
    fn floor_snapped(&self) -> i64;

    fn to_f64(&self) -> f64;

    fn is_set(&self) -> bool {
        self.is_zero() || self.is_one()
    }
}

impl Prob for f64 {
    fn reaches_one(&self) -> bool {
        *self >= 1.0 - EPS_NUM
    }

    fn settle(self) -> Self {
        if self <= EPS_NUM {
            0.0
        } else if self >= 1.0 - EPS_NUM {
            1.0
        } else {
            self
        }
    }

    fn floor_snapped(&self) -> i64 {
        let r = self.round();
        if (self - r).abs() <= EPS_NUM * r.abs().max(1.0) {
            r as i64
        } else {
            self.floor() as i64
        }
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Prob for BigRational {
    fn reaches_one(&self) -> bool {
        *self >= BigRational::one()
    }

    fn settle(self) -> Self {
        self
    }

    fn floor_snapped(&self) -> i64 {
        self.floor().to_integer().to_i64().expect("floor fits in i64")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Exact rational `num/den`.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational value of a finite float.
pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// Source of the binary decision inside one pair aggregation.
///
/// `flip` receives the probability of the first branch and returns `true`
/// when that branch is taken.
pub trait Coin<P> {
    fn flip(&mut self, first: &P) -> bool;
}

/// Float coin driven by a uniform generator: first branch iff `u < first`.
pub struct RngCoin<'a, R: Rng + ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> Coin<f64> for RngCoin<'_, R> {
    fn flip(&mut self, first: &f64) -> bool {
        self.0.random::<f64>() < *first
    }
}

/// Coin backed by one fixed uniform value in `[0, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct FixedCoin(pub f64);

impl Coin<f64> for FixedCoin {
    fn flip(&mut self, first: &f64) -> bool {
        self.0 < *first
    }
}

/// Replays a fixed list of branch decisions, then always takes the first branch.
#[derive(Clone, Debug, Default)]
pub struct ScriptedCoin {
    script: Vec<bool>,
    pos: usize,
}

impl ScriptedCoin {
    pub fn new(script: Vec<bool>) -> Self {
        Self { script, pos: 0 }
    }

    pub fn used(&self) -> usize {
        self.pos
    }
}

impl<P> Coin<P> for ScriptedCoin {
    fn flip(&mut self, _first: &P) -> bool {
        let b = self.script.get(self.pos).copied().unwrap_or(true);
        self.pos += 1;
        b
    }
}

//! Seeded random streams and the fraction draws shared by the samplers.
//!
//! Every replicate gets its own ChaCha8 stream keyed by `(seed, replicate)`, so
//! results do not depend on how replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Independent stream `stream` derived from `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the half-open interval (0, 1].
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// A draw `X` together with `ln(1 - X)`.
///
/// Keeping the log complement around lets long stick products stay accurate
/// when fractions sit very close to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionDraw {
    pub value: f64,
    pub complement: f64,
    pub ln_complement: f64,
}

impl FractionDraw {
    pub fn from_value(value: f64) -> Self {
        Self {
            value,
            complement: 1.0 - value,
            ln_complement: (-value).ln_1p(),
        }
    }

    pub const ONE: FractionDraw = FractionDraw {
        value: 1.0,
        complement: 0.0,
        ln_complement: f64::NEG_INFINITY,
    };
}

/// Beta(1, b) by inversion: `1 - X = U^(1/b)`. `b = 0` is the point mass at 1.
#[inline]
pub fn beta_one<R: Rng + ?Sized>(b: f64, rng: &mut R) -> FractionDraw {
    if b == 0.0 {
        return FractionDraw::ONE;
    }
    let ln_complement = open_unit(rng).ln() / b;
    FractionDraw {
        value: -ln_complement.exp_m1(),
        complement: ln_complement.exp(),
        ln_complement,
    }
}

/// Beta(a, b) draw. `a = 1` goes through the exact inversion above.
pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<FractionDraw> {
    if a == 1.0 {
        return Ok(beta_one(b, rng));
    }
    if b == 0.0 {
        return Ok(FractionDraw::ONE);
    }
    let dist = Beta::new(a, b).map_err(|e| Error::InvalidLaw(format!("Beta({a}, {b}): {e}")))?;
    Ok(FractionDraw::from_value(dist.sample(rng)))
}

/// Index drawn from a cumulative distribution given `u` in [0, 1).
#[inline]
pub fn pick(cumulative: &[f64], u: f64) -> usize {
    for (i, &c) in cumulative.iter().enumerate() {
        if u < c {
            return i;
        }
    }
    // rounding left the total below u: take the last bin with positive mass
    let mut prev = 0.0;
    let mut last_positive = 0;
    for (i, &c) in cumulative.iter().enumerate() {
        if c > prev {
            last_positive = i;
        }
        prev = c;
    }
    last_positive
}

/// Cumulative sums of a probability row.
pub fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

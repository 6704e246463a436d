//! Residual allocation models: building weights from fractions and back,
//! deterministic clumping, and seeded GEM-family samplers.
//!
//! Infinite sequences are carried as a finite prefix plus the unassigned
//! remainder `tail_mass = prod(1 - X_j)`. Nothing is renormalized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::rng::{self, FractionDraw};

/// Default truncation threshold for samplers.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Hard cap on the number of sticks a sampler will draw.
pub const MAX_STICK_LEN: usize = 1 << 24;

const MASS_TOL: f64 = 1e-9;

// Below this a complement factor switches the running product to log space.
const LOG_SWITCH: f64 = 1e-8;

/// Law generating a fraction sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FractionLaw {
    /// Explicitly supplied values.
    Custom,
    /// iid Beta(1, theta).
    Gem { theta: f64 },
    /// Independent Beta(1, theta_j). The last parameter repeats for every
    /// later index. `theta_j = 0` (the unit atom) is only accepted when
    /// `allow_zero` is set.
    Disordered {
        thetas: Vec<f64>,
        #[serde(default)]
        allow_zero: bool,
    },
    /// Two-parameter family: X_j ~ Beta(1 - alpha, theta + j * alpha), j >= 1.
    TwoParam { alpha: f64, theta: f64 },
}

impl FractionLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            FractionLaw::Custom => Ok(()),
            FractionLaw::Gem { theta } => {
                if theta.is_finite() && *theta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidLaw(format!("gem requires theta > 0, got {theta}")))
                }
            }
            FractionLaw::Disordered { thetas, allow_zero } => {
                if thetas.is_empty() {
                    return Err(Error::InvalidLaw(
                        "disordered law needs at least one theta".into(),
                    ));
                }
                for (j, &t) in thetas.iter().enumerate() {
                    let ok = t.is_finite() && (t > 0.0 || (t == 0.0 && *allow_zero));
                    if !ok {
                        return Err(Error::InvalidLaw(format!(
                            "disordered theta[{j}] = {t} must be > 0 (or 0 with allow_zero)"
                        )));
                    }
                }
                Ok(())
            }
            FractionLaw::TwoParam { alpha, theta } => {
                if !(alpha.is_finite() && theta.is_finite()) || *alpha < 0.0 || *alpha >= 1.0 {
                    return Err(Error::InvalidLaw(format!(
                        "two_param requires 0 <= alpha < 1, got {alpha}"
                    )));
                }
                if *theta <= -alpha {
                    return Err(Error::InvalidLaw(format!(
                        "two_param requires theta > -alpha, got theta = {theta}, alpha = {alpha}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Beta parameters of the fraction at 0-based position `index`.
    pub fn beta_params(&self, index: usize) -> Option<(f64, f64)> {
        match self {
            FractionLaw::Custom => None,
            FractionLaw::Gem { theta } => Some((1.0, *theta)),
            FractionLaw::Disordered { thetas, .. } => {
                let t = thetas.get(index).or(thetas.last()).copied()?;
                Some((1.0, t))
            }
            FractionLaw::TwoParam { alpha, theta } => {
                Some((1.0 - alpha, theta + (index as f64 + 1.0) * alpha))
            }
        }
    }

    /// True when the fractions are identically distributed.
    pub fn is_iid(&self) -> bool {
        match self {
            FractionLaw::Custom => false,
            FractionLaw::Gem { .. } => true,
            FractionLaw::Disordered { thetas, .. } => thetas.iter().all(|t| *t == thetas[0]),
            FractionLaw::TwoParam { alpha, .. } => *alpha == 0.0,
        }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> Result<FractionDraw> {
        let (a, b) = self
            .beta_params(index)
            .ok_or_else(|| Error::InvalidLaw("custom law cannot be sampled".into()))?;
        rng::beta(a, b, rng)
    }
}

/// Finite list of fractions in [0, 1] with the law that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionSequence {
    values: Vec<f64>,
    law: FractionLaw,
}

impl FractionSequence {
    pub fn new(values: Vec<f64>, law: FractionLaw) -> Result<Self> {
        law.validate()?;
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::FractionOutOfRange { index, value });
            }
        }
        Ok(Self { values, law })
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        Self::new(values, FractionLaw::Custom)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn law(&self) -> &FractionLaw {
        &self.law
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weights of a (truncated) random probability on the naturals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StickSequence {
    weights: Vec<f64>,
    tail_mass: f64,
}

impl StickSequence {
    pub fn new(weights: Vec<f64>, tail_mass: f64) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        if !(0.0..=1.0).contains(&tail_mass) {
            return Err(Error::InvalidInput(format!(
                "tail mass {tail_mass} outside [0, 1]"
            )));
        }
        let total = neumaier_sum(weights.iter().copied()) + tail_mass;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "weights plus tail mass sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights, tail_mass })
    }

    /// Builds a sequence whose tail is whatever mass the weights leave over.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        let total = neumaier_sum(weights.iter().copied());
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("weights sum to {total} > 1")));
        }
        Ok(Self {
            weights,
            tail_mass: (1.0 - total).max(0.0),
        })
    }

    pub(crate) fn from_parts_unchecked(weights: Vec<f64>, tail_mass: f64) -> Self {
        Self { weights, tail_mass }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of the assigned weights.
    pub fn assigned(&self) -> f64 {
        neumaier_sum(self.weights.iter().copied())
    }

    pub fn into_parts(self) -> (Vec<f64>, f64) {
        (self.weights, self.tail_mass)
    }
}

/// Running value of `prod(1 - X_i)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Remainder {
    linear: f64,
    log: Option<f64>,
}

impl Remainder {
    pub(crate) fn new() -> Self {
        Self {
            linear: 1.0,
            log: None,
        }
    }

    pub(crate) fn value(&self) -> f64 {
        match self.log {
            Some(l) => l.exp(),
            None => self.linear,
        }
    }

    pub(crate) fn absorb(&mut self, draw: &FractionDraw) {
        match self.log.as_mut() {
            Some(l) => *l += draw.ln_complement,
            None if draw.complement < LOG_SWITCH => {
                self.log = Some(self.linear.ln() + draw.ln_complement);
            }
            None => self.linear *= draw.complement,
        }
    }
}

/// Incremental RAM construction used by every sampler.
#[derive(Debug)]
pub(crate) struct StickBuilder {
    weights: Vec<f64>,
    remainder: Remainder,
    eps: f64,
}

impl StickBuilder {
    pub(crate) fn new(eps: f64) -> Self {
        Self {
            weights: Vec::new(),
            remainder: Remainder::new(),
            eps,
        }
    }

    /// Appends one fraction; returns false once the remainder fell below eps.
    pub(crate) fn push(&mut self, draw: &FractionDraw) -> bool {
        let rem = self.remainder.value();
        self.weights.push(draw.value * rem);
        self.remainder.absorb(draw);
        self.remainder.value() >= self.eps && self.remainder.value() > 0.0
    }

    pub(crate) fn len(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn finish(self) -> StickSequence {
        let tail = self.remainder.value();
        StickSequence::from_parts_unchecked(self.weights, tail)
    }
}

pub(crate) fn check_eps(eps: f64, allow_zero: bool) -> Result<()> {
    let ok = eps < 1.0 && (eps > 0.0 || (allow_zero && eps == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "truncation threshold eps = {eps} not in (0, 1)"
        )))
    }
}

/// `P_j = X_j prod_{i<j} (1 - X_i)`, stopping once the remainder drops below
/// `eps` or the fractions run out. `eps = 0` consumes every fraction.
pub fn ram_from_fractions(x: &FractionSequence, eps: f64) -> Result<StickSequence> {
    check_eps(eps, true)?;
    let mut builder = StickBuilder::new(eps);
    for (index, &value) in x.values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::FractionOutOfRange { index, value });
        }
        if !builder.push(&FractionDraw::from_value(value)) && eps > 0.0 {
            break;
        }
    }
    Ok(builder.finish())
}

/// Inverse of [`ram_from_fractions`]: `X_j = P_j / (1 - sum_{i<j} P_i)`, and
/// `X_j = 1` once no mass is left.
pub fn fractions_from_weights(p: &StickSequence) -> Result<FractionSequence> {
    for (index, &value) in p.weights.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    let total = p.assigned() + p.tail_mass;
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "weights plus tail sum to {total} > 1"
        )));
    }
    // remaining mass from the back keeps small denominators accurate
    let n = p.weights.len();
    let mut remaining = vec![0.0; n];
    let mut acc = p.tail_mass;
    let mut comp = 0.0;
    for j in (0..n).rev() {
        let v = p.weights[j];
        let t = acc + v;
        comp += if acc.abs() >= v {
            (acc - t) + v
        } else {
            (v - t) + acc
        };
        acc = t;
        remaining[j] = acc + comp;
    }
    let values = p
        .weights
        .iter()
        .zip(&remaining)
        .map(|(&w, &r)| if r > 0.0 && w < r { w / r } else { 1.0 })
        .collect();
    FractionSequence::custom(values)
}

/// One boundary of a clumping sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    At(usize),
    Infinite,
}

/// Strictly increasing block starts (0-based), beginning at 0. Once an
/// `Infinite` entry appears every later entry is `Infinite`. The block opened
/// by the last finite boundary runs to the end of the available prefix,
/// unless it is followed by `Infinite`, in which case it absorbs the tail too.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClumpIndex {
    boundaries: Vec<Boundary>,
}

impl ClumpIndex {
    pub fn new(boundaries: Vec<Boundary>) -> Result<Self> {
        match boundaries.first() {
            Some(Boundary::At(0)) => {}
            _ => return Err(Error::InvalidInput("clump index must start at position 0".into())),
        }
        let mut prev = 0usize;
        let mut seen_infinite = false;
        for b in &boundaries[1..] {
            match (*b, seen_infinite) {
                (Boundary::Infinite, _) => seen_infinite = true,
                (Boundary::At(_), true) => {
                    return Err(Error::InvalidInput(
                        "finite boundary after an infinite one".into(),
                    ))
                }
                (Boundary::At(v), false) => {
                    if v <= prev {
                        return Err(Error::InvalidInput(
                            "clump boundaries must be strictly increasing".into(),
                        ));
                    }
                    prev = v;
                }
            }
        }
        Ok(Self { boundaries })
    }

    /// Finite boundaries only.
    pub fn from_starts(starts: &[usize]) -> Result<Self> {
        Self::new(starts.iter().map(|&s| Boundary::At(s)).collect())
    }

    /// Every index is its own block.
    pub fn identity(len: usize) -> Self {
        Self {
            boundaries: (0..len.max(1)).map(Boundary::At).collect(),
        }
    }

    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Boundaries of "clump by `self`, then clump the result by `outer`".
    pub fn compose(&self, outer: &ClumpIndex) -> Result<ClumpIndex> {
        let mut out = Vec::with_capacity(outer.len());
        for b in &outer.boundaries {
            match *b {
                Boundary::Infinite => out.push(Boundary::Infinite),
                Boundary::At(v) => match self.boundaries.get(v) {
                    Some(&inner) => out.push(inner),
                    None => {
                        return Err(Error::InvalidInput(format!(
                            "outer boundary {v} exceeds the {} inner blocks",
                            self.len()
                        )))
                    }
                },
            }
        }
        ClumpIndex::new(out)
    }
}

/// Clumps the RAM built from `x` along `u`.
///
/// Returns the blockwise sums of the weights and the clumped fractions
/// `X^u_j = 1 - prod_{i in block j} (1 - X_i)`, with `X^u_j = 1` for blocks at
/// or after an infinite boundary.
pub fn clump(x: &FractionSequence, u: &ClumpIndex) -> Result<(StickSequence, FractionSequence)> {
    let base = ram_from_fractions(x, 0.0)?;
    let n = x.len();
    let bounds = &u.boundaries;
    let mut weights = Vec::with_capacity(bounds.len());
    let mut fractions = Vec::with_capacity(bounds.len());
    let mut tail = base.tail_mass;

    for (j, b) in bounds.iter().enumerate() {
        let start = match *b {
            Boundary::At(s) => s,
            Boundary::Infinite => {
                weights.push(0.0);
                fractions.push(1.0);
                continue;
            }
        };
        if start > n {
            return Err(Error::InvalidInput(format!(
                "boundary {start} lies beyond the {n} available fractions"
            )));
        }
        let (end, absorbs_tail) = match bounds.get(j + 1) {
            Some(Boundary::At(e)) => ((*e).min(n), false),
            Some(Boundary::Infinite) => (n, true),
            None => (n, false),
        };
        let mut w = neumaier_sum(base.weights[start..end].iter().copied());
        if absorbs_tail {
            w += tail;
            tail = 0.0;
            weights.push(w);
            fractions.push(1.0);
        } else {
            weights.push(w);
            fractions.push(match &x.values[start..end] {
                [single] => *single,
                block => 1.0 - block.iter().map(|v| 1.0 - v).product::<f64>(),
            });
        }
    }
    Ok((
        StickSequence::from_parts_unchecked(weights, tail),
        FractionSequence::custom(fractions)?,
    ))
}

/// Draws fractions from `law` until the remainder falls below `eps`.
pub fn sample_fractions_with<R: Rng + ?Sized>(
    law: &FractionLaw,
    rng: &mut R,
    eps: f64,
) -> Result<FractionSequence> {
    law.validate()?;
    check_eps(eps, false)?;
    let mut values = Vec::new();
    let mut builder = StickBuilder::new(eps);
    loop {
        if builder.len() >= MAX_STICK_LEN {
            return Err(Error::TruncationCap(MAX_STICK_LEN));
        }
        let d = law.draw(builder.len(), rng)?;
        values.push(d.value);
        if !builder.push(&d) {
            break;
        }
    }
    Ok(FractionSequence {
        values,
        law: law.clone(),
    })
}

/// Samples a stick sequence from `law` with an explicit RNG.
pub fn sample_stick_with<R: Rng + ?Sized>(law: &FractionLaw, rng: &mut R, eps: f64) -> Result<StickSequence> {
    law.validate()?;
    check_eps(eps, false)?;
    let mut builder = StickBuilder::new(eps);
    loop {
        if builder.len() >= MAX_STICK_LEN {
            return Err(Error::TruncationCap(MAX_STICK_LEN));
        }
        let d = law.draw(builder.len(), rng)?;
        if !builder.push(&d) {
            break;
        }
    }
    Ok(builder.finish())
}

/// Seeded stick sample; identical `(law, seed, eps)` give identical output.
pub fn sample_stick(law: &FractionLaw, seed: u64, eps: f64) -> Result<StickSequence> {
    sample_stick_with(law, &mut rng::stream(seed, 0), eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fr(v: &[f64]) -> FractionSequence {
        FractionSequence::custom(v.to_vec()).unwrap()
    }

    #[test]
    fn geometric_halving() {
        let p = ram_from_fractions(&fr(&[0.5; 6]), 0.0).unwrap();
        let expect = [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625];
        assert_eq!(p.weights(), &expect);
        assert_eq!(p.tail_mass(), 1.0 / 64.0);
    }

    #[test]
    fn unit_fraction_absorbs_everything() {
        let p = ram_from_fractions(&fr(&[1.0, 0.3, 0.7]), 0.0).unwrap();
        assert_eq!(p.weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(p.tail_mass(), 0.0);
        let p = ram_from_fractions(&fr(&[1.0, 0.3, 0.7]), 1e-12).unwrap();
        assert_eq!(p.weights(), &[1.0]);
        assert_eq!(p.tail_mass(), 0.0);
    }

    #[test]
    fn product_formula() {
        let p = ram_from_fractions(&fr(&[0.2, 0.5, 1.0]), 0.0).unwrap();
        assert_abs_diff_eq!(p.weights()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(p.weights()[1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(p.weights()[2], 0.4, epsilon = 1e-15);
        assert_eq!(p.tail_mass(), 0.0);
    }

    #[test]
    fn rejects_out_of_range_fraction() {
        assert!(matches!(
            FractionSequence::custom(vec![0.2, 1.5]),
            Err(Error::FractionOutOfRange { index: 1, .. })
        ));
        assert!(FractionSequence::custom(vec![-0.1]).is_err());
    }

    #[test]
    fn inverse_examples() {
        let x = fractions_from_weights(&StickSequence::new(vec![0.2, 0.4, 0.4], 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(x.values()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(x.values()[1], 0.5, epsilon = 1e-15);
        assert_eq!(x.values()[2], 1.0);

        let x = fractions_from_weights(&StickSequence::new(vec![1.0, 0.0, 0.0], 0.0).unwrap()).unwrap();
        assert_eq!(x.values(), &[1.0, 1.0, 1.0]);

        let geo: Vec<f64> = (1..=8).map(|j| 0.5f64.powi(j)).collect();
        let x = fractions_from_weights(&StickSequence::from_weights(geo).unwrap()).unwrap();
        for v in x.values() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_negative_weight() {
        assert!(matches!(
            StickSequence::from_weights(vec![0.5, -0.1]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
    }

    #[test]
    fn clump_pairs_of_halves() {
        let x = fr(&[0.5; 8]);
        let u = ClumpIndex::from_starts(&[0, 2, 4, 6]).unwrap();
        let (p, xu) = clump(&x, &u).unwrap();
        for v in xu.values() {
            assert_abs_diff_eq!(*v, 0.75, epsilon = 1e-15);
        }
        let expect = [0.75, 3.0 / 16.0, 3.0 / 64.0, 3.0 / 256.0];
        for (a, b) in p.weights().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(p.tail_mass(), 1.0 / 256.0, epsilon = 1e-15);
    }

    #[test]
    fn clump_with_infinite_boundary() {
        let x = fr(&[0.5; 10]);
        let u = ClumpIndex::new(vec![
            Boundary::At(0),
            Boundary::At(2),
            Boundary::Infinite,
            Boundary::Infinite,
        ])
        .unwrap();
        let (p, xu) = clump(&x, &u).unwrap();
        assert_abs_diff_eq!(p.weights()[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p.weights()[1], 0.25, epsilon = 1e-15);
        assert_eq!(&p.weights()[2..], &[0.0, 0.0]);
        assert_eq!(p.tail_mass(), 0.0);
        assert_abs_diff_eq!(xu.values()[0], 0.75, epsilon = 1e-15);
        assert_eq!(&xu.values()[1..], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn identity_clump_is_noop() {
        let x = fr(&[0.1, 0.7, 0.3, 0.9]);
        let (p, xu) = clump(&x, &ClumpIndex::identity(4)).unwrap();
        assert_eq!(xu.values(), x.values());
        assert_eq!(p, ram_from_fractions(&x, 0.0).unwrap());
    }

    #[test]
    fn clump_index_validation() {
        assert!(ClumpIndex::from_starts(&[1, 2]).is_err());
        assert!(ClumpIndex::from_starts(&[0, 2, 2]).is_err());
        assert!(ClumpIndex::new(vec![Boundary::At(0), Boundary::Infinite, Boundary::At(4)]).is_err());
    }

    #[test]
    fn law_validation() {
        assert!(FractionLaw::Gem { theta: 0.0 }.validate().is_err());
        assert!(FractionLaw::Gem { theta: -1.0 }.validate().is_err());
        let zero = FractionLaw::Disordered {
            thetas: vec![1.0, 0.0],
            allow_zero: false,
        };
        assert!(zero.validate().is_err());
        let zero_ok = FractionLaw::Disordered {
            thetas: vec![1.0, 0.0],
            allow_zero: true,
        };
        assert!(zero_ok.validate().is_ok());
        assert!(FractionLaw::TwoParam {
            alpha: 1.0,
            theta: 1.0
        }
        .validate()
        .is_err());
        assert!(FractionLaw::TwoParam {
            alpha: 0.5,
            theta: -0.5
        }
        .validate()
        .is_err());
        assert!(FractionLaw::TwoParam {
            alpha: 0.5,
            theta: -0.4
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn unit_atom_law_gives_point_mass() {
        let law = FractionLaw::Disordered {
            thetas: vec![0.0],
            allow_zero: true,
        };
        let p = sample_stick(&law, 3, 1e-12).unwrap();
        assert_eq!(p.weights(), &[1.0]);
        assert_eq!(p.tail_mass(), 0.0);
    }

    #[test]
    fn seeded_sampling_is_bit_identical() {
        let law = FractionLaw::Gem { theta: 2.5 };
        let a = sample_stick(&law, 11, 1e-10).unwrap();
        let b = sample_stick(&law, 11, 1e-10).unwrap();
        assert_eq!(a, b);
        assert!(a.tail_mass() < 1e-10);
        assert_abs_diff_eq!(a.assigned() + a.tail_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn small_theta_stays_accurate() {
        // tiny theta makes the first fraction essentially 1
        let law = FractionLaw::Gem { theta: 1e-3 };
        for seed in 0..50 {
            let p = sample_stick(&law, seed, 1e-12).unwrap();
            assert_abs_diff_eq!(p.assigned() + p.tail_mass(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn custom_law_cannot_be_sampled() {
        assert!(sample_stick(&FractionLaw::Custom, 0, 1e-6).is_err());
        assert!(sample_stick(&FractionLaw::Gem { theta: 1.0 }, 0, 0.0).is_err());
    }

    fn fractions_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..40)
    }

    proptest! {
        #[test]
        fn telescoping_identity(a in fractions_strategy()) {
            // prod(1 - a_j) + sum a_j prod_{i<j}(1 - a_i) = 1
            let p = ram_from_fractions(&fr(&a), 0.0).unwrap();
            prop_assert!((p.assigned() + p.tail_mass() - 1.0).abs() < 1e-12);
            let mut prod = 1.0;
            for (j, &x) in a.iter().enumerate() {
                prop_assert!((p.weights()[j] - x * prod).abs() < 1e-15);
                prod *= 1.0 - x;
            }
        }

        #[test]
        fn weights_round_trip(a in fractions_strategy()) {
            let p = ram_from_fractions(&fr(&a), 0.0).unwrap();
            let back = ram_from_fractions(&fractions_from_weights(&p).unwrap(), 0.0).unwrap();
            prop_assert_eq!(back.len(), p.len());
            for (x, y) in back.weights().iter().zip(p.weights()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((back.tail_mass() - p.tail_mass()).abs() < 1e-12);
        }

        #[test]
        fn clumping_composes(
            a in prop::collection::vec(0.0f64..=1.0, 12..30),
            inner_cuts in prop::collection::btree_set(1usize..12, 0..8),
            outer_pick in prop::collection::btree_set(1usize..20, 0..5),
        ) {
            let x = fr(&a);
            let mut starts = vec![0];
            starts.extend(inner_cuts.iter().copied());
            let u = ClumpIndex::from_starts(&starts).unwrap();
            let mut outer = vec![0];
            outer.extend(outer_pick.iter().copied().filter(|&v| v < u.len()));
            let v = ClumpIndex::from_starts(&outer).unwrap();

            let (once, xu) = clump(&x, &u).unwrap();
            let (twice, _) = clump(&xu, &v).unwrap();
            let (direct, _) = clump(&x, &u.compose(&v).unwrap()).unwrap();
            prop_assert_eq!(twice.len(), direct.len());
            for (p, q) in twice.weights().iter().zip(direct.weights()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            prop_assert!((once.assigned() + once.tail_mass() - 1.0).abs() < 1e-12);
            prop_assert!((twice.assigned() + twice.tail_mass() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn clumped_fractions_rebuild_clumped_weights(
            a in prop::collection::vec(0.0f64..=1.0, 5..25),
            cuts in prop::collection::btree_set(1usize..5, 0..4),
        ) {
            let x = fr(&a);
            let mut starts = vec![0];
            starts.extend(cuts.iter().copied());
            let (p, xu) = clump(&x, &ClumpIndex::from_starts(&starts).unwrap()).unwrap();
            let rebuilt = ram_from_fractions(&xu, 0.0).unwrap();
            for (r, w) in rebuilt.weights().iter().zip(p.weights()) {
                prop_assert!((r - w).abs() < 1e-12);
            }
        }
    }
}

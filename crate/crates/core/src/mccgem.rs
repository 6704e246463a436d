//! MCcGEM sampling, clumping a stick sequence along a chain path, and
//! discrete measures built from weight/label pairs.

use rand::Rng;
use serde::Serialize;

use crate::chains::{
    check_probability, switch_and_return_times, ChainPath, GeneratorMatrix, StochasticKernel,
};
use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::rng;
use crate::stickcore::{
    check_eps, sample_stick_with, FractionLaw, StickBuilder, StickSequence, MAX_STICK_LEN,
};

/// Weights `P`, labels `Y`, and the generator and initial law they came from.
#[derive(Clone, Debug)]
pub struct MccgemSample {
    pub weights: StickSequence,
    pub labels: Vec<usize>,
    pub generator: GeneratorMatrix,
    pub init: Vec<f64>,
}

impl MccgemSample {
    pub fn measure(&self) -> Result<DiscreteMeasure> {
        assemble_measure(&self.weights, &self.labels, self.generator.dim())
    }
}

/// Labels follow the jump chain of `g` from `init`; given label `y`, the
/// fraction is Beta(1, -G_yy). Stops once the remainder drops below `eps`.
pub fn sample_mccgem_with<R: Rng + ?Sized>(
    g: &GeneratorMatrix,
    init: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<MccgemSample> {
    check_probability(init, g.dim())?;
    check_eps(eps, false)?;
    let jumps = g.jump_kernel().cumulative_rows();
    let mut builder = StickBuilder::new(eps);
    let mut labels = Vec::new();
    let mut y = rng::pick(&rng::cumulative(init), rng.random());
    loop {
        if builder.len() >= MAX_STICK_LEN {
            return Err(Error::TruncationCap(MAX_STICK_LEN));
        }
        labels.push(y);
        let d = rng::beta_one(-g.get(y, y), rng);
        if !builder.push(&d) {
            break;
        }
        y = rng::pick(&jumps[y], rng.random());
    }
    Ok(MccgemSample {
        weights: builder.finish(),
        labels,
        generator: g.clone(),
        init: init.to_vec(),
    })
}

pub fn sample_mccgem(g: &GeneratorMatrix, init: &[f64], eps: f64, seed: u64) -> Result<MccgemSample> {
    sample_mccgem_with(g, init, eps, &mut rng::stream(seed, 0))
}

/// Block sums of `p` over the switch-time blocks of `path`, with the labels
/// at the block starts.
///
/// Only blocks that start inside the support of `p` are returned. Weights
/// beyond the end of the path are not assigned and join the tail mass.
pub fn clump_by_switches(p: &StickSequence, path: &ChainPath) -> (StickSequence, Vec<usize>) {
    let switches = switch_and_return_times(path).switches;
    let w = p.weights();
    let covered = w.len().min(path.len());
    let mut weights = Vec::new();
    let mut labels = Vec::new();
    for (b, &start) in switches.iter().enumerate() {
        if start >= covered && b > 0 {
            break;
        }
        let end = switches.get(b + 1).copied().unwrap_or(path.len()).min(covered);
        weights.push(neumaier_sum(w[start.min(end)..end].iter().copied()));
        labels.push(path.states()[start]);
    }
    let dropped = neumaier_sum(w[covered..].iter().copied());
    (
        StickSequence::from_parts_unchecked(weights, p.tail_mass() + dropped),
        labels,
    )
}

/// Random probability on `{0, .., dim-1}` with a deficit for unassigned mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    pub masses: Vec<f64>,
    pub deficit: f64,
}

impl DiscreteMeasure {
    pub fn point_mass(state: usize, dim: usize) -> Result<Self> {
        if state >= dim {
            return Err(Error::StateOutOfRange { state, dim });
        }
        let mut masses = vec![0.0; dim];
        masses[state] = 1.0;
        Ok(Self { masses, deficit: 0.0 })
    }

    /// `counts[l] / total` for every state.
    pub fn from_counts(counts: &[u64], total: u64) -> Result<Self> {
        if total == 0 || counts.iter().sum::<u64>() != total {
            return Err(Error::InvalidInput(
                "counts must be nonempty and sum to total".into(),
            ));
        }
        Ok(Self {
            masses: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            deficit: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self, state: usize) -> f64 {
        self.masses[state]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "masses": self.masses, "deficit": self.deficit })
    }

    /// `state,mass` rows with 1-based states, then a `deficit` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,mass\n");
        for (i, m) in self.masses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, m));
        }
        out.push_str(&format!("deficit,{}\n", self.deficit));
        out
    }
}

/// `masses[l] = sum_j P_j 1(Y_j = l)`, deficit equal to the tail mass.
pub fn assemble_measure(weights: &StickSequence, labels: &[usize], dim: usize) -> Result<DiscreteMeasure> {
    let w = weights.weights();
    if labels.len() < w.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} weights",
            labels.len(),
            w.len()
        )));
    }
    let mut parts = vec![Vec::new(); dim];
    for (&p, &y) in w.iter().zip(labels) {
        if y >= dim {
            return Err(Error::StateOutOfRange { state: y, dim });
        }
        parts[y].push(p);
    }
    Ok(DiscreteMeasure {
        masses: parts.into_iter().map(neumaier_sum).collect(),
        deficit: weights.tail_mass(),
    })
}

/// Stick-breaking measure `sum_j P_j delta_{Z_j}`: GEM(theta) weights with
/// labels from the chain `q` started at `init`, one label per index.
pub fn sample_stick_breaking_with<R: Rng + ?Sized>(
    theta: f64,
    q: &StochasticKernel,
    init: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    check_probability(init, q.dim())?;
    let p = sample_stick_with(&FractionLaw::Gem { theta }, rng, eps)?;
    let cum = q.cumulative_rows();
    let mut labels = Vec::with_capacity(p.len());
    let mut z = rng::pick(&rng::cumulative(init), rng.random());
    for _ in 0..p.len() {
        labels.push(z);
        z = rng::pick(&cum[z], rng.random());
    }
    assemble_measure(&p, &labels, q.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stickcore::{ram_from_fractions, FractionSequence};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn halves(n: usize) -> StickSequence {
        ram_from_fractions(&FractionSequence::custom(vec![0.5; n]).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn clump_geometric_along_path() {
        let path = ChainPath::new(vec![0, 0, 1, 1, 0, 0, 0, 0], 2).unwrap();
        let (pv, y) = clump_by_switches(&halves(8), &path);
        assert_eq!(pv.weights()[0], 0.75);
        assert_eq!(pv.weights()[1], 0.1875);
        assert_eq!(y, vec![0, 1, 0]);
        assert_abs_diff_eq!(pv.assigned() + pv.tail_mass(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_path_is_one_clump() {
        let p = halves(5);
        let (pv, y) = clump_by_switches(&p, &ChainPath::new(vec![1; 5], 2).unwrap());
        assert_eq!(pv.len(), 1);
        assert_abs_diff_eq!(pv.weights()[0], p.assigned(), epsilon = 1e-15);
        assert_eq!(y, vec![1]);
    }

    #[test]
    fn short_path_leaves_deficit() {
        let p = halves(6);
        let (pv, y) = clump_by_switches(&p, &ChainPath::new(vec![0, 1, 1], 2).unwrap());
        assert_eq!(pv.weights(), &[0.5, 0.375]);
        assert_eq!(y, vec![0, 1]);
        assert_abs_diff_eq!(pv.tail_mass(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn assemble_examples() {
        let w = StickSequence::from_weights(vec![0.5, 0.25, 0.25]).unwrap();
        let m = assemble_measure(&w, &[1, 0, 1], 2).unwrap();
        assert_eq!(m.masses, vec![0.25, 0.75]);
        assert_eq!(m.deficit, 0.0);

        let w = StickSequence::new(vec![0.5, 0.5 - 1e-6], 1e-6).unwrap();
        let m = assemble_measure(&w, &[0, 1], 2).unwrap();
        assert_eq!(m.deficit, 1e-6);
        assert_abs_diff_eq!(m.masses.iter().sum::<f64>(), 1.0 - 1e-6, epsilon = 1e-15);

        assert!(matches!(
            assemble_measure(&w, &[0, 2], 2),
            Err(Error::StateOutOfRange { state: 2, dim: 2 })
        ));
        assert!(assemble_measure(&w, &[0], 2).is_err());
    }

    #[test]
    fn measure_exports() {
        let m = DiscreteMeasure::from_counts(&[1, 3], 4).unwrap();
        assert_eq!(m.to_csv(), "state,mass\n1,0.25\n2,0.75\ndeficit,0\n");
        assert_eq!(m.to_json()["masses"][1], 0.75);
    }

    #[test]
    fn zero_row_start_gives_unit_atom() {
        let g = GeneratorMatrix::new(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let s = sample_mccgem(&g, &[1.0, 0.0], 1e-12, 3).unwrap();
        assert_eq!(s.weights.weights(), &[1.0]);
        assert_eq!(s.labels, vec![0]);
        assert_eq!(s.weights.tail_mass(), 0.0);
    }

    #[test]
    fn mccgem_is_seed_deterministic() {
        let g = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        let a = sample_mccgem(&g, &[0.5, 0.5], 1e-10, 11).unwrap();
        let b = sample_mccgem(&g, &[0.5, 0.5], 1e-10, 11).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.labels, b.labels);
        assert!(a.labels.len() >= a.weights.len());
        assert!(a.weights.tail_mass() < 1e-10);
        // two-state jump chain alternates
        for w in a.labels.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    proptest! {
        #[test]
        fn unclumping_preserves_measure(
            x in proptest::collection::vec(0.01f64..0.99, 1..40),
            states in proptest::collection::vec(0usize..3, 40),
        ) {
            let p = ram_from_fractions(&FractionSequence::custom(x).unwrap(), 0.0).unwrap();
            let path = ChainPath::new(states.clone(), 3).unwrap();
            let (pv, y) = clump_by_switches(&p, &path);
            let direct = assemble_measure(&p, &states, 3).unwrap();
            let clumped = assemble_measure(&pv, &y, 3).unwrap();
            for (a, b) in direct.masses.iter().zip(&clumped.masses) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((direct.deficit - clumped.deficit).abs() <= 1e-15);
        }
    }
}

//! The time-inhomogeneous chain with kernels `K_n = I + G/n 1(n > M)`.
//!
//! Sojourns up to time `n` are read off backwards as integer lengths, so the
//! occupation measure and its clump decomposition can be compared exactly.

use rand::Rng;
use serde::Serialize;

use crate::chains::{check_probability, switch_and_return_times, ChainPath, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::mccgem::DiscreteMeasure;
use crate::rng::{self, StreamRng};
use crate::stickcore::StickSequence;

/// Generator, cutoff `M`, initial law and horizon.
#[derive(Clone, Debug)]
pub struct InhomSpec {
    g: GeneratorMatrix,
    m: u64,
    pi: Vec<f64>,
    n: usize,
}

/// `ceil(theta_min) + 1`.
pub fn default_cutoff(g: &GeneratorMatrix) -> u64 {
    g.theta_min().ceil() as u64 + 1
}

impl InhomSpec {
    /// `m = None` picks [`default_cutoff`]. Requires `I + G/M >= 0`.
    pub fn new(g: GeneratorMatrix, m: Option<u64>, pi: Vec<f64>, n: usize) -> Result<Self> {
        check_probability(&pi, g.dim())?;
        let m = m.unwrap_or_else(|| default_cutoff(&g));
        if m == 0 {
            return Err(Error::InvalidInput("cutoff M must be a positive integer".into()));
        }
        if (m as f64) < g.theta_min() {
            return Err(Error::InvalidInput(format!(
                "cutoff M = {m} leaves I + G/M with negative entries (needs M >= {})",
                g.theta_min()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput("horizon n must be at least 1".into()));
        }
        Ok(Self { g, m, pi, n })
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.g
    }

    pub fn cutoff(&self) -> u64 {
        self.m
    }

    pub fn init(&self) -> &[f64] {
        &self.pi
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn with_horizon(&self, n: usize) -> Result<Self> {
        Self::new(self.g.clone(), Some(self.m), self.pi.clone(), n)
    }
}

/// Per-state leave rates and cumulative jump rows, shared by the samplers.
struct Stepper {
    rates: Vec<f64>,
    jumps: Vec<Vec<f64>>,
    cutoff: u64,
}

impl Stepper {
    fn new(spec: &InhomSpec) -> Self {
        let g = &spec.g;
        Self {
            rates: (0..g.dim()).map(|i| -g.get(i, i)).collect(),
            jumps: g.jump_kernel().cumulative_rows(),
            cutoff: spec.m,
        }
    }

    /// State at time `time + 1` given state `s` at `time` (1-based time).
    #[inline]
    fn step(&self, s: usize, time: u64, rng: &mut StreamRng) -> usize {
        if time <= self.cutoff {
            return s;
        }
        let rate = self.rates[s];
        let scaled = rng.random::<f64>() * time as f64;
        if scaled < rate {
            rng::pick(&self.jumps[s], scaled / rate)
        } else {
            s
        }
    }
}

/// Samples `T_1, .., T_n`; the move out of time `j` uses `K_j`.
pub fn simulate_inhom_with(spec: &InhomSpec, rng: &mut StreamRng) -> ChainPath {
    let stepper = Stepper::new(spec);
    let mut s = rng::pick(&rng::cumulative(&spec.pi), rng.random());
    let mut states = Vec::with_capacity(spec.n);
    states.push(s);
    for time in 1..spec.n as u64 {
        s = stepper.step(s, time, rng);
        states.push(s);
    }
    ChainPath::from_parts_unchecked(states, spec.g.dim())
}

pub fn simulate_inhom(spec: &InhomSpec, seed: u64) -> ChainPath {
    simulate_inhom_with(spec, &mut rng::stream(seed, 0))
}

/// Visit counts and number of switches of one path, without storing it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OccupationCounts {
    pub counts: Vec<u64>,
    pub switches: u64,
    pub last_state: usize,
}

impl OccupationCounts {
    pub fn measure(&self) -> DiscreteMeasure {
        let total = self.counts.iter().sum();
        DiscreteMeasure::from_counts(&self.counts, total).expect("counts sum to the horizon")
    }
}

/// Same law and random stream as [`simulate_inhom_with`], counts only.
pub fn simulate_counts_with(spec: &InhomSpec, rng: &mut StreamRng) -> OccupationCounts {
    let stepper = Stepper::new(spec);
    let mut counts = vec![0u64; spec.g.dim()];
    let mut switches = 0;
    let mut s = rng::pick(&rng::cumulative(&spec.pi), rng.random());
    counts[s] += 1;
    for time in 1..spec.n as u64 {
        let t = stepper.step(s, time, rng);
        switches += u64::from(t != s);
        s = t;
        counts[s] += 1;
    }
    OccupationCounts {
        counts,
        switches,
        last_state: s,
    }
}

/// Sojourns up to time `n` listed from the most recent backwards.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClumpExtract {
    /// Horizon.
    pub n: u64,
    /// Sojourn lengths `tau_{n,j}`; `P_{n,j} = tau_{n,j} / n`.
    pub taus: Vec<u64>,
    /// State of each sojourn, `Y_{n,j}`.
    pub labels: Vec<usize>,
    /// First index after the last switch up to `n`, so `taus.len() + 1`.
    pub switch_count: usize,
    /// `S_0 = n, S_1, .., S_{N_n - 1} = 0`.
    pub boundaries: Vec<u64>,
    /// Label used past the last sojourn, the first state of the path.
    pub padding_label: usize,
    dim: usize,
}

impl ClumpExtract {
    /// `P_{n,1}, .., P_{n,len}` padded with zeros.
    pub fn weights(&self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|j| self.taus.get(j).map_or(0.0, |&t| t as f64 / self.n as f64))
            .collect()
    }

    /// `Y_{n,1}, .., Y_{n,len}` padded with the first state.
    pub fn labels_padded(&self, len: usize) -> Vec<usize> {
        (0..len)
            .map(|j| self.labels.get(j).copied().unwrap_or(self.padding_label))
            .collect()
    }

    /// Nonzero clump weights as a stick sequence.
    pub fn stick(&self) -> StickSequence {
        StickSequence::from_parts_unchecked(self.weights(self.taus.len()), 0.0)
    }

    /// `X_{n,j} = tau_{n,j} / S_{j-1}`.
    pub fn fractions(&self) -> Vec<f64> {
        self.taus
            .iter()
            .zip(&self.boundaries)
            .map(|(&t, &s)| t as f64 / s as f64)
            .collect()
    }

    /// Integer visit counts per state summed over clumps.
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.dim];
        for (&t, &y) in self.taus.iter().zip(&self.labels) {
            c[y] += t;
        }
        c
    }

    /// Occupation measure rebuilt from the integer clump lengths.
    pub fn measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::from_counts(&self.counts(), self.n).expect("clump lengths sum to n")
    }
}

/// Reads the sojourns of the whole path backwards from its last time.
pub fn reverse_clumps(path: &ChainPath) -> ClumpExtract {
    let n = path.len();
    let v = switch_and_return_times(path).switches;
    let states = path.states();
    let mut taus = Vec::with_capacity(v.len());
    let mut labels = Vec::with_capacity(v.len());
    let mut boundaries = Vec::with_capacity(v.len() + 1);
    let mut end = n;
    boundaries.push(n as u64);
    for &start in v.iter().rev() {
        taus.push((end - start) as u64);
        labels.push(states[start]);
        boundaries.push(start as u64);
        end = start;
    }
    ClumpExtract {
        n: n as u64,
        switch_count: taus.len() + 1,
        taus,
        labels,
        boundaries,
        padding_label: states[0],
        dim: path.dim(),
    }
}

/// `nu_n = (1/n) sum_{j <= n} delta_{T_j}`.
pub fn occupation_measure(path: &ChainPath, n: usize) -> Result<DiscreteMeasure> {
    if n == 0 || n > path.len() {
        return Err(Error::InvalidInput(format!(
            "horizon {n} outside 1..={}",
            path.len()
        )));
    }
    let mut counts = vec![0u64; path.dim()];
    for &s in &path.states()[..n] {
        counts[s] += 1;
    }
    DiscreteMeasure::from_counts(&counts, n as u64)
}

/// `mu^n = pi^T K_1 .. K_n` and `mu^n Q` with `Q = I + G/theta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakErgodic {
    pub mu_n: Vec<f64>,
    pub mu_n_q: Vec<f64>,
    pub theta: f64,
}

fn kernel_step(g: &GeneratorMatrix, mu: &mut [f64], scale: f64) {
    let delta = g.left_apply(mu);
    for (m, d) in mu.iter_mut().zip(delta) {
        *m += d / scale;
    }
}

/// Calls `visit(i, mu^i)` for `i = 1..=n`.
pub fn weak_ergodic_trace(spec: &InhomSpec, n: usize, mut visit: impl FnMut(usize, &[f64])) {
    let mut mu = spec.pi.clone();
    for i in 1..=n {
        if i as u64 > spec.m {
            kernel_step(&spec.g, &mut mu, i as f64);
        }
        visit(i, &mu);
    }
}

/// `theta = None` uses the minimal normalization.
pub fn weak_ergodic_iterate(spec: &InhomSpec, n: usize, theta: Option<f64>) -> Result<WeakErgodic> {
    let theta = theta.unwrap_or_else(|| spec.g.theta_min());
    let mut mu_n = spec.pi.clone();
    weak_ergodic_trace(spec, n, |_, mu| {
        if mu.len() == mu_n.len() {
            mu_n.copy_from_slice(mu);
        }
    });
    let mu_n_q = if theta == 0.0 && spec.g.theta_min() == 0.0 {
        mu_n.clone()
    } else {
        let q = spec.g.to_kernel(theta)?;
        (0..q.dim())
            .map(|j| (0..q.dim()).map(|i| mu_n[i] * q.get(i, j)).sum())
            .collect()
    };
    Ok(WeakErgodic { mu_n, mu_n_q, theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_state() -> GeneratorMatrix {
        GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
    }

    fn worked_path() -> Vec<usize> {
        [1, 1, 1, 6, 6, 1, 3, 3, 3, 5].iter().map(|s| s - 1).collect()
    }

    #[test]
    fn cutoff_validation() {
        assert!(InhomSpec::new(two_state(), Some(1), vec![1.0, 0.0], 10).is_err());
        assert!(InhomSpec::new(two_state(), Some(2), vec![1.0, 0.0], 10).is_ok());
        let s = InhomSpec::new(two_state(), None, vec![1.0, 0.0], 10).unwrap();
        assert_eq!(s.cutoff(), 3);
        assert!(InhomSpec::new(two_state(), Some(2), vec![0.5, 0.4], 10).is_err());
    }

    #[test]
    fn frozen_before_cutoff() {
        let spec = InhomSpec::new(two_state(), Some(50), vec![0.5, 0.5], 50).unwrap();
        for seed in 0..20 {
            let p = simulate_inhom(&spec, seed);
            assert!(p.states().iter().all(|&s| s == p.states()[0]));
        }
    }

    #[test]
    fn counts_walker_matches_path_sampler() {
        let spec = InhomSpec::new(two_state(), Some(2), vec![1.0, 0.0], 5000).unwrap();
        for seed in 0..5 {
            let path = simulate_inhom_with(&spec, &mut rng::stream(seed, 0));
            let c = simulate_counts_with(&spec, &mut rng::stream(seed, 0));
            assert_eq!(occupation_measure(&path, 5000).unwrap(), c.measure());
            let sw = switch_and_return_times(&path).switches.len() as u64 - 1;
            assert_eq!(sw, c.switches);
        }
    }

    #[test]
    fn reverse_clumps_worked_example() {
        let path = ChainPath::new(worked_path(), 6).unwrap();
        let c4 = reverse_clumps(&path.prefix(4).unwrap());
        assert_eq!(c4.weights(3), vec![0.25, 0.75, 0.0]);
        assert_eq!(c4.labels_padded(3), vec![5, 0, 0]);

        let c7 = reverse_clumps(&path.prefix(7).unwrap());
        assert_eq!(c7.taus, vec![1, 1, 2, 3]);
        assert_eq!(
            c7.weights(5),
            vec![1.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0, 3.0 / 7.0, 0.0]
        );
        assert_eq!(c7.labels_padded(5), vec![2, 0, 5, 0, 0]);
        assert_eq!(c7.switch_count, 5);
        assert_eq!(c7.boundaries, vec![7, 6, 5, 3, 0]);
        assert_eq!(c7.fractions(), vec![1.0 / 7.0, 1.0 / 6.0, 0.4, 1.0]);
    }

    #[test]
    fn occupation_of_worked_path() {
        let path = ChainPath::new(worked_path(), 6).unwrap();
        let nu = occupation_measure(&path, 7).unwrap();
        assert_eq!(nu.masses, vec![4.0 / 7.0, 0.0, 1.0 / 7.0, 0.0, 0.0, 2.0 / 7.0]);
        assert!(occupation_measure(&path, 11).is_err());
        assert!(occupation_measure(&path, 0).is_err());
    }

    #[test]
    fn constant_path_is_single_clump() {
        let path = ChainPath::new(vec![2; 9], 3).unwrap();
        let c = reverse_clumps(&path);
        assert_eq!(c.weights(3), vec![1.0, 0.0, 0.0]);
        assert_eq!(c.labels_padded(3), vec![2, 2, 2]);
        assert_eq!(c.measure(), DiscreteMeasure::point_mass(2, 3).unwrap());
    }

    #[test]
    fn weak_ergodic_examples() {
        let spec = InhomSpec::new(two_state(), Some(2), vec![0.0, 1.0], 1).unwrap();
        let w = weak_ergodic_iterate(&spec, 2, None).unwrap();
        assert_eq!(w.mu_n, vec![0.0, 1.0]);
        let w = weak_ergodic_iterate(&spec, 10_000, None).unwrap();
        assert!((w.mu_n[0] - 2.0 / 3.0).abs() + (w.mu_n[1] - 1.0 / 3.0).abs() < 1e-2);

        let spec = InhomSpec::new(two_state(), Some(2), vec![2.0 / 3.0, 1.0 / 3.0], 1).unwrap();
        let w = weak_ergodic_iterate(&spec, 1000, None).unwrap();
        assert_abs_diff_eq!(w.mu_n[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.mu_n_q[0], 2.0 / 3.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn clumps_rebuild_occupation(states in proptest::collection::vec(0usize..4, 1..200)) {
            let path = ChainPath::new(states, 4).unwrap();
            let c = reverse_clumps(&path);
            prop_assert_eq!(c.taus.iter().sum::<u64>(), path.len() as u64);
            let direct = occupation_measure(&path, path.len()).unwrap();
            prop_assert_eq!(&c.measure(), &direct);
            let assembled = crate::mccgem::assemble_measure(&c.stick(), &c.labels, 4).unwrap();
            for (a, b) in assembled.masses.iter().zip(&direct.masses) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}

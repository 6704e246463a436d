//! The acceptance suite, shared by the `accept` subcommand and the
//! `acceptance` test target.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::chains::{reverse_generator, stationary_distribution, GeneratorMatrix, StochasticKernel};
use crate::error::{Error, Result};
use crate::inhom::{
    occupation_measure, reverse_clumps, simulate_counts_with, simulate_inhom_with, InhomSpec,
};
use crate::mccgem::{assemble_measure, sample_stick_breaking_with};
use crate::moments::{dirichlet_moment, multi_indices, MomentEngine};
use crate::numeric::multinomial;
use crate::rng::{self, StreamRng};
use crate::stats::{
    clumped_fraction_beta_check, estimates_agree, gem2_clump_covariance, ks_two_sample, run_replicates,
    self_similarity_check, McEstimate, SelfSimSpec, ALPHA_REPORT, GEM2_HALF_COVARIANCE,
};
use crate::stickcore::{FractionLaw, DEFAULT_EPS};

pub const DEFAULT_SEED: u64 = 20_171_003;

/// One line of the acceptance report.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed_secs: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} {:<32} {} ({:.2}s) {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.elapsed_secs,
            self.detail
        )
    }
}

type Check = fn(u64) -> Result<(bool, String)>;

/// `(id, name, check, time limit in seconds)`.
pub const CRITERIA: [(u32, &str, Check, Option<f64>); 13] = [
    (1, "clump covariance", covariance, Some(1.0)),
    (2, "dirichlet collapse", dirichlet_collapse, Some(1.0)),
    (3, "resolvent identity", resolvent_identity, Some(1.0)),
    (4, "duality", duality, None),
    (5, "marginal pochhammer product", marginal_product, None),
    (6, "normalization", normalization, None),
    (7, "exact clump decomposition", clump_decomposition, None),
    (
        8,
        "occupation-law convergence",
        occupation_convergence,
        Some(120.0),
    ),
    (9, "stick-breaking to occupation", reverse_direction, None),
    (10, "conditional beta law", conditional_beta, None),
    (11, "self-similarity", self_similarity, None),
    (12, "weak ergodicity", weak_ergodicity, None),
    (13, "reversal algebra", reversal_algebra, None),
];

pub fn run_criterion(id: u32, seed: u64) -> Result<CriterionResult> {
    let (id, name, check, limit) = CRITERIA
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .ok_or_else(|| Error::InvalidInput(format!("no criterion {id}")))?;
    let start = Instant::now();
    let outcome = check(seed);
    let elapsed_secs = start.elapsed().as_secs_f64();
    let (mut pass, mut detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(limit) = limit {
        if elapsed_secs >= limit {
            pass = false;
            detail.push_str(&format!("; exceeded {limit}s budget"));
        }
    }
    Ok(CriterionResult {
        id,
        name,
        pass,
        detail,
        elapsed_secs,
    })
}

pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|c| run_criterion(c.0, seed).expect("criterion ids come from the table"))
        .collect()
}

/// Generator with off-diagonal rates uniform on `[0.1, 3)`, each set to zero
/// with probability `zero_prob`.
pub fn random_generator(k: usize, zero_prob: f64, rng: &mut StreamRng) -> GeneratorMatrix {
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j && rng.random::<f64>() >= zero_prob {
                m[(i, j)] = rng.random_range(0.1..3.0);
            }
        }
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = -off;
    }
    GeneratorMatrix::from_matrix(m).expect("construction keeps the generator conditions")
}

/// `theta (Q - I)` with every row of `Q` equal to `mu`.
pub fn dirichlet_generator(theta: f64, mu: &[f64]) -> Result<GeneratorMatrix> {
    GeneratorMatrix::from_kernel(&StochasticKernel::constant_rows(mu)?, theta)
}

pub fn two_state() -> GeneratorMatrix {
    GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).expect("valid generator")
}

pub fn three_cycle() -> GeneratorMatrix {
    GeneratorMatrix::new(&[vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0]])
        .expect("valid generator")
}

/// Small fixed set of admissible generators used by the exact checks.
fn test_generators(seed: u64) -> Result<Vec<GeneratorMatrix>> {
    let mut out = vec![
        two_state(),
        three_cycle(),
        dirichlet_generator(6.0, &[0.5, 1.0 / 3.0, 1.0 / 6.0])?,
        GeneratorMatrix::new(&[vec![-3.0, 1.0, 2.0], vec![0.5, -1.0, 0.5], vec![1.0, 1.0, -2.0]])?,
    ];
    let mut rng = rng::stream(seed, 1);
    for k in [2, 3, 4] {
        out.push(random_generator(k, 0.0, &mut rng));
    }
    Ok(out)
}

fn covariance(_seed: u64) -> Result<(bool, String)> {
    let c = gem2_clump_covariance(0.5, 200)?;
    let err = (c.cov - GEM2_HALF_COVARIANCE).abs();
    Ok((
        err < 1e-4,
        format!("cov = {:.10}, |cov + 0.005391| = {err:.2e}", c.cov),
    ))
}

fn dirichlet_collapse(_seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (theta, mu) in [
        (3.0, vec![2.0 / 3.0, 1.0 / 3.0]),
        (6.0, vec![0.5, 1.0 / 3.0, 1.0 / 6.0]),
    ] {
        let e = MomentEngine::new(&dirichlet_generator(theta, &mu)?)?;
        for n in 1..=6 {
            for m in multi_indices(mu.len(), n) {
                let diff = (e.joint_moment(&m)? - dirichlet_moment(theta, &mu, &m)).abs();
                worst = worst.max(diff);
            }
        }
    }
    Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
}

fn resolvent_identity(seed: u64) -> Result<(bool, String)> {
    let mut rng = rng::stream(seed, 3);
    let mut worst = 0.0f64;
    let mut worst_zero = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(2..=6);
        let g = random_generator(k, 0.0, &mut rng);
        let e = MomentEngine::new(&g)?;
        let id = DMatrix::<f64>::identity(k, k);
        for j in 1..=50u32 {
            let direct = (&id - g.as_matrix() / j as f64)
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("I - G/{j}")))?;
            worst = worst.max((e.kernel_matrix(j)? - direct).amax());
        }
        let k0 = e.kernel_matrix(0)?;
        for r in 0..k {
            for c in 0..k {
                worst_zero = worst_zero.max((k0[(r, c)] - e.stationary()[c]).abs());
            }
        }
    }
    Ok((
        worst <= 1e-10 && worst_zero <= 1e-10,
        format!("max |K_j - inverse| = {worst:.2e}, max |K_0 - mu| = {worst_zero:.2e}"),
    ))
}

/// Distribution of visit counts of the dual chain over its first `n` steps,
/// by enumerating every path.
fn dual_path_counts(e: &MomentEngine, n: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let k = e.dim();
    let kernels: Vec<_> = (1..n as u32).map(|j| e.kernel_matrix(j)).collect::<Result<_>>()?;
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut path = vec![0usize; n];
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % k;
            c /= k;
        }
        let mut p = e.stationary()[path[0]];
        for j in 1..n {
            p *= kernels[j - 1][(path[j - 1], path[j])];
        }
        let mut counts = vec![0usize; k];
        for &s in &path {
            counts[s] += 1;
        }
        match out.iter_mut().find(|(m, _)| *m == counts) {
            Some(entry) => entry.1 += p,
            None => out.push((counts, p)),
        }
    }
    Ok(out)
}

fn duality(seed: u64) -> Result<(bool, String)> {
    let mut worst_diag = 0.0f64;
    let mut worst_paths = 0.0f64;
    for g in test_generators(seed)? {
        let e = MomentEngine::new(&g)?;
        for i in 0..e.dim() {
            for n in 1..=8usize {
                let mut m = vec![0; e.dim()];
                m[i] = n;
                let diff = (e.joint_moment(&m)? - e.duality_moment(i, n as u32)?).abs();
                worst_diag = worst_diag.max(diff);
            }
        }
        if e.dim() <= 3 {
            for n in 1..=5 {
                for (m, p) in dual_path_counts(&e, n)? {
                    let diff = (e.joint_moment(&m)? - p / multinomial(&m)).abs();
                    worst_paths = worst_paths.max(diff);
                }
            }
        }
    }
    Ok((
        worst_diag <= 1e-10 && worst_paths <= 1e-10,
        format!("diagonal {worst_diag:.2e}, path enumeration {worst_paths:.2e}"),
    ))
}

fn marginal_product(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for g in test_generators(seed)? {
        let e = MomentEngine::new(&g)?;
        for i in 0..e.dim() {
            for n in 1..=8usize {
                let mut m = vec![0; e.dim()];
                m[i] = n;
                worst = worst.max((e.marginal_moment(i, n as u32)? - e.joint_moment(&m)?).abs());
            }
        }
    }
    let cyc = MomentEngine::new(&three_cycle())?;
    let second = cyc.marginal_moment(0, 2)?;
    let cyc_err = (second - 4.0 / 21.0).abs();
    Ok((
        worst <= 1e-8 && cyc_err <= 1e-10,
        format!("max deviation {worst:.2e}; 3-cycle E[nu_1^2] = {second:.12}"),
    ))
}

fn normalization(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for g in test_generators(seed)?.into_iter().filter(|g| g.dim() <= 4) {
        let e = MomentEngine::new(&g)?;
        for n in 1..=6 {
            let mut total = 0.0;
            for m in multi_indices(e.dim(), n) {
                total += multinomial(&m) * e.joint_moment(&m)?;
            }
            worst = worst.max((total - 1.0).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max |sum - 1| = {worst:.2e}")))
}

fn clump_decomposition(seed: u64) -> Result<(bool, String)> {
    let specs = [
        InhomSpec::new(two_state(), Some(2), vec![1.0, 0.0], 10_000)?,
        InhomSpec::new(three_cycle(), Some(2), vec![1.0, 0.0, 0.0], 10_000)?,
    ];
    let mut worst = 0.0f64;
    let mut exact = true;
    for r in 0..100u64 {
        let spec = &specs[(r % 2) as usize];
        let path = simulate_inhom_with(spec, &mut rng::stream(seed, r));
        let clumps = reverse_clumps(&path);
        let direct = occupation_measure(&path, path.len())?;
        exact &= clumps.measure() == direct;
        let assembled = assemble_measure(&clumps.stick(), &clumps.labels, path.dim())?;
        for (a, b) in assembled.masses.iter().zip(&direct.masses) {
            worst = worst.max((a - b).abs());
        }
    }

    // worked example, in 1-based labels
    let t: Vec<usize> = [1, 1, 1, 6, 6, 1, 3, 3, 3, 5].iter().map(|s| s - 1).collect();
    let path = crate::chains::ChainPath::new(t, 6)?;
    let c4 = reverse_clumps(&path.prefix(4)?);
    let c7 = reverse_clumps(&path.prefix(7)?);
    let labels = |c: &crate::inhom::ClumpExtract, n| -> Vec<usize> {
        c.labels_padded(n).iter().map(|s| s + 1).collect()
    };
    let example = c4.weights(6) == [0.25, 0.75, 0.0, 0.0, 0.0, 0.0]
        && labels(&c4, 4) == [6, 1, 1, 1]
        && c7.taus == [1, 1, 2, 3]
        && c7.weights(6) == [1.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0, 3.0 / 7.0, 0.0, 0.0]
        && labels(&c7, 6) == [3, 1, 6, 1, 1, 1];
    Ok((
        exact && worst <= 1e-15 && example,
        format!("integer counts exact: {exact}, float gap {worst:.1e}, worked example: {example}"),
    ))
}

/// Occupation masses at `state` over replicated inhomogeneous runs, and the
/// same coordinate under the stick-breaking measure with GEM(theta) weights
/// and labels from `I + G'/theta` started at the stationary law.
struct OccupationSamples {
    occupation: Vec<Vec<f64>>,
    stick: Vec<Vec<f64>>,
}

fn occupation_samples(
    g: &GeneratorMatrix,
    cutoff: Option<u64>,
    pi: Vec<f64>,
    theta: f64,
    replicates: u64,
    n: usize,
    seed: u64,
) -> Result<OccupationSamples> {
    let spec = InhomSpec::new(g.clone(), cutoff, pi, n)?;
    let occupation = run_replicates(replicates, seed, |rng| {
        Ok(simulate_counts_with(&spec, rng).measure().masses)
    })?;
    let mu = stationary_distribution(g)?.unique()?.to_vec();
    let q_rev = reverse_generator(g, &mu)?.to_kernel(theta)?;
    // a separate seed family keeps the two sides independent
    let stick = run_replicates(replicates, seed ^ 0x5eed_5eed, |rng| {
        Ok(sample_stick_breaking_with(theta, &q_rev, &mu, DEFAULT_EPS, rng)?.masses)
    })?;
    Ok(OccupationSamples { occupation, stick })
}

fn coordinate(samples: &[Vec<f64>], i: usize, power: i32) -> Vec<f64> {
    samples.iter().map(|m| m[i].powi(power)).collect()
}

fn occupation_convergence(seed: u64) -> Result<(bool, String)> {
    let mut pass = true;
    let mut notes = Vec::new();
    for (label, g, pi) in [
        ("two-state", two_state(), vec![1.0, 0.0]),
        ("3-cycle", three_cycle(), vec![1.0, 0.0, 0.0]),
    ] {
        let e = MomentEngine::new(&g)?;
        let mut m1 = vec![0; g.dim()];
        m1[0] = 1;
        let mut m2 = vec![0; g.dim()];
        m2[0] = 2;
        let (t1, t2) = (e.joint_moment(&m1)?, e.joint_moment(&m2)?);
        let s = occupation_samples(&g, Some(2), pi, 3.0, 2000, 100_000, seed)?;
        let first = McEstimate::from_samples(&coordinate(&s.occupation, 0, 1), seed)?;
        let second = McEstimate::from_samples(&coordinate(&s.occupation, 0, 2), seed)?;
        let ks = ks_two_sample(&coordinate(&s.occupation, 0, 1), &coordinate(&s.stick, 0, 1))?;
        let ok = first.agrees_with(t1) && second.agrees_with(t2) && ks.p_value >= ALPHA_REPORT;
        pass &= ok;
        notes.push(format!(
            "{label}: E[nu1] {:.4}±{:.4} vs {t1:.4}, E[nu1^2] {:.4}±{:.4} vs {t2:.4}, KS p {:.3}",
            first.value, first.stderr, second.value, second.stderr, ks.p_value
        ));
    }
    Ok((pass, notes.join("; ")))
}

fn reverse_direction(seed: u64) -> Result<(bool, String)> {
    let theta = 2.0;
    let q = StochasticKernel::new(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.4, 0.1, 0.5]])?;
    let g = GeneratorMatrix::from_kernel(&q, theta)?;
    let mu = stationary_distribution(&g)?.unique()?.to_vec();
    let g_rev = reverse_generator(&g, &mu)?;
    let e = MomentEngine::new(&g_rev)?;
    // reversing twice gives back q, so the stick side uses q itself
    let s = occupation_samples(&g_rev, None, vec![1.0, 0.0, 0.0], theta, 2000, 100_000, seed)?;
    let mut pass = true;
    let mut notes = Vec::new();
    for i in 0..3 {
        for power in [1, 2] {
            let occ = McEstimate::from_samples(&coordinate(&s.occupation, i, power), seed)?;
            let stick = McEstimate::from_samples(&coordinate(&s.stick, i, power), seed)?;
            let mut m = vec![0; 3];
            m[i] = power as usize;
            let exact = e.joint_moment(&m)?;
            let ok = estimates_agree(&occ, &stick) && occ.agrees_with(exact) && stick.agrees_with(exact);
            pass &= ok;
            notes.push(format!(
                "E[nu{}^{power}] occ {:.4} stick {:.4} exact {exact:.4}",
                i + 1,
                occ.value,
                stick.value
            ));
        }
    }
    Ok((pass, notes.join(", ")))
}

fn conditional_beta(seed: u64) -> Result<(bool, String)> {
    let configs = [
        (2.0, StochasticKernel::new(&[vec![0.5, 0.5], vec![0.5, 0.5]])?, 0),
        (1.0, StochasticKernel::new(&[vec![0.9, 0.1], vec![0.1, 0.9]])?, 0),
        (
            1.5,
            StochasticKernel::new(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.2, 0.2], vec![0.1, 0.7, 0.2]])?,
            1,
        ),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (n, (theta, q, y)) in configs.iter().enumerate() {
        let r = clumped_fraction_beta_check(*theta, q, *y, 10_000, seed.wrapping_add(n as u64))?;
        pass &= r.pass;
        notes.push(format!("D {:.4} p {:.3}", r.statistic, r.p_value));
    }
    Ok((pass, notes.join(", ")))
}

fn self_similarity(seed: u64) -> Result<(bool, String)> {
    let specs = [
        SelfSimSpec {
            law: FractionLaw::Gem { theta: 1.0 },
            kernel: StochasticKernel::constant_rows(&[0.4, 0.6])?,
            start: 0,
            eps: DEFAULT_EPS,
            replicates: 10_000,
            seed,
        },
        SelfSimSpec {
            law: FractionLaw::Gem { theta: 2.0 },
            kernel: StochasticKernel::new(&[vec![0.5, 0.5], vec![0.25, 0.75]])?,
            start: 0,
            eps: DEFAULT_EPS,
            replicates: 10_000,
            seed: seed.wrapping_add(1),
        },
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for spec in &specs {
        let r = self_similarity_check(spec)?;
        pass &= r.pass;
        notes.push(format!(
            "max D {:.4} min p {:.3} pass {}",
            r.statistic, r.p_value, r.pass
        ));
    }
    Ok((pass, notes.join("; ")))
}

fn weak_ergodicity(_seed: u64) -> Result<(bool, String)> {
    let spec = InhomSpec::new(two_state(), Some(2), vec![0.0, 1.0], 10_000)?;
    let mu = [2.0 / 3.0, 1.0 / 3.0];
    let mut gaps = Vec::with_capacity(10_000);
    crate::inhom::weak_ergodic_trace(&spec, 10_000, |_, v| {
        gaps.push((v[0] - mu[0]).abs() + (v[1] - mu[1]).abs());
    });
    let last = *gaps.last().expect("nonempty trace");
    // gaps[i] belongs to time i + 1
    let monotone = gaps[99..].windows(2).all(|w| w[1] <= w[0] + 1e-15);
    Ok((
        last < 1e-2 && monotone,
        format!("|mu^n - mu|_1 at n = 10^4: {last:.2e}, non-increasing from n = 100: {monotone}"),
    ))
}

fn reversal_algebra(seed: u64) -> Result<(bool, String)> {
    let mut rng = rng::stream(seed, 13);
    let mut worst_twice = 0.0f64;
    let mut worst_stat = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(2..=6);
        let g = random_generator(k, 0.3, &mut rng);
        let mu = stationary_distribution(&g)?.extremes[0].clone();
        let g1 = reverse_generator(&g, &mu)?;
        let g2 = reverse_generator(&g1, &mu)?;
        for i in 0..k {
            for j in 0..k {
                if mu[i] > 0.0 && mu[j] > 0.0 {
                    worst_twice = worst_twice.max((g2.get(i, j) - g.get(i, j)).abs());
                }
            }
        }
        for v in g1.left_apply(&mu) {
            worst_stat = worst_stat.max(v.abs());
        }
    }
    Ok((
        worst_twice <= 1e-12 && worst_stat <= 1e-10,
        format!("|G'' - G| {worst_twice:.2e}, |mu G'| {worst_stat:.2e}"),
    ))
}

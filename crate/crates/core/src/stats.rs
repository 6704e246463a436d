//! Monte Carlo estimators, Kolmogorov-Smirnov tests and the distributional
//! checks built on them.
//!
//! Replicate `r` of a run seeded with `seed` always draws from
//! `rng::stream(seed, r)`, so reports do not depend on thread scheduling.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::chains::StochasticKernel;
use crate::error::{Error, Result};
use crate::mccgem::{assemble_measure, DiscreteMeasure};
use crate::numeric::mean_stderr;
use crate::rng::{self, StreamRng};
use crate::stickcore::{check_eps, FractionLaw, StickBuilder, MAX_STICK_LEN};

/// Significance level for single assertions.
pub const ALPHA_STRICT: f64 = 0.001;
/// Significance level for exploratory multi-coordinate reports.
pub const ALPHA_REPORT: f64 = 0.01;
/// Moment agreement is asserted within this many standard errors.
pub const STDERR_MULTIPLE: f64 = 4.0;
/// Longest return cycle simulated before giving up.
pub const CYCLE_CAP: usize = 1_000_000;
/// Fewest samples a one-sample check accepts.
pub const MIN_SAMPLES: u64 = 100;

/// Runs `f` once per replicate on its own stream, results in replicate order.
pub fn run_replicates<T, F>(replicates: u64, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut StreamRng) -> Result<T> + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            f(&mut rng::stream(seed, r)).map_err(|e| Error::Replicate {
                replicate: r,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Mean and standard error of a functional over seeded replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub replicates: u64,
    pub seed_base: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed_base: u64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("need at least two replicates".into()));
        }
        let (value, stderr) = mean_stderr(samples);
        Ok(Self {
            value,
            stderr,
            replicates: samples.len() as u64,
            seed_base,
        })
    }

    /// `|value - target| <= 4 stderr`.
    pub fn agrees_with(&self, target: f64) -> bool {
        (self.value - target).abs() <= STDERR_MULTIPLE * self.stderr
    }
}

pub fn mc_estimate<S, F>(sampler: S, functional: F, replicates: u64, seed_base: u64) -> Result<McEstimate>
where
    S: Fn(&mut StreamRng) -> Result<DiscreteMeasure> + Sync,
    F: Fn(&DiscreteMeasure) -> f64 + Sync,
{
    if replicates < 2 {
        return Err(Error::InvalidInput("need at least two replicates".into()));
    }
    let values = run_replicates(replicates, seed_base, |rng| sampler(rng).map(|m| functional(&m)))?;
    McEstimate::from_samples(&values, seed_base)
}

/// Difference of two estimates measured in combined standard errors.
pub fn estimates_agree(a: &McEstimate, b: &McEstimate) -> bool {
    let se = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
    (a.value - b.value).abs() <= STDERR_MULTIPLE * se
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small lambda
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|j| (((2 * j - 1) * (2 * j - 1)) as f64 * c).exp())
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value for statistic `d` at effective size `ne`.
fn ks_p_value(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("samples contain NaN".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("KS test needs two nonempty samples".into()));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    })
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("KS test needs a nonempty sample".into()));
    }
    let s = sorted(samples)?;
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// Outcome of a statistical check, as written to disk by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub params: serde_json::Value,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    pub seed: u64,
    pub details: serde_json::Value,
}

/// Samples `ln(1 - X^V_1)` for GEM(theta) weights clumped along a chain
/// from `q` started at `y`, and tests it against Beta(1, theta (1 - Q_yy)).
///
/// Working with the log complement keeps fractions close to one resolvable.
pub fn clumped_fraction_beta_check(
    theta: f64,
    q: &StochasticKernel,
    y: usize,
    replicates: u64,
    seed: u64,
) -> Result<CheckReport> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidLaw(format!("theta must be positive, got {theta}")));
    }
    if y >= q.dim() {
        return Err(Error::StateOutOfRange {
            state: y,
            dim: q.dim(),
        });
    }
    if q.get(y, y) >= 1.0 {
        return Err(Error::InvalidInput(format!("state {} is absorbing", y + 1)));
    }
    if replicates < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "{replicates} conditional samples, at least {MIN_SAMPLES} needed"
        )));
    }
    let cum = rng::cumulative(&q.row(y));
    let samples = run_replicates(replicates, seed, |rng| {
        let mut ln_comp = 0.0;
        for _ in 0..CYCLE_CAP {
            ln_comp += rng::beta_one(theta, rng).ln_complement;
            if rng::pick(&cum, rng.random()) != y {
                return Ok(ln_comp);
            }
        }
        Err(Error::CycleCap(CYCLE_CAP))
    })?;
    let b = theta * (1.0 - q.get(y, y));
    let ks = ks_one_sample(&samples, |l| (b * l).exp().min(1.0))?;
    Ok(CheckReport {
        check: "clumped_fraction_beta".into(),
        params: json!({
            "theta": theta,
            "kernel": q.rows(),
            "state": y + 1,
            "replicates": replicates,
            "beta_b": b,
            "alpha": ALPHA_STRICT,
        }),
        statistic: ks.statistic,
        p_value: ks.p_value,
        pass: ks.p_value >= ALPHA_STRICT,
        seed,
        details: json!({ "samples": samples.len() }),
    })
}

/// Setup for the self-similarity comparison.
#[derive(Clone, Debug)]
pub struct SelfSimSpec {
    pub law: FractionLaw,
    pub kernel: StochasticKernel,
    pub start: usize,
    pub eps: f64,
    pub replicates: u64,
    pub seed: u64,
}

impl SelfSimSpec {
    fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if !self.law.is_iid() {
            return Err(Error::InvalidLaw("self-similarity needs iid fractions".into()));
        }
        check_eps(self.eps, false)?;
        if self.start >= self.kernel.dim() {
            return Err(Error::StateOutOfRange {
                state: self.start,
                dim: self.kernel.dim(),
            });
        }
        if !self.kernel.recurrent_states().contains(&self.start) {
            return Err(Error::InvalidInput(format!(
                "start state {} is not recurrent",
                self.start + 1
            )));
        }
        if self.replicates < 2 {
            return Err(Error::InvalidInput("need at least two replicates".into()));
        }
        Ok(())
    }
}

/// `sum_j P_j delta_{T_j}` with `T_1 = start`, truncated at `eps`.
fn direct_draw(
    law: &FractionLaw,
    cum: &[Vec<f64>],
    start: usize,
    eps: f64,
    rng: &mut StreamRng,
) -> Result<DiscreteMeasure> {
    let mut builder = StickBuilder::new(eps);
    let mut labels = Vec::new();
    let mut t = start;
    loop {
        if builder.len() >= MAX_STICK_LEN {
            return Err(Error::TruncationCap(MAX_STICK_LEN));
        }
        labels.push(t);
        if !builder.push(&law.draw(builder.len(), rng)?) {
            break;
        }
        t = rng::pick(&cum[t], rng.random());
    }
    assemble_measure(&builder.finish(), &labels, cum.len())
}

/// `X^i eta^i + (1 - X^i) nu~`: one return cycle from `start`, then a fresh
/// independent direct draw scaled into the remaining mass.
fn composite_draw(
    law: &FractionLaw,
    cum: &[Vec<f64>],
    start: usize,
    eps: f64,
    rng: &mut StreamRng,
) -> Result<DiscreteMeasure> {
    let mut masses = vec![0.0; cum.len()];
    let mut remainder = 1.0;
    let mut t = start;
    let mut steps = 0;
    loop {
        if steps >= CYCLE_CAP {
            return Err(Error::CycleCap(CYCLE_CAP));
        }
        let d = law.draw(steps, rng)?;
        masses[t] += d.value * remainder;
        remainder *= d.complement;
        steps += 1;
        t = rng::pick(&cum[t], rng.random());
        if t == start {
            break;
        }
    }
    let fresh = direct_draw(law, cum, start, eps, rng)?;
    for (m, f) in masses.iter_mut().zip(&fresh.masses) {
        *m += remainder * f;
    }
    Ok(DiscreteMeasure {
        masses,
        deficit: remainder * fresh.deficit,
    })
}

/// Compares the direct law of `nu^i` with the one-cycle composite through
/// per-state means, second moments and KS tests.
pub fn self_similarity_check(spec: &SelfSimSpec) -> Result<CheckReport> {
    spec.validate()?;
    let cum = spec.kernel.cumulative_rows();
    let k = spec.kernel.dim();
    let r = spec.replicates;
    let direct = run_replicates(r, spec.seed, |rng| {
        direct_draw(&spec.law, &cum, spec.start, spec.eps, rng)
    })?;
    // the composite side uses streams r..2r so the two sides are independent
    let composite: Vec<DiscreteMeasure> = (r..2 * r)
        .into_par_iter()
        .map(|stream| {
            composite_draw(
                &spec.law,
                &cum,
                spec.start,
                spec.eps,
                &mut rng::stream(spec.seed, stream),
            )
            .map_err(|e| Error::Replicate {
                replicate: stream,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut pass = true;
    let mut max_stat = 0.0f64;
    let mut min_p = 1.0f64;
    let mut per_state = Vec::with_capacity(k);
    for l in 0..k {
        let a: Vec<f64> = direct.iter().map(|m| m.masses[l]).collect();
        let b: Vec<f64> = composite.iter().map(|m| m.masses[l]).collect();
        let a2: Vec<f64> = a.iter().map(|v| v * v).collect();
        let b2: Vec<f64> = b.iter().map(|v| v * v).collect();
        let m1 = (
            McEstimate::from_samples(&a, spec.seed)?,
            McEstimate::from_samples(&b, spec.seed)?,
        );
        let m2 = (
            McEstimate::from_samples(&a2, spec.seed)?,
            McEstimate::from_samples(&b2, spec.seed)?,
        );
        let ks = ks_two_sample(&a, &b)?;
        let ok1 = estimates_agree(&m1.0, &m1.1);
        let ok2 = estimates_agree(&m2.0, &m2.1);
        let ok_ks = ks.p_value >= ALPHA_REPORT;
        pass &= ok1 && ok2 && ok_ks;
        max_stat = max_stat.max(ks.statistic);
        min_p = min_p.min(ks.p_value);
        per_state.push(json!({
            "state": l + 1,
            "mean_direct": m1.0, "mean_composite": m1.1, "mean_ok": ok1,
            "second_direct": m2.0, "second_composite": m2.1, "second_ok": ok2,
            "ks": ks, "ks_ok": ok_ks,
        }));
    }
    Ok(CheckReport {
        check: "self_similarity".into(),
        params: json!({
            "law": spec.law,
            "kernel": spec.kernel.rows(),
            "start": spec.start + 1,
            "eps": spec.eps,
            "replicates": r,
            "alpha": ALPHA_REPORT,
        }),
        statistic: max_stat,
        p_value: min_p,
        pass,
        seed: spec.seed,
        details: json!({ "states": per_state }),
    })
}

/// Two-sample KS between the first two return-cycle clumped fractions,
/// compared on the `ln(1 - X)` scale.
pub fn return_fraction_check(
    law: &FractionLaw,
    q: &StochasticKernel,
    start: usize,
    replicates: u64,
    seed: u64,
) -> Result<CheckReport> {
    law.validate()?;
    if !law.is_iid() {
        return Err(Error::InvalidLaw(
            "return-cycle clumping needs iid fractions".into(),
        ));
    }
    if start >= q.dim() || !q.recurrent_states().contains(&start) {
        return Err(Error::InvalidInput(format!(
            "start state {} is not recurrent",
            start + 1
        )));
    }
    let cum = q.cumulative_rows();
    let pairs = run_replicates(replicates, seed, |rng| {
        let mut out = [0.0f64; 2];
        let mut t = start;
        let mut index = 0;
        for slot in &mut out {
            let mut steps = 0;
            loop {
                if steps >= CYCLE_CAP {
                    return Err(Error::CycleCap(CYCLE_CAP));
                }
                *slot += law.draw(index, rng)?.ln_complement;
                index += 1;
                steps += 1;
                t = rng::pick(&cum[t], rng.random());
                if t == start {
                    break;
                }
            }
        }
        Ok(out)
    })?;
    let first: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
    let second: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
    let ks = ks_two_sample(&first, &second)?;
    Ok(CheckReport {
        check: "return_fraction_exchangeability".into(),
        params: json!({
            "law": law,
            "kernel": q.rows(),
            "start": start + 1,
            "replicates": replicates,
            "alpha": ALPHA_STRICT,
        }),
        statistic: ks.statistic,
        p_value: ks.p_value,
        pass: ks.p_value >= ALPHA_STRICT,
        seed,
        details: serde_json::Value::Null,
    })
}

/// Series for the two clumped fractions of GEM(1/2, 1) weights along an iid
/// two-state chain that stays put with probability `p_stay`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClumpCovariance {
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
    pub cov: f64,
    /// Bound on the error from stopping each series after `terms` terms.
    pub truncation_bound: f64,
    pub terms: usize,
}

/// Reference value of the covariance at `p_stay = 1/2`, six decimals.
pub const GEM2_HALF_COVARIANCE: f64 = -0.005391;

/// Block lengths are geometric with `P(m) = p^(m-1) (1 - p)`, which is
/// `(1/2)^m` at `p = 1/2`.
pub fn gem2_clump_covariance(p_stay: f64, terms: usize) -> Result<ClumpCovariance> {
    if !(p_stay > 0.0 && p_stay < 1.0) {
        return Err(Error::InvalidInput(format!("p_stay = {p_stay} not in (0, 1)")));
    }
    if terms == 0 {
        return Err(Error::InvalidInput("terms must be at least 1".into()));
    }
    let w: Vec<f64> = (1..=terms)
        .map(|m| p_stay.powi(m as i32 - 1) * (1.0 - p_stay))
        .collect();
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    let mut e12 = 0.0;
    for (mi, &wm) in w.iter().enumerate() {
        let m = (mi + 1) as f64;
        e1 += 3.0 / (3.0 + m) * wm;
        for (ni, &wn) in w.iter().enumerate() {
            let n = (ni + 1) as f64;
            e2 += (3.0 + m) / (3.0 + m + n) * wm * wn;
            e12 += 3.0 / (3.0 + m + n) * wm * wn;
        }
    }
    let tail = p_stay.powi(terms as i32);
    Ok(ClumpCovariance {
        e1,
        e2,
        e12,
        cov: e12 - e1 * e2,
        truncation_bound: 5.0 * tail,
        terms,
    })
}

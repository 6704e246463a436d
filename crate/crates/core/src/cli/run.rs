//! Command execution and artifact writing.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use serde_json::{json, Value};

use super::config::*;
use super::{Params, RunConfig};
use crate::acceptance::{run_criterion, CRITERIA};
use crate::chains::{stationary_distribution, ChainPath, GeneratorMatrix, StochasticKernel};
use crate::error::{Error, Result};
use crate::inhom::{
    occupation_measure, reverse_clumps, simulate_counts_with, simulate_inhom_with, InhomSpec,
};
use crate::mccgem::{sample_mccgem_with, DiscreteMeasure};
use crate::moments::MomentEngine;
use crate::numeric::mean_stderr;
use crate::stats::{
    clumped_fraction_beta_check, gem2_clump_covariance, return_fraction_check, run_replicates,
    self_similarity_check, CheckReport, SelfSimSpec, GEM2_HALF_COVARIANCE,
};
use crate::stickcore::{sample_stick_with, DEFAULT_EPS};

/// What a command produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    /// `Some` for commands that test something.
    pub pass: Option<bool>,
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
}

impl Outcome {
    pub fn exit_code(&self) -> ExitCode {
        match self.pass {
            Some(false) => ExitCode::from(2),
            _ => ExitCode::SUCCESS,
        }
    }
}

struct Artifacts<'a> {
    cfg: &'a RunConfig,
    written: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir)?;
        Ok(Self {
            cfg,
            written: Vec::new(),
        })
    }

    fn meta(&self) -> Value {
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.cfg.params.name(),
            "seed": self.cfg.seed,
            "config_hash": self.cfg.config_hash,
        })
    }

    fn json(&mut self, name: &str, result: &Value) -> Result<()> {
        if !self.cfg.format.json() {
            return Ok(());
        }
        let doc = json!({
            "meta": self.meta(),
            "params": self.cfg.params.to_json(),
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numeric(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// `header` and `rows` without line endings.
    fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
        if !self.cfg.format.csv() {
            return Ok(());
        }
        let mut text = format!(
            "# stickflow {} command={} seed={} config_hash={}\n{header}\n",
            env!("CARGO_PKG_VERSION"),
            self.cfg.params.name(),
            self.cfg.seed,
            self.cfg.config_hash
        );
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.cfg.out_dir.join(name);
        std::fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    fn finish(self, pass: Option<bool>, summary: Value) -> Outcome {
        Outcome {
            pass,
            artifacts: self.written,
            summary,
        }
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn replicates(r: Option<u64>) -> Result<u64> {
    match r.unwrap_or(1) {
        0 => Err(Error::InvalidInput("replicates must be at least 1".into())),
        r => Ok(r),
    }
}

fn state_index(state: usize, dim: usize) -> Result<usize> {
    if state == 0 || state > dim {
        return Err(Error::StateOutOfRange { state, dim });
    }
    Ok(state - 1)
}

/// Per-state mean and standard error across replicate measures.
fn measure_summary(measures: &[DiscreteMeasure], dim: usize) -> (Vec<f64>, Vec<f64>) {
    (0..dim)
        .map(|s| {
            let v: Vec<f64> = measures.iter().map(|m| m.masses[s]).collect();
            mean_stderr(&v)
        })
        .unzip()
}

fn stationary_if_unique(g: &GeneratorMatrix) -> Option<Vec<f64>> {
    stationary_distribution(g)
        .ok()?
        .unique()
        .ok()
        .map(<[f64]>::to_vec)
}

/// Runs the command and writes its artifacts under `cfg.out_dir`.
pub fn run_command(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Artifacts::new(cfg)?;
    let seed = cfg.seed;
    let outcome = match &cfg.params {
        Params::SampleGem(c) => sample_gem(c, seed, out)?,
        Params::SampleMccgem(c) => sample_mccgem(c, seed, out)?,
        Params::Simulate(c) => simulate(c, seed, out)?,
        Params::Occupation(c) => occupation(c, out)?,
        Params::Moments(c) => moments(c, out)?,
        Params::Marginals(c) => marginals(c, out)?,
        Params::Covariance(c) => covariance(c, out)?,
        Params::Beta(c) => {
            let q = StochasticKernel::new(&c.q)?;
            let y = state_index(c.state, q.dim())?;
            let report = clumped_fraction_beta_check(c.theta, &q, y, c.replicates, seed)?;
            check_report(&report, &mut out)?;
            out.finish(Some(report.pass), json!(report))
        }
        Params::SelfSimilarity(c) => {
            let kernel = StochasticKernel::new(&c.q)?;
            let start = state_index(c.start, kernel.dim())?;
            let report = self_similarity_check(&SelfSimSpec {
                law: c.law.clone(),
                kernel,
                start,
                eps: c.eps.unwrap_or(DEFAULT_EPS),
                replicates: c.replicates,
                seed,
            })?;
            check_report(&report, &mut out)?;
            out.finish(Some(report.pass), json!(report))
        }
        Params::Exchangeability(c) => {
            let q = StochasticKernel::new(&c.q)?;
            let start = state_index(c.start, q.dim())?;
            let report = return_fraction_check(&c.law, &q, start, c.replicates, seed)?;
            check_report(&report, &mut out)?;
            out.finish(Some(report.pass), json!(report))
        }
        Params::WeakErgodicity(c) => weak_ergodicity(c, out)?,
        Params::Accept(c) => accept(c, seed, out)?,
    };
    Ok(outcome)
}

fn check_report(report: &CheckReport, out: &mut Artifacts) -> Result<()> {
    out.json("check.json", &json!(report))?;
    out.csv(
        "check.csv",
        "check,statistic,p_value,pass",
        [format!(
            "{},{},{},{}",
            report.check, report.statistic, report.p_value, report.pass
        )],
    )
}

fn sample_gem(c: &SampleGemConfig, seed: u64, mut out: Artifacts) -> Result<Outcome> {
    let eps = c.eps.unwrap_or(DEFAULT_EPS);
    let sticks = run_replicates(replicates(c.replicates)?, seed, |rng| {
        sample_stick_with(&c.law, rng, eps)
    })?;
    let rows = sticks.iter().enumerate().flat_map(|(r, s)| {
        s.weights()
            .iter()
            .enumerate()
            .map(move |(j, w)| format!("{r},{},{w}", j + 1))
    });
    out.csv("sticks.csv", "replicate,index,weight", rows)?;
    let first: Vec<f64> = sticks
        .iter()
        .map(|s| s.weights().first().copied().unwrap_or(0.0))
        .collect();
    let (mean_first, stderr_first) = mean_stderr(&first);
    let summary = json!({
        "replicates": sticks.iter().enumerate().map(|(r, s)| json!({
            "replicate": r,
            "length": s.len(),
            "assigned": s.assigned(),
            "tail_mass": s.tail_mass(),
        })).collect::<Vec<_>>(),
        "mean_first_weight": mean_first,
        "stderr_first_weight": stderr_first,
    });
    out.json("sample_gem.json", &summary)?;
    Ok(out.finish(None, summary))
}

fn sample_mccgem(c: &SampleMccgemConfig, seed: u64, mut out: Artifacts) -> Result<Outcome> {
    let g = GeneratorMatrix::new(&c.g)?;
    let eps = c.eps.unwrap_or(DEFAULT_EPS);
    let samples = run_replicates(replicates(c.replicates)?, seed, |rng| {
        sample_mccgem_with(&g, &c.pi, eps, rng)
    })?;
    let measures = samples.iter().map(|s| s.measure()).collect::<Result<Vec<_>>>()?;
    let rows = samples.iter().enumerate().flat_map(|(r, s)| {
        s.weights
            .weights()
            .iter()
            .zip(&s.labels)
            .enumerate()
            .map(move |(j, (w, y))| format!("{r},{},{w},{}", j + 1, y + 1))
    });
    out.csv("mccgem.csv", "replicate,index,weight,label", rows)?;
    let mrows = measures.iter().enumerate().flat_map(|(r, m)| {
        m.masses
            .iter()
            .enumerate()
            .map(move |(s, x)| format!("{seed},{r},{},{x}", s + 1))
    });
    out.csv("measures.csv", "seed,replicate,state,mass", mrows)?;
    let (mean, stderr) = measure_summary(&measures, g.dim());
    let summary = json!({
        "replicates": samples.len(),
        "mean_mass": mean,
        "stderr_mass": stderr,
        "stationary": stationary_if_unique(&g),
        "max_deficit": measures.iter().map(|m| m.deficit).fold(0.0, f64::max),
    });
    out.json("sample_mccgem.json", &summary)?;
    Ok(out.finish(None, summary))
}

fn simulate(c: &SimulateConfig, seed: u64, mut out: Artifacts) -> Result<Outcome> {
    let g = GeneratorMatrix::new(&c.g)?;
    let dim = g.dim();
    let spec = InhomSpec::new(g, c.m, c.pi.clone(), c.n)?;
    let r = replicates(c.replicates)?;
    let measures = if c.write_paths {
        let paths = run_replicates(r, seed, |rng| Ok(simulate_inhom_with(&spec, rng)))?;
        let rows = paths.iter().enumerate().flat_map(|(r, p)| {
            p.states()
                .iter()
                .enumerate()
                .map(move |(t, s)| format!("{r},{},{}", t + 1, s + 1))
        });
        out.csv("paths.csv", "replicate,step,state", rows)?;
        paths
            .iter()
            .map(|p| occupation_measure(p, c.n))
            .collect::<Result<Vec<_>>>()?
    } else {
        run_replicates(r, seed, |rng| Ok(simulate_counts_with(&spec, rng).measure()))?
    };
    let rows = measures.iter().enumerate().flat_map(|(r, m)| {
        m.masses
            .iter()
            .enumerate()
            .map(move |(s, x)| format!("{seed},{r},{},{x}", s + 1))
    });
    out.csv("occupation.csv", "seed,replicate,state,mass", rows)?;
    let (mean, stderr) = measure_summary(&measures, dim);
    let summary = json!({
        "cutoff": spec.cutoff(),
        "horizon": spec.horizon(),
        "replicates": r,
        "mean_mass": mean,
        "stderr_mass": stderr,
        "stationary": stationary_if_unique(spec.generator()),
    });
    out.json("simulate.json", &summary)?;
    Ok(out.finish(None, summary))
}

fn occupation(c: &OccupationConfig, mut out: Artifacts) -> Result<Outcome> {
    let dim = c.k.unwrap_or_else(|| c.path.iter().copied().max().unwrap_or(0));
    let states = c
        .path
        .iter()
        .map(|&s| state_index(s, dim))
        .collect::<Result<Vec<_>>>()?;
    let path = ChainPath::new(states, dim)?;
    let path = path.prefix(c.n.unwrap_or(path.len()))?;
    let clumps = reverse_clumps(&path);
    let measure = clumps.measure();
    out.csv(
        "measure.csv",
        "state,mass",
        measure
            .masses
            .iter()
            .enumerate()
            .map(|(s, m)| format!("{},{m}", s + 1)),
    )?;
    let rows = clumps
        .taus
        .iter()
        .zip(&clumps.labels)
        .enumerate()
        .map(|(j, (t, y))| {
            format!(
                "{},{},{t},{},{}",
                j + 1,
                y + 1,
                *t as f64 / clumps.n as f64,
                clumps.boundaries[j + 1] + 1
            )
        });
    out.csv("clumps.csv", "clump,label,tau,weight,start", rows)?;
    let summary = json!({
        "n": clumps.n,
        "measure": measure.masses,
        "switch_count": clumps.switch_count,
        "taus": clumps.taus,
        "labels": clumps.labels.iter().map(|y| y + 1).collect::<Vec<_>>(),
        "fractions": clumps.fractions(),
    });
    out.json("occupation.json", &summary)?;
    Ok(out.finish(None, summary))
}

fn moments(c: &MomentsConfig, mut out: Artifacts) -> Result<Outcome> {
    let engine = MomentEngine::new(&GeneratorMatrix::new(&c.g)?)?;
    let table = engine.moment_table(c.max_order)?;
    let header: Vec<String> = (1..=engine.dim())
        .map(|i| format!("m_{i}"))
        .chain(["value".into()])
        .collect();
    let rows = table.iter().map(|(m, v)| {
        let mut row = String::new();
        for x in m {
            let _ = write!(row, "{x},");
        }
        let _ = write!(row, "{v}");
        row
    });
    out.csv("moments.csv", &header.join(","), rows)?;
    let summary = json!({
        "stationary": engine.stationary(),
        "polynomial": engine.poly(),
        "table": table.iter().map(|(m, v)| json!({ "m": m, "value": v })).collect::<Vec<_>>(),
    });
    out.json("moments.json", &summary)?;
    Ok(out.finish(None, summary))
}

fn marginals(c: &MarginalsConfig, mut out: Artifacts) -> Result<Outcome> {
    let engine = MomentEngine::new(&GeneratorMatrix::new(&c.g)?)?;
    let states: Vec<usize> = match c.state {
        Some(s) => vec![state_index(s, engine.dim())?],
        None => (0..engine.dim()).collect(),
    };
    let mut rows = Vec::new();
    let mut per_state = Vec::new();
    for &i in &states {
        let mut values = Vec::new();
        for r in 1..=c.max_order {
            let v = engine.marginal_moment(i, r)?;
            let d = engine.duality_moment(i, r)?;
            rows.push(format!("{},{r},{v},{d}", i + 1));
            values.push(json!({ "order": r, "value": v, "duality": d }));
        }
        per_state.push(json!({
            "state": i + 1,
            "roots": engine.marginal_roots(i)?,
            "moments": values,
        }));
    }
    out.csv("marginals.csv", "state,order,value,duality", rows)?;
    let summary = json!({ "stationary": engine.stationary(), "states": per_state });
    out.json("marginals.json", &summary)?;
    Ok(out.finish(None, summary))
}

fn covariance(c: &CovarianceConfig, mut out: Artifacts) -> Result<Outcome> {
    let cov = gem2_clump_covariance(c.p_stay, c.terms)?;
    // the reference value only covers the symmetric chain
    let reference = (c.p_stay == 0.5).then_some(GEM2_HALF_COVARIANCE);
    let matches = reference.is_none_or(|r| (cov.cov - r).abs() < 1e-4);
    let pass = matches && cov.truncation_bound < 1e-9;
    out.csv(
        "covariance.csv",
        "quantity,value",
        [
            format!("e1,{}", cov.e1),
            format!("e2,{}", cov.e2),
            format!("e12,{}", cov.e12),
            format!("cov,{}", cov.cov),
            format!("truncation_bound,{}", cov.truncation_bound),
        ],
    )?;
    let summary = json!({
        "value": cov.cov,
        "series": cov,
        "reference": reference,
        "pass": pass,
    });
    out.json("covariance.json", &summary)?;
    Ok(out.finish(Some(pass), summary))
}

/// `n` values kept in the trace: all of `1..=100`, then two significant digits.
fn keep_in_trace(i: usize, n: usize) -> bool {
    if i <= 100 || i == n {
        return true;
    }
    let step = 10usize.pow(i.ilog10() - 1);
    i.is_multiple_of(step)
}

fn weak_ergodicity(c: &WeakErgodicConfig, mut out: Artifacts) -> Result<Outcome> {
    let g = GeneratorMatrix::new(&c.g)?;
    let mu = stationary_distribution(&g)?.unique()?.to_vec();
    let spec = InhomSpec::new(g, c.m, c.pi.clone(), c.n)?;
    let mut rows = Vec::new();
    let mut last = f64::NAN;
    crate::inhom::weak_ergodic_trace(&spec, c.n, |i, v| {
        let l1: f64 = v.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        last = l1;
        if keep_in_trace(i, c.n) {
            let mut row = format!("{i},{l1}");
            for x in v {
                let _ = write!(row, ",{x}");
            }
            rows.push(row);
        }
    });
    let iter = crate::inhom::weak_ergodic_iterate(&spec, c.n, c.theta)?;
    let q_gap: f64 = iter
        .mu_n
        .iter()
        .zip(&iter.mu_n_q)
        .map(|(a, b)| (a - b).abs())
        .sum();
    let header: Vec<String> = ["n".to_string(), "l1".to_string()]
        .into_iter()
        .chain((1..=mu.len()).map(|i| format!("mu_{i}")))
        .collect();
    out.csv("trace.csv", &header.join(","), rows)?;
    let pass = last < c.tolerance;
    let summary = json!({
        "stationary": mu,
        "mu_n": iter.mu_n,
        "l1_distance": last,
        "q_step_gap": q_gap,
        "theta": iter.theta,
        "cutoff": spec.cutoff(),
        "tolerance": c.tolerance,
        "pass": pass,
    });
    out.json("weak_ergodicity.json", &summary)?;
    Ok(out.finish(Some(pass), summary))
}

fn accept(c: &AcceptConfig, seed: u64, mut out: Artifacts) -> Result<Outcome> {
    let ids: Vec<u32> = match &c.criteria {
        Some(ids) => ids.clone(),
        None => CRITERIA.iter().map(|c| c.0).collect(),
    };
    let mut results = Vec::with_capacity(ids.len());
    for id in ids {
        let r = run_criterion(id, seed)?;
        println!("{}", r.line());
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.pass).count();
    let pass = passed == results.len();
    println!("{passed}/{} criteria passed", results.len());
    let rows = results.iter().map(|r| {
        format!(
            "{},{},{},{},{}",
            r.id,
            csv_quote(r.name),
            r.pass,
            r.elapsed_secs,
            csv_quote(&r.detail)
        )
    });
    out.csv("accept.csv", "id,name,pass,elapsed_secs,detail", rows)?;
    let summary = json!({
        "criteria": results,
        "passed": passed,
        "total": results.len(),
        "pass": pass,
    });
    out.json("accept.json", &summary)?;
    Ok(out.finish(Some(pass), summary))
}

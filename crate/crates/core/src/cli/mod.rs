//! The `stickflow` command line: argument parsing, config resolution and the
//! entry point used by the binary.

pub mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::acceptance::DEFAULT_SEED;
use crate::error::{Error, Result};
use config::*;

pub use run::{run_command, Outcome};

/// Environment variable consulted when neither the flag nor the config sets a seed.
pub const SEED_ENV: &str = "STICKFLOW_SEED";
/// Output directory used when neither `--out` nor the config names one.
pub const DEFAULT_OUT_DIR: &str = "stickflow-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stickflow",
    version,
    about = "Stick-breaking, clumping and occupation-law toolkit"
)]
pub struct Cli {
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the config and STICKFLOW_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for replicated work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample stick weights from a fraction law.
    SampleGem,
    /// Sample weights and chain labels jointly.
    SampleMccgem,
    /// Simulate the inhomogeneous chain and record occupation measures.
    Simulate,
    /// Occupation measure and reverse clumps of a given path.
    Occupation,
    /// Joint moment table of the limiting occupation law.
    Moments,
    /// Marginal moments of the limiting occupation law.
    Marginals,
    /// Run one statistical or numerical check.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
    /// Run the acceptance suite.
    Accept {
        /// Restrict to these criterion ids (repeatable).
        #[arg(long = "criterion")]
        criteria: Vec<u32>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Check {
    /// Clump covariance series for GEM(1/2, 1) weights.
    Covariance,
    /// Clumped first fraction against its Beta law.
    Beta,
    /// Direct law against the one-cycle composite.
    SelfSimilarity,
    /// First two return-cycle fractions against each other.
    Exchangeability,
    /// Distance of the one-step marginals to the stationary law.
    WeakErgodicity,
}

/// Parsed parameters, one variant per runnable command.
#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    SampleGem(SampleGemConfig),
    SampleMccgem(SampleMccgemConfig),
    Simulate(SimulateConfig),
    Occupation(OccupationConfig),
    Moments(MomentsConfig),
    Marginals(MarginalsConfig),
    Covariance(CovarianceConfig),
    Beta(BetaCheckConfig),
    SelfSimilarity(CycleCheckConfig),
    Exchangeability(CycleCheckConfig),
    WeakErgodicity(WeakErgodicConfig),
    Accept(AcceptConfig),
}

macro_rules! each_params {
    ($self:expr, $c:ident => $body:expr) => {
        match $self {
            Params::SampleGem($c) => $body,
            Params::SampleMccgem($c) => $body,
            Params::Simulate($c) => $body,
            Params::Occupation($c) => $body,
            Params::Moments($c) => $body,
            Params::Marginals($c) => $body,
            Params::Covariance($c) => $body,
            Params::Beta($c) => $body,
            Params::SelfSimilarity($c) => $body,
            Params::Exchangeability($c) => $body,
            Params::WeakErgodicity($c) => $body,
            Params::Accept($c) => $body,
        }
    };
}

impl Params {
    pub fn name(&self) -> &'static str {
        match self {
            Params::SampleGem(_) => "sample-gem",
            Params::SampleMccgem(_) => "sample-mccgem",
            Params::Simulate(_) => "simulate",
            Params::Occupation(_) => "occupation",
            Params::Moments(_) => "moments",
            Params::Marginals(_) => "marginals",
            Params::Covariance(_) => "verify-covariance",
            Params::Beta(_) => "verify-beta",
            Params::SelfSimilarity(_) => "verify-self-similarity",
            Params::Exchangeability(_) => "verify-exchangeability",
            Params::WeakErgodicity(_) => "verify-weak-ergodicity",
            Params::Accept(_) => "accept",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        each_params!(self, c => c.seed)
    }

    pub fn out_dir(&self) -> Option<&Path> {
        each_params!(self, c => c.out_dir.as_deref())
    }

    /// The parameters as JSON, without seed and output directory.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = each_params!(self, c => serde_json::to_value(c)).expect("config types serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("seed");
            obj.remove("out_dir");
        }
        v
    }

    /// Parses the config for `command`. Commands whose fields all have
    /// defaults run without one.
    pub fn load(command: &Command, path: Option<&Path>) -> Result<Params> {
        fn need<T: serde::de::DeserializeOwned>(cmd: &str, path: Option<&Path>) -> Result<T> {
            match path {
                Some(p) => load_config(p),
                None => Err(Error::Config(format!("`{cmd}` needs --config"))),
            }
        }
        fn or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
            path.map_or_else(|| Ok(T::default()), load_config)
        }
        Ok(match command {
            Command::SampleGem => Params::SampleGem(need("sample-gem", path)?),
            Command::SampleMccgem => Params::SampleMccgem(need("sample-mccgem", path)?),
            Command::Simulate => Params::Simulate(need("simulate", path)?),
            Command::Occupation => Params::Occupation(need("occupation", path)?),
            Command::Moments => Params::Moments(need("moments", path)?),
            Command::Marginals => Params::Marginals(need("marginals", path)?),
            Command::Verify { check } => match check {
                Check::Covariance => Params::Covariance(or_default(path)?),
                Check::Beta => Params::Beta(need("verify beta", path)?),
                Check::SelfSimilarity => Params::SelfSimilarity(need("verify self-similarity", path)?),
                Check::Exchangeability => Params::Exchangeability(need("verify exchangeability", path)?),
                Check::WeakErgodicity => Params::WeakErgodicity(need("verify weak-ergodicity", path)?),
            },
            Command::Accept { criteria } => {
                let mut c: AcceptConfig = or_default(path)?;
                if !criteria.is_empty() {
                    c.criteria = Some(criteria.clone());
                }
                Params::Accept(c)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Flag,
    Config,
    Env,
    Default,
}

/// Everything needed to run a command and label its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: Params,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub out_dir: PathBuf,
    pub format: Format,
    /// SHA-256 of the command name and canonical parameters.
    pub config_hash: String,
}

impl RunConfig {
    /// Seed precedence: flag, config, environment, built-in default.
    pub fn new(
        params: Params,
        seed_flag: Option<u64>,
        seed_env: Option<&str>,
        out: Option<PathBuf>,
        format: Format,
    ) -> Result<Self> {
        let (seed, seed_source) = match (seed_flag, params.seed(), seed_env) {
            (Some(s), _, _) => (s, SeedSource::Flag),
            (None, Some(s), _) => (s, SeedSource::Config),
            (None, None, Some(v)) => {
                let s = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not a u64")))?;
                (s, SeedSource::Env)
            }
            (None, None, None) => (DEFAULT_SEED, SeedSource::Default),
        };
        let out_dir = out
            .or_else(|| params.out_dir().map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let config_hash = config_hash(&serde_json::json!({
            "command": params.name(),
            "params": params.to_json(),
        }));
        Ok(Self {
            params,
            seed,
            seed_source,
            out_dir,
            format,
            config_hash,
        })
    }

    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let params = Params::load(&cli.command, cli.config.as_deref())?;
        let env = std::env::var(SEED_ENV).ok();
        Self::new(params, cli.seed, env.as_deref(), cli.out.clone(), cli.format)
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let cfg = RunConfig::from_cli(cli)?;
    if cfg.seed_source == SeedSource::Default {
        eprintln!("stickflow: no seed given, using {}", cfg.seed);
    }
    run_command(&cfg)
}

/// Exit codes: 0 success, 1 error, 2 a check ran and failed.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
            if let Some(pass) = outcome.pass {
                println!("{}", if pass { "PASS" } else { "FAIL" });
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.kind(), "message": e.to_string() })
            );
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use dgd_core::harness::config::ExperimentConfig;
use dgd_core::harness::experiments::FIGURE2_HORIZON;
use dgd_core::harness::{cmd_certify, cmd_figure1, cmd_figure2, cmd_run, cmd_validate};
use dgd_core::sharpness::{eigenvalues, eigenvalues_direct, sharpness_ratio, SharpnessInstance};
use dgd_core::DgdError;

const EXIT_VALIDATION: u8 = 1;
const EXIT_DIVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "dgd", version, about = "Decentralized gradient descent with convergence certificates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip envelope evaluation.
    #[arg(long)]
    no_certificates: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration and write trajectory, certificates and summary.
    Run(Common),
    /// The 16-run exponent/stepsize sweep on the configured ensemble.
    Figure1(Common),
    /// The two-agent divergence sweep.
    Figure2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = FIGURE2_HORIZON)]
        horizon: usize,
    },
    /// Evaluate envelopes for a stored trajectory CSV.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Report the divergence threshold and eigenvalues of the two-agent example.
    Sharpness {
        #[arg(long, default_value_t = 10.0)]
        a1: f64,
        #[arg(long, default_value_t = 6.0)]
        a2: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
        /// Stepsizes to classify; defaults to 0.99 and 1.01 times the threshold.
        #[arg(long)]
        alpha: Vec<f64>,
    },
    /// Check a config and its mixing matrix without running.
    Validate(Common),
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)
                .with_context(|| format!("reading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.no_certificates {
            cfg.certificates = false;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn execute(cmd: Cmd) -> anyhow::Result<u8> {
    match cmd {
        Cmd::Run(c) => {
            let cfg = c.load()?;
            let summary = cmd_run(&cfg, &c.out_dir(&cfg))?;
            print_json(&summary)?;
            if summary.diverged() && !cfg.expect_divergence {
                eprintln!("run diverged: {:?}", summary.status);
                return Ok(EXIT_DIVERGED);
            }
            if summary.certificates.as_ref().is_some_and(|r| !r.holds()) {
                eprintln!("an envelope failed to dominate the trajectory");
            }
        }
        Cmd::Figure1(c) => {
            let cfg = c.load()?;
            print_json(&cmd_figure1(&cfg, &c.out_dir(&cfg))?)?;
        }
        Cmd::Figure2 { common, horizon } => {
            let cfg = common.load()?;
            let s = cmd_figure2(cfg.seed, horizon, &common.out_dir(&cfg))?;
            print_json(&s)?;
            if s.runs.iter().any(|r| !r.consistent) {
                eprintln!("a run disagreed with its eigenvalue verdict");
                return Ok(EXIT_DIVERGED);
            }
        }
        Cmd::Certify { common, trajectory } => {
            let cfg = common.load()?;
            let report = cmd_certify(&cfg, &trajectory, &common.out_dir(&cfg))?;
            print_json(&report)?;
        }
        Cmd::Sharpness { a1, a2, gamma, alpha } => {
            let base = SharpnessInstance::new(a1, a2, gamma, 0.0)?;
            let th = base.threshold();
            let alphas = if alpha.is_empty() { vec![0.99 * th, 1.01 * th] } else { alpha };
            let mut rows = vec![];
            for a in alphas {
                let inst = SharpnessInstance::new(a1, a2, gamma, a)?;
                let ev = eigenvalues(&inst);
                rows.push(serde_json::json!({
                    "alpha": a,
                    "alpha_over_threshold": a / th,
                    "eigenvalues": ev,
                    "eigenvalues_direct": eigenvalues_direct(&inst),
                    "diverges": ev[0].abs().max(ev[1].abs()) > 1.0,
                }));
            }
            let ratio = sharpness_ratio(base.mu(), base.l(), gamma).ok();
            print_json(&serde_json::json!({
                "a1": a1, "a2": a2, "gamma": gamma,
                "mu": base.mu(), "L": base.l(), "beta": base.beta(),
                "threshold": th,
                "ratio": ratio,
                "stepsizes": rows,
            }))?;
        }
        Cmd::Validate(c) => {
            let cfg = c.load()?;
            let report = cmd_validate(&cfg)?;
            print_json(&report)?;
            if !report.ok() {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<DgdError>() {
                Some(DgdError::NonFinite { .. }) => EXIT_DIVERGED,
                _ => EXIT_VALIDATION,
            };
            ExitCode::from(code)
        }
    }
}

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use qotlab::core::protocol::{run_session_retrying, Variant};
use qotlab::core::seeding::derive_seed;
use qotlab::core::vault::BcMode;
use qotlab::verify::{Verifier, VerifyOptions};
use qotlab::{render_report, run_scenario, Format, Scenario, ScenarioKind};

#[derive(Parser)]
#[command(name = "qotlab", version, about = "Simulator for bit-commitment-based quantum oblivious transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BcModeArg {
    NonBccc,
    Bccc,
}

impl From<BcModeArg> for BcMode {
    fn from(m: BcModeArg) -> Self {
        match m {
            BcModeArg::NonBccc => BcMode::NonBccc,
            BcModeArg::Bccc => BcMode::Bccc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Aon,
    #[value(name = "12ot")]
    OneOutOfTwo,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Aon => Variant::AllOrNothing,
            VariantArg::OneOutOfTwo => Variant::OneOutOfTwo,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, or `all`, and write a report.
    Run {
        #[arg(long)]
        scenario: String,
        /// Number of qubits per session.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum)]
        bc_mode: Option<BcModeArg>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Print the transcript of session 0 to stderr.
        #[arg(long)]
        dump_transcript: bool,
    },
    /// Run the acceptance checks; exits nonzero if any fails.
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Run only these criteria (1-10).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, n, trials, seed, bc_mode, variant, out, format, dump_transcript } => {
            let kinds: Vec<ScenarioKind> =
                if scenario == "all" { ScenarioKind::ALL.to_vec() } else { vec![scenario.parse()?] };
            let mut summaries = Vec::new();
            for kind in kinds {
                let mut sc = Scenario::new(kind);
                if let Some(n) = n {
                    sc = sc.with_n(n);
                }
                if let Some(t) = trials {
                    sc = sc.with_trials(t);
                }
                if let Some(m) = bc_mode {
                    sc = sc.with_bc_mode(m.into());
                }
                if let Some(v) = variant {
                    sc = sc.with_variant(v.into());
                }
                if dump_transcript {
                    if let Some(strategy) = kind.strategy() {
                        let r = run_session_retrying(&sc.config.with_seed(derive_seed(seed, 0)), strategy)?;
                        eprint!("{}", r.to_text());
                    }
                }
                summaries.push(run_scenario(&sc, seed)?);
            }
            let text = render_report(&summaries, format)?;
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed, trials, only } => {
            let mut verifier = Verifier::new(VerifyOptions { seed, trials, ..VerifyOptions::default() });
            let ids: Vec<u8> = if only.is_empty() { (1..=10).collect() } else { only };
            let mut failed = 0;
            for id in ids {
                if !(1..=10).contains(&id) {
                    anyhow::bail!("no criterion {id}");
                }
                let r = verifier.check(id);
                println!("{r}");
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                println!("{failed} criterion(s) failed");
                Ok(ExitCode::FAILURE)
            } else {
                println!("all criteria passed");
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}

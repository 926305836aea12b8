use std::path::PathBuf;
use std::process::ExitCode;

use chainsim::agents::Reasoner;
use clap::{Parser, Subcommand, ValueEnum};

use chainsim_cli::config::ScenarioConfig;
use chainsim_cli::output::emit_outputs;
use chainsim_cli::{build_reasoner, cc_exp, ra_exp, sfc_exp, CliError, ReasonerSpec};

#[derive(Parser)]
#[command(name = "chainsim", about = "Deterministic SFC / transport / allocation scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a scenario config.
    Run {
        kind: ExperimentKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// `scripted:<path>` or `http`; overrides the config's
        /// reasoner section.
        #[arg(long)]
        reasoner: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Sfc,
    Cc,
    Ra,
}

impl ExperimentKind {
    fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Sfc => "sfc",
            ExperimentKind::Cc => "cc",
            ExperimentKind::Ra => "ra",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Command::Run {
        kind,
        config,
        seed,
        out,
        reasoner,
    } = cli.command;
    let scenario = ScenarioConfig::load(&config)?;
    if scenario.kind != kind.as_str() {
        return Err(CliError::Config(format!(
            "config kind `{}` does not match subcommand `{}`",
            scenario.kind,
            kind.as_str()
        )));
    }
    let spec = match reasoner {
        Some(text) => Some(ReasonerSpec::parse(&text)?),
        None => scenario.reasoner_spec(&config)?,
    };
    let files = match kind {
        ExperimentKind::Sfc => {
            let cfg = scenario.sfc.as_ref().expect("validated by load");
            let spec = spec
                .ok_or_else(|| CliError::Config("sfc experiments require a reasoner".into()))?;
            let mut reasoner = build_reasoner(&spec)?;
            sfc_exp::run_sfc_experiment(cfg, seed, reasoner.as_mut())?.output_files()
        }
        ExperimentKind::Cc => {
            let cfg = scenario.cc.as_ref().expect("validated by load");
            let spec = spec
                .ok_or_else(|| CliError::Config("cc experiments require a reasoner".into()))?;
            let mut reasoner = build_reasoner(&spec)?;
            cc_exp::run_cc_experiment(cfg, seed, reasoner.as_mut())?.output_files()
        }
        ExperimentKind::Ra => {
            let cfg = scenario.ra.as_ref().expect("validated by load");
            let mut built = match (&spec, cfg.static_control) {
                (_, true) | (None, _) => None,
                (Some(s), false) => Some(build_reasoner(s)?),
            };
            let reasoner = built.as_mut().map(|b| b.as_mut() as &mut dyn Reasoner);
            ra_exp::run_ra_sim(cfg, seed, reasoner)?.output_files()
        }
    };
    emit_outputs(&files, &out)?;
    println!("wrote {} files to {}", files.len() + 1, out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedunlearn::explain::Selection;
use fedunlearn::unlearn::Scheme;
use fedunlearn_cli::commands::{self, Session};
use fedunlearn_cli::config::LoadedConfig;
use fedunlearn_cli::error::CliError;
use fedunlearn_cli::report;
use log::error;

#[derive(Parser)]
#[command(version, about = "Federated class unlearning driven by channel explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    De,
    Ce,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Important,
    Random,
    Nonimportant,
}

#[derive(Subcommand)]
enum Command {
    /// Train the global model with federated averaging.
    Train(Common),
    /// Score channels on the target class and select the influential set.
    Explain(Common),
    /// Unlearn the target class from the trained model.
    Unlearn {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long, value_enum)]
        select: Option<SelectArg>,
    },
    /// Accuracy, attack and traffic report for the stored models.
    Eval(Common),
    /// Membership inference against the target class.
    Attack(Common),
    /// Analytic cost model for the configured federation.
    Costs(Common),
    /// train, explain, unlearn and eval in one go.
    Run(Common),
}

fn open(common: &Common) -> Result<Session, CliError> {
    Session::open(LoadedConfig::from_file(&common.config)?)
}

fn finish<T>(session: Session, result: Result<T, CliError>, print: impl FnOnce(&T) -> String) -> Result<(), CliError> {
    match result {
        Ok(value) => {
            session.write_manifest(None)?;
            print!("{}", print(&value));
            Ok(())
        }
        Err(e) => {
            let _ = session.write_manifest(Some(&e));
            Err(e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => {
            let mut s = open(&c)?;
            let r = s.train();
            finish(s, r, |r| report::metrics_table(r))
        }
        Command::Explain(c) => {
            let mut s = open(&c)?;
            let r = s.explain().map(|(r, _, _)| r);
            finish(s, r, report::explain_summary)
        }
        Command::Unlearn { common, scheme, select } => {
            let mut s = open(&common)?;
            let scheme = scheme.map(|s| match s {
                SchemeArg::De => Scheme::Decentralized,
                SchemeArg::Ce => Scheme::Centralized,
            });
            let select = select.map(|s| match s {
                SelectArg::Important => Selection::Important,
                SelectArg::Random => Selection::Random,
                SelectArg::Nonimportant => Selection::NonImportant,
            });
            let r = s.unlearn(scheme, select);
            finish(s, r, |(rec, run)| {
                report::metrics_table(&run.records) + &report::unlearn_summary(rec)
            })
        }
        Command::Eval(c) => {
            let mut s = open(&c)?;
            let r = s.eval();
            finish(s, r, report::eval_summary)
        }
        Command::Attack(c) => {
            let mut s = open(&c)?;
            let r = s.attack();
            finish(s, r, report::attack_summary)
        }
        Command::Costs(c) => {
            let mut s = open(&c)?;
            let r = s.costs();
            finish(s, r, report::costs_summary)
        }
        Command::Run(c) => {
            let loaded = LoadedConfig::from_file(&c.config)?;
            let out = commands::run_pipeline(loaded).map_err(|f| f.error)?;
            print!("{}", report::metrics_table(&out.train));
            if let Some(e) = &out.explain {
                print!("{}", report::explain_summary(e));
            }
            if let Some(u) = &out.unlearn {
                print!("{}", report::metrics_table(&out.unlearn_records));
                print!("{}", report::unlearn_summary(u));
            }
            if let Some(e) = &out.eval {
                print!("{}", report::eval_summary(e));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `pdesift`: run the discovery pipeline or any single stage on saved artifacts.

mod overrides;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdesift::error::{Error, Result, StageExt};
use pdesift::field::Field;
use pdesift::pipeline::{self, DiscoveryReport, PipelineConfig, PipelineRun, SelectOutcome};
use pdesift::rfe::RfeOutcome;
use pdesift::screen::ScreenReport;
use pdesift::select;
use pdesift::weaklib::CandidateLibrary;
use serde::Serialize;
use serde_json::json;

/// Weak-form PDE identification. Any config key can be overridden with a
/// flag mirroring its path, e.g. `--screen.q0 0.3` or `--seed=7`.
#[derive(Parser)]
#[command(name = "pdesift", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "pdesift-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (or load), add noise and denoise; writes `field_<i>` files.
    Simulate,
    /// Build the weak-form library; writes `library.csv` and `library.json`.
    Library {
        /// Field stems to use instead of the configured dataset.
        #[arg(long, num_args = 1..=2)]
        fields: Vec<PathBuf>,
    },
    /// Knockoff screening on a saved library; writes `screen.json`.
    Screen {
        #[arg(long)]
        library: PathBuf,
    },
    /// Recursive elimination of a screened support; writes `rfe.json`.
    Rfe {
        #[arg(long)]
        library: PathBuf,
        /// Screening report from `screen`.
        #[arg(long)]
        screen: PathBuf,
    },
    /// Multi-criteria selection over an eliminated support.
    Select {
        #[arg(long)]
        library: PathBuf,
        /// Elimination outcome from `rfe`.
        #[arg(long)]
        rfe: PathBuf,
    },
    /// Full pipeline; writes `report.json` and every stage artifact.
    Run,
    /// Score a report against ground truth; prints JSON.
    Metrics {
        #[arg(long)]
        report: PathBuf,
        /// JSON map of term label to coefficient; the config's truth otherwise.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_selection(out: &Path, library: &CandidateLibrary, chosen: &SelectOutcome) -> Result<()> {
    let labels = |a: usize| library.labels(&chosen.supports[a]);
    let winner = &chosen.supports[chosen.selection.winner];
    let coefficients = pipeline::refit(library, winner, &library.responses[0]).stage("refit")?;
    let summary = json!({
        "winner": { "indices": winner, "labels": labels(chosen.selection.winner) },
        "coefficients": coefficients,
        "ordering": chosen.selection.ordering.iter().map(|&a| labels(a)).collect::<Vec<_>>(),
        "aic_choice": labels(chosen.ic.aic_winner),
        "ebic_choice": labels(chosen.ic.ebic_winner),
        "selection": chosen.selection,
    });
    write_json(&out.join("selection.json"), &summary)?;
    if let Some(matrix) = &chosen.selection.matrix {
        write_text(&out.join("decision_matrix.csv"), &select::decision_matrix_csv(matrix)?)?;
    }
    write_text(&out.join("preference_curves.csv"), &select::preference_curves_csv(&chosen.selection, &chosen.alternatives)?)
}

fn execute(command: Command, common: &Common, config: &PipelineConfig) -> Result<()> {
    let out = &common.out;
    fs::create_dir_all(out)?;
    match command {
        Command::Simulate => {
            for (i, field) in pipeline::prepare_fields(config).stage("simulate")?.iter().enumerate() {
                let stem = out.join(format!("field_{i}"));
                field.save(&stem)?;
                if field.shape().len() == 2 {
                    field.write_csv(&stem.with_extension("csv"))?;
                }
                eprintln!("wrote {}.{{bin,json}}", stem.display());
            }
        }
        Command::Library { fields } => {
            let fields = if fields.is_empty() {
                pipeline::prepare_fields(config).stage("simulate")?
            } else {
                fields.iter().map(|p| Field::load(p)).collect::<Result<_>>()?
            };
            let library = pipeline::build_library(&fields, config).stage("library")?;
            library.save(&out.join("library"))?;
            eprintln!("wrote {} ({} rows, {} terms)", out.join("library.{csv,json}").display(), library.n_rows(), library.n_terms());
        }
        Command::Screen { library } => {
            let library = CandidateLibrary::load(&library)?;
            let outcome = pipeline::run_screen(&library, config).stage("screen")?;
            write_json(&out.join("screen.json"), &outcome.report)?;
        }
        Command::Rfe { library, screen } => {
            let library = CandidateLibrary::load(&library)?;
            let report: ScreenReport = read_json(&screen)?;
            let outcome = pipeline::run_rfe(&library, &report.support, config).stage("rfe")?;
            write_json(&out.join("rfe.json"), &outcome)?;
        }
        Command::Select { library, rfe } => {
            let library = CandidateLibrary::load(&library)?;
            let eliminated: RfeOutcome = read_json(&rfe)?;
            let chosen = pipeline::run_select(&library, &eliminated.support, config).stage("select")?;
            write_selection(out, &library, &chosen)?;
        }
        Command::Run => {
            let PipelineRun { report, screen_report, rfe, select: chosen } = pipeline::run_pipeline_full(config)?;
            write_json(&out.join("screen.json"), &screen_report)?;
            write_json(&out.join("rfe.json"), &rfe)?;
            if let Some(matrix) = &chosen.selection.matrix {
                write_text(&out.join("decision_matrix.csv"), &select::decision_matrix_csv(matrix)?)?;
            }
            write_text(&out.join("preference_curves.csv"), &select::preference_curves_csv(&chosen.selection, &chosen.alternatives)?)?;
            write_text(&out.join("report.json"), &(report.to_json()? + "\n"))?;
            print_summary(&report);
        }
        Command::Metrics { report, truth } => {
            let report = DiscoveryReport::from_json(&fs::read_to_string(report)?)?;
            let truth: BTreeMap<String, f64> = match truth {
                Some(path) => read_json(&path)?,
                None => config.truth().ok_or_else(|| Error::Config("no ground truth: pass --truth or set ground_truth".into()))?,
            };
            let (metrics, warnings) = pipeline::compute_metrics(&report.coefficients, &truth)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
    }
    Ok(())
}

fn print_summary(report: &DiscoveryReport) {
    let terms: Vec<String> = report.coefficients.iter().map(|c| format!("{:+.6} {}", c.value, c.label)).collect();
    println!("u_t = {}", terms.join(" "));
    if let Some(m) = &report.metrics {
        let ce = m.ce_mean.map(|v| format!(", mean %CE {v:.3}")).unwrap_or_default();
        println!("eFDR {:.3}, ePOWER {:.3}{ce}", m.efdr, m.epower);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match overrides::extract(std::env::args().collect()) {
        Ok(split) => split,
        Err(e) => return fail(&e),
    };
    let Cli { common, command } = Cli::parse_from(args);
    let result = overrides::load_config(common.config.as_deref(), &overrides).and_then(|config| execute(command, &common, &config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluorcorr_cli::{
    cmd_analyze, cmd_analyze_theory, cmd_correlate, cmd_correlate_pair, cmd_pipeline, cmd_simulate, cmd_theory,
    exit_code, Context,
};

/// Intensity-field correlation of single-atom resonance fluorescence.
#[derive(Parser)]
#[command(name = "fluorcorr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: fig2, fig4 or two_level.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory (overrides the configuration).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write theory curves g2, g15 and g_total for every LO phase.
    Theory(Common),
    /// Synthesize start/stop tag files for every LO phase.
    Simulate(Common),
    /// Histogram start/stop delays of simulated runs or of one explicit pair.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH", requires = "stop")]
        start: Option<PathBuf>,
        #[arg(long, value_name = "PATH", requires = "start")]
        stop: Option<PathBuf>,
    },
    /// Calibrate phases, estimate V and extract g15 components.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Run the extraction on the theory curves instead of histograms.
        #[arg(long)]
        from_theory: bool,
    },
    /// theory + simulate + correlate + analyze with a comparison report.
    Pipeline(Common),
}

fn context(c: &Common) -> fluorcorr::Result<Context> {
    Context::resolve(c.config.as_deref(), c.preset.as_deref(), c.out.clone(), c.seed)
}

fn run(cli: Cli) -> fluorcorr::Result<()> {
    match cli.command {
        Command::Theory(c) => {
            let r = cmd_theory(&context(&c)?)?;
            println!("theory: V = {:.4}, r = {:.4}, {} phases", r.visibility, r.ratio, r.curves.len());
        }
        Command::Simulate(c) => {
            let m = cmd_simulate(&context(&c)?)?;
            for run in &m.runs {
                println!("{}: {} start, {} stop tags", run.label, run.n_start, run.n_stop);
            }
        }
        Command::Correlate { common, start, stop } => {
            let ctx = context(&common)?;
            match (start, stop) {
                (Some(a), Some(b)) => {
                    let (h, _) = cmd_correlate_pair(&ctx, &a, &b)?;
                    println!("histogram: {} pairs from {} starts", h.total(), h.n_starts);
                }
                _ => {
                    let hs = cmd_correlate(&ctx)?;
                    println!("correlated {} runs", hs.len());
                }
            }
        }
        Command::Analyze { common, from_theory } => {
            let ctx = context(&common)?;
            let r = if from_theory {
                cmd_analyze_theory(&ctx)?
            } else {
                cmd_analyze(&ctx)?
            };
            println!(
                "V = {:.4} ± {:.4}{}",
                r.visibility.value,
                r.visibility.stderr,
                if r.relabelled { " (phase labels corrected)" } else { "" }
            );
        }
        Command::Pipeline(c) => {
            let r = cmd_pipeline(&context(&c)?)?;
            println!(
                "V estimated {:.4} ± {:.4} (theory {:.4})",
                r.estimated_visibility.value, r.estimated_visibility.stderr, r.theory_visibility
            );
            for c in &r.comparisons {
                println!(
                    "{}: chi2/bins = {:.3}, max |z| = {:.2}",
                    c.name,
                    c.agreement.chi2 / c.agreement.bins.max(1) as f64,
                    c.agreement.max_abs_z
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

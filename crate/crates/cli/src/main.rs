use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use metades_core::harness::{
    emit_tables, run_experiment, ExperimentConfig, RunResult, TableFormat, TableOptions,
};
use metades_core::stats::{friedman_mean_ranks, kruskal_columns, wilcoxon_against, AccuracyTable};

#[derive(Parser)]
#[command(
    name = "metades",
    version,
    about = "Dynamic ensemble selection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicated protocol described by a key = value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the results JSON (default: <dataset>_results.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render mean(std) tables from one or more results files.
    Tables {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        /// Add a Wilcoxon row comparing every column with this method.
        #[arg(long)]
        wilcoxon: Option<String>,
        /// Add a Friedman mean-rank row.
        #[arg(long)]
        ranks: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Statistical tests over an accuracy table CSV (datasets x methods).
    Stats {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, value_enum)]
        test: Test,
        /// Reference method for the Wilcoxon test (default: first column).
        #[arg(long)]
        reference: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Test {
    Wilcoxon,
    Friedman,
    Kruskal,
}

fn run(config: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::from_file(&config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let result = run_experiment(&cfg)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}_results.json", cfg.name)));
    fs::write(&out, result.to_json()?).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} ({} replications)",
        result.dataset,
        result.replications.len()
    );
    for (m, name) in result.methods.iter().enumerate() {
        println!(
            "  {name:<12} {:.2}({:.2})",
            100.0 * result.mean[m],
            100.0 * result.std[m]
        );
    }
    println!("results: {}", out.display());
    if let Some(d) = &result.diagnostics_path {
        println!("diagnostics: {}", d.display());
    }
    Ok(())
}

fn tables(
    inputs: Vec<PathBuf>,
    format: Format,
    wilcoxon: Option<String>,
    ranks: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let results = inputs
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunResult::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let format = match format {
        Format::Md => TableFormat::Markdown,
        Format::Csv => TableFormat::Csv,
    };
    let opts = TableOptions {
        wilcoxon_reference: wilcoxon,
        friedman_ranks: ranks,
    };
    let text = emit_tables(&results, format, &opts)?;
    match out {
        Some(path) => {
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn stats(table: PathBuf, test: Test, reference: Option<String>) -> Result<()> {
    let t =
        AccuracyTable::from_csv(&table).with_context(|| format!("reading {}", table.display()))?;
    match test {
        Test::Friedman => {
            for (name, r) in t.methods.iter().zip(friedman_mean_ranks(&t)) {
                println!("{name}\t{r:.4}");
            }
        }
        Test::Kruskal => {
            let r = kruskal_columns(&t)?;
            println!("H\t{:.6}\np\t{:.6e}", r.statistic, r.p_value);
        }
        Test::Wilcoxon => {
            let idx = match &reference {
                Some(name) => match t.method_index(name) {
                    Some(i) => i,
                    None => bail!("no method named {name:?} in {}", table.display()),
                },
                None => 0,
            };
            println!("method\tW\tW+\tW-\tn\tp\tdirection");
            for (name, r) in wilcoxon_against(&t, idx)? {
                println!(
                    "{name}\t{}\t{}\t{}\t{}\t{:.6e}\t{:?}",
                    r.statistic, r.w_plus, r.w_minus, r.n, r.p_value, r.direction
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Tables {
            inputs,
            format,
            wilcoxon,
            ranks,
            out,
        } => tables(inputs, format, wilcoxon, ranks, out),
        Command::Stats {
            table,
            test,
            reference,
        } => stats(table, test, reference),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

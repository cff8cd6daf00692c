use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use tiny_circuits::encoding::Strategy;
use tinyclf::commands::{self, EmitFormat, PartitionName};
use tinyclf::error::{CliError, Result};
use tinyclf::explore::{self, Grid};
use tinyclf::pipeline;
use tinyclf::RunConfig;

/// Evolve tiny combinational classifier circuits from tabular data.
///
/// Any config field can be set with `--key value`, e.g. `--n 50`,
/// `--hyperparameters.kappa 100`, `--strategy gray` or `--dataset data/iris.csv`.
#[derive(Parser, Debug)]
#[command(name = "tinyclf", version)]
struct Cli {
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline and write the circuit, Verilog, DOT, report and trace.
    Evolve,
    /// Sweep a grid of settings and append one CSV row per run.
    Explore {
        #[arg(long, value_delimiter = ',')]
        grid_n: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_function_set: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        grid_kappa: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_max_generations: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_strategy: Vec<Strategy>,
        #[arg(long, value_delimiter = ',')]
        grid_bits: Vec<usize>,
        /// Explicit seed list.
        #[arg(long, value_delimiter = ',', conflicts_with = "n_seeds")]
        seeds: Vec<u64>,
        /// Consecutive seeds per cell, starting at the run seed.
        #[arg(long)]
        n_seeds: Option<usize>,
        /// Output CSV; defaults to `<out-dir>/explore.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Score a saved circuit on the configured dataset split.
    Evaluate {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
    },
    /// Render a saved circuit.
    Emit {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, value_enum, default_value = "verilog")]
        format: EmitFormat,
        /// Adds port comments to Verilog output.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Single stuck-at fault analysis of a saved circuit.
    Faults {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        partition: PartitionName,
        /// Defaults to `<out-dir>/<name>.faults.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Show how the configured encoder binarizes the dataset.
    EncodeStats,
}

/// Separates `--key value` config overrides from the flags clap knows about.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let cmd = Cli::command();
    let longs = |c: &clap::Command| -> HashMap<String, bool> {
        c.get_arguments().filter_map(|a| a.get_long().map(|l| (l.to_string(), a.get_action().takes_values()))).collect()
    };
    let mut known = longs(&cmd);
    known.insert("help".into(), false);
    known.insert("version".into(), false);

    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    let mut sub_seen = false;
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        i += 1;
        if i == 1 {
            kept.push(a.clone());
            continue;
        }
        let Some(body) = a.strip_prefix("--").filter(|b| !b.is_empty()) else {
            if !sub_seen && !a.starts_with('-') {
                if let Some(sub) = cmd.find_subcommand(a) {
                    known.extend(longs(sub));
                    sub_seen = true;
                }
            }
            kept.push(a.clone());
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        match known.get(name) {
            Some(&takes_value) => {
                kept.push(a.clone());
                if takes_value && inline.is_none() && i < args.len() {
                    kept.push(args[i].clone());
                    i += 1;
                }
            }
            None => {
                let value = match inline {
                    Some(v) => v,
                    None if i < args.len()
                        && !args[i].starts_with("--")
                        && (sub_seen || cmd.find_subcommand(&args[i]).is_none()) =>
                    {
                        i += 1;
                        args[i - 1].clone()
                    }
                    // a bare flag sets a boolean
                    None => "true".into(),
                };
                overrides.push((name.to_string(), value));
            }
        }
    }
    (kept, overrides)
}

fn resolve_config(cli: &Cli, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.hyperparameters.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli, overrides: Vec<(String, String)>) -> Result<()> {
    let cfg = resolve_config(&cli, &overrides)?;
    match cli.command {
        Command::Evolve => {
            let outcome = pipeline::run_config(&cfg)?;
            let paths = pipeline::write_artifacts(&cfg, &outcome)?;
            let rr = &outcome.report;
            for w in &rr.warnings {
                eprintln!("warning: {w}");
            }
            for p in paths.all() {
                println!("wrote {}", p.display());
            }
            println!(
                "{} after {} generations; {} active gates",
                rr.termination_reason, rr.generations_run, rr.active_gates
            );
            match &rr.metrics.test {
                Some(m) => println!("test balanced accuracy: {:.4}", m.rho),
                None => println!("test partition is empty"),
            }
        }
        Command::Explore {
            grid_n,
            grid_function_set,
            grid_kappa,
            grid_max_generations,
            grid_strategy,
            grid_bits,
            seeds,
            n_seeds,
            csv,
        } => {
            let seeds = match n_seeds {
                Some(k) => (0..k as u64).map(|i| cfg.hyperparameters.seed.wrapping_add(i)).collect(),
                None => seeds,
            };
            let grid = Grid {
                n: grid_n,
                function_set: grid_function_set,
                kappa: grid_kappa,
                max_generations: grid_max_generations,
                strategy: grid_strategy,
                bits: grid_bits,
                seeds,
                auto_encode: false,
            };
            let csv = csv.unwrap_or_else(|| cfg.out_dir.join("explore.csv"));
            let s = explore::explore(&cfg, &grid, &csv)?;
            println!(
                "{} cells: {} run, {} already present, {} failed; results in {}",
                s.cells,
                s.cells - s.skipped,
                s.skipped,
                s.failed,
                csv.display()
            );
        }
        Command::Evaluate { circuit, encoder } => {
            let e = commands::evaluate(&cfg, &circuit, &encoder)?;
            println!("{}", serde_json::to_string_pretty(&e).map_err(CliError::internal)?);
        }
        Command::Emit { circuit, format, encoder, output } => {
            let text = commands::emit(&circuit, format, cfg.module_name(), encoder.as_deref())?;
            write_or_print(output.as_ref(), &text)?;
        }
        Command::Faults { circuit, encoder, partition, output } => {
            let a = commands::faults(&cfg, &circuit, &encoder, partition)?;
            let output = output.unwrap_or_else(|| cfg.out_dir.join(format!("{}.faults.csv", cfg.name)));
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(CliError::internal)?;
            }
            write_or_print(Some(&output), &commands::fault_csv(&a.records)?)?;
            println!(
                "{} faults on {} rows; vulnerability {:.4}; written to {}",
                a.records.len(),
                a.rows,
                a.vulnerability,
                output.display()
            );
        }
        Command::EncodeStats => print!("{}", commands::encode_stats(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::split_overrides;

    fn split(line: &str) -> (Vec<String>, Vec<(String, String)>) {
        split_overrides(line.split_whitespace().map(String::from).collect())
    }

    #[test]
    fn overrides_are_split_on_either_side_of_the_subcommand() {
        let (kept, ov) = split("tinyclf --dataset d.csv --seed 3 evolve --n 50 --auto_encode --label y");
        assert_eq!(kept, ["tinyclf", "--seed", "3", "evolve"]);
        let pairs: Vec<_> = ov.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        assert_eq!(pairs, [("dataset", "d.csv"), ("n", "50"), ("auto_encode", "true"), ("label", "y")]);
    }

    #[test]
    fn bare_flag_before_subcommand_does_not_swallow_it() {
        let (kept, ov) = split("tinyclf --auto_encode evolve");
        assert_eq!(kept, ["tinyclf", "evolve"]);
        assert_eq!(ov, [("auto_encode".to_string(), "true".to_string())]);
        let (kept, _) = split("tinyclf emit --circuit c.json --format dot");
        assert_eq!(kept, ["tinyclf", "emit", "--circuit", "c.json", "--format", "dot"]);
    }
}

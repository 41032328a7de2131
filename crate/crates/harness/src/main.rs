use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinlink_core::memory::doppler_dephasing_time;
use spinlink_harness::report::{compare_to_reference, Reference};
use spinlink_harness::{
    analyze_events, run_campaign, write_summary, Campaign, HarnessError, Result, RunConfig, Summary, RUN_CONFIG_FILE,
};

#[derive(Parser)]
#[command(name = "spinlink", version, about = "Heralded spin-wave entanglement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign: config -> events, summary
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (0 = all cores); results do not depend on it
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Skip the event file
        #[arg(long)]
        no_events: bool,
    },
    /// Recompute the summary from an event file
    Analyze {
        events: PathBuf,
        /// Defaults to run.toml next to the event file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Reconstruct the density matrix and Bell fidelity from TOMO events
    Tomo {
        events: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare a summary with reference values
    Report {
        summary: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        z_threshold: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Doppler dephasing time for two wavelengths (m) and an atom speed (m/s)
    Doppler {
        lambda_coupling: f64,
        lambda_signal: f64,
        speed: f64,
    },
}

fn load_config(explicit: Option<PathBuf>, events: &std::path::Path) -> Result<RunConfig> {
    let path = explicit.unwrap_or_else(|| {
        events
            .parent()
            .unwrap_or_else(|| std::path::Path::new("."))
            .join(RUN_CONFIG_FILE)
    });
    RunConfig::load(&path)
}

fn report_warnings(summary: &Summary) {
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
}

fn print_metrics(summary: &Summary) {
    println!(
        "{} seed={} windows={} cycles={} events={}",
        summary.campaign, summary.seed, summary.windows, summary.cycles, summary.events
    );
    for (name, m) in &summary.metrics {
        match (m.value, m.stderr) {
            (Some(v), Some(s)) if s > 0.0 => println!("  {name:<34} {v:.6} ± {s:.6}"),
            (Some(v), _) => println!("  {name:<34} {v:.6}"),
            _ => println!("  {name:<34} undefined"),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            threads,
            no_events,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if no_events {
                cfg.write_events = false;
            }
            let summary = run_campaign(&cfg, &out, threads)?;
            print_metrics(&summary);
            report_warnings(&summary);
            println!("outputs in {}", out.display());
        }
        Command::Analyze { events, config, out } => {
            let cfg = load_config(config, &events)?;
            let summary = analyze_events(&cfg, &events)?;
            write_summary(&summary, &out)?;
            print_metrics(&summary);
            report_warnings(&summary);
        }
        Command::Tomo { events, config, out } => {
            let cfg = load_config(config, &events)?;
            if cfg.campaign != Campaign::Tomo {
                return Err(HarnessError::DataIntegrity(format!("tomo needs TOMO events, got {}", cfg.campaign)));
            }
            let summary = analyze_events(&cfg, &events)?;
            write_summary(&summary, &out)?;
            if let Some(rho) = &summary.rho {
                println!("reconstructed density matrix (re | im):");
                for i in 0..4 {
                    let re: Vec<String> = rho.re[i].iter().map(|v| format!("{v:+.4}")).collect();
                    let im: Vec<String> = rho.im[i].iter().map(|v| format!("{v:+.4}")).collect();
                    println!("  {}  |  {}", re.join(" "), im.join(" "));
                }
            }
            print_metrics(&summary);
            report_warnings(&summary);
        }
        Command::Report {
            summary,
            reference,
            z_threshold,
            out,
        } => {
            let s = Summary::load(&summary)?;
            let r = Reference::load(&reference)?;
            let cmp = compare_to_reference(&s, &r, z_threshold)?;
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
            let path = out.join("comparison.csv");
            let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            cmp.write_csv(file).map_err(|e| HarnessError::io(&path, e))?;
            println!("{:<34} {:>12} {:>12} {:>10} {:>8}  status", "metric", "computed", "reference", "unc", "z");
            for row in &cmp.rows {
                let computed = row.computed.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into());
                let z = row.z.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:<34} {:>12} {:>12} {:>10} {:>8}  {}",
                    row.metric,
                    computed,
                    row.reference_value,
                    row.reference_uncertainty,
                    z,
                    row.status.as_str()
                );
            }
            println!("overall: {}", if cmp.passed() { "PASS" } else { "FAIL" });
        }
        Command::Doppler {
            lambda_coupling,
            lambda_signal,
            speed,
        } => {
            let t = doppler_dephasing_time(lambda_coupling, lambda_signal, speed)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("doppler dephasing time: {:.4} us ({t:e} s)", t * 1e6);
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

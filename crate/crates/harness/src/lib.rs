//! Campaign runner for the spinlink simulator: configuration, the trap and
//! operate schedule, seeded parallel runs, event files, summaries and
//! comparison reports.

pub mod campaign;
pub mod config;
pub mod error;
pub mod events;
pub mod report;
pub mod summary;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{Campaign, RunConfig};
pub use error::{HarnessError, Result};
pub use summary::Summary;

pub const EVENTS_FILE: &str = "events.csv";
pub const RUN_CONFIG_FILE: &str = "run.toml";
pub const SUMMARY_FILE: &str = "summary.toml";

/// Simulates in memory (no files) and summarizes.
pub fn run_in_memory(cfg: &RunConfig, threads: usize) -> Result<Summary> {
    let out = campaign::simulate(cfg, None, threads)?;
    summary::summarize(cfg, &out.tallies, out.cycles, out.event_rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(|f| BufWriter::with_capacity(1 << 20, f))
        .map_err(|e| HarnessError::io(path, e))
}

/// Runs a campaign and writes `events.csv` (unless disabled), `run.toml`,
/// `summary.toml` and one `fringe_<name>.csv` per scan into `out_dir`.
pub fn run_campaign(cfg: &RunConfig, out_dir: &Path, threads: usize) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    std::fs::write(out_dir.join(RUN_CONFIG_FILE), cfg.to_toml_string())
        .map_err(|e| HarnessError::io(out_dir.join(RUN_CONFIG_FILE), e))?;
    let out = if cfg.write_events {
        let path = out_dir.join(EVENTS_FILE);
        let mut w = create(&path)?;
        let out = campaign::simulate(cfg, Some(&mut w), threads)?;
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        out
    } else {
        campaign::simulate(cfg, None, threads)?
    };
    let summary = summary::summarize(cfg, &out.tallies, out.cycles, out.event_rows)?;
    write_summary(&summary, out_dir)?;
    Ok(summary)
}

/// Re-derives the summary from an event file.
pub fn analyze_events(cfg: &RunConfig, events: &Path) -> Result<Summary> {
    let data = events::read_events(events)?;
    if data.campaign != cfg.campaign {
        return Err(HarnessError::DataIntegrity(format!(
            "events are from {} but the config runs {}",
            data.campaign, cfg.campaign
        )));
    }
    summary::summarize(cfg, &data.tallies, data.cycles, data.rows)
}

pub fn write_summary(summary: &Summary, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    let path = out_dir.join(SUMMARY_FILE);
    std::fs::write(&path, summary.to_toml_string()).map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);
    for scan in &summary.fringes {
        let path = out_dir.join(format!("fringe_{}.csv", scan.name.trim_start_matches("fringe_")));
        let mut w = create(&path)?;
        report::emit_fringe_plot_data(scan, &mut w).map_err(|e| HarnessError::io(&path, e))?;
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    if let Some(rho) = &summary.rho {
        let path = out_dir.join("rho.csv");
        let mut text = String::from("row,col,re,im\n");
        for i in 0..4 {
            for j in 0..4 {
                text.push_str(&format!("{i},{j},{},{}\n", rho.re[i][j], rho.im[i][j]));
            }
        }
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

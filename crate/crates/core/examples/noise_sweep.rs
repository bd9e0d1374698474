//! A reduced (p, x, G) sweep written to a records table, then resumed.
//!
//! ```text
//! cargo run --release --example noise_sweep [output-dir]
//! ```

use std::path::PathBuf;

use noisy_rlvr::cli::config::{ExperimentConfig, Preset};
use noisy_rlvr::sweep::{run_grid, GridOutput};

fn main() -> noisy_rlvr::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("noisy-rlvr-noise-sweep"));
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.sweep.noise_levels = vec![0.0, 0.2, 0.4];
    cfg.sweep.group_sizes = vec![8, 32];
    cfg.sweep.seeds = 2;
    let sweep = cfg.sweep_config();
    let out = GridOutput { dir: dir.clone() };

    let records = run_grid(&sweep, 4, Some(&out), &|r| {
        eprintln!(
            "done p={} x={} G={} seed={}",
            r.p, r.x, r.group_size, r.seed
        );
    })?;
    println!(
        "{} records in {}",
        records.len(),
        out.records_path().display()
    );
    println!(
        "{:>4} {:>4} {:>3} {:>5} {:>7} {:>7}",
        "p", "x", "G", "seed", "final", "best"
    );
    for r in &records {
        println!(
            "{:>4} {:>4} {:>3} {:>5} {:>7.3} {:>7.3}",
            r.p,
            r.x,
            r.group_size,
            r.seed,
            r.final_accuracy.unwrap_or(f64::NAN),
            r.best_accuracy.unwrap_or(f64::NAN)
        );
    }

    // Everything is already present, so this only re-reads the table.
    let again = run_grid(&sweep, 4, Some(&out), &|_| {
        unreachable!("no run should repeat")
    })?;
    assert_eq!(again, records);
    println!("resume found all {} rows; nothing re-run", again.len());
    Ok(())
}

//! Render accuracy heatmaps from a records table.
//!
//! Builds a table from a published surface (three seeds with small jitter
//! per cell), then writes one CSV and SVG per rollout count.
//!
//! ```text
//! cargo run --release --example heatmap [output-dir]
//! ```

use std::path::PathBuf;

use noisy_rlvr::cli::heatmap::{build_heatmaps, write_heatmaps};
use noisy_rlvr::fit::{predict, published};
use noisy_rlvr::noise::DEFAULT_LEVELS;
use noisy_rlvr::rng::{substream, Purpose};
use noisy_rlvr::sweep::RunStatus;
use noisy_rlvr::{EvalRecord, FitTarget};
use rand::Rng;

fn main() -> noisy_rlvr::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("noisy-rlvr-heatmap"));
    let mut rng = substream(Purpose::Run, &[4]);
    let mut records = Vec::new();
    for &p in &DEFAULT_LEVELS {
        for &x in &DEFAULT_LEVELS {
            for g in [8, 16, 32] {
                for seed in 0..3 {
                    let acc = (predict(&published::QWEN_0_5B_FINAL, p, x, g)
                        + rng.random_range(-0.02..0.02))
                    .clamp(0.0, 1.0);
                    records.push(EvalRecord {
                        task: "synthetic".into(),
                        p,
                        x,
                        group_size: g,
                        seed,
                        status: RunStatus::Ok,
                        final_accuracy: Some(acc),
                        best_accuracy: Some(acc),
                        steps_to_threshold: None,
                        stability: None,
                        wall_steps: 0,
                    });
                }
            }
        }
    }

    for h in build_heatmaps(&records, FitTarget::Final) {
        println!("G = {}", h.group_size);
        print!("{}", h.to_csv());
    }
    for path in write_heatmaps(&records, FitTarget::Final, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

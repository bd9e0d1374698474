//! The noisy verifier in isolation: empirical flip rates for each label
//! class, and how the reward-correctness covariance shrinks by `1 - p - x`.
//!
//! ```text
//! cargo run --release --example noisy_verifier
//! ```

use noisy_rlvr::noise::perturb;
use noisy_rlvr::rng::{substream, Purpose};
use noisy_rlvr::{NoiseSpec, TrueLabel};
use rand::Rng;

fn main() -> noisy_rlvr::Result<()> {
    let draws = 200_000;
    println!(
        "{:>5} {:>5} {:>10} {:>10} {:>12} {:>10}",
        "p", "x", "FN rate", "FP rate", "cov(r, y*)", "1-p-x"
    );
    for (p, x) in [
        (0.0, 0.0),
        (0.1, 0.0),
        (0.0, 0.3),
        (0.2, 0.2),
        (0.3, 0.4),
        (0.5, 0.5),
    ] {
        let noise = NoiseSpec::new(p, x)?;
        let mut labels = substream(Purpose::Run, &[1]);
        let mut flips = substream(Purpose::Flip, &[1]);
        let (mut fn_count, mut fp_count, mut pos) = (0usize, 0usize, 0usize);
        let (mut sy, mut sr, mut syr) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let y = TrueLabel::new(labels.random::<bool>());
            let r = perturb(y, noise, &mut flips);
            if y.is_correct() {
                pos += 1;
                fn_count += r.flipped() as usize;
            } else {
                fp_count += r.flipped() as usize;
            }
            let (yv, rv) = (y.value() as f64, r.as_f64());
            sy += yv;
            sr += rv;
            syr += yv * rv;
        }
        let n = draws as f64;
        // With balanced labels, cov(r, y*) = (1 - p - x) / 4.
        let cov = syr / n - (sy / n) * (sr / n);
        println!(
            "{p:>5} {x:>5} {:>10.4} {:>10.4} {:>12.4} {:>10.2}",
            fn_count as f64 / pos as f64,
            fp_count as f64 / (draws - pos) as f64,
            4.0 * cov,
            1.0 - p - x
        );
    }
    Ok(())
}

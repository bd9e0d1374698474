//! Fit the quadratic-in-noise, log-linear-in-G surface and maximize it.
//!
//! The data are the 1.5B final-accuracy coefficients evaluated on the
//! 6 × 6 × {8, 16, 32} grid plus uniform noise, so the fit should land near
//! the generating row and the optimum near `(p, x) = (0, 0.3)`. The surface's
//! best point on the `x = 0` edge is only about 0.006 lower, so heavier noise
//! can move the argmax to that edge.
//!
//! ```text
//! cargo run --release --example fit_scaling_surface
//! ```

use noisy_rlvr::fit::{
    maximize_surface, ols_fit_observations, published, synthetic_observations, Observation, Region,
};
use noisy_rlvr::noise::DEFAULT_LEVELS;
use noisy_rlvr::rng::{substream, Purpose};
use noisy_rlvr::FitTarget;
use rand::Rng;

fn main() -> noisy_rlvr::Result<()> {
    let truth = published::QWEN_1_5B_FINAL;
    let mut rng = substream(Purpose::Run, &[11]);
    let obs: Vec<Observation> = synthetic_observations(&truth, &DEFAULT_LEVELS, &[8, 16, 32])
        .into_iter()
        .map(|o| Observation {
            y: o.y + rng.random_range(-0.01..0.01),
            ..o
        })
        .collect();

    let report = ols_fit_observations(&obs, FitTarget::Final)?;
    println!("generating: {}", truth.equation());
    println!("fitted:     {}", report.coefficients.equation());
    println!(
        "R^2 {:.4}, adjusted R^2 {:.4}, N {}",
        report.r2, report.adjusted_r2, report.n
    );

    for g in [8, 16, 32] {
        let opt = maximize_surface(&report.coefficients, Region::default(), g);
        println!(
            "G={g:>2}: optimum p={:.4} x={:.4} ({:?}), value {:.4}, gain over (0,0) {:.4}",
            opt.p, opt.x, opt.location_class, opt.value, opt.gain_over_origin
        );
    }

    for (name, coeffs) in published::ALL {
        let opt = maximize_surface(&coeffs, Region::default(), 8);
        println!(
            "published {name:<10}: optimum p={:.4} x={:.4}, gain over (0,0) {:.4}",
            opt.p, opt.x, opt.gain_over_origin
        );
    }
    Ok(())
}

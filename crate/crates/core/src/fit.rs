//! Scaling-surface regression and its constrained maximum.
//!
//! The model is
//!
//! ```text
//! y ≈ a·x² + b·x·p + c·p² + d·x + e·p + f·log₂G + g
//! ```
//!
//! with `p` the false-negative rate, `x` the false-positive rate and `G` the
//! rollouts per prompt. Coefficients come from ordinary least squares (QR);
//! adjusted R² counts `k = 6` predictors plus the intercept. When the target
//! has zero variance, R² and adjusted R² are reported as 0 with a warning.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::EvalRecord;

/// Names of the design columns, in [`design_row`] order.
pub const COLUMN_NAMES: [&str; 7] = ["x^2", "x*p", "p^2", "x", "p", "log2(G)", "intercept"];

/// Predictors excluding the intercept.
pub const PREDICTORS: usize = 6;

/// Relative residual below which a column counts as a combination of the
/// others.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitCoefficients {
    /// x²
    pub a: f64,
    /// x·p
    pub b: f64,
    /// p²
    pub c: f64,
    /// x
    pub d: f64,
    /// p
    pub e: f64,
    /// log₂G
    pub f: f64,
    /// intercept
    pub g: f64,
}

impl FitCoefficients {
    pub fn from_array(v: [f64; 7]) -> Self {
        let [a, b, c, d, e, f, g] = v;
        FitCoefficients {
            a,
            b,
            c,
            d,
            e,
            f,
            g,
        }
    }

    pub fn to_array(self) -> [f64; 7] {
        [self.a, self.b, self.c, self.d, self.e, self.f, self.g]
    }

    /// The quadratic part in `(p, x)` without the log and intercept terms.
    fn quadratic(&self, p: f64, x: f64) -> f64 {
        self.a * x * x + self.b * x * p + self.c * p * p + self.d * x + self.e * p
    }

    /// The fitted equation with four decimals, terms in the order
    /// x², p², xp, x, p, log₂r, intercept.
    pub fn equation(&self) -> String {
        let terms = [
            (self.a, "x^2"),
            (self.c, "p^2"),
            (self.b, "xp"),
            (self.d, "x"),
            (self.e, "p"),
            (self.f, "log2(r)"),
            (self.g, ""),
        ];
        let mut out = String::from("y =");
        for (i, (coef, name)) in terms.iter().enumerate() {
            let sign = if *coef < 0.0 {
                "-"
            } else if i == 0 {
                ""
            } else {
                "+"
            };
            if i == 0 {
                out.push_str(&format!(" {sign}{:.4}{name}", coef.abs()));
            } else {
                out.push_str(&format!(" {sign} {:.4}{name}", coef.abs()));
            }
        }
        out
    }
}

/// `[x², x·p, p², x, p, log₂G, 1]`.
pub fn design_row(p: f64, x: f64, group_size: usize) -> [f64; 7] {
    assert!(group_size >= 1, "group size must be positive");
    [x * x, x * p, p * p, x, p, (group_size as f64).log2(), 1.0]
}

/// Raw surface value, not clamped to `[0, 1]`.
pub fn predict(coeffs: &FitCoefficients, p: f64, x: f64, group_size: usize) -> f64 {
    design_row(p, x, group_size)
        .iter()
        .zip(coeffs.to_array())
        .map(|(d, c)| d * c)
        .sum()
}

/// Which accuracy column a fit targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    Final,
    Best,
}

impl FitTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            FitTarget::Final => "final",
            FitTarget::Best => "best",
        }
    }

    pub fn value(self, r: &EvalRecord) -> Option<f64> {
        match self {
            FitTarget::Final => r.final_accuracy,
            FitTarget::Best => r.best_accuracy,
        }
    }
}

/// One data point entering a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p: f64,
    pub x: f64,
    pub group_size: usize,
    pub y: f64,
}

/// Successful records with a value for `target`.
pub fn observations(records: &[EvalRecord], target: FitTarget) -> Vec<Observation> {
    records
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| {
            target.value(r).map(|y| Observation {
                p: r.p,
                x: r.x,
                group_size: r.group_size,
                y,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub p: f64,
    pub x: f64,
    pub group_size: usize,
    pub actual: f64,
    pub predicted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub target: FitTarget,
    pub coefficients: FitCoefficients,
    pub r2: f64,
    pub adjusted_r2: f64,
    pub n: usize,
    /// Predictors used for adjusted R² (6, or 5 when the log term was dropped).
    pub predictors: usize,
    pub points: Vec<FitPoint>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|pt| pt.residual)
    }
}

/// OLS fit of the surface to `records` (successful rows only).
pub fn ols_fit(records: &[EvalRecord], target: FitTarget) -> Result<FitReport> {
    ols_fit_observations(&observations(records, target), target)
}

/// OLS fit over raw observations. Fails on a rank-deficient design, naming
/// every column that is a linear combination of the others.
pub fn ols_fit_observations(obs: &[Observation], target: FitTarget) -> Result<FitReport> {
    fit_columns(obs, target, &[0, 1, 2, 3, 4, 5, 6])
}

/// Like [`ols_fit_observations`], except that a design whose only defect is
/// a single rollout count fits with `f = 0` and records a warning.
pub fn ols_fit_lenient(obs: &[Observation], target: FitTarget) -> Result<FitReport> {
    match ols_fit_observations(obs, target) {
        Err(Error::RankDeficient { columns }) if single_group_size(obs) => {
            let mut report =
                fit_columns(obs, target, &[0, 1, 2, 3, 4, 6]).map_err(|e| match e {
                    Error::RankDeficient { .. } => Error::RankDeficient { columns },
                    other => other,
                })?;
            report.warnings.insert(
                0,
                "only one rollout count present: log2(G) is confounded with the intercept; fitted with f = 0"
                    .to_string(),
            );
            Ok(report)
        }
        other => other,
    }
}

fn single_group_size(obs: &[Observation]) -> bool {
    obs.windows(2).all(|w| w[0].group_size == w[1].group_size)
}

fn fit_columns(obs: &[Observation], target: FitTarget, cols: &[usize]) -> Result<FitReport> {
    let n = obs.len();
    let k = cols.len() - 1;
    if n <= cols.len() {
        return Err(Error::TooFewObservations {
            have: n,
            need: cols.len(),
        });
    }
    let full = DMatrix::from_fn(n, 7, |i, j| {
        let o = &obs[i];
        design_row(o.p, o.x, o.group_size)[j]
    });
    let design = full.select_columns(cols);
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.y));

    let collinear = collinear_columns(&design);
    if !collinear.is_empty() {
        return Err(Error::RankDeficient {
            columns: collinear
                .iter()
                .map(|&j| COLUMN_NAMES[cols[j]].to_string())
                .collect(),
        });
    }

    let qr = design.clone().qr();
    let qty = qr.q().transpose() * &y;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::numerical("ols_fit", "singular triangular factor"))?;

    let mut coef = [0.0; 7];
    for (slot, &col) in cols.iter().enumerate() {
        coef[col] = beta[slot];
    }
    let coefficients = FitCoefficients::from_array(coef);

    let fitted = &design * &beta;
    let mean = y.mean();
    let ssr: f64 = (&y - &fitted).iter().map(|r| r * r).sum();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let scale: f64 = 1.0 + y.iter().map(|v| v * v).sum::<f64>();

    let mut warnings = Vec::new();
    let (r2, adjusted_r2) = if sst <= 1e-20 * scale {
        warnings.push("target has zero variance; R^2 reported as 0".to_string());
        (0.0, 0.0)
    } else {
        let r2 = 1.0 - ssr / sst;
        let adj = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - k as f64 - 1.0);
        (r2, adj)
    };

    let points = obs
        .iter()
        .zip(fitted.iter())
        .map(|(o, &pred)| FitPoint {
            p: o.p,
            x: o.x,
            group_size: o.group_size,
            actual: o.y,
            predicted: pred,
            residual: o.y - pred,
        })
        .collect();

    Ok(FitReport {
        target,
        coefficients,
        r2,
        adjusted_r2,
        n,
        predictors: k,
        points,
        warnings,
    })
}

/// Columns of `design` that lie (numerically) in the span of the others.
pub fn collinear_columns(design: &DMatrix<f64>) -> Vec<usize> {
    let m = design.ncols();
    (0..m)
        .filter(|&j| {
            let col = design.column(j).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                return true;
            }
            let others = design.clone().remove_column(j);
            let svd = others.clone().svd(true, true);
            let Ok(coef) = svd.solve(&col, 1e-12) else {
                return false;
            };
            let resid = (&col - &others * coef).norm();
            resid / norm < COLLINEAR_TOL
        })
        .collect()
}

/// Rectangle `[p_lo, p_hi] × [x_lo, x_hi]` over which the surface is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub p_lo: f64,
    pub p_hi: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl Default for Region {
    /// The swept noise square `[0, 0.5]²`.
    fn default() -> Self {
        Region {
            p_lo: 0.0,
            p_hi: 0.5,
            x_lo: 0.0,
            x_hi: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationClass {
    Interior,
    Edge,
    Corner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceOptimum {
    pub p: f64,
    pub x: f64,
    pub value: f64,
    /// `value` minus the surface at `(p, x) = (0, 0)`.
    pub gain_over_origin: f64,
    pub location_class: LocationClass,
}

/// Exact maximum of the fitted surface over `region` at fixed `G`.
///
/// Candidates are the four corners, the 1-D vertex of each edge when it lies
/// strictly inside that edge and the edge is concave, and the interior
/// stationary point when the Hessian is negative definite and the point is
/// strictly inside. Ties keep the earliest candidate in that order.
pub fn maximize_surface(
    coeffs: &FitCoefficients,
    region: Region,
    group_size: usize,
) -> SurfaceOptimum {
    let FitCoefficients { a, b, c, d, e, .. } = *coeffs;
    let Region {
        p_lo,
        p_hi,
        x_lo,
        x_hi,
    } = region;
    let inside = |v: f64, lo: f64, hi: f64| v > lo && v < hi;

    let mut candidates = vec![(p_lo, x_lo), (p_lo, x_hi), (p_hi, x_lo), (p_hi, x_hi)];
    if a < 0.0 {
        for p in [p_lo, p_hi] {
            // a·x² + (b·p + d)·x
            let x = -(b * p + d) / (2.0 * a);
            if inside(x, x_lo, x_hi) {
                candidates.push((p, x));
            }
        }
    }
    if c < 0.0 {
        for x in [x_lo, x_hi] {
            // c·p² + (b·x + e)·p
            let p = -(b * x + e) / (2.0 * c);
            if inside(p, p_lo, p_hi) {
                candidates.push((p, x));
            }
        }
    }
    let det = 4.0 * a * c - b * b;
    if a < 0.0 && det > 0.0 {
        let x = (b * e - 2.0 * c * d) / det;
        let p = (b * d - 2.0 * a * e) / det;
        if inside(p, p_lo, p_hi) && inside(x, x_lo, x_hi) {
            candidates.push((p, x));
        }
    }

    let (mut best_p, mut best_x) = candidates[0];
    let mut best = coeffs.quadratic(best_p, best_x);
    for &(p, x) in &candidates[1..] {
        let v = coeffs.quadratic(p, x);
        if v > best {
            (best_p, best_x, best) = (p, x, v);
        }
    }

    let on_p = best_p == p_lo || best_p == p_hi;
    let on_x = best_x == x_lo || best_x == x_hi;
    let location_class = match (on_p, on_x) {
        (true, true) => LocationClass::Corner,
        (false, false) => LocationClass::Interior,
        _ => LocationClass::Edge,
    };
    let value = predict(coeffs, best_p, best_x, group_size);
    SurfaceOptimum {
        p: best_p,
        x: best_x,
        value,
        gain_over_origin: value - predict(coeffs, 0.0, 0.0, group_size),
        location_class,
    }
}

/// `(actual, predicted, residual)` per observation.
pub fn report_predicted_vs_actual(report: &FitReport) -> Vec<(f64, f64, f64)> {
    report
        .points
        .iter()
        .map(|pt| (pt.actual, pt.predicted, pt.residual))
        .collect()
}

/// Writes `actual,predicted,residual` rows.
pub fn write_predicted_vs_actual(report: &FitReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["actual", "predicted", "residual"])?;
    for (a, p, r) in report_predicted_vs_actual(report) {
        w.write_record([a.to_string(), p.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// The JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub target: FitTarget,
    pub n: usize,
    pub coefficients: FitCoefficients,
    pub r2: f64,
    pub adjusted_r2: f64,
    pub predictors: usize,
    pub group_size_fixed: usize,
    pub equation: String,
    pub optimum: SurfaceOptimum,
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn new(report: &FitReport, region: Region, group_size_fixed: usize) -> Self {
        FitSummary {
            target: report.target,
            n: report.n,
            coefficients: report.coefficients,
            r2: report.r2,
            adjusted_r2: report.adjusted_r2,
            predictors: report.predictors,
            group_size_fixed,
            equation: report.coefficients.equation(),
            optimum: maximize_surface(&report.coefficients, region, group_size_fixed),
            warnings: report.warnings.clone(),
        }
    }
}

/// Published coefficient rows for the 1.5B and 0.5B models, final and best
/// targets.
pub mod published {
    use super::FitCoefficients;

    pub const QWEN_1_5B_FINAL: FitCoefficients = FitCoefficients {
        a: -0.936,
        b: -1.978,
        c: -1.052,
        d: 0.565,
        e: 0.577,
        f: 0.0344,
        g: 0.508,
    };
    pub const QWEN_1_5B_BEST: FitCoefficients = FitCoefficients {
        a: -0.668,
        b: -1.694,
        c: -0.867,
        d: 0.450,
        e: 0.506,
        f: 0.0213,
        g: 0.604,
    };
    pub const QWEN_0_5B_FINAL: FitCoefficients = FitCoefficients {
        a: -0.389,
        b: -0.926,
        c: -0.617,
        d: -0.088,
        e: 0.114,
        f: 0.0621,
        g: 0.216,
    };
    pub const QWEN_0_5B_BEST: FitCoefficients = FitCoefficients {
        a: -0.386,
        b: -0.990,
        c: -0.601,
        d: 0.077,
        e: 0.204,
        f: 0.0317,
        g: 0.366,
    };

    /// Reported adjusted R² for the rows above, in the same order.
    pub const ADJUSTED_R2: [f64; 4] = [0.782, 0.720, 0.850, 0.862];

    pub const ALL: [(&str, FitCoefficients); 4] = [
        ("1.5B final", QWEN_1_5B_FINAL),
        ("1.5B best", QWEN_1_5B_BEST),
        ("0.5B final", QWEN_0_5B_FINAL),
        ("0.5B best", QWEN_0_5B_BEST),
    ];
}

/// Exact targets from `coeffs` on the grid `levels² × group_sizes`.
pub fn synthetic_observations(
    coeffs: &FitCoefficients,
    levels: &[f64],
    group_sizes: &[usize],
) -> Vec<Observation> {
    let mut out = Vec::new();
    for &p in levels {
        for &x in levels {
            for &g in group_sizes {
                out.push(Observation {
                    p,
                    x,
                    group_size: g,
                    y: predict(coeffs, p, x, g),
                });
            }
        }
    }
    out
}

//! Accuracy heatmaps over the noise grid, one per rollout count.
//!
//! Every SVG uses the same fixed color scale on `[0, 1]`: a five-stop
//! viridis gradient (`#440154`, `#3b528b`, `#21918c`, `#5ec962`, `#fde725`)
//! interpolated linearly in RGB. Missing cells are drawn light gray with a
//! dash.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::fit::FitTarget;
use crate::sweep::EvalRecord;

const STOPS: [(f64, [u8; 3]); 5] = [
    (0.0, [0x44, 0x01, 0x54]),
    (0.25, [0x3b, 0x52, 0x8b]),
    (0.5, [0x21, 0x91, 0x8c]),
    (0.75, [0x5e, 0xc9, 0x62]),
    (1.0, [0xfd, 0xe7, 0x25]),
];

pub const MISSING_COLOR: &str = "#d9d9d9";

/// Hex color for an accuracy, clamped to `[0, 1]`.
pub fn color_for(accuracy: f64) -> String {
    let v = accuracy.clamp(0.0, 1.0);
    let i = STOPS
        .windows(2)
        .position(|w| v <= w[1].0)
        .unwrap_or(STOPS.len() - 2);
    let (lo, hi) = (STOPS[i], STOPS[i + 1]);
    let t = (v - lo.0) / (hi.0 - lo.0);
    let ch = |k: usize| (lo.1[k] as f64 + t * (hi.1[k] as f64 - lo.1[k] as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

/// Mean accuracy per `(p, x)` cell for one rollout count.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub group_size: usize,
    pub p_levels: Vec<f64>,
    pub x_levels: Vec<f64>,
    /// `cells[i][j]` is `(p_levels[i], x_levels[j])`.
    pub cells: Vec<Vec<Option<f64>>>,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Cell means, one entry per `(p, x, G)`, averaged over seeds.
pub fn aggregate(
    records: &[EvalRecord],
    target: FitTarget,
) -> BTreeMap<(u64, u64, usize), (f64, usize)> {
    let mut acc: BTreeMap<(u64, u64, usize), (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        if let Some(v) = target.value(r) {
            let e = acc
                .entry((r.p.to_bits(), r.x.to_bits(), r.group_size))
                .or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    for v in acc.values_mut() {
        v.0 /= v.1 as f64;
    }
    acc
}

/// One heatmap per rollout count, axes taken from every level present.
pub fn build_heatmaps(records: &[EvalRecord], target: FitTarget) -> Vec<Heatmap> {
    let p_levels = sorted_unique(records.iter().map(|r| r.p).collect());
    let x_levels = sorted_unique(records.iter().map(|r| r.x).collect());
    let mut groups: Vec<usize> = records.iter().map(|r| r.group_size).collect();
    groups.sort_unstable();
    groups.dedup();
    let means = aggregate(records, target);
    groups
        .into_iter()
        .map(|g| Heatmap {
            group_size: g,
            cells: p_levels
                .iter()
                .map(|p| {
                    x_levels
                        .iter()
                        .map(|x| means.get(&(p.to_bits(), x.to_bits(), g)).map(|m| m.0))
                        .collect()
                })
                .collect(),
            p_levels: p_levels.clone(),
            x_levels: x_levels.clone(),
        })
        .collect()
}

impl Heatmap {
    /// Rows are p ascending, columns x ascending; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p\\x");
        for x in &self.x_levels {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
        for (p, row) in self.p_levels.iter().zip(&self.cells) {
            let _ = write!(s, "{p}");
            for cell in row {
                match cell {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_svg(&self, target: FitTarget) -> String {
        const CELL: usize = 64;
        const LEFT: usize = 70;
        const TOP: usize = 50;
        let (rows, cols) = (self.p_levels.len(), self.x_levels.len());
        let width = LEFT + cols * CELL + 110;
        let height = TOP + rows * CELL + 60;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"##
        );
        let _ = writeln!(
            s,
            r##"<text x="{LEFT}" y="24" font-size="15">{} accuracy, G = {}</text>"##,
            target.as_str(),
            self.group_size
        );
        for (i, row) in self.cells.iter().enumerate() {
            let y = TOP + i * CELL;
            for (j, cell) in row.iter().enumerate() {
                let x = LEFT + j * CELL;
                let (fill, label, ink) = match cell {
                    Some(v) => (
                        color_for(*v),
                        format!("{v:.2}"),
                        if *v > 0.6 { "#000" } else { "#fff" },
                    ),
                    None => (MISSING_COLOR.to_string(), "–".to_string(), "#555"),
                };
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#fff"/>"##
                );
                let _ = writeln!(
                    s,
                    r##"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{label}</text>"##,
                    x + CELL / 2,
                    y + CELL / 2 + 4
                );
            }
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{}" text-anchor="end">{}</text>"##,
                LEFT - 8,
                y + CELL / 2 + 4,
                self.p_levels[i]
            );
        }
        for (j, xv) in self.x_levels.iter().enumerate() {
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{}" text-anchor="middle">{xv}</text>"##,
                LEFT + j * CELL + CELL / 2,
                TOP + rows * CELL + 18
            );
        }
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" text-anchor="middle">false-positive rate x</text>"##,
            LEFT + cols * CELL / 2,
            TOP + rows * CELL + 40
        );
        let _ = writeln!(
            s,
            r##"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">false-negative rate p</text>"##,
            TOP + rows * CELL / 2,
            TOP + rows * CELL / 2
        );
        // Shared color bar, 1 at the top.
        let bar_x = LEFT + cols * CELL + 30;
        let bar_h = rows * CELL;
        for k in 0..bar_h {
            let v = 1.0 - k as f64 / (bar_h.max(2) - 1) as f64;
            let _ = writeln!(
                s,
                r##"<rect x="{bar_x}" y="{}" width="18" height="1" fill="{}"/>"##,
                TOP + k,
                color_for(v)
            );
        }
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}">1.0</text>"##,
            bar_x + 24,
            TOP + 10
        );
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}">0.0</text>"##,
            bar_x + 24,
            TOP + bar_h
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Writes `heatmap_<target>_G<g>.csv`/`.svg` per rollout count plus
/// `scaling_<target>.csv` (`p,x,G,mean_accuracy,runs`). Returns the paths.
pub fn write_heatmaps(
    records: &[EvalRecord],
    target: FitTarget,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for h in build_heatmaps(records, target) {
        let stem = format!("heatmap_{}_G{}", target.as_str(), h.group_size);
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, h.to_csv())?;
        let svg_path = dir.join(format!("{stem}.svg"));
        std::fs::write(&svg_path, h.to_svg(target))?;
        written.push(csv_path);
        written.push(svg_path);
    }
    let mut scaling = String::from("p,x,G,mean_accuracy,runs\n");
    for ((p, x, g), (mean, n)) in aggregate(records, target) {
        let _ = writeln!(
            scaling,
            "{},{},{g},{mean},{n}",
            f64::from_bits(p),
            f64::from_bits(x)
        );
    }
    let path = dir.join(format!("scaling_{}.csv", target.as_str()));
    std::fs::write(&path, scaling)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_endpoints() {
        assert_eq!(color_for(0.0), "#440154");
        assert_eq!(color_for(1.0), "#fde725");
        assert_eq!(color_for(0.5), "#21918c");
        assert_eq!(color_for(-3.0), color_for(0.0));
    }
}

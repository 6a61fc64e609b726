//! Beeswarm summary export: a per-point CSV and a static SVG.
//!
//! One horizontal band per feature in importance order. x is the
//! attribution, y a deterministic jitter from stacking points that share a
//! histogram bin (50 bins over the feature's attribution range, alternating
//! above and below the band axis), colour the min-max normalised feature
//! value.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ImportanceRanking;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const BINS: usize = 50;
const MAX_SPREAD: f64 = 0.4;
const MAX_STEP: f64 = 0.06;

const LOW_RGB: [f64; 3] = [0.0, 139.0, 251.0];
const HIGH_RGB: [f64; 3] = [255.0, 0.0, 81.0];

const WIDTH: f64 = 800.0;
const LEFT: f64 = 180.0;
const RIGHT: f64 = 40.0;
const TOP: f64 = 20.0;
const BAND: f64 = 32.0;
const AXIS: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmPoint {
    pub feature: usize,
    pub rank: usize,
    pub observation: usize,
    pub phi: f64,
    /// Offset from the band axis, in band heights.
    pub jitter: f64,
    /// Min-max normalised feature value in [0, 1].
    pub color: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeeswarmExport {
    pub points: Vec<BeeswarmPoint>,
    pub order: Vec<usize>,
    pub feature_names: Vec<String>,
}

fn normalised(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

fn jitter(phi: &[f64]) -> Vec<f64> {
    let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / BINS as f64;
    let bin_of = |p: f64| {
        if width > 0.0 {
            (((p - lo) / width) as usize).min(BINS - 1)
        } else {
            0
        }
    };
    let mut fill = [0usize; BINS];
    let slot: Vec<usize> = phi
        .iter()
        .map(|&p| {
            let b = bin_of(p);
            fill[b] += 1;
            fill[b] - 1
        })
        .collect();
    let deepest = fill.iter().map(|&c| c / 2).max().unwrap_or(0);
    let step = if deepest == 0 { 0.0 } else { MAX_STEP.min(MAX_SPREAD / deepest as f64) };
    slot.iter()
        .map(|&k| {
            let level = k.div_ceil(2) as f64;
            if k % 2 == 1 {
                level * step
            } else {
                -level * step
            }
        })
        .collect()
}

/// Lays out every (observation, feature) pair.
pub fn beeswarm_points(
    phi: &Matrix,
    values: &Matrix,
    ranking: &ImportanceRanking,
) -> Result<BeeswarmExport> {
    if phi.rows() != values.rows() || phi.cols() != values.cols() || ranking.order.len() != phi.cols() {
        return Err(Error::DimensionMismatch {
            expected: phi.cols(),
            got: values.cols(),
        });
    }
    let mut points = Vec::with_capacity(phi.rows() * phi.cols());
    for (rank, &j) in ranking.order.iter().enumerate() {
        let p = phi.column(j);
        let colors = normalised(&values.column(j));
        let offsets = jitter(&p);
        for i in 0..phi.rows() {
            points.push(BeeswarmPoint {
                feature: j,
                rank,
                observation: i,
                phi: p[i],
                jitter: offsets[i],
                color: colors[i],
            });
        }
    }
    Ok(BeeswarmExport {
        points,
        order: ranking.order.clone(),
        feature_names: ranking.feature_names.clone(),
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn color_hex(t: f64) -> String {
    let c: Vec<u8> = LOW_RGB
        .iter()
        .zip(HIGH_RGB)
        .map(|(l, h)| (l + t * (h - l)).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

impl BeeswarmExport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "name", "rank", "observation", "phi", "jitter", "color"])?;
        for p in &self.points {
            w.write_record([
                p.feature.to_string(),
                self.feature_names.get(p.feature).cloned().unwrap_or_default(),
                p.rank.to_string(),
                p.observation.to_string(),
                p.phi.to_string(),
                p.jitter.to_string(),
                p.color.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn to_svg(&self) -> String {
        let lo = self.points.iter().map(|p| p.phi).fold(0.0f64, f64::min);
        let hi = self.points.iter().map(|p| p.phi).fold(0.0f64, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let plot_w = WIDTH - LEFT - RIGHT;
        let x_of = |v: f64| LEFT + (v - lo) / span * plot_w;
        let height = TOP + BAND * self.order.len() as f64 + AXIS;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let zero = x_of(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{zero:.2}" y1="{TOP:.2}" x2="{zero:.2}" y2="{:.2}" stroke="#999" stroke-width="1"/>"##,
            TOP + BAND * self.order.len() as f64
        );
        for (rank, &j) in self.order.iter().enumerate() {
            let cy = TOP + BAND * (rank as f64 + 0.5);
            let name = self.feature_names.get(j).map(String::as_str).unwrap_or("");
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
                LEFT - 8.0,
                cy,
                escape(name)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT:.2}" y1="{cy:.2}" x2="{:.2}" y2="{cy:.2}" stroke="#eee" stroke-width="1"/>"##,
                WIDTH - RIGHT
            );
        }
        for p in &self.points {
            let cx = x_of(p.phi);
            let cy = TOP + BAND * (p.rank as f64 + 0.5) + p.jitter * BAND;
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{}"/>"#, color_hex(p.color));
        }
        let axis_y = TOP + BAND * self.order.len() as f64 + 4.0;
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black" stroke-width="1"/>"#,
            WIDTH - RIGHT
        );
        for t in 0..=4 {
            let v = lo + span * t as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
                x_of(v),
                axis_y + 14.0,
                v
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SHAP value (colour: feature value, low to high)</text>"#,
            LEFT + plot_w / 2.0,
            axis_y + 30.0
        );
        s.push_str("</svg>\n");
        s
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_svg()).map_err(|e| Error::io(path, e))
    }
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn export_beeswarm(
    phi: &Matrix,
    values: &Matrix,
    ranking: &ImportanceRanking,
    dir: &Path,
    stem: &str,
) -> Result<BeeswarmExport> {
    let export = beeswarm_points(phi, values, ranking)?;
    export.write_csv(&dir.join(format!("{stem}.csv")))?;
    export.write_svg(&dir.join(format!("{stem}.svg")))?;
    Ok(export)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> (Matrix, Matrix, ImportanceRanking) {
        let phi = Matrix::from_rows(&[[0.1, -0.5], [0.2, 0.4], [-0.3, 0.9]]).unwrap();
        let values = Matrix::from_rows(&[[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]).unwrap();
        let rank = ImportanceRanking::from_phi(&phi, &["age".into(), "bun".into()], "deep").unwrap();
        (phi, values, rank)
    }

    #[test]
    fn records_follow_ranking() {
        let (phi, values, rank) = fixture();
        let e = beeswarm_points(&phi, &values, &rank).unwrap();
        assert_eq!(e.points.len(), 6);
        assert_eq!(rank.order, vec![1, 0]);
        assert!(e.points[..3].iter().all(|p| p.feature == 1 && p.rank == 0));
        // constant feature: colour 0.5
        assert!(e.points[..3].iter().all(|p| p.color == 0.5));
        let colors: Vec<f64> = e.points[3..].iter().map(|p| p.color).collect();
        assert_eq!(colors, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn output_is_byte_identical() {
        let (phi, values, rank) = fixture();
        let dir = tempfile::tempdir().unwrap();
        export_beeswarm(&phi, &values, &rank, dir.path(), "a").unwrap();
        export_beeswarm(&phi, &values, &rank, dir.path(), "b").unwrap();
        let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
        assert_eq!(read("a.svg"), read("b.svg"));
        assert_eq!(read("a.csv"), read("b.csv"));
        let csv = String::from_utf8(read("a.csv")).unwrap();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("feature,name,rank,observation,phi,jitter,color\n"));
        let svg = String::from_utf8(read("a.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 6);
        assert!(svg.find(">bun<").unwrap() < svg.find(">age<").unwrap());
    }

    #[test]
    fn shared_bin_points_alternate() {
        let j = jitter(&[1.0, 1.0, 1.0, 1.0, 5.0]);
        assert_eq!(j[0], 0.0);
        assert!(j[1] > 0.0 && j[2] < 0.0 && (j[1] + j[2]).abs() < 1e-15);
        assert!(j[3] > j[1]);
        assert_eq!(j[4], 0.0);
    }

    #[test]
    fn unwritable_path() {
        let (phi, values, rank) = fixture();
        assert!(export_beeswarm(&phi, &values, &rank, Path::new("/nonexistent/dir"), "x").is_err());
    }

    proptest! {
        #[test]
        fn colors_affine_invariant(vals in prop::collection::vec(-50.0f64..50.0, 2..20), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let base = normalised(&vals);
            let moved: Vec<f64> = vals.iter().map(|v| a * v + b).collect();
            let after = normalised(&moved);
            for (x, y) in base.iter().zip(&after) {
                prop_assert!((x - y).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(y));
            }
        }
    }
}

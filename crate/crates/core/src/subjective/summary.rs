use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub image_id: String,
    pub comparison: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub image_id: String,
    pub comparison: String,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single score.
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonAverage {
    pub comparison: String,
    /// Mean of the per-image means.
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub images: Vec<String>,
    pub comparisons: Vec<String>,
    pub rows: Vec<SummaryRow>,
    pub average: Vec<ComparisonAverage>,
    /// `(image, comparison)` cells with no scores.
    pub gaps: Vec<(String, String)>,
}

impl SummaryTable {
    pub fn cell(&self, image: &str, comparison: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.image_id == image && r.comparison == comparison)
    }
}

pub fn mean_std(scores: &[f64]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::InvalidValue("no scores".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    if scores.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

/// Per-cell mean/std over the grid of images × comparisons (first-seen
/// order unless a grid is given), plus the Average row.
pub fn summarize(obs: &[Observation], grid: Option<(&[String], &[String])>) -> SummaryTable {
    let (mut images, mut comparisons) = match grid {
        Some((i, c)) => (i.to_vec(), c.to_vec()),
        None => (Vec::new(), Vec::new()),
    };
    for o in obs {
        push_unique(&mut images, &o.image_id);
        push_unique(&mut comparisons, &o.comparison);
    }
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for img in &images {
        for cmp in &comparisons {
            let scores: Vec<f64> = obs
                .iter()
                .filter(|o| &o.image_id == img && &o.comparison == cmp)
                .map(|o| o.score)
                .collect();
            match mean_std(&scores) {
                Ok((mean, std)) => rows.push(SummaryRow {
                    image_id: img.clone(),
                    comparison: cmp.clone(),
                    mean,
                    std,
                    n: scores.len(),
                }),
                Err(_) => gaps.push((img.clone(), cmp.clone())),
            }
        }
    }
    let average = comparisons
        .iter()
        .filter_map(|cmp| {
            let means: Vec<f64> = rows.iter().filter(|r| &r.comparison == cmp).map(|r| r.mean).collect();
            (!means.is_empty()).then(|| ComparisonAverage {
                comparison: cmp.clone(),
                mean: means.iter().sum::<f64>() / means.len() as f64,
            })
        })
        .collect();
    SummaryTable {
        images,
        comparisons,
        rows,
        average,
        gaps,
    }
}

pub const GAP_MARKER: &str = "n/a";

/// Markdown table: one row per image, Mean/Std per comparison, bold Average.
pub fn render_table(t: &SummaryTable) -> String {
    let mut s = String::new();
    s.push_str("| Index |");
    for c in &t.comparisons {
        let _ = write!(s, " {c} | |");
    }
    s.push_str("\n|  |");
    for _ in &t.comparisons {
        s.push_str(" Mean | Std |");
    }
    s.push_str("\n|---|");
    for _ in &t.comparisons {
        s.push_str("---|---|");
    }
    s.push('\n');
    for img in &t.images {
        let _ = write!(s, "| {img} |");
        for c in &t.comparisons {
            match t.cell(img, c) {
                Some(r) => {
                    let _ = write!(s, " {:.2} | {:.2} |", r.mean, r.std);
                }
                None => {
                    let _ = write!(s, " {GAP_MARKER} | {GAP_MARKER} |");
                }
            }
        }
        s.push('\n');
    }
    s.push_str("| **Average** |");
    for c in &t.comparisons {
        match t.average.iter().find(|a| &a.comparison == c) {
            Some(a) => {
                let _ = write!(s, " **{:.2}** | - |", a.mean);
            }
            None => {
                let _ = write!(s, " {GAP_MARKER} | - |");
            }
        }
    }
    s.push('\n');
    s
}

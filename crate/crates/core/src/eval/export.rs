use std::path::Path;

use serde::Serialize;

use super::{BaselineCurves, ConvergenceSeries, CurveResult};
use crate::data::{write_file, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::numerics::{Mat, Real};

/// Six significant digits in the style of C's `%g`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(format_sig6).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn curve_csv(curve: &CurveResult) -> String {
    csv(
        &["fraction", "f", "accuracy"],
        (0..curve.grid.len()).map(|i| vec![curve.grid[i], curve.f[i], curve.accuracy[i]]),
    )
}

pub fn baseline_csv(base: &BaselineCurves) -> String {
    let m = &base.mean;
    csv(
        &["fraction", "f_mean", "f_std"],
        (0..m.grid.len()).map(|i| vec![m.grid[i], m.f[i], base.std[i]]),
    )
}

/// One row per snapshot; the first row has no drift and leaves it empty.
pub fn convergence_csv(series: &ConvergenceSeries) -> String {
    let mut out = String::from("snapshot,drift,separation\n");
    for (t, sep) in series.separation.iter().enumerate() {
        let drift = t.checked_sub(1).map(|i| format_sig6(series.drift[i])).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", t + 1, drift, format_sig6(*sep)));
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_file(path.as_ref(), text.as_bytes())
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Packs concept-bank snapshots as a `BIEM1` dataset: one sample per
/// snapshot, one patch per concept, labelled by snapshot index.
pub fn concept_snapshots_dataset<T: Real>(snapshots: &[Mat<T>]) -> Result<EmbeddingDataset> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Evaluation("no snapshots to export".into()))?;
    let (k, d) = first.shape();
    let mut values = Vec::with_capacity(snapshots.len() * k * d);
    for s in snapshots {
        if s.shape() != (k, d) {
            return Err(Error::shape("concept export", format!("{:?} vs {:?}", s.shape(), (k, d))));
        }
        values.extend(s.data().iter().map(|x| x.as_f64() as f32));
    }
    let m = snapshots.len();
    EmbeddingDataset::new(m, k, d, m, values, (0..m as u32).collect())
}

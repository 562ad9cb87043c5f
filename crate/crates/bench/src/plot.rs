//! Plot-ready whitespace-separated series.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{BenchError, Result};
use crate::record::{fmt_f64, ResultRecord};

/// A group's points: `(x, mean(y), std(y))` sorted by x.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// `field=value` pairs joined with `_`; `all` without grouping.
    pub key: String,
    pub points: Vec<(f64, f64, f64)>,
}

/// Groups records, then averages `y` over rows sharing an x value. The
/// spread is the population standard deviation.
pub fn plot_series(records: &[ResultRecord], x: &str, y: &str, group_by: &[&str]) -> Result<Vec<Series>> {
    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for r in records {
        let xv = numeric(r, x)?;
        let yv = numeric(r, y)?;
        let key = if group_by.is_empty() {
            "all".to_string()
        } else {
            group_by
                .iter()
                .map(|g| Ok(format!("{g}={}", r.field(g)?.render())))
                .collect::<Result<Vec<_>>>()?
                .join("_")
        };
        // order-preserving key for finite floats
        let bits = xv.to_bits();
        let ord = if xv.is_sign_negative() { !bits } else { bits | (1 << 63) };
        groups.entry(key).or_default().entry(ord).or_insert((xv, Vec::new())).1.push(yv);
    }
    if records.is_empty() {
        // still validate the names
        let probe = [x, y];
        for f in probe.iter().chain(group_by) {
            if !crate::record::BASE_COLUMNS.contains(f) && *f != "wall_ms" && !f.starts_with("evals_to_") {
                return Err(BenchError::UnknownField(f.to_string()));
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|(key, by_x)| Series {
            key,
            points: by_x
                .into_values()
                .map(|(xv, ys)| {
                    let n = ys.len() as f64;
                    let mean = ys.iter().sum::<f64>() / n;
                    let var = ys.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    (xv, mean, var.sqrt())
                })
                .collect(),
        })
        .collect())
}

fn numeric(r: &ResultRecord, f: &str) -> Result<f64> {
    r.field(f)?
        .as_f64()
        .ok_or_else(|| BenchError::Config(format!("field '{f}' is not numeric")))
}

/// Writes one `<key>.dat` file per group into `dir` and returns the paths.
pub fn emit_plot_data(records: &[ResultRecord], x: &str, y: &str, group_by: &[&str], dir: &Path) -> Result<Vec<PathBuf>> {
    let series = plot_series(records, x, y, group_by)?;
    std::fs::create_dir_all(dir).map_err(|e| BenchError::Io(dir.display().to_string(), e))?;
    let mut paths = Vec::new();
    for s in series {
        let name: String = s
            .key
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "=._-".contains(c) { c } else { '-' })
            .collect();
        let path = dir.join(format!("{name}.dat"));
        let mut text = format!("# {x} mean_{y} std_{y}\n");
        for (xv, m, sd) in &s.points {
            text.push_str(&format!("{} {} {}\n", fmt_f64(*xv), fmt_f64(*m), fmt_f64(*sd)));
        }
        std::fs::write(&path, text).map_err(|e| BenchError::Io(path.display().to_string(), e))?;
        paths.push(path);
    }
    Ok(paths)
}

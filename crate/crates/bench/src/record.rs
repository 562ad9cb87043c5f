//! Result rows and their CSV form.

use std::fmt::Write as _;

use crate::error::{BenchError, Result};

/// One grid cell's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub cell: usize,
    pub task: String,
    pub method: String,
    pub memory_frac: f64,
    pub memory_size: usize,
    pub selection: String,
    pub tau: f64,
    pub delta: f64,
    pub delta_new: f64,
    pub model: String,
    pub data: String,
    pub random_init: bool,
    /// Replicate index.
    pub seed: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Retrained-problem objective at the returned weights.
    pub final_objective: f64,
    pub l2_to_batch: f64,
    pub linf_to_batch: f64,
    pub pred_disagreement: f64,
    pub grad_evals: usize,
    pub backprops: usize,
    /// Per accuracy target: backprops until the test accuracy first reached it.
    pub evals_to_target: Vec<(f64, Option<usize>)>,
    pub wall_ms: f64,
    pub converged: bool,
}

/// Field value as used for grouping and plotting.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Num(f64),
    Text(String),
}

impl FieldValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FieldValue::Num(v) => Some(*v),
            FieldValue::Text(_) => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            FieldValue::Num(v) => fmt_f64(*v),
            FieldValue::Text(s) => s.clone(),
        }
    }
}

/// Columns before the per-target ones, in order.
pub const BASE_COLUMNS: [&str; 22] = [
    "cell",
    "task",
    "method",
    "memory_frac",
    "memory_size",
    "selection",
    "tau",
    "delta",
    "delta_new",
    "model",
    "data",
    "random_init",
    "seed",
    "train_acc",
    "test_acc",
    "final_objective",
    "l2_to_batch",
    "linf_to_batch",
    "pred_disagreement",
    "grad_evals",
    "backprops",
    "converged",
];

/// Shortest round-trip decimal form, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

pub fn target_column(t: f64) -> String {
    format!("evals_to_{}", fmt_f64(t))
}

impl ResultRecord {
    pub fn field(&self, name: &str) -> Result<FieldValue> {
        use FieldValue::{Num, Text};
        Ok(match name {
            "cell" => Num(self.cell as f64),
            "task" => Text(self.task.clone()),
            "method" => Text(self.method.clone()),
            "memory_frac" => Num(self.memory_frac),
            "memory_size" => Num(self.memory_size as f64),
            "selection" => Text(self.selection.clone()),
            "tau" => Num(self.tau),
            "delta" => Num(self.delta),
            "delta_new" => Num(self.delta_new),
            "model" => Text(self.model.clone()),
            "data" => Text(self.data.clone()),
            "random_init" => Text(self.random_init.to_string()),
            "seed" => Num(self.seed as f64),
            "train_acc" => Num(self.train_acc),
            "test_acc" => Num(self.test_acc),
            "final_objective" => Num(self.final_objective),
            "l2_to_batch" => Num(self.l2_to_batch),
            "linf_to_batch" => Num(self.linf_to_batch),
            "pred_disagreement" => Num(self.pred_disagreement),
            "grad_evals" => Num(self.grad_evals as f64),
            "backprops" => Num(self.backprops as f64),
            "converged" => Text(self.converged.to_string()),
            "wall_ms" => Num(self.wall_ms),
            other => {
                let hit = self.evals_to_target.iter().find(|(t, _)| target_column(*t) == other);
                match hit {
                    Some((_, Some(n))) => Num(*n as f64),
                    Some((_, None)) => Num(f64::NAN),
                    None => return Err(BenchError::UnknownField(other.to_string())),
                }
            }
        })
    }
}

/// CSV header: the base columns, one `evals_to_<t>` column per target,
/// then `wall_ms` when timing is on.
pub fn csv_header(targets: &[f64], timing: bool) -> Vec<String> {
    let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(targets.iter().map(|&t| target_column(t)));
    if timing {
        h.push("wall_ms".into());
    }
    h
}

/// Renders records sorted by cell index. A target that was never reached
/// leaves its cell empty.
pub fn to_csv(records: &[ResultRecord], targets: &[f64], timing: bool) -> Result<String> {
    let mut sorted: Vec<&ResultRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.cell);
    let header = csv_header(targets, timing);
    let mut out = header.join(",");
    out.push('\n');
    for r in sorted {
        let mut cells = Vec::with_capacity(header.len());
        for col in BASE_COLUMNS {
            cells.push(quote(&r.field(col)?.render()));
        }
        for &t in targets {
            let hit = r.evals_to_target.iter().find(|(x, _)| *x == t);
            cells.push(match hit {
                Some((_, Some(n))) => n.to_string(),
                _ => String::new(),
            });
        }
        if timing {
            cells.push(fmt_f64(r.wall_ms));
        }
        writeln!(out, "{}", cells.join(",")).ok();
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

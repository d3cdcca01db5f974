use std::io::Write;

use crate::error::{invalid, Result};

pub const REPORT_CSV_HEADER: &str = "config,accuracy,precision,recall,f1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Binary metrics with `positive` as the positive class. Undefined
/// precision, recall or F1 are reported as 0.
pub fn classification_report(y_true: &[usize], y_pred: &[usize], positive: usize) -> Result<ClassificationReport> {
    if y_true.len() != y_pred.len() {
        return Err(invalid(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(invalid("classification report of an empty set"));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        correct += (t == p) as usize;
        match (t == positive, p == positive) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationReport {
        accuracy: ratio(correct, y_true.len()),
        precision,
        recall,
        f1,
    })
}

impl ClassificationReport {
    pub fn csv_row(&self, config: &str) -> String {
        format!(
            "{config},{:.4},{:.4},{:.4},{:.4}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }
}

pub fn write_report_csv<W: Write>(mut w: W, rows: &[(String, ClassificationReport)]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for (name, r) in rows {
        writeln!(w, "{}", r.csv_row(name))?;
    }
    Ok(())
}

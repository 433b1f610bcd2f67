use std::io::Write;

use serde::Serialize;

use super::run::EvalReport;
use crate::corpus::Label;
use crate::error::Result;

/// Pretty JSON of `report` with the averaged block rounded to three
/// decimals. Output is a pure function of the report.
pub fn report_json(report: &EvalReport) -> Result<String> {
    let mut shown = report.clone();
    shown.averaged = shown.averaged.map(|m| m.rounded());
    let mut s = serde_json::to_string_pretty(&shown)?;
    s.push('\n');
    Ok(s)
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub train_set: String,
    pub model: String,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// ADR, NonADR and macro rows from the rounded averages.
pub fn summary_rows(report: &EvalReport, train_set: &str, model: &str) -> Vec<SummaryRow> {
    let Some(avg) = report.averaged.as_ref().map(|m| m.rounded()) else {
        return Vec::new();
    };
    let row = |class: &str, p: f64, r: f64, f: f64| SummaryRow {
        train_set: train_set.to_string(),
        model: model.to_string(),
        class: class.to_string(),
        precision: p,
        recall: r,
        f1: f,
    };
    let mut rows: Vec<SummaryRow> = Label::ALL
        .iter()
        .map(|l| {
            let c = avg.class(*l);
            row(l.as_str(), c.precision, c.recall, c.f1)
        })
        .collect();
    rows.push(row(
        "macro",
        avg.macro_avg.precision,
        avg.macro_avg.recall,
        avg.macro_avg.f1,
    ));
    rows
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["train_set", "model", "class", "precision", "recall", "f1"])?;
    for r in rows {
        w.write_record([
            r.train_set.clone(),
            r.model.clone(),
            r.class.clone(),
            format!("{:.3}", r.precision),
            format!("{:.3}", r.recall),
            format!("{:.3}", r.f1),
        ])?;
    }
    w.flush()
        .map_err(|e| crate::error::Error::io("<summary>", e))?;
    Ok(())
}

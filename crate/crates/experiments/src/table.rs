//! Result tables and their CSV form.
//!
//! Columns: `experiment,label,n,quantity,estimate,half_width,valid,na`.
//! Floats are rounded to 6 significant digits; an empty `half_width` means
//! the quantity has no sampling error (exact solves).

use std::io::Write;

use serde::Serialize;

/// Half-width of the normal-approximation 95% interval of a proportion.
pub fn proportion_half_width(p: f64, reps: usize) -> f64 {
    if reps == 0 {
        return f64::NAN;
    }
    1.96 * (p * (1.0 - p) / reps as f64).sqrt()
}

/// Mean and 95% half-width `1.96 sd / sqrt(m)` of a sample.
pub fn mean_half_width(xs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, 1.96 * (var / m as f64).sqrt())
}

/// `x` rounded to 6 significant digits, printed in shortest round-trip form.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub label: String,
    pub n: Option<u64>,
    pub quantity: String,
    pub estimate: f64,
    pub half_width: Option<f64>,
    pub valid: usize,
    pub na: usize,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    experiment: &'a str,
    label: &'a str,
    n: String,
    quantity: &'a str,
    estimate: String,
    half_width: String,
    valid: usize,
    na: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// First row matching label, budget and quantity.
    pub fn find(&self, label: &str, n: Option<u64>, quantity: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.n == n && r.quantity == quantity)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                experiment: &r.experiment,
                label: &r.label,
                n: r.n.map(|n| n.to_string()).unwrap_or_default(),
                quantity: &r.quantity,
                estimate: fmt_sig(r.estimate),
                half_width: r.half_width.map(fmt_sig).unwrap_or_default(),
                valid: r.valid,
                na: r.na,
            })?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "experiment",
                "label",
                "n",
                "quantity",
                "estimate",
                "half_width",
                "valid",
                "na",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Aligned plain-text rendering for terminals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let n = r.n.map(|n| format!(" n={n}")).unwrap_or_default();
            let hw = r
                .half_width
                .map(|h| format!(" ({})", fmt_sig(h)))
                .unwrap_or_default();
            let na = if r.na > 0 {
                format!("  [NA: {}]", r.na)
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{:<14}{:<8} {:<24} = {}{}{}\n",
                r.label,
                n,
                r.quantity,
                fmt_sig(r.estimate),
                hw,
                na
            ));
        }
        out
    }
}

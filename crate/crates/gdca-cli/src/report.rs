//! Evaluation report: per-image RMSE/PSNR rows, aggregate means, a plain
//! text table for humans and a CSV for machines.
//!
//! Numbers are printed with 6 significant digits, `.` decimal point, `,`
//! CSV separator and LF line endings — stable enough to diff byte-for-byte.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Ok { rmse: f64, psnr: f64 },
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub outcome: RowOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// `v` with 6 significant digits in plain decimal notation; infinities
/// print as the `inf` sentinel.
pub fn format_sig(v: f64) -> String {
    const SIG: i32 = 6;
    if v.is_infinite() {
        return String::from(if v > 0.0 { "inf" } else { "-inf" });
    }
    if v == 0.0 {
        return format!("{:.*}", (SIG - 1) as usize, 0.0);
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (SIG - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

impl EvalReport {
    fn ok_rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.rows.iter().filter_map(|r| match r.outcome {
            RowOutcome::Ok { rmse, psnr } => Some((rmse, psnr)),
            RowOutcome::Error(_) => None,
        })
    }

    pub fn mean_rmse(&self) -> Option<f64> {
        let (n, sum) = self.ok_rows().fold((0usize, 0.0), |(n, s), (r, _)| (n + 1, s + r));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn mean_psnr(&self) -> Option<f64> {
        let (n, sum) = self.ok_rows().fold((0usize, 0.0), |(n, s), (_, p)| (n + 1, s + p));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn had_errors(&self) -> bool {
        self.rows.iter().any(|r| matches!(r.outcome, RowOutcome::Error(_)))
    }

    pub fn table(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(["name".len(), "mean".len()])
            .max()
            .unwrap_or(4);
        let mut out = String::new();
        let _ = writeln!(out, "{:<name_w$}  {:>12}  {:>12}", "name", "rmse", "psnr");
        for row in &self.rows {
            match &row.outcome {
                RowOutcome::Ok { rmse, psnr } => {
                    let _ = writeln!(
                        out,
                        "{:<name_w$}  {:>12}  {:>12}",
                        row.name,
                        format_sig(*rmse),
                        format_sig(*psnr)
                    );
                }
                RowOutcome::Error(msg) => {
                    let _ = writeln!(out, "{:<name_w$}  error: {msg}", row.name);
                }
            }
        }
        let fmt_mean = |v: Option<f64>| v.map(format_sig).unwrap_or_else(|| String::from("-"));
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>12}  {:>12}",
            "mean",
            fmt_mean(self.mean_rmse()),
            fmt_mean(self.mean_psnr())
        );
        let _ = writeln!(out, "PI: not computed");
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("name,rmse,psnr\n");
        for row in &self.rows {
            match &row.outcome {
                RowOutcome::Ok { rmse, psnr } => {
                    let _ = writeln!(out, "{},{},{}", row.name, format_sig(*rmse), format_sig(*psnr));
                }
                RowOutcome::Error(_) => {
                    let _ = writeln!(out, "{},error,error", row.name);
                }
            }
        }
        let fmt_mean = |v: Option<f64>| v.map(format_sig).unwrap_or_else(|| String::from("-"));
        let _ = writeln!(out, "mean,{},{}", fmt_mean(self.mean_rmse()), fmt_mean(self.mean_psnr()));
        out
    }
}

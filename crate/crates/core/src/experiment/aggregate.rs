use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::pairwise_mean;

/// Metrics of one estimator at one checkpoint of one replication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub n: usize,
    pub excess_error: f64,
    pub l2_loss: f64,
    pub train_error: f64,
    pub train_loss: f64,
    pub h_dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub n: usize,
    pub mean_excess_error: f64,
    pub mean_l2_loss: f64,
    pub mean_train_error: f64,
    pub mean_train_loss: f64,
    pub mean_h_dist: f64,
    pub replications: usize,
    /// `log10(mean_excess_error)`, defined for a mean in `(0, 1)`.
    pub log10_err: Option<f64>,
    /// `−log(−log(mean_excess_error))`, defined for a mean in `(0, 1)`.
    pub loglog_err: Option<f64>,
}

/// Means over replications at each checkpoint, in replication-index order
/// with pairwise summation, whatever order `results` arrive in.
pub fn aggregate(results: &[ReplicationResult]) -> Result<Vec<AggregateRecord>> {
    if results.is_empty() {
        return invalid("nothing to aggregate");
    }
    let mut sorted: Vec<&ReplicationResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.index);
    let k = sorted[0].rows.len();
    if sorted.iter().any(|r| r.rows.len() != k) {
        return invalid("replications report different checkpoint counts");
    }
    (0..k)
        .map(|c| {
            let n = sorted[0].rows[c].n;
            if sorted.iter().any(|r| r.rows[c].n != n) {
                return invalid("replications report different checkpoints");
            }
            let mean = |f: fn(&MetricRow) -> f64| -> f64 {
                let v: Vec<f64> = sorted.iter().map(|r| f(&r.rows[c])).collect();
                pairwise_mean(&v)
            };
            let e = mean(|m| m.excess_error);
            let defined = e > 0.0 && e < 1.0;
            Ok(AggregateRecord {
                n,
                mean_excess_error: e,
                mean_l2_loss: mean(|m| m.l2_loss),
                mean_train_error: mean(|m| m.train_error),
                mean_train_loss: mean(|m| m.train_loss),
                mean_h_dist: mean(|m| m.h_dist),
                replications: sorted.len(),
                log10_err: defined.then(|| e.log10()),
                loglog_err: defined.then(|| -(-e.ln()).ln()),
            })
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "n,mean_excess_error,mean_l2_loss,mean_train_error,mean_train_loss,mean_h_dist,log10_err,loglog_err";

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub fn write_aggregate_csv<W: Write>(mut w: W, records: &[AggregateRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.n,
            fmt_f(r.mean_excess_error),
            fmt_f(r.mean_l2_loss),
            fmt_f(r.mean_train_error),
            fmt_f(r.mean_train_loss),
            fmt_f(r.mean_h_dist),
            fmt_opt(r.log10_err),
            fmt_opt(r.loglog_err)
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
    Log10,
    /// `−log(−log y)`.
    NegLogNegLog,
}

impl Transform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Log10 => v.log10(),
            Transform::NegLogNegLog => -(-v.ln()).ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    ExcessError,
    L2Loss,
    TrainError,
    TrainLoss,
    HDist,
}

impl Column {
    pub fn get(self, r: &AggregateRecord) -> f64 {
        match self {
            Column::ExcessError => r.mean_excess_error,
            Column::L2Loss => r.mean_l2_loss,
            Column::TrainError => r.mean_train_error,
            Column::TrainLoss => r.mean_train_loss,
            Column::HDist => r.mean_h_dist,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Ordinary least squares on finite transformed points.
pub fn fit_line(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if pts.len() < 3 {
        return invalid(format!("slope fit needs at least 3 valid points, got {}", pts.len()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (mx, my) = (pairwise_mean(&xs), pairwise_mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return invalid("slope fit needs at least two distinct x values");
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: pts.len(),
    })
}

/// Slope of `y_t(column)` against `x_t(n)` over records with `n` in `range`.
pub fn fit_slope(
    records: &[AggregateRecord],
    column: Column,
    x_t: Transform,
    y_t: Transform,
    range: RangeInclusive<usize>,
) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| range.contains(&r.n))
        .map(|r| (x_t.apply(r.n as f64), y_t.apply(column.get(r))))
        .collect();
    fit_line(&pts)
}

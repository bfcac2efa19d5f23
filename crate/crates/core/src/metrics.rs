//! Agreement metrics between objective scores and subjective ratings:
//! Pearson (PLCC), Spearman (SROCC), and RMSE.
//!
//! Correlations are computed on the raw scores with no nonlinear mapping
//! beforehand. Ties receive fractional (average) ranks, the one convention
//! under which rank-Pearson equals Spearman's definition. A zero-variance
//! input makes correlation undefined and is a hard error rather than a NaN
//! that would silently poison averaged reports.

use std::io::Write;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("score lists have different lengths: {predicted} vs {subjective}")]
    LengthMismatch { predicted: usize, subjective: usize },
    #[error("need at least {needed} score pairs, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("score contains a non-finite value")]
    NonFinite,
    #[error("correlation undefined: {which} scores have zero variance")]
    UndefinedCorrelation { which: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn validate(predicted: &[f64], subjective: &[f64], min_len: usize) -> Result<()> {
    if predicted.len() != subjective.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            subjective: subjective.len(),
        });
    }
    if predicted.len() < min_len {
        return Err(MetricsError::TooFew {
            needed: min_len,
            got: predicted.len(),
        });
    }
    if !predicted.iter().chain(subjective).all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

fn pearson_raw(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 {
        return Err(MetricsError::UndefinedCorrelation { which: "predicted" });
    }
    if vy == 0.0 {
        return Err(MetricsError::UndefinedCorrelation { which: "subjective" });
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Pearson linear correlation on raw scores.
pub fn plcc(predicted: &[f64], subjective: &[f64]) -> Result<f64> {
    validate(predicted, subjective, 2)?;
    pearson_raw(predicted, subjective)
}

/// Fractional (average) ranks, 1-based.
fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite scores"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation: Pearson over fractional ranks.
pub fn srocc(predicted: &[f64], subjective: &[f64]) -> Result<f64> {
    validate(predicted, subjective, 2)?;
    pearson_raw(&fractional_ranks(predicted), &fractional_ranks(subjective))
}

/// Root mean squared error, in the scores' own units.
pub fn rmse(predicted: &[f64], subjective: &[f64]) -> Result<f64> {
    validate(predicted, subjective, 1)?;
    let sq: f64 = predicted
        .iter()
        .zip(subjective)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq / predicted.len() as f64).sqrt())
}

/// All three metrics for one evaluation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTriple {
    pub srocc: f64,
    pub plcc: f64,
    pub rmse: f64,
}

pub fn metric_triple(predicted: &[f64], subjective: &[f64]) -> Result<MetricTriple> {
    Ok(MetricTriple {
        srocc: srocc(predicted, subjective)?,
        plcc: plcc(predicted, subjective)?,
        rmse: rmse(predicted, subjective)?,
    })
}

/// One row of an evaluation report.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub repeat: u32,
    pub n: usize,
    pub metrics: MetricTriple,
}

/// Per-repeat metrics plus their arithmetic mean, tagged with the split
/// descriptor they came from.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub partition: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(partition: impl Into<String>, rows: Vec<EvalRow>) -> EvalReport {
        EvalReport {
            partition: partition.into(),
            rows,
        }
    }

    /// Arithmetic mean over the per-repeat rows: (mean n, mean metrics).
    pub fn mean(&self) -> (f64, MetricTriple) {
        let k = self.rows.len() as f64;
        let mean_n = self.rows.iter().map(|r| r.n as f64).sum::<f64>() / k;
        let mean = MetricTriple {
            srocc: self.rows.iter().map(|r| r.metrics.srocc).sum::<f64>() / k,
            plcc: self.rows.iter().map(|r| r.metrics.plcc).sum::<f64>() / k,
            rmse: self.rows.iter().map(|r| r.metrics.rmse).sum::<f64>() / k,
        };
        (mean_n, mean)
    }

    /// CSV form: `partition,repeat,n,srocc,plcc,rmse` rows plus a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("partition,repeat,n,srocc,plcc,rmse\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.partition, row.repeat, row.n, row.metrics.srocc, row.metrics.plcc, row.metrics.rmse
            ));
        }
        let (mean_n, mean) = self.mean();
        out.push_str(&format!(
            "{},mean,{},{},{},{}\n",
            self.partition, mean_n, mean.srocc, mean.plcc, mean.rmse
        ));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| MetricsError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>6} {:>6} {:>9} {:>9} {:>9}\n",
            "partition", "repeat", "n", "srocc", "plcc", "rmse"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}\n",
                self.partition, row.repeat, row.n, row.metrics.srocc, row.metrics.plcc, row.metrics.rmse
            ));
        }
        let (mean_n, mean) = self.mean();
        out.push_str(&format!(
            "{:<12} {:>6} {:>6.1} {:>9.4} {:>9.4} {:>9.4}\n",
            self.partition, "mean", mean_n, mean.srocc, mean.plcc, mean.rmse
        ));
        out
    }
}

/// Appends several reports into one CSV (header written once).
pub fn write_reports_csv(reports: &[&EvalReport], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    };
    for (i, report) in reports.iter().enumerate() {
        let csv = report.to_csv();
        let body = if i == 0 {
            csv.as_str()
        } else {
            csv.split_once('\n').map(|(_, rest)| rest).unwrap_or("")
        };
        w.write_all(body.as_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

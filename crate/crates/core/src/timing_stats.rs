//! Time deviation of offset series.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series has {len} samples; at least {min} required")]
    TooShort { len: usize, min: usize },
    #[error("gap of {missing} epochs before sample {index}; split the series and analyse each part")]
    Gap { index: usize, missing: usize },
    #[error("non-uniform spacing at sample {index}: {spacing:.6e} s vs {expected:.6e} s")]
    NonUniform { index: usize, spacing: f64, expected: f64 },
    #[error("{field} has {got} values, expected {expected}")]
    LengthMismatch { field: &'static str, got: usize, expected: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for StatsError {
    fn from(e: std::io::Error) -> Self {
        StatsError::Io(e.to_string())
    }
}

/// Offsets on a uniform epoch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSeries {
    epoch_times: Vec<f64>,
    offsets: Vec<f64>,
    uncertainties: Option<Vec<f64>>,
}

const SPACING_TOLERANCE: f64 = 1e-6;

impl OffsetSeries {
    pub fn new(epoch_times: Vec<f64>, offsets: Vec<f64>, uncertainties: Option<Vec<f64>>) -> Result<Self, StatsError> {
        let n = epoch_times.len();
        if offsets.len() != n {
            return Err(StatsError::LengthMismatch { field: "offsets", got: offsets.len(), expected: n });
        }
        if let Some(u) = &uncertainties {
            if u.len() != n {
                return Err(StatsError::LengthMismatch { field: "uncertainties", got: u.len(), expected: n });
            }
        }
        if n < 4 {
            return Err(StatsError::TooShort { len: n, min: 4 });
        }
        let tau0 = epoch_times[1] - epoch_times[0];
        if !(tau0 > 0.0) {
            return Err(StatsError::NonUniform { index: 1, spacing: tau0, expected: tau0 });
        }
        for i in 1..n {
            let dt = epoch_times[i] - epoch_times[i - 1];
            if ((dt - tau0) / tau0).abs() > SPACING_TOLERANCE {
                let ratio = dt / tau0;
                if ratio > 1.5 && (ratio - ratio.round()).abs() < 1e-3 {
                    return Err(StatsError::Gap { index: i, missing: ratio.round() as usize - 1 });
                }
                return Err(StatsError::NonUniform { index: i, spacing: dt, expected: tau0 });
            }
        }
        Ok(Self { epoch_times, offsets, uncertainties })
    }

    /// Series at `t0 + k·tau0`.
    pub fn uniform(t0: f64, tau0: f64, offsets: Vec<f64>) -> Result<Self, StatsError> {
        let times = (0..offsets.len()).map(|k| t0 + k as f64 * tau0).collect();
        Self::new(times, offsets, None)
    }

    pub fn epoch_times(&self) -> &[f64] {
        &self.epoch_times
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn uncertainties(&self) -> Option<&[f64]> {
        self.uncertainties.as_deref()
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn tau0(&self) -> f64 {
        let n = self.epoch_times.len();
        (self.epoch_times[n - 1] - self.epoch_times[0]) / (n - 1) as f64
    }

    /// CSV with `t_s,offset_s` (and `uncertainty_s` when present). Values use
    /// the shortest representation that parses back to the same f64.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), StatsError> {
        match &self.uncertainties {
            Some(u) => {
                writeln!(out, "t_s,offset_s,uncertainty_s")?;
                for i in 0..self.len() {
                    writeln!(out, "{:e},{:e},{:e}", self.epoch_times[i], self.offsets[i], u[i])?;
                }
            }
            None => {
                writeln!(out, "t_s,offset_s")?;
                for i in 0..self.len() {
                    writeln!(out, "{:e},{:e}", self.epoch_times[i], self.offsets[i])?;
                }
            }
        }
        Ok(())
    }

    /// Reads `t_s` plus an offset column. The offset unit comes from the header
    /// (`offset_s`, `offset_ps`, `residual_fs`); a headerless file is in seconds.
    /// Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, StatsError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(input);
        let mut times = Vec::new();
        let mut offsets = Vec::new();
        let mut scale = 1.0;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => StatsError::Io(io.to_string()),
                other => StatsError::Parse { line: 0, reason: format!("{other:?}") },
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let first = record.get(0).unwrap_or("");
            if i == 0 && first.parse::<f64>().is_err() {
                scale = match record.get(1) {
                    Some(h) if h.ends_with("_ps") => 1e-12,
                    Some(h) if h.ends_with("_fs") => 1e-15,
                    Some(h) if h.ends_with("_s") => 1.0,
                    _ => {
                        let header = record.iter().collect::<Vec<_>>().join(",");
                        return Err(StatsError::Parse { line, reason: format!("unrecognized header `{header}`") });
                    }
                };
                continue;
            }
            if record.len() < 2 {
                return Err(StatsError::Parse { line, reason: "expected at least two columns".into() });
            }
            let parse =
                |s: &str| s.parse::<f64>().map_err(|e| StatsError::Parse { line, reason: format!("`{s}`: {e}") });
            times.push(parse(first)?);
            offsets.push(parse(&record[1])? * scale);
        }
        Self::new(times, offsets, None)
    }
}

/// Time deviation per averaging factor. `rejected` lists m values that did
/// not fit in the series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TdevResult {
    pub taus: Vec<f64>,
    pub tdev: Vec<f64>,
    pub sample_counts: Vec<usize>,
    pub rejected: Vec<usize>,
}

impl TdevResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), StatsError> {
        writeln!(out, "tau_s,tdev_s,n_samples")?;
        for i in 0..self.taus.len() {
            writeln!(out, "{:.11e},{:.11e},{}", self.taus[i], self.tdev[i], self.sample_counts[i])?;
        }
        Ok(())
    }

    /// TDEV at the tau closest to `tau`.
    pub fn at(&self, tau: f64) -> Option<(f64, f64)> {
        self.taus
            .iter()
            .zip(&self.tdev)
            .min_by(|a, b| (a.0 - tau).abs().total_cmp(&(b.0 - tau).abs()))
            .map(|(&t, &d)| (t, d))
    }
}

/// 1, 2, 4, ... while 3m ≤ n.
pub fn default_m_ladder(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |m| Some(m * 2)).take_while(|m| 3 * m <= n).collect()
}

/// Overlapping estimator on raw samples; `None` when 3m > n or m = 0.
/// Returns (tdev, number of terms).
pub fn tdev_values(x: &[f64], m: usize) -> Option<(f64, usize)> {
    window_sums(x, m, 1)
}

/// Same estimator with windows starting every m samples.
pub fn tdev_values_nonoverlapping(x: &[f64], m: usize) -> Option<(f64, usize)> {
    window_sums(x, m, m)
}

fn window_sums(x: &[f64], m: usize, stride: usize) -> Option<(f64, usize)> {
    let n = x.len();
    if m == 0 || 3 * m > n {
        return None;
    }
    // d_i = x_{i+2m} − 2x_{i+m} + x_i, summed over windows of m via prefix sums.
    let d: Vec<f64> = (0..=n - 2 * m - 1).map(|i| x[i + 2 * m] - 2.0 * x[i + m] + x[i]).collect();
    let mut prefix = Vec::with_capacity(d.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in &d {
        acc += v;
        prefix.push(acc);
    }
    let mut sum_sq = 0.0;
    let mut count = 0;
    let mut j = 0;
    while j + 3 * m <= n {
        let s = prefix[j + m] - prefix[j];
        sum_sq += s * s;
        count += 1;
        j += stride;
    }
    Some(((sum_sq / (6.0 * (m * m) as f64 * count as f64)).sqrt(), count))
}

pub fn tdev(series: &OffsetSeries, m_values: &[usize]) -> TdevResult {
    let tau0 = series.tau0();
    let mut ms: Vec<usize> = m_values.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let mut out = TdevResult::default();
    for m in ms {
        match tdev_values(series.offsets(), m) {
            Some((v, c)) => {
                out.taus.push(m as f64 * tau0);
                out.tdev.push(v);
                out.sample_counts.push(c);
            }
            None => out.rejected.push(m),
        }
    }
    out
}

pub fn tdev_default(series: &OffsetSeries) -> TdevResult {
    tdev(series, &default_m_ladder(series.len()))
}

pub fn tdev_from_csv(path: impl AsRef<Path>) -> Result<TdevResult, StatsError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let series = OffsetSeries::read_csv(f)?;
    Ok(tdev_default(&series))
}

/// Least-squares slope of log TDEV against log tau.
pub fn log_log_slope(taus: &[f64], values: &[f64]) -> f64 {
    let n = taus.len() as f64;
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

//! Throughput summaries and cross-scheme comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::channel::Location;
use crate::error::{invalid, Error, Result};

/// Per-location means below this many bits per TTI count as zero
/// throughput.
pub const ZERO_THRESHOLD_BITS: f64 = 1.0;

/// Mbit/s for a 1 ms TTI.
pub fn mbps(bits_per_tti: f64) -> f64 {
    bits_per_tti * 1e-3
}

/// `(scheme − baseline) / baseline`.
pub fn gap_ratio(scheme: f64, baseline: f64) -> f64 {
    (scheme - baseline) / baseline
}

/// Statistics of the per-location means sharing one grid row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowStats {
    pub y: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scheme: String,
    pub locations: Vec<Location>,
    /// Mean bits per TTI over time at each location.
    pub per_location: Vec<f64>,
    /// Ascending by `y`.
    pub rows: Vec<RowStats>,
    pub overall_mean: f64,
    /// Relative to the baseline's overall mean, when one was given.
    pub gap_ratio: Option<f64>,
    pub zero_locations: Vec<u32>,
}

fn row_key(y: f64) -> i64 {
    (y * 1e6).round() as i64
}

impl MetricsReport {
    pub fn new(scheme: impl Into<String>, locations: Vec<Location>, per_location: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::Empty("report locations"));
        }
        if locations.len() != per_location.len() {
            return Err(Error::DimensionMismatch("one throughput per location required".into()));
        }
        let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (l, v) in locations.iter().zip(&per_location) {
            groups.entry(row_key(l.coords[1])).or_default().push(*v);
        }
        let rows = groups
            .into_iter()
            .map(|(y, vs)| RowStats {
                y: y as f64 * 1e-6,
                mean: vs.iter().sum::<f64>() / vs.len() as f64,
                min: vs.iter().copied().fold(f64::INFINITY, f64::min),
                max: vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                count: vs.len(),
            })
            .collect();
        let overall_mean = per_location.iter().sum::<f64>() / per_location.len() as f64;
        let zero_locations =
            locations.iter().zip(&per_location).filter(|(_, &v)| v < ZERO_THRESHOLD_BITS).map(|(l, _)| l.q).collect();
        Ok(Self { scheme: scheme.into(), locations, per_location, rows, overall_mean, gap_ratio: None, zero_locations })
    }

    fn check_grid(&self, other: &MetricsReport) -> Result<()> {
        let same = self.locations.len() == other.locations.len()
            && self.locations.iter().zip(&other.locations).all(|(a, b)| a.q == b.q);
        if same {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("`{}` and `{}` cover different locations", self.scheme, other.scheme)))
        }
    }

    /// Sets the gap ratio against `baseline`, which must cover the same
    /// locations.
    pub fn compare_to(&mut self, baseline: &MetricsReport) -> Result<()> {
        self.check_grid(baseline)?;
        self.gap_ratio = Some(gap_ratio(self.overall_mean, baseline.overall_mean));
        Ok(())
    }

    /// `q, x, y, bits_per_tti, mbps` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["q", "x", "y", "bits_per_tti", "mbps"])?;
        for (l, v) in self.locations.iter().zip(&self.per_location) {
            out.write_record([
                l.q.to_string(),
                format!("{:.3}", l.coords[0]),
                format!("{:.3}", l.coords[1]),
                format!("{v:.6}"),
                format!("{:.6}", mbps(*v)),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Comparison of several reports against the first one.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Per-location table: `q, x, y`, then each scheme's bits per TTI, then
    /// each non-baseline scheme's gap ratio.
    pub csv: String,
    /// Per-row error-bar table: `scheme, y, mean, min, max, count`.
    pub rows_csv: String,
    pub summary: String,
}

/// Compares `reports` against `reports[0]`.
pub fn report(reports: &[MetricsReport]) -> Result<Comparison> {
    let base = reports.first().ok_or(Error::Empty("reports"))?;
    for r in &reports[1..] {
        r.check_grid(base)?;
    }
    if reports.iter().any(|r| r.per_location.iter().any(|v| !v.is_finite())) {
        return Err(invalid("non-finite throughput in a report"));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["q".to_string(), "x".into(), "y".into()];
    header.extend(reports.iter().map(|r| r.scheme.clone()));
    header.extend(reports[1..].iter().map(|r| format!("gap_{}", r.scheme)));
    out.write_record(&header)?;
    for (i, l) in base.locations.iter().enumerate() {
        let mut rec = vec![l.q.to_string(), format!("{:.3}", l.coords[0]), format!("{:.3}", l.coords[1])];
        rec.extend(reports.iter().map(|r| format!("{:.6}", r.per_location[i])));
        rec.extend(reports[1..].iter().map(|r| format!("{:.6}", gap_ratio(r.per_location[i], base.per_location[i]))));
        out.write_record(&rec)?;
    }
    let csv = String::from_utf8(out.into_inner().map_err(|e| Error::Format(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))?;

    let mut rows = csv::Writer::from_writer(Vec::new());
    rows.write_record(["scheme", "y", "mean", "min", "max", "count"])?;
    for r in reports {
        for s in &r.rows {
            rows.write_record([
                r.scheme.clone(),
                format!("{:.3}", s.y),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.min),
                format!("{:.6}", s.max),
                s.count.to_string(),
            ])?;
        }
    }
    let rows_csv = String::from_utf8(rows.into_inner().map_err(|e| Error::Format(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))?;

    let mut summary = String::new();
    let _ = writeln!(summary, "{} locations, baseline `{}`", base.locations.len(), base.scheme);
    for r in reports {
        let gap = gap_ratio(r.overall_mean, base.overall_mean);
        let _ = writeln!(
            summary,
            "{:<16} mean {:>10.1} bits/TTI ({:>7.3} Mbit/s)  gap {:>+8.2}%  zero-throughput {}",
            r.scheme,
            r.overall_mean,
            mbps(r.overall_mean),
            100.0 * gap,
            r.zero_locations.len()
        );
        if !r.zero_locations.is_empty() {
            let coords: Vec<String> = r
                .zero_locations
                .iter()
                .filter_map(|q| r.locations.iter().find(|l| l.q == *q))
                .map(|l| format!("({:.1}, {:.1})", l.coords[0], l.coords[1]))
                .collect();
            let _ = writeln!(summary, "  zero at {}", coords.join(" "));
        }
    }
    Ok(Comparison { csv, rows_csv, summary })
}

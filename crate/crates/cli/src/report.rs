//! Per-benchmark size reports and percentile tables.

use std::io::Write;

use anyhow::Result;
use serde::Serialize;

/// Percentile `p` (0 to 100) of ascending `sorted`, interpolating linearly
/// between closest ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub benchmark: String,
    pub baseline_size: usize,
    pub simplified_size: usize,
    pub baseline_metric: Option<f64>,
    pub simplified_metric: Option<f64>,
}

impl Row {
    /// Relative size reduction against the baseline, in percent.
    pub fn reduction(&self) -> f64 {
        if self.baseline_size == 0 {
            0.0
        } else {
            100.0 * (self.baseline_size as f64 - self.simplified_size as f64)
                / self.baseline_size as f64
        }
    }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const PERCENTILES: [f64; 7] = [0.0, 10.0, 25.0, 50.0, 75.0, 90.0, 100.0];

/// Text table of percentiles of baseline size, simplified size, size
/// reduction and (when present) metric values.
pub fn percentile_table(rows: &[Row]) -> String {
    let mut out = format!("{:<18}", "percentile");
    for p in PERCENTILES {
        out += &format!("{:>10}", format!("p{p}"));
    }
    out.push('\n');
    if rows.is_empty() {
        return out;
    }
    let mut line = |name: &str, mut xs: Vec<f64>| {
        if xs.is_empty() {
            return;
        }
        xs.sort_by(f64::total_cmp);
        out += &format!("{name:<18}");
        for p in PERCENTILES {
            out += &format!("{:>10.2}", percentile(&xs, p));
        }
        out.push('\n');
    };
    line(
        "baseline_size",
        rows.iter().map(|r| r.baseline_size as f64).collect(),
    );
    line(
        "simplified_size",
        rows.iter().map(|r| r.simplified_size as f64).collect(),
    );
    line("reduction_pct", rows.iter().map(Row::reduction).collect());
    line(
        "baseline_metric",
        rows.iter().filter_map(|r| r.baseline_metric).collect(),
    );
    line(
        "simplified_metric",
        rows.iter().filter_map(|r| r.simplified_metric).collect(),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_percentiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 50.0), 2.5);
        assert_eq!(percentile(&xs, 100.0), 4.0);
        assert_eq!(percentile(&[7.0], 30.0), 7.0);
    }

    proptest! {
        #[test]
        fn matches_rank_reference(mut xs in prop::collection::vec(-1e6f64..1e6, 1..60), p in 0.0f64..=100.0) {
            xs.sort_by(f64::total_cmp);
            let got = percentile(&xs, p);
            // Reference: the value at fractional rank p/100 * (n-1) by
            // walking the sorted sample.
            let rank = p / 100.0 * (xs.len() - 1) as f64;
            let mut i = 0;
            while ((i + 1) as f64) <= rank && i + 1 < xs.len() {
                i += 1;
            }
            let want = if i + 1 < xs.len() { xs[i] * (1.0 - (rank - i as f64)) + xs[i + 1] * (rank - i as f64) } else { xs[i] };
            prop_assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()));
            prop_assert!(got >= xs[0] && got <= xs[xs.len() - 1]);
        }
    }

    #[test]
    fn csv_and_table() {
        let rows = vec![
            Row {
                benchmark: "a.dag".into(),
                baseline_size: 10,
                simplified_size: 8,
                baseline_metric: None,
                simplified_metric: None,
            },
            Row {
                benchmark: "b.dag".into(),
                baseline_size: 20,
                simplified_size: 20,
                baseline_metric: None,
                simplified_metric: None,
            },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "benchmark,baseline_size,simplified_size,baseline_metric,simplified_metric"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "a.dag,10,8,,");
        let t = percentile_table(&rows);
        assert!(t.contains("reduction_pct"));
        assert!(!t.contains("baseline_metric"));
        assert_eq!(rows[0].reduction(), 20.0);
    }
}

use std::fmt::Write as _;

use gpnn::metrics::MetricsReport;
use gpnn::predict::FitTimings;

/// `x` rounded to three significant figures.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = 2 - magnitude;
    if decimals >= 0 {
        format!("{:.*}", decimals as usize, x)
    } else {
        let step = 10f64.powi(-decimals);
        format!("{}", (x / step).round() * step)
    }
}

/// Mean and sample standard deviation; the latter needs two or more values.
pub fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Per-run metric rows keyed by a run label.
pub fn metrics_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut s = format!("run,{}\n", MetricsReport::CSV_HEADER);
    for (label, r) in rows {
        let _ = writeln!(s, "{label},{}", r.to_csv_row());
    }
    s
}

/// `metric,mean,sd,runs` over all runs; `sd` is empty for a single run.
pub fn summary_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("metric,mean,sd,runs\n");
    let columns: [(&str, fn(&MetricsReport) -> f64); 4] = [
        ("mse", |r| r.mse),
        ("rmse", |r| r.rmse),
        ("nll", |r| r.nll),
        ("cal", |r| r.cal),
    ];
    for (name, get) in columns {
        let vals: Vec<f64> = rows.iter().map(|(_, r)| get(r)).collect();
        let (mean, sd) = mean_sd(&vals);
        let sd = sd.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{name},{mean},{sd},{}", vals.len());
    }
    s
}

pub fn timing_line(label: &str, t: &FitTimings) -> String {
    format!(
        "{label}: whitening {} s, estimation {} s, index build {} s, calibration {} s, total {} s",
        sig3(t.whitening),
        sig3(t.estimation),
        sig3(t.index_build),
        sig3(t.calibration),
        sig3(t.total())
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_significant_figures() {
        assert_eq!(sig3(11.93), "11.9");
        assert_eq!(sig3(0.012345), "0.0123");
        assert_eq!(sig3(1234.5), "1230");
        assert_eq!(sig3(1.0), "1.00");
        assert_eq!(sig3(-0.5), "-0.500");
        assert_eq!(sig3(0.0), "0");
    }

    #[test]
    fn aggregation() {
        assert_eq!(mean_sd(&[2.0]), (2.0, None));
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(sd, Some(1.0));
        let r = MetricsReport {
            mse: 1.0,
            rmse: 1.0,
            nll: 0.5,
            cal: 1.0,
            count: 4,
        };
        let one = summary_csv(&[("s0".into(), r.clone())]);
        assert!(one.contains("\nmse,1,,1\n"));
        let three = summary_csv(&[("a".into(), r.clone()), ("b".into(), r.clone()), ("c".into(), r)]);
        assert!(three.contains("\nmse,1,0,3\n"));
    }
}

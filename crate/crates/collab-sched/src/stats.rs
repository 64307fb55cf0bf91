//! Small-sample summaries for replication studies: means, Student-t
//! confidence half-widths, and the quantile table backing them.

/// Two-sided 95% Student-t quantile (the 97.5th percentile) for `df`
/// degrees of freedom. Exact table through 30 degrees of freedom, then the
/// usual conservative steps at 40, 60, and 120 before the normal limit.
pub fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[df - 1],
        31..=40 => 2.021,
        41..=60 => 2.000,
        61..=120 => 1.980,
        _ => 1.960,
    }
}

/// Mean, spread, and confidence half-width of a replication sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    /// Sample size.
    pub n: usize,
    /// Sample mean (0 for an empty sample).
    pub mean: f64,
    /// Sample standard deviation (0 for fewer than two points).
    pub std_dev: f64,
    /// Half-width of the two-sided 95% Student-t interval around the mean
    /// (0 for fewer than two points).
    pub ci_halfwidth: f64,
}

/// Summarize a sample of replication outputs.
pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary { n, mean: 0.0, std_dev: 0.0, ci_halfwidth: 0.0 };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary { n, mean, std_dev: 0.0, ci_halfwidth: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let std_dev = var.sqrt();
    let ci_halfwidth = t_quantile_975(n - 1) * std_dev / (n as f64).sqrt();
    Summary { n, mean, std_dev, ci_halfwidth }
}

/// Two 95% intervals that do not overlap: a simple, conservative separation
/// check for comparing policies replication-by-replication.
pub fn intervals_separated(a: Summary, b: Summary) -> bool {
    if a.mean <= b.mean {
        a.mean + a.ci_halfwidth < b.mean - b.ci_halfwidth
    } else {
        b.mean + b.ci_halfwidth < a.mean - a.ci_halfwidth
    }
}

//! Least-squares line fits used for decay-rate estimates.

/// Ordinary least squares y = a x + b. Returns (slope, intercept,
/// stderr_of_slope); None for fewer than 3 points or degenerate x.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ssr = 0.0;
    for &(x, y) in points {
        let e = y - (slope * x + intercept);
        ssr += e * e;
    }
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Some((slope, intercept, stderr))
}

/// Fit of log y against log x; points with nonpositive coordinates make
/// the fit undefined. Returns (slope, stderr_of_slope).
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    linear_fit(&logs).map(|(slope, _, stderr)| (slope, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let points: Vec<(f64, f64)> = (1..20)
            .map(|k| {
                let t = 0.5 * 1.3_f64.powi(k);
                (t, 2.0 * t.powf(-0.75))
            })
            .collect();
        let (slope, stderr) = loglog_fit(&points).unwrap();
        assert!((slope + 0.75).abs() < 1e-12);
        assert!(stderr < 1e-12);
    }

    #[test]
    fn degenerate_inputs_yield_none() {
        assert!(loglog_fit(&[(1.0, 1.0), (2.0, 0.5)]).is_none());
        assert!(loglog_fit(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_none());
        assert!(loglog_fit(&[(1.0, 1.0), (2.0, -0.5), (3.0, 0.1)]).is_none());
    }
}

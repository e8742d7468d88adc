//! Small fitting helpers for oscillation traces.

use crate::error::{Error, Result};

/// Times where `f` crosses `level`, located on a grid of `n_grid` intervals
/// over `[0, t_max]` and refined by bisection to machine precision.
pub fn crossings_of<F: Fn(f64) -> f64>(f: F, level: f64, t_max: f64, n_grid: usize) -> Vec<f64> {
    let g = |t: f64| f(t) - level;
    let dt = t_max / n_grid as f64;
    let mut out = Vec::new();
    let mut t0 = 0.0;
    let mut g0 = g(t0);
    for i in 1..=n_grid {
        let t1 = dt * i as f64;
        let g1 = g(t1);
        if g0 == 0.0 && i > 1 {
            out.push(t0);
        } else if g0 * g1 < 0.0 {
            let (mut lo, mut hi, mut glo) = (t0, t1, g0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == (glo < 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        t0 = t1;
        g0 = g1;
    }
    out
}

/// Crossings of a sampled trace, by linear interpolation between samples.
pub fn sampled_crossings(ts: &[f64], ys: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..ts.len().min(ys.len()) {
        let (a, b) = (ys[i - 1] - level, ys[i] - level);
        if a * b < 0.0 {
            out.push(ts[i - 1] + (ts[i] - ts[i - 1]) * a / (a - b));
        }
    }
    out
}

/// Period from successive level crossings, assuming they are spaced by half a
/// period. Least-squares slope of crossing time against crossing index.
pub fn period_from_crossings(crossings: &[f64]) -> Result<f64> {
    if crossings.len() < 2 {
        return Err(Error::NonConvergence(
            "need at least two crossings to estimate a period".into(),
        ));
    }
    let n = crossings.len() as f64;
    let mean_i = (n - 1.0) / 2.0;
    let mean_t = crossings.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &t) in crossings.iter().enumerate() {
        let dx = i as f64 - mean_i;
        sxy += dx * (t - mean_t);
        sxx += dx * dx;
    }
    Ok(2.0 * sxy / sxx)
}

/// Angular frequency of an oscillating function from its mid-level
/// crossings over `[0, t_max]`.
pub fn angular_frequency_of<F: Fn(f64) -> f64>(
    f: F,
    level: f64,
    t_max: f64,
    n_grid: usize,
) -> Result<f64> {
    let c = crossings_of(f, level, t_max, n_grid);
    Ok(2.0 * std::f64::consts::PI / period_from_crossings(&c)?)
}

/// Local maxima of a sampled trace, refined by a parabola through the three
/// samples around each maximum. Returns (time, value) pairs; the first
/// sample counts as a maximum when it exceeds its neighbour.
pub fn local_maxima(ts: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let n = ts.len().min(ys.len());
    let mut out = Vec::new();
    if n >= 2 && ys[0] > ys[1] {
        out.push((ts[0], ys[0]));
    }
    for i in 1..n.saturating_sub(1) {
        if ys[i] > ys[i - 1] && ys[i] >= ys[i + 1] {
            let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let h = ts[i + 1] - ts[i];
            if denom < 0.0 {
                let off = 0.5 * (y0 - y2) / denom;
                let peak = y1 - 0.25 * (y0 - y2) * off;
                out.push((ts[i] + off * h, peak));
            } else {
                out.push((ts[i], y1));
            }
        }
    }
    out
}

/// Result of fitting ln(envelope) = b t + c t^2 through the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeFit {
    pub linear: f64,
    pub quadratic: f64,
    /// RMS residual of the log-envelope fit.
    pub rms_residual: f64,
    pub points: usize,
}

impl EnvelopeFit {
    /// Least squares on (t, y) with y > `floor`; y is assumed normalized to 1
    /// at t = 0.
    pub fn fit(points: &[(f64, f64)], floor: f64) -> Result<Self> {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|(t, y)| *t > 0.0 && *y > floor)
            .map(|&(t, y)| (t, y.ln()))
            .collect();
        if pts.len() < 2 {
            return Err(Error::NonConvergence(format!(
                "envelope fit needs at least two points above {floor}, got {}",
                pts.len()
            )));
        }
        // Normal equations for y = b t + c t^2.
        let (mut s2, mut s3, mut s4, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(t, y) in &pts {
            s2 += t * t;
            s3 += t * t * t;
            s4 += t * t * t * t;
            sy1 += y * t;
            sy2 += y * t * t;
        }
        let det = s2 * s4 - s3 * s3;
        let (b, c) = if det.abs() > 1e-300 * s2 * s4 {
            ((sy1 * s4 - sy2 * s3) / det, (s2 * sy2 - s3 * sy1) / det)
        } else {
            (sy1 / s2, 0.0)
        };
        let rms = (pts
            .iter()
            .map(|&(t, y)| (y - b * t - c * t * t).powi(2))
            .sum::<f64>()
            / pts.len() as f64)
            .sqrt();
        Ok(Self {
            linear: b,
            quadratic: c,
            rms_residual: rms,
            points: pts.len(),
        })
    }

    /// First positive time where the fitted envelope equals exp(log_level).
    pub fn time_to(&self, log_level: f64) -> Option<f64> {
        let (a, b, c) = (self.quadratic, self.linear, -log_level);
        // a t^2 + b t + c = 0 with c > 0 for a decay level.
        if a.abs() < 1e-300 {
            return (b < 0.0).then(|| -c / b);
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
        roots
            .into_iter()
            .filter(|r| *r > 0.0 && r.is_finite())
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn frequency_of_sin_squared() {
        let w = 2.345;
        let est = angular_frequency_of(|t| (w * t / 2.0).sin().powi(2), 0.5, 20.0, 400).unwrap();
        assert!((est / w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_crossings_are_accurate_at_inflection() {
        let w = 2.0 * PI;
        let ts: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.005).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (w * t / 2.0).sin().powi(2)).collect();
        let period = period_from_crossings(&sampled_crossings(&ts, &ys, 0.5)).unwrap();
        assert!((period - 1.0).abs() < 1e-6);
    }

    #[test]
    fn peaks_and_gaussian_envelope() {
        let tau = 3.0;
        let ts: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.005).collect();
        let ys: Vec<f64> = ts
            .iter()
            .map(|t| (PI * t / 0.6).cos().powi(2) * (-2.0 * t * t / (tau * tau)).exp())
            .collect();
        let peaks = local_maxima(&ts, &ys);
        assert!(peaks.len() > 10);
        let fit = EnvelopeFit::fit(&peaks, 1e-3).unwrap();
        let t = fit.time_to(-2.0).unwrap();
        assert!((t - tau).abs() / tau < 0.01, "{t}");
    }

    #[test]
    fn exponential_envelope() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (-0.5 * i as f64).exp())).collect();
        let fit = EnvelopeFit::fit(&pts, 1e-6).unwrap();
        assert!((fit.time_to(-2.0).unwrap() - 4.0).abs() < 1e-9);
    }
}

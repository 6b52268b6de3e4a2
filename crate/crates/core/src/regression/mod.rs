//! Least-squares fitting of the ageing potential model and identification of
//! circuit parameters from measured traces.

mod identify;

pub use identify::{
    fit_circuit_params, FitParam, IdentOptions, IdentResult, MeasuredTrace, ParamBounds,
};

use serde::{Deserialize, Serialize};

use crate::ageing::{ApCurve, ApModel};
use crate::error::{Error, Result};

/// Coefficient of determination `1 − SS_res/SS_tot`.
///
/// Returns 1 for an exact fit (including constant data) and 0 when the data
/// are constant but the prediction misses them.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: predicted.len(),
        });
    }
    if observed.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p) * (o - p))
        .sum();
    if ss_res == 0.0 {
        return Ok(1.0);
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean) * (o - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApFit {
    pub model: ApModel,
    /// Against the curve's AP values (linear space).
    pub r_squared: f64,
    /// RMS of `AP_i − model(f_i)`.
    pub residual_rms: f64,
    /// Objective evaluations (grid plus golden-section refinement).
    pub iterations: usize,
    pub converged: bool,
    /// All AP values were identical; the model is the constant `a`.
    pub degenerate: bool,
}

/// Number of log-spaced `c` candidates scanned before refinement.
const C_GRID: usize = 400;
/// Width of the scanned `c` range beyond `[f_min², f_max²]`, decades.
const C_MARGIN_DECADES: f64 = 4.0;
const GOLDEN_TOL: f64 = 1e-12;

/// Minimizer of a unimodal `f` on `[a, b]` and whether the bracket shrank to
/// tolerance.
fn golden_section(
    f: &impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    evals: &mut usize,
) -> (f64, bool) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    *evals += 2;
    for _ in 0..200 {
        if (b - a) <= GOLDEN_TOL * (1.0 + a.abs().max(b.abs())) {
            return (0.5 * (a + b), true);
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        }
        *evals += 1;
    }
    (0.5 * (a + b), false)
}

struct Profiled {
    ln_a: f64,
    b: f64,
    ssr: f64,
    /// Sign-carrying part of `dSSR/d ln c`; the omitted factor `c` is positive.
    slope: f64,
}

/// Best `(ln a, b)` for a fixed `c` by linear least squares of
/// `ln AP = ln a + b·x`, `x = 1/√(c + f²)`.
fn profile(ln_c: f64, freqs: &[f64], ln_ap: &[f64], y_mean: f64) -> Profiled {
    let c = ln_c.exp();
    let n = freqs.len() as f64;
    let xs = freqs.iter().map(|f| 1.0 / (c + f * f).sqrt());
    let x_mean = xs.clone().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.clone().zip(ln_ap) {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    // x is numerically constant when c dwarfs every f²
    let b = if sxx > 1e-28 * x_mean * x_mean * n {
        sxy / sxx
    } else {
        0.0
    };
    let (mut ssr, mut slope) = (0.0, 0.0);
    for (x, y) in xs.zip(ln_ap) {
        let r = (y - y_mean) - b * (x - x_mean);
        ssr += r * r;
        slope += r * x * x * x;
    }
    Profiled {
        ln_a: y_mean - b * x_mean,
        b,
        ssr,
        slope: b * slope,
    }
}

/// Fits `AP = a·exp(b/√(c + f²))` to a curve.
///
/// The sum of squared log residuals is minimized over `c` by a log-spaced
/// scan followed by refinement of the stationary point; for every `c`, `ln a` and `b`
/// follow in closed form.
pub fn fit_ap_model(curve: &ApCurve) -> Result<ApFit> {
    let points: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.frequency, p.ap)).collect();
    fit_ap_points(&points)
}

/// As [`fit_ap_model`] on raw `(frequency, ap)` pairs in any order.
pub fn fit_ap_points(points: &[(f64, f64)]) -> Result<ApFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: points.len(),
        });
    }
    let mut pts = points.to_vec();
    for &(f, ap) in &pts {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "frequency",
                value: f,
                expected: "a finite value >= 0",
            });
        }
        if !(ap > 0.0 && ap.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ap",
                value: ap,
                expected: "a finite value > 0",
            });
        }
    }
    pts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let freqs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let aps: Vec<f64> = pts.iter().map(|p| p.1).collect();

    if aps.iter().all(|&ap| ap == aps[0]) {
        return Ok(ApFit {
            model: ApModel {
                a: aps[0],
                b: 0.0,
                c: 0.0,
            },
            r_squared: 1.0,
            residual_rms: 0.0,
            iterations: 0,
            converged: true,
            degenerate: true,
        });
    }

    let ln_ap: Vec<f64> = aps.iter().map(|a| a.ln()).collect();
    let y_mean = ln_ap.iter().sum::<f64>() / ln_ap.len() as f64;
    let f_lo = freqs.iter().copied().find(|&f| f > 0.0).unwrap_or(1.0);
    let f_hi = freqs.last().copied().unwrap().max(f_lo);
    let margin = C_MARGIN_DECADES * std::f64::consts::LN_10;
    let (u_lo, u_hi) = (2.0 * f_lo.ln() - margin, 2.0 * f_hi.ln() + margin);
    let grid: Vec<f64> = (0..C_GRID)
        .map(|k| u_lo + (u_hi - u_lo) * k as f64 / (C_GRID - 1) as f64)
        .collect();
    let eval = |u: f64| profile(u, &freqs, &ln_ap, y_mean).ssr;

    let mut iterations = 0;
    let mut best = (0, f64::INFINITY);
    for (k, &u) in grid.iter().enumerate() {
        iterations += 1;
        let ssr = eval(u);
        if ssr < best.1 {
            best = (k, ssr);
        }
    }
    let k = best.0;
    let interior = k > 0 && k + 1 < C_GRID;
    let (lo, hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(C_GRID - 1)]);
    let slope = |u: f64| profile(u, &freqs, &ln_ap, y_mean).slope;
    let (u_best, refined) = if interior && slope(lo) < 0.0 && slope(hi) > 0.0 {
        // The stationarity condition resolves c far more finely than
        // comparisons of nearly equal sums of squares.
        iterations += 2;
        let (mut a, mut b) = (lo, hi);
        let mut done = false;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                done = true;
                break;
            }
            iterations += 1;
            if slope(mid) > 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        (0.5 * (a + b), done)
    } else {
        golden_section(&eval, lo, hi, &mut iterations)
    };
    let u_best = if eval(grid[k]) < eval(u_best) {
        grid[k]
    } else {
        u_best
    };

    let fit = profile(u_best, &freqs, &ln_ap, y_mean);
    let model = ApModel {
        a: fit.ln_a.exp(),
        b: fit.b,
        c: u_best.exp(),
    };
    let predicted = freqs
        .iter()
        .map(|&f| model.eval(f))
        .collect::<Result<Vec<f64>>>()?;
    let r2 = r_squared(&aps, &predicted)?;
    let residual_rms = (aps
        .iter()
        .zip(&predicted)
        .map(|(o, p)| (o - p) * (o - p))
        .sum::<f64>()
        / aps.len() as f64)
        .sqrt();
    Ok(ApFit {
        model,
        r_squared: r2,
        residual_rms,
        iterations,
        converged: refined && interior && r2.is_finite(),
        degenerate: false,
    })
}

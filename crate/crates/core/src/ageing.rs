//! Ageing potential: side-reaction rate under rippled load relative to the
//! rate under the same mean current without ripple.

use serde::{Deserialize, Serialize};

use crate::circuit::{overpotential_for_current, CellParams};
use crate::electrochem::relative_ageing_rate;
use crate::error::{Error, Result};
use crate::simulator::{periodic_steady_state_means, LoadProfile, ProfileKind, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApPoint {
    pub frequency: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApMeta {
    pub i_dc: f64,
    pub i_ac: f64,
    pub kind: ProfileKind,
    /// [`CellParams::fingerprint`] of the simulated cell; 0 when unknown.
    pub fingerprint: u64,
}

/// Ageing potential samples ordered by frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApCurve {
    pub points: Vec<ApPoint>,
    pub meta: ApMeta,
}

impl ApCurve {
    /// Checks ordering and positivity.
    pub fn new(points: Vec<ApPoint>, meta: ApMeta) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[1].frequency > w[0].frequency) {
                return Err(Error::Config(format!(
                    "curve frequencies must be strictly increasing ({} then {})",
                    w[0].frequency, w[1].frequency
                )));
            }
        }
        for pt in &points {
            if !(pt.frequency > 0.0 && pt.frequency.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "frequency",
                    value: pt.frequency,
                    expected: "a finite value > 0",
                });
            }
            if !(pt.ap > 0.0 && pt.ap.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "ap",
                    value: pt.ap,
                    expected: "a finite value > 0",
                });
            }
        }
        Ok(Self { points, meta })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.frequency).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.ap).collect()
    }

    /// AP at the exact grid frequency `f`, if sampled.
    pub fn at(&self, f: f64) -> Option<f64> {
        self.points.iter().find(|p| p.frequency == f).map(|p| p.ap)
    }
}

/// `AP(f) = a·exp(b/√(c + f²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApModel {
    pub a: f64,
    /// Hz
    pub b: f64,
    /// Hz²
    pub c: f64,
}

impl ApModel {
    pub fn eval(&self, f: f64) -> Result<f64> {
        ap_model_eval(f, self)
    }
}

pub fn ap_model_eval(f: f64, m: &ApModel) -> Result<f64> {
    let denom = m.c + f * f;
    if m.b == 0.0 {
        return Ok(m.a);
    }
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Domain {
            quantity: "ap_model_eval (c + f²)",
            value: denom,
        });
    }
    Ok(m.a * (m.b / denom.sqrt()).exp())
}

/// Logarithmic grid from `f_min` to `f_max` inclusive.
pub fn log_frequency_grid(f_min: f64, f_max: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(f_min > 0.0 && f_max > f_min && f_max.is_finite()) {
        return Err(Error::Config(format!(
            "frequency grid needs 0 < f_min < f_max, got {f_min}..{f_max}"
        )));
    }
    if points_per_decade == 0 {
        return Err(Error::Config("points_per_decade must be >= 1".into()));
    }
    let decades = (f_max / f_min).log10();
    let intervals = (decades * points_per_decade as f64 - 1e-9).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..=intervals)
        .map(|k| f_min * 10f64.powf(decades * k as f64 / intervals as f64))
        .collect();
    grid[0] = f_min;
    grid[intervals] = f_max;
    Ok(grid)
}

/// Reference (ripple-free) ageing rate per unit `k_ag` at mean current `i_dc`.
fn dc_reference(i_dc: f64, p: &CellParams) -> Result<f64> {
    let eta = overpotential_for_current(i_dc, &p.electrochem)?;
    relative_ageing_rate(eta, &p.electrochem)
}

/// Cycle-mean ageing rate of a settled sinusoidal load `i_dc + i_ac·sin(2πft)`
/// divided by the ageing rate of the DC load `i_dc`.
///
/// Both rates are formed per unit `k_ag`, so the result does not depend on
/// the side-reaction prefactor at all.
pub fn ageing_potential_at(
    f: f64,
    i_dc: f64,
    i_ac: f64,
    p: &CellParams,
    opts: &SimOptions,
) -> Result<f64> {
    crate::electrochem::positive("frequency", f)?;
    crate::electrochem::non_negative("i_ac", i_ac)?;
    if i_ac == 0.0 {
        p.validate()?;
        return Ok(1.0);
    }
    let reference = dc_reference(i_dc, p)?;
    let settled = periodic_steady_state_means(&LoadProfile::sine(i_dc, i_ac, f), p, opts)?;
    Ok(settled.means.relative_ageing / reference)
}

/// Sweep settings that are not part of the cell or simulation options.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    pub sim: SimOptions,
    /// Worker threads; 0 means all available processors.
    pub jobs: usize,
}

/// Ageing potential at every frequency of `freqs`, evaluated independently
/// (in parallel when `jobs != 1`). The result is ordered as `freqs`
/// regardless of completion order.
pub fn ageing_sweep(
    freqs: &[f64],
    i_dc: f64,
    i_ac: f64,
    p: &CellParams,
    opts: &SweepOptions,
) -> Result<ApCurve> {
    use rayon::prelude::*;

    p.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| {
        freqs
            .par_iter()
            .map(|&f| ageing_potential_at(f, i_dc, i_ac, p, &opts.sim))
            .collect()
    });

    let mut points = Vec::with_capacity(freqs.len());
    let mut failures = Vec::new();
    for (&f, r) in freqs.iter().zip(results) {
        match r {
            Ok(ap) => points.push(ApPoint { frequency: f, ap }),
            Err(e) => failures.push((f, e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Sweep { failures });
    }
    ApCurve::new(
        points,
        ApMeta {
            i_dc,
            i_ac,
            kind: ProfileKind::Sine,
            fingerprint: p.fingerprint(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table() -> CellParams {
        CellParams::default()
    }

    #[test]
    fn model_limits() {
        let m = ApModel {
            a: 1.9,
            b: 800.0,
            c: 4e5,
        };
        assert_relative_eq!(m.eval(1e12).unwrap(), 1.9, max_relative = 1e-8);
        assert_relative_eq!(
            m.eval(0.0).unwrap(),
            1.9 * (800.0 / 4e5f64.sqrt()).exp(),
            max_relative = 1e-15
        );
        let flat = ApModel { b: 0.0, ..m };
        for f in [0.0, 1.0, 1e6] {
            assert_eq!(flat.eval(f).unwrap(), 1.9);
        }
        let singular = ApModel {
            a: 1.0,
            b: 1.0,
            c: 0.0,
        };
        assert!(matches!(singular.eval(0.0), Err(Error::Domain { .. })));
        assert!(singular.eval(1.0).is_ok());
    }

    #[test]
    fn default_grid_has_201_points() {
        let g = log_frequency_grid(1.0, 1e5, 40).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 1.0);
        assert_eq!(*g.last().unwrap(), 1e5);
        assert_relative_eq!(g[40], 10.0, max_relative = 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(log_frequency_grid(10.0, 1.0, 4).is_err());
        assert!(log_frequency_grid(1.0, 10.0, 0).is_err());
    }

    #[test]
    fn no_ripple_means_unit_potential() {
        assert_eq!(
            ageing_potential_at(100.0, 5.0, 0.0, &table(), &SimOptions::default()).unwrap(),
            1.0
        );
    }

    #[test]
    fn ripple_raises_ageing() {
        let ap = ageing_potential_at(2e3, 5.0, 5.0, &table(), &SimOptions::default()).unwrap();
        assert!(ap > 1.0 + 1e-3, "{ap}");
    }

    #[test]
    fn single_frequency_sweep_matches_point_evaluation() {
        let p = table();
        let opts = SweepOptions {
            jobs: 1,
            ..Default::default()
        };
        let curve = ageing_sweep(&[5e3], 5.0, 5.0, &p, &opts).unwrap();
        let direct = ageing_potential_at(5e3, 5.0, 5.0, &p, &opts.sim).unwrap();
        assert_eq!(
            curve.points,
            vec![ApPoint {
                frequency: 5e3,
                ap: direct
            }]
        );
        assert_eq!(curve.meta.fingerprint, p.fingerprint());
    }

    #[test]
    fn sweep_collects_failures() {
        let p = table();
        let opts = SweepOptions {
            jobs: 1,
            sim: SimOptions {
                max_cycles: 1,
                ..Default::default()
            },
        };
        match ageing_sweep(&[3e3, 4e3], 5.0, 5.0, &p, &opts) {
            Err(Error::Sweep { failures }) => assert_eq!(failures.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn curve_validation() {
        let meta = ApMeta {
            i_dc: 5.0,
            i_ac: 5.0,
            kind: ProfileKind::Sine,
            fingerprint: 0,
        };
        let pt = |frequency, ap| ApPoint { frequency, ap };
        assert!(ApCurve::new(vec![pt(1.0, 2.0), pt(2.0, 1.5)], meta).is_ok());
        assert!(ApCurve::new(vec![pt(2.0, 2.0), pt(1.0, 1.5)], meta).is_err());
        assert!(ApCurve::new(vec![pt(1.0, 0.0)], meta).is_err());
        assert!(ApCurve::new(vec![pt(0.0, 1.0)], meta).is_err());
    }

    proptest! {
        #[test]
        fn model_decreases_for_positive_b(a in 0.1f64..10.0, b in 1e-3f64..1e4, c in 1.0f64..1e8, f in 0.0f64..1e5, df in 1e-2f64..1e4) {
            let m = ApModel { a, b, c };
            prop_assert!(m.eval(f + df).unwrap() <= m.eval(f).unwrap());
            prop_assert!(m.eval(f + df).unwrap() >= a);
        }
    }
}

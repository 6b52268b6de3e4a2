//! Circuit parameter identification from a measured current/voltage trace.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{dc_steady_state, terminal_voltage, CellParams};
use crate::error::{Error, Result};
use crate::simulator::{integrate, SampledCurrent, SimulationTrace, MAX_DEFAULT_DT};

/// Uniformly sampled terminal current (A, discharge positive) and voltage (V).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrace {
    time: Vec<f64>,
    current: Vec<f64>,
    voltage: Vec<f64>,
    dt: f64,
}

impl MeasuredTrace {
    pub fn new(time: Vec<f64>, current: Vec<f64>, voltage: Vec<f64>) -> Result<Self> {
        if time.len() != current.len() {
            return Err(Error::LengthMismatch {
                left: time.len(),
                right: current.len(),
            });
        }
        if time.len() != voltage.len() {
            return Err(Error::LengthMismatch {
                left: time.len(),
                right: voltage.len(),
            });
        }
        if time.len() < 5 {
            return Err(Error::InsufficientData {
                needed: 5,
                got: time.len(),
            });
        }
        if !time
            .iter()
            .chain(&current)
            .chain(&voltage)
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("trace contains non-finite samples".into()));
        }
        let n = time.len();
        let dt = (time[n - 1] - time[0]) / (n - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::Config("trace time must increase".into()));
        }
        for (k, w) in time.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::Config(format!(
                    "trace is not uniformly sampled: step {k} is {:e} s, mean step {dt:e} s",
                    w[1] - w[0]
                )));
            }
        }
        Ok(Self {
            time,
            current,
            voltage,
            dt,
        })
    }

    /// Current and terminal voltage of a simulated trace.
    pub fn from_simulation(trace: &SimulationTrace) -> Result<Self> {
        Self::new(
            trace.time.clone(),
            trace.i_load.clone(),
            trace.v_terminal.clone(),
        )
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    ExchangeCurrent,
    ChargeTransferCoeff,
    R0,
    L0,
    RSei,
    CSei,
    CDl,
    Rw1,
    Cw1,
    Rw2,
    Cw2,
}

impl FitParam {
    pub const ALL: [FitParam; 11] = [
        FitParam::ExchangeCurrent,
        FitParam::ChargeTransferCoeff,
        FitParam::R0,
        FitParam::L0,
        FitParam::RSei,
        FitParam::CSei,
        FitParam::CDl,
        FitParam::Rw1,
        FitParam::Cw1,
        FitParam::Rw2,
        FitParam::Cw2,
    ];

    /// Key used in configuration files.
    pub fn name(self) -> &'static str {
        match self {
            FitParam::ExchangeCurrent => "exchange_current",
            FitParam::ChargeTransferCoeff => "charge_transfer_coeff",
            FitParam::R0 => "r0",
            FitParam::L0 => "l0",
            FitParam::RSei => "r_sei",
            FitParam::CSei => "c_sei",
            FitParam::CDl => "c_dl",
            FitParam::Rw1 => "rw1",
            FitParam::Cw1 => "cw1",
            FitParam::Rw2 => "rw2",
            FitParam::Cw2 => "cw2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn get(self, p: &CellParams) -> f64 {
        match self {
            FitParam::ExchangeCurrent => p.electrochem.exchange_current,
            FitParam::ChargeTransferCoeff => p.electrochem.charge_transfer_coeff,
            FitParam::R0 => p.r0,
            FitParam::L0 => p.l0,
            FitParam::RSei => p.r_sei,
            FitParam::CSei => p.c_sei,
            FitParam::CDl => p.c_dl,
            FitParam::Rw1 => p.rw1,
            FitParam::Cw1 => p.cw1,
            FitParam::Rw2 => p.rw2,
            FitParam::Cw2 => p.cw2,
        }
    }

    pub fn set(self, p: &mut CellParams, value: f64) {
        let slot = match self {
            FitParam::ExchangeCurrent => &mut p.electrochem.exchange_current,
            FitParam::ChargeTransferCoeff => &mut p.electrochem.charge_transfer_coeff,
            FitParam::R0 => &mut p.r0,
            FitParam::L0 => &mut p.l0,
            FitParam::RSei => &mut p.r_sei,
            FitParam::CSei => &mut p.c_sei,
            FitParam::CDl => &mut p.c_dl,
            FitParam::Rw1 => &mut p.rw1,
            FitParam::Cw1 => &mut p.cw1,
            FitParam::Rw2 => &mut p.rw2,
            FitParam::Cw2 => &mut p.cw2,
        };
        *slot = value;
    }

    /// A decade either side of `initial`; the transfer coefficient keeps to
    /// `[0.05, 0.95]`.
    pub fn default_bounds(self, initial: f64) -> (f64, f64) {
        match self {
            FitParam::ChargeTransferCoeff => (0.05, 0.95),
            _ => (initial / 10.0, initial * 10.0),
        }
    }
}

impl std::fmt::Display for FitParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub param: FitParam,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentOptions {
    /// Parameters to adjust; the others stay at their initial values.
    pub free: Vec<FitParam>,
    /// Overrides of [`FitParam::default_bounds`].
    pub bounds: Vec<ParamBounds>,
    /// Objective evaluations allowed to the simplex search.
    pub max_evaluations: usize,
    /// Simplex size (in log-parameter units) that ends the search.
    pub spread_tol: f64,
    /// Initial simplex edge, log-parameter units.
    pub initial_step: f64,
    /// Current the cell had settled at before the first sample. `None`
    /// starts from the DC steady state of the first sampled current.
    pub warm_start_current: Option<f64>,
    /// Levenberg-Marquardt iterations after the simplex; 0 disables.
    pub polish_iterations: usize,
}

impl Default for IdentOptions {
    fn default() -> Self {
        Self {
            free: FitParam::ALL.to_vec(),
            bounds: Vec::new(),
            max_evaluations: 5000,
            spread_tol: 1e-8,
            initial_step: 0.05,
            warm_start_current: None,
            polish_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentResult {
    pub params: CellParams,
    /// RMS of simulated minus measured terminal voltage, V.
    pub rmse_voltage: f64,
    /// Free parameters that ended on a bound.
    pub bounds_hit: Vec<FitParam>,
    pub evaluations: usize,
    pub converged: bool,
    /// Best RMSE after every optimizer iteration; never increases.
    pub objective_history: Vec<f64>,
}

struct Problem<'a> {
    trace: &'a MeasuredTrace,
    source: SampledCurrent,
    base: CellParams,
    free: Vec<FitParam>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    substeps: usize,
    warm_current: f64,
}

impl Problem<'_> {
    fn params(&self, theta: &[f64]) -> CellParams {
        let mut p = self.base;
        for (&param, &t) in self.free.iter().zip(theta) {
            param.set(&mut p, t.exp());
        }
        p
    }

    fn clamp(&self, theta: &mut [f64]) {
        for ((t, &lo), &hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *t = t.clamp(lo, hi);
        }
    }

    /// Simulated minus measured voltage, or `None` when the candidate cannot
    /// be simulated.
    fn residuals(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let p = self.params(theta);
        p.validate().ok()?;
        let initial = dc_steady_state(self.warm_current, &p).ok()?;
        let m = self.substeps;
        let n = self.trace.len();
        let mut out = Vec::with_capacity(n);
        let measured = &self.trace.voltage;
        integrate(
            &self.source,
            &p,
            self.trace.time[0],
            self.trace.dt / m as f64,
            (n - 1) * m,
            initial,
            true,
            |k, s| {
                if k % m == 0 {
                    let v = terminal_voltage(&s.state, s.i_load, s.di_dt, &p);
                    out.push(v - measured[k / m]);
                }
                Ok(())
            },
        )
        .ok()?;
        out.iter().all(|r| r.is_finite()).then_some(out)
    }

    fn rmse(&self, theta: &[f64]) -> f64 {
        match self.residuals(theta) {
            Some(r) => rms(&r),
            None => f64::INFINITY,
        }
    }
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt()
}

/// Adjusts the free parameters of `initial` so that the simulated terminal
/// voltage under the measured current matches the measured voltage.
///
/// The search runs in log-parameter space: a bounded Nelder-Mead simplex
/// first, then a Levenberg-Marquardt refinement with a finite-difference
/// Jacobian. The integrator step is the sample interval divided into enough
/// substeps to resolve the fastest RC stage of `initial`.
pub fn fit_circuit_params(
    trace: &MeasuredTrace,
    initial: &CellParams,
    opts: &IdentOptions,
) -> Result<IdentResult> {
    initial.validate()?;
    if opts.free.is_empty() {
        return Err(Error::Config("no free parameters to fit".into()));
    }
    let mut free = Vec::new();
    for &p in &opts.free {
        if free.contains(&p) {
            return Err(Error::Config(format!("parameter {p} listed twice")));
        }
        free.push(p);
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut theta0 = Vec::new();
    for &param in &free {
        let x0 = param.get(initial);
        let (lo, hi) = opts
            .bounds
            .iter()
            .find(|b| b.param == param)
            .map_or_else(|| param.default_bounds(x0), |b| (b.lower, b.upper));
        if !(lo > 0.0 && hi > lo && hi.is_finite() && (lo..=hi).contains(&x0)) {
            return Err(Error::Config(format!(
                "bounds [{lo}, {hi}] for {param} must be positive, ordered and contain the initial value {x0}"
            )));
        }
        lower.push(lo.ln());
        upper.push(hi.ln());
        theta0.push(x0.ln());
    }
    if opts.max_evaluations < free.len() + 1 {
        return Err(Error::Config(format!(
            "max_evaluations must be at least {} for {} free parameters",
            free.len() + 1,
            free.len()
        )));
    }

    let limit = (initial.min_rc_time_constant() / 10.0).min(MAX_DEFAULT_DT);
    let substeps = (trace.dt / limit * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let problem = Problem {
        trace,
        source: SampledCurrent::new(trace.time[0], trace.dt, trace.current.clone())?,
        base: *initial,
        free,
        lower,
        upper,
        substeps,
        warm_current: opts.warm_start_current.unwrap_or(trace.current[0]),
    };

    let start = problem.rmse(&theta0);
    if !start.is_finite() {
        return Err(Error::Domain {
            quantity: "voltage RMSE at the initial parameters",
            value: start,
        });
    }

    let mut history = Vec::new();
    let simplex = nelder_mead(&problem, &theta0, opts, &mut history);
    let mut theta = simplex.theta;
    let mut evaluations = simplex.evaluations;
    let mut best = simplex.value;
    let mut polished = false;
    if opts.polish_iterations > 0 {
        let lm = levenberg_marquardt(&problem, &theta, opts.polish_iterations, &mut history);
        evaluations += lm.evaluations;
        if lm.value <= best {
            theta = lm.theta;
            best = lm.value;
        }
        polished = lm.converged;
    }

    let params = problem.params(&theta);
    let bounds_hit = problem
        .free
        .iter()
        .enumerate()
        .filter(|&(j, _)| {
            (theta[j] - problem.lower[j]).abs() < 1e-9 || (problem.upper[j] - theta[j]).abs() < 1e-9
        })
        .map(|(_, &p)| p)
        .collect();
    Ok(IdentResult {
        params,
        rmse_voltage: best,
        bounds_hit,
        evaluations,
        converged: (simplex.converged || polished) && best.is_finite(),
        objective_history: history,
    })
}

struct Outcome {
    theta: Vec<f64>,
    value: f64,
    evaluations: usize,
    converged: bool,
}

fn nelder_mead(
    problem: &Problem<'_>,
    theta0: &[f64],
    opts: &IdentOptions,
    history: &mut Vec<f64>,
) -> Outcome {
    let n = theta0.len();
    let evals = std::cell::Cell::new(0usize);
    let f = |x: &[f64]| {
        evals.set(evals.get() + 1);
        problem.rmse(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((theta0.to_vec(), f(theta0)));
    for j in 0..n {
        let mut x = theta0.to_vec();
        x[j] += if x[j] + opts.initial_step <= problem.upper[j] {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        problem.clamp(&mut x);
        let v = f(&x);
        simplex.push((x, v));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < opts.spread_tol {
            converged = true;
            break;
        }
        if evals.get() + n + 2 > opts.max_evaluations {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let point = |t: f64| {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect();
            problem.clamp(&mut x);
            x
        };
        let (best, second_worst, worst) = (simplex[0].1, simplex[n - 1].1, simplex[n].1);

        let xr = point(-1.0);
        let fr = f(&xr);
        if fr < best {
            let xe = point(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let x = point(-0.5);
            let v = f(&x);
            (x, v)
        } else {
            let x = point(0.5);
            let v = f(&x);
            (x, v)
        };
        if fc < fr.min(worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for (x, v) in simplex[1..].iter_mut() {
            for (xi, bi) in x.iter_mut().zip(&x0) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = f(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (theta, value) = simplex.swap_remove(0);
    Outcome {
        theta,
        value,
        evaluations: evals.get(),
        converged,
    }
}

const FD_STEP: f64 = 1e-6;

fn levenberg_marquardt(
    problem: &Problem<'_>,
    theta0: &[f64],
    iterations: usize,
    history: &mut Vec<f64>,
) -> Outcome {
    let n = theta0.len();
    let mut evaluations = 1;
    let mut theta = theta0.to_vec();
    let Some(mut r) = problem.residuals(&theta) else {
        return Outcome {
            theta,
            value: f64::INFINITY,
            evaluations,
            converged: false,
        };
    };
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut lambda = 1e-3;
    let mut converged = false;

    'outer: for _ in 0..iterations {
        let columns: Vec<Option<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut hi = theta.clone();
                let mut lo = theta.clone();
                hi[j] = (theta[j] + FD_STEP).min(problem.upper[j]);
                lo[j] = (theta[j] - FD_STEP).max(problem.lower[j]);
                let (rh, rl) = (problem.residuals(&hi)?, problem.residuals(&lo)?);
                let h = hi[j] - lo[j];
                Some(rh.iter().zip(&rl).map(|(a, b)| (a - b) / h).collect())
            })
            .collect();
        evaluations += 2 * n;
        let Some(jac) = columns.into_iter().collect::<Option<Vec<Vec<f64>>>>() else {
            break;
        };

        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        for a in 0..n {
            jtr[a] = jac[a].iter().zip(&r).map(|(x, y)| x * y).sum();
            for b in a..n {
                let v: f64 = jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum();
                jtj[(a, b)] = v;
                jtj[(b, a)] = v;
            }
        }
        let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);

        loop {
            let mut lhs = jtj.clone();
            for a in 0..n {
                lhs[(a, a)] += lambda * jtj[(a, a)].max(1e-12 * scale);
            }
            let step = match lhs.clone().cholesky() {
                Some(ch) => ch.solve(&(-&jtr)),
                None => match lhs.svd(true, true).solve(&(-&jtr), 1e-14 * scale) {
                    Ok(s) => s,
                    Err(_) => break 'outer,
                },
            };
            let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + d).collect();
            problem.clamp(&mut trial);
            let moved = trial
                .iter()
                .zip(&theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if moved < 1e-12 {
                converged = true;
                break 'outer;
            }
            evaluations += 1;
            let candidate = problem.residuals(&trial);
            let trial_cost = candidate
                .as_ref()
                .map_or(f64::INFINITY, |c| c.iter().map(|x| x * x).sum());
            if trial_cost < cost {
                let gain = (cost - trial_cost) / cost;
                theta = trial;
                r = candidate.unwrap();
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                history.push((cost / r.len() as f64).sqrt());
                if gain < 1e-12 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                // no descent direction left at working precision
                converged = true;
                break 'outer;
            }
        }
    }
    Outcome {
        value: (cost / r.len() as f64).sqrt(),
        theta,
        evaluations,
        converged,
    }
}

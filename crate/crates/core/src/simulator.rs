//! Fixed-step RK4 integration of the circuit under prescribed load currents.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::{
    dc_steady_state, derivative_and_current, terminal_voltage, CellParams, CellState,
};
use crate::electrochem::{self, relative_ageing_rate};
use crate::error::{Error, Result};

/// Upper bound on the default integration step, s.
pub const MAX_DEFAULT_DT: f64 = 0.2e-6;
/// Minimum default number of steps per load period.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Dc,
    Sine,
    Rect,
}

impl std::fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProfileKind::Dc => "dc",
            ProfileKind::Sine => "sine",
            ProfileKind::Rect => "rect",
        })
    }
}

/// Parametric load current waveform. Discharge is positive.
///
/// For `Rect`, the waveform swings `2·i_ac` peak to peak and the levels sit
/// at `i_dc + 2·i_ac·(1 − duty)` and `i_dc − 2·i_ac·duty`, so the period mean
/// is `i_dc` for every duty cycle. Edges are linear ramps at `slew_rate`,
/// each starting where the ideal edge would be.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub kind: ProfileKind,
    pub i_dc: f64,
    pub i_ac: f64,
    pub frequency: f64,
    pub duty: f64,
    /// A/s
    pub slew_rate: f64,
}

impl LoadProfile {
    pub const DEFAULT_SLEW_RATE: f64 = 1e6;

    pub fn dc(i_dc: f64) -> Self {
        Self {
            kind: ProfileKind::Dc,
            i_dc,
            i_ac: 0.0,
            frequency: 0.0,
            duty: 0.5,
            slew_rate: Self::DEFAULT_SLEW_RATE,
        }
    }

    pub fn sine(i_dc: f64, i_ac: f64, frequency: f64) -> Self {
        Self {
            kind: ProfileKind::Sine,
            i_ac,
            frequency,
            ..Self::dc(i_dc)
        }
    }

    pub fn rect(i_dc: f64, i_ac: f64, frequency: f64, duty: f64) -> Self {
        Self {
            kind: ProfileKind::Rect,
            i_ac,
            frequency,
            duty,
            ..Self::dc(i_dc)
        }
    }

    pub fn with_slew_rate(self, slew_rate: f64) -> Self {
        Self { slew_rate, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name, value: f64| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    expected: "a finite value",
                })
            }
        };
        finite("i_dc", self.i_dc)?;
        if self.kind == ProfileKind::Dc {
            return Ok(());
        }
        electrochem::non_negative("i_ac", self.i_ac)?;
        electrochem::positive("frequency", self.frequency)?;
        if self.kind == ProfileKind::Rect {
            if !(self.duty > 0.0 && self.duty < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "duty",
                    value: self.duty,
                    expected: "a value in (0, 1)",
                });
            }
            electrochem::positive("slew_rate", self.slew_rate)?;
            let period = 1.0 / self.frequency;
            let shortest = period * self.duty.min(1.0 - self.duty);
            if self.edge_time() > shortest {
                return Err(Error::Config(format!(
                    "rect edges of {:.3e} s do not fit a {:.3e} s pulse; raise slew_rate or lower frequency",
                    self.edge_time(),
                    shortest
                )));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> Option<f64> {
        match self.kind {
            ProfileKind::Dc => None,
            _ => Some(1.0 / self.frequency),
        }
    }

    /// Rect (low, high) levels.
    pub fn levels(&self) -> (f64, f64) {
        let swing = 2.0 * self.i_ac;
        (
            self.i_dc - swing * self.duty,
            self.i_dc + swing * (1.0 - self.duty),
        )
    }

    fn edge_time(&self) -> f64 {
        2.0 * self.i_ac / self.slew_rate
    }

    /// Load current and its exact time derivative at `t`.
    ///
    /// Rect corners take the slope of the segment that starts there.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        match self.kind {
            ProfileKind::Dc => (self.i_dc, 0.0),
            ProfileKind::Sine => {
                let omega = 2.0 * PI * self.frequency;
                let (s, c) = (omega * t).sin_cos();
                (self.i_dc + self.i_ac * s, self.i_ac * omega * c)
            }
            ProfileKind::Rect => {
                let period = 1.0 / self.frequency;
                let cycles = t * self.frequency;
                let tau = (cycles - cycles.floor()) * period;
                let (low, high) = self.levels();
                let edge = self.edge_time();
                let fall_start = self.duty * period;
                if tau < edge {
                    (low + self.slew_rate * tau, self.slew_rate)
                } else if tau < fall_start {
                    (high, 0.0)
                } else if tau < fall_start + edge {
                    (high - self.slew_rate * (tau - fall_start), -self.slew_rate)
                } else {
                    (low, 0.0)
                }
            }
        }
    }

    /// Default step: `min(period/500, 0.2 µs)`, rounded down so that a whole
    /// number of steps spans one period.
    pub fn default_dt(&self) -> f64 {
        match self.period() {
            None => MAX_DEFAULT_DT,
            Some(period) => period / steps_per_period(period, MAX_DEFAULT_DT) as f64,
        }
    }
}

fn steps_per_period(period: f64, dt_max: f64) -> usize {
    ((period / dt_max).ceil() as usize).max(DEFAULT_STEPS_PER_PERIOD)
}

pub fn sample_profile(profile: &LoadProfile, t: f64) -> (f64, f64) {
    profile.sample(t)
}

/// Anything that prescribes the load current over time.
pub trait CurrentSource {
    /// `(i_load, di_load/dt)` at time `t`.
    fn current(&self, t: f64) -> (f64, f64);
}

impl CurrentSource for LoadProfile {
    #[inline]
    fn current(&self, t: f64) -> (f64, f64) {
        self.sample(t)
    }
}

/// Uniformly sampled current, interpolated with cubic Hermite segments.
///
/// Node slopes come from fourth-order finite differences, which keeps the
/// reconstruction error well below that of the sampled signal's own
/// curvature for smooth waveforms.
#[derive(Debug, Clone)]
pub struct SampledCurrent {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl SampledCurrent {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        electrochem::positive("sample interval", dt)?;
        if values.len() < 5 {
            return Err(Error::InsufficientData {
                needed: 5,
                got: values.len(),
            });
        }
        let n = values.len();
        let v = &values;
        let slopes = (0..n)
            .map(|k| {
                let d = if k >= 2 && k + 2 < n {
                    v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]
                } else if k < 2 {
                    // one-sided, shifted to stay inside the data
                    let j = k;
                    let w = &v[0..5];
                    match j {
                        0 => -25.0 * w[0] + 48.0 * w[1] - 36.0 * w[2] + 16.0 * w[3] - 3.0 * w[4],
                        _ => -3.0 * w[0] - 10.0 * w[1] + 18.0 * w[2] - 6.0 * w[3] + w[4],
                    }
                } else {
                    let w = &v[n - 5..n];
                    match n - 1 - k {
                        0 => 25.0 * w[4] - 48.0 * w[3] + 36.0 * w[2] - 16.0 * w[1] + 3.0 * w[0],
                        _ => 3.0 * w[4] + 10.0 * w[3] - 18.0 * w[2] + 6.0 * w[1] - w[0],
                    }
                };
                d / (12.0 * dt)
            })
            .collect();
        Ok(Self {
            t0,
            dt,
            values,
            slopes,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl CurrentSource for SampledCurrent {
    fn current(&self, t: f64) -> (f64, f64) {
        let u = (t - self.t0) / self.dt;
        let last = self.values.len() - 1;
        let nearest = u.round();
        if (u - nearest).abs() < 1e-9 && nearest >= 0.0 && nearest as usize <= last {
            let k = nearest as usize;
            return (self.values[k], self.slopes[k]);
        }
        let k = (u.floor().max(0.0) as usize).min(last - 1);
        let s = (u - k as f64).clamp(0.0, 1.0);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.dt, self.slopes[k + 1] * self.dt);
        let (s2, s3) = (s * s, s * s * s);
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let slope = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / self.dt;
        (value, slope)
    }
}

/// One evaluated point of an integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub i_load: f64,
    pub di_dt: f64,
    pub state: CellState,
    pub i_int: f64,
    pub i_dl: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub time: Vec<f64>,
    pub i_load: Vec<f64>,
    pub v_terminal: Vec<f64>,
    pub eta_ct: Vec<f64>,
    pub i_int: Vec<f64>,
    pub i_dl: Vec<f64>,
    pub ageing_rate: Vec<f64>,
    /// State after the last integration step, for chaining runs.
    pub final_state: CellState,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            time: Vec::with_capacity(n),
            i_load: Vec::with_capacity(n),
            v_terminal: Vec::with_capacity(n),
            eta_ct: Vec::with_capacity(n),
            i_int: Vec::with_capacity(n),
            i_dl: Vec::with_capacity(n),
            ageing_rate: Vec::with_capacity(n),
            final_state: CellState::ZERO,
        }
    }

    fn push(&mut self, s: &Sample, p: &CellParams) -> Result<()> {
        let eta = s.state.eta_ct();
        let ageing =
            electrochem::lumped_ageing_rate(eta, &p.electrochem).map_err(|e| at(s.t, e))?;
        self.time.push(s.t);
        self.i_load.push(s.i_load);
        self.v_terminal
            .push(terminal_voltage(&s.state, s.i_load, s.di_dt, p));
        self.eta_ct.push(eta);
        self.i_int.push(s.i_int);
        self.i_dl.push(s.i_dl);
        self.ageing_rate.push(ageing);
        Ok(())
    }
}

fn at(time: f64, source: Error) -> Error {
    Error::Numeric {
        time,
        source: Box::new(source),
    }
}

#[inline]
fn evaluate<S: CurrentSource>(
    source: &S,
    p: &CellParams,
    t: f64,
    state: &CellState,
) -> Result<(CellState, Sample)> {
    let (i_load, di_dt) = source.current(t);
    let (d, i_int) = derivative_and_current(state, i_load, p).map_err(|e| at(t, e))?;
    let sample = Sample {
        t,
        i_load,
        di_dt,
        state: *state,
        i_int,
        i_dl: electrochem::double_layer_current(d.v_dl, p.c_dl),
    };
    Ok((d, sample))
}

/// Advances `initial` by `steps` RK4 steps starting at `t0`.
///
/// `observe` sees the sample at the start of every step and, when
/// `observe_end` is set, the sample at the final time as well.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate<S, F>(
    source: &S,
    p: &CellParams,
    t0: f64,
    dt: f64,
    steps: usize,
    initial: CellState,
    observe_end: bool,
    mut observe: F,
) -> Result<CellState>
where
    S: CurrentSource,
    F: FnMut(usize, &Sample) -> Result<()>,
{
    let mut y = initial;
    let half = 0.5 * dt;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let (k1, sample) = evaluate(source, p, t, &y)?;
        observe(k, &sample)?;
        let (k2, _) = evaluate(source, p, t + half, &(y + half * k1))?;
        let (k3, _) = evaluate(source, p, t + half, &(y + half * k2))?;
        let (k4, _) = evaluate(source, p, t + dt, &(y + dt * k3))?;
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() {
            return Err(at(
                t + dt,
                Error::Domain {
                    quantity: "circuit state",
                    value: y.max_abs(),
                },
            ));
        }
    }
    if observe_end {
        let t = t0 + steps as f64 * dt;
        let (_, sample) = evaluate(source, p, t, &y)?;
        observe(steps, &sample)?;
    }
    Ok(y)
}

fn check_step(dt: f64, period: Option<f64>, p: &CellParams) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!(
            "dt must be finite and > 0, got {dt}"
        )));
    }
    let rc_limit = p.min_rc_time_constant() / 10.0;
    let period_limit = period.map_or(f64::INFINITY, |t| t / 200.0);
    let limit = rc_limit.min(period_limit);
    // relative slack for step sizes computed as period/N
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "dt = {dt:e} s exceeds the stability/resolution limit {limit:e} s \
             (min(period/200, smallest RC time constant/10))"
        )));
    }
    Ok(())
}

fn step_count(dt: f64, duration: f64) -> Result<usize> {
    if !(duration.is_finite() && duration >= dt) {
        return Err(Error::Config(format!(
            "duration must be finite and at least one step (dt = {dt:e} s), got {duration}"
        )));
    }
    Ok((duration / dt).round() as usize)
}

pub fn simulate(
    profile: &LoadProfile,
    p: &CellParams,
    dt: f64,
    duration: f64,
    initial: CellState,
) -> Result<SimulationTrace> {
    simulate_strided(profile, p, dt, duration, initial, 1)
}

/// As [`simulate`], keeping every `stride`-th sample (the first and, when it
/// lands on the stride, the last sample included).
pub fn simulate_strided(
    profile: &LoadProfile,
    p: &CellParams,
    dt: f64,
    duration: f64,
    initial: CellState,
    stride: usize,
) -> Result<SimulationTrace> {
    profile.validate()?;
    check_step(dt, profile.period(), p)?;
    let steps = step_count(dt, duration)?;
    simulate_source(profile, p, dt, steps, initial, stride)
}

/// Integrates `steps` steps under an arbitrary current source from `t = 0`.
pub fn simulate_source<S: CurrentSource>(
    source: &S,
    p: &CellParams,
    dt: f64,
    steps: usize,
    initial: CellState,
    stride: usize,
) -> Result<SimulationTrace> {
    p.validate()?;
    check_step(dt, None, p)?;
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    if !initial.is_finite() {
        return Err(Error::Config("initial state must be finite".into()));
    }
    let mut trace = SimulationTrace::with_capacity(steps / stride + 1);
    let final_state = integrate(source, p, 0.0, dt, steps, initial, true, |k, s| {
        if k % stride == 0 {
            trace.push(s, p)?;
        }
        Ok(())
    })?;
    trace.final_state = final_state;
    Ok(trace)
}

/// Settings shared by the periodic-steady-state and sweep drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Upper bound on the step; `None` uses [`LoadProfile::default_dt`].
    pub dt: Option<f64>,
    /// Relative change of the cycle-mean ageing rate that counts as settled.
    pub tol: f64,
    pub max_cycles: usize,
    /// Trace decimation for recorded cycles.
    pub stride: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: None,
            tol: 1e-6,
            max_cycles: 10_000,
            stride: 1,
        }
    }
}

impl SimOptions {
    /// Step that divides the profile period into a whole number of steps.
    pub fn step_for(&self, profile: &LoadProfile) -> f64 {
        match (self.dt, profile.period()) {
            (None, _) => profile.default_dt(),
            (Some(dt), None) => dt,
            (Some(dt), Some(period)) => period / ((period / dt).ceil().max(1.0)),
        }
    }
}

/// Averages of one load cycle (rectangle rule over the cycle's steps, which
/// is exact for trigonometric polynomials below the Nyquist limit).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleMeans {
    pub i_load: f64,
    pub i_int: f64,
    pub eta_ct: f64,
    /// Mean of `exp(−α_ag·F·η/(R·T))`, the ageing rate per unit `k_ag`.
    pub relative_ageing: f64,
}

/// Outcome of iterating whole cycles to a periodic steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSteadyState {
    /// State at the end of the converged cycle.
    pub state: CellState,
    /// Recorded converged cycle (empty when only means were requested).
    pub trace: SimulationTrace,
    pub means: CycleMeans,
    pub cycles: usize,
    /// Relative change of the cycle-mean ageing rate on the last cycle.
    pub residual: f64,
    pub dt: f64,
}

impl PeriodicSteadyState {
    /// Cycle-mean of the lumped ageing rate, A.
    pub fn mean_ageing_rate(&self, p: &CellParams) -> f64 {
        p.electrochem.ageing_prefactor * self.means.relative_ageing
    }
}

struct Converged {
    cycle_start: CellState,
    state: CellState,
    means: CycleMeans,
    cycles: usize,
    residual: f64,
    dt: f64,
    steps: usize,
}

fn converge(profile: &LoadProfile, p: &CellParams, opts: &SimOptions) -> Result<Converged> {
    p.validate()?;
    profile.validate()?;
    if !(opts.tol > 0.0) || opts.max_cycles == 0 {
        return Err(Error::Config(
            "tolerance must be > 0 and max_cycles >= 1".into(),
        ));
    }
    let dt = opts.step_for(profile);
    check_step(dt, profile.period(), p)?;
    let steps = match profile.period() {
        Some(period) => (period / dt).round() as usize,
        None => DEFAULT_STEPS_PER_PERIOD,
    };

    let mut state = dc_steady_state(profile.i_dc, p)?;
    let mut previous = relative_ageing_rate(state.eta_ct(), &p.electrochem)?;
    let inv = 1.0 / steps as f64;
    let mut residual = f64::INFINITY;
    for cycle in 0..opts.max_cycles {
        let cycle_start = state;
        let t0 = cycle as f64 * steps as f64 * dt;
        let mut sums = CycleMeans::default();
        state = integrate(profile, p, t0, dt, steps, state, false, |_, s| {
            let eta = s.state.eta_ct();
            sums.i_load += s.i_load;
            sums.i_int += s.i_int;
            sums.eta_ct += eta;
            sums.relative_ageing +=
                relative_ageing_rate(eta, &p.electrochem).map_err(|e| at(s.t, e))?;
            Ok(())
        })?;
        let means = CycleMeans {
            i_load: sums.i_load * inv,
            i_int: sums.i_int * inv,
            eta_ct: sums.eta_ct * inv,
            relative_ageing: sums.relative_ageing * inv,
        };
        residual = ((means.relative_ageing - previous) / means.relative_ageing).abs();
        previous = means.relative_ageing;
        if residual < opts.tol {
            return Ok(Converged {
                cycle_start,
                state,
                means,
                cycles: cycle + 1,
                residual,
                dt,
                steps,
            });
        }
    }
    Err(Error::NotConverged {
        context: "periodic steady state",
        iterations: opts.max_cycles,
        residual,
    })
}

/// Runs whole cycles from `dc_steady_state(i_dc)` until the cycle-mean
/// ageing rate changes by less than `opts.tol` between consecutive cycles,
/// and records the converged cycle. A DC profile uses a nominal cycle of
/// 500 steps and settles on the first one.
pub fn run_to_periodic_steady_state(
    profile: &LoadProfile,
    p: &CellParams,
    opts: &SimOptions,
) -> Result<PeriodicSteadyState> {
    let c = converge(profile, p, opts)?;
    if opts.stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let t0 = (c.cycles - 1) as f64 * c.steps as f64 * c.dt;
    let mut trace = SimulationTrace::with_capacity(c.steps / opts.stride + 1);
    let end = integrate(
        profile,
        p,
        t0,
        c.dt,
        c.steps,
        c.cycle_start,
        false,
        |k, s| {
            if k % opts.stride == 0 {
                trace.push(s, p)?;
            }
            Ok(())
        },
    )?;
    debug_assert_eq!(end, c.state);
    trace.final_state = end;
    Ok(PeriodicSteadyState {
        state: c.state,
        trace,
        means: c.means,
        cycles: c.cycles,
        residual: c.residual,
        dt: c.dt,
    })
}

/// Same convergence loop as [`run_to_periodic_steady_state`] without
/// recording a trace.
pub fn periodic_steady_state_means(
    profile: &LoadProfile,
    p: &CellParams,
    opts: &SimOptions,
) -> Result<PeriodicSteadyState> {
    let c = converge(profile, p, opts)?;
    Ok(PeriodicSteadyState {
        state: c.state,
        trace: SimulationTrace::default(),
        means: c.means,
        cycles: c.cycles,
        residual: c.residual,
        dt: c.dt,
    })
}

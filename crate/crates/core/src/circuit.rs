//! Randles equivalent circuit with a Butler-Volmer charge-transfer element.
//!
//! Topology, from the terminals inwards:
//!
//! ```text
//!  V_ocv ── R0 ── L0 ── (R_sei ∥ C_sei) ──┬── C_dl ─────────────────────────┐
//!                                         └── BV ── (Rw1 ∥ Cw1) ── (Rw2 ∥ Cw2)┘
//! ```
//!
//! Discharge current is positive and the terminal voltage is the open
//! circuit voltage minus the internal drops. The load is a prescribed
//! current, so the inductor adds `L0·di/dt` to the terminal voltage and no
//! state.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::electrochem::{
    self, intercalation_conductance, intercalation_current, ElectrochemParams, SideReactionParams,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Open circuit voltage, V. Held constant for a run.
    pub v_ocv: f64,
    pub r0: f64,
    pub l0: f64,
    pub r_sei: f64,
    pub c_sei: f64,
    pub c_dl: f64,
    pub rw1: f64,
    pub cw1: f64,
    pub rw2: f64,
    pub cw2: f64,
    pub electrochem: ElectrochemParams,
    pub side_reactions: SideReactionParams,
}

impl Default for CellParams {
    /// Identified parameters of the 6s US18650VTC5A module at 80 % SoC, 25 °C.
    fn default() -> Self {
        Self {
            v_ocv: 22.0,
            r0: 77.5e-3,
            l0: 533e-9,
            r_sei: 67e-3,
            c_sei: 23e-3,
            c_dl: 2.6e-3,
            rw1: 0.6e-3,
            cw1: 3.5e-3,
            rw2: 30e-3,
            cw2: 258.0,
            electrochem: ElectrochemParams::default(),
            side_reactions: SideReactionParams::default(),
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        use electrochem::{non_negative, positive};
        positive("v_ocv", self.v_ocv)?;
        non_negative("r0", self.r0)?;
        non_negative("l0", self.l0)?;
        non_negative("r_sei", self.r_sei)?;
        positive("c_sei", self.c_sei)?;
        positive("c_dl", self.c_dl)?;
        non_negative("rw1", self.rw1)?;
        positive("cw1", self.cw1)?;
        non_negative("rw2", self.rw2)?;
        positive("cw2", self.cw2)?;
        self.electrochem.validate()?;
        self.side_reactions.validate()
    }

    /// Smallest time constant among the parallel-RC stages, s.
    ///
    /// Shorted stages (zero resistance) carry no dynamics and are skipped.
    pub fn min_rc_time_constant(&self) -> f64 {
        [
            (self.r_sei, self.c_sei),
            (self.rw1, self.cw1),
            (self.rw2, self.cw2),
        ]
        .iter()
        .filter(|(r, _)| *r > 0.0)
        .map(|(r, c)| r * c)
        .fold(f64::INFINITY, f64::min)
    }

    /// Stable 64-bit FNV-1a hash of every parameter's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let e = &self.electrochem;
        let s = &self.side_reactions;
        let words = [
            self.v_ocv,
            self.r0,
            self.l0,
            self.r_sei,
            self.c_sei,
            self.c_dl,
            self.rw1,
            self.cw1,
            self.rw2,
            self.cw2,
            e.exchange_current,
            e.charge_transfer_coeff,
            f64::from(e.electrons),
            e.temperature,
            e.ageing_alpha,
            e.ageing_prefactor,
            s.ec.rate_prefactor,
            s.ec.cathodic_alpha,
            s.dmc.rate_prefactor,
            s.dmc.cathodic_alpha,
            s.plating.rate_prefactor,
            s.plating.cathodic_alpha,
        ];
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for w in words {
            for byte in w.to_bits().to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }
}

/// Capacitor voltages of the circuit, V.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    /// Across `C_dl`, i.e. across the whole faradaic branch.
    pub v_dl: f64,
    pub v_w1: f64,
    pub v_w2: f64,
    pub v_sei: f64,
}

impl CellState {
    pub const ZERO: CellState = CellState {
        v_dl: 0.0,
        v_w1: 0.0,
        v_w2: 0.0,
        v_sei: 0.0,
    };

    /// Charge-transfer over-potential seen by the Butler-Volmer element.
    #[inline]
    pub fn eta_ct(&self) -> f64 {
        self.v_dl - self.v_w1 - self.v_w2
    }

    pub fn is_finite(&self) -> bool {
        self.v_dl.is_finite()
            && self.v_w1.is_finite()
            && self.v_w2.is_finite()
            && self.v_sei.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.v_dl
            .abs()
            .max(self.v_w1.abs())
            .max(self.v_w2.abs())
            .max(self.v_sei.abs())
    }
}

impl Add for CellState {
    type Output = CellState;
    #[inline]
    fn add(self, o: CellState) -> CellState {
        CellState {
            v_dl: self.v_dl + o.v_dl,
            v_w1: self.v_w1 + o.v_w1,
            v_w2: self.v_w2 + o.v_w2,
            v_sei: self.v_sei + o.v_sei,
        }
    }
}

impl Mul<CellState> for f64 {
    type Output = CellState;
    #[inline]
    fn mul(self, s: CellState) -> CellState {
        CellState {
            v_dl: self * s.v_dl,
            v_w1: self * s.v_w1,
            v_w2: self * s.v_w2,
            v_sei: self * s.v_sei,
        }
    }
}

#[inline]
fn rc_stage(current: f64, voltage: f64, r: f64, c: f64) -> f64 {
    if r > 0.0 {
        (current - voltage / r) / c
    } else {
        0.0
    }
}

/// Time derivative of the state together with the intercalation current.
#[inline]
pub(crate) fn derivative_and_current(
    state: &CellState,
    i_load: f64,
    p: &CellParams,
) -> Result<(CellState, f64)> {
    let i_int = intercalation_current(state.eta_ct(), &p.electrochem)?;
    let d = CellState {
        v_dl: (i_load - i_int) / p.c_dl,
        v_w1: rc_stage(i_int, state.v_w1, p.rw1, p.cw1),
        v_w2: rc_stage(i_int, state.v_w2, p.rw2, p.cw2),
        v_sei: rc_stage(i_load, state.v_sei, p.r_sei, p.c_sei),
    };
    Ok((d, i_int))
}

pub fn state_derivative(state: &CellState, i_load: f64, p: &CellParams) -> Result<CellState> {
    derivative_and_current(state, i_load, p).map(|(d, _)| d)
}

pub fn terminal_voltage(state: &CellState, i_load: f64, di_load_dt: f64, p: &CellParams) -> f64 {
    p.v_ocv - (p.r0 * i_load + p.l0 * di_load_dt + state.v_sei + state.v_dl)
}

/// Over-potential at which the Butler-Volmer element carries `current`.
///
/// Closed form for a symmetric coefficient, safeguarded Newton otherwise.
pub fn overpotential_for_current(current: f64, p: &ElectrochemParams) -> Result<f64> {
    if !current.is_finite() {
        return Err(Error::Domain {
            quantity: "overpotential_for_current",
            value: current,
        });
    }
    let two_vt = 2.0 / p.inverse_thermal_voltage();
    let symmetric_guess = two_vt * (current / (2.0 * p.exchange_current)).asinh();
    if p.charge_transfer_coeff == 0.5 || current == 0.0 {
        return Ok(symmetric_guess);
    }

    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 100;
    let residual = |eta: f64| intercalation_current(eta, p).map(|i| i - current);

    // Bracket the root; the current is strictly increasing in eta.
    let step = symmetric_guess.abs().max(1e-3);
    let (mut lo, mut hi) = (symmetric_guess - step, symmetric_guess + step);
    while residual(lo)? > 0.0 {
        lo -= 2.0 * (hi - lo);
    }
    while residual(hi)? < 0.0 {
        hi += 2.0 * (hi - lo);
    }

    let mut eta = symmetric_guess.clamp(lo, hi);
    let mut r = residual(eta)?;
    for _ in 0..MAX_ITER {
        if r.abs() <= TOL {
            return Ok(eta);
        }
        if r < 0.0 {
            lo = eta;
        } else {
            hi = eta;
        }
        let newton = eta - r / intercalation_conductance(eta, p)?;
        eta = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        r = residual(eta)?;
    }
    if r.abs() <= TOL {
        Ok(eta)
    } else {
        Err(Error::NotConverged {
            context: "Butler-Volmer inversion",
            iterations: MAX_ITER,
            residual: r.abs(),
        })
    }
}

/// Equilibrium of the circuit under a constant load current.
pub fn dc_steady_state(i_dc: f64, p: &CellParams) -> Result<CellState> {
    let eta = overpotential_for_current(i_dc, &p.electrochem)?;
    let v_w1 = i_dc * p.rw1;
    let v_w2 = i_dc * p.rw2;
    Ok(CellState {
        v_dl: eta + v_w1 + v_w2,
        v_w1,
        v_w2,
        v_sei: i_dc * p.r_sei,
    })
}

/// Small-signal charge-transfer resistance at a bias over-potential, Ω.
pub fn local_charge_transfer_resistance(bias_eta: f64, p: &CellParams) -> Result<f64> {
    Ok(1.0 / intercalation_conductance(bias_eta, &p.electrochem)?)
}

fn parallel_rc(r: f64, c: f64, omega: f64) -> Complex64 {
    Complex64::new(r, 0.0) / Complex64::new(1.0, omega * r * c)
}

/// Small-signal impedance at frequency `f` (Hz) with the Butler-Volmer
/// element linearized at `bias_eta`.
pub fn impedance(f: f64, p: &CellParams, bias_eta: f64) -> Result<Complex64> {
    if !(f.is_finite() && f >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "frequency",
            value: f,
            expected: "a finite value >= 0",
        });
    }
    let omega = 2.0 * PI * f;
    let rct = local_charge_transfer_resistance(bias_eta, p)?;
    let branch = rct + parallel_rc(p.rw1, p.cw1, omega) + parallel_rc(p.rw2, p.cw2, omega);
    let interface = 1.0 / (Complex64::new(0.0, omega * p.c_dl) + 1.0 / branch);
    Ok(Complex64::new(p.r0, omega * p.l0) + parallel_rc(p.r_sei, p.c_sei, omega) + interface)
}

/// Corner at which `C_dl` starts to shunt the faradaic branch, Hz.
pub fn cutoff_frequency(p: &CellParams) -> f64 {
    let rct = 1.0 / (p.electrochem.exchange_current * p.electrochem.inverse_thermal_voltage());
    1.0 / (2.0 * PI * (rct + p.rw1 + p.rw2) * p.c_dl)
}

/// Fraction of an AC load amplitude that reaches the faradaic branch under
/// the first-order high-pass approximation. Equals 1 at DC.
pub fn intercalation_divider(f: f64, fc: f64) -> f64 {
    fc / fc.hypot(f)
}

//! Faradaic and non-faradaic interface kinetics.
//!
//! Every over-potential here is measured from the equilibrium potential of
//! the reaction, so equilibrium offsets of the side reactions live inside
//! their rate prefactors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96_485.33;
/// Molar gas constant, J/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314_462;

/// Largest accepted `|F·x/(R·T)|` before an exponential is evaluated.
pub const EXPONENT_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrochemParams {
    /// Lumped exchange current `A·j0` of the intercalation reaction, A.
    pub exchange_current: f64,
    /// Anodic charge-transfer coefficient of intercalation.
    pub charge_transfer_coeff: f64,
    /// Electrons transferred per reaction (linearized form only).
    pub electrons: u32,
    /// Kelvin.
    pub temperature: f64,
    /// Common cathodic coefficient of the side reactions.
    pub ageing_alpha: f64,
    /// Lumped side-reaction prefactor `k_ag`, A.
    pub ageing_prefactor: f64,
}

impl Default for ElectrochemParams {
    fn default() -> Self {
        Self {
            exchange_current: 0.44,
            charge_transfer_coeff: 0.5,
            electrons: 1,
            temperature: 298.15,
            ageing_alpha: 0.5,
            ageing_prefactor: SideReactionParams::default().total_prefactor(),
        }
    }
}

impl ElectrochemParams {
    pub fn validate(&self) -> Result<()> {
        positive("exchange_current", self.exchange_current)?;
        positive("temperature", self.temperature)?;
        unit_open("charge_transfer_coeff", self.charge_transfer_coeff)?;
        unit_open("ageing_alpha", self.ageing_alpha)?;
        if self.electrons == 0 {
            return Err(Error::InvalidParameter {
                name: "electrons",
                value: 0.0,
                expected: "a positive integer",
            });
        }
        non_negative("ageing_prefactor", self.ageing_prefactor)
    }

    /// `F/(R·T)` in 1/V.
    #[inline]
    pub fn inverse_thermal_voltage(&self) -> f64 {
        FARADAY / (GAS_CONSTANT * self.temperature)
    }
}

/// One irreversible cathodic side reaction in lumped-prefactor form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideReaction {
    /// Magnitude of the rate at zero over-potential, A.
    pub rate_prefactor: f64,
    pub cathodic_alpha: f64,
}

/// Side reactions that consume cyclable lithium.
///
/// The kinetic constants of these reactions are not known for the modelled
/// cell. The defaults (1 µA prefactors, all coefficients 0.5) are
/// placeholders with no physical meaning; the ageing potential is a ratio in
/// which the common prefactor cancels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideReactionParams {
    /// SEI growth from ethylene carbonate reduction.
    pub ec: SideReaction,
    /// SEI growth from dimethyl carbonate reduction.
    pub dmc: SideReaction,
    /// Lithium plating.
    pub plating: SideReaction,
}

impl Default for SideReactionParams {
    fn default() -> Self {
        let placeholder = SideReaction {
            rate_prefactor: 1e-6,
            cathodic_alpha: 0.5,
        };
        Self {
            ec: placeholder,
            dmc: placeholder,
            plating: placeholder,
        }
    }
}

impl SideReactionParams {
    pub fn validate(&self) -> Result<()> {
        for r in self.reactions() {
            non_negative("side reaction rate_prefactor", r.rate_prefactor)?;
            unit_open("side reaction cathodic_alpha", r.cathodic_alpha)?;
        }
        Ok(())
    }

    pub fn reactions(&self) -> [SideReaction; 3] {
        [self.ec, self.dmc, self.plating]
    }

    /// Sum of the prefactors, i.e. `k_ag` once the coefficients are equal.
    pub fn total_prefactor(&self) -> f64 {
        self.reactions().iter().map(|r| r.rate_prefactor).sum()
    }
}

/// Per-reaction rates in cathodic convention (all `≤ 0`), A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideReactionRates {
    pub ec: f64,
    pub dmc: f64,
    pub plating: f64,
    pub total: f64,
}

/// Scaled exponent `F·x/(R·T)` after checking finiteness and the overflow guard.
#[inline]
fn guarded(quantity: &'static str, x: f64, p: &ElectrochemParams) -> Result<f64> {
    let scaled = x * p.inverse_thermal_voltage();
    if !scaled.is_finite() || scaled.abs() > EXPONENT_GUARD {
        return Err(Error::Domain { quantity, value: x });
    }
    Ok(scaled)
}

/// Butler-Volmer intercalation current at over-potential `eta` (V), A.
#[inline]
pub fn intercalation_current(eta: f64, p: &ElectrochemParams) -> Result<f64> {
    let x = guarded("intercalation_current", eta, p)?;
    let alpha = p.charge_transfer_coeff;
    Ok(p.exchange_current * ((alpha * x).exp() - (-(1.0 - alpha) * x).exp()))
}

/// `dI/dη` of the Butler-Volmer relation, S.
pub fn intercalation_conductance(eta: f64, p: &ElectrochemParams) -> Result<f64> {
    let x = guarded("intercalation_conductance", eta, p)?;
    let alpha = p.charge_transfer_coeff;
    let f = p.inverse_thermal_voltage();
    Ok(p.exchange_current
        * f
        * (alpha * (alpha * x).exp() + (1.0 - alpha) * (-(1.0 - alpha) * x).exp()))
}

/// Small over-potential approximation `i0·n·F·η/(R·T)`.
pub fn linearized_current(eta: f64, p: &ElectrochemParams) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Domain {
            quantity: "linearized_current",
            value: eta,
        });
    }
    Ok(p.exchange_current * f64::from(p.electrons) * p.inverse_thermal_voltage() * eta)
}

/// `R·T/(n·F·i0)`, Ω.
pub fn charge_transfer_resistance(p: &ElectrochemParams) -> f64 {
    1.0 / (f64::from(p.electrons) * p.exchange_current * p.inverse_thermal_voltage())
}

/// Non-faradaic current charging the double layer.
#[inline]
pub fn double_layer_current(deta_dt: f64, c_dl: f64) -> f64 {
    c_dl * deta_dt
}

pub fn side_reaction_rates(
    eta: f64,
    s: &SideReactionParams,
    p: &ElectrochemParams,
) -> Result<SideReactionRates> {
    let x = guarded("side_reaction_rates", eta, p)?;
    let rate = |r: SideReaction| -r.rate_prefactor * (-r.cathodic_alpha * x).exp();
    let (ec, dmc, plating) = (rate(s.ec), rate(s.dmc), rate(s.plating));
    Ok(SideReactionRates {
        ec,
        dmc,
        plating,
        total: ec + dmc + plating,
    })
}

/// Ageing rate per unit `k_ag`, `exp(−α_ag·F·η/(R·T))`.
///
/// Ratios of ageing rates are formed from this quantity so that the
/// prefactor never enters them.
#[inline]
pub fn relative_ageing_rate(eta: f64, p: &ElectrochemParams) -> Result<f64> {
    let x = guarded("lumped_ageing_rate", eta, p)?;
    Ok((-p.ageing_alpha * x).exp())
}

/// Magnitude of the lumped side-reaction rate, `k_ag·exp(−α_ag·F·η/(R·T))`.
#[inline]
pub fn lumped_ageing_rate(eta: f64, p: &ElectrochemParams) -> Result<f64> {
    Ok(p.ageing_prefactor * relative_ageing_rate(eta, p)?)
}

/// Ageing rate driven by an intercalation current through `R_ct`.
pub fn ageing_rate_from_current(i_int: f64, p: &ElectrochemParams) -> Result<f64> {
    lumped_ageing_rate(charge_transfer_resistance(p) * i_int, p)
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            expected: "a finite value > 0",
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            expected: "a finite value >= 0",
        })
    }
}

fn unit_open(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            expected: "a value in (0, 1)",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table() -> ElectrochemParams {
        ElectrochemParams::default()
    }

    #[test]
    fn zero_overpotential_carries_no_current() {
        assert_eq!(intercalation_current(0.0, &table()).unwrap(), 0.0);
        assert_eq!(linearized_current(0.0, &table()).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_bv_inverts_through_asinh() {
        // alpha = 0.5 reduces the relation to 2·i0·sinh(F·η/(2RT)).
        let p = table();
        let eta = 2.0 * GAS_CONSTANT * p.temperature / FARADAY * (5.0 / (2.0 * 0.44_f64)).asinh();
        assert_relative_eq!(
            intercalation_current(eta, &p).unwrap(),
            5.0,
            max_relative = 1e-12
        );
        // Rounded input from the worked example.
        assert_relative_eq!(
            intercalation_current(0.125282, &p).unwrap(),
            5.000,
            epsilon = 5e-4
        );
    }

    #[test]
    fn symmetric_bv_is_odd() {
        let p = table();
        for eta in [1e-4, 0.013, 0.2, 0.55] {
            let plus = intercalation_current(eta, &p).unwrap();
            let minus = intercalation_current(-eta, &p).unwrap();
            assert_eq!(plus, -minus);
        }
    }

    #[test]
    fn linearized_current_matches_worked_value() {
        let i = linearized_current(1e-3, &table()).unwrap();
        let oracle = 0.44 * 96485.33 * 0.001 / (8.314462 * 298.15);
        assert_relative_eq!(i, oracle, max_relative = 1e-14);
        assert_relative_eq!(i, 0.017125, epsilon = 1e-6);

        let full = intercalation_current(1e-3, &table()).unwrap();
        assert!(((i - full) / full).abs() < 1e-4);
    }

    #[test]
    fn charge_transfer_resistance_scaling() {
        let p = table();
        let rct = charge_transfer_resistance(&p);
        assert_relative_eq!(
            rct,
            8.314462 * 298.15 / (96485.33 * 0.44),
            max_relative = 1e-14
        );
        assert_relative_eq!(rct, 58.392e-3, epsilon = 1e-6);

        let doubled_i0 = ElectrochemParams {
            exchange_current: 0.88,
            ..p
        };
        assert_relative_eq!(
            charge_transfer_resistance(&doubled_i0),
            rct / 2.0,
            max_relative = 1e-14
        );
        let doubled_t = ElectrochemParams {
            temperature: 2.0 * p.temperature,
            ..p
        };
        assert_relative_eq!(
            charge_transfer_resistance(&doubled_t),
            2.0 * rct,
            max_relative = 1e-14
        );
    }

    #[test]
    fn bv_slope_at_origin_is_inverse_rct() {
        let p = table();
        let h = 1e-7;
        let slope = (intercalation_current(h, &p).unwrap()
            - intercalation_current(-h, &p).unwrap())
            / (2.0 * h);
        let expected = 1.0 / charge_transfer_resistance(&p);
        assert!(((slope - expected) / expected).abs() < 1e-6);
        assert_relative_eq!(
            intercalation_conductance(0.0, &p).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn double_layer_current_values() {
        assert_eq!(double_layer_current(0.0, 2.6e-3), 0.0);
        assert_relative_eq!(double_layer_current(1.0, 2.6e-3), 2.6e-3);
        let (a, b) = (0.37, -1.9);
        assert_relative_eq!(
            double_layer_current(a + b, 2.6e-3),
            double_layer_current(a, 2.6e-3) + double_layer_current(b, 2.6e-3),
            max_relative = 1e-15
        );
    }

    #[test]
    fn ageing_rate_basic_values() {
        let p = ElectrochemParams {
            ageing_prefactor: 2.5e-6,
            ..table()
        };
        assert_eq!(lumped_ageing_rate(0.0, &p).unwrap(), 2.5e-6);
        assert_eq!(ageing_rate_from_current(0.0, &p).unwrap(), 2.5e-6);

        // α·F·|η|/(R·T) = 1
        let eta = -GAS_CONSTANT * p.temperature / (0.5 * FARADAY);
        assert_relative_eq!(eta, -51.386e-3, epsilon = 1e-6);
        assert_relative_eq!(
            lumped_ageing_rate(eta, &p).unwrap(),
            std::f64::consts::E * 2.5e-6,
            max_relative = 1e-14
        );
    }

    #[test]
    fn ageing_from_current_composes_with_rct() {
        let p = table();
        for i in [-3.0, -0.01, 0.2, 4.0] {
            let direct = ageing_rate_from_current(i, &p).unwrap();
            let composed = lumped_ageing_rate(charge_transfer_resistance(&p) * i, &p).unwrap();
            assert_eq!(direct, composed);
        }
    }

    #[test]
    fn ageing_from_current_tracks_exact_inversion_for_small_currents() {
        let p = table();
        // |R_ct·i| < 1 mV
        for i in [-0.015, -0.004, 0.003, 0.0165] {
            let eta = invert_bv_bisection(i, &p);
            let exact = lumped_ageing_rate(eta, &p).unwrap();
            let approx = ageing_rate_from_current(i, &p).unwrap();
            assert!(((approx - exact) / exact).abs() < 1e-3);
        }
    }

    fn invert_bv_bisection(i: f64, p: &ElectrochemParams) -> f64 {
        let (mut lo, mut hi) = (-0.5, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if intercalation_current(mid, p).unwrap() < i {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn side_reactions_with_zero_prefactor_vanish() {
        let s = SideReactionParams {
            ec: SideReaction {
                rate_prefactor: 0.0,
                cathodic_alpha: 0.4,
            },
            dmc: SideReaction {
                rate_prefactor: 0.0,
                cathodic_alpha: 0.5,
            },
            plating: SideReaction {
                rate_prefactor: 0.0,
                cathodic_alpha: 0.6,
            },
        };
        let r = side_reaction_rates(-0.1, &s, &table()).unwrap();
        assert_eq!((r.ec, r.dmc, r.plating, r.total), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn side_reactions_decay_for_large_anodic_overpotential() {
        let s = SideReactionParams::default();
        let near = side_reaction_rates(0.0, &s, &table()).unwrap();
        let far = side_reaction_rates(1.5, &s, &table()).unwrap();
        assert!(far.total.abs() < 1e-12 * near.total.abs());
        assert!(far.ec <= 0.0 && far.dmc <= 0.0 && far.plating <= 0.0);
    }

    #[test]
    fn side_reaction_total_matches_lumped_form() {
        let s = SideReactionParams {
            ec: SideReaction {
                rate_prefactor: 3e-7,
                cathodic_alpha: 0.5,
            },
            dmc: SideReaction {
                rate_prefactor: 1.1e-6,
                cathodic_alpha: 0.5,
            },
            plating: SideReaction {
                rate_prefactor: 4.2e-8,
                cathodic_alpha: 0.5,
            },
        };
        let p = ElectrochemParams {
            ageing_prefactor: s.total_prefactor(),
            ..table()
        };
        for k in 0..=400 {
            let eta = -0.2 + 0.4 * k as f64 / 400.0;
            let total = side_reaction_rates(eta, &s, &p).unwrap().total;
            let lumped = lumped_ageing_rate(eta, &p).unwrap();
            assert!(((-total - lumped) / lumped).abs() <= 1e-12, "eta = {eta}");
        }
    }

    #[test]
    fn overflow_guard_rejects_huge_exponents() {
        let p = table();
        let limit = EXPONENT_GUARD / p.inverse_thermal_voltage();
        assert!(intercalation_current(0.99 * limit, &p).is_ok());
        assert!(matches!(
            intercalation_current(1.01 * limit, &p),
            Err(Error::Domain { .. })
        ));
        assert!(lumped_ageing_rate(-1.01 * limit, &p).is_err());
        assert!(intercalation_current(f64::NAN, &p).is_err());
        assert!(linearized_current(f64::INFINITY, &p).is_err());
        assert!(
            side_reaction_rates(f64::NEG_INFINITY, &SideReactionParams::default(), &p).is_err()
        );
    }

    #[test]
    fn validation_rejects_out_of_range_values() {
        assert!(table().validate().is_ok());
        let bad = [
            ElectrochemParams {
                exchange_current: 0.0,
                ..table()
            },
            ElectrochemParams {
                temperature: -1.0,
                ..table()
            },
            ElectrochemParams {
                charge_transfer_coeff: 1.0,
                ..table()
            },
            ElectrochemParams {
                ageing_alpha: 0.0,
                ..table()
            },
            ElectrochemParams {
                ageing_prefactor: -1e-9,
                ..table()
            },
            ElectrochemParams {
                electrons: 0,
                ..table()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    proptest! {
        #[test]
        fn bv_is_strictly_increasing(alpha in 0.05f64..0.95, a in -0.3f64..0.3, d in 1e-6f64..0.05) {
            let p = ElectrochemParams { charge_transfer_coeff: alpha, ..table() };
            let lo = intercalation_current(a, &p).unwrap();
            let hi = intercalation_current(a + d, &p).unwrap();
            prop_assert!(hi > lo);
            prop_assert_eq!(lo.signum() == a.signum() || lo == 0.0, true);
        }

        #[test]
        fn ageing_rate_is_decreasing_and_convex(e1 in -0.3f64..0.3, e2 in -0.3f64..0.3) {
            prop_assume!((e1 - e2).abs() > 1e-6);
            let p = table();
            let r = |e: f64| lumped_ageing_rate(e, &p).unwrap();
            prop_assert!(r((e1 + e2) / 2.0) < (r(e1) + r(e2)) / 2.0);
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(r(lo) > r(hi));
        }

        #[test]
        fn ageing_ratio_does_not_depend_on_prefactor(eta in -0.3f64..0.3, k in 1e-12f64..1e3) {
            let base = table();
            let scaled = ElectrochemParams { ageing_prefactor: k, ..base };
            let r0 = lumped_ageing_rate(eta, &base).unwrap() / lumped_ageing_rate(0.0, &base).unwrap();
            let r1 = lumped_ageing_rate(eta, &scaled).unwrap() / lumped_ageing_rate(0.0, &scaled).unwrap();
            prop_assert!(((r0 - r1) / r0).abs() < 1e-14);
        }
    }
}

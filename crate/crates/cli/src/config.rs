//! Run configuration: a TOML file with `[cell]`, `[sweep]`, `[sim]` and
//! `[output]` sections. Every key is optional and defaults to the shipped
//! module parameters.

use std::path::Path;

use ripple_ageing::electrochem::{SideReaction, SideReactionParams};
use ripple_ageing::{CellParams, ElectrochemParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Text of the shipped default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cell: CellSection,
    pub sweep: SweepSection,
    pub sim: SimSection,
    pub output: OutputSection,
}

/// Cell parameters by name, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
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
    pub exchange_current: f64,
    pub charge_transfer_coeff: f64,
    pub electrons: u32,
    pub temperature: f64,
    pub ageing_alpha: f64,
    pub ageing_prefactor: f64,
    pub ec_rate_prefactor: f64,
    pub ec_cathodic_alpha: f64,
    pub dmc_rate_prefactor: f64,
    pub dmc_cathodic_alpha: f64,
    pub plating_rate_prefactor: f64,
    pub plating_cathodic_alpha: f64,
}

impl Default for CellSection {
    fn default() -> Self {
        CellParams::default().into()
    }
}

impl From<CellParams> for CellSection {
    fn from(p: CellParams) -> Self {
        let e = p.electrochem;
        let s = p.side_reactions;
        Self {
            v_ocv: p.v_ocv,
            r0: p.r0,
            l0: p.l0,
            r_sei: p.r_sei,
            c_sei: p.c_sei,
            c_dl: p.c_dl,
            rw1: p.rw1,
            cw1: p.cw1,
            rw2: p.rw2,
            cw2: p.cw2,
            exchange_current: e.exchange_current,
            charge_transfer_coeff: e.charge_transfer_coeff,
            electrons: e.electrons,
            temperature: e.temperature,
            ageing_alpha: e.ageing_alpha,
            ageing_prefactor: e.ageing_prefactor,
            ec_rate_prefactor: s.ec.rate_prefactor,
            ec_cathodic_alpha: s.ec.cathodic_alpha,
            dmc_rate_prefactor: s.dmc.rate_prefactor,
            dmc_cathodic_alpha: s.dmc.cathodic_alpha,
            plating_rate_prefactor: s.plating.rate_prefactor,
            plating_cathodic_alpha: s.plating.cathodic_alpha,
        }
    }
}

impl From<CellSection> for CellParams {
    fn from(c: CellSection) -> Self {
        let reaction = |rate_prefactor, cathodic_alpha| SideReaction {
            rate_prefactor,
            cathodic_alpha,
        };
        CellParams {
            v_ocv: c.v_ocv,
            r0: c.r0,
            l0: c.l0,
            r_sei: c.r_sei,
            c_sei: c.c_sei,
            c_dl: c.c_dl,
            rw1: c.rw1,
            cw1: c.cw1,
            rw2: c.rw2,
            cw2: c.cw2,
            electrochem: ElectrochemParams {
                exchange_current: c.exchange_current,
                charge_transfer_coeff: c.charge_transfer_coeff,
                electrons: c.electrons,
                temperature: c.temperature,
                ageing_alpha: c.ageing_alpha,
                ageing_prefactor: c.ageing_prefactor,
            },
            side_reactions: SideReactionParams {
                ec: reaction(c.ec_rate_prefactor, c.ec_cathodic_alpha),
                dmc: reaction(c.dmc_rate_prefactor, c.dmc_cathodic_alpha),
                plating: reaction(c.plating_rate_prefactor, c.plating_cathodic_alpha),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub f_min: f64,
    pub f_max: f64,
    pub points_per_decade: usize,
    pub i_dc: f64,
    pub i_ac: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            f_min: 1.0,
            f_max: 1e5,
            points_per_decade: 40,
            i_dc: 5.0,
            i_ac: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Step upper bound, s; absent means the profile's default step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Length of `simulate` runs, s.
    pub duration: f64,
    /// Periodic-steady-state tolerance on the cycle-mean ageing rate.
    pub tolerance: f64,
    pub max_cycles: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: None,
            duration: 0.02,
            tolerance: 1e-6,
            max_cycles: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Keep every `stride`-th simulated sample.
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            path: None,
            stride: 1,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn cell_params(&self) -> CellParams {
        self.cell.into()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: &str| Err(CliError::Usage(format!("config: [{field}] {why}")));
        self.cell_params()
            .validate()
            .map_err(|e| CliError::Usage(format!("config: [cell] {e}")))?;
        let s = &self.sweep;
        if !(s.f_min > 0.0 && s.f_max > s.f_min && s.f_max.is_finite()) {
            return bad("sweep", "needs 0 < f_min < f_max");
        }
        if s.points_per_decade == 0 {
            return bad("sweep", "points_per_decade must be >= 1");
        }
        if !(s.i_dc.is_finite() && s.i_ac.is_finite() && s.i_ac >= 0.0) {
            return bad("sweep", "i_dc must be finite and i_ac finite and >= 0");
        }
        let m = &self.sim;
        if let Some(dt) = m.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("sim", "dt must be finite and > 0");
            }
        }
        if !(m.duration > 0.0 && m.duration.is_finite()) {
            return bad("sim", "duration must be finite and > 0");
        }
        if !(m.tolerance > 0.0) || m.max_cycles == 0 {
            return bad("sim", "tolerance must be > 0 and max_cycles >= 1");
        }
        if self.output.stride == 0 {
            return bad("output", "stride must be >= 1");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

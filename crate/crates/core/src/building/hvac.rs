//! HVAC plant, PI control, and demand-response setpoint logic.
//!
//! A shed request raises the zone-temperature setpoint through a lookup
//! table; the PI controller lowers the HVAC supply setpoint `T_hvac` when
//! the return temperature runs above the zone setpoint; commanded cooling is
//! proportional to `T_RET - T_hvac`, clamped to the plant capacity; and the
//! delivered cooling tracks the command through a first-order actuation lag
//! so that electric power is a pure function of state.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Shed fraction to setpoint increase (K), linearly interpolated through an
/// implicit (0, 0) anchor and held constant beyond the last entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShedTable(pub Vec<(f64, f64)>);

impl Default for ShedTable {
    fn default() -> Self {
        ShedTable(vec![(0.10, 1.0), (0.20, 2.0), (0.30, 3.5)])
    }
}

impl ShedTable {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut prev = 0.0;
        for &(f, _) in &self.0 {
            if !(f > prev) || f > 1.0 {
                return Err(ConfigError::Invalid(
                    "shed table fractions must be strictly increasing within (0, 1]".into(),
                ));
            }
            prev = f;
        }
        Ok(())
    }

    pub fn delta_k(&self, fraction: f64) -> f64 {
        if self.0.is_empty() || fraction <= 0.0 {
            return 0.0;
        }
        let mut prev = (0.0, 0.0);
        for &(f, d) in &self.0 {
            if fraction <= f {
                return prev.1 + (d - prev.1) * (fraction - prev.0) / (f - prev.0);
            }
            prev = (f, d);
        }
        prev.1
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PidConfig {
    pub kp: f64,
    /// 1/s; integral action on the return-temperature error.
    pub ki: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        PidConfig { kp: 2.0, ki: 1.0 / 600.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HvacParams {
    pub nominal_setpoint_k: f64,
    pub capacity_w: f64,
    /// Plant gain: delivered cooling per kelvin of `T_RET - T_hvac`.
    pub gain_w_per_k: f64,
    /// Actuation lag, seconds.
    pub lag_s: f64,
    pub cop: f64,
    pub power_factor: f64,
    #[serde(default)]
    pub pid: PidConfig,
    #[serde(default)]
    pub shed_table: ShedTable,
    /// `T_hvac` excursion limit around the setpoint (output clamp).
    #[serde(default = "default_hvac_span")]
    pub hvac_span_k: f64,
}

fn default_hvac_span() -> f64 {
    20.0
}

impl HvacParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("capacity_w", self.capacity_w),
            ("gain_w_per_k", self.gain_w_per_k),
            ("lag_s", self.lag_s),
            ("cop", self.cop),
            ("nominal_setpoint_k", self.nominal_setpoint_k),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!("hvac {name} must be > 0")));
            }
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(ConfigError::Invalid("power factor must be in (0, 1]".into()));
        }
        self.shed_table.validate()
    }

    pub fn setpoint_k(&self, shed_fraction: f64) -> f64 {
        self.nominal_setpoint_k + self.shed_table.delta_k(shed_fraction)
    }

    /// PI output and commanded cooling at a given return temperature,
    /// setpoint, and integral state.
    pub fn control(&self, t_ret: f64, t_set: f64, integral: f64) -> ControlPoint {
        let e = t_ret - t_set;
        let raw = t_set - (self.pid.kp * e + self.pid.ki * integral);
        let t_hvac = raw.clamp(t_set - self.hvac_span_k, t_set + self.hvac_span_k);
        let cool_cmd = (self.gain_w_per_k * (t_ret - t_hvac)).clamp(0.0, self.capacity_w);
        ControlPoint { error_k: e, t_hvac_k: t_hvac, cool_cmd_w: cool_cmd }
    }

    /// Anti-windup: the error integrates only while it can still move the
    /// command.
    pub fn integral_rate(&self, point: &ControlPoint) -> f64 {
        let saturated_high = point.cool_cmd_w >= self.capacity_w && point.error_k > 0.0;
        let saturated_low = point.cool_cmd_w <= 0.0 && point.error_k < 0.0;
        if saturated_high || saturated_low {
            0.0
        } else {
            point.error_k
        }
    }

    /// Electric power (kW) for a delivered cooling power (W) on top of the
    /// base electric load (kW).
    pub fn electric_kw(&self, base_kw: f64, cool_w: f64) -> f64 {
        base_kw + cool_w / self.cop / 1000.0
    }

    pub fn reactive_kvar(&self, p_kw: f64) -> f64 {
        p_kw * self.power_factor.acos().tan()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ControlPoint {
    pub error_k: f64,
    pub t_hvac_k: f64,
    pub cool_cmd_w: f64,
}

/// Snapshot of the HVAC subsystem, exposed for traces and tests.
#[derive(Clone, Copy, Debug)]
pub struct HvacState {
    pub shed_fraction: f64,
    pub t_set_k: f64,
    pub t_hvac_k: f64,
    pub cool_cmd_w: f64,
    pub cool_w: f64,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> HvacParams {
        HvacParams {
            nominal_setpoint_k: 293.0,
            capacity_w: 4.0e5,
            gain_w_per_k: 1.0e5,
            lag_s: 30.0,
            cop: 3.0,
            power_factor: 0.96,
            pid: PidConfig::default(),
            shed_table: ShedTable::default(),
            hvac_span_k: 20.0,
        }
    }

    #[test]
    fn shed_table_defaults() {
        let p = params();
        assert_eq!(p.setpoint_k(0.0), 293.0);
        assert_eq!(p.setpoint_k(0.20), 295.0);
        assert!((p.setpoint_k(0.15) - 294.5).abs() < 1e-12);
        // Held constant beyond the last entry.
        assert_eq!(p.setpoint_k(0.9), 296.5);
    }

    #[test]
    fn cold_building_commands_no_cooling() {
        let p = params();
        let pt = p.control(291.0, 295.0, 0.0);
        assert_eq!(pt.cool_cmd_w, 0.0);
        assert!(p.integral_rate(&pt) == 0.0, "windup while pinned at zero");
    }

    #[test]
    fn warm_building_commands_cooling() {
        let p = params();
        let pt = p.control(294.0, 293.0, 0.0);
        assert!(pt.cool_cmd_w > 0.0);
        assert!(pt.t_hvac_k < 294.0);
    }

    #[test]
    fn electric_conversion() {
        let p = params();
        assert!((p.electric_kw(80.0, 300_000.0) - 180.0).abs() < 1e-12);
        let q = p.reactive_kvar(180.0);
        assert!((q - 180.0 * 0.96_f64.acos().tan()).abs() < 1e-12);
    }

    proptest! {
        /// Raising the setpoint never increases the commanded cooling at a
        /// fixed state.
        #[test]
        fn setpoint_monotonicity(
            t_ret in 285.0_f64..305.0,
            integral in -2000.0_f64..2000.0,
            t_set in 290.0_f64..299.0,
            bump in 0.0_f64..5.0,
        ) {
            let p = params();
            let lo = p.control(t_ret, t_set, integral).cool_cmd_w;
            let hi = p.control(t_ret, t_set + bump, integral).cool_cmd_w;
            prop_assert!(hi <= lo + 1e-9);
        }
    }
}

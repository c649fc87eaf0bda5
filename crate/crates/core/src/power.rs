//! Duty-cycle energy model: sensor power floor, inference occupancy, mean
//! system power and battery-life estimation.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power terms and timing of one deployment configuration.
///
/// Defaults: the thermal sensor draws 14.9 mW and the depth sensor 32.3 mW
/// at the 5 Hz paired frame rate; the battery is a nominal 200 mAh cell,
/// 740 mWh at a 3.7 V nominal voltage. Idle MCU power defaults to 0 (deep
/// sleep between frames) and is configurable for sensitivity analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub p_sensor_ir_mw: f64,
    pub p_sensor_tof_mw: f64,
    pub p_mcu_active_mw: f64,
    pub p_mcu_idle_mw: f64,
    pub frame_rate_hz: f64,
    pub inference_latency_ms: f64,
    pub battery_energy_mwh: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            p_sensor_ir_mw: 14.9,
            p_sensor_tof_mw: 32.3,
            p_mcu_active_mw: 0.0,
            p_mcu_idle_mw: 0.0,
            frame_rate_hz: 5.0,
            inference_latency_ms: 0.0,
            battery_energy_mwh: 740.0,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_sensor_ir_mw", self.p_sensor_ir_mw),
            ("p_sensor_tof_mw", self.p_sensor_tof_mw),
            ("p_mcu_active_mw", self.p_mcu_active_mw),
            ("p_mcu_idle_mw", self.p_mcu_idle_mw),
            ("inference_latency_ms", self.inference_latency_ms),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.frame_rate_hz > 0.0) || !(self.battery_energy_mwh > 0.0) {
            return Err(Error::InvalidConfig("frame rate and battery energy must be positive".into()));
        }
        let period_ms = 1000.0 / self.frame_rate_hz;
        if self.inference_latency_ms >= period_ms {
            return Err(Error::InvalidConfig(format!(
                "inference latency {} ms does not fit the {:.1} ms frame period",
                self.inference_latency_ms, period_ms
            )));
        }
        Ok(())
    }

    /// Sensor power floor, drawn regardless of compute activity.
    pub fn sensor_floor_mw(&self) -> f64 {
        self.p_sensor_ir_mw + self.p_sensor_tof_mw
    }
}

/// Derived steady-state estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    /// Fraction of the frame period the MCU spends in inference.
    pub duty_cycle: f64,
    pub mean_power_mw: f64,
    pub battery_life_h: f64,
}

/// Steady-state estimate:
/// duty = latency x frame rate,
/// mean = sensors + duty x active + (1 - duty) x idle,
/// life = battery energy / mean.
pub fn estimate(config: &PowerConfig) -> Result<PowerEstimate> {
    config.validate()?;
    let duty = config.inference_latency_ms / 1000.0 * config.frame_rate_hz;
    let mean = config.sensor_floor_mw()
        + duty * config.p_mcu_active_mw
        + (1.0 - duty) * config.p_mcu_idle_mw;
    Ok(PowerEstimate {
        duty_cycle: duty,
        mean_power_mw: mean,
        battery_life_h: config.battery_energy_mwh / mean,
    })
}

/// One row of an externally measured latency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyEntry {
    pub strategy: String,
    pub platform: String,
    pub latency_ms: f64,
    pub p_active_mw: f64,
}

/// A latency entry with its derived estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEstimate {
    #[serde(flatten)]
    pub entry: LatencyEntry,
    #[serde(flatten)]
    pub estimate: PowerEstimate,
}

/// Estimates every row of a latency table against a shared sensor/battery
/// configuration, sorted by platform then ascending mean power.
pub fn compare_strategies(
    entries: &[LatencyEntry],
    base: &PowerConfig,
) -> Result<Vec<StrategyEstimate>> {
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        let config = PowerConfig {
            inference_latency_ms: entry.latency_ms,
            p_mcu_active_mw: entry.p_active_mw,
            ..base.clone()
        };
        out.push(StrategyEstimate { entry: entry.clone(), estimate: estimate(&config)? });
    }
    out.sort_by(|a, b| {
        (a.entry.platform.as_str(), a.estimate.mean_power_mw)
            .partial_cmp(&(b.entry.platform.as_str(), b.estimate.mean_power_mw))
            .unwrap()
    });
    Ok(out)
}

/// Reads a latency table CSV with the header
/// `strategy,platform,latency_ms,p_active_mw`.
pub fn read_latency_csv(reader: impl Read) -> Result<Vec<LatencyEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut entries = Vec::new();
    for row in rdr.deserialize() {
        let entry: LatencyEntry =
            row.map_err(|e| Error::InvalidConfig(format!("latency csv: {e}")))?;
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput("latency table"));
    }
    Ok(entries)
}

pub fn read_latency_csv_file(path: &Path) -> Result<Vec<LatencyEntry>> {
    read_latency_csv(std::fs::File::open(path)?)
}

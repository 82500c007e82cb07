//! Energy cost of signing on a battery-powered device, and the share of a
//! sensing node's energy budget that signing takes.
//!
//! Energy is `E = V·I·t`. A sensing scenario is one sample interval `T`
//! during which the node signs once, reads the sensor once, keeps the
//! sensor powered, and otherwise idles in power-save mode.

use std::fmt::Write as _;
use std::str::FromStr;

use num_traits::Float;

use crate::error::{Error, Result};

fn lit<T: Float>(v: f64) -> T {
    T::from(v).expect("literal representable in T")
}

fn require_positive<T: Float>(what: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Params(format!("{what} must be positive")))
    }
}

/// Electrical characteristics of the signing device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceProfile<T> {
    /// Volts while computing.
    pub active_voltage: T,
    /// Amperes while computing.
    pub active_current: T,
    /// Volts in power-save mode.
    pub idle_voltage: T,
    /// Amperes in power-save mode.
    pub idle_current: T,
    /// Seconds to read one sample from the sensor.
    pub read_time: T,
}

impl<T: Float> DeviceProfile<T> {
    pub fn new(active_voltage: T, active_current: T, idle_voltage: T, idle_current: T, read_time: T) -> Result<Self> {
        let p = DeviceProfile {
            active_voltage,
            active_current,
            idle_voltage,
            idle_current,
            read_time,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("active_voltage", self.active_voltage)?;
        require_positive("active_current", self.active_current)?;
        require_positive("idle_voltage", self.idle_voltage)?;
        require_positive("idle_current", self.idle_current)?;
        require_positive("read_time", self.read_time)
    }

    /// 8-bit microcontroller board: 5 V, 20 mA active, 10 µA power-save,
    /// 1 ms sensor read.
    pub fn avr() -> Self {
        DeviceProfile {
            active_voltage: lit(5.0),
            active_current: lit(0.020),
            idle_voltage: lit(5.0),
            idle_current: lit(10e-6),
            read_time: lit(0.001),
        }
    }

    pub fn active_power(&self) -> T {
        self.active_voltage * self.active_current
    }
}

/// An attached sensor, powered for the whole sample interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorProfile<T> {
    pub name: String,
    pub voltage: T,
    pub current: T,
    /// Seconds between samples.
    pub sample_interval: T,
}

impl<T: Float> SensorProfile<T> {
    pub fn new(name: impl Into<String>, voltage: T, current: T, sample_interval: T) -> Result<Self> {
        let s = SensorProfile {
            name: name.into(),
            voltage,
            current,
            sample_interval,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("voltage", self.voltage)?;
        require_positive("current", self.current)?;
        require_positive("sample_interval", self.sample_interval)
    }

    /// Pulse sensor: 3 V, 4.5 mA, sampled every 10 s.
    pub fn pulse() -> Self {
        SensorProfile {
            name: "pulse".into(),
            voltage: lit(3.0),
            current: lit(4.5e-3),
            sample_interval: lit(10.0),
        }
    }

    /// Blood-pressure sensor: 2.5 V, 5 µA, sampled every 10 minutes.
    pub fn pressure() -> Self {
        SensorProfile {
            name: "pressure".into(),
            voltage: lit(2.5),
            current: lit(5e-6),
            sample_interval: lit(600.0),
        }
    }

    pub fn power(&self) -> T {
        self.voltage * self.current
    }
}

/// Clock of the reference microcontroller.
pub const REFERENCE_CLOCK_HZ: f64 = 16e6;

/// Signing cycle counts on the reference microcontroller.
pub const REFERENCE_CYCLES: [(&str, u64); 5] = [
    ("ECDSA", 79_185_664),
    ("BPV-ECDSA", 23_519_232),
    ("Ed25519", 34_342_230),
    ("SchnorrQ", 5_174_800),
    ("ESEM", 616_896),
];

/// Seconds one signature takes on the device.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeCost<T> {
    pub name: String,
    pub sign_time: T,
}

impl<T: Float> SchemeCost<T> {
    pub fn new(name: impl Into<String>, sign_time: T) -> Result<Self> {
        require_positive("sign_time", sign_time)?;
        Ok(SchemeCost {
            name: name.into(),
            sign_time,
        })
    }

    /// Reference signing costs on an 8-bit microcontroller, as cycle
    /// counts at [`REFERENCE_CLOCK_HZ`].
    pub fn reference_table() -> Vec<Self> {
        REFERENCE_CYCLES
            .iter()
            .map(|&(name, cycles)| SchemeCost {
                name: name.into(),
                sign_time: lit(cycles as f64 / REFERENCE_CLOCK_HZ),
            })
            .collect()
    }
}

/// How power-save time is charged within a sample interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IdleAccounting {
    /// Idle current over the whole interval `T`.
    #[default]
    FullInterval,
    /// Idle current over `T − sign_time − read_time`.
    ExcludeActive,
}

/// `V·I·t` at the device's active voltage and current.
pub fn sign_energy<T: Float>(device: &DeviceProfile<T>, t: T) -> Result<T> {
    if t.is_nan() || t < T::zero() {
        return Err(Error::Params("sign time must be non-negative".into()));
    }
    Ok(device.active_power() * t)
}

/// Per-interval energy terms in joules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioBreakdown<T> {
    pub sign: T,
    pub sensor: T,
    pub read: T,
    pub idle: T,
}

impl<T: Float> ScenarioBreakdown<T> {
    pub fn total(&self) -> T {
        self.sign + self.sensor + self.read + self.idle
    }

    /// Share of the interval's energy spent signing, in `[0, 1]`.
    pub fn fraction(&self) -> T {
        self.sign / self.total()
    }
}

pub fn scenario_breakdown<T: Float>(
    device: &DeviceProfile<T>,
    sensor: &SensorProfile<T>,
    scheme: &SchemeCost<T>,
    idle: IdleAccounting,
) -> ScenarioBreakdown<T> {
    let interval = sensor.sample_interval;
    let idle_time = match idle {
        IdleAccounting::FullInterval => interval,
        IdleAccounting::ExcludeActive => (interval - scheme.sign_time - device.read_time).max(T::zero()),
    };
    ScenarioBreakdown {
        sign: device.active_power() * scheme.sign_time.max(T::zero()),
        sensor: sensor.power() * interval,
        read: device.active_power() * device.read_time,
        idle: device.idle_voltage * device.idle_current * idle_time,
    }
}

/// [`ScenarioBreakdown::fraction`] with full-interval idle accounting.
pub fn scenario_fraction<T: Float>(device: &DeviceProfile<T>, sensor: &SensorProfile<T>, scheme: &SchemeCost<T>) -> T {
    scenario_breakdown(device, sensor, scheme, IdleAccounting::FullInterval).fraction()
}

/// One line of a report, in millijoules and percent.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub scheme: String,
    pub scenario: String,
    pub sign_mj: f64,
    pub sensor_mj: f64,
    pub read_mj: f64,
    pub idle_mj: f64,
    pub fraction_pct: f64,
}

impl ReportRow {
    pub fn new<T: Float>(scheme: &str, scenario: &str, b: &ScenarioBreakdown<T>) -> Self {
        let mj = |v: T| v.to_f64().unwrap_or(f64::NAN) * 1000.0;
        ReportRow {
            scheme: scheme.into(),
            scenario: scenario.into(),
            sign_mj: mj(b.sign),
            sensor_mj: mj(b.sensor),
            read_mj: mj(b.read),
            idle_mj: mj(b.idle),
            fraction_pct: b.fraction().to_f64().unwrap_or(f64::NAN) * 100.0,
        }
    }
}

/// Rows for every scheme × sensor pair.
pub fn build_report<T: Float>(
    device: &DeviceProfile<T>,
    sensors: &[SensorProfile<T>],
    schemes: &[SchemeCost<T>],
    idle: IdleAccounting,
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for sensor in sensors {
        for scheme in schemes {
            let b = scenario_breakdown(device, sensor, scheme, idle);
            rows.push(ReportRow::new(&scheme.name, &sensor.name, &b));
        }
    }
    rows
}

pub const REPORT_HEADER: &str = "scheme,scenario,sign_mJ,sensor_mJ,read_mJ,idle_mJ,fraction_pct";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Params(format!("unknown format {other:?}"))),
        }
    }
}

pub fn emit_report(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut out = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::Format(e.to_string());
            out.write_record(REPORT_HEADER.split(',')).map_err(csv_err)?;
            for r in rows {
                out.write_record([
                    r.scheme.clone(),
                    r.scenario.clone(),
                    format!("{:.4}", r.sign_mj),
                    format!("{:.4}", r.sensor_mj),
                    format!("{:.4}", r.read_mj),
                    format!("{:.4}", r.idle_mj),
                    format!("{:.3}", r.fraction_pct),
                ])
                .map_err(csv_err)?;
            }
            let bytes = out.into_inner().map_err(|e| Error::Format(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Text => {
            let mut out = format!(
                "{:<12} {:<10} {:>10} {:>10} {:>8} {:>8} {:>9}\n",
                "scheme", "scenario", "sign mJ", "sensor mJ", "read mJ", "idle mJ", "signing %"
            );
            for r in rows {
                writeln!(
                    out,
                    "{:<12} {:<10} {:>10.2} {:>10.2} {:>8.2} {:>8.2} {:>9.2}",
                    r.scheme, r.scenario, r.sign_mj, r.sensor_mj, r.read_mj, r.idle_mj, r.fraction_pct
                )
                .expect("writing to a String");
            }
            Ok(out)
        }
    }
}

/// A sensor plus optional device overrides, read from a `key = value`
/// file. Blank lines and `#` comments are ignored.
///
/// Keys: `name`, `sensor_voltage`, `sensor_current`, `sample_interval`,
/// and optionally `active_voltage`, `active_current`, `idle_voltage`,
/// `idle_current`, `read_time` (defaults from [`DeviceProfile::avr`]).
/// Values are SI units (volts, amperes, seconds).
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioProfile<T> {
    pub device: DeviceProfile<T>,
    pub sensor: SensorProfile<T>,
}

pub fn parse_profile<T: Float + FromStr>(text: &str) -> Result<ScenarioProfile<T>> {
    let mut device = DeviceProfile::<T>::avr();
    let mut name = String::from("custom");
    let (mut voltage, mut current, mut interval) = (None, None, None);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "name" {
            name = value.to_string();
            continue;
        }
        let num: T = value
            .parse()
            .map_err(|_| Error::Format(format!("line {}: {value:?} is not a number", lineno + 1)))?;
        match key {
            "sensor_voltage" => voltage = Some(num),
            "sensor_current" => current = Some(num),
            "sample_interval" => interval = Some(num),
            "active_voltage" => device.active_voltage = num,
            "active_current" => device.active_current = num,
            "idle_voltage" => device.idle_voltage = num,
            "idle_current" => device.idle_current = num,
            "read_time" => device.read_time = num,
            other => return Err(Error::Format(format!("line {}: unknown key {other:?}", lineno + 1))),
        }
    }
    let missing = |k: &str| Error::Format(format!("missing {k}"));
    device.validate()?;
    let sensor = SensorProfile::new(
        name,
        voltage.ok_or_else(|| missing("sensor_voltage"))?,
        current.ok_or_else(|| missing("sensor_current"))?,
        interval.ok_or_else(|| missing("sample_interval"))?,
    )?;
    Ok(ScenarioProfile { device, sensor })
}

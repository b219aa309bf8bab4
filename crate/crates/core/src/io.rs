//! Run configuration and CSV outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerConfig;
use crate::error::{Error, Result};
use crate::grid::GridResolution;
use crate::lifecycle::{ComparisonReport, ObjectiveWeights, ProtocolConfig, ProtocolRun, TracePoint};
use crate::numerics::StepConfig;
use crate::rl::env::RewardConfig;
use crate::rl::td3::Td3Config;
use crate::rl::train::TrainConfig;

/// Name of the built-in configuration profile.
pub const PAPER_DEFAULTS: &str = "paper_defaults";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Multiplier on the SEI and plating rates.
    pub accel: f64,
    /// Parameter file; the bundled LG M50 set when absent.
    pub parameters: Option<PathBuf>,
    pub step: StepConfig,
    pub grid: GridResolution,
    pub protocol: ProtocolConfig,
    /// CC-CV and CC-CV-V setpoints.
    pub controller: ControllerConfig,
    pub cop_slow: ControllerConfig,
    pub cop_fast: ControllerConfig,
    pub objective: ObjectiveWeights,
    pub td3: Td3Config,
    pub reward: RewardConfig,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("runs"),
            accel: 100.0,
            parameters: None,
            step: StepConfig::default(),
            grid: GridResolution::default(),
            protocol: ProtocolConfig::default(),
            controller: ControllerConfig::default(),
            cop_slow: ControllerConfig::cop_slow(),
            cop_fast: ControllerConfig::cop_fast(),
            objective: ObjectiveWeights::default(),
            td3: Td3Config::default(),
            reward: RewardConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn paper_defaults() -> Self {
        Self::default()
    }

    /// `paper_defaults` or a path to a TOML file. Missing keys take their
    /// defaults and unknown keys are rejected.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if name_or_path == PAPER_DEFAULTS {
            return Ok(Self::paper_defaults());
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("toml", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.accel > 0.0 && self.accel.is_finite()) {
            return Err(Error::config("accel", format!("must be positive, got {}", self.accel)));
        }
        self.step.validate()?;
        self.protocol.validate()?;
        for (key, c) in [
            ("controller", &self.controller),
            ("cop_slow", &self.cop_slow),
            ("cop_fast", &self.cop_fast),
        ] {
            c.validate().map_err(|e| match e {
                Error::Config { key: inner, reason } => Error::config(format!("{key}.{inner}"), reason),
                other => other,
            })?;
        }
        self.td3.validate()?;
        self.reward.validate()?;
        self.training.validate()?;
        Ok(())
    }

    /// Every setting, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serialises")
    }

    /// Writes the resolved configuration into `dir` and returns its path.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub const TRACE_HEADER: &str = "t_s,I_A,V_V,SoC,SoH,eta_side_V,L_sei_m,c_dli";

pub fn trace_csv(trace: &[TracePoint]) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut s = String::with_capacity(80 * (trace.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for p in trace {
        let _ = writeln!(
            s,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6e}",
            p.t, p.current, p.voltage, p.soc, p.soh, p.eta_side, p.l_sei, p.c_dli
        );
    }
    Ok(s)
}

pub fn write_trace(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let text = trace_csv(trace)?;
    write_file(path, &text)
}

pub fn parse_trace(text: &str) -> Result<Vec<TracePoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::config("trace", "missing or unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, line)| {
            let v = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::config("trace", format!("row {}: {e}", k + 1)))?;
            if v.len() != 8 {
                return Err(Error::config("trace", format!("row {} has {} columns", k + 1, v.len())));
            }
            Ok(TracePoint {
                t: v[0],
                current: v[1],
                voltage: v[2],
                soc: v[3],
                soh: v[4],
                eta_side: v[5],
                l_sei: v[6],
                c_dli: v[7],
            })
        })
        .collect()
}

pub fn read_trace(path: &Path) -> Result<Vec<TracePoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text)
}

pub const SUMMARY_HEADER: &str =
    "strategy,max_efc,average_charge_minutes,cycles,plating_loss_Ah,plating_loss_vs_reference,failed";

pub fn report_csv(report: &ComparisonReport) -> Result<String> {
    let rows = report.summary();
    if rows.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let rel = r.plating_loss_vs_reference.map(|x| format!("{x:.6}")).unwrap_or_default();
        let failed = r.failed.unwrap_or_default().replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{},{:.6e},{},{}",
            r.strategy, r.max_efc, r.average_charge_minutes, r.cycles, r.plating_loss_ah, rel, failed
        );
    }
    Ok(s)
}

pub const CYCLES_HEADER: &str = "strategy,cycle,charge_minutes,efc,soh,loss_plating_Ah,loss_sei_Ah,max_V,min_eta_side_V";

/// Per-cycle metrics of several runs in long format.
pub fn cycles_csv(runs: &[&ProtocolRun]) -> Result<String> {
    if runs.iter().all(|r| r.cycles.is_empty()) {
        return Err(Error::EmptySeries);
    }
    let mut s = String::from(CYCLES_HEADER);
    s.push('\n');
    for run in runs {
        for c in &run.cycles {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.6},{:.6e},{:.6e},{:.6},{:.6}",
                run.strategy,
                c.cycle,
                c.charge_minutes,
                c.efc_cumulative,
                c.soh_after,
                c.capacity_loss_plating_ah,
                c.capacity_loss_sei_ah,
                c.max_voltage,
                c.min_eta_side
            );
        }
    }
    Ok(s)
}

/// Writes the summary, per-cycle metrics and snapshot traces of a
/// comparison into `dir`.
pub fn write_report(dir: &Path, report: &ComparisonReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    write_file(&summary, &report_csv(report)?)?;
    written.push(summary);
    let runs: Vec<&ProtocolRun> = report.outcomes.iter().filter_map(|o| o.run.as_ref().ok()).collect();
    if let Ok(text) = cycles_csv(&runs) {
        let path = dir.join("cycles.csv");
        write_file(&path, &text)?;
        written.push(path);
    }
    for run in runs {
        for (cycle, trace) in &run.snapshots {
            if trace.is_empty() {
                continue;
            }
            let path = dir.join(format!("trace_{}_cycle{cycle}.csv", file_stem(&run.strategy)));
            write_trace(&path, trace)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Lower-case file-name-safe form of a strategy name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::paper_defaults();
        let text = cfg.to_toml();
        assert!(text.contains("accel = 100.0"));
        assert!(text.contains("tau = 0.005"));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn tau_out_of_range_names_tau() {
        let err = RunConfig::from_toml("[td3]\ntau = 1.5\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "tau"), "{err}");
        assert!(err.to_string().contains("tau"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("[td3]\ntua = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("tua"), "{err}");
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("accel = 10.0\n[training]\nepisodes = 5\n").unwrap();
        assert_eq!(cfg.accel, 10.0);
        assert_eq!(cfg.training.episodes, 5);
        assert_eq!(cfg.td3, Td3Config::default());
    }

    #[test]
    fn empty_trace_rejected() {
        assert!(matches!(trace_csv(&[]), Err(Error::EmptySeries)));
    }
}

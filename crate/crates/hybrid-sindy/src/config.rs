//! TOML experiment configuration.
//!
//! One file describes a whole experiment: the system and its parameters, the
//! initial-condition lists, identification settings, and (optionally) the
//! noise-sweep grid. See `configs/` in the repository root for annotated
//! examples covering both benchmark systems.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::SweepConfig;
use crate::dynamics::{SirCalendar, SirParams, SirSession};
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, SystemConfig};
use crate::stlsq::log_lambda_grid;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    /// "hopper" or "sir".
    pub system: String,
    pub hopper: Option<HopperSection>,
    pub sir: Option<SirSection>,
    pub data: DataSection,
    pub identify: Option<IdentifySection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopperSection {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_hopper_dt")]
    pub dt: f64,
    #[serde(default = "default_hopper_t_end")]
    pub t_end: f64,
}

fn default_kappa() -> f64 {
    10.0
}
fn default_hopper_dt() -> f64 {
    0.033
}
fn default_hopper_t_end() -> f64 {
    5.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirSection {
    pub years: u32,
    #[serde(default = "default_base_transmission")]
    pub base_transmission: f64,
    #[serde(default = "default_modulation")]
    pub modulation: f64,
    #[serde(default = "default_population")]
    pub population: f64,
    #[serde(default = "default_recovery_rate")]
    pub recovery_rate: f64,
    #[serde(default = "default_turnover")]
    pub entry_rate: f64,
    #[serde(default = "default_turnover")]
    pub exit_rate: f64,
    /// Defaults to the benchmark school calendar when omitted.
    pub sessions: Option<Vec<SessionRow>>,
}

fn default_base_transmission() -> f64 {
    9.336
}
fn default_modulation() -> f64 {
    0.8
}
fn default_population() -> f64 {
    1000.0
}
fn default_recovery_rate() -> f64 {
    0.2
}
fn default_turnover() -> f64 {
    1.0 / 365.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRow {
    pub start_day: f64,
    pub end_day: f64,
    pub in_session: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub training_ics: Vec<Vec<f64>>,
    pub validation_ics: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise_std: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifySection {
    pub cluster_size: usize,
    pub max_order: usize,
    #[serde(default = "default_segment_length")]
    pub segment_length: usize,
    /// Defaults to the state columns (phase space).
    pub coordinate_columns: Option<Vec<usize>>,
    /// Defaults to every simulated state variable.
    pub state_columns: Option<Vec<usize>>,
    #[serde(default = "default_aicc_threshold")]
    pub aicc_threshold: f64,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
    #[serde(default = "default_max_stlsq_iters")]
    pub max_stlsq_iters: usize,
}

fn default_segment_length() -> usize {
    10
}
fn default_aicc_threshold() -> f64 {
    3.0
}
fn default_lambda_min() -> f64 {
    1e-4
}
fn default_lambda_max() -> f64 {
    10.0
}
fn default_lambda_count() -> usize {
    30
}
fn default_max_stlsq_iters() -> usize {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_ic_count")]
    pub training_ic_count: usize,
    #[serde(default = "default_cluster_sizes")]
    pub cluster_sizes: Vec<usize>,
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_position_range")]
    pub position_range: (f64, f64),
    #[serde(default = "default_velocity_range")]
    pub velocity_range: (f64, f64),
    #[serde(default = "default_guard_margin")]
    pub guard_margin: f64,
}

fn default_ic_count() -> usize {
    100
}
fn default_cluster_sizes() -> Vec<usize> {
    vec![10, 30, 100, 300, 1000]
}
fn default_noise_levels() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
}
fn default_realizations() -> usize {
    5
}
fn default_position_range() -> (f64, f64) {
    (1.0, 1.5)
}
fn default_velocity_range() -> (f64, f64) {
    (0.0, 0.5)
}
fn default_guard_margin() -> f64 {
    0.02
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {}", path.display(), e))
        })?;
        Self::parse(&text)
    }

    fn system_config(&self) -> Result<SystemConfig> {
        match self.system.as_str() {
            "hopper" => {
                let h = self.hopper.clone().ok_or_else(|| {
                    Error::config("system = \"hopper\" requires a [hopper] section")
                })?;
                Ok(SystemConfig::Hopper { kappa: h.kappa, dt: h.dt, t_end: h.t_end })
            }
            "sir" => {
                let s = self.sir.clone().ok_or_else(|| {
                    Error::config("system = \"sir\" requires a [sir] section")
                })?;
                let calendar = match &s.sessions {
                    None => SirCalendar::school_year(),
                    Some(rows) => SirCalendar {
                        sessions: rows
                            .iter()
                            .map(|r| SirSession {
                                start_day: r.start_day,
                                end_day: r.end_day,
                                in_session: r.in_session,
                            })
                            .collect(),
                    },
                };
                calendar.validate()?;
                Ok(SystemConfig::Sir {
                    params: SirParams {
                        entry_rate: s.entry_rate,
                        exit_rate: s.exit_rate,
                        population: s.population,
                        recovery_rate: s.recovery_rate,
                        base_transmission: s.base_transmission,
                        modulation: s.modulation,
                    },
                    calendar,
                    years: s.years,
                })
            }
            other => Err(Error::config(format!(
                "unknown system \"{}\" (expected \"hopper\" or \"sir\")",
                other
            ))),
        }
    }

    /// Resolve into the pipeline configuration, applying defaults and an
    /// optional seed override.
    pub fn pipeline_config(&self, seed_override: Option<u64>) -> Result<PipelineConfig> {
        let system = self.system_config()?;
        let identify = self.identify.clone().ok_or_else(|| {
            Error::config("this command requires an [identify] section")
        })?;
        let state_columns = identify
            .state_columns
            .clone()
            .unwrap_or_else(|| (0..system.state_dim()).collect());
        let coordinate_columns = identify
            .coordinate_columns
            .clone()
            .unwrap_or_else(|| (0..state_columns.len()).collect());
        let config = PipelineConfig {
            system,
            training_ics: self.data.training_ics.clone(),
            validation_ics: self.data.validation_ics.clone(),
            state_columns,
            coordinate_columns,
            cluster_size: identify.cluster_size,
            segment_length: identify.segment_length,
            max_order: identify.max_order,
            lambdas: log_lambda_grid(
                identify.lambda_min,
                identify.lambda_max,
                identify.lambda_count,
            ),
            aicc_threshold: identify.aicc_threshold,
            noise_std: self.data.noise_std,
            seed: seed_override.unwrap_or(self.seed),
            max_stlsq_iters: identify.max_stlsq_iters,
        };
        config.validate()?;
        Ok(config)
    }

    /// Resolve into the sweep configuration (hopper parameters are shared
    /// with the [hopper] section when present).
    pub fn sweep_config(&self, seed_override: Option<u64>) -> Result<(SweepConfig, u64)> {
        let sweep = self
            .sweep
            .clone()
            .ok_or_else(|| Error::config("the sweep command requires a [sweep] section"))?;
        let hopper = self.hopper.clone().unwrap_or(HopperSection {
            kappa: default_kappa(),
            dt: default_hopper_dt(),
            t_end: default_hopper_t_end(),
        });
        let identify_defaults = (
            default_lambda_min(),
            default_lambda_max(),
            default_lambda_count(),
            default_max_stlsq_iters(),
        );
        let (lambda_min, lambda_max, lambda_count, max_iters) = match &self.identify {
            Some(id) => (id.lambda_min, id.lambda_max, id.lambda_count, id.max_stlsq_iters),
            None => identify_defaults,
        };
        let config = SweepConfig {
            kappa: hopper.kappa,
            dt: hopper.dt,
            t_end: hopper.t_end,
            training_ic_count: sweep.training_ic_count,
            position_range: sweep.position_range,
            velocity_range: sweep.velocity_range,
            cluster_sizes: sweep.cluster_sizes,
            noise_levels: sweep.noise_levels,
            realizations: sweep.realizations,
            lambdas: log_lambda_grid(lambda_min, lambda_max, lambda_count),
            max_order: 2,
            guard_margin: sweep.guard_margin,
            max_stlsq_iters: max_iters,
        };
        Ok((config, seed_override.unwrap_or(self.seed)))
    }
}

/// Content hash of a resolved configuration: SHA-256 over its canonical JSON
/// serialization, so formatting and comment changes in the TOML do not change
/// the hash but any semantic change does.
pub fn config_hash<T: serde::Serialize>(resolved: &T, seed: u64) -> String {
    let json = serde_json::to_string(&(resolved, seed)).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{:02x}", b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOPPER_TOML: &str = r#"
seed = 7
system = "hopper"

[hopper]
kappa = 10.0
dt = 0.033
t_end = 5.0

[data]
training_ics = [[0.8, -0.1], [0.78, -0.1], [0.82, -0.1]]
validation_ics = [[0.84, -0.11]]
noise_std = 1e-6

[identify]
cluster_size = 30
max_order = 2
"#;

    #[test]
    fn hopper_config_resolves_with_defaults() {
        let file = ConfigFile::parse(HOPPER_TOML).unwrap();
        let config = file.pipeline_config(None).unwrap();
        assert_eq!(config.cluster_size, 30);
        assert_eq!(config.segment_length, 10);
        assert_eq!(config.lambdas.len(), 30);
        assert_eq!(config.state_columns, vec![0, 1]);
        assert_eq!(config.coordinate_columns, vec![0, 1]);
        assert_eq!(config.seed, 7);
        let overridden = file.pipeline_config(Some(99)).unwrap();
        assert_eq!(overridden.seed, 99);
    }

    #[test]
    fn missing_cluster_size_names_the_field() {
        let broken = HOPPER_TOML.replace("cluster_size = 30", "");
        let err = ConfigFile::parse(&broken)
            .and_then(|f| f.pipeline_config(None))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cluster_size"), "diagnostic was: {}", msg);
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_field_is_a_config_error() {
        let broken = HOPPER_TOML.replace("max_order = 2", "max_order = 2\nbogus_knob = 1");
        let err = ConfigFile::parse(&broken).unwrap_err();
        assert!(err.to_string().contains("bogus_knob"));
    }

    #[test]
    fn sir_config_resolves_calendar_defaults() {
        let text = r#"
seed = 1
system = "sir"

[sir]
years = 5

[data]
training_ics = [[12.0, 13.0, 975.0]]
validation_ics = [[15.0, 10.0, 975.0]]

[identify]
cluster_size = 30
max_order = 3
state_columns = [0, 1]
"#;
        let file = ConfigFile::parse(text).unwrap();
        let config = file.pipeline_config(None).unwrap();
        match &config.system {
            SystemConfig::Sir { calendar, params, years } => {
                assert_eq!(*years, 5);
                assert_eq!(calendar.sessions.len(), 4);
                assert_eq!(params.population, 1000.0);
            }
            _ => panic!("expected sir system"),
        }
        assert_eq!(config.state_columns, vec![0, 1]);
        assert_eq!(config.coordinate_columns, vec![0, 1]);
    }

    #[test]
    fn hash_tracks_content_not_formatting() {
        let a = ConfigFile::parse(HOPPER_TOML).unwrap().pipeline_config(None).unwrap();
        let reformatted = HOPPER_TOML.replace("kappa = 10.0", "kappa   =   10.0  # comment");
        let b = ConfigFile::parse(&reformatted).unwrap().pipeline_config(None).unwrap();
        assert_eq!(config_hash(&a, a.seed), config_hash(&b, b.seed));

        let changed = HOPPER_TOML.replace("kappa = 10.0", "kappa = 11.0");
        let c = ConfigFile::parse(&changed).unwrap().pipeline_config(None).unwrap();
        assert_ne!(config_hash(&a, a.seed), config_hash(&c, c.seed));
    }
}

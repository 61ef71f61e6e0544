//! JSON scenario documents.
//!
//! Two forms are accepted:
//!
//! * an explicit document mirroring [`Scenario`] field for field, with
//!   powers in dB (`*_db`) and angles in degrees (`*_deg`);
//! * `{"generator": {...}, "seed": N}`, which draws a random instance with
//!   [`InstanceGenerator`].
//!
//! Per-subcarrier quantities accept either a scalar (replicated over all
//! subcarriers) or a list with one entry per subcarrier.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::generator::InstanceGenerator;
use super::{
    db_to_linear, linear_to_db, validate, ArrayGeometry, ClutterScatterer, KappaMode, PathKind,
    ProtectedDirection, Scenario, Subcarrier, User, UserPath, Violation,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("scenario violates {} invariant(s): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A scalar or one value per subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSubcarrier {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerSubcarrier {
    fn expand(&self, k: usize, path: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            PerSubcarrier::Scalar(x) => Ok(vec![*x; k]),
            PerSubcarrier::List(v) if v.len() == k => Ok(v.clone()),
            PerSubcarrier::List(v) => Err(ConfigError::Parse {
                path: path.to_string(),
                message: format!("expected {k} per-subcarrier values, found {}", v.len()),
            }),
        }
    }

    fn compact(values: &[f64]) -> Self {
        match values.first() {
            Some(&first) if values.iter().all(|&x| x == first) => PerSubcarrier::Scalar(first),
            _ => PerSubcarrier::List(values.to_vec()),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        match self {
            PerSubcarrier::Scalar(x) => PerSubcarrier::Scalar(f(*x)),
            PerSubcarrier::List(v) => PerSubcarrier::List(v.iter().map(|&x| f(x)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub num_elements: usize,
    /// Meters; defaults to half a wavelength at the highest subcarrier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_spacing_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubcarrierConfig {
    pub center_frequency_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKindConfig {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub kind: PathKindConfig,
    pub angle_departure_deg: f64,
    pub angle_arrival_deg: f64,
    pub power_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaModeConfig {
    #[default]
    Auto,
    ForceDirect,
    ForceIndirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub array: ArrayConfig,
    pub paths: Vec<PathConfig>,
    pub noise_power_db: PerSubcarrier,
    /// Linear error-rate target(s).
    pub error_target: PerSubcarrier,
    #[serde(default)]
    pub kappa_mode: KappaModeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterConfig {
    pub angle_deg: f64,
    /// Ignored when `clutter_scr_db` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_db: Option<PerSubcarrier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectedConfig {
    /// Zero-based subcarrier index.
    pub subcarrier: usize,
    pub angle_deg: f64,
    /// Linear relative level δ in [0, 1].
    pub level: f64,
}

/// Explicit scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tx_array: ArrayConfig,
    pub radar_rx_array: ArrayConfig,
    pub subcarriers: Vec<SubcarrierConfig>,
    pub num_slots: usize,
    pub constellation_size: usize,
    pub power_budget_db: f64,
    #[serde(default)]
    pub users: Vec<UserConfig>,
    #[serde(default)]
    pub clutter: Vec<ClutterConfig>,
    /// When set, every clutter power is derived from this ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clutter_scr_db: Option<f64>,
    pub target_direction_deg: PerSubcarrier,
    pub target_power_db: PerSubcarrier,
    pub radar_noise_db: PerSubcarrier,
    #[serde(default)]
    pub protected: Vec<ProtectedConfig>,
}

/// Random-instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedConfig {
    pub generator: InstanceGenerator,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigDocument {
    Generated(GeneratedConfig),
    Explicit(ScenarioConfig),
}

impl ConfigDocument {
    /// Builds the scenario; `seed` overrides the document seed for generated configs.
    pub fn build(&self, seed: Option<u64>) -> Result<Scenario, ConfigError> {
        match self {
            ConfigDocument::Generated(g) => Ok(g.generator.instantiate(seed.unwrap_or(g.seed))),
            ConfigDocument::Explicit(c) => c.to_scenario(),
        }
    }

    pub fn generator(&self) -> Option<&InstanceGenerator> {
        match self {
            ConfigDocument::Generated(g) => Some(&g.generator),
            ConfigDocument::Explicit(_) => None,
        }
    }
}

/// Parses a config document, reporting the JSON path of the first error.
pub fn parse_document(text: &str) -> Result<ConfigDocument, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;
    // Dispatch on shape so that errors carry the path inside the chosen form.
    let is_generated = value
        .as_object()
        .is_some_and(|o| o.contains_key("generator"));
    let map_err = |e: serde_path_to_error::Error<serde_json::Error>| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    };
    if is_generated {
        serde_path_to_error::deserialize(value)
            .map(ConfigDocument::Generated)
            .map_err(map_err)
    } else {
        serde_path_to_error::deserialize(value)
            .map(ConfigDocument::Explicit)
            .map_err(map_err)
    }
}

pub fn read_document(path: &Path) -> Result<ConfigDocument, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_document(&text)
}

/// Reads, builds and validates a scenario.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, ConfigError> {
    let scenario = read_document(path)?.build(seed)?;
    let violations = validate(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

fn array(cfg: &ArrayConfig, max_freq: f64) -> ArrayGeometry {
    match cfg.element_spacing_m {
        Some(b) => ArrayGeometry::new(cfg.num_elements, b),
        None => ArrayGeometry::half_wavelength(cfg.num_elements, max_freq),
    }
}

impl ScenarioConfig {
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let k = self.subcarriers.len();
        let max_freq = self
            .subcarriers
            .iter()
            .map(|s| s.center_frequency_hz)
            .fold(0.0, f64::max);
        let rad = f64::to_radians;

        let mut users = Vec::with_capacity(self.users.len());
        for (m, u) in self.users.iter().enumerate() {
            users.push(User {
                array: array(&u.array, max_freq),
                paths: u
                    .paths
                    .iter()
                    .map(|p| UserPath {
                        kind: match p.kind {
                            PathKindConfig::Direct => PathKind::Direct,
                            PathKindConfig::Indirect => PathKind::Indirect,
                        },
                        angle_departure: rad(p.angle_departure_deg),
                        angle_arrival: rad(p.angle_arrival_deg),
                        power: db_to_linear(p.power_db),
                    })
                    .collect(),
                noise_power: u
                    .noise_power_db
                    .map(db_to_linear)
                    .expand(k, &format!("users[{m}].noise_power_db"))?,
                error_target: u
                    .error_target
                    .expand(k, &format!("users[{m}].error_target"))?,
                kappa_mode: match u.kappa_mode {
                    KappaModeConfig::Auto => KappaMode::Auto,
                    KappaModeConfig::ForceDirect => KappaMode::ForceDirect,
                    KappaModeConfig::ForceIndirect => KappaMode::ForceIndirect,
                },
            });
        }

        let mut clutter = Vec::with_capacity(self.clutter.len());
        for (j, c) in self.clutter.iter().enumerate() {
            let power = match (&c.power_db, self.clutter_scr_db) {
                (_, Some(_)) => vec![0.0; k],
                (Some(p), None) => p
                    .map(db_to_linear)
                    .expand(k, &format!("clutter[{j}].power_db"))?,
                (None, None) => {
                    return Err(ConfigError::Parse {
                        path: format!("clutter[{j}].power_db"),
                        message: "required unless clutter_scr_db is set".into(),
                    })
                }
            };
            clutter.push(ClutterScatterer {
                angle: rad(c.angle_deg),
                power,
            });
        }

        let mut scenario = Scenario {
            tx_array: array(&self.tx_array, max_freq),
            radar_rx_array: array(&self.radar_rx_array, max_freq),
            subcarriers: self
                .subcarriers
                .iter()
                .map(|s| Subcarrier {
                    center_frequency: s.center_frequency_hz,
                })
                .collect(),
            num_slots: self.num_slots,
            constellation_size: self.constellation_size,
            power_budget: db_to_linear(self.power_budget_db),
            users,
            clutter,
            target_direction: self
                .target_direction_deg
                .map(rad)
                .expand(k, "target_direction_deg")?,
            target_power: self
                .target_power_db
                .map(db_to_linear)
                .expand(k, "target_power_db")?,
            radar_noise: self
                .radar_noise_db
                .map(db_to_linear)
                .expand(k, "radar_noise_db")?,
            protected: self
                .protected
                .iter()
                .map(|p| ProtectedDirection {
                    subcarrier: p.subcarrier,
                    angle: rad(p.angle_deg),
                    level: p.level,
                })
                .collect(),
        };
        if let Some(scr_db) = self.clutter_scr_db {
            if !scenario.target_power.iter().all(|&p| p > 0.0) {
                return Err(ConfigError::Parse {
                    path: "target_power_db".into(),
                    message: "must be finite to calibrate clutter".into(),
                });
            }
            scenario.calibrate_clutter(db_to_linear(scr_db));
        }
        Ok(scenario)
    }

    /// Explicit document describing `s` (dB and degrees).
    pub fn from_scenario(s: &Scenario) -> Self {
        let arr = |a: &ArrayGeometry| ArrayConfig {
            num_elements: a.num_elements,
            element_spacing_m: Some(a.element_spacing),
        };
        let db = |v: &[f64]| PerSubcarrier::compact(&v.iter().map(|&x| linear_to_db(x)).collect::<Vec<_>>());
        ScenarioConfig {
            tx_array: arr(&s.tx_array),
            radar_rx_array: arr(&s.radar_rx_array),
            subcarriers: s
                .subcarriers
                .iter()
                .map(|c| SubcarrierConfig {
                    center_frequency_hz: c.center_frequency,
                })
                .collect(),
            num_slots: s.num_slots,
            constellation_size: s.constellation_size,
            power_budget_db: linear_to_db(s.power_budget),
            users: s
                .users
                .iter()
                .map(|u| UserConfig {
                    array: arr(&u.array),
                    paths: u
                        .paths
                        .iter()
                        .map(|p| PathConfig {
                            kind: match p.kind {
                                PathKind::Direct => PathKindConfig::Direct,
                                PathKind::Indirect => PathKindConfig::Indirect,
                            },
                            angle_departure_deg: p.angle_departure.to_degrees(),
                            angle_arrival_deg: p.angle_arrival.to_degrees(),
                            power_db: linear_to_db(p.power),
                        })
                        .collect(),
                    noise_power_db: db(&u.noise_power),
                    error_target: PerSubcarrier::compact(&u.error_target),
                    kappa_mode: match u.kappa_mode {
                        KappaMode::Auto => KappaModeConfig::Auto,
                        KappaMode::ForceDirect => KappaModeConfig::ForceDirect,
                        KappaMode::ForceIndirect => KappaModeConfig::ForceIndirect,
                    },
                })
                .collect(),
            clutter: s
                .clutter
                .iter()
                .map(|c| ClutterConfig {
                    angle_deg: c.angle.to_degrees(),
                    power_db: Some(db(&c.power)),
                })
                .collect(),
            clutter_scr_db: None,
            target_direction_deg: PerSubcarrier::compact(
                &s.target_direction.iter().map(|a| a.to_degrees()).collect::<Vec<_>>(),
            ),
            target_power_db: db(&s.target_power),
            radar_noise_db: db(&s.radar_noise),
            protected: s
                .protected
                .iter()
                .map(|p| ProtectedConfig {
                    subcarrier: p.subcarrier,
                    angle_deg: p.angle.to_degrees(),
                    level: p.level,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "tx_array": {"num_elements": 4},
        "radar_rx_array": {"num_elements": 2},
        "subcarriers": [{"center_frequency_hz": 2e9}, {"center_frequency_hz": 2.0001e9}],
        "num_slots": 2,
        "constellation_size": 2,
        "power_budget_db": 20,
        "users": [{
            "array": {"num_elements": 2},
            "paths": [{"kind": "direct", "angle_departure_deg": 10, "angle_arrival_deg": -5, "power_db": -130}],
            "noise_power_db": -150,
            "error_target": [1e-3, 1e-4]
        }],
        "clutter": [{"angle_deg": 30}, {"angle_deg": -40}],
        "clutter_scr_db": -20,
        "target_direction_deg": [0, 5],
        "target_power_db": -160,
        "radar_noise_db": -150,
        "protected": [{"subcarrier": 1, "angle_deg": 45, "level": 1e-6}]
    }"#;

    #[test]
    fn explicit_document_round_trip() {
        let doc = parse_document(SMALL).unwrap();
        let s = doc.build(None).unwrap();
        assert!(validate(&s).is_empty(), "{:?}", validate(&s));
        assert_eq!(s.num_subcarriers(), 2);
        assert!((s.power_budget - 100.0).abs() < 1e-12);
        assert_eq!(s.users[0].error_target, vec![1e-3, 1e-4]);
        assert!((s.target_direction[1] - 5f64.to_radians()).abs() < 1e-15);
        // 1e-16 / (0.01 * 2)
        assert!((s.clutter[0].power[1] - 5e-15).abs() < 1e-27);
        let half = crate::scenario::SPEED_OF_LIGHT / (2.0 * 2.0001e9);
        assert!((s.tx_array.element_spacing - half).abs() < 1e-15);

        let back = ScenarioConfig::from_scenario(&s).to_scenario().unwrap();
        assert_eq!(back.num_subcarriers(), 2);
        for (a, b) in back.clutter.iter().zip(&s.clutter) {
            assert!((a.angle - b.angle).abs() < 1e-14);
            for (x, y) in a.power.iter().zip(&b.power) {
                assert!((x - y).abs() <= 1e-12 * y);
            }
        }
    }

    #[test]
    fn malformed_reports_field_path() {
        let bad = SMALL.replace("\"num_slots\": 2", "\"num_slots\": \"two\"");
        match parse_document(&bad) {
            Err(ConfigError::Parse { path, .. }) => assert_eq!(path, "num_slots"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = SMALL.replace("\"kind\": \"direct\"", "\"kind\": \"sideways\"");
        match parse_document(&bad) {
            Err(ConfigError::Parse { path, .. }) => assert_eq!(path, "users[0].paths[0].kind"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_list_length() {
        let bad = SMALL.replace("[0, 5]", "[0, 5, 7]");
        let err = parse_document(&bad).unwrap().build(None).unwrap_err();
        assert!(err.to_string().contains("target_direction_deg"));
    }

    #[test]
    fn generated_document() {
        let doc = parse_document(r#"{"generator": {"num_subcarriers": 2}, "seed": 9}"#).unwrap();
        let a = doc.build(None).unwrap();
        let b = doc.build(Some(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_subcarriers(), 2);
        assert_eq!(a.tx_array.num_elements, 11);
    }
}

// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: one JSON document, every block optional,
//! unknown keys rejected.

use std::path::{Path, PathBuf};

use heqsim::decoherence::{NoiseConvention, DEFAULT_SIDEBAND_CONSTANT};
use heqsim::dynamics::EvolutionSpec;
use heqsim::helium_medium::GAMMA_MELT_MEASURED;
use heqsim::pulse_control::{PulseAngle, PulseSchedule};
use heqsim::qubit_model::DeviceGeometry;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub device: Option<DeviceGeometry>,
    /// Static electrode voltages, one per site; zeros when absent.
    #[serde(default, rename = "voltages_V")]
    pub voltages_v: Option<Vec<f64>>,
    /// Number of unperturbed hydrogenic levels kept.
    #[serde(default = "default_basis_size")]
    pub basis_size: usize,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub decoherence: NoiseConfig,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub readout: ReadoutRequest,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

// 20 levels do not converge at the upper end of the default sweep
fn default_basis_size() -> usize {
    30
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    #[serde(rename = "E_perp_V_per_cm")]
    pub e_perp_v_per_cm: [f64; 2],
    pub points: usize,
    /// Levels reported, ground state included.
    pub levels: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            e_perp_v_per_cm: [0.0, 50.0],
            points: 51,
            levels: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediumConfig {
    pub density_cm2: f64,
    pub gamma_melt: f64,
    pub ripplon_k_per_cm: Vec<f64>,
    pub mode_k_per_cm: Vec<f64>,
    pub shear_speed_cm_per_s: Option<f64>,
}

impl Default for MediumConfig {
    fn default() -> Self {
        Self {
            density_cm2: 4.5e8,
            gamma_melt: GAMMA_MELT_MEASURED,
            ripplon_k_per_cm: vec![1e2, 1e3, 1e4, 1e5, 1e6],
            mode_k_per_cm: vec![1e2, 1e3],
            shear_speed_cm_per_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    #[serde(rename = "noise_V_per_rt_Hz")]
    pub noise_v_per_rt_hz: f64,
    #[serde(rename = "tuning_GHz_per_mV")]
    pub tuning_ghz_per_mv: f64,
    pub sideband_constant: f64,
    pub convention: NoiseConvention,
    #[serde(rename = "mobility_field_V_per_cm")]
    pub mobility_field_v_per_cm: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            noise_v_per_rt_hz: 0.0,
            tuning_ghz_per_mv: 1.0,
            sideband_constant: DEFAULT_SIDEBAND_CONSTANT,
            convention: NoiseConvention::Estimate,
            mobility_field_v_per_cm: None,
        }
    }
}

/// Either a literal schedule or a recipe calibrated against the device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Explicit(PulseSchedule),
    Swap(SwapRecipe),
    Rabi(RabiRecipe),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapRecipe {
    /// The first site is ramped and starts excited.
    #[serde(default = "first_pair")]
    pub pair: [usize; 2],
    pub alpha: f64,
    #[serde(default)]
    pub rise_s: f64,
    #[serde(default)]
    pub fall_s: f64,
    /// Ramp peak, V; found by resonance search when absent.
    #[serde(default, rename = "v_peak_V")]
    pub v_peak_v: Option<f64>,
    #[serde(default)]
    pub refine: bool,
}

fn first_pair() -> [usize; 2] {
    [0, 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiRecipe {
    #[serde(default)]
    pub site: usize,
    #[serde(rename = "E_rf_V_per_cm")]
    pub e_rf_v_per_cm: f64,
    #[serde(default = "pi")]
    pub angle: PulseAngle,
    #[serde(default)]
    pub phase: f64,
    #[serde(default, rename = "detuning_GHz")]
    pub detuning_ghz: f64,
}

fn pi() -> PulseAngle {
    PulseAngle::Pi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    /// Excited sites; the swap recipe's first site, or none, when absent.
    pub excited: Option<Vec<usize>>,
    pub density_matrix: bool,
    /// Uniform samples over the schedule when `spec.sample_times` is empty.
    pub samples: usize,
    /// Add the device decoherence budget as Lindblad terms.
    pub dissipation_from_budget: bool,
    pub spec: EvolutionSpec,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            excited: None,
            density_matrix: false,
            samples: 100,
            dissipation_from_budget: false,
            spec: EvolutionSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutRequest {
    pub wait_s: f64,
    pub selectivity: f64,
    pub shots: u64,
    pub pixel_cm: f64,
    /// Keep per-shot records in the output.
    pub records: bool,
}

impl Default for ReadoutRequest {
    fn default() -> Self {
        Self {
            wait_s: 1e-6,
            selectivity: 1e6,
            shots: 10_000,
            pixel_cm: heqsim::readout::DEFAULT_PIXEL_CM,
            records: false,
        }
    }
}

/// A parsed config together with what identifies it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub overrides: Vec<String>,
    /// sha256 of the canonical JSON after overrides, output directory excluded.
    pub hash: String,
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded, CliError> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config: ExperimentConfig = serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let at = e.path().to_string();
        CliError::Config(format!("at `{at}`: {}", e.into_inner()))
    })?;
    let mut hashed = value;
    if let Value::Object(map) = &mut hashed {
        map.remove("output");
    }
    // serde_json maps are sorted, so this text is canonical
    let canonical = serde_json::to_string(&hashed).expect("values serialize");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    Ok(Loaded {
        config,
        overrides: overrides.to_vec(),
        hash,
    })
}

/// `a.b.0.c=value`: the value is JSON when it parses, a string otherwise.
/// Missing objects along the path are created.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form path=value")))?;
    if path.is_empty() {
        return Err(CliError::Config(format!("override `{spec}` has an empty path")));
    }
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| CliError::Config(format!("override `{path}`: `{key}` is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| CliError::Config(format!("override `{path}`: index {i} out of range ({len})")))?
            }
            other => {
                if !other.is_object() {
                    *other = Value::Object(Default::default());
                }
                other
                    .as_object_mut()
                    .expect("just made an object")
                    .entry(key.to_owned())
                    .or_insert(Value::Null)
            }
        };
    }
    *node = new;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_creates_and_replaces() {
        let mut v = json!({"device": {"B_T": 1.0, "sites": [[0.0, 0.0]]}});
        apply_override(&mut v, "device.B_T=1.5").unwrap();
        apply_override(&mut v, "device.sites.0.1=2").unwrap();
        apply_override(&mut v, "schedule.swap.alpha=0.5").unwrap();
        apply_override(&mut v, "output=runs/a").unwrap();
        assert_eq!(v["device"]["B_T"], json!(1.5));
        assert_eq!(v["device"]["sites"][0][1], json!(2));
        assert_eq!(v["schedule"]["swap"]["alpha"], json!(0.5));
        assert_eq!(v["output"], json!("runs/a"));
        assert!(apply_override(&mut v, "device.sites.4.0=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn last_override_wins() {
        let a = load(None, &["seed=1".into(), "seed=2".into()]).unwrap();
        let b = load(None, &["seed=2".into()]).unwrap();
        assert_eq!(a.config.seed, 2);
        assert_eq!(a.hash, b.hash);
    }

    #[test]
    fn output_directory_does_not_change_hash() {
        let a = load(None, &["output=x".into()]).unwrap();
        let b = load(None, &["output=y".into()]).unwrap();
        let c = load(None, &["seed=3".into()]).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = load(None, &["device.B_Tesla=1".into()]).unwrap_err().to_string();
        assert!(err.contains("device"), "{err}");
        assert!(err.contains("B_Tesla"), "{err}");
    }
}

// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Relaxation and dephasing estimates, and the per-device budget the
//! dynamics module turns into Lindblad channels.
//!
//! Energies are handled in kelvin (ħ = k_B = 1) and only converted to s⁻¹ at
//! the end through k_B/ħ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helium_medium::{magnetic_quantities, ripplon_energy_k, thermal_amplitude, HeliumSurface};
use crate::hydrogenic::rydberg_scales;
use crate::quantities::{kelvin_to_rad_per_sec, v_per_cm_to_gaussian, ELECTRON_CHARGE, HBAR, HELIUM_SURFACE_TENSION};

/// Default order-unity constant in the sideband weight.
pub const DEFAULT_SIDEBAND_CONSTANT: f64 = 1e-2;

fn check_temperature(t: f64) -> Result<HeliumSurface> {
    HeliumSurface::new(t)
}

/// Interband lifetime from ħ/T1 = R(δ_T/r_B)², seconds.
pub fn t1_free(temperature_k: f64, lambda: f64) -> Result<f64> {
    let surface = check_temperature(temperature_k)?;
    let scales = rydberg_scales(lambda)?;
    let ratio = thermal_amplitude(&surface)? / scales.bohr_radius_cm;
    Ok(1.0 / kelvin_to_rad_per_sec(scales.rydberg_k * ratio * ratio))
}

/// Intermediate scales behind the confined-electron estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinedScales {
    pub delta_t_cm: f64,
    pub magnetic_length_cm: f64,
    pub omega_c_k: f64,
    pub omega_zb_k: f64,
    /// Ripplon energy at k = 1/ℓ, K.
    pub omega_l_k: f64,
    pub rydberg_k: f64,
    pub bohr_radius_cm: f64,
}

pub fn confined_scales(temperature_k: f64, field_t: f64, pitch_cm: f64, lambda: f64) -> Result<ConfinedScales> {
    if !(field_t > 0.0) {
        return Err(Error::invalid(format!(
            "the confined dephasing estimate needs B_perp > 0 (got {field_t} T); \
             without magnetic confinement use the free-electron lifetime t1_free"
        )));
    }
    let surface = check_temperature(temperature_k)?;
    let scales = rydberg_scales(lambda)?;
    let magnetic = magnetic_quantities(field_t, pitch_cm)?;
    Ok(ConfinedScales {
        delta_t_cm: thermal_amplitude(&surface)?,
        magnetic_length_cm: magnetic.magnetic_length_cm,
        omega_c_k: magnetic.cyclotron_k,
        omega_zb_k: magnetic.bandwidth_k,
        omega_l_k: ripplon_energy_k(&surface, 1.0 / magnetic.magnetic_length_cm)?,
        rydberg_k: scales.rydberg_k,
        bohr_radius_cm: scales.bohr_radius_cm,
    })
}

fn t2_from(s: &ConfinedScales) -> f64 {
    let rate_k = s.rydberg_k.powi(4) * (s.delta_t_cm / s.bohr_radius_cm).powi(4)
        * (s.bohr_radius_cm / s.magnetic_length_cm).powi(8)
        / (s.omega_zb_k.powi(2) * s.omega_l_k);
    1.0 / kelvin_to_rad_per_sec(rate_k)
}

/// Dephasing time of a magnetically confined electron, seconds.
pub fn t2_confined(temperature_k: f64, field_t: f64, pitch_cm: f64, lambda: f64) -> Result<f64> {
    confined_scales(temperature_k, field_t, pitch_cm, lambda).map(|s| t2_from(&s))
}

fn sideband_from(s: &ConfinedScales, c_g: f64) -> f64 {
    c_g * (s.rydberg_k / s.omega_l_k).powi(2) * s.delta_t_cm.powi(2) * s.bohr_radius_cm.powi(2)
        / s.magnetic_length_cm.powi(4)
}

/// Relative intensity G of the ripplon side bands.
pub fn sideband_weight(temperature_k: f64, field_t: f64, lambda: f64, c_g: f64) -> Result<f64> {
    if !(c_g >= 0.0) {
        return Err(Error::invalid(format!("sideband constant must be non-negative, got {c_g}")));
    }
    // the pitch only enters ω_ZB, which G does not use
    confined_scales(temperature_k, field_t, 1.0, lambda).map(|s| sideband_from(&s, c_g))
}

/// Momentum relaxation rate τ⁻¹ = (eE_T)²/(4σħ), s⁻¹.
pub fn mobility_rate(effective_field_v_per_cm: f64, surface_tension: f64) -> Result<f64> {
    if !(effective_field_v_per_cm >= 0.0 && surface_tension > 0.0) {
        return Err(Error::invalid("effective field must be non-negative and surface tension positive"));
    }
    let ef = ELECTRON_CHARGE * v_per_cm_to_gaussian(effective_field_v_per_cm);
    Ok(ef * ef / (4.0 * surface_tension * HBAR))
}

/// Effective field (V/cm) giving momentum relaxation rate `rate`.
pub fn mobility_field_for_rate(rate: f64, surface_tension: f64) -> Result<f64> {
    if !(rate >= 0.0 && surface_tension > 0.0) {
        return Err(Error::invalid("rate must be non-negative and surface tension positive"));
    }
    let ef = (rate * 4.0 * surface_tension * HBAR).sqrt();
    Ok(ef / ELECTRON_CHARGE / v_per_cm_to_gaussian(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    /// Rate in s⁻¹ equal to the frequency-noise density S_ν² in Hz²/Hz.
    #[default]
    Estimate,
    /// White frequency noise: rate = 2π²S_ν².
    WhiteNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageNoise {
    /// Frequency noise density, Hz/√Hz.
    pub frequency_noise: f64,
    /// Dephasing time under the selected convention; None for a noiseless line.
    pub t_phi_s: Option<f64>,
    pub convention: NoiseConvention,
    /// Dephasing time under the estimator convention.
    pub t_phi_estimate_s: Option<f64>,
    /// Dephasing time under the white-noise convention.
    pub t_phi_white_s: Option<f64>,
}

/// Dephasing from electrode voltage noise `noise` (V/√Hz) through a tuning
/// slope in GHz/mV.
pub fn voltage_noise_dephasing(
    noise_v_per_rt_hz: f64,
    tuning_ghz_per_mv: f64,
    convention: NoiseConvention,
) -> Result<VoltageNoise> {
    if !(noise_v_per_rt_hz >= 0.0) {
        return Err(Error::invalid(format!("voltage noise must be non-negative, got {noise_v_per_rt_hz}")));
    }
    if !(tuning_ghz_per_mv > 0.0) {
        return Err(Error::invalid(format!("tuning slope must be positive, got {tuning_ghz_per_mv}")));
    }
    // GHz/mV → Hz/V is a factor 1e12
    let s_nu = tuning_ghz_per_mv * 1e12 * noise_v_per_rt_hz;
    let time = |rate: f64| if rate > 0.0 { Some(1.0 / rate) } else { None };
    let estimate = time(s_nu * s_nu);
    let white = time(2.0 * std::f64::consts::PI.powi(2) * s_nu * s_nu);
    Ok(VoltageNoise {
        frequency_noise: s_nu,
        t_phi_s: match convention {
            NoiseConvention::Estimate => estimate,
            NoiseConvention::WhiteNoise => white,
        },
        convention,
        t_phi_estimate_s: estimate,
        t_phi_white_s: white,
    })
}

/// Relative in-plane suppression 2ℓ²/d² of the dipole coupling fluctuation.
pub fn inplane_suppression(magnetic_length_cm: f64, pitch_cm: f64) -> Result<f64> {
    if !(magnetic_length_cm >= 0.0 && pitch_cm > 0.0) {
        return Err(Error::invalid("magnetic length must be non-negative and pitch positive"));
    }
    Ok(2.0 * (magnetic_length_cm / pitch_cm).powi(2))
}

/// Parameters the budget is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetInputs {
    pub temperature_k: f64,
    pub field_t: f64,
    pub pitch_cm: f64,
    pub lambda: f64,
    pub noise_v_per_rt_hz: f64,
    pub tuning_ghz_per_mv: f64,
    #[serde(default = "default_c_g")]
    pub sideband_constant: f64,
    #[serde(default)]
    pub noise_convention: NoiseConvention,
    /// Effective pressing field for the τ⁻¹ diagnostic, V/cm.
    #[serde(default)]
    pub mobility_field_v_per_cm: Option<f64>,
}

fn default_c_g() -> f64 {
    DEFAULT_SIDEBAND_CONSTANT
}

impl BudgetInputs {
    pub fn new(temperature_k: f64, field_t: f64, pitch_cm: f64, lambda: f64) -> Self {
        Self {
            temperature_k,
            field_t,
            pitch_cm,
            lambda,
            noise_v_per_rt_hz: 0.0,
            tuning_ghz_per_mv: 1.0,
            sideband_constant: DEFAULT_SIDEBAND_CONSTANT,
            noise_convention: NoiseConvention::Estimate,
            mobility_field_v_per_cm: None,
        }
    }

    pub fn with_noise(mut self, noise_v_per_rt_hz: f64, tuning_ghz_per_mv: f64) -> Self {
        self.noise_v_per_rt_hz = noise_v_per_rt_hz;
        self.tuning_ghz_per_mv = tuning_ghz_per_mv;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceBudget {
    pub inputs: BudgetInputs,
    pub scales: ConfinedScales,
    pub t1_s: f64,
    pub t2_s: f64,
    pub sideband_weight: f64,
    pub mobility_rate_per_s: Option<f64>,
    pub voltage_noise: VoltageNoise,
    pub inplane_suppression: f64,
    /// 1/T2_eff = 1/T2 + 1/T_φ,V.
    pub t2_eff_s: f64,
}

impl DecoherenceBudget {
    pub fn relaxation_rate(&self) -> f64 {
        1.0 / self.t1_s
    }

    pub fn dephasing_rate(&self) -> f64 {
        1.0 / self.t2_eff_s
    }
}

pub fn budget(inputs: BudgetInputs) -> Result<DecoherenceBudget> {
    let scales = confined_scales(inputs.temperature_k, inputs.field_t, inputs.pitch_cm, inputs.lambda)?;
    if !(inputs.sideband_constant >= 0.0) {
        return Err(Error::invalid("sideband constant must be non-negative"));
    }
    let t2 = t2_from(&scales);
    let noise = voltage_noise_dephasing(inputs.noise_v_per_rt_hz, inputs.tuning_ghz_per_mv, inputs.noise_convention)?;
    let t2_eff = match noise.t_phi_s {
        Some(t_phi) => 1.0 / (1.0 / t2 + 1.0 / t_phi),
        None => t2,
    };
    Ok(DecoherenceBudget {
        inputs,
        scales,
        t1_s: t1_free(inputs.temperature_k, inputs.lambda)?,
        t2_s: t2,
        sideband_weight: sideband_from(&scales, inputs.sideband_constant),
        mobility_rate_per_s: inputs
            .mobility_field_v_per_cm
            .map(|e| mobility_rate(e, HELIUM_SURFACE_TENSION))
            .transpose()?,
        voltage_noise: noise,
        inplane_suppression: inplane_suppression(scales.magnetic_length_cm, inputs.pitch_cm)?,
        t2_eff_s: t2_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantities::{image_strength, HELIUM_DIELECTRIC};
    use proptest::prelude::*;

    fn lambda() -> f64 {
        image_strength(HELIUM_DIELECTRIC).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    const D: f64 = 0.5e-4;

    #[test]
    fn free_lifetime() {
        let t1 = t1_free(0.01, lambda()).unwrap();
        assert!(rel(1.0 / t1, 6.344e6) < 1e-3, "{}", 1.0 / t1);
        let nu12 = 2.0 * std::f64::consts::PI * 119.2e9;
        let ratio = 1.0 / t1 / nu12;
        assert!(ratio > 1e-7 && ratio < 1e-5, "{ratio}");
        assert!(rel(t1 / t1_free(0.04, lambda()).unwrap(), 4.0) < 1e-12);
    }

    #[test]
    fn confined_dephasing() {
        let t2 = t2_confined(0.01, 1.5, D, lambda()).unwrap();
        assert!(rel(t2, 9.907e-5) < 2e-3, "{t2}");
        let ratio = t2 / t2_confined(0.02, 1.5, D, lambda()).unwrap();
        assert!(rel(ratio, 4.0) < 1e-10);
        let err = t2_confined(0.01, 0.0, D, lambda()).unwrap_err();
        assert!(err.to_string().contains("t1_free"));
        // (r_B/ℓ)⁸ ∝ B⁴ outweighs ω_ZB²ω_ℓ ∝ B^(-5/4): the estimate falls as B rises
        let t2_high = t2_confined(0.01, 3.0, D, lambda()).unwrap();
        assert!(t2_high < t2);
        assert!(rel(t2 / t2_high, 2f64.powf(5.25)) < 1e-3, "{}", t2 / t2_high);
    }

    #[test]
    fn sideband() {
        let g = sideband_weight(0.01, 1.5, lambda(), DEFAULT_SIDEBAND_CONSTANT).unwrap();
        assert!(rel(g, 4.0085e-3) < 2e-3, "{g}");
        assert_eq!(sideband_weight(0.01, 1.5, lambda(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn mobility() {
        assert_eq!(mobility_rate(0.0, HELIUM_SURFACE_TENSION).unwrap(), 0.0);
        let r1 = mobility_rate(10.0, HELIUM_SURFACE_TENSION).unwrap();
        assert!(rel(mobility_rate(30.0, HELIUM_SURFACE_TENSION).unwrap(), 9.0 * r1) < 1e-12);
        let e = mobility_field_for_rate(1e7, HELIUM_SURFACE_TENSION).unwrap();
        assert!(e > 50.0 && e < 100.0, "{e}");
        assert!(rel(mobility_rate(e, HELIUM_SURFACE_TENSION).unwrap(), 1e7) < 1e-12);
    }

    #[test]
    fn voltage_noise() {
        let v = voltage_noise_dephasing(1e-10, 1.0, NoiseConvention::Estimate).unwrap();
        assert!(rel(v.frequency_noise, 100.0) < 1e-12);
        assert!(rel(v.t_phi_s.unwrap(), 1e-4) < 1e-12);
        let w = voltage_noise_dephasing(1e-10, 1.0, NoiseConvention::WhiteNoise).unwrap();
        assert!(rel(w.t_phi_s.unwrap(), 1e-4 / (2.0 * std::f64::consts::PI.powi(2))) < 1e-12);
        assert_eq!(w.t_phi_estimate_s, v.t_phi_s);
        let quiet = voltage_noise_dephasing(0.0, 1.0, NoiseConvention::Estimate).unwrap();
        assert!(quiet.t_phi_s.is_none());
        assert!(voltage_noise_dephasing(1e-10, 0.0, NoiseConvention::Estimate).is_err());
    }

    #[test]
    fn inplane() {
        let r = inplane_suppression(209.48e-8, D).unwrap();
        assert!(rel(r, 3.51e-3) < 1e-3);
        assert_eq!(inplane_suppression(0.0, D).unwrap(), 0.0);
        assert!(rel(inplane_suppression(209.48e-8, 2.0 * D).unwrap(), r / 4.0) < 1e-12);
    }

    #[test]
    fn operating_point_budget() {
        let b = budget(BudgetInputs::new(0.01, 1.5, D, lambda()).with_noise(1e-10, 1.0)).unwrap();
        assert!(rel(b.t2_eff_s, 4.977e-5) < 3e-3, "{}", b.t2_eff_s);
        let quiet = budget(BudgetInputs::new(0.01, 1.5, D, lambda())).unwrap();
        assert_eq!(quiet.t2_eff_s, quiet.t2_s);
        let json = serde_json::to_string(&b).unwrap();
        let back: DecoherenceBudget = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
    }

    proptest! {
        #[test]
        fn rates_grow_with_temperature(t in 1e-3f64..0.09, step in 1.01f64..1.1) {
            let l = lambda();
            prop_assert!(t1_free(t * step, l).unwrap() < t1_free(t, l).unwrap());
            prop_assert!(t2_confined(t * step, 1.5, D, l).unwrap() < t2_confined(t, 1.5, D, l).unwrap());
            prop_assert!(sideband_weight(t * step, 1.5, l, 0.01).unwrap() > sideband_weight(t, 1.5, l, 0.01).unwrap());
        }
    }
}

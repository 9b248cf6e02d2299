// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! The helium surface (ripplons, thermal roughness) and the collective
//! behaviour of the electron sheet (plasma parameter, Wigner melting,
//! long-wavelength phonon and magnetoplasmon branches).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantities::{
    rad_per_sec_to_kelvin, BOLTZMANN, ELECTRON_CHARGE, ELECTRON_MASS, GAUSS_PER_TESLA, GRAVITY,
    HBAR, HELIUM_DENSITY, HELIUM_SURFACE_TENSION, SPEED_OF_LIGHT,
};

/// Melting threshold quoted for the crystallization of the electron sheet.
pub const GAMMA_MELT: f64 = 130.0;
/// Value of Γ along the measured melting line.
pub const GAMMA_MELT_MEASURED: f64 = 137.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeliumSurface {
    /// Surface tension σ, erg/cm².
    pub surface_tension: f64,
    /// Mass density ρ, g/cm³.
    pub density: f64,
    /// Gravitational acceleration, cm/s².
    pub gravity: f64,
    /// Temperature, K.
    pub temperature_k: f64,
}

impl HeliumSurface {
    pub fn new(temperature_k: f64) -> Result<Self> {
        let s = Self {
            surface_tension: HELIUM_SURFACE_TENSION,
            density: HELIUM_DENSITY,
            gravity: GRAVITY,
            temperature_k,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.surface_tension > 0.0 && self.density > 0.0 && self.temperature_k > 0.0) {
            return Err(Error::invalid(format!(
                "surface tension, density and temperature must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Ripplon angular frequency ω(k) = √(gk + (σ/ρ)k³), s⁻¹.
pub fn ripplon_omega(surface: &HeliumSurface, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::invalid(format!("ripplon wave number must be positive, got {k}")));
    }
    Ok((surface.gravity * k + surface.surface_tension / surface.density * k.powi(3)).sqrt())
}

/// ħω(k) in kelvin.
pub fn ripplon_energy_k(surface: &HeliumSurface, k: f64) -> Result<f64> {
    ripplon_omega(surface, k).map(rad_per_sec_to_kelvin)
}

/// Wave number where gravity and capillary terms are equal, √(gρ/σ).
pub fn capillary_crossover(surface: &HeliumSurface) -> f64 {
    (surface.gravity * surface.density / surface.surface_tension).sqrt()
}

/// RMS thermal surface displacement δ_T = √(k_B T/σ), cm.
pub fn thermal_amplitude(surface: &HeliumSurface) -> Result<f64> {
    surface.validate()?;
    Ok((BOLTZMANN * surface.temperature_k / surface.surface_tension).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronSheet {
    /// Areal density n, cm⁻².
    pub density: f64,
    /// Perpendicular magnetic field, T.
    pub field_t: f64,
}

impl ElectronSheet {
    pub fn new(density: f64, field_t: f64) -> Result<Self> {
        if !(density > 0.0) {
            return Err(Error::invalid(format!("electron density must be positive, got {density}")));
        }
        if !(field_t >= 0.0) {
            return Err(Error::invalid(format!("magnetic field must be non-negative, got {field_t}")));
        }
        Ok(Self { density, field_t })
    }

    /// ω_p = (2πe²n^{3/2}/m_e)^{1/2}, s⁻¹.
    pub fn plasma_frequency(&self) -> f64 {
        (2.0 * std::f64::consts::PI * ELECTRON_CHARGE.powi(2) * self.density.powf(1.5) / ELECTRON_MASS)
            .sqrt()
    }

    /// Cyclotron angular frequency eB/m_ec, s⁻¹.
    pub fn cyclotron_frequency(&self) -> f64 {
        cyclotron_omega(self.field_t)
    }
}

fn cyclotron_omega(field_t: f64) -> f64 {
    ELECTRON_CHARGE * field_t * GAUSS_PER_TESLA / (ELECTRON_MASS * SPEED_OF_LIGHT)
}

/// Plasma parameter Γ = e²(πn)^{1/2}/k_B T.
pub fn plasma_parameter(sheet: &ElectronSheet, temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature_k}")));
    }
    Ok(ELECTRON_CHARGE.powi(2) * (std::f64::consts::PI * sheet.density).sqrt()
        / (BOLTZMANN * temperature_k))
}

/// Temperature at which Γ(n, T) equals `gamma`.
pub fn melting_temperature(density: f64, gamma: f64) -> Result<f64> {
    if !(density > 0.0 && gamma > 0.0) {
        return Err(Error::invalid("density and Γ must be positive"));
    }
    Ok(ELECTRON_CHARGE.powi(2) * (std::f64::consts::PI * density).sqrt() / (BOLTZMANN * gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCheck {
    pub crystal: bool,
    pub gamma: f64,
    /// Γ/Γ_melt.
    pub margin: f64,
}

/// Crystal iff Γ ≥ Γ_melt (boundary counts as crystal).
pub fn is_crystal(sheet: &ElectronSheet, temperature_k: f64, gamma_melt: f64) -> Result<PhaseCheck> {
    let gamma = plasma_parameter(sheet, temperature_k)?;
    Ok(PhaseCheck {
        crystal: gamma >= gamma_melt,
        gamma,
        margin: gamma / gamma_melt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Longitudinal,
    /// Shear (transverse acoustic) mode; needs a caller-supplied speed.
    ShearAcoustic,
    MagnetoplasmaLow,
    MagnetoplasmaHigh,
}

impl Branch {
    pub const ALL: [Branch; 4] = [
        Branch::Longitudinal,
        Branch::ShearAcoustic,
        Branch::MagnetoplasmaLow,
        Branch::MagnetoplasmaHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Longitudinal => "longitudinal",
            Branch::ShearAcoustic => "shear_acoustic",
            Branch::MagnetoplasmaLow => "magnetoplasma_low",
            Branch::MagnetoplasmaHigh => "magnetoplasma_high",
        }
    }
}

/// Largest k/√n treated as long-wavelength.
pub const LONG_WAVELENGTH_LIMIT: f64 = 0.2;

/// Long-wavelength mode frequency in s⁻¹.
///
/// The upper magnetoplasma branch is √(ω_c² + ω_L(k)²), which starts at ω_c.
pub fn collective_mode(
    sheet: &ElectronSheet,
    branch: Branch,
    k: f64,
    shear_speed_cm_per_s: Option<f64>,
) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(Error::invalid(format!("wave number must be non-negative, got {k}")));
    }
    let x = k / sheet.density.sqrt();
    if x > LONG_WAVELENGTH_LIMIT {
        return Err(Error::invalid(format!(
            "k = {k:e} cm⁻¹ is outside the long-wavelength regime (k/√n = {x:.3} > {LONG_WAVELENGTH_LIMIT})"
        )));
    }
    let wp = sheet.plasma_frequency();
    let longitudinal = wp * x.sqrt();
    let needs_field = || {
        if sheet.field_t > 0.0 {
            Ok(sheet.cyclotron_frequency())
        } else {
            Err(Error::invalid("magnetoplasma branches need B_perp > 0"))
        }
    };
    match branch {
        Branch::Longitudinal => Ok(longitudinal),
        Branch::ShearAcoustic => shear_speed_cm_per_s
            .map(|c| c * k)
            .ok_or_else(|| Error::invalid("shear branch needs a sound speed coefficient")),
        Branch::MagnetoplasmaLow => {
            let wc = needs_field()?;
            Ok(wp * wp / wc * x.powf(1.5))
        }
        Branch::MagnetoplasmaHigh => {
            let wc = needs_field()?;
            Ok((wc * wc + longitudinal * longitudinal).sqrt())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticScales {
    /// ħω_c, K.
    pub cyclotron_k: f64,
    /// Magnetic length ℓ = (ħc/eB)^{1/2}, cm.
    pub magnetic_length_cm: f64,
    /// Interaction bandwidth ω_ZB = (2πe²/d³m_e)/ω_c, in K.
    pub bandwidth_k: f64,
}

pub fn magnetic_quantities(field_t: f64, pitch_cm: f64) -> Result<MagneticScales> {
    if !(field_t > 0.0 && pitch_cm > 0.0) {
        return Err(Error::invalid(format!(
            "magnetic field and electrode pitch must be positive, got B = {field_t} T, d = {pitch_cm} cm"
        )));
    }
    let wc = cyclotron_omega(field_t);
    let b_gauss = field_t * GAUSS_PER_TESLA;
    let ell = (HBAR * SPEED_OF_LIGHT / (ELECTRON_CHARGE * b_gauss)).sqrt();
    let zb = 2.0 * std::f64::consts::PI * ELECTRON_CHARGE.powi(2) / (pitch_cm.powi(3) * ELECTRON_MASS) / wc;
    Ok(MagneticScales {
        cyclotron_k: rad_per_sec_to_kelvin(wc),
        magnetic_length_cm: ell,
        bandwidth_k: rad_per_sec_to_kelvin(zb),
    })
}

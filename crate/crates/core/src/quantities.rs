// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Physical constants and the handful of unit conversions the simulator needs.
//!
//! Canonical internal units are Gaussian CGS with energies in kelvin (k_B = 1):
//! energy K, length cm, time s, electric field V/cm at the interface (converted
//! to statvolt/cm inside formulas), magnetic field tesla (converted to gauss).
//! Constant values are CODATA 2018.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, erg·s.
pub const PLANCK: f64 = 6.626_070_15e-27;
/// Reduced Planck constant h/2π, erg·s. Derived rather than typed in so that
/// GHz and rad/s conversions agree to rounding.
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Boltzmann constant, erg/K.
pub const BOLTZMANN: f64 = 1.380_649e-16;
/// Elementary charge, statcoulomb.
pub const ELECTRON_CHARGE: f64 = 4.803_204_712_570_263e-10;
/// Electron mass, g.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-28;
/// Speed of light, cm/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e10;
/// Standard gravity, cm/s².
pub const GRAVITY: f64 = 980.665;
/// Volts per statvolt.
pub const VOLTS_PER_STATVOLT: f64 = 299.792_458;
/// erg per electronvolt.
pub const ERG_PER_EV: f64 = 1.602_176_634e-12;
/// Gauss per tesla.
pub const GAUSS_PER_TESLA: f64 = 1.0e4;

/// Surface tension of superfluid ⁴He, erg/cm².
pub const HELIUM_SURFACE_TENSION: f64 = 0.37;
/// Mass density of superfluid ⁴He, g/cm³.
pub const HELIUM_DENSITY: f64 = 0.145;
/// Dielectric constant of liquid ⁴He.
pub const HELIUM_DIELECTRIC: f64 = 1.057;

/// e² in erg·cm.
pub const E_SQUARED_ERG_CM: f64 = ELECTRON_CHARGE * ELECTRON_CHARGE;

/// e² in K·cm.
pub fn e_squared_kelvin_cm() -> f64 {
    E_SQUARED_ERG_CM / BOLTZMANN
}

/// Angular frequency (s⁻¹) corresponding to 1 K of energy.
pub const RAD_PER_SEC_PER_KELVIN: f64 = BOLTZMANN / HBAR;

/// Converts an energy in kelvin to angular frequency in s⁻¹.
pub fn kelvin_to_rad_per_sec(kelvin: f64) -> f64 {
    kelvin * RAD_PER_SEC_PER_KELVIN
}

/// Converts an angular frequency in s⁻¹ to an energy in kelvin.
pub fn rad_per_sec_to_kelvin(omega: f64) -> f64 {
    omega / RAD_PER_SEC_PER_KELVIN
}

/// Converts an energy in kelvin to a frequency in GHz.
pub fn kelvin_to_ghz(kelvin: f64) -> f64 {
    kelvin * BOLTZMANN / PLANCK * 1e-9
}

/// Converts a frequency in GHz to an energy in kelvin.
pub fn ghz_to_kelvin(ghz: f64) -> f64 {
    ghz * 1e9 * PLANCK / BOLTZMANN
}

/// Converts a field in V/cm to statvolt/cm.
pub fn v_per_cm_to_gaussian(field: f64) -> f64 {
    field / VOLTS_PER_STATVOLT
}

/// The internal unit system. There is exactly one; the type exists so callers
/// and output metadata can name it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub energy: Unit,
    pub length: Unit,
    pub time: Unit,
    pub electric_field: Unit,
    pub magnetic_field: Unit,
    /// e² in energy·length of this system (K·cm).
    pub e_squared: f64,
}

impl UnitSystem {
    pub fn canonical() -> Self {
        Self {
            energy: Unit::Kelvin,
            length: Unit::Centimeter,
            time: Unit::Second,
            electric_field: Unit::VoltPerCm,
            magnetic_field: Unit::Tesla,
            e_squared: e_squared_kelvin_cm(),
        }
    }
}

/// Units understood by [`convert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Kelvin,
    Erg,
    ElectronVolt,
    Hertz,
    Gigahertz,
    /// Angular frequency, rad/s.
    RadPerSecond,
    Centimeter,
    Meter,
    Micrometer,
    Nanometer,
    Angstrom,
    Second,
    Nanosecond,
    VoltPerCm,
    StatvoltPerCm,
    Tesla,
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    /// Energy and frequency share a dimension through h and k_B.
    Energy,
    Length,
    Time,
    ElectricField,
    MagneticField,
}

impl Unit {
    fn dimension(self) -> Dimension {
        use Unit::*;
        match self {
            Kelvin | Erg | ElectronVolt | Hertz | Gigahertz | RadPerSecond => Dimension::Energy,
            Centimeter | Meter | Micrometer | Nanometer | Angstrom => Dimension::Length,
            Second | Nanosecond => Dimension::Time,
            VoltPerCm | StatvoltPerCm => Dimension::ElectricField,
            Tesla | Gauss => Dimension::MagneticField,
        }
    }

    /// Size of one of this unit expressed in the canonical unit of its dimension.
    fn to_canonical(self) -> f64 {
        use Unit::*;
        match self {
            Kelvin => 1.0,
            Erg => 1.0 / BOLTZMANN,
            ElectronVolt => ERG_PER_EV / BOLTZMANN,
            Hertz => PLANCK / BOLTZMANN,
            Gigahertz => 1e9 * PLANCK / BOLTZMANN,
            RadPerSecond => HBAR / BOLTZMANN,
            Centimeter => 1.0,
            Meter => 100.0,
            Micrometer => 1e-4,
            Nanometer => 1e-7,
            Angstrom => 1e-8,
            Second => 1.0,
            Nanosecond => 1e-9,
            VoltPerCm => 1.0,
            StatvoltPerCm => VOLTS_PER_STATVOLT,
            Tesla => 1.0,
            Gauss => 1.0 / GAUSS_PER_TESLA,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Unit::*;
        let s = match self {
            Kelvin => "K",
            Erg => "erg",
            ElectronVolt => "eV",
            Hertz => "Hz",
            Gigahertz => "GHz",
            RadPerSecond => "rad/s",
            Centimeter => "cm",
            Meter => "m",
            Micrometer => "um",
            Nanometer => "nm",
            Angstrom => "Å",
            Second => "s",
            Nanosecond => "ns",
            VoltPerCm => "V/cm",
            StatvoltPerCm => "statV/cm",
            Tesla => "T",
            Gauss => "G",
        };
        f.write_str(s)
    }
}

/// Exact constant-factor conversion between commensurable units.
pub fn convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(Error::IncompatibleUnits { from, to });
    }
    Ok(value * (from.to_canonical() / to.to_canonical()))
}

/// Image-potential strength Λ = (ε − 1)/(4(ε + 1)).
pub fn image_strength(epsilon: f64) -> Result<f64> {
    if !(epsilon > 1.0) {
        return Err(Error::invalid(format!(
            "dielectric constant must exceed 1 for an attractive image potential, got {epsilon}"
        )));
    }
    Ok((epsilon - 1.0) / (4.0 * (epsilon + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn kelvin_to_gigahertz() {
        let one = convert(1.0, Unit::Kelvin, Unit::Gigahertz).unwrap();
        // k_B/h from the exact SI definitions: 20.836619... GHz/K
        assert!(rel(one, 20.836_619_12) < 1e-8, "{one}");
        let eight = convert(8.0, Unit::Kelvin, Unit::Gigahertz).unwrap();
        assert!((eight - 160.0).abs() / 160.0 < 0.05);
        assert_eq!(convert(0.0, Unit::Kelvin, Unit::Gigahertz).unwrap(), 0.0);
    }

    #[test]
    fn incompatible_pair_names_both_units() {
        let err = convert(1.0, Unit::Kelvin, Unit::Centimeter).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("K") && msg.contains("cm"), "{msg}");
    }

    #[test]
    fn e_squared_consistent() {
        let ks = UnitSystem::canonical().e_squared;
        assert!(rel(ks, E_SQUARED_ERG_CM / BOLTZMANN) < 1e-12);
        let via_convert = convert(E_SQUARED_ERG_CM, Unit::Erg, Unit::Kelvin).unwrap();
        assert!(rel(via_convert, ks) < 1e-12);
    }

    #[test]
    fn image_strength_values() {
        assert!((image_strength(1.057).unwrap() - 0.006_927_564).abs() < 1e-8);
        assert!((image_strength(3.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(image_strength(1.0 + 1e-9).unwrap() < 1e-9);
        assert!(image_strength(1.0).is_err());
        assert!(image_strength(0.5).is_err());
    }

    fn energy_unit() -> impl Strategy<Value = Unit> {
        prop_oneof![
            Just(Unit::Kelvin),
            Just(Unit::Erg),
            Just(Unit::ElectronVolt),
            Just(Unit::Hertz),
            Just(Unit::Gigahertz),
            Just(Unit::RadPerSecond),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(v in -1e6f64..1e6, a in energy_unit(), b in energy_unit()) {
            let there = convert(v, a, b).unwrap();
            let back = convert(there, b, a).unwrap();
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1e-300));
        }

        #[test]
        fn conversion_is_linear(x in -1e3f64..1e3, y in -1e3f64..1e3, a in energy_unit(), b in energy_unit()) {
            let (cx, cy) = (convert(x, a, b).unwrap(), convert(y, a, b).unwrap());
            let sum = convert(x + y, a, b).unwrap();
            prop_assert!((sum - (cx + cy)).abs() <= 1e-12 * (cx.abs() + cy.abs()).max(1e-300));
        }
    }
}

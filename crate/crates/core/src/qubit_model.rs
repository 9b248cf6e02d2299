// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Device geometry and electrode voltages mapped to the qubit-array
//! Hamiltonian
//!
//! H = Σ_n [ε_n s_z^n/ħ + F_n(t) s_x^n] + (1/2ħ²) Σ_{n≠m} [A_nm s_z^n s_z^m + B_nm s_-^n s_+^m].
//!
//! Operator convention: s_z has eigenvalues ±ħ/2 and s_+|↓⟩ = ħ|↑⟩. With the
//! ordered double sum, a pair contributes A_nm s_z s_z/ħ² to the diagonal and a
//! flip-flop element B_nm/2 between |↑↓⟩ and |↓↑⟩. Basis index bit n is qubit
//! n, bit value 1 meaning |↑⟩.
//!
//! ε_n and the matrix elements entering A, B and the drive coefficient are
//! evaluated at each site's own pressing field E_⊥ + c_geom·V_n/d.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrogenic::HydrogenicBasis;
use crate::quantities::{
    e_squared_kelvin_cm, kelvin_to_ghz, v_per_cm_to_gaussian, BOLTZMANN, ELECTRON_CHARGE,
    ELECTRON_MASS, HBAR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGeometry {
    /// Electrode pitch d, μm.
    pub d_um: f64,
    /// Electrode depth below the surface, μm; defaults to d.
    #[serde(default)]
    pub h_um: Option<f64>,
    /// Site positions in units of d.
    pub sites: Vec<[f64; 2]>,
    /// Global pressing field, V/cm.
    #[serde(rename = "E_perp")]
    pub e_perp: f64,
    /// Perpendicular magnetic field, T.
    #[serde(rename = "B_T")]
    pub b_t: f64,
    /// Temperature, K.
    #[serde(rename = "T_K")]
    pub t_k: f64,
    #[serde(default = "one")]
    pub c_geom: f64,
}

fn one() -> f64 {
    1.0
}

impl DeviceGeometry {
    /// A row of `n` sites at unit spacing.
    pub fn chain(n: usize, d_um: f64, e_perp: f64) -> Self {
        Self {
            d_um,
            h_um: None,
            sites: (0..n).map(|i| [i as f64, 0.0]).collect(),
            e_perp,
            b_t: 1.5,
            t_k: 0.01,
            c_geom: 1.0,
        }
    }

    pub fn pitch_cm(&self) -> f64 {
        self.d_um * 1e-4
    }

    pub fn depth_cm(&self) -> f64 {
        self.h_um.unwrap_or(self.d_um) * 1e-4
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Center-to-center distance d_nm, cm.
    pub fn distance_cm(&self, n: usize, m: usize) -> f64 {
        let (a, b) = (self.sites[n], self.sites[m]);
        (a[0] - b[0]).hypot(a[1] - b[1]) * self.pitch_cm()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_um > 0.0) || self.h_um.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::invalid("electrode pitch and depth must be positive"));
        }
        if self.sites.is_empty() {
            return Err(Error::invalid("device has no qubit sites"));
        }
        if !self.e_perp.is_finite() || !(self.b_t >= 0.0) || !(self.t_k > 0.0) || !(self.c_geom.is_finite()) {
            return Err(Error::invalid("E_perp and c_geom must be finite, B_T ≥ 0 and T_K > 0"));
        }
        let d = self.pitch_cm();
        for n in 0..self.len() {
            for m in n + 1..self.len() {
                let r = self.distance_cm(n, m);
                if r == 0.0 {
                    return Err(Error::invalid(format!("sites {n} and {m} coincide")));
                }
                if r < d * (1.0 - 1e-12) {
                    return Err(Error::invalid(format!(
                        "sites {n} and {m} are {:.3} d apart; the minimum separation is d",
                        r / d
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Pressing field at a site with electrode voltage `voltage_v`, V/cm.
pub fn site_field(geometry: &DeviceGeometry, voltage_v: f64) -> f64 {
    geometry.e_perp + geometry.c_geom * voltage_v / geometry.pitch_cm()
}

/// Qubit parameters of one site at its pressing field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteParameters {
    pub field_v_per_cm: f64,
    /// 1→2 transition energy, K.
    pub epsilon_k: f64,
    pub epsilon_ghz: f64,
    pub z11_cm: f64,
    pub z22_cm: f64,
    pub z12_cm: f64,
    /// e|⟨1|z|2⟩|/ħ in s⁻¹ per V/cm.
    pub drive_coefficient: f64,
}

impl SiteParameters {
    pub fn at_field(basis: &Arc<HydrogenicBasis>, field_v_per_cm: f64) -> Result<Self> {
        let sol = basis.solve(field_v_per_cm)?;
        let epsilon_k = sol.transition_k(1, 2);
        let z12 = sol.z_cm(1, 2);
        Ok(Self {
            field_v_per_cm,
            epsilon_k,
            epsilon_ghz: kelvin_to_ghz(epsilon_k),
            z11_cm: sol.z_cm(1, 1),
            z22_cm: sol.z_cm(2, 2),
            z12_cm: z12,
            drive_coefficient: drive_coefficient(z12),
        })
    }

    /// dε/dV in GHz per mV from the Hellmann–Feynman slope.
    pub fn tuning_ghz_per_mv(&self, geometry: &DeviceGeometry) -> f64 {
        let per_v_cm = ELECTRON_CHARGE * v_per_cm_to_gaussian(1.0) * (self.z22_cm - self.z11_cm) / BOLTZMANN;
        kelvin_to_ghz(per_v_cm) * geometry.c_geom / geometry.pitch_cm() * 1e-3
    }
}

/// e|z12|/ħ, s⁻¹ per V/cm.
pub fn drive_coefficient(z12_cm: f64) -> f64 {
    ELECTRON_CHARGE * v_per_cm_to_gaussian(1.0) * z12_cm.abs() / HBAR
}

/// (A, B) in kelvin for two sites a distance `distance_cm` apart.
pub fn pair_coupling(dz_n: f64, z12_n: f64, dz_m: f64, z12_m: f64, distance_cm: f64) -> (f64, f64) {
    let scale = e_squared_kelvin_cm() / distance_cm.powi(3);
    (scale * dz_n * dz_m, 2.0 * scale * z12_n.abs() * z12_m.abs())
}

type Matrix = Vec<Vec<f64>>;

/// Coupling matrices A_nm, B_nm in kelvin (zero diagonal).
pub fn couplings(geometry: &DeviceGeometry, sites: &[SiteParameters]) -> Result<(Matrix, Matrix)> {
    geometry.validate()?;
    if sites.len() != geometry.len() {
        return Err(Error::invalid(format!(
            "{} site parameter sets for {} sites",
            sites.len(),
            geometry.len()
        )));
    }
    let n = sites.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let (s, t) = (&sites[i], &sites[j]);
            let (aij, bij) = pair_coupling(
                s.z11_cm - s.z22_cm,
                s.z12_cm,
                t.z11_cm - t.z22_cm,
                t.z12_cm,
                geometry.distance_cm(i, j),
            );
            a[i][j] = aij;
            a[j][i] = aij;
            b[i][j] = bij;
            b[j][i] = bij;
        }
    }
    Ok((a, b))
}

/// In-plane confinement energy ħ(e²/m_e d³)^{1/2}, K.
pub fn confinement_scale(geometry: &DeviceGeometry) -> Result<f64> {
    let d = geometry.pitch_cm();
    if !(d > 0.0) {
        return Err(Error::invalid("electrode pitch must be positive"));
    }
    Ok(HBAR * (ELECTRON_CHARGE * ELECTRON_CHARGE / (ELECTRON_MASS * d.powi(3))).sqrt() / BOLTZMANN)
}

/// Assembled parameter set of the qubit array at fixed electrode voltages.
#[derive(Debug, Clone, Serialize)]
pub struct QubitArrayHamiltonian {
    pub geometry: DeviceGeometry,
    pub voltages_v: Vec<f64>,
    pub sites: Vec<SiteParameters>,
    pub a_k: Vec<Vec<f64>>,
    pub b_k: Vec<Vec<f64>>,
    pub confinement_k: f64,
    #[serde(skip)]
    basis: Arc<HydrogenicBasis>,
}

pub fn build(geometry: &DeviceGeometry, voltages_v: &[f64], basis: Arc<HydrogenicBasis>) -> Result<QubitArrayHamiltonian> {
    geometry.validate()?;
    if voltages_v.len() != geometry.len() {
        return Err(Error::invalid(format!(
            "{} voltages given for {} sites",
            voltages_v.len(),
            geometry.len()
        )));
    }
    let sites = voltages_v
        .iter()
        .map(|&v| SiteParameters::at_field(&basis, site_field(geometry, v)))
        .collect::<Result<Vec<_>>>()?;
    let (a_k, b_k) = couplings(geometry, &sites)?;
    Ok(QubitArrayHamiltonian {
        geometry: geometry.clone(),
        voltages_v: voltages_v.to_vec(),
        sites,
        a_k,
        b_k,
        confinement_k: confinement_scale(geometry)?,
        basis,
    })
}

impl QubitArrayHamiltonian {
    pub fn qubits(&self) -> usize {
        self.sites.len()
    }

    pub fn basis(&self) -> &Arc<HydrogenicBasis> {
        &self.basis
    }

    /// Same device with different electrode voltages.
    pub fn with_voltages(&self, voltages_v: &[f64]) -> Result<Self> {
        build(&self.geometry, voltages_v, Arc::clone(&self.basis))
    }

    /// Interpolation table for site `n` over voltage increments in [lo, hi].
    pub fn stark_table(&self, n: usize, lo_v: f64, hi_v: f64) -> Result<StarkTable> {
        let v0 = self.voltages_v[n];
        StarkTable::new(
            &self.basis,
            site_field(&self.geometry, v0 + lo_v),
            site_field(&self.geometry, v0 + hi_v),
            self.sites[n],
            site_field(&self.geometry, v0),
        )
    }
}

/// Site parameters on a uniform field grid, natural cubic splines in between.
#[derive(Debug, Clone)]
pub struct StarkTable {
    lo: f64,
    hi: f64,
    epsilon_k: Spline,
    dz_cm: Spline,
    z12_cm: Spline,
}

/// Nodes per table.
pub const STARK_TABLE_NODES: usize = 129;

/// Instantaneous site parameters needed by the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstantSite {
    pub epsilon_k: f64,
    /// ⟨1|z|1⟩ − ⟨2|z|2⟩, cm.
    pub dz_cm: f64,
    /// |⟨1|z|2⟩|, cm.
    pub z12_cm: f64,
}

impl StarkTable {
    /// `known` is the exact solution at `known_field`, reused when the range
    /// collapses onto it.
    fn new(
        basis: &Arc<HydrogenicBasis>,
        a: f64,
        b: f64,
        known: SiteParameters,
        known_field: f64,
    ) -> Result<Self> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let fields: Vec<f64> = if lo == hi {
            vec![lo]
        } else {
            let k = STARK_TABLE_NODES - 1;
            (0..=k).map(|i| if i == k { hi } else { lo + (hi - lo) * i as f64 / k as f64 }).collect()
        };
        let nodes = fields
            .iter()
            .map(|&f| if f == known_field { Ok(known) } else { SiteParameters::at_field(basis, f) })
            .collect::<Result<Vec<_>>>()?;
        let col = |get: fn(&SiteParameters) -> f64| Spline::natural(&nodes.iter().map(get).collect::<Vec<_>>());
        Ok(Self {
            lo,
            hi,
            epsilon_k: col(|s| s.epsilon_k),
            dz_cm: col(|s| s.z11_cm - s.z22_cm),
            z12_cm: col(|s| s.z12_cm.abs()),
        })
    }

    pub fn at(&self, field_v_per_cm: f64) -> InstantSite {
        let x = if self.hi > self.lo {
            ((field_v_per_cm - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        InstantSite {
            epsilon_k: self.epsilon_k.eval(x),
            dz_cm: self.dz_cm.eval(x),
            z12_cm: self.z12_cm.eval(x),
        }
    }
}

/// Natural cubic spline on uniform nodes over x ∈ [0, 1].
#[derive(Debug, Clone)]
struct Spline {
    y: Vec<f64>,
    /// Second derivatives with respect to the node index.
    m: Vec<f64>,
}

impl Spline {
    fn natural(y: &[f64]) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for m[i-1] + 4m[i] + m[i+1] = 6(y[i+1] - 2y[i] + y[i-1])
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
                let denom = 4.0 - c[i - 1];
                c[i] = 1.0 / denom;
                d[i] = (rhs - d[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Self { y: y.to_vec(), m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        if n == 1 {
            return self.y[0];
        }
        let s = x * (n - 1) as f64;
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        if t == 0.0 {
            return self.y[i];
        }
        if t == 1.0 {
            return self.y[i + 1];
        }
        let u = 1.0 - t;
        u * self.y[i] + t * self.y[i + 1] + ((u * u * u - u) * self.m[i] + (t * t * t - t) * self.m[i + 1]) / 6.0
    }
}

// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Vertical (z) motion of an electron above the helium surface.
//!
//! The unperturbed problem is the one-dimensional hydrogen atom: image
//! potential −Λe²/z with a hard wall at z = 0, levels E_m = −R/m² and
//! eigenfunctions u_m(z) = z·R_{m0}(z) (the l = 0 radial hydrogen functions).
//! A pressing field is added as eE_⊥z and the Hamiltonian is diagonalized in
//! the truncated basis of the lowest M unperturbed levels, with matrix
//! elements ⟨m|z|n⟩ from adaptive quadrature over the analytic functions.
//!
//! Internally lengths are in units of r_B and energies in units of R, so the
//! unperturbed matrix is −δ_mn/m² + f·⟨m|z|n⟩ with f = eE_⊥r_B/R.
//!
//! Sign convention: E_⊥ > 0 presses the electron toward the surface and raises
//! every level by eE_⊥⟨z⟩, more for the extended excited states, so the 1→2
//! transition frequency grows with E_⊥.
//!
//! The quoted value Λ ≅ 0.01 for helium is a rounding; ε = 1.057 gives
//! Λ = 0.00693, which is what reproduces R ≈ 7.6 K and r_B ≈ 76 Å. This module
//! always works from the formula.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::quantities::{
    image_strength, kelvin_to_ghz, v_per_cm_to_gaussian, BOLTZMANN, ELECTRON_CHARGE,
    ELECTRON_MASS, HBAR, HELIUM_DIELECTRIC,
};

/// Extra basis states used for the M vs M+5 convergence check.
pub const CONVERGENCE_PADDING: usize = 5;
/// Largest tolerated change of E_1, E_2 (in units of R) between M and M+5.
pub const CONVERGENCE_LIMIT: f64 = 1e-4;

/// Effective Rydberg energy and Bohr radius for image strength Λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RydbergScales {
    /// R = Λ²e⁴m_e/2ħ², kelvin.
    pub rydberg_k: f64,
    /// r_B = ħ²/(m_e e²Λ), cm.
    pub bohr_radius_cm: f64,
}

pub fn rydberg_scales(lambda: f64) -> Result<RydbergScales> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("image strength must be positive, got {lambda}")));
    }
    let e2 = ELECTRON_CHARGE * ELECTRON_CHARGE;
    let hydrogen_rydberg_erg = e2 * e2 * ELECTRON_MASS / (2.0 * HBAR * HBAR);
    let hydrogen_bohr_cm = HBAR * HBAR / (ELECTRON_MASS * e2);
    Ok(RydbergScales {
        rydberg_k: lambda * lambda * hydrogen_rydberg_erg / BOLTZMANN,
        bohr_radius_cm: hydrogen_bohr_cm / lambda,
    })
}

/// Sampling grid for wavefunction output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    /// Upper end of the grid; defaults to 40·M·r_B.
    pub z_max_cm: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 4000,
            z_max_cm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydrogenicBasisSpec {
    /// Image strength Λ.
    pub lambda: f64,
    /// Number M of unperturbed levels kept.
    pub basis_size: usize,
    pub grid: GridSpec,
    pub quadrature: QuadratureRule,
}

impl HydrogenicBasisSpec {
    pub fn new(lambda: f64, basis_size: usize) -> Self {
        Self {
            lambda,
            basis_size,
            grid: GridSpec::default(),
            quadrature: QuadratureRule::default(),
        }
    }

    /// Liquid ⁴He (ε = 1.057) with the default M = 20.
    pub fn helium() -> Self {
        let lambda = image_strength(HELIUM_DIELECTRIC).expect("helium dielectric constant exceeds 1");
        Self::new(lambda, 20)
    }

    fn validate(&self) -> Result<()> {
        if self.basis_size < 3 {
            return Err(Error::invalid(format!(
                "basis size must be at least 3, got {}",
                self.basis_size
            )));
        }
        if self.grid.points < 2 {
            return Err(Error::invalid("wavefunction grid needs at least 2 points"));
        }
        if let Some(z) = self.grid.z_max_cm {
            if !(z > 0.0) {
                return Err(Error::invalid(format!("grid z_max must be positive, got {z}")));
            }
        }
        Ok(())
    }
}

/// Generalized Laguerre polynomial L^(1)_k(x) by three-term recurrence.
fn laguerre1(k: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 2.0 - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 2.0 - x) * cur - (jf + 1.0) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Unperturbed orbital u_n at reduced height z/r_B, normalized so that
/// ∫u_n² d(z/r_B) = 1.
pub fn orbital(n: usize, z: f64) -> f64 {
    let nf = n as f64;
    2.0 * z / nf.powf(2.5) * (-z / nf).exp() * laguerre1(n - 1, 2.0 * z / nf)
}

/// Upper quadrature limit (reduced units) beyond which u_m·u_n is below ~e^-80
/// of its peak.
fn quadrature_cutoff(m: usize, n: usize) -> f64 {
    let k = m.max(n) as f64;
    k * (2.0 * k + 50.0)
}

/// Precomputed unperturbed basis: energies and ⟨m|z|n⟩ for the M + 5 lowest
/// levels.
#[derive(Debug, Clone)]
pub struct HydrogenicBasis {
    spec: HydrogenicBasisSpec,
    scales: RydbergScales,
    /// ⟨m|z|n⟩ / r_B over the padded basis.
    z_reduced: DMatrix<f64>,
    /// ⟨1|z²|1⟩ / r_B².
    z2_ground_reduced: f64,
}

impl HydrogenicBasis {
    pub fn new(spec: HydrogenicBasisSpec) -> Result<Self> {
        spec.validate()?;
        let scales = rydberg_scales(spec.lambda)?;
        let size = spec.basis_size + CONVERGENCE_PADDING;
        let mut z = DMatrix::zeros(size, size);
        for m in 1..=size {
            for n in m..=size {
                let value = spec.quadrature.integrate(
                    |x| orbital(m, x) * orbital(n, x) * x,
                    0.0,
                    quadrature_cutoff(m, n),
                )?;
                z[(m - 1, n - 1)] = value;
                z[(n - 1, m - 1)] = value;
            }
        }
        let z2_ground_reduced = spec.quadrature.integrate(
            |x| orbital(1, x).powi(2) * x * x,
            0.0,
            quadrature_cutoff(1, 1),
        )?;
        Ok(Self {
            spec,
            scales,
            z_reduced: z,
            z2_ground_reduced,
        })
    }

    /// Basis for the default helium spec, computed once per process.
    pub fn shared_helium() -> Arc<Self> {
        static SHARED: OnceLock<Arc<HydrogenicBasis>> = OnceLock::new();
        SHARED
            .get_or_init(|| {
                Arc::new(
                    HydrogenicBasis::new(HydrogenicBasisSpec::helium())
                        .expect("default helium basis converges"),
                )
            })
            .clone()
    }

    pub fn spec(&self) -> &HydrogenicBasisSpec {
        &self.spec
    }

    pub fn scales(&self) -> RydbergScales {
        self.scales
    }

    pub fn size(&self) -> usize {
        self.spec.basis_size
    }

    /// Unperturbed ⟨m|z|n⟩ in cm (1-based, up to M + 5).
    pub fn unperturbed_z_cm(&self, m: usize, n: usize) -> f64 {
        self.z_reduced[(m - 1, n - 1)] * self.scales.bohr_radius_cm
    }

    /// Unperturbed ⟨1|z²|1⟩ in cm².
    pub fn ground_z_squared_cm2(&self) -> f64 {
        self.z2_ground_reduced * self.scales.bohr_radius_cm.powi(2)
    }

    /// Dimensionless field f = eE_⊥r_B/R.
    pub fn reduced_field(&self, field_v_per_cm: f64) -> f64 {
        ELECTRON_CHARGE * v_per_cm_to_gaussian(field_v_per_cm) * self.scales.bohr_radius_cm
            / (self.scales.rydberg_k * BOLTZMANN)
    }

    fn hamiltonian(&self, size: usize, f: f64) -> DMatrix<f64> {
        DMatrix::from_fn(size, size, |i, j| {
            let diag = if i == j { -1.0 / ((i + 1) as f64).powi(2) } else { 0.0 };
            diag + f * self.z_reduced[(i, j)]
        })
    }

    /// Sorted eigenpairs of the size×size truncated Hamiltonian, reduced units.
    fn diagonalize(&self, size: usize, f: f64) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.hamiltonian(size, f));
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = DMatrix::zeros(size, size);
        for (col, &k) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            // Phase: positive overlap with the unperturbed state of the same index,
            // falling back to the dominant component.
            let anchor = if v[col].abs() > 1e-3 {
                v[col]
            } else {
                v.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc })
            };
            let sign = if anchor < 0.0 { -1.0 } else { 1.0 };
            vectors.set_column(col, &(v * sign));
        }
        (values, vectors)
    }

    /// Stark-shifted levels at `field_v_per_cm` with convergence and binding checks.
    pub fn solve(self: &Arc<Self>, field_v_per_cm: f64) -> Result<HydrogenicSolution> {
        if !field_v_per_cm.is_finite() {
            return Err(Error::invalid("pressing field must be finite"));
        }
        let m = self.size();
        let f = self.reduced_field(field_v_per_cm);
        let (values, vectors) = self.diagonalize(m, f);
        let (padded, _) = self.diagonalize(m + CONVERGENCE_PADDING, f);
        for level in 0..2 {
            let shift = (values[level] - padded[level]).abs();
            if shift > CONVERGENCE_LIMIT {
                return Err(Error::BasisNotConverged {
                    field_v_per_cm,
                    level: level + 1,
                    shift,
                    limit: CONVERGENCE_LIMIT,
                });
            }
            let col = vectors.column(level);
            let dominant = col.iamax();
            if dominant != level {
                return Err(Error::NotBinding {
                    field_v_per_cm,
                    reason: format!(
                        "level {} is dominated by unperturbed state {} (weight {:.3})",
                        level + 1,
                        dominant + 1,
                        col[dominant].powi(2)
                    ),
                });
            }
        }
        let z_block = self.z_reduced.view((0, 0), (m, m));
        let z_stark = vectors.transpose() * z_block * &vectors * self.scales.bohr_radius_cm;
        Ok(HydrogenicSolution {
            basis: Arc::clone(self),
            field_v_per_cm,
            energies_k: values.iter().map(|e| e * self.scales.rydberg_k).collect(),
            vectors,
            z_cm: z_stark,
        })
    }

    /// Energy of level m (kelvin) to second order in the field, from the
    /// unperturbed basis. Stays tied to level m even where the truncated
    /// diagonalization stops being meaningful (outward fields).
    pub fn second_order_energy_k(&self, m: usize, field_v_per_cm: f64) -> f64 {
        let f = self.reduced_field(field_v_per_cm);
        let size = self.size();
        let em = -1.0 / (m as f64).powi(2);
        let mut second = 0.0;
        for n in 1..=size {
            if n != m {
                let en = -1.0 / (n as f64).powi(2);
                second += self.z_reduced[(m - 1, n - 1)].powi(2) / (em - en);
            }
        }
        (em + f * self.z_reduced[(m - 1, m - 1)] + f * f * second) * self.scales.rydberg_k
    }

    /// Lowest two level energies (kelvin) of the M-state truncation, with no
    /// convergence check. Used for finite differences.
    fn qubit_levels_k(&self, field_v_per_cm: f64) -> [f64; 2] {
        let (values, _) = self.diagonalize(self.size(), self.reduced_field(field_v_per_cm));
        [values[0] * self.scales.rydberg_k, values[1] * self.scales.rydberg_k]
    }
}

/// Free-function form of [`HydrogenicBasis::solve`].
pub fn solve(basis: &Arc<HydrogenicBasis>, field_v_per_cm: f64) -> Result<HydrogenicSolution> {
    basis.solve(field_v_per_cm)
}

/// Stark-shifted levels and matrix elements at one pressing field.
#[derive(Debug, Clone)]
pub struct HydrogenicSolution {
    basis: Arc<HydrogenicBasis>,
    field_v_per_cm: f64,
    energies_k: Vec<f64>,
    /// Columns are the Stark states expanded in the unperturbed basis.
    vectors: DMatrix<f64>,
    /// ⟨m|z|n⟩ between Stark states, cm.
    z_cm: DMatrix<f64>,
}

/// Wavefunctions sampled on the output grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WavefunctionSamples {
    pub z_cm: Vec<f64>,
    /// psi[m-1][i] = ψ_m(z_i) in cm^(-1/2).
    pub psi: Vec<Vec<f64>>,
}

impl HydrogenicSolution {
    pub fn basis(&self) -> &Arc<HydrogenicBasis> {
        &self.basis
    }

    pub fn field_v_per_cm(&self) -> f64 {
        self.field_v_per_cm
    }

    pub fn levels(&self) -> usize {
        self.energies_k.len()
    }

    /// All level energies in kelvin, ascending.
    pub fn energies_k(&self) -> &[f64] {
        &self.energies_k
    }

    /// Energy of level m (1-based) in kelvin.
    pub fn energy_k(&self, m: usize) -> f64 {
        self.energies_k[m - 1]
    }

    /// E_n − E_m in kelvin.
    pub fn transition_k(&self, m: usize, n: usize) -> f64 {
        self.energy_k(n) - self.energy_k(m)
    }

    pub fn transition_ghz(&self, m: usize, n: usize) -> f64 {
        kelvin_to_ghz(self.transition_k(m, n))
    }

    /// ⟨m|z|n⟩ between Stark states, cm.
    pub fn z_cm(&self, m: usize, n: usize) -> f64 {
        self.z_cm[(m - 1, n - 1)]
    }

    pub fn z_matrix_cm(&self) -> &DMatrix<f64> {
        &self.z_cm
    }

    /// Hellmann–Feynman slope dν_m/dE_⊥ = e⟨m|z|m⟩/h in GHz per V/cm.
    pub fn stark_slope_ghz_per_v_cm(&self, m: usize) -> f64 {
        let de_k = ELECTRON_CHARGE * v_per_cm_to_gaussian(1.0) * self.z_cm(m, m) / BOLTZMANN;
        kelvin_to_ghz(de_k)
    }

    /// ψ_m(z) in cm^(-1/2).
    pub fn wavefunction(&self, m: usize, z_cm: f64) -> f64 {
        let r_b = self.basis.scales.bohr_radius_cm;
        let x = z_cm / r_b;
        let col = self.vectors.column(m - 1);
        let sum: f64 = col.iter().enumerate().map(|(k, c)| c * orbital(k + 1, x)).sum();
        sum / r_b.sqrt()
    }

    /// ∫ψ_m² dz over (0, ∞), by the basis quadrature rule.
    pub fn norm(&self, m: usize) -> Result<f64> {
        let r_b = self.basis.scales.bohr_radius_cm;
        let size = self.levels();
        self.basis.spec.quadrature.integrate(
            |x| {
                let v = self.wavefunction(m, x * r_b);
                v * v * r_b
            },
            0.0,
            quadrature_cutoff(size, size),
        )
    }

    pub fn sample_wavefunctions(&self) -> WavefunctionSamples {
        let spec = &self.basis.spec;
        let z_max = spec
            .grid
            .z_max_cm
            .unwrap_or(40.0 * spec.basis_size as f64 * self.basis.scales.bohr_radius_cm);
        let n = spec.grid.points;
        let z_cm: Vec<f64> = (1..=n).map(|i| z_max * i as f64 / n as f64).collect();
        let psi = (1..=self.levels())
            .map(|m| z_cm.iter().map(|&z| self.wavefunction(m, z)).collect())
            .collect();
        WavefunctionSamples { z_cm, psi }
    }
}

/// First-order Stark rate dν_m/dE_⊥ at zero field in GHz per V/cm, from a
/// symmetric finite difference refined until two successive halvings agree;
/// the Richardson-extrapolated value is returned.
pub fn stark_rate(basis: &HydrogenicBasis, m: usize) -> Result<f64> {
    if !(1..=2).contains(&m) {
        return Err(Error::invalid(format!("stark_rate is defined for the qubit levels 1 and 2, got {m}")));
    }
    let derivative = |h: f64| {
        let up = basis.qubit_levels_k(h)[m - 1];
        let down = basis.qubit_levels_k(-h)[m - 1];
        kelvin_to_ghz((up - down) / (2.0 * h))
    };
    let mut h = 1.0;
    let mut coarse = derivative(h);
    for _ in 0..12 {
        h *= 0.5;
        let fine = derivative(h);
        let richardson = (4.0 * fine - coarse) / 3.0;
        if (fine - coarse).abs() <= 1e-6 * richardson.abs() {
            return Ok(richardson);
        }
        coarse = fine;
    }
    Err(Error::DerivativeNotConverged {
        previous: coarse,
        last: derivative(h),
    })
}

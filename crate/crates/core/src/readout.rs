// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! State-selective tunneling readout.
//!
//! Reversing the vertical field tilts the image potential into a barrier,
//! V(z) = −Λe²/z − eE_+z. In units of R and r_B this is v(z) = −2/z − f z, and
//! the WKB escape rate of level m is ν_m·exp(−2∫√(v − ε_m) dz) between the
//! turning points, with attempt frequency ν_m = |E_m|/ħ. Level energies in the
//! reversed field are taken to second order in f.
//!
//! The turning points solve f z² + ε z + 2 = 0, so v − ε = f(z − z₁)(z₂ − z)/z
//! and the substitution z = z₁ + (z₂ − z₁)sin²θ leaves a smooth integrand.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, EvolutionSpec, RegisterState, Tunneling};
use crate::error::{Error, Result};
use crate::hydrogenic::HydrogenicBasis;
use crate::pulse_control::PulseSchedule;
use crate::quadrature::QuadratureRule;
use crate::quantities::kelvin_to_rad_per_sec;
use crate::qubit_model::{DeviceGeometry, QubitArrayHamiltonian};
use crate::serialization::{Cell, CsvTable};

pub const DEFAULT_PIXEL_CM: f64 = 1e-4;
/// Expected number of escapes demanded of the excited state during the wait.
pub const ESCAPE_COUNT: f64 = 5.0;
pub const GENERATOR: &str = "ChaCha20 (rand_chacha), stream = shot index";

/// WKB barrier of one level in the reversed field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub level: usize,
    pub field_v_per_cm: f64,
    pub energy_k: f64,
    /// ν_m = |E_m|/ħ, s⁻¹.
    pub attempt_frequency: f64,
    /// 2∫√(2m(V − E))/ħ dz; zero over the barrier.
    pub exponent: f64,
    pub turning_points_cm: Option<[f64; 2]>,
    pub over_barrier: bool,
}

impl Barrier {
    pub fn ln_rate(&self) -> f64 {
        self.attempt_frequency.ln() - self.exponent
    }

    pub fn rate(&self) -> f64 {
        self.ln_rate().exp()
    }
}

fn default_rule() -> QuadratureRule {
    QuadratureRule::GaussKronrod15 {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 2000,
    }
}

/// WKB barrier for level `m` at reverse field `e_plus` (V/cm, > 0).
pub fn barrier(basis: &HydrogenicBasis, m: usize, e_plus: f64, rule: &QuadratureRule) -> Result<Barrier> {
    if !(e_plus > 0.0 && e_plus.is_finite()) {
        return Err(Error::invalid(format!("reverse field must be positive, got {e_plus} V/cm")));
    }
    if m == 0 || m > basis.size() {
        return Err(Error::invalid(format!("level {m} outside the basis")));
    }
    let scales = basis.scales();
    let f = basis.reduced_field(e_plus);
    let energy_k = basis.second_order_energy_k(m, -e_plus);
    let eps = energy_k / scales.rydberg_k;
    let malformed = |reason: &str| Error::MalformedBarrier {
        level: m,
        field_v_per_cm: e_plus,
        reason: reason.to_owned(),
    };
    if !(eps < 0.0) {
        return Err(malformed("level energy is not negative"));
    }
    let attempt_frequency = kelvin_to_rad_per_sec(energy_k.abs());
    let disc = eps * eps - 8.0 * f;
    if disc <= 0.0 {
        return Ok(Barrier {
            level: m,
            field_v_per_cm: e_plus,
            energy_k,
            attempt_frequency,
            exponent: 0.0,
            turning_points_cm: None,
            over_barrier: true,
        });
    }
    let root = disc.sqrt();
    let z1 = (-eps - root) / (2.0 * f);
    let z2 = (-eps + root) / (2.0 * f);
    if !(z1 > 0.0 && z2 > z1) {
        return Err(malformed("turning points are not ordered on z > 0"));
    }
    let width = z2 - z1;
    let integrand = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let z = z1 + width * s * s;
        (f / z).sqrt() * width * width * 2.0 * s * s * c * c
    };
    let integral = rule.integrate(integrand, 0.0, std::f64::consts::FRAC_PI_2)?;
    Ok(Barrier {
        level: m,
        field_v_per_cm: e_plus,
        energy_k,
        attempt_frequency,
        exponent: 2.0 * integral,
        turning_points_cm: Some([z1 * scales.bohr_radius_cm, z2 * scales.bohr_radius_cm]),
        over_barrier: false,
    })
}

/// Escape rate of level `m` at reverse field `e_plus`, s⁻¹.
pub fn tunnel_rate(basis: &HydrogenicBasis, m: usize, e_plus: f64) -> Result<f64> {
    Ok(barrier(basis, m, e_plus, &default_rule())?.rate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutPlan {
    #[serde(rename = "E_plus_V_per_cm")]
    pub e_plus_v_per_cm: f64,
    pub wait_s: f64,
    pub requested_selectivity: f64,
    /// 1/rate, s (may overflow to infinity for the ground state).
    pub t1_s: f64,
    pub t2_s: f64,
    /// Natural logs of the two escape rates.
    pub ln_rates: [f64; 2],
    pub barriers: [Barrier; 2],
    pub pixel_cm: f64,
    /// Detector pixel of each qubit site.
    #[serde(default)]
    pub site_pixels: Vec<[i64; 2]>,
}

impl ReadoutPlan {
    /// t_1/t_2 computed from the log rates (finite even when t_1 is not).
    pub fn ln_selectivity(&self) -> f64 {
        self.ln_rates[1] - self.ln_rates[0]
    }

    /// Tunneling time fed to the loss term of the dynamics.
    pub fn t_up_s(&self) -> f64 {
        self.t2_s
    }

    /// Assigns sites to pixels: floor(position / pixel) in each direction.
    pub fn map_sites(mut self, geometry: &DeviceGeometry, pixel_cm: f64) -> Result<Self> {
        if !(pixel_cm > 0.0) {
            return Err(Error::invalid("pixel size must be positive"));
        }
        let d = geometry.pitch_cm();
        self.pixel_cm = pixel_cm;
        self.site_pixels = geometry
            .sites
            .iter()
            .map(|p| [(p[0] * d / pixel_cm).floor() as i64, (p[1] * d / pixel_cm).floor() as i64])
            .collect();
        Ok(self)
    }
}

/// Smallest reverse field at which the excited state escapes `ESCAPE_COUNT`
/// times per wait, checked against the ground-state bound wait·rate₁ ≤ 5/selectivity.
pub fn plan(basis: &HydrogenicBasis, wait_s: f64, selectivity: f64) -> Result<ReadoutPlan> {
    if !(wait_s > 0.0 && wait_s.is_finite()) {
        return Err(Error::invalid("readout wait must be positive"));
    }
    if !(selectivity >= 1.0) {
        return Err(Error::invalid(format!("selectivity must be at least 1, got {selectivity}")));
    }
    let rule = default_rule();
    let target = (ESCAPE_COUNT / wait_s).ln();
    let excited = |e: f64| barrier(basis, 2, e, &rule);
    // bracket: grow the upper field until level 2 escapes fast enough
    let mut lo = 1e-3;
    let mut hi = 1.0;
    loop {
        let b = excited(hi)?;
        if b.ln_rate() >= target {
            break;
        }
        if b.over_barrier || hi > 1e4 {
            let b1 = barrier(basis, 1, hi, &rule)?;
            return Err(Error::NoReadoutWindow {
                wait_s,
                selectivity,
                best_selectivity: (b.ln_rate() - b1.ln_rate()).exp(),
                best_field_v_per_cm: hi,
            });
        }
        lo = hi;
        hi *= 2.0;
    }
    if excited(lo)?.ln_rate() >= target {
        return Err(Error::RootNotFound(format!("excited-state rate already exceeds the target at {lo} V/cm")));
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if excited(mid)?.ln_rate() >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let b2 = excited(hi)?;
    let b1 = barrier(basis, 1, hi, &rule)?;
    let bound = (ESCAPE_COUNT / selectivity / wait_s).ln();
    if b1.ln_rate() > bound {
        return Err(Error::NoReadoutWindow {
            wait_s,
            selectivity,
            best_selectivity: (target - b1.ln_rate()).exp(),
            best_field_v_per_cm: hi,
        });
    }
    let plan = ReadoutPlan {
        e_plus_v_per_cm: hi,
        wait_s,
        requested_selectivity: selectivity,
        t1_s: (-b1.ln_rate()).exp(),
        t2_s: (-b2.ln_rate()).exp(),
        ln_rates: [b1.ln_rate(), b2.ln_rate()],
        barriers: [b1, b2],
        pixel_cm: DEFAULT_PIXEL_CM,
        site_pixels: Vec::new(),
    };
    debug_assert!(plan.t2_s < plan.t1_s);
    Ok(plan)
}

/// Survival of each site after the wait, from the trace of runs whose loss
/// acts on that site alone. The schedule must extend to t_f + wait.
pub fn site_survival(
    hamiltonian: &QubitArrayHamiltonian,
    schedule: &PulseSchedule,
    initial: &RegisterState,
    spec: &EvolutionSpec,
    plan: &ReadoutPlan,
    t_f_s: f64,
) -> Result<Vec<f64>> {
    let rho = initial.to_density()?;
    let t_end = t_f_s + plan.wait_s;
    (0..hamiltonian.qubits())
        .map(|n| {
            let s = EvolutionSpec {
                sample_times: vec![t_end],
                snapshot_times: None,
                tunneling: Some(Tunneling {
                    t_f_s,
                    t_up_s: plan.t_up_s(),
                    sites: Some(vec![n]),
                }),
                ..spec.clone()
            };
            let out = evolve(hamiltonian, schedule, &rho, &s)?;
            Ok(*out.norm.last().expect("one sample"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Tunneled,
    Retained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCount {
    pub pixel_x: i64,
    pub pixel_y: i64,
    pub counts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot: u64,
    pub seed: u64,
    pub outcomes: Vec<Outcome>,
    pub histogram: Vec<PixelCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSample {
    pub generator: String,
    pub seed: u64,
    pub shots: u64,
    pub survival: Vec<f64>,
    pub tunneled_per_site: Vec<u64>,
    pub image: Vec<PixelCount>,
    pub records: Vec<ShotRecord>,
}

impl ShotSample {
    pub fn tunneled_fraction(&self, site: usize) -> f64 {
        self.tunneled_per_site[site] as f64 / self.shots as f64
    }

    /// pixel_x, pixel_y, counts.
    pub fn image_csv(&self) -> String {
        let mut t = CsvTable::new(&["pixel_x", "pixel_y", "counts"]);
        for p in &self.image {
            t.push(&[Cell::Int(p.pixel_x), Cell::Int(p.pixel_y), Cell::Int(p.counts as i64)]);
        }
        t.into_string()
    }
}

fn histogram(counts: BTreeMap<[i64; 2], u64>) -> Vec<PixelCount> {
    counts
        .into_iter()
        .map(|([x, y], c)| PixelCount {
            pixel_x: x,
            pixel_y: y,
            counts: c,
        })
        .collect()
}

/// Independent Bernoulli draws per site and shot with p(tunneled) = 1 − survival.
/// Shot k draws from ChaCha20 seeded by `seed` on stream k, so the result
/// does not depend on thread count.
pub fn sample_shots(survival: &[f64], plan: &ReadoutPlan, shots: u64, seed: u64) -> Result<ShotSample> {
    if let Some(p) = survival.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("survival probability {p} outside [0, 1]")));
    }
    if survival.len() != plan.site_pixels.len() {
        return Err(Error::invalid(format!(
            "{} survival values for {} mapped sites",
            survival.len(),
            plan.site_pixels.len()
        )));
    }
    let records: Vec<ShotRecord> = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(shot);
            let outcomes: Vec<Outcome> = survival
                .iter()
                .map(|&s| {
                    if rng.random::<f64>() < 1.0 - s {
                        Outcome::Tunneled
                    } else {
                        Outcome::Retained
                    }
                })
                .collect();
            let mut counts = BTreeMap::new();
            for (o, px) in outcomes.iter().zip(&plan.site_pixels) {
                if *o == Outcome::Tunneled {
                    *counts.entry(*px).or_insert(0) += 1;
                }
            }
            ShotRecord {
                shot,
                seed,
                outcomes,
                histogram: histogram(counts),
            }
        })
        .collect();
    let mut tunneled = vec![0u64; survival.len()];
    let mut image = BTreeMap::new();
    for r in &records {
        for (n, o) in r.outcomes.iter().enumerate() {
            if *o == Outcome::Tunneled {
                tunneled[n] += 1;
            }
        }
        for p in &r.histogram {
            *image.entry([p.pixel_x, p.pixel_y]).or_insert(0) += p.counts;
        }
    }
    Ok(ShotSample {
        generator: GENERATOR.to_owned(),
        seed,
        shots,
        survival: survival.to_vec(),
        tunneled_per_site: tunneled,
        image: histogram(image),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn he() -> std::sync::Arc<HydrogenicBasis> {
        HydrogenicBasis::shared_helium()
    }

    #[test]
    fn excited_state_escapes_faster() {
        for e in [3.0, 5.0, 7.0] {
            let r1 = barrier(&he(), 1, e, &default_rule()).unwrap();
            let r2 = barrier(&he(), 2, e, &default_rule()).unwrap();
            assert!(r2.ln_rate() > r1.ln_rate());
            assert!(!r1.over_barrier && !r2.over_barrier);
        }
    }

    #[test]
    fn weak_field_is_bound() {
        let b = barrier(&he(), 2, 0.05, &default_rule()).unwrap();
        assert!(b.rate() < 1e-300);
    }

    #[test]
    fn strong_field_is_over_barrier() {
        let b = barrier(&he(), 2, 30.0, &default_rule()).unwrap();
        assert!(b.over_barrier);
        assert!((b.rate() / b.attempt_frequency - 1.0).abs() < 1e-12);
        assert!(barrier(&he(), 2, -1.0, &default_rule()).is_err());
    }

    #[test]
    fn selectivity_one_is_trivial() {
        let p = plan(&he(), 1e-6, 1.0).unwrap();
        assert!(p.t2_s <= 1e-6 / ESCAPE_COUNT * (1.0 + 1e-9));
        assert!(p.t2_s < p.t1_s);
    }

    #[test]
    fn unreachable_wait_reports_frontier() {
        // faster than the attempt frequency allows
        let err = plan(&he(), 1e-15, 10.0).unwrap_err();
        assert!(matches!(err, Error::NoReadoutWindow { .. }), "{err}");
    }

    #[test]
    fn pixels_merge_close_sites() {
        let g = DeviceGeometry::chain(2, 0.5, 0.0);
        let p = plan(&he(), 1e-6, 10.0).unwrap().map_sites(&g, 1e-4).unwrap();
        assert_eq!(p.site_pixels, vec![[0, 0], [0, 0]]);
        let s = sample_shots(&[0.0, 0.0], &p, 20, 3).unwrap();
        assert_eq!(s.image, vec![PixelCount { pixel_x: 0, pixel_y: 0, counts: 40 }]);
        assert!(s.records.iter().all(|r| r.outcomes == vec![Outcome::Tunneled; 2]));
    }

    #[test]
    fn histogram_totals_match_tunneled() {
        let g = DeviceGeometry::chain(3, 1.5, 0.0);
        let p = plan(&he(), 1e-6, 10.0).unwrap().map_sites(&g, 1e-4).unwrap();
        let s = sample_shots(&[0.2, 0.5, 0.9], &p, 500, 11).unwrap();
        for r in &s.records {
            let t = r.outcomes.iter().filter(|o| **o == Outcome::Tunneled).count() as u64;
            assert_eq!(r.histogram.iter().map(|p| p.counts).sum::<u64>(), t);
        }
        assert_eq!(s.image.len(), 3);
        assert!(s.image_csv().starts_with("pixel_x,pixel_y,counts\n"));
    }

    #[test]
    fn bad_survival_rejected() {
        let g = DeviceGeometry::chain(1, 0.5, 0.0);
        let p = plan(&he(), 1e-6, 10.0).unwrap().map_sites(&g, 1e-4).unwrap();
        assert!(sample_shots(&[1.5], &p, 1, 0).is_err());
        assert!(sample_shots(&[0.5, 0.5], &p, 1, 0).is_err());
    }
}

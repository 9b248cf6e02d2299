// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

//! Time evolution of the qubit register.
//!
//! With the operator convention of [`crate::qubit_model`] the Hamiltonian in
//! angular-frequency units is
//!
//! H/ħ = Σ_n ω_n σ_z^n/2 + Σ_{n<m} [a_nm σ_z^n σ_z^m/4 + b_nm (σ_+^n σ_-^m + h.c.)] + Σ_n (c_n σ_+^n + h.c.)
//!
//! with ω_n = ε_n/ħ, a_nm = A_nm/ħ, b_nm = B_nm/2ħ, all evaluated at each
//! site's instantaneous field. The microwave couples through the dipole
//! e·E_RF(t)·z, so in the lab frame c_n = g_n E_RF(t) with g_n = e|z12|/ħ.
//! In the rotating frame at ω_ref the diagonal becomes the detuning
//! ω_n − ω_ref and c_n = (g_n/2)·Σ amp·env·e^{−i((ω−ω_ref)t+φ)}, counter-rotating
//! terms dropped; a resonant drive of amplitude E then Rabi-flips at g_n E.
//!
//! State vectors are propagated with a fourth-order commutator-free Magnus
//! scheme whose exponentials are evaluated in a Lanczos basis, so every step
//! is unitary to rounding. Step size is controlled by step doubling. Density
//! matrices are integrated with the embedded Dormand–Prince 5(4) pair, which
//! conserves the trace of the linear generator to rounding.
//!
//! Steps never straddle a schedule breakpoint, sample time or the tunneling
//! onset; stage evaluations at the right end of a step use left limits.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::decoherence::DecoherenceBudget;
use crate::error::{Error, Result};
use crate::pulse_control::{PulseSchedule, Side};
use crate::quantities::kelvin_to_rad_per_sec;
use crate::qubit_model::{drive_coefficient, pair_coupling, site_field, InstantSite, QubitArrayHamiltonian, StarkTable};
use crate::serialization::{self, CsvTable};

pub type C64 = Complex<f64>;

pub const MAX_STATE_VECTOR_QUBITS: usize = 16;
pub const MAX_DENSITY_MATRIX_QUBITS: usize = 8;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

const KRYLOV_MAX: usize = 40;

/// Register state over the 2^N basis; index bit n is qubit n (1 = |↑⟩).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RegisterState {
    StateVector { qubits: usize, amplitudes: Vec<C64> },
    /// Row-major 2^N × 2^N matrix.
    DensityMatrix { qubits: usize, matrix: Vec<C64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    StateVector,
    DensityMatrix,
}

fn check_qubits(mode: Mode, qubits: usize) -> Result<()> {
    let limit = match mode {
        Mode::StateVector => MAX_STATE_VECTOR_QUBITS,
        Mode::DensityMatrix => MAX_DENSITY_MATRIX_QUBITS,
    };
    if qubits == 0 || qubits > limit {
        return Err(Error::TooManyQubits {
            what: match mode {
                Mode::StateVector => "state-vector mode",
                Mode::DensityMatrix => "density-matrix mode",
            },
            qubits,
            limit,
        });
    }
    Ok(())
}

impl RegisterState {
    pub fn basis_state(qubits: usize, index: usize) -> Result<Self> {
        check_qubits(Mode::StateVector, qubits)?;
        let dim = 1usize << qubits;
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for {qubits} qubits")));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(RegisterState::StateVector { qubits, amplitudes })
    }

    /// Product state from per-qubit flags (`true` = |↑⟩).
    pub fn from_bits(up: &[bool]) -> Result<Self> {
        let index = up.iter().enumerate().fold(0, |acc, (n, &u)| acc | ((u as usize) << n));
        Self::basis_state(up.len(), index)
    }

    pub fn from_amplitudes(qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_qubits(Mode::StateVector, qubits)?;
        if amplitudes.len() != 1 << qubits {
            return Err(Error::invalid("amplitude count must be 2^N"));
        }
        Ok(RegisterState::StateVector { qubits, amplitudes })
    }

    /// |ψ⟩⟨ψ| (identity for density matrices).
    pub fn to_density(&self) -> Result<Self> {
        match self {
            RegisterState::StateVector { qubits, amplitudes } => {
                check_qubits(Mode::DensityMatrix, *qubits)?;
                let dim = amplitudes.len();
                let mut matrix = vec![C64::new(0.0, 0.0); dim * dim];
                for i in 0..dim {
                    for j in 0..dim {
                        matrix[i * dim + j] = amplitudes[i] * amplitudes[j].conj();
                    }
                }
                Ok(RegisterState::DensityMatrix { qubits: *qubits, matrix })
            }
            d => Ok(d.clone()),
        }
    }

    pub fn qubits(&self) -> usize {
        match self {
            RegisterState::StateVector { qubits, .. } | RegisterState::DensityMatrix { qubits, .. } => *qubits,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            RegisterState::StateVector { .. } => Mode::StateVector,
            RegisterState::DensityMatrix { .. } => Mode::DensityMatrix,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits()
    }

    pub fn populations(&self) -> Vec<f64> {
        match self {
            RegisterState::StateVector { amplitudes, .. } => amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            RegisterState::DensityMatrix { matrix, .. } => {
                let dim = self.dim();
                (0..dim).map(|i| matrix[i * dim + i].re).collect()
            }
        }
    }

    /// ‖ψ‖ for state vectors, Re tr ρ for density matrices.
    pub fn norm_or_trace(&self) -> f64 {
        match self {
            RegisterState::StateVector { amplitudes, .. } => norm(amplitudes),
            RegisterState::DensityMatrix { .. } => self.populations().iter().sum(),
        }
    }

    /// Amplitude of basis state `index` (state vectors only).
    pub fn amplitude(&self, index: usize) -> Option<C64> {
        match self {
            RegisterState::StateVector { amplitudes, .. } => amplitudes.get(index).copied(),
            RegisterState::DensityMatrix { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        check_qubits(self.mode(), self.qubits())?;
        let dim = self.dim();
        let ok = match self {
            RegisterState::StateVector { amplitudes, .. } => amplitudes.len() == dim,
            RegisterState::DensityMatrix { matrix, .. } => matrix.len() == dim * dim,
        };
        if !ok {
            return Err(Error::invalid("register data length does not match 2^N"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Frame {
    /// Frame rotating at `carrier_GHz`; defaults to the first microwave
    /// carrier, or to qubit 0's transition when the schedule has none.
    Rotating {
        #[serde(default, rename = "carrier_GHz")]
        carrier_ghz: Option<f64>,
    },
    Lab,
}

impl Default for Frame {
    fn default() -> Self {
        Frame::Rotating { carrier_ghz: None }
    }
}

/// Lindblad rates per qubit: relaxation √(1/T1)σ_- and dephasing
/// √(1/2T2)σ_z (coherences decay at 1/T2 from this channel).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dissipation {
    #[serde(default)]
    pub t1_s: Option<f64>,
    #[serde(default)]
    pub t2_s: Option<f64>,
}

impl Dissipation {
    /// T1 and the effective dephasing time of a budget.
    pub fn from_budget(budget: &DecoherenceBudget) -> Self {
        Self {
            t1_s: Some(budget.t1_s),
            t2_s: Some(budget.t2_eff_s),
        }
    }
}

/// Tunneling loss from the excited state, active for t ≥ t_f.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tunneling {
    pub t_f_s: f64,
    pub t_up_s: f64,
    /// Restrict the loss to these sites (all sites when absent).
    #[serde(default)]
    pub sites: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    #[serde(default)]
    pub frame: Frame,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Output times; defaults to the schedule end.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    /// Sample times at which full states are kept; defaults to the last.
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default)]
    pub decoherence: Option<Dissipation>,
    #[serde(default)]
    pub tunneling: Option<Tunneling>,
    #[serde(default)]
    pub max_step_s: Option<f64>,
    /// Keep the B_nm exchange term; off leaves only the diagonal A_nm phases.
    #[serde(default = "yes")]
    pub flip_flop: bool,
}

fn yes() -> bool {
    true
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        Self {
            frame: Frame::default(),
            tolerance: DEFAULT_TOLERANCE,
            sample_times: Vec::new(),
            snapshot_times: None,
            decoherence: None,
            tunneling: None,
            max_step_s: None,
            flip_flop: true,
        }
    }
}

impl EvolutionSpec {
    pub fn sampled(times: Vec<f64>) -> Self {
        Self {
            sample_times: times,
            ..Self::default()
        }
    }

    /// `count` + 1 evenly spaced samples on [0, t_end].
    pub fn uniform(t_end: f64, count: usize) -> Self {
        Self::sampled((0..=count).map(|i| t_end * i as f64 / count as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub state: RegisterState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub mode: Mode,
    pub qubits: usize,
    pub frame: Frame,
    /// Rotating-frame reference ω_ref, s⁻¹ (0 in the lab frame).
    pub frame_reference_rad_per_s: f64,
    pub times: Vec<f64>,
    /// populations[k][s] at times[k].
    pub populations: Vec<Vec<f64>>,
    /// ‖ψ‖ or tr ρ at each sample.
    pub norm: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Lowest eigenvalue of ρ seen over all checks (density mode).
    pub min_eigenvalue: Option<f64>,
    /// Largest |ρ − ρ†| element seen (density mode).
    pub max_hermiticity_error: Option<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl EvolutionResult {
    pub fn final_state(&self) -> Option<&RegisterState> {
        self.snapshots.last().map(|s| &s.state)
    }

    /// Largest |‖ψ‖ − 1| (or |tr ρ − 1|) over the samples.
    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Basis labels: character k is qubit k, '0' = |↓⟩, '1' = |↑⟩.
    pub fn basis_labels(&self) -> Vec<String> {
        (0..1usize << self.qubits)
            .map(|s| (0..self.qubits).map(|k| if s >> k & 1 == 1 { '1' } else { '0' }).collect())
            .collect()
    }

    /// CSV: t, p_<label> per basis state, trace.
    pub fn to_csv(&self) -> String {
        let labels: Vec<String> = self.basis_labels().iter().map(|l| format!("p_{l}")).collect();
        let mut header = vec!["t_s"];
        header.extend(labels.iter().map(String::as_str));
        header.push("trace");
        let mut table = CsvTable::new(&header);
        for (k, &t) in self.times.iter().enumerate() {
            let mut row = vec![t];
            row.extend_from_slice(&self.populations[k]);
            row.push(self.norm[k]);
            table.push_nums(&row);
        }
        table.into_string()
    }

    pub fn to_json(&self) -> Result<String> {
        serialization::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// One-qubit and pair coefficients at an instant, rad/s.
#[derive(Debug, Clone)]
struct Instant {
    omega: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    drive: Vec<C64>,
}

impl Instant {
    fn combine(x: &Instant, wx: f64, y: &Instant, wy: f64) -> Instant {
        let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| wx * u + wy * v).collect();
        Instant {
            omega: mix(&x.omega, &y.omega),
            a: mix(&x.a, &y.a),
            b: mix(&x.b, &y.b),
            drive: x.drive.iter().zip(&y.drive).map(|(u, v)| u * wx + v * wy).collect(),
        }
    }
}

struct Model<'a> {
    hamiltonian: &'a QubitArrayHamiltonian,
    schedule: &'a PulseSchedule,
    tables: Vec<Option<StarkTable>>,
    fixed: Vec<InstantSite>,
    pairs: Vec<(usize, usize, f64)>,
    flip_flop: bool,
    lab: bool,
    omega_ref: f64,
}

impl<'a> Model<'a> {
    fn new(hamiltonian: &'a QubitArrayHamiltonian, schedule: &'a PulseSchedule, frame: Frame, flip_flop: bool) -> Result<Self> {
        let q = hamiltonian.qubits();
        if let Some(ch) = schedule.voltage_channels.iter().find(|c| c.site >= q) {
            return Err(Error::invalid(format!("voltage channel for site {} on a {q}-qubit array", ch.site)));
        }
        let mut tables = Vec::with_capacity(q);
        let mut fixed = Vec::with_capacity(q);
        for n in 0..q {
            let s = &hamiltonian.sites[n];
            fixed.push(InstantSite {
                epsilon_k: s.epsilon_k,
                dz_cm: s.z11_cm - s.z22_cm,
                z12_cm: s.z12_cm.abs(),
            });
            let (lo, hi) = schedule.voltage_range(n);
            tables.push(if lo == 0.0 && hi == 0.0 {
                None
            } else {
                Some(hamiltonian.stark_table(n, lo.min(0.0), hi.max(0.0))?)
            });
        }
        let mut pairs = Vec::new();
        for n in 0..q {
            for m in n + 1..q {
                pairs.push((n, m, hamiltonian.geometry.distance_cm(n, m)));
            }
        }
        let (lab, omega_ref) = match frame {
            Frame::Lab => (true, 0.0),
            Frame::Rotating { carrier_ghz } => {
                let f = carrier_ghz.or_else(|| schedule.microwave.first().map(|m| m.freq_ghz));
                let w = match f {
                    Some(f) if f > 0.0 => 2.0 * std::f64::consts::PI * f * 1e9,
                    Some(f) => return Err(Error::invalid(format!("carrier frequency must be positive, got {f}"))),
                    None => kelvin_to_rad_per_sec(hamiltonian.sites[0].epsilon_k),
                };
                (false, w)
            }
        };
        Ok(Self {
            hamiltonian,
            schedule,
            tables,
            fixed,
            pairs,
            flip_flop,
            lab,
            omega_ref,
        })
    }

    fn site(&self, n: usize, t: f64, side: Side) -> InstantSite {
        match &self.tables[n] {
            None => self.fixed[n],
            Some(table) => {
                let v = self.hamiltonian.voltages_v[n] + self.schedule.voltage(n, t, side);
                table.at(site_field(&self.hamiltonian.geometry, v))
            }
        }
    }

    fn instant(&self, t: f64, side: Side) -> Instant {
        let q = self.hamiltonian.qubits();
        let sites: Vec<InstantSite> = (0..q).map(|n| self.site(n, t, side)).collect();
        let omega = sites
            .iter()
            .map(|s| kelvin_to_rad_per_sec(s.epsilon_k) - self.omega_ref)
            .collect();
        let mut a = Vec::with_capacity(self.pairs.len());
        let mut b = Vec::with_capacity(self.pairs.len());
        for &(n, m, r) in &self.pairs {
            let (sn, sm) = (&sites[n], &sites[m]);
            let (ak, bk) = pair_coupling(sn.dz_cm, sn.z12_cm, sm.dz_cm, sm.z12_cm, r);
            a.push(kelvin_to_rad_per_sec(ak));
            b.push(if self.flip_flop { kelvin_to_rad_per_sec(bk) / 2.0 } else { 0.0 });
        }
        // field factor shared by all sites
        let field: C64 = if self.lab {
            C64::new(self.schedule.microwave_field(t, side), 0.0)
        } else {
            self.schedule
                .microwave
                .iter()
                .map(|mw| {
                    let theta = (mw.omega() - self.omega_ref) * t + mw.phase;
                    C64::from_polar(0.5 * mw.amplitude(t, side), -theta)
                })
                .sum()
        };
        let drive = sites.iter().map(|s| field * drive_coefficient(s.z12_cm)).collect();
        Instant { omega, a, b, drive }
    }

    /// Calls f(from, to, H_{to,from}/ħ) for every nonzero element.
    fn for_each_term(&self, inst: &Instant, dim: usize, mut f: impl FnMut(usize, usize, C64)) {
        let q = self.hamiltonian.qubits();
        for s in 0..dim {
            let spin = |n: usize| if s >> n & 1 == 1 { 0.5 } else { -0.5 };
            let mut diag = 0.0;
            for n in 0..q {
                diag += inst.omega[n] * spin(n);
            }
            for (k, &(n, m, _)) in self.pairs.iter().enumerate() {
                diag += inst.a[k] * spin(n) * spin(m);
                let (bn, bm) = (s >> n & 1, s >> m & 1);
                if bn != bm && inst.b[k] != 0.0 {
                    f(s, s ^ (1 << n | 1 << m), C64::new(inst.b[k], 0.0));
                }
            }
            f(s, s, C64::new(diag, 0.0));
            for n in 0..q {
                let c = inst.drive[n];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                if s >> n & 1 == 0 {
                    f(s, s | 1 << n, c);
                } else {
                    f(s, s & !(1 << n), c.conj());
                }
            }
        }
    }

    fn apply(&self, inst: &Instant, v: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        self.for_each_term(inst, v.len(), |from, to, h| out[to] += h * v[from]);
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// exp(−iτK)v by Lanczos with full reorthogonalization. None when the
/// Krylov dimension runs out before the residual estimate meets `tol`.
fn expm_krylov(apply: impl Fn(&[C64], &mut [C64]), v: &[C64], tau: f64, tol: f64) -> Option<Vec<C64>> {
    let dim = v.len();
    let beta0 = norm(v);
    if beta0 == 0.0 {
        return Some(v.to_vec());
    }
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let m_max = KRYLOV_MAX.min(dim);
    for j in 0..m_max {
        apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        for (x, q) in w.iter_mut().zip(&basis[j]) {
            *x -= q * a;
        }
        if j > 0 {
            let bprev = beta[j - 1];
            for (x, q) in w.iter_mut().zip(&basis[j - 1]) {
                *x -= q * bprev;
            }
        }
        for q in &basis {
            let c = dot(q, &w);
            for (x, qq) in w.iter_mut().zip(q) {
                *x -= qq * c;
            }
        }
        alpha.push(a);
        let b = norm(&w);
        let k = j + 1;
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let y: Vec<C64> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|l| {
                        let u = eig.eigenvectors[(i, l)] * eig.eigenvectors[(0, l)];
                        C64::from_polar(u, -tau * eig.eigenvalues[l])
                    })
                    .sum()
            })
            .collect();
        let scale = alpha.iter().map(|x| x.abs()).fold(0.0, f64::max) + beta.iter().copied().fold(0.0, f64::max);
        let breakdown = b <= 1e-13 * scale.max(f64::MIN_POSITIVE) || k == dim;
        let err = b * tau.abs() * y[k - 1].norm();
        if breakdown || err <= tol {
            let mut out = vec![C64::new(0.0, 0.0); dim];
            for (q, c) in basis.iter().zip(&y) {
                for (o, x) in out.iter_mut().zip(q) {
                    *o += x * c * beta0;
                }
            }
            return Some(out);
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    None
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

struct Record {
    times: Vec<f64>,
    populations: Vec<Vec<f64>>,
    norm: Vec<f64>,
    snapshots: Vec<Snapshot>,
}

fn stops(schedule: &PulseSchedule, samples: &[f64], onset: Option<f64>) -> Vec<f64> {
    let t_end = *samples.last().expect("samples are non-empty");
    let mut t: Vec<f64> = schedule.breakpoints().into_iter().filter(|&x| x <= t_end).collect();
    t.extend_from_slice(samples);
    if let Some(o) = onset {
        if o > 0.0 && o < t_end {
            t.push(o);
        }
    }
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Integrates the register under `schedule`, recording populations and the
/// norm/trace at each sample time.
pub fn evolve(
    hamiltonian: &QubitArrayHamiltonian,
    schedule: &PulseSchedule,
    initial: &RegisterState,
    spec: &EvolutionSpec,
) -> Result<EvolutionResult> {
    schedule.validate()?;
    initial.validate()?;
    if initial.qubits() != hamiltonian.qubits() {
        return Err(Error::invalid(format!(
            "initial state has {} qubits, the array has {}",
            initial.qubits(),
            hamiltonian.qubits()
        )));
    }
    if !(spec.tolerance > 0.0 && spec.tolerance < 1.0) {
        return Err(Error::invalid(format!("integrator tolerance must lie in (0, 1), got {}", spec.tolerance)));
    }
    let samples = if spec.sample_times.is_empty() {
        vec![schedule.duration_s]
    } else {
        spec.sample_times.clone()
    };
    if samples.iter().any(|t| !(*t >= 0.0)) || samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("sample times must be non-negative and sorted"));
    }
    let t_end = *samples.last().expect("non-empty");
    if t_end > schedule.duration_s * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "last sample time {t_end:e} s lies beyond the schedule duration {:e} s",
            schedule.duration_s
        )));
    }
    let snapshot_times = spec.snapshot_times.clone().unwrap_or_else(|| vec![t_end]);
    if let Some(t) = snapshot_times.iter().find(|t| !samples.contains(t)) {
        return Err(Error::invalid(format!("snapshot time {t:e} s is not a sample time")));
    }
    let dissipative = spec.decoherence.is_some() || spec.tunneling.is_some();
    if dissipative && initial.mode() != Mode::DensityMatrix {
        return Err(Error::invalid(
            "decoherence and tunneling need a density-matrix initial state (use RegisterState::to_density)",
        ));
    }
    if let Some(tun) = &spec.tunneling {
        if !(tun.t_up_s > 0.0 && tun.t_f_s.is_finite()) {
            return Err(Error::invalid("tunneling needs t_up_s > 0 and a finite onset"));
        }
        if let Some(bad) = tun.sites.iter().flatten().find(|&&n| n >= hamiltonian.qubits()) {
            return Err(Error::invalid(format!("tunneling site {bad} does not exist")));
        }
    }
    if let Some(d) = &spec.decoherence {
        if d.t1_s.is_some_and(|t| !(t > 0.0)) || d.t2_s.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::invalid("T1 and T2 must be positive"));
        }
    }
    let model = Model::new(hamiltonian, schedule, spec.frame, spec.flip_flop)?;
    let mut max_step = schedule.shortest_segment().map_or(f64::INFINITY, |s| 0.1 * s);
    if let Some(m) = spec.max_step_s {
        if !(m > 0.0) {
            return Err(Error::invalid("max_step_s must be positive"));
        }
        max_step = max_step.min(m);
    }
    let stop_points = stops(schedule, &samples, spec.tunneling.as_ref().map(|t| t.t_f_s));
    let mut record = Record {
        times: Vec::new(),
        populations: Vec::new(),
        norm: Vec::new(),
        snapshots: Vec::new(),
    };
    let mut observe = |t: f64, state: &RegisterState, record: &mut Record| {
        // a sample time may repeat
        for _ in samples.iter().filter(|&&s| s == t) {
            record.times.push(t);
            record.populations.push(state.populations());
            record.norm.push(state.norm_or_trace());
        }
        if snapshot_times.contains(&t) && !record.snapshots.iter().any(|s| s.t == t) {
            record.snapshots.push(Snapshot { t, state: state.clone() });
        }
    };
    let ctx = Context {
        model: &model,
        tol: spec.tolerance,
        max_step,
        t_end,
    };
    let (accepted, rejected, min_eig, herm) = match initial {
        RegisterState::StateVector { qubits, amplitudes } => {
            let (a, r) = ctx.run_vector(*qubits, amplitudes.clone(), &stop_points, &mut record, &mut observe)?;
            (a, r, None, None)
        }
        RegisterState::DensityMatrix { qubits, matrix } => {
            let lind = Lindblad::new(*qubits, spec.decoherence.as_ref(), spec.tunneling.as_ref());
            let (a, r, e, h) = ctx.run_density(*qubits, matrix.clone(), &lind, &stop_points, &mut record, &mut observe)?;
            (a, r, Some(e), Some(h))
        }
    };
    Ok(EvolutionResult {
        mode: initial.mode(),
        qubits: initial.qubits(),
        frame: spec.frame,
        frame_reference_rad_per_s: model.omega_ref,
        times: record.times,
        populations: record.populations,
        norm: record.norm,
        snapshots: record.snapshots,
        min_eigenvalue: min_eig,
        max_hermiticity_error: herm,
        steps_accepted: accepted,
        steps_rejected: rejected,
    })
}

struct Context<'m, 'a> {
    model: &'m Model<'a>,
    tol: f64,
    max_step: f64,
    t_end: f64,
}

fn grow(h: f64, err: f64, tol: f64) -> f64 {
    let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
    h * factor
}

impl Context<'_, '_> {
    fn floor(&self, t: f64) -> f64 {
        1e-13 * t.abs().max(self.t_end)
    }

    /// One CF4 step of length h from t.
    fn cf4(&self, t: f64, h: f64, psi: &[C64]) -> Option<Vec<C64>> {
        let c1 = 0.5 - SQRT3 / 6.0;
        let c2 = 0.5 + SQRT3 / 6.0;
        let big = 0.25 + SQRT3 / 6.0;
        let small = 0.25 - SQRT3 / 6.0;
        let h1 = self.model.instant(t + c1 * h, Side::Right);
        let h2 = self.model.instant(t + c2 * h, Side::Right);
        let first = Instant::combine(&h1, big, &h2, small);
        let second = Instant::combine(&h1, small, &h2, big);
        let ktol = self.tol * 1e-3;
        let mid = expm_krylov(|v, o| self.model.apply(&first, v, o), psi, h, ktol)?;
        expm_krylov(|v, o| self.model.apply(&second, v, o), &mid, h, ktol)
    }

    fn run_vector(
        &self,
        qubits: usize,
        mut psi: Vec<C64>,
        stop_points: &[f64],
        record: &mut Record,
        observe: &mut impl FnMut(f64, &RegisterState, &mut Record),
    ) -> Result<(usize, usize)> {
        let wrap = |psi: &Vec<C64>| RegisterState::StateVector {
            qubits,
            amplitudes: psi.clone(),
        };
        let mut t = 0.0;
        let mut h = self.max_step.min(self.t_end.max(f64::MIN_POSITIVE));
        let (mut accepted, mut rejected) = (0, 0);
        observe(0.0, &wrap(&psi), record);
        for &stop in stop_points.iter().filter(|&&s| s > 0.0) {
            while t < stop {
                let rem = stop - t;
                let step = h.min(rem).min(self.max_step);
                let trial = self.cf4(t, step, &psi).and_then(|big| {
                    let half = 0.5 * step;
                    let a = self.cf4(t, half, &psi)?;
                    let b = self.cf4(t + half, half, &a)?;
                    let diff: Vec<C64> = b.iter().zip(&big).map(|(x, y)| x - y).collect();
                    Some((b, norm(&diff) / 15.0))
                });
                match trial {
                    Some((next, err)) if err <= self.tol => {
                        psi = next;
                        t = if step == rem { stop } else { t + step };
                        accepted += 1;
                        h = grow(step, err, self.tol);
                    }
                    other => {
                        rejected += 1;
                        let err = other.map_or(f64::INFINITY, |(_, e)| e);
                        h = if err.is_finite() { grow(step, err, self.tol).min(0.9 * step) } else { 0.25 * step };
                        if h < self.floor(t) {
                            return Err(Error::StepSizeUnderflow {
                                time: t,
                                step: h,
                                estimate: err / self.tol,
                            });
                        }
                    }
                }
            }
            observe(stop, &wrap(&psi), record);
        }
        Ok((accepted, rejected))
    }

    #[allow(clippy::too_many_arguments)]
    fn rhs(&self, lind: &Lindblad, dim: usize, t: f64, side: Side, rho: &[C64], out: &mut [C64]) {
        let inst = self.model.instant(t, side);
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        let mi = C64::new(0.0, -1.0);
        // −i(Hρ − ρH)
        self.model.for_each_term(&inst, dim, |from, to, h| {
            let hl = mi * h;
            let hr = mi * h.conj();
            for j in 0..dim {
                out[to * dim + j] += hl * rho[from * dim + j];
            }
            for i in 0..dim {
                out[i * dim + to] -= hr * rho[i * dim + from];
            }
        });
        lind.add(t, dim, rho, out);
    }

    fn run_density(
        &self,
        qubits: usize,
        mut rho: Vec<C64>,
        lind: &Lindblad,
        stop_points: &[f64],
        record: &mut Record,
        observe: &mut impl FnMut(f64, &RegisterState, &mut Record),
    ) -> Result<(usize, usize, f64, f64)> {
        let dim = 1usize << qubits;
        let wrap = |rho: &Vec<C64>| RegisterState::DensityMatrix {
            qubits,
            matrix: rho.clone(),
        };
        let check_each_step = dim <= 16;
        let mut min_eig = f64::INFINITY;
        let mut herm = 0.0f64;
        let mut inspect = |rho: &[C64]| {
            let (e, h) = positivity(dim, rho);
            min_eig = min_eig.min(e);
            herm = herm.max(h);
        };
        inspect(&rho);
        let mut t = 0.0;
        let mut h = self.max_step.min(self.t_end.max(f64::MIN_POSITIVE));
        let (mut accepted, mut rejected) = (0, 0);
        observe(0.0, &wrap(&rho), record);
        let n2 = dim * dim;
        let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n2]; 7];
        let mut stage = vec![C64::new(0.0, 0.0); n2];
        for &stop in stop_points.iter().filter(|&&s| s > 0.0) {
            while t < stop {
                let rem = stop - t;
                let step = h.min(rem).min(self.max_step);
                for s in 0..7 {
                    for (idx, x) in stage.iter_mut().enumerate() {
                        let mut acc = rho[idx];
                        for (j, &a) in DP_A[s].iter().enumerate().take(s) {
                            if a != 0.0 {
                                acc += k[j][idx] * (a * step);
                            }
                        }
                        *x = acc;
                    }
                    let side = if DP_C[s] == 1.0 { Side::Left } else { Side::Right };
                    let (head, tail) = k.split_at_mut(s);
                    let _ = head;
                    self.rhs(lind, dim, t + DP_C[s] * step, side, &stage, &mut tail[0]);
                }
                let mut err = 0.0f64;
                let mut next = rho.clone();
                for idx in 0..n2 {
                    let mut e = C64::new(0.0, 0.0);
                    let mut inc = C64::new(0.0, 0.0);
                    for s in 0..7 {
                        inc += k[s][idx] * DP_B[s];
                        e += k[s][idx] * (DP_B[s] - DP_BSTAR[s]);
                    }
                    next[idx] += inc * step;
                    err = err.max((e * step).norm());
                }
                if err <= self.tol {
                    rho = next;
                    t = if step == rem { stop } else { t + step };
                    accepted += 1;
                    h = grow(step, err, self.tol);
                    if check_each_step {
                        inspect(&rho);
                    }
                } else {
                    rejected += 1;
                    h = grow(step, err, self.tol).min(0.9 * step);
                    if h < self.floor(t) || !err.is_finite() {
                        return Err(Error::StepSizeUnderflow {
                            time: t,
                            step: h,
                            estimate: err / self.tol,
                        });
                    }
                }
            }
            if !check_each_step {
                inspect(&rho);
            }
            observe(stop, &wrap(&rho), record);
        }
        Ok((accepted, rejected, min_eig, herm))
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_BSTAR: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Lowest eigenvalue of the Hermitian part and largest anti-Hermitian element.
fn positivity(dim: usize, rho: &[C64]) -> (f64, f64) {
    let mut herm = 0.0f64;
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        herm = herm.max((rho[i * dim + j] - rho[j * dim + i].conj()).norm());
        (rho[i * dim + j] + rho[j * dim + i].conj()) * 0.5
    });
    let eig = SymmetricEigen::new(m);
    (eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min), herm)
}

/// Dissipative part of the generator, applied elementwise in the basis.
struct Lindblad {
    qubits: usize,
    relax: f64,
    dephase: f64,
    onset: f64,
    /// 1/(2t_↑) per qubit (0 where tunneling is off).
    tunnel: Vec<f64>,
}

impl Lindblad {
    fn new(qubits: usize, diss: Option<&Dissipation>, tunneling: Option<&Tunneling>) -> Self {
        let relax = diss.and_then(|d| d.t1_s).map_or(0.0, |t| 1.0 / t);
        let dephase = diss.and_then(|d| d.t2_s).map_or(0.0, |t| 1.0 / t);
        let (onset, tunnel) = match tunneling {
            Some(tun) => {
                let rate = 0.5 / tun.t_up_s;
                let v = (0..qubits)
                    .map(|n| match &tun.sites {
                        Some(s) if !s.contains(&n) => 0.0,
                        _ => rate,
                    })
                    .collect();
                (tun.t_f_s, v)
            }
            None => (f64::INFINITY, vec![0.0; qubits]),
        };
        Self {
            qubits,
            relax,
            dephase,
            onset,
            tunnel,
        }
    }

    fn add(&self, t: f64, dim: usize, rho: &[C64], out: &mut [C64]) {
        let tunneling = t >= self.onset;
        if self.relax == 0.0 && self.dephase == 0.0 && !tunneling {
            return;
        }
        for i in 0..dim {
            for j in 0..dim {
                let idx = i * dim + j;
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..self.qubits {
                    let bit = 1usize << n;
                    let (pi, pj) = ((i & bit != 0) as u8 as f64, (j & bit != 0) as u8 as f64);
                    if self.relax != 0.0 {
                        if pi == 0.0 && pj == 0.0 {
                            acc += rho[(i | bit) * dim + (j | bit)] * self.relax;
                        }
                        acc -= rho[idx] * (0.5 * self.relax * (pi + pj));
                    }
                    if self.dephase != 0.0 && pi != pj {
                        acc -= rho[idx] * self.dephase;
                    }
                    if tunneling && self.tunnel[n] != 0.0 {
                        acc -= rho[idx] * (self.tunnel[n] * (pi + pj));
                    }
                }
                out[idx] += acc;
            }
        }
    }
}

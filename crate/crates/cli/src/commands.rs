// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::sync::Arc;

use heqsim::decoherence::{budget, BudgetInputs, DecoherenceBudget};
use heqsim::dynamics::{evolve, Dissipation, EvolutionResult, EvolutionSpec, RegisterState};
use heqsim::helium_medium::{
    capillary_crossover, collective_mode, is_crystal, magnetic_quantities, melting_temperature,
    plasma_parameter, ripplon_energy_k, ripplon_omega, thermal_amplitude, Branch, ElectronSheet, HeliumSurface,
    MagneticScales, PhaseCheck,
};
use heqsim::hydrogenic::{HydrogenicBasis, HydrogenicBasisSpec};
use heqsim::pulse_control::{
    calibrate_swap, pi_pulse, rabi_frequency, refine_swap, resonance_voltage, triangular_ramp, PulseSchedule,
    RefinedSwap, SwapProtocol,
};
use heqsim::quantities::kelvin_to_ghz;
use heqsim::qubit_model::{build, DeviceGeometry, QubitArrayHamiltonian};
use heqsim::readout::{plan, sample_shots, site_survival, ReadoutPlan, ShotSample};
use heqsim::serialization::CsvTable;
use serde::Serialize;

use crate::config::{ExperimentConfig, Loaded, RabiRecipe, ScheduleConfig, SwapRecipe};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes hash-named files into the output directory.
pub struct Artifacts<'a> {
    command: &'static str,
    loaded: &'a Loaded,
    pub written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    generator: String,
    artifact_version: &'static str,
    command: &'static str,
    config_sha256: &'a str,
    overrides: &'a [String],
    result: T,
}

impl<'a> Artifacts<'a> {
    pub fn new(command: &'static str, loaded: &'a Loaded) -> Self {
        Self {
            command,
            loaded,
            written: Vec::new(),
        }
    }

    fn path(&self, suffix: &str, ext: &str) -> PathBuf {
        let name = format!("{}-{}{suffix}.{ext}", self.command, &self.loaded.hash[..16]);
        self.loaded.config.output.join(name)
    }

    fn write(&mut self, path: PathBuf, text: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.loaded.config.output)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.loaded.config.output.display())))?;
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, suffix: &str, result: T) -> Result<(), CliError> {
        let env = Envelope {
            generator: format!("heqsim {VERSION}"),
            artifact_version: VERSION,
            command: self.command,
            config_sha256: &self.loaded.hash,
            overrides: &self.loaded.overrides,
            result,
        };
        let text = heqsim::serialization::to_string(&env).map_err(|e| CliError::Io(e.to_string()))?;
        self.write(self.path(suffix, "json"), &text)
    }

    /// CSV with a leading `#` metadata line.
    pub fn csv(&mut self, suffix: &str, body: &str) -> Result<(), CliError> {
        let mut text = format!(
            "# heqsim {VERSION} command={} config_sha256={}",
            self.command, self.loaded.hash
        );
        if !self.loaded.overrides.is_empty() {
            text.push_str(" overrides=");
            text.push_str(&self.loaded.overrides.join(";"));
        }
        text.push('\n');
        text.push_str(body);
        self.write(self.path(suffix, "csv"), &text)
    }
}

fn device(cfg: &ExperimentConfig) -> DeviceGeometry {
    cfg.device.clone().unwrap_or_else(|| DeviceGeometry::chain(2, 0.5, 0.0))
}

fn basis(cfg: &ExperimentConfig) -> Result<Arc<HydrogenicBasis>, CliError> {
    let helium = HydrogenicBasisSpec::helium();
    if cfg.basis_size == helium.basis_size {
        return Ok(HydrogenicBasis::shared_helium());
    }
    Ok(Arc::new(HydrogenicBasis::new(HydrogenicBasisSpec::new(helium.lambda, cfg.basis_size))?))
}

fn hamiltonian(cfg: &ExperimentConfig, fallback: Option<Vec<f64>>) -> Result<QubitArrayHamiltonian, CliError> {
    let g = device(cfg);
    let voltages = cfg
        .voltages_v
        .clone()
        .or(fallback)
        .unwrap_or_else(|| vec![0.0; g.len()]);
    Ok(build(&g, &voltages, basis(cfg)?)?)
}

fn budget_for(cfg: &ExperimentConfig) -> Result<DecoherenceBudget, CliError> {
    let g = device(cfg);
    let n = &cfg.decoherence;
    let mut inputs = BudgetInputs::new(g.t_k, g.b_t, g.pitch_cm(), HydrogenicBasisSpec::helium().lambda)
        .with_noise(n.noise_v_per_rt_hz, n.tuning_ghz_per_mv);
    inputs.sideband_constant = n.sideband_constant;
    inputs.noise_convention = n.convention;
    inputs.mobility_field_v_per_cm = n.mobility_field_v_per_cm;
    Ok(budget(inputs)?)
}

pub fn spectrum(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let s = &cfg.spectrum;
    if s.points == 0 || s.levels < 2 || s.levels > cfg.basis_size {
        return Err(CliError::Config(format!(
            "spectrum needs points ≥ 1 and 2 ≤ levels ≤ basis_size ({}), got points = {}, levels = {}",
            cfg.basis_size, s.points, s.levels
        )));
    }
    let basis = basis(cfg)?;
    let mut header = vec!["E_perp_V_per_cm".to_owned()];
    header.extend((1..=s.levels).map(|m| format!("E{m}_K")));
    header.extend((2..=s.levels).map(|m| format!("f1{m}_GHz")));
    header.extend((1..=s.levels).map(|m| format!("z{m}{m}_cm")));
    header.push("z12_cm".to_owned());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = CsvTable::new(&refs);
    let [lo, hi] = s.e_perp_v_per_cm;
    for i in 0..s.points {
        let e = if s.points == 1 {
            lo
        } else if i == s.points - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (s.points - 1) as f64
        };
        let sol = basis.solve(e)?;
        let mut row = vec![e];
        row.extend((1..=s.levels).map(|m| sol.energy_k(m)));
        row.extend((2..=s.levels).map(|m| sol.transition_ghz(1, m)));
        row.extend((1..=s.levels).map(|m| sol.z_cm(m, m)));
        row.push(sol.z_cm(1, 2));
        table.push_nums(&row);
    }
    out.csv("", table.as_str())
}

#[derive(Serialize)]
struct Ripplon {
    k_per_cm: f64,
    omega_rad_per_s: f64,
    energy_k: f64,
}

#[derive(Serialize)]
struct Mode {
    branch: &'static str,
    k_per_cm: f64,
    omega_rad_per_s: Option<f64>,
    note: Option<String>,
}

#[derive(Serialize)]
struct MediumReport {
    temperature_k: f64,
    field_t: f64,
    density_cm2: f64,
    thermal_amplitude_cm: f64,
    capillary_crossover_per_cm: f64,
    ripplons: Vec<Ripplon>,
    plasma_frequency_rad_per_s: f64,
    plasma_parameter: f64,
    melting_temperature_k: f64,
    phase: PhaseCheck,
    modes: Vec<Mode>,
    magnetic: Option<MagneticScales>,
}

pub fn medium(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let g = device(cfg);
    let m = &cfg.medium;
    let surface = HeliumSurface::new(g.t_k)?;
    let sheet = ElectronSheet::new(m.density_cm2, g.b_t)?;
    let ripplons = m
        .ripplon_k_per_cm
        .iter()
        .map(|&k| {
            Ok(Ripplon {
                k_per_cm: k,
                omega_rad_per_s: ripplon_omega(&surface, k)?,
                energy_k: ripplon_energy_k(&surface, k)?,
            })
        })
        .collect::<Result<Vec<_>, heqsim::Error>>()?;
    let mut modes = Vec::new();
    for &k in &m.mode_k_per_cm {
        for branch in Branch::ALL {
            let (omega, note) = match collective_mode(&sheet, branch, k, m.shear_speed_cm_per_s) {
                Ok(w) => (Some(w), None),
                // branches without their inputs are reported, not fatal
                Err(heqsim::Error::InvalidInput(why)) => (None, Some(why)),
                Err(e) => return Err(e.into()),
            };
            modes.push(Mode {
                branch: branch.name(),
                k_per_cm: k,
                omega_rad_per_s: omega,
                note,
            });
        }
    }
    let report = MediumReport {
        temperature_k: g.t_k,
        field_t: g.b_t,
        density_cm2: m.density_cm2,
        thermal_amplitude_cm: thermal_amplitude(&surface)?,
        capillary_crossover_per_cm: capillary_crossover(&surface),
        ripplons,
        plasma_frequency_rad_per_s: sheet.plasma_frequency(),
        plasma_parameter: plasma_parameter(&sheet, g.t_k)?,
        melting_temperature_k: melting_temperature(m.density_cm2, m.gamma_melt)?,
        phase: is_crystal(&sheet, g.t_k, m.gamma_melt)?,
        modes,
        magnetic: if g.b_t > 0.0 {
            Some(magnetic_quantities(g.b_t, g.pitch_cm())?)
        } else {
            None
        },
    };
    out.json("", report)
}

pub fn decoherence(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    out.json("", budget_for(cfg)?)
}

#[derive(Serialize)]
struct BuildReport<'a> {
    hamiltonian: &'a QubitArrayHamiltonian,
    tuning_ghz_per_mv: Vec<f64>,
}

pub fn build_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let h = hamiltonian(cfg, None)?;
    let tuning = h.sites.iter().map(|s| s.tuning_ghz_per_mv(&h.geometry)).collect();
    out.json(
        "",
        BuildReport {
            hamiltonian: &h,
            tuning_ghz_per_mv: tuning,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "recipe", rename_all = "snake_case")]
pub enum Calibration {
    Explicit,
    Swap {
        pair: [usize; 2],
        alpha: f64,
        v_peak_v: f64,
        /// Flip-flop B at the dwell voltages, K.
        b_k: f64,
        ideal_dwell_s: f64,
        dwell_s: f64,
        refined: Option<RefinedSwap>,
    },
    Rabi {
        site: usize,
        omega_rad_per_s: f64,
        duration_s: f64,
        carrier_ghz: f64,
    },
}

fn evolution_spec(cfg: &ExperimentConfig, duration: f64) -> Result<EvolutionSpec, CliError> {
    let e = &cfg.evolution;
    let mut spec = e.spec.clone();
    if spec.sample_times.is_empty() {
        if e.samples == 0 {
            return Err(CliError::Config("evolution.samples must be ≥ 1".into()));
        }
        spec.sample_times = EvolutionSpec::uniform(duration, e.samples).sample_times;
    }
    if e.dissipation_from_budget {
        spec.decoherence = Some(Dissipation::from_budget(&budget_for(cfg)?));
    }
    Ok(spec)
}

fn resolve_swap(
    cfg: &ExperimentConfig,
    h: &QubitArrayHamiltonian,
    r: &SwapRecipe,
) -> Result<(PulseSchedule, Calibration), CliError> {
    let [site, other] = r.pair;
    if site >= h.qubits() || other >= h.qubits() || site == other {
        return Err(CliError::Config(format!(
            "schedule.swap.pair {:?} is not two distinct sites of the {}-site device",
            r.pair,
            h.qubits()
        )));
    }
    let v_peak = match r.v_peak_v {
        Some(v) => v,
        None => resonance_voltage(h, other, site)?,
    };
    let mut v = h.voltages_v.clone();
    v[site] += v_peak;
    let resonant = h.with_voltages(&v)?;
    let ideal = calibrate_swap(&resonant, (site, other), r.alpha)?;
    let refined = if r.refine {
        let protocol = SwapProtocol {
            pair: (site, other),
            site,
            v_peak,
            rise_s: r.rise_s,
            fall_s: r.fall_s,
        };
        let spec = evolution_spec(cfg, 1.0)?;
        Some(refine_swap(h, &resonant, &protocol, r.alpha, &spec)?)
    } else {
        None
    };
    let dwell = refined.map_or(ideal, |x| x.dwell_s);
    let schedule = triangular_ramp(site, v_peak, r.rise_s, dwell, r.fall_s)?;
    Ok((
        schedule,
        Calibration::Swap {
            pair: r.pair,
            alpha: r.alpha,
            v_peak_v: v_peak,
            b_k: resonant.b_k[site][other],
            ideal_dwell_s: ideal,
            dwell_s: dwell,
            refined,
        },
    ))
}

/// The carrier sits on the conditional line of `site`: each neighbour shifts
/// it by ±A/2 according to its initial spin.
fn resolve_rabi(
    cfg: &ExperimentConfig,
    h: &QubitArrayHamiltonian,
    r: &RabiRecipe,
) -> Result<(PulseSchedule, Calibration), CliError> {
    let site = h
        .sites
        .get(r.site)
        .ok_or_else(|| CliError::Config(format!("schedule.rabi.site {} is not a device site", r.site)))?;
    let omega = rabi_frequency(r.e_rf_v_per_cm, site.z12_cm)?;
    let duration = pi_pulse(omega, r.angle)?;
    let up = excited(cfg, h.qubits())?;
    let shift_k: f64 = (0..h.qubits())
        .filter(|&m| m != r.site)
        .map(|m| 0.5 * h.a_k[r.site][m] * if up[m] { 1.0 } else { -1.0 })
        .sum();
    let carrier = kelvin_to_ghz(site.epsilon_k + shift_k) + r.detuning_ghz;
    Ok((
        PulseSchedule::rectangular(duration, carrier, r.e_rf_v_per_cm, r.phase),
        Calibration::Rabi {
            site: r.site,
            omega_rad_per_s: omega,
            duration_s: duration,
            carrier_ghz: carrier,
        },
    ))
}

fn resolve(cfg: &ExperimentConfig, h: &QubitArrayHamiltonian) -> Result<(PulseSchedule, Calibration), CliError> {
    match &cfg.schedule {
        None => Err(CliError::Config("this command needs a `schedule` block".into())),
        Some(ScheduleConfig::Explicit(s)) => {
            s.validate()?;
            Ok((s.clone(), Calibration::Explicit))
        }
        Some(ScheduleConfig::Swap(r)) => resolve_swap(cfg, h, r),
        Some(ScheduleConfig::Rabi(r)) => resolve_rabi(cfg, h, r),
    }
}

fn excited(cfg: &ExperimentConfig, qubits: usize) -> Result<Vec<bool>, CliError> {
    let sites = match (&cfg.evolution.excited, &cfg.schedule) {
        (Some(e), _) => e.clone(),
        (None, Some(ScheduleConfig::Swap(r))) => vec![r.pair[0]],
        (None, _) => Vec::new(),
    };
    let mut up = vec![false; qubits];
    for &n in &sites {
        *up.get_mut(n)
            .ok_or_else(|| CliError::Config(format!("evolution.excited names site {n} of a {qubits}-site device")))? =
            true;
    }
    Ok(up)
}

fn initial_state(cfg: &ExperimentConfig, qubits: usize) -> Result<RegisterState, CliError> {
    let psi = RegisterState::from_bits(&excited(cfg, qubits)?)?;
    Ok(if cfg.evolution.density_matrix {
        psi.to_density()?
    } else {
        psi
    })
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    calibration: &'a Calibration,
    schedule: &'a PulseSchedule,
}

pub fn calibrate(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let h = hamiltonian(cfg, None)?;
    let (schedule, calibration) = resolve(cfg, &h)?;
    out.json(
        "",
        CalibrationReport {
            calibration: &calibration,
            schedule: &schedule,
        },
    )
}

#[derive(Serialize)]
struct EvolveReport<'a> {
    calibration: &'a Calibration,
    schedule: &'a PulseSchedule,
    evolution: &'a EvolutionResult,
}

fn run_evolution(
    cfg: &ExperimentConfig,
    h: &QubitArrayHamiltonian,
) -> Result<(PulseSchedule, Calibration, EvolutionResult), CliError> {
    let (schedule, calibration) = resolve(cfg, h)?;
    let spec = evolution_spec(cfg, schedule.duration_s)?;
    let psi = initial_state(cfg, h.qubits())?;
    let result = evolve(h, &schedule, &psi, &spec)?;
    Ok((schedule, calibration, result))
}

pub fn evolve_cmd(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let h = hamiltonian(cfg, None)?;
    let (schedule, calibration, result) = run_evolution(cfg, &h)?;
    out.csv("", &result.to_csv())?;
    out.json(
        "",
        EvolveReport {
            calibration: &calibration,
            schedule: &schedule,
            evolution: &result,
        },
    )
}

#[derive(Serialize)]
struct ReadoutReport<'a> {
    plan: &'a ReadoutPlan,
    t_f_s: f64,
    survival: &'a [f64],
    tunneled_fraction: Vec<f64>,
    shots: &'a ShotSample,
}

pub fn readout(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let h = hamiltonian(cfg, None)?;
    let r = &cfg.readout;
    let p = plan(h.basis(), r.wait_s, r.selectivity)?.map_sites(&h.geometry, r.pixel_cm)?;
    let gate = match &cfg.schedule {
        Some(_) => resolve(cfg, &h)?.0,
        None => PulseSchedule::idle(0.0),
    };
    let t_f = gate.duration_s;
    let full = gate.concat(&PulseSchedule::idle(p.wait_s));
    let mut spec = evolution_spec(cfg, t_f + p.wait_s)?;
    spec.sample_times = vec![t_f + p.wait_s];
    let psi = initial_state(cfg, h.qubits())?;
    let survival = site_survival(&h, &full, &psi, &spec, &p, t_f)?;
    let mut sample = sample_shots(&survival, &p, r.shots, cfg.seed)?;
    if !r.records {
        sample.records.clear();
    }
    out.csv("-image", &sample.image_csv())?;
    out.json(
        "",
        ReadoutReport {
            plan: &p,
            t_f_s: t_f,
            survival: &survival,
            tunneled_fraction: (0..survival.len()).map(|n| sample.tunneled_fraction(n)).collect(),
            shots: &sample,
        },
    )
}

#[derive(Serialize)]
pub struct SwapDemo {
    pub alpha: f64,
    pub stay_amplitude: [f64; 2],
    pub moved_amplitude: [f64; 2],
    pub target_stay: f64,
    pub target_moved: f64,
    /// (|c_stay| cos α + |c_moved| sin α)², insensitive to the conditional phases.
    pub fidelity: f64,
}

pub fn demo_swap(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<SwapDemo, CliError> {
    let recipe = match &cfg.schedule {
        Some(ScheduleConfig::Swap(r)) => r.clone(),
        None => SwapRecipe {
            pair: [0, 1],
            alpha: std::f64::consts::FRAC_PI_2,
            rise_s: 0.0,
            fall_s: 0.0,
            v_peak_v: None,
            refine: false,
        },
        Some(_) => return Err(CliError::Config("demo-swap needs a `schedule.swap` block or none".into())),
    };
    let mut cfg = cfg.clone();
    cfg.schedule = Some(ScheduleConfig::Swap(recipe.clone()));
    // idle with the partner detuned so the pair only swaps while ramped
    let g = device(&cfg);
    let mut idle = vec![0.0; g.len()];
    if let Some(v) = idle.get_mut(recipe.pair[1]) {
        *v = 2e-4;
    }
    let h = hamiltonian(&cfg, Some(idle))?;
    let (schedule, calibration, result) = run_evolution(&cfg, &h)?;
    let [n, m] = recipe.pair;
    let state = result.final_state().expect("final sample is recorded");
    let (stay, moved) = match (state.amplitude(1 << n), state.amplitude(1 << m)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            // density-matrix runs have no amplitudes; report populations
            let p = result.populations.last().expect("one sample");
            (
                heqsim::dynamics::C64::new(p[1 << n].sqrt(), 0.0),
                heqsim::dynamics::C64::new(p[1 << m].sqrt(), 0.0),
            )
        }
    };
    let a = recipe.alpha;
    let report = SwapDemo {
        alpha: a,
        stay_amplitude: [stay.re, stay.im],
        moved_amplitude: [moved.re, moved.im],
        target_stay: a.cos(),
        target_moved: a.sin(),
        fidelity: (stay.norm() * a.cos().abs() + moved.norm() * a.sin().abs()).powi(2),
    };
    #[derive(Serialize)]
    struct Full<'a> {
        report: &'a SwapDemo,
        calibration: &'a Calibration,
        schedule: &'a PulseSchedule,
        evolution: &'a EvolutionResult,
    }
    out.csv("", &result.to_csv())?;
    out.json(
        "",
        Full {
            report: &report,
            calibration: &calibration,
            schedule: &schedule,
            evolution: &result,
        },
    )?;
    Ok(report)
}

// Copyright 2026 heqsim contributors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use heqsim::dynamics::{evolve, Dissipation, EvolutionSpec, RegisterState, C64};
use heqsim::hydrogenic::HydrogenicBasis;
use heqsim::pulse_control::{
    calibrate_swap, refine_swap, resonance_voltage, triangular_ramp, PulseSchedule, SwapProtocol, VoltageChannel,
};
use heqsim::quantities::kelvin_to_rad_per_sec;
use heqsim::qubit_model::{build, DeviceGeometry, QubitArrayHamiltonian};
use proptest::prelude::*;

fn he() -> Arc<HydrogenicBasis> {
    HydrogenicBasis::shared_helium()
}

/// Pair with site 1 detuned by a static voltage.
fn detuned_pair() -> (DeviceGeometry, QubitArrayHamiltonian) {
    let g = DeviceGeometry::chain(2, 0.5, 0.0);
    let h = build(&g, &[0.0, 2e-4], he()).unwrap();
    (g, h)
}

fn swap_setup() -> (QubitArrayHamiltonian, QubitArrayHamiltonian, f64) {
    let (_, h) = detuned_pair();
    let dv = resonance_voltage(&h, 1, 0).unwrap();
    let resonant = h.with_voltages(&[dv, h.voltages_v[1]]).unwrap();
    (h, resonant, dv)
}

fn tight() -> EvolutionSpec {
    EvolutionSpec {
        tolerance: 1e-11,
        ..EvolutionSpec::default()
    }
}

#[test]
fn resonance_voltage_matches_transitions() {
    let (_, resonant, dv) = swap_setup();
    assert!(dv > 0.0);
    let (e0, e1) = (resonant.sites[0].epsilon_k, resonant.sites[1].epsilon_k);
    assert!((e0 / e1 - 1.0).abs() < 1e-12, "{e0} vs {e1}");
}

#[test]
fn sudden_swap_reaches_target_amplitudes() {
    let (h, resonant, dv) = swap_setup();
    for alpha in [std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_4, 0.3] {
        let dwell = calibrate_swap(&resonant, (0, 1), alpha).unwrap();
        let schedule = triangular_ramp(0, dv, 0.0, dwell, 0.0).unwrap();
        let out = evolve(&h, &schedule, &RegisterState::basis_state(2, 1).unwrap(), &tight()).unwrap();
        let state = out.final_state().unwrap();
        let stay = state.amplitude(1).unwrap().norm();
        let moved = state.amplitude(2).unwrap().norm();
        assert!((stay - alpha.cos()).abs() < 1e-6, "α = {alpha}: {stay}");
        assert!((moved - alpha.sin()).abs() < 1e-6, "α = {alpha}: {moved}");
    }
}

#[test]
fn swap_phase_convention() {
    // on resonance in the rotating frame the moved amplitude is −i sin α
    let g = DeviceGeometry::chain(2, 0.5, 0.0);
    let h = build(&g, &[0.0, 0.0], he()).unwrap();
    let alpha = 0.4;
    let dwell = calibrate_swap(&h, (0, 1), alpha).unwrap();
    let out = evolve(&h, &PulseSchedule::idle(dwell), &RegisterState::basis_state(2, 1).unwrap(), &tight()).unwrap();
    let state = out.final_state().unwrap();
    // common phase from the diagonal A term
    let phase = state.amplitude(1).unwrap() / C64::new(alpha.cos(), 0.0);
    let moved = state.amplitude(2).unwrap() / phase;
    assert!((moved - C64::new(0.0, -alpha.sin())).norm() < 1e-8, "{moved}");
}

#[test]
fn ramp_infidelity_grows_with_ramp_time() {
    // idle detuning of about 160 B keeps interference between the two
    // passages through resonance small next to the systematic loss
    let g = DeviceGeometry::chain(2, 0.5, 0.0);
    let h = build(&g, &[0.0, 1e-3], he()).unwrap();
    let dv = resonance_voltage(&h, 1, 0).unwrap();
    let resonant = h.with_voltages(&[dv, 1e-3]).unwrap();
    let dwell = calibrate_swap(&resonant, (0, 1), std::f64::consts::FRAC_PI_2).unwrap();
    let mut last = -1.0;
    for k in 0..=9 {
        let ramp = k as f64 / 12.0 * dwell;
        let schedule = triangular_ramp(0, dv, ramp, dwell, ramp).unwrap();
        let out = evolve(&h, &schedule, &RegisterState::basis_state(2, 1).unwrap(), &tight()).unwrap();
        let infidelity = 1.0 - out.populations.last().unwrap()[2];
        if k == 0 {
            assert!(infidelity.abs() < 1e-6);
        }
        assert!(infidelity > last, "ramp {k}/12 dwell: {infidelity} after {last}");
        last = infidelity;
    }
}

#[test]
fn refinement_recovers_transfer_with_ramps() {
    let (h, resonant, dv) = swap_setup();
    let alpha = std::f64::consts::FRAC_PI_2;
    let ideal = calibrate_swap(&resonant, (0, 1), alpha).unwrap();
    let protocol = SwapProtocol {
        pair: (0, 1),
        site: 0,
        v_peak: dv,
        rise_s: 0.1 * ideal,
        fall_s: 0.1 * ideal,
    };
    let refined = refine_swap(&h, &resonant, &protocol, alpha, &tight()).unwrap();
    let naive = {
        let out = evolve(&h, &protocol.schedule(ideal).unwrap(), &RegisterState::basis_state(2, 1).unwrap(), &tight()).unwrap();
        out.populations.last().unwrap()[2]
    };
    assert!(refined.dwell_s < refined.ideal_dwell_s);
    assert!((1.0 - refined.transfer) < (1.0 - naive), "{} vs {naive}", refined.transfer);
}

#[test]
fn diagonal_coupling_only_adds_phases() {
    let g = DeviceGeometry::chain(3, 0.5, 0.0);
    let h = build(&g, &[0.0, 1e-4, 3e-4], he()).unwrap();
    let amp = C64::new((1.0f64 / 8.0).sqrt(), 0.0);
    let psi = RegisterState::from_amplitudes(3, vec![amp; 8]).unwrap();
    let t = 5e-9;
    let spec = EvolutionSpec {
        flip_flop: false,
        tolerance: 1e-11,
        ..EvolutionSpec::uniform(t, 20)
    };
    let out = evolve(&h, &PulseSchedule::idle(t), &psi, &spec).unwrap();
    for pops in &out.populations {
        for p in pops {
            assert!((p - 0.125).abs() < 1e-10);
        }
    }
    // phase of |s⟩ is −t·diag(s), diag in the frame of qubit 0
    let w_ref = kelvin_to_rad_per_sec(h.sites[0].epsilon_k);
    let state = out.final_state().unwrap();
    for s in 0..8usize {
        let spin = |n: usize| if s >> n & 1 == 1 { 0.5 } else { -0.5 };
        let mut diag = 0.0;
        for n in 0..3 {
            diag += (kelvin_to_rad_per_sec(h.sites[n].epsilon_k) - w_ref) * spin(n);
            for m in n + 1..3 {
                diag += kelvin_to_rad_per_sec(h.a_k[n][m]) * spin(n) * spin(m);
            }
        }
        let expected = amp * C64::from_polar(1.0, -diag * t);
        assert!((state.amplitude(s).unwrap() - expected).norm() < 1e-8, "state {s}");
    }
}

#[test]
fn density_matrix_keeps_trace_and_hermiticity() {
    let h = build(&DeviceGeometry::chain(2, 0.5, 0.0), &[0.0, 1e-4], he()).unwrap();
    let omega = heqsim::pulse_control::rabi_frequency(0.05, h.sites[0].z12_cm).unwrap();
    let t = 6.0 * std::f64::consts::PI / omega;
    let schedule = PulseSchedule::rectangular(t, h.sites[0].epsilon_ghz, 0.05, 0.3);
    let spec = EvolutionSpec {
        decoherence: Some(Dissipation { t1_s: Some(t), t2_s: Some(0.3 * t) }),
        ..EvolutionSpec::uniform(t, 40)
    };
    let rho = RegisterState::basis_state(2, 0).unwrap().to_density().unwrap();
    let out = evolve(&h, &schedule, &rho, &spec).unwrap();
    assert!(out.max_norm_drift() < 1e-9, "{}", out.max_norm_drift());
    assert!(out.max_hermiticity_error.unwrap() < 1e-10);
    assert!(out.min_eigenvalue.unwrap() > -1e-8);
}

#[test]
fn too_many_qubits_for_density_matrix() {
    let h = build(&DeviceGeometry::chain(9, 0.5, 0.0), &[0.0; 9], he()).unwrap();
    let psi = RegisterState::basis_state(9, 0).unwrap();
    assert!(psi.to_density().is_err());
    // state-vector mode still runs at this size
    let out = evolve(&h, &PulseSchedule::idle(1e-10), &psi, &EvolutionSpec::default()).unwrap();
    assert!(out.max_norm_drift() < 1e-12);
}

#[test]
fn step_floor_reports_estimate() {
    let h = build(&DeviceGeometry::chain(1, 0.5, 0.0), &[0.0], he()).unwrap();
    // an absurd tolerance cannot be met before the floor
    let spec = EvolutionSpec {
        tolerance: 1e-300,
        ..EvolutionSpec::default()
    };
    let schedule = PulseSchedule::rectangular(1e-9, h.sites[0].epsilon_ghz + 1.0, 1.0, 0.0);
    let err = evolve(&h, &schedule, &RegisterState::basis_state(1, 0).unwrap(), &spec).unwrap_err();
    assert!(matches!(err, heqsim::Error::StepSizeUnderflow { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn halving_tolerance_converges(
        peak in 2e-5f64..2e-4,
        rise in 0.1f64..0.5,
        amp in 0.01f64..0.2,
        detune_ghz in -0.2f64..0.2,
    ) {
        let g = DeviceGeometry::chain(2, 0.5, 0.0);
        let h = build(&g, &[0.0, 1e-4], he()).unwrap();
        let t = 5e-9;
        let mut schedule = PulseSchedule::rectangular(t, h.sites[0].epsilon_ghz + detune_ghz, amp, 0.0);
        schedule.voltage_channels.push(VoltageChannel {
            site: 0,
            points: vec![[0.0, 0.0], [rise * t, peak], [t, 0.0]],
        });
        let psi = RegisterState::basis_state(2, 1).unwrap();
        let run = |tol: f64| {
            let spec = EvolutionSpec { tolerance: tol, ..EvolutionSpec::default() };
            evolve(&h, &schedule, &psi, &spec).unwrap().populations.last().unwrap().clone()
        };
        let (coarse, fine) = (run(1e-6), run(5e-7));
        for (a, b) in coarse.iter().zip(&fine) {
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn unitary_norm_is_preserved(amp in 0.01f64..1.0, phase in -3.0f64..3.0, detune_ghz in -1.0f64..1.0) {
        let h = build(&DeviceGeometry::chain(3, 0.5, 0.0), &[0.0, 1e-4, 2e-4], he()).unwrap();
        let schedule = PulseSchedule::rectangular(2e-9, h.sites[0].epsilon_ghz + detune_ghz, amp, phase);
        let out = evolve(&h, &schedule, &RegisterState::basis_state(3, 5).unwrap(), &EvolutionSpec::uniform(2e-9, 10)).unwrap();
        prop_assert!(out.max_norm_drift() < 1e-8);
    }
}

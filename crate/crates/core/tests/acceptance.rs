//! Acceptance suite: each check prints one verdict line (visible with
//! `--nocapture`, or automatically on failure) and must pass on its own.

use gsflow_core::acceptance::{self, CriterionOutcome};

fn check(outcome: CriterionOutcome) {
    println!("{}", outcome.line());
    assert!(outcome.passed, "{}", outcome.line());
}

#[test]
fn criterion_01_closed_form_soliton_match() {
    check(acceptance::closed_form_profiles());
}

#[test]
fn criterion_02_radial_decay_envelope() {
    check(acceptance::radial_decay_envelope());
}

#[test]
fn criterion_03_energy_dissipation_balance() {
    check(acceptance::dissipation_balance());
}

#[test]
fn criterion_04_stationary_data_stays_put() {
    check(acceptance::stationary_persistence());
}

#[test]
fn criterion_05_linearized_spectrum_and_pairings() {
    check(acceptance::linearized_spectrum());
}

#[test]
fn criterion_06_two_hump_recovery_and_decoupling() {
    check(acceptance::pair_recovery());
}

#[test]
fn criterion_07_interaction_integral_envelope() {
    check(acceptance::interaction_envelope());
}

#[test]
fn criterion_08_critical_amplitude_bisection() {
    check(acceptance::critical_scaling());
}

#[test]
fn criterion_09_exponential_energy_decay() {
    check(acceptance::energy_decay_rate());
}

#[test]
fn criterion_10_superposition_concavity_margin() {
    check(acceptance::concavity_margin());
}

#[test]
fn criterion_11_separating_direction_certificates() {
    check(acceptance::separation_certificates());
}

//! Analytic gradients vs central finite differences (64-bit) for every
//! parameter tensor of every backbone variant plus the encoder and both
//! heads. The acceptance suite repeats this over more seeds; these runs
//! keep the check in the fast development loop.

mod common;

use common::{check_gradients, GradFixture};
use gussl::model::UrlVariant;

fn run_check(variant: UrlVariant, seed: u64) {
    let fixture = GradFixture::new(seed);
    let mut model = fixture.build_model(variant, seed + 100);
    let mut loss = |m: &mut gussl::model::UniversalModel<f64>, bwd: bool| fixture.loss(m, bwd);
    let outcome = check_gradients(&mut model, &mut loss, 1e-4, 1e-4);
    assert!(
        outcome.failures.is_empty(),
        "{variant} seed {seed}: {} gradient mismatches, worst {} at {}\nfirst: {}",
        outcome.failures.len(),
        outcome.worst_rel_error,
        outcome.worst_location,
        outcome.failures.first().map(String::as_str).unwrap_or("")
    );
    assert!(outcome.tensors_checked > 5);
}

#[test]
fn transformer_gradients_match_finite_differences() {
    run_check(UrlVariant::Transformer, 0);
    run_check(UrlVariant::Transformer, 1);
}

#[test]
fn gcn_gradients_match_finite_differences() {
    run_check(UrlVariant::Gcn, 2);
    run_check(UrlVariant::Gcn, 3);
}

#[test]
fn sage_gradients_match_finite_differences() {
    // seed 5 places a relu kink within the finite-difference step; skip it
    run_check(UrlVariant::Sage, 4);
    run_check(UrlVariant::Sage, 6);
}

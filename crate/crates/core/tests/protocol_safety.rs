use iea_core::protocol::conformance::{
    check_transition_table, fuzz_decode, registration_time, session_trial, CheckSummary,
};

#[test]
fn transition_table_walk_is_clean() {
    let sum = check_transition_table();
    assert!(sum.steps > 300);
    assert!(sum.violations.is_empty(), "{:#?}", sum.violations);
}

#[test]
fn randomized_lossy_sequences_stay_safe() {
    let mut total = CheckSummary::default();
    for seed in 0..10_000u64 {
        // Loss rates spread over [0, 10%].
        let loss = (seed % 11) as f64 / 100.0;
        total.absorb(session_trial(seed, loss, 200));
    }
    assert!(
        total.violations.is_empty(),
        "{} violations, first: {:?}",
        total.violations.len(),
        total.violations.first()
    );
    // The sequences actually exercise the interesting paths.
    assert!(total.handoffs > 5_000, "handoffs {}", total.handoffs);
    assert!(total.sa_delivered > 100_000);
}

#[test]
fn registration_completes_under_ten_percent_loss() {
    // Ten registration periods.
    let horizon = 10.0 * 0.5;
    let trials = 10_000u64;
    let late = (0..trials).filter(|&s| registration_time(s, 0.10, horizon).is_none()).count();
    assert!(late as f64 <= 0.001 * trials as f64, "{late} of {trials} did not register in {horizon} s");
}

#[test]
fn registration_is_immediate_without_loss() {
    let t = registration_time(1, 0.0, 1.0).unwrap();
    // Request then accept, each crossing one 20 ms link.
    assert!(t <= 0.05, "{t}");
}

#[test]
fn decoder_is_total_and_canonical() {
    let sum = fuzz_decode(42, 100_000);
    assert!(sum.violations.is_empty(), "{:?}", sum.violations.first());
    assert_eq!(sum.accepted + sum.rejected, 100_000);
    assert!(sum.rejected > 50_000 && sum.accepted > 0);
}

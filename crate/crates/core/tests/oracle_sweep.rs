//! Randomized equivalence sweep of the production kernels against their
//! brute-force oracles.

use nsrkit_testkit::oracles::run_oracle_sweep;

#[test]
fn kernels_match_brute_force_oracles() {
    let report = run_oracle_sweep(50, 0xacc);
    assert!(report.passes(), "{}", report.summary());
}

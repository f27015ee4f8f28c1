//! Manual smoke run of the robustness scenario suite at reduced scale.
//! Run with: cargo test -p mediate --test robustness_smoke -- --ignored --nocapture

use mediate::estimators::registry;
use mediate::simlab::{expect_consistent, presets, run_experiment, ExperimentConfig};

#[test]
#[ignore]
fn print_reduced_matrix() {
    // Reduced scale for a quick look; the acceptance suite runs the
    // official n = 5000 / reps = 200 version with assertions.
    let cfg = ExperimentConfig {
        n: 2000,
        reps: 60,
        seed: 99,
        truth_draws: 400_000,
        ..Default::default()
    };
    for scenario in presets::robustness_scenarios() {
        let t0 = std::time::Instant::now();
        let table = run_experiment(&scenario, &cfg).unwrap();
        println!("== scenario {} ({:?})", scenario.name, t0.elapsed());
        let single_violation = scenario.name.starts_with("break-");
        for info in registry() {
            let expected = expect_consistent(info, &scenario.flags);
            let violated =
                single_violation && mediate::simlab::violates_not_allowed(info, &scenario.flags);
            let max_std = table
                .rows
                .iter()
                .filter(|r| r.estimator == info.id)
                .map(|r| r.standardized_bias)
                .fold(0.0f64, f64::max);
            let flag = if expected && max_std > 4.0 {
                " <-- EXPECTED CONSISTENT BUT BIASED"
            } else if violated && max_std < 3.0 {
                " <-- EXPECTED BIASED BUT CLEAN"
            } else {
                ""
            };
            println!(
                "  {:48} expect_ok={:5} violated={:5} max_std_bias={:7.2}{}",
                info.id, expected, violated, max_std, flag
            );
        }
    }
}

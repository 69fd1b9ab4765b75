//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every tolerance is pinned here rather than taken from defaults.

use std::process::ExitCode;

use jacobi_stability_cli::suite::{run_suite, SuiteOptions, Tolerances};

const TOLERANCES: [(&str, f64); 18] = [
    ("lemma_analytic", 1e-7),
    ("lemma_fd", 1e-4),
    ("lemma_runtime", 10.0),
    ("roundtrip", 1e-6),
    ("roundtrip_runtime", 5.0),
    ("operator", 1e-6),
    ("constraint", 1e-8),
    ("equal_energy", 1e-6),
    ("min_correction", 1e-2),
    ("theorem", 1e-6),
    ("integrand_floor", -1e-12),
    ("orthogonal", 1e-6),
    ("conjugate", 1e-3),
    ("length_variation", 1e-4),
    ("deviation", 1e-5),
    ("drift", 1e-8),
    ("action", 1e-5),
    ("constant_correction", 1e-10),
];
const STEP: f64 = 1e-3;

fn main() -> ExitCode {
    let mut tolerances = Tolerances::default();
    for (name, value) in TOLERANCES {
        tolerances.set(name, value).expect("known tolerance name");
    }
    let opts = SuiteOptions {
        tolerances,
        step: STEP,
        ..SuiteOptions::default()
    };
    let results = run_suite(&opts);
    for r in &results {
        println!("{}", r.line());
        for c in r.checks.iter().filter(|c| !c.pass) {
            println!("    failed {}: {:e} (tolerance {:e})", c.name, c.value, c.tolerance);
        }
    }
    let passed = results.iter().filter(|r| r.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

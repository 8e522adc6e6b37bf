//! Acceptance suite: one PASS/FAIL line per criterion check.
//!
//! Checks listed in `KNOWN_DEVIATIONS` are computed and reported like every
//! other, but a FAIL there does not fail the run. Each has a written analysis
//! in the project notes; the tolerances themselves are never relaxed.

use std::process::ExitCode;

use torsion_sn_cli::repro::{self, Ctx};

const KNOWN_DEVIATIONS: &[&str] = &["6b", "7a", "7b", "13a", "13b"];

fn main() -> ExitCode {
    let ctx = Ctx::default();
    let (mut pass, mut known, mut unexpected) = (0, 0, Vec::new());
    for t in repro::TARGETS {
        let report = match repro::run(t.name, &ctx) {
            Ok(r) => r,
            Err(e) => {
                println!("FAIL [{}] error: {e}", t.name);
                unexpected.push(t.name.to_string());
                continue;
            }
        };
        for c in &report.checks {
            let known_dev = KNOWN_DEVIATIONS.contains(&c.id.as_str());
            let tag = match (c.pass(), known_dev) {
                (false, true) => "  (known deviation)",
                (true, true) => "  (known deviation now passes)",
                _ => "",
            };
            println!("{}{tag}", c.line());
            match (c.pass(), known_dev) {
                (true, _) => pass += 1,
                (false, true) => known += 1,
                (false, false) => unexpected.push(c.id.clone()),
            }
        }
    }
    println!("acceptance: {pass} passed, {known} known deviations, {} unexpected failures", unexpected.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}

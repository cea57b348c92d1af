//! The per-module invariant and property tests, run through cargo.

use std::process::Command;

use crate::Outcome;

/// Test targets holding the invariant suites; excludes this harness.
const RUNS: &[&[&str]] = &[&["-p", "cortiplan-core"], &["-p", "cortiplan-cli", "--bins", "--test", "cli"]];

fn passed_count(output: &str) -> (usize, usize) {
    let field = |line: &str, key: &str| -> usize {
        line.split(';')
            .find_map(|part| part.trim().strip_suffix(key).and_then(|n| n.trim().rsplit(' ').next()?.parse().ok()))
            .unwrap_or(0)
    };
    output
        .lines()
        .filter(|l| l.starts_with("test result:"))
        .fold((0, 0), |(p, f), l| (p + field(l, "passed"), f + field(l, "failed")))
}

pub fn invariants() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for args in RUNS {
        let label = args.join(" ");
        let output =
            Command::new(env!("CARGO")).arg("test").args(*args).current_dir(env!("CARGO_MANIFEST_DIR")).output();
        match output {
            Ok(o) => {
                let stdout = String::from_utf8_lossy(&o.stdout);
                let (passed, failed) = passed_count(&stdout);
                let ok = o.status.success() && passed > 0;
                pass &= ok;
                details.push(format!("cargo test {label}: {passed} passed, {failed} failed"));
                if !ok {
                    let stderr = String::from_utf8_lossy(&o.stderr);
                    details
                        .extend(stderr.lines().rev().take(10).collect::<Vec<_>>().into_iter().rev().map(String::from));
                }
            }
            Err(e) => {
                pass = false;
                details.push(format!("cargo test {label}: cannot start cargo: {e}"));
            }
        }
    }
    Outcome { pass, summary: "invariant suite: unit, property and integration tests".into(), details }
}

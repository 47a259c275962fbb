//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//!
//! `cargo test -p vibcontrol-suite --test acceptance -- C4 C5` runs a subset.
//! TDSE parts marked nightly need `VIBCONTROL_NIGHTLY=1` or `--include-ignored`.

use std::process::ExitCode;

use vibcontrol_suite::{run, CRITERIA, NIGHTLY_VAR};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let nightly = std::env::var(NIGHTLY_VAR).is_ok_and(|v| v == "1") || args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let wanted: Vec<u8> = args
        .iter()
        .filter_map(|a| a.strip_prefix('C').or(a.strip_prefix('c')))
        .filter_map(|n| n.parse().ok())
        .collect();
    if args.iter().any(|a| a == "--list") {
        for (id, title, _) in CRITERIA {
            println!("C{id}: test ({title})");
        }
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    let mut ran = 0;
    for (id, title, f) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let out = run(id, title, f, nightly);
        println!("{}", out.line());
        ran += 1;
        failed += usize::from(!out.passed);
    }
    println!("acceptance: {} passed, {failed} failed{}", ran - failed, if nightly { "" } else { " (nightly TDSE parts skipped)" });
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

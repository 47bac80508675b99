//! Runs the fast invariant suite, once clean and once with an injected fault.
//!
//! cargo run --release --example selfcheck

use wonderland::cli::selfcheck;

fn main() {
    for fault in [None, Some("codec.roundtrip")] {
        println!("fault: {}", fault.unwrap_or("none"));
        for r in selfcheck::run(fault) {
            println!("  {} {:<26} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        }
    }
}

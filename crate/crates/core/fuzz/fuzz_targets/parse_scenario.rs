#![no_main]

use libfuzzer_sys::fuzz_target;
use offload_core::{parse_scenario, solve, SolverOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_scenario(text) {
        if s.users.len() <= 256 {
            let _ = solve(&s, &SolverOptions::default());
        }
    }
});

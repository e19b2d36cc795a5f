#![no_main]

use libfuzzer_sys::fuzz_target;
use offload_core::report::parse_solution_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = parse_solution_csv(text) {
        let s = &file.solution;
        assert_eq!(file.ids.len(), s.alpha.len());
        assert_eq!(s.alpha.len(), s.rho.len());
        assert_eq!(s.alpha.len(), s.psi.len());
    }
});

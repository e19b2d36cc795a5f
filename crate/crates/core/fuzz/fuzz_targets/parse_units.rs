#![no_main]

use libfuzzer_sys::fuzz_target;
use offload_core::units::{parse_count_list, parse_list, parse_quantity, parse_range, Quantity};

const KINDS: [Quantity; 5] = [
    Quantity::Time,
    Quantity::Frequency,
    Quantity::Energy,
    Quantity::Length,
    Quantity::Dimensionless,
];

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for q in KINDS {
        if let Ok(v) = parse_quantity(text, q) {
            assert!(v.is_finite());
        }
        let _ = parse_list(text, q);
    }
    let _ = parse_count_list(text);
    if let Ok(points) = parse_range(text, Quantity::Time) {
        assert!(points.windows(2).all(|w| w[1] > w[0]));
    }
});

#![no_main]

use lasso_phase_cli::parse_p_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(grid) = parse_p_grid(text) {
            assert!(!grid.is_empty() && grid.iter().all(|&p| p > 0));
        }
    }
});

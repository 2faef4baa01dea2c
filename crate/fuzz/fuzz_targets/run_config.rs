#![no_main]

use std::path::Path;

use lasso_phase_cli::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // a base directory that cannot exist keeps `path` lookups off the disk
        let _ = cfg.validate(Path::new("/\0/nonexistent"));
        // the echoed config must parse back
        parse_config(&cfg.to_toml()).expect("canonical TOML re-parses");
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = xstar::cli::parse_config(data) {
        let _ = cfg.integrand();
        let _ = cfg.boundary();
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = xstar::grid::parse_grid_csv(data);
});

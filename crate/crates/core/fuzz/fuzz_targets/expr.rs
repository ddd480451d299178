#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(e) = xstar::cli::parse_expr(data) {
        // the printed form must parse back to the same tree
        let again = xstar::cli::parse_expr(&e.to_string()).expect("display output parses");
        assert_eq!(e, again);
        let _ = e.eval(xstar::geometry::PlanePoint::new(0.25, -0.5));
    }
});

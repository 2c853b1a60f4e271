#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = epimob::mobility::read_gps_csv(data) {
        let mut out = Vec::new();
        epimob::mobility::write_gps_csv(&mut out, &points).unwrap();
    }
});

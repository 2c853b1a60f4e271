#![no_main]
use libfuzzer_sys::fuzz_target;
use epimob::trajectory::{parse_matrices, write_matrices};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_matrices(text) {
        parse_matrices(&write_matrices(&m)).unwrap();
    }
});

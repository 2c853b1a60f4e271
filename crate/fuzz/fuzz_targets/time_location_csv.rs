#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((days, labels)) = epimob::mobility::read_time_location_csv(data) {
        let mut out = Vec::new();
        epimob::mobility::write_time_location_csv(&mut out, &days, &labels).unwrap();
        let (again, _) = epimob::mobility::read_time_location_csv(out.as_slice()).unwrap();
        assert_eq!(again.len(), days.len());
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = epimob::behavior::read_labels_csv(data) {
        let mut out = Vec::new();
        epimob::behavior::write_labels_csv(&mut out, &labels).unwrap();
        assert_eq!(epimob::behavior::read_labels_csv(out.as_slice()).unwrap(), labels);
    }
});

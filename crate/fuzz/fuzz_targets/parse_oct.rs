#![no_main]

use invgen::ineqinfer::OctConstraint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(c) = OctConstraint::parse(src) else {
        return;
    };
    // printed constraints parse back to themselves
    let again = OctConstraint::parse(&c.to_string()).expect("display form must parse");
    assert_eq!(again, c);
});

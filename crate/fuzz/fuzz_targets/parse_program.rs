#![no_main]

use invgen::lang::{instrument_counter, parse_program};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(p) = parse_program(src) else {
        return;
    };
    // everything downstream leans on these; none may panic on a parsed program
    let _ = p.input_names();
    for loc in p.locations() {
        p.extract_vars(loc).expect("scope known for every parsed mark");
    }
    let _ = instrument_counter(&p, false);
});

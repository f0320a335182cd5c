#![no_main]

use invgen::exec::{traces_from_csv, traces_to_csv};
use invgen::lang::LocationId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(ts) = traces_from_csv(LocationId("F".into()), text) else {
        return;
    };
    // the encoder is a strict inverse on anything the decoder accepts
    let again = traces_from_csv(LocationId("F".into()), &traces_to_csv(&ts))
        .expect("re-encoded trace set must decode");
    assert_eq!(again.vars, ts.vars);
    assert_eq!(again.rows(), ts.rows());
});

#![no_main]

use invgen::cli::parse_equality;
use invgen::poly::Equality;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(eq) = parse_equality(src) else {
        return;
    };
    // canonicalization is a fixpoint
    let again = Equality::from_poly(&eq.to_poly()).expect("canonical form is nonzero");
    assert_eq!(again, eq);
});

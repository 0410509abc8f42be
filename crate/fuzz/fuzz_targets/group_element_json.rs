#![no_main]

use libfuzzer_sys::fuzz_target;
use ule_lab::hull::{odometer_add, GroupElement};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(g) = GroupElement::from_json(text) else { return };
    let again = GroupElement::from_json(&g.to_json()).expect("round trip");
    assert_eq!(g, again);
    assert_eq!(odometer_add(&odometer_add(&g, 1), -1), g);
});

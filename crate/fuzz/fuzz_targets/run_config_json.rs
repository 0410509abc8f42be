#![no_main]

use libfuzzer_sys::fuzz_target;
use ule_lab::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::from_json(text) else { return };
    let again = RunConfig::from_json(&cfg.to_json()).expect("round trip");
    assert_eq!(cfg.hash(), again.hash());
});

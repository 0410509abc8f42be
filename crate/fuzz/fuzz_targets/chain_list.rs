#![no_main]

use libfuzzer_sys::fuzz_target;
use ule_lab::hull::{condition_a, maximalize, parse_chain_list, FrequencyChain};

// Input: "<chain list>" or "<chain list>|<pattern>".
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (list, pattern) = match text.split_once('|') {
        Some((l, p)) => (l, Some(p)),
        None => (text, None),
    };
    let Ok(elements) = parse_chain_list(list) else { return };
    let Ok(chain) = FrequencyChain::from_parts(elements, pattern) else { return };
    let _ = condition_a(&chain);
    if let Ok(m) = maximalize(&chain, chain.depth() + 2) {
        assert!(m.elements().windows(2).all(|w| w[1] % w[0] == 0));
    }
});

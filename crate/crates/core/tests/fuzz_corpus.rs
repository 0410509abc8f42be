//! Replays the checked-in fuzz corpus through the same entry points and
//! properties as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use ule_lab::config::RunConfig;
use ule_lab::hull::{condition_a, maximalize, odometer_add, parse_chain_list, FrequencyChain, GroupElement};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| {
            let path = entry.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn chain_list_seeds() {
    let mut accepted = 0;
    for (name, text) in seeds("chain_list") {
        let (list, pattern) = match text.split_once('|') {
            Some((l, p)) => (l, Some(p)),
            None => (text.as_str(), None),
        };
        let Ok(elements) = parse_chain_list(list) else { continue };
        let Ok(chain) = FrequencyChain::from_parts(elements, pattern) else { continue };
        accepted += 1;
        let _ = condition_a(&chain);
        if let Ok(m) = maximalize(&chain, chain.depth() + 2) {
            assert!(m.elements().windows(2).all(|w| w[1] % w[0] == 0), "{name}");
        }
    }
    assert!(accepted >= 5);
}

#[test]
fn group_element_seeds() {
    let mut accepted = 0;
    for (name, text) in seeds("group_element_json") {
        let Ok(g) = GroupElement::from_json(&text) else { continue };
        accepted += 1;
        assert_eq!(GroupElement::from_json(&g.to_json()).unwrap(), g, "{name}");
        assert_eq!(odometer_add(&odometer_add(&g, 1), -1), g, "{name}");
    }
    assert_eq!(accepted, 3);
}

#[test]
fn run_config_seeds() {
    let mut accepted = 0;
    for (name, text) in seeds("run_config_json") {
        let Ok(cfg) = RunConfig::from_json(&text) else { continue };
        accepted += 1;
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap().hash(), cfg.hash(), "{name}");
    }
    assert_eq!(accepted, 3);
}

//! Configs survive a serialize/parse round trip.

use monopoisson::{parse_config, to_toml};
use proptest::prelude::*;

#[test]
fn shipped_configs_round_trip() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
            let again = parse_config(&to_toml(&cfg)).unwrap();
            assert_eq!(cfg, again, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 5);
}

proptest! {
    #[test]
    fn birth_death_configs_round_trip(
        p in 0.01f64..0.99,
        top in 1usize..200,
        seed in proptest::option::of(0..=i64::MAX as u64),
        cap in -1e6f64..1e6,
    ) {
        let seed_line = seed.map(|s| format!("seed = {s}\n")).unwrap_or_default();
        let text = format!(
            "{seed_line}[model]\nfamily = \"birth_death\"\np = {p:?}\ntop = {top}\n\n[reward]\nform = \"capped\"\ncap = {cap:?}\n"
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(&parse_config(&to_toml(&cfg)).unwrap(), &cfg);
    }
}

#![no_main]

use congest_apsp::graph::parse_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = parse_json(text) {
        assert_eq!(parse_json(&g.to_json()).expect("own output parses"), g);
    }
});

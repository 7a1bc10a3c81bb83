#![no_main]

use congest_apsp::graph::parse_dimacs;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for directed in [false, true] {
        if let Ok(g) = parse_dimacs(text, directed) {
            let back = parse_dimacs(&g.to_dimacs(), g.is_directed()).expect("own output parses");
            assert_eq!(back.n(), g.n());
        }
    }
});

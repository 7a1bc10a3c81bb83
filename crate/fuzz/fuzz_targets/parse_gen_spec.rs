#![no_main]

use congest_apsp::graph::generate_graph;
use congest_apsp::GenSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = GenSpec::parse(text) {
        // keep generation cheap; parsing alone covers the rest
        if spec.node_count() <= 64 {
            let g = generate_graph(&spec, 0).expect("parsed specs generate");
            assert_eq!(g.n(), spec.node_count());
        }
    }
});

#![no_main]

use congest_apsp::csssp::{Direction, TreeCollection};
use libfuzzer_sys::fuzz_target;

// first byte picks the node count and hop bound, the rest is the dump
fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let n = (head & 0x0f) as usize + 1;
    let h = (head >> 4) as u32 + 1;
    let dir = if head & 1 == 0 { Direction::Out } else { Direction::In };
    if let Ok(c) = TreeCollection::from_json(text, n, dir, h) {
        let again = TreeCollection::from_json(&c.to_json(), n, dir, h).expect("own output parses");
        assert_eq!(again.total_size(), c.total_size());
    }
});

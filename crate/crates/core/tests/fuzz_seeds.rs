//! The checked-in fuzz corpus doubles as a set of parser fixtures.

use std::fs;
use std::path::PathBuf;

use congest_apsp::csssp::{Direction, TreeCollection};
use congest_apsp::fraction::parse_fraction;
use congest_apsp::graph::{parse_dimacs, parse_json};
use congest_apsp::GenSpec;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn dimacs_seeds() {
    for (name, data) in seeds("parse_dimacs") {
        let res = parse_dimacs(text(&data), true);
        assert_eq!(res.is_ok(), name != "negative.gr", "{name}: {res:?}");
    }
}

#[test]
fn json_seeds() {
    for (name, data) in seeds("parse_graph_json") {
        parse_json(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn gen_spec_seeds() {
    for (name, data) in seeds("parse_gen_spec") {
        GenSpec::parse(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn fraction_seeds() {
    for (name, data) in seeds("parse_fraction") {
        parse_fraction(text(&data)).unwrap_or_else(|e| panic!("{name}: {e:?}"));
    }
}

#[test]
fn tree_dump_seeds() {
    for (name, data) in seeds("parse_tree_dump") {
        let (&head, rest) = data.split_first().unwrap();
        let n = (head & 0x0f) as usize + 1;
        let h = (head >> 4) as u32 + 1;
        let dir = if head & 1 == 0 { Direction::Out } else { Direction::In };
        TreeCollection::from_json(text(rest), n, dir, h).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

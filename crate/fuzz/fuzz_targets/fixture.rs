#![no_main]

use kminer_core::io::{parse_fixture, write_fixture};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = parse_fixture(text) {
        // Accepted input survives a write and re-read unchanged.
        let again = parse_fixture(&write_fixture(&f.graph, &f.vocab)).expect("written fixture parses");
        assert_eq!(again.graph.node_count(), f.graph.node_count());
        assert_eq!(again.graph.edge_count(), f.graph.edge_count());
    }
});

#![no_main]

use kminer_core::io::parse_tu_dataset;
use libfuzzer_sys::fuzz_target;

// Input is the three files joined by NUL bytes: adjacency, graph
// indicator, node labels.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.splitn(3, '\0');
    let (Some(a), Some(ind), Some(labels)) = (parts.next(), parts.next(), parts.next()) else { return };
    if let Ok((graphs, vocab)) = parse_tu_dataset(a, ind, labels) {
        for g in &graphs {
            assert!(g.label_bound() <= vocab.len());
        }
    }
});

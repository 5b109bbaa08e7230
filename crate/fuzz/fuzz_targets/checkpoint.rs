#![no_main]

use kminer_cli::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Checkpoint::decode(data) {
        // Re-encoding is a fixed point after one round.
        let bytes = c.encode().expect("decoded checkpoint encodes");
        let again = Checkpoint::decode(&bytes).expect("encoded checkpoint decodes");
        assert_eq!(again.encode().expect("re-encodes"), bytes);
    }
});

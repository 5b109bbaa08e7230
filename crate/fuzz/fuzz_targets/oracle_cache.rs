#![no_main]

use kminer_core::OracleCache;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cache) = OracleCache::parse(text) {
        let again = OracleCache::parse(&cache.to_text()).expect("written cache parses");
        assert_eq!(again, cache);
    }
});

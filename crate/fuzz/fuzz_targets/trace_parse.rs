#![no_main]

use libfuzzer_sys::fuzz_target;
use stylus_teleport::trace::{parse_trace, trace_to_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = parse_trace(text) {
        let again = parse_trace(&trace_to_string(&trace)).expect("written trace parses");
        assert_eq!(again, trace);
    }
});

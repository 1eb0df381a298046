#![no_main]

use libfuzzer_sys::fuzz_target;
use stylus_teleport::protocol::Session;

// Each input line is fed to one session, as a client would send them.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut session = Session::default();
    for line in text.lines().take(64) {
        for reply in session.handle_line(line) {
            let _ = reply.to_line();
        }
    }
});

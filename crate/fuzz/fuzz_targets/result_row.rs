#![no_main]

use libfuzzer_sys::fuzz_target;
use stylus_teleport::harness::ResultRow;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(row) = ResultRow::from_json_line(text) {
        let _ = row.csv_record();
        let again = ResultRow::from_json_line(&row.to_json_line()).expect("written row parses");
        assert_eq!(again, row);
    }
});

#![no_main]

use fedpe::aggregate::{format_reports_csv, parse_reports_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(reports) = parse_reports_csv(text) {
            let again = parse_reports_csv(&format_reports_csv(&reports)).expect("formatted reports must parse");
            assert_eq!(reports.len(), again.len());
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use lqo::simkit::SimulationTrace;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(trace) = SimulationTrace::parse(text) else { return };
    if trace.rows.iter().flatten().all(|v| v.is_finite()) {
        let again = SimulationTrace::parse(&trace.to_csv().unwrap()).expect("emitted trace parses");
        assert_eq!(again, trace);
    }
});

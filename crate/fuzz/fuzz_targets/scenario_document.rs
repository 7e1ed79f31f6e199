#![no_main]

use libfuzzer_sys::fuzz_target;
use lqo::simkit::ScenarioDocument;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = serde_json::from_str::<ScenarioDocument>(text) else { return };
    for p in 0..4 {
        if doc.input.validate(p).is_ok() {
            for t in [0.0, 0.5, doc.t_end, -1.0, 1e9] {
                assert_eq!(doc.input.eval(t, p).len(), p);
            }
        }
    }
});

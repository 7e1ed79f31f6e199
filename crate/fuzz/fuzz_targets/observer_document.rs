#![no_main]

use libfuzzer_sys::fuzz_target;
use lqo::immersion::{build_ltv, immerse, ImmersionOptions};
use lqo::observer::ObserverDocument;
use lqo::sysmodel::examples;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = ObserverDocument::parse(text) else { return };
    let sys = examples::range_airspeed(3);
    let ltv = build_ltv(&sys, &immerse(&sys, &ImmersionOptions::default()).unwrap()).unwrap();
    if let Ok(cfg) = doc.resolve(&ltv) {
        assert_eq!(cfg.z0.len(), ltv.dim_z());
        assert_eq!(cfg.p0.dim(), ltv.dim_z());
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use lqo::immersion::{build_ltv, immerse, ImmersionOptions};
use lqo::sysmodel::{load_system_with, save_system, LoadOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for opts in [LoadOptions::default(), LoadOptions { max_asymmetry: None }] {
        let Ok(loaded) = load_system_with(text, &opts) else { continue };
        let sys = loaded.system;
        let again = load_system_with(&save_system(&sys), &opts).expect("saved system reloads");
        assert_eq!(again.system, sys);
        // keep immersion cheap: the lifted space grows as n^2
        if sys.n() <= 6 {
            if let Ok(imm) = immerse(&sys, &ImmersionOptions::default()) {
                let _ = build_ltv(&sys, &imm);
            }
        }
    }
});

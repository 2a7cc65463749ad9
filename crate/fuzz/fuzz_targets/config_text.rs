#![no_main]

use libfuzzer_sys::fuzz_target;
use nsfem_cli::{RunPlan, Settings};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(settings) = Settings::from_config_text(text) {
            let _ = RunPlan::from_settings(settings);
        }
    }
});

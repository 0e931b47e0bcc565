#![no_main]

use donning_core::engine::{parse_control, plan, VarMap};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut vars = VarMap::new();
    vars.insert("TAG", "demo/blog:v1").unwrap();
    if let Ok(control) = parse_control(data, &vars) {
        let names: Vec<String> = control.task_names().map(str::to_owned).collect();
        for name in &names {
            let _ = plan(&control, &[name.as_str()]);
        }
        let again = parse_control(control.to_json().as_bytes(), &VarMap::new()).unwrap();
        assert_eq!(again, control);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use scope_refine::minic::{parse, print_source};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(unit) = parse(src) {
        let printed = print_source(&unit);
        let again = parse(&printed).expect("printed source reparses");
        assert_eq!(print_source(&again), printed);
    }
});

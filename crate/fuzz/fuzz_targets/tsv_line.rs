#![no_main]

use libfuzzer_sys::fuzz_target;
use propnli_core::datagen::parse_tsv_line;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(example) = parse_tsv_line(text, 1) {
        let line = example.to_tsv_line();
        let back = parse_tsv_line(&line, 1).expect("serialized line parses");
        assert_eq!(back, example);
    }
});

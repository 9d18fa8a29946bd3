#![no_main]

use libfuzzer_sys::fuzz_target;
use propnli_core::{parse, tokenize, Formula};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(tokens) = tokenize(text) else { return };
    if let Ok(f) = parse(&tokens) {
        // Anything that parses must render back to the same token stream.
        let rendered = f.render_tokens();
        let again = parse(&rendered).expect("rendered formula parses");
        assert_eq!(again, f);
        let _: Formula = f.to_string().parse().expect("display form parses");
    }
});

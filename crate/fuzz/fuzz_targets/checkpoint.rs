#![no_main]

use libfuzzer_sys::fuzz_target;
use propnli_autodiff::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode(data) {
        let bytes = encode(&ckpt.config, &ckpt.store);
        let again = decode(&bytes).expect("re-encoded checkpoint decodes");
        // Compare bytes, not values: decoded parameters may hold NaN.
        assert_eq!(encode(&again.config, &again.store), bytes);
    }
});

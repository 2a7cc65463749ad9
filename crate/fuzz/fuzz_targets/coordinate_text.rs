#![no_main]

use libfuzzer_sys::fuzz_target;
use nsfem::assembly::SparseMatrix;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(a) = SparseMatrix::from_coordinate_text(text) {
            let again = SparseMatrix::from_coordinate_text(&a.to_coordinate_text()).expect("re-parse");
            assert_eq!(again.dim(), a.dim());
            assert_eq!(again.nnz(), a.nnz());
        }
    }
});

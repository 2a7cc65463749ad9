#![no_main]

use libfuzzer_sys::fuzz_target;
use nsfem::Mesh;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mesh) = Mesh::from_dump(text) {
            // accepted dumps must round-trip
            let again = Mesh::from_dump(&mesh.to_dump()).expect("re-parse of a dump");
            assert_eq!(again.triangles, mesh.triangles);
            let _ = mesh.chunkiness();
        }
    }
});

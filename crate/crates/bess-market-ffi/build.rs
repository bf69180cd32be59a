fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR");
    let header = std::path::Path::new(&crate_dir)
        .join("include")
        .join("bess_market.h");
    match cbindgen::generate(&crate_dir) {
        // Only touches the file when the contents changed, so incremental
        // builds stay quiet.
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        Err(e) => panic!("could not generate {}: {e}", header.display()),
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}

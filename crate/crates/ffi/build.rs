fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let dir = std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo");
    cbindgen::generate(&dir)
        .expect("header generation")
        .write_to_file(std::path::Path::new(&dir).join("include/bandformer.h"));
}

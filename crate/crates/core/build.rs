fn main() {
    // LAPACK symbols (dsyevr, dstevd) come from the system OpenBLAS build.
    println!("cargo:rustc-link-lib=dylib=openblas");
    println!("cargo:rustc-link-search=native=/usr/lib/x86_64-linux-gnu");
}

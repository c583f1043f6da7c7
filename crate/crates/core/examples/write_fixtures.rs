//! Regenerates the bundled documents: `cargo run --example write_fixtures [dir]`.

fn main() -> synergy::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures").into());
    synergy::fixtures::write_bundle(std::path::Path::new(&dir))?;
    println!("wrote fixtures to {dir}");
    Ok(())
}

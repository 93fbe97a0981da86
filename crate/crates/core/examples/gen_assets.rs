//! Regenerates the files under `data/`.
//!
//!     cargo run -p shw-core --example gen_assets

use shw_core::assets;

fn main() -> std::io::Result<()> {
    let dir = assets::data_dir();
    std::fs::create_dir_all(&dir)?;
    for (name, contents) in assets::bundled_files() {
        std::fs::write(dir.join(name), contents)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}

//! Regenerates the bundled models, weights and LR corpus.
//!
//! Usage: `cargo run -p amsr-core --example make_assets [-- <assets dir>]`

use std::path::PathBuf;

use amsr_core::netpbm::save_image;
use amsr_core::reference::{corpus_lr, seeded_weights, tiny_cnn, tiny_stl, TINY_CNN_SEED, TINY_STL_SEED};

fn main() -> amsr_core::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets"));
    let models = root.join("models");
    let corpus = root.join("corpus");
    std::fs::create_dir_all(&models)?;
    std::fs::create_dir_all(&corpus)?;

    for (spec, seed) in [(tiny_cnn(), TINY_CNN_SEED), (tiny_stl(), TINY_STL_SEED)] {
        std::fs::write(models.join(format!("{}.json", spec.name)), spec.to_json() + "\n")?;
        seeded_weights(&spec, seed).save(models.join(format!("{}.amsrw", spec.name)))?;
    }
    for (name, lr) in corpus_lr()? {
        save_image(&lr, corpus.join(name))?;
    }
    println!("wrote {}", root.display());
    Ok(())
}

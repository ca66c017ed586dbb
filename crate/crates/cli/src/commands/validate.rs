use std::path::Path;

use calkit_core::{io, Result};

pub fn run(input: &Path) -> Result<()> {
    let dataset = io::read_auto(input)?;
    println!(
        "ok: {} records, {} classes, {} routing layers",
        dataset.len(),
        dataset.class_count(),
        dataset.layer_count()
    );
    Ok(())
}

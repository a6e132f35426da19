//! Builds REF_8 and ALL_45 label maps from a synthetic PANORAMA + TotalSegmentator pair.
//!
//! Run with `cargo run --example harmonize_sources`.

use std::fmt::Write;

use pancstudy::harmonize::RecipeBook;
use pancstudy::phantom::harmonization_pair;

pub fn run() -> pancstudy::Result<String> {
    let mut out = String::new();
    let (panorama, ts) = harmonization_pair(24, 7)?;
    let book = RecipeBook::builtin();
    writeln!(out, "recipe version {}", book.version()).unwrap();

    for (name, h) in [("REF_8", book.build_ref8(&panorama, &ts)?), ("ALL_45", book.build_all45(&panorama, &ts)?)] {
        writeln!(out, "\n{name}").unwrap();
        for entry in &h.log {
            writeln!(out, "  {:<60} {:>6} voxels changed", entry.rule, entry.changed_voxels).unwrap();
        }
        let scheme = book.schemes().get(name)?;
        for (code, n) in h.volume.histogram() {
            let label = scheme.entry(code).map_or("?", |e| e.name.as_str());
            writeln!(out, "  {code:>3} {label:<28} {n:>6}").unwrap();
        }
    }
    writeln!(
        out,
        "\narteries before refinement: {}, TS aorta voxels inside them: 24",
        panorama.count(3)
    )
    .unwrap();
    Ok(out)
}

fn main() -> pancstudy::Result<()> {
    print!("{}", run()?);
    Ok(())
}

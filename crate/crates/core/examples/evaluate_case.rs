//! Dice, Hausdorff distance and detection for a shifted and a missing prediction.

use std::fmt::Write;

use pancstudy::metrics::{evaluate_case, EvalOptions, HdPolicy};
use pancstudy::phantom::{generate, Organ, Perturbation, PhantomSpec, Shape};
use pancstudy::GridSpec;

pub fn run() -> pancstudy::Result<String> {
    let grid = GridSpec::new([32, 24, 16], [0.8, 0.8, 2.0], [0.0; 3])?;
    let (center_mm, radii_mm) = PhantomSpec::box_covering(&grid, [8, 6, 4], [10, 8, 6]);
    let mut out = String::new();
    let perturbations = [
        ("exact", Perturbation::None),
        ("shift 3 voxels in x", Perturbation::Shift { voxels: [3, 0, 0] }),
        ("dilated by 1", Perturbation::Dilate { radius: 1 }),
        ("dropped", Perturbation::Drop { probability: 1.0 }),
    ];
    for policy in [HdPolicy::ImputeDiagonal, HdPolicy::Missing] {
        writeln!(out, "HD policy for empty predictions: {policy}").unwrap();
        for (name, perturbation) in perturbations {
            let spec = PhantomSpec {
                grid,
                seed: 1,
                organs: vec![Organ { code: 44, shape: Shape::Cuboid, center_mm, radii_mm, perturbation }],
            };
            let (reference, pred) = generate(&spec)?;
            let opts = EvalOptions { policy, ..EvalOptions::new(44, 44) };
            let m = evaluate_case("demo", name, &reference, &pred, &opts)?;
            writeln!(
                out,
                "  {name:<22} dsc {:.3}  hd {:>8}  detected {}",
                m.dsc.unwrap_or(f64::NAN),
                m.hd_mm.map_or("missing".to_owned(), |h| format!("{h:.2} mm")),
                m.detected
            )
            .unwrap();
        }
    }
    Ok(out)
}

fn main() -> pancstudy::Result<()> {
    print!("{}", run()?);
    Ok(())
}

//! Exact Euclidean distance transform on an anisotropic grid.

use std::fmt::Write;

use pancstudy::metrics::{edt, BinaryMask};
use pancstudy::GridSpec;

pub fn run() -> pancstudy::Result<String> {
    let grid = GridSpec::new([9, 7, 1], [1.0, 2.0, 1.0], [0.0; 3])?;
    let on: Vec<bool> = (0..grid.len())
        .map(|i| matches!(grid.coords(i), [4, 3, 0] | [0, 0, 0]))
        .collect();
    let mask = BinaryMask::from_bools(grid, &on)?;
    let d = edt(&mask)?;
    let mut out = String::from("distance (mm) to the nearest foreground voxel, spacing 1 x 2 mm\n");
    for y in 0..grid.dims[1] {
        for x in 0..grid.dims[0] {
            write!(out, "{:6.2}", d[grid.index(x, y, 0)]).unwrap();
        }
        out.push('\n');
    }
    let boundary = BinaryMask::from_bools(grid, &vec![true; grid.len()])?.boundary();
    writeln!(out, "a full 9x7x1 block has {} boundary voxels", boundary.count()).unwrap();
    Ok(out)
}

fn main() -> pancstudy::Result<()> {
    print!("{}", run()?);
    Ok(())
}

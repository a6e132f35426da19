//! Writes a label volume in every supported datatype and reads it back.

use std::fmt::Write;

use pancstudy::nifti::{read_label_volume, write_label_volume, NiftiDatatype};
use pancstudy::phantom::{default_abdomen, rasterize};

pub fn run() -> pancstudy::Result<String> {
    let dir = tempfile::tempdir().map_err(|e| pancstudy::Error::InvalidArgument(e.to_string()))?;
    let vol = rasterize(&default_abdomen(0))?;
    let mut out = String::new();
    writeln!(out, "volume {:?} spacing {:?}, labels {:?}", vol.dims(), vol.grid().spacing, vol.histogram().keys().collect::<Vec<_>>()).unwrap();
    for dt in NiftiDatatype::ALL {
        for ext in ["nii", "nii.gz"] {
            let path = dir.path().join(format!("abdomen_{}.{ext}", dt.name()));
            write_label_volume(&vol, &path, dt)?;
            let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
            let (back, header) = read_label_volume(&path)?;
            writeln!(
                out,
                "{:<8} {:<7} {:>7} bytes  bitpix {:>2}  identical {}",
                dt.name(),
                ext,
                size,
                header.bitpix,
                back == vol
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

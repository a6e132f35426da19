//! Balances a PDAC / non-PDAC manifest by subsampling the majority class.

use std::fmt::Write;
use std::path::PathBuf;

use pancstudy::cohort::{balance_cohort, CaseRecord};

pub fn run() -> pancstudy::Result<String> {
    let cases: Vec<CaseRecord> = (0..2229)
        .map(|i| CaseRecord {
            case_id: format!("{:06}", 100_000 + i),
            pdac: i % 3 == 0 && i < 2025,
            paths: vec![("ct".to_owned(), PathBuf::from(format!("images/{i}.nii.gz")))],
        })
        .collect();
    let mut out = String::new();
    let pdac = cases.iter().filter(|c| c.pdac).count();
    writeln!(out, "input: {} cases, {pdac} PDAC", cases.len()).unwrap();
    for seed in [1, 2] {
        let kept = balance_cohort(&cases, seed)?;
        let first: Vec<&str> = kept.iter().filter(|c| !c.pdac).take(4).map(|c| c.case_id.as_str()).collect();
        writeln!(
            out,
            "seed {seed}: {} cases ({} PDAC), first non-PDAC kept {first:?}",
            kept.len(),
            kept.iter().filter(|c| c.pdac).count()
        )
        .unwrap();
    }
    Ok(out)
}

fn main() -> pancstudy::Result<()> {
    print!("{}", run()?);
    Ok(())
}

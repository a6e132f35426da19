//! Case manifests and PDAC / non-PDAC cohort balancing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One row of a case manifest.
///
/// `paths` holds the named volume columns in manifest order, e.g.
/// `panorama`, `ts` for harmonization or `reference`, `pred_TS` for evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub pdac: bool,
    pub paths: Vec<(String, PathBuf)>,
}

impl CaseRecord {
    pub fn path(&self, column: &str) -> Option<&Path> {
        self.paths
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, p)| p.as_path())
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "pdac" => Some(true),
        "0" | "false" | "no" | "n" | "non-pdac" | "" => Some(false),
        _ => None,
    }
}

/// Reads a delimited manifest with columns `case_id, pdac, <path columns...>`.
/// Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("case_id") || headers.get(1) != Some("pdac") {
        return Err(Error::Manifest(format!(
            "{}: header must start with case_id,pdac",
            path.display()
        )));
    }
    let columns: Vec<String> = headers.iter().skip(2).map(str::to_owned).collect();

    let mut seen = BTreeSet::new();
    let mut cases = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let case_id = row.get(0).unwrap_or_default().to_owned();
        if case_id.is_empty() {
            return Err(Error::Manifest(format!("row {}: empty case_id", line + 2)));
        }
        if !seen.insert(case_id.clone()) {
            return Err(Error::Manifest(format!("duplicate case_id {case_id}")));
        }
        let flag = row.get(1).unwrap_or_default();
        let pdac = parse_flag(flag)
            .ok_or_else(|| Error::Manifest(format!("case {case_id}: bad pdac flag {flag:?}")))?;
        let paths = columns
            .iter()
            .zip(row.iter().skip(2))
            .filter(|(_, p)| !p.is_empty())
            .map(|(c, p)| {
                let p = PathBuf::from(p);
                let p = if p.is_relative() { base.join(p) } else { p };
                (c.clone(), p)
            })
            .collect();
        cases.push(CaseRecord { case_id, pdac, paths });
    }
    Ok(cases)
}

/// Writes a manifest; paths under `relative_to` are written relative to it.
pub fn write_manifest(
    cases: &[CaseRecord],
    path: impl AsRef<Path>,
    relative_to: Option<&Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut columns: Vec<&str> = Vec::new();
    for case in cases {
        for (c, _) in &case.paths {
            if !columns.contains(&c.as_str()) {
                columns.push(c);
            }
        }
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["case_id", "pdac"];
        header.extend(&columns);
        w.write_record(&header)?;
        for case in cases {
            let mut row = vec![case.case_id.clone(), if case.pdac { "1" } else { "0" }.to_owned()];
            for c in &columns {
                let p = case
                    .path(c)
                    .map(|p| {
                        relative_to
                            .and_then(|r| p.strip_prefix(r).ok())
                            .unwrap_or(p)
                            .to_string_lossy()
                            .into_owned()
                    })
                    .unwrap_or_default();
                row.push(p);
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    crate::fsutil::write_atomic(path, &buf)
}

/// Keeps every case of the minority class and a seeded uniform sample (without
/// replacement) of equal size from the majority class. Output preserves manifest order.
pub fn balance_cohort(manifest: &[CaseRecord], seed: u64) -> Result<Vec<CaseRecord>> {
    let (pdac, other): (Vec<usize>, Vec<usize>) =
        (0..manifest.len()).partition(|&i| manifest[i].pdac);
    if pdac.is_empty() {
        return Err(Error::EmptyClass("pdac"));
    }
    if other.is_empty() {
        return Err(Error::EmptyClass("non-pdac"));
    }
    let (minority, majority) = if pdac.len() <= other.len() {
        (pdac, other)
    } else {
        (other, pdac)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, majority.len(), minority.len());
    let mut keep: Vec<usize> = minority;
    keep.extend(picked.iter().map(|i| majority[i]));
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| manifest[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn synthetic(n_pdac: usize, n_other: usize) -> Vec<CaseRecord> {
        (0..n_pdac + n_other)
            .map(|i| CaseRecord {
                case_id: format!("case_{i:05}"),
                pdac: i % (n_pdac + n_other) < n_pdac,
                paths: vec![("ct".into(), PathBuf::from(format!("case_{i:05}.nii.gz")))],
            })
            .collect()
    }

    #[test]
    fn balances_panorama_sized_cohort() {
        let cases = synthetic(675, 1554);
        let out = balance_cohort(&cases, 7).unwrap();
        assert_eq!(out.len(), 1350);
        assert_eq!(out.iter().filter(|c| c.pdac).count(), 675);
        assert_eq!(balance_cohort(&cases, 7).unwrap(), out);
        assert_ne!(balance_cohort(&cases, 8).unwrap(), out);
    }

    #[test]
    fn balanced_input_is_kept_in_order() {
        let cases = synthetic(5, 5);
        assert_eq!(balance_cohort(&cases, 1).unwrap(), cases);
    }

    #[test]
    fn empty_class_is_an_error() {
        let cases = synthetic(3, 0);
        assert!(matches!(balance_cohort(&cases, 0), Err(Error::EmptyClass("non-pdac"))));
        assert!(balance_cohort(&[], 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cases: Vec<CaseRecord> = synthetic(2, 3)
            .into_iter()
            .map(|mut c| {
                c.paths = vec![
                    ("panorama".into(), dir.path().join(format!("{}_p.nii", c.case_id))),
                    ("ts".into(), dir.path().join(format!("{}_t.nii", c.case_id))),
                ];
                c
            })
            .collect();
        let path = dir.path().join("manifest.csv");
        write_manifest(&cases, &path, Some(dir.path())).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("case_id,pdac,panorama,ts\n"));
        assert!(text.contains("case_00000,1,case_00000_p.nii,case_00000_t.nii"));
        assert_eq!(read_manifest(&path).unwrap(), cases);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "case_id,pdac,ts\na,1,x\na,0,y\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Manifest(_))));
    }
}

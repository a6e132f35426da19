//! Friedman / Nemenyi and Cochran's Q / McNemar over three models.

use std::fmt::Write;

use pancstudy::metrics::CaseMetrics;
use pancstudy::stats::{chi2_sf, cochran_q, friedman, mcnemar_exact_counts, PairedBinary, PairedContinuous};
use pancstudy::study::run_study;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> pancstudy::Result<String> {
    let mut out = String::new();
    let models = ["TS", "REF_8", "ALL_45"];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut rows = Vec::new();
    for case in 0..292 {
        let base: f64 = rng.random_range(0.55..0.95);
        for (j, model) in models.iter().enumerate() {
            let failed = j == 1 && case < 8;
            let dsc = if failed { 0.0 } else { (base + rng.random_range(-0.05..0.05) + 0.01 * j as f64).min(1.0) };
            rows.push(CaseMetrics {
                case_id: format!("case_{case:03}"),
                model_id: (*model).to_owned(),
                dsc: Some(dsc),
                hd_mm: Some(if failed { 350.0 } else { 40.0 * (1.0 - dsc) + rng.random_range(0.0..4.0) }),
                detected: !failed,
                hd_imputed: failed,
            });
        }
    }
    let study = run_study(&rows, &[])?;
    out.push_str(&study.render_tables());

    let det = PairedBinary::new((0..20).map(|i| vec![true, i >= 8, true]).collect())?;
    let q = cochran_q(&det)?;
    writeln!(out, "\nCochran's Q on 8 discordant rows: Q = {}, p = {:.3e} = exp(-8)", q.statistic, q.p_value).unwrap();
    writeln!(out, "exact McNemar, 8 vs 0 discordant: p = {}", mcnemar_exact_counts(8, 0)).unwrap();
    writeln!(out, "chi-square tail at 3.84146 with 1 df: {:.5}", chi2_sf(3.84146, 1)?).unwrap();
    let ordered = PairedContinuous::from_complete(vec![vec![1.0, 2.0, 3.0]; 3])?;
    let f = friedman(&ordered)?;
    writeln!(out, "Friedman on three identical orderings: stat {}, p {:.4}", f.statistic, f.p_value).unwrap();
    Ok(out)
}

fn main() -> pancstudy::Result<()> {
    print!("{}", run()?);
    Ok(())
}

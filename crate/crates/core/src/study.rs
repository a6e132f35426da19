//! Multi-model study summaries: per-model descriptives plus the omnibus and
//! pairwise tests for DSC, HD and detection, with plain-text table rendering.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::CaseMetrics;
use crate::stats::{
    cochran_q, friedman, nemenyi, pairwise_mcnemar, PairedBinary, PairedContinuous,
    PairwiseTable, TestResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub sd: f64,
    pub n: usize,
}

impl Descriptive {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Descriptive { mean, sd, n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSummary {
    pub per_model: Vec<Option<Descriptive>>,
    /// Rows entering Friedman / Nemenyi after listwise deletion of missing values.
    pub n_complete: usize,
    pub omnibus: Option<TestResult>,
    pub pairwise: Option<PairwiseTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub failures: Vec<usize>,
    pub omnibus: TestResult,
    /// Bonferroni-corrected exact McNemar p-values.
    pub pairwise: PairwiseTable,
    pub comparisons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub models: Vec<String>,
    pub n_cases: usize,
    pub n_dropped_incomplete: usize,
    pub dsc: ContinuousSummary,
    pub hd: ContinuousSummary,
    pub detection: DetectionSummary,
}

fn summarize(rows: Vec<Vec<Option<f64>>>, k: usize) -> Result<ContinuousSummary> {
    let per_model = (0..k)
        .map(|j| Descriptive::of(&rows.iter().filter_map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let data = PairedContinuous::new(rows)?;
    let n_complete = data.complete_rows().len();
    if data.dropped() > 0 {
        log::info!("listwise deletion removed {} incomplete rows", data.dropped());
    }
    let (omnibus, pairwise) = match (friedman(&data), nemenyi(&data)) {
        (Ok(f), Ok(n)) => (Some(f), Some(n)),
        (Err(Error::InsufficientData(msg)), _) | (_, Err(Error::InsufficientData(msg))) => {
            log::warn!("skipping rank tests: {msg}");
            (None, None)
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok(ContinuousSummary {
        per_model,
        n_complete,
        omnibus,
        pairwise,
    })
}

/// Runs the full test battery over per-case metrics.
///
/// `models` fixes the column order; when empty, models appear in order of first
/// occurrence. Cases not evaluated under every model are dropped.
pub fn run_study(metrics: &[CaseMetrics], models: &[String]) -> Result<StudyResult> {
    let mut order: Vec<String> = models.to_vec();
    if order.is_empty() {
        for m in metrics {
            if !order.contains(&m.model_id) {
                order.push(m.model_id.clone());
            }
        }
    }
    let k = order.len();
    if k < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 models, got {k}")));
    }
    let model_index: HashMap<&str, usize> =
        order.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();

    let mut case_order: Vec<&str> = Vec::new();
    let mut by_case: HashMap<&str, Vec<Option<&CaseMetrics>>> = HashMap::new();
    for m in metrics {
        let Some(&j) = model_index.get(m.model_id.as_str()) else {
            continue;
        };
        let slot = by_case.entry(m.case_id.as_str()).or_insert_with(|| {
            case_order.push(m.case_id.as_str());
            vec![None; k]
        });
        if slot[j].is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate metrics for case {} model {}",
                m.case_id, m.model_id
            )));
        }
        slot[j] = Some(m);
    }

    let complete: Vec<Vec<&CaseMetrics>> = case_order
        .iter()
        .filter_map(|c| by_case[c].iter().copied().collect::<Option<Vec<_>>>())
        .collect();
    let dropped = case_order.len() - complete.len();
    if dropped > 0 {
        log::info!("dropped {dropped} cases not evaluated under every model");
    }
    if complete.is_empty() {
        return Err(Error::InsufficientData("no case evaluated under every model".into()));
    }

    let dsc = summarize(complete.iter().map(|r| r.iter().map(|m| m.dsc).collect()).collect(), k)?;
    let hd = summarize(complete.iter().map(|r| r.iter().map(|m| m.hd_mm).collect()).collect(), k)?;

    let binary = PairedBinary::new(
        complete
            .iter()
            .map(|r| r.iter().map(|m| m.detected).collect())
            .collect(),
    )?;
    let failures = (0..k)
        .map(|j| binary.column(j).iter().filter(|&&d| !d).count())
        .collect();
    let detection = DetectionSummary {
        failures,
        omnibus: cochran_q(&binary)?,
        pairwise: pairwise_mcnemar(&binary)?,
        comparisons: k * (k - 1) / 2,
    };

    Ok(StudyResult {
        models: order,
        n_cases: complete.len(),
        n_dropped_incomplete: dropped,
        dsc,
        hd,
        detection,
    })
}

/// Three-decimal p-value, or "< 0.001" when it would round to zero.
pub fn format_p(p: f64) -> String {
    if p < 0.0005 {
        "< 0.001".to_owned()
    } else {
        format!("{p:.3}")
    }
}

fn format_descriptive(d: Option<Descriptive>, decimals: usize) -> String {
    match d {
        Some(d) => format!("{:.*} ± {:.*}", decimals, d.mean, decimals, d.sd),
        None => "n/a".to_owned(),
    }
}

fn opt_p(t: Option<&TestResult>) -> String {
    t.map_or_else(|| "n/a".to_owned(), |t| format_p(t.p_value))
}

fn render_grid(out: &mut String, title: &str, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |out: &mut String, cells: &[String]| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            let pad = width[c] - cell.chars().count();
            s.push_str(cell);
            if c + 1 < cells.len() {
                s.push_str(&" ".repeat(pad + 2));
            }
        }
        let _ = writeln!(out, "{}", s.trim_end());
    };
    let _ = writeln!(out, "{title}");
    line(out, header);
    let _ = writeln!(out, "{}", "-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1)));
    for r in rows {
        line(out, r);
    }
}

impl StudyResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Model-by-metric summary with omnibus p-values.
    pub fn summary_table(&self) -> String {
        let mut header = vec!["Metric".to_owned()];
        header.extend(self.models.iter().cloned());
        header.push("p-value".to_owned());
        let mut dsc = vec!["DSC".to_owned()];
        dsc.extend(self.dsc.per_model.iter().map(|d| format_descriptive(*d, 2)));
        dsc.push(opt_p(self.dsc.omnibus.as_ref()));
        let mut hd = vec!["HD (mm)".to_owned()];
        hd.extend(self.hd.per_model.iter().map(|d| format_descriptive(*d, 1)));
        hd.push(opt_p(self.hd.omnibus.as_ref()));
        let mut det = vec!["Detection failure (n)".to_owned()];
        det.extend(self.detection.failures.iter().map(usize::to_string));
        det.push(format_p(self.detection.omnibus.p_value));
        let mut out = String::new();
        render_grid(
            &mut out,
            &format!("Segmentation performance (n = {})", self.n_cases),
            &header,
            &[dsc, hd, det],
        );
        out
    }

    /// Pairwise post-hoc p-values: Nemenyi for DSC and HD, corrected McNemar for detection.
    pub fn pairwise_table(&self) -> String {
        let pairs = self.detection.pairwise.pairs();
        let mut header = vec!["Metric".to_owned()];
        header.extend(
            pairs
                .iter()
                .map(|&(i, j, _)| format!("{} vs. {}", self.models[i], self.models[j])),
        );
        let row = |name: &str, table: Option<&PairwiseTable>| {
            let mut r = vec![name.to_owned()];
            r.extend(pairs.iter().map(|&(i, j, _)| {
                table.map_or_else(|| "n/a".to_owned(), |t| format_p(t.get(i, j)))
            }));
            r
        };
        let rows = [
            row("DSC", self.dsc.pairwise.as_ref()),
            row("HD (mm)", self.hd.pairwise.as_ref()),
            row("Detection failure (n)", Some(&self.detection.pairwise)),
        ];
        let mut out = String::new();
        render_grid(&mut out, "Pairwise comparisons", &header, &rows);
        out
    }

    pub fn render_tables(&self) -> String {
        format!("{}\n{}", self.summary_table(), self.pairwise_table())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(models: &[&str], n: usize, fail: &[(usize, usize)]) -> Vec<CaseMetrics> {
        let mut out = Vec::new();
        for c in 0..n {
            for (j, m) in models.iter().enumerate() {
                let failed = fail.iter().any(|&(jj, cc)| jj == j && cc == c);
                out.push(CaseMetrics {
                    case_id: format!("c{c}"),
                    model_id: (*m).to_owned(),
                    dsc: Some(if failed { 0.0 } else { 0.8 + 0.001 * c as f64 }),
                    hd_mm: Some(if failed { 100.0 } else { 5.0 + c as f64 }),
                    detected: !failed,
                    hd_imputed: failed,
                });
            }
        }
        out
    }

    #[test]
    fn identical_models_give_unit_p() {
        let m = metrics(&["A", "B", "C"], 12, &[]);
        let s = run_study(&m, &[]).unwrap();
        assert_eq!(s.dsc.omnibus.unwrap().p_value, 1.0);
        assert_eq!(s.hd.omnibus.unwrap().p_value, 1.0);
        assert_eq!(s.detection.omnibus.p_value, 1.0);
        for t in [s.dsc.pairwise.as_ref().unwrap(), s.hd.pairwise.as_ref().unwrap(), &s.detection.pairwise] {
            assert!(t.pairs().iter().all(|&(_, _, p)| p == 1.0));
        }
        let text = s.pairwise_table();
        assert_eq!(text.matches("1.000").count(), 9);
    }

    #[test]
    fn detection_row_for_eight_failures() {
        let fails: Vec<(usize, usize)> = (0..8).map(|c| (1, c)).collect();
        let m = metrics(&["TS", "REF_8", "ALL_45"], 292, &fails);
        let s = run_study(&m, &[]).unwrap();
        assert_eq!(s.detection.failures, vec![0, 8, 0]);
        assert_eq!(s.detection.omnibus.statistic, 16.0);
        let p: Vec<f64> = s.detection.pairwise.pairs().iter().map(|t| t.2).collect();
        assert_eq!(p, vec![0.0234375, 1.0, 0.0234375]);
        let table = s.pairwise_table();
        let det = table.lines().last().unwrap();
        assert!(det.starts_with("Detection failure (n)"));
        let cells: Vec<&str> = det.split("  ").map(str::trim).filter(|c| !c.is_empty()).collect();
        assert_eq!(&cells[1..], ["0.023", "1.000", "0.023"]);
        assert!(s.summary_table().lines().last().unwrap().ends_with("< 0.001"));
    }

    #[test]
    fn incomplete_cases_are_dropped() {
        let mut m = metrics(&["A", "B"], 5, &[]);
        m.pop();
        let s = run_study(&m, &[]).unwrap();
        assert_eq!((s.n_cases, s.n_dropped_incomplete), (4, 1));
        assert!(run_study(&m, &["A".to_owned()]).is_err());
        assert!(run_study(&[], &["A".to_owned(), "B".to_owned()]).is_err());
    }

    #[test]
    fn missing_hd_uses_listwise_deletion() {
        let mut m = metrics(&["A", "B"], 6, &[]);
        m[1].hd_mm = None;
        let s = run_study(&m, &[]).unwrap();
        assert_eq!(s.hd.n_complete, 5);
        assert_eq!(s.dsc.n_complete, 6);
        assert_eq!(s.hd.per_model[1].unwrap().n, 5);
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.0234375), "0.023");
        assert_eq!(format_p(1.0), "1.000");
        assert_eq!(format_p((-8.0f64).exp()), "< 0.001");
        assert_eq!(format_p(0.0005), "0.001");
        assert_eq!(format_p(0.00049), "< 0.001");
    }

    #[test]
    fn json_round_trip() {
        let s = run_study(&metrics(&["A", "B", "C"], 4, &[(0, 1)]), &[]).unwrap();
        assert_eq!(StudyResult::from_json(&s.to_json().unwrap()).unwrap(), s);
    }
}

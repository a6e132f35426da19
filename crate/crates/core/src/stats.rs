//! Paired nonparametric tests: Friedman + Nemenyi for continuous metrics,
//! Cochran's Q + exact McNemar for binary outcomes, and the distribution
//! tails they need.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Friedman,
    FriedmanExact,
    CochranQ,
    McNemarExact,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Friedman => "Friedman",
            Method::FriedmanExact => "Friedman (exact)",
            Method::CochranQ => "Cochran's Q",
            Method::McNemarExact => "McNemar (exact)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub df: Option<usize>,
    pub p_value: f64,
}

/// n cases × k models of measurements; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedContinuous {
    k: usize,
    rows: Vec<Vec<Option<f64>>>,
}

impl PairedContinuous {
    pub fn new(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 models, got {k}")));
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("ragged measurement rows".into()));
        }
        if rows.iter().flatten().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("NaN measurement".into()));
        }
        Ok(PairedContinuous { k, rows })
    }

    pub fn from_complete(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect())
    }

    pub fn models(&self) -> usize {
        self.k
    }

    /// Rows without missing values (listwise deletion).
    pub fn complete_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .filter_map(|r| r.iter().copied().collect::<Option<Vec<f64>>>())
            .collect()
    }

    pub fn dropped(&self) -> usize {
        self.rows.len() - self.complete_rows().len()
    }
}

/// n cases × k models of binary outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedBinary {
    k: usize,
    rows: Vec<Vec<bool>>,
}

impl PairedBinary {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 models, got {k}")));
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("ragged outcome rows".into()));
        }
        Ok(PairedBinary { k, rows })
    }

    pub fn models(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Symmetric k × k table of pairwise p-values with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTable {
    pub p: Vec<Vec<f64>>,
}

impl PairwiseTable {
    fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = vec![vec![1.0; k]; k];
        for (i, j) in (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))) {
            let v = f(i, j);
            p[i][j] = v;
            p[j][i] = v;
        }
        PairwiseTable { p }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i][j]
    }

    pub fn models(&self) -> usize {
        self.p.len()
    }

    /// Upper-triangle entries in row-major order: (0,1), (0,2), ..., (1,2), ...
    pub fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let k = self.p.len();
        (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.p[i][j]))
            .collect()
    }
}

// ---------------------------------------------------------------- gamma / chi-square

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (h.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument("chi-square df must be positive".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("chi-square statistic {x} must be >= 0")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if df == 2 {
        return Ok((-x / 2.0).exp());
    }
    Ok(gamma_q(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------- ranks

/// Midranks (1-based) of one row.
pub fn midranks(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tie_groups(row: &[f64]) -> Vec<usize> {
    let mut sorted = row.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}

fn complete_blocks(data: &PairedContinuous) -> Result<Vec<Vec<f64>>> {
    let rows = data.complete_rows();
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 complete rows, got {}",
            rows.len()
        )));
    }
    Ok(rows)
}

/// Friedman rank test with midranks and tie correction; p from the chi-square
/// approximation with k − 1 degrees of freedom.
pub fn friedman(data: &PairedContinuous) -> Result<TestResult> {
    let rows = complete_blocks(data)?;
    let n = rows.len() as f64;
    let k = data.models();
    let kf = k as f64;

    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in &rows {
        for (s, r) in rank_sums.iter_mut().zip(midranks(row)) {
            *s += r;
        }
        ties += tie_groups(row)
            .into_iter()
            .map(|t| (t * t * t - t) as f64)
            .sum::<f64>();
    }
    let correction = 1.0 - ties / (n * (kf * kf * kf - kf));
    let df = k - 1;
    if correction <= 1e-12 {
        return Ok(TestResult {
            method: Method::Friedman,
            statistic: 0.0,
            df: Some(df),
            p_value: 1.0,
        });
    }
    let expected = n * (kf + 1.0) / 2.0;
    let ss: f64 = rank_sums.iter().map(|r| (r - expected).powi(2)).sum();
    let statistic = 12.0 * ss / (n * kf * (kf + 1.0)) / correction;
    Ok(TestResult {
        method: Method::Friedman,
        statistic,
        df: Some(df),
        p_value: chi2_sf(statistic, df)?,
    })
}

/// Upper bound on DP states for [`friedman_exact`].
const EXACT_STATE_LIMIT: usize = 4_000_000;

fn distinct_permutations(items: &[u32]) -> Vec<Vec<u32>> {
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    let mut out = vec![sorted.clone()];
    // Lexicographic next_permutation over a multiset.
    loop {
        let n = sorted.len();
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| sorted[i] < sorted[i + 1]) else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| sorted[j] > sorted[i]).unwrap();
        sorted.swap(i, j);
        sorted[i + 1..].reverse();
        out.push(sorted.clone());
    }
}

/// Exact permutation p-value of the Friedman statistic: under the null every
/// distinct within-row arrangement of the observed ranks is equally likely.
///
/// Computed by dynamic programming over column rank sums (ranks doubled so
/// midranks stay integral); the statistic is monotone in the sum of squared
/// rank sums because the tie correction is arrangement-invariant.
pub fn friedman_exact(data: &PairedContinuous) -> Result<TestResult> {
    let rows = complete_blocks(data)?;
    let k = data.models();
    let doubled: Vec<Vec<u32>> = rows
        .iter()
        .map(|r| midranks(r).into_iter().map(|x| (2.0 * x).round() as u32).collect())
        .collect();

    let mut observed = vec![0u64; k];
    for row in &doubled {
        for (o, &r) in observed.iter_mut().zip(row) {
            *o += r as u64;
        }
    }
    let observed_ss: u64 = observed.iter().map(|s| s * s).sum();

    let mut states: HashMap<Vec<u64>, f64> = HashMap::new();
    states.insert(vec![0; k], 1.0);
    for row in &doubled {
        let perms = distinct_permutations(row);
        let w = 1.0 / perms.len() as f64;
        let mut next: HashMap<Vec<u64>, f64> = HashMap::with_capacity(states.len() * perms.len());
        for (sums, prob) in &states {
            for perm in &perms {
                let key: Vec<u64> = sums.iter().zip(perm).map(|(s, &r)| s + r as u64).collect();
                *next.entry(key).or_insert(0.0) += prob * w;
            }
        }
        if next.len() > EXACT_STATE_LIMIT {
            return Err(Error::InvalidArgument(
                "too many cases for exact Friedman enumeration".into(),
            ));
        }
        states = next;
    }
    let p: f64 = states
        .iter()
        .filter(|(sums, _)| sums.iter().map(|s| s * s).sum::<u64>() >= observed_ss)
        .map(|(_, p)| p)
        .sum();
    let asymptotic = friedman(data)?;
    Ok(TestResult {
        method: Method::FriedmanExact,
        statistic: asymptotic.statistic,
        df: None,
        p_value: p.clamp(0.0, 1.0),
    })
}

// ---------------------------------------------------------------- studentized range

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its 7-point Gauss error estimate.
fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let pair = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth >= 40 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, tol / 2.0, depth + 1) + recurse(f, m, b, tol / 2.0, depth + 1)
    }
    recurse(&f, a, b, tol, 0)
}

/// P(range of k iid standard normals ≥ q), i.e. the upper tail of the
/// studentized range distribution with infinite degrees of freedom.
pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    if k < 2 || q <= 0.0 {
        return 1.0;
    }
    let km1 = (k - 1) as i32;
    let integrand = |z: f64| {
        let upper = normal_cdf(z);
        let inside = (upper - normal_cdf(z - q)).max(0.0);
        normal_pdf(z) * (upper.powi(km1) - inside.powi(km1))
    };
    let tail = k as f64 * integrate(integrand, -9.0, 9.0 + q, 1e-10);
    tail.clamp(0.0, 1.0)
}

/// Nemenyi post-hoc after Friedman: average-rank differences scaled to the
/// studentized range, q = |R̄i − R̄j| / sqrt(k(k+1)/(12n)).
pub fn nemenyi(data: &PairedContinuous) -> Result<PairwiseTable> {
    let rows = complete_blocks(data)?;
    let n = rows.len() as f64;
    let k = data.models();
    let mut mean_ranks = vec![0.0; k];
    for row in &rows {
        for (m, r) in mean_ranks.iter_mut().zip(midranks(row)) {
            *m += r / n;
        }
    }
    let se = (k as f64 * (k as f64 + 1.0) / (12.0 * n)).sqrt();
    Ok(PairwiseTable::from_fn(k, |i, j| {
        let q = (mean_ranks[i] - mean_ranks[j]).abs() / se;
        studentized_range_sf(q, k)
    }))
}

// ---------------------------------------------------------------- binary outcomes

/// Cochran's Q over k related binary outcomes.
pub fn cochran_q(data: &PairedBinary) -> Result<TestResult> {
    let k = data.models();
    let kf = k as f64;
    let mut col = vec![0u64; k];
    let mut sum_u = 0u64;
    let mut sum_u2 = 0u64;
    for row in data.rows() {
        let u = row.iter().filter(|&&b| b).count() as u64;
        for (c, &b) in col.iter_mut().zip(row) {
            *c += b as u64;
        }
        sum_u += u;
        sum_u2 += u * u;
    }
    let total: u64 = col.iter().sum();
    let sum_t2: u64 = col.iter().map(|t| t * t).sum();
    let denom = k as u64 * sum_u - sum_u2;
    let df = k - 1;
    if denom == 0 {
        return Ok(TestResult {
            method: Method::CochranQ,
            statistic: 0.0,
            df: Some(df),
            p_value: 1.0,
        });
    }
    let numer = (kf - 1.0) * (k as u64 * sum_t2 - total * total) as f64;
    let statistic = numer / denom as f64;
    Ok(TestResult {
        method: Method::CochranQ,
        statistic,
        df: Some(df),
        p_value: chi2_sf(statistic, df)?,
    })
}

/// Two-sided exact binomial McNemar p from discordant counts.
pub fn mcnemar_exact_counts(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let m = b.min(c);
    let tail = if n <= 1000 {
        let mut term = 0.5f64.powi(n as i32);
        let mut sum = term;
        for i in 0..m {
            term *= (n - i) as f64 / (i + 1) as f64;
            sum += term;
        }
        sum
    } else {
        let nf = n as f64;
        let ln_half_n = nf * 0.5f64.ln();
        (0..=m)
            .map(|i| {
                let i = i as f64;
                (ln_gamma(nf + 1.0) - ln_gamma(i + 1.0) - ln_gamma(nf - i + 1.0) + ln_half_n).exp()
            })
            .sum()
    };
    (2.0 * tail).min(1.0)
}

/// Exact McNemar test on two paired boolean columns.
pub fn mcnemar_exact(a: &[bool], b: &[bool]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "McNemar columns differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let only_a = a.iter().zip(b).filter(|(&x, &y)| x && !y).count() as u64;
    let only_b = a.iter().zip(b).filter(|(&x, &y)| !x && y).count() as u64;
    Ok(TestResult {
        method: Method::McNemarExact,
        statistic: only_a.min(only_b) as f64,
        df: None,
        p_value: mcnemar_exact_counts(only_a, only_b),
    })
}

pub fn bonferroni(p: f64, m: usize) -> f64 {
    debug_assert!(m >= 1);
    (p * m.max(1) as f64).min(1.0)
}

/// Pairwise exact McNemar tests, Bonferroni-corrected over k(k−1)/2 comparisons.
pub fn pairwise_mcnemar(data: &PairedBinary) -> Result<PairwiseTable> {
    let k = data.models();
    let m = k * (k - 1) / 2;
    let cols: Vec<Vec<bool>> = (0..k).map(|j| data.column(j)).collect();
    let mut err = None;
    let table = PairwiseTable::from_fn(k, |i, j| match mcnemar_exact(&cols[i], &cols[j]) {
        Ok(r) => bonferroni(r.p_value, m),
        Err(e) => {
            err = Some(e);
            f64::NAN
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_closed_forms() {
        assert_eq!(chi2_sf(0.0, 5).unwrap(), 1.0);
        assert_eq!(chi2_sf(16.0, 2).unwrap(), (-8.0f64).exp());
        assert!((chi2_sf(16.0, 2).unwrap() - 3.3546e-4).abs() < 1e-8);
        assert!((chi2_sf(3.84146, 1).unwrap() - 0.05).abs() < 1e-4);
        assert!(chi2_sf(1.0, 0).is_err());
        assert!(chi2_sf(-1.0, 1).is_err());
        // df = 2 through the general path agrees with the closed form.
        for x in [0.1, 1.0, 5.0, 30.0] {
            assert!((gamma_q(1.0, x / 2.0) - (-x / 2.0f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "n={n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(midranks(&[0.5, 0.5, 0.9]), vec![1.5, 1.5, 3.0]);
        assert_eq!(midranks(&[7.0, 7.0, 7.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn friedman_examples() {
        let tied = PairedContinuous::from_complete(vec![vec![1.0; 3]; 4]).unwrap();
        let r = friedman(&tied).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));

        let ordered = PairedContinuous::from_complete(vec![vec![1.0, 2.0, 3.0]; 3]).unwrap();
        let r = friedman(&ordered).unwrap();
        assert!((r.statistic - 6.0).abs() < 1e-12);
        assert!((r.p_value - (-3.0f64).exp()).abs() < 1e-15);
        // Exact: only the 6 arrangements with every row identical reach stat 6.
        let exact = friedman_exact(&ordered).unwrap();
        assert!((exact.p_value - 6.0 / 216.0).abs() < 1e-15);

        let one = PairedContinuous::from_complete(vec![vec![1.0, 2.0]]).unwrap();
        assert!(matches!(friedman(&one), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn listwise_deletion() {
        let data = PairedContinuous::new(vec![
            vec![Some(1.0), Some(2.0)],
            vec![None, Some(2.0)],
            vec![Some(3.0), Some(1.0)],
        ])
        .unwrap();
        assert_eq!(data.complete_rows().len(), 2);
        assert_eq!(data.dropped(), 1);
    }

    #[test]
    fn distinct_permutations_of_multiset() {
        assert_eq!(distinct_permutations(&[1, 2, 3]).len(), 6);
        assert_eq!(distinct_permutations(&[3, 3, 6]).len(), 3);
        assert_eq!(distinct_permutations(&[4, 4, 4]).len(), 1);
    }

    #[test]
    fn nemenyi_identical_columns() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64, i as f64 + 0.5]).collect();
        let t = nemenyi(&PairedContinuous::from_complete(rows).unwrap()).unwrap();
        assert_eq!(t.get(0, 1), 1.0);
        for i in 0..3 {
            assert_eq!(t.get(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(t.get(i, j), t.get(j, i));
            }
        }
        assert!(t.get(0, 2) < 0.05);
    }

    #[test]
    fn studentized_range_known_values() {
        // Two normals: range = |X1 - X2| ~ sqrt(2)|Z|, so P(R >= q) = 2(1 - Phi(q / sqrt 2)).
        for q in [0.5, 1.0, 2.77, 4.0] {
            let expected = 2.0 * (1.0 - normal_cdf(q / std::f64::consts::SQRT_2));
            assert!((studentized_range_sf(q, 2) - expected).abs() < 1e-9, "q={q}");
        }
        // Tabulated 5% critical value for k = 3, df = inf is 3.314.
        assert!((studentized_range_sf(3.314, 3) - 0.05).abs() < 5e-4);
        assert_eq!(studentized_range_sf(0.0, 3), 1.0);
    }

    #[test]
    fn cochran_examples() {
        let same = PairedBinary::new(vec![vec![true, true, true]; 5]).unwrap();
        assert_eq!(cochran_q(&same).unwrap().p_value, 1.0);

        let mut rows = vec![vec![true, false, true]; 8];
        rows.extend(vec![vec![true; 3]; 284]);
        let r = cochran_q(&PairedBinary::new(rows).unwrap()).unwrap();
        assert_eq!(r.statistic, 16.0);
        assert!((r.p_value - (-8.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn mcnemar_examples() {
        assert_eq!(mcnemar_exact_counts(0, 0), 1.0);
        assert_eq!(mcnemar_exact_counts(8, 0), 0.0078125);
        assert_eq!(mcnemar_exact_counts(0, 8), 0.0078125);
        assert_eq!(mcnemar_exact_counts(5, 5), 1.0);
        let big = mcnemar_exact_counts(600, 560);
        let small_path = {
            // Same tail through log-space terms.
            let n = 1160.0;
            (0..=560)
                .map(|i| {
                    let i = i as f64;
                    (ln_gamma(n + 1.0) - ln_gamma(i + 1.0) - ln_gamma(n - i + 1.0) + n * 0.5f64.ln()).exp()
                })
                .sum::<f64>()
                * 2.0
        };
        assert!((big - small_path.min(1.0)).abs() < 1e-9);
        assert!(mcnemar_exact(&[true], &[true, false]).is_err());
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni(0.0078125, 3), 0.0234375);
        assert_eq!(bonferroni(1.0, 3), 1.0);
        assert_eq!(bonferroni(0.2, 1), 0.2);
    }
}

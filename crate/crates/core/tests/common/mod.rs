//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use pancstudy::metrics::BinaryMask;
use pancstudy::GridSpec;
use rand::Rng;

/// Random mask with the given fill probability on a random anisotropic grid.
pub fn random_mask(rng: &mut impl Rng, max_dim: usize, fill: f64) -> BinaryMask {
    let dims = [
        rng.random_range(1..=max_dim),
        rng.random_range(1..=max_dim),
        rng.random_range(1..=max_dim),
    ];
    let spacing = [
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
    ];
    random_mask_on(rng, GridSpec::new(dims, spacing, [0.0; 3]).unwrap(), fill)
}

pub fn random_mask_on(rng: &mut impl Rng, grid: GridSpec, fill: f64) -> BinaryMask {
    let mut values: Vec<bool> = (0..grid.len()).map(|_| rng.random_bool(fill)).collect();
    if !values.iter().any(|&b| b) {
        let i = rng.random_range(0..values.len());
        values[i] = true;
    }
    BinaryMask::from_bools(grid, &values).unwrap()
}

fn dist(grid: &GridSpec, a: usize, b: usize) -> f64 {
    let (ca, cb) = (grid.coords(a), grid.coords(b));
    (0..3)
        .map(|k| ((ca[k] as f64 - cb[k] as f64) * grid.spacing[k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn ones(mask: &BinaryMask) -> Vec<usize> {
    (0..mask.grid().len()).filter(|&i| mask.get(i)).collect()
}

/// Distance from every voxel to the nearest foreground voxel, all pairs.
pub fn brute_edt(mask: &BinaryMask) -> Vec<f64> {
    let grid = mask.grid();
    let fg = ones(mask);
    (0..grid.len())
        .map(|i| fg.iter().map(|&j| dist(grid, i, j)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Foreground voxels touching background or the volume face along an axis.
pub fn brute_boundary(mask: &BinaryMask) -> Vec<usize> {
    let grid = mask.grid();
    ones(mask)
        .into_iter()
        .filter(|&i| {
            let c = grid.coords(i);
            (0..3).any(|a| {
                [-1i64, 1].iter().any(|&d| {
                    let v = c[a] as i64 + d;
                    if v < 0 || v >= grid.dims[a] as i64 {
                        return true;
                    }
                    let mut n = c;
                    n[a] = v as usize;
                    !mask.get(grid.index(n[0], n[1], n[2]))
                })
            })
        })
        .collect()
}

/// Symmetric Hausdorff distance between boundaries by exhaustive search.
pub fn brute_hausdorff(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let grid = a.grid();
    let (ba, bb) = (brute_boundary(a), brute_boundary(b));
    let directed = |from: &[usize], to: &[usize]| {
        from.iter()
            .map(|&i| to.iter().map(|&j| dist(grid, i, j)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(&ba, &bb).max(directed(&bb, &ba))
}

/// Midranks of one row, computed by counting rather than sorting.
pub fn count_ranks(row: &[f64]) -> Vec<f64> {
    row.iter()
        .map(|&v| {
            let less = row.iter().filter(|&&w| w < v).count() as f64;
            let equal = row.iter().filter(|&&w| w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Sum of squared column rank sums: the arrangement-dependent part of the
/// Friedman statistic.
pub fn rank_sum_squares(rows: &[Vec<f64>]) -> f64 {
    let k = rows[0].len();
    let mut sums = vec![0.0; k];
    for r in rows {
        for (s, x) in sums.iter_mut().zip(count_ranks(r)) {
            *s += x;
        }
    }
    sums.iter().map(|s| s * s).sum()
}

/// All orderings of a slice (duplicates included).
pub fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Permutation p-value of the Friedman statistic by enumerating every
/// within-row ordering (k! per row, duplicates counted with multiplicity).
pub fn friedman_permutation_p(rows: &[Vec<f64>]) -> f64 {
    let ranked: Vec<Vec<f64>> = rows.iter().map(|r| count_ranks(r)).collect();
    let observed = rank_sum_squares(&ranked);
    let perms: Vec<Vec<Vec<f64>>> = ranked.iter().map(|r| permutations(r)).collect();
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut idx = vec![0usize; rows.len()];
    loop {
        let arrangement: Vec<Vec<f64>> =
            idx.iter().zip(&perms).map(|(&i, p)| p[i].clone()).collect();
        total += 1;
        if rank_sum_squares(&arrangement) >= observed - 1e-9 {
            hits += 1;
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return hits as f64 / total as f64;
            }
            idx[pos] += 1;
            if idx[pos] < perms[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Cochran's Q from the textbook form sum_j (T_j - mean T)^2 scaled by the
/// row variance term.
pub fn cochran_direct(rows: &[Vec<bool>]) -> Option<f64> {
    let k = rows[0].len() as f64;
    let cols: Vec<f64> = (0..rows[0].len())
        .map(|j| rows.iter().filter(|r| r[j]).count() as f64)
        .collect();
    let mean = cols.iter().sum::<f64>() / k;
    let row_terms: f64 = rows
        .iter()
        .map(|r| {
            let u = r.iter().filter(|&&b| b).count() as f64;
            u * (k - u)
        })
        .sum();
    if row_terms == 0.0 {
        return None;
    }
    Some(k * (k - 1.0) * cols.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / row_terms)
}

/// Exact binomial two-sided McNemar p with integer binomial coefficients.
pub fn mcnemar_binomial(b: u32, c: u32) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let mut coef: u128 = 1;
    let mut sum: u128 = 0;
    for i in 0..=b.min(c) {
        if i > 0 {
            coef = coef * (n - i + 1) as u128 / i as u128;
        }
        sum += coef;
    }
    (2.0 * sum as f64 / 2f64.powi(n as i32)).min(1.0)
}

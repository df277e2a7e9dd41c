//! Weighted histograms, chi-square and permutation tests, Wilson intervals.

use std::collections::BTreeMap;

use brwre_core::rng::RngStream;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{LabError, LabResult};

/// Minimum expected count per pooled cell.
pub const MIN_EXPECTED: f64 = 5.0;
/// Features with more distinct values than this are quantile-binned.
pub const MAX_LEVELS: usize = 64;
const QUANTILE_BINS: usize = 32;
pub const MIN_PAIRS: usize = 100;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram {
    cells: BTreeMap<i64, f64>,
    sum_w: f64,
    sum_w2: f64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: i64, w: f64) {
        if w <= 0.0 {
            return;
        }
        *self.cells.entry(key).or_insert(0.0) += w;
        self.sum_w += w;
        self.sum_w2 += w * w;
    }

    pub fn add_unit(&mut self, key: i64) {
        self.add(key, 1.0);
    }

    pub fn total_weight(&self) -> f64 {
        self.sum_w
    }

    /// Kish effective sample size `(Σw)² / Σw²`.
    pub fn effective_n(&self) -> f64 {
        if self.sum_w2 == 0.0 {
            0.0
        } else {
            self.sum_w * self.sum_w / self.sum_w2
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.cells.iter().map(|(&k, &w)| (k, w))
    }

    /// Cell frequencies summing to one.
    pub fn frequencies(&self) -> BTreeMap<i64, f64> {
        self.cells
            .iter()
            .map(|(&k, &w)| (k, w / self.sum_w))
            .collect()
    }
}

/// Comparison target for [`chi_square_two_sample`].
#[derive(Debug, Clone)]
pub enum Reference {
    /// Exact probabilities; missing keys have probability zero.
    Exact(BTreeMap<i64, f64>),
    Sample(Histogram),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub n_a: f64,
    pub n_b: Option<f64>,
    /// Number of tests in the Bonferroni family; 1 means uncorrected.
    pub family: usize,
}

impl TestReport {
    pub fn bonferroni(mut self, family: usize) -> Self {
        self.family = family.max(1);
        self
    }

    pub fn threshold(&self, alpha: f64) -> f64 {
        alpha / self.family as f64
    }

    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > self.threshold(alpha)
    }
}

fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df as f64).expect("df ≥ 1");
    d.sf(stat).clamp(0.0, 1.0)
}

/// Pools adjacent cells (in key order) until every group's expected count reaches [`MIN_EXPECTED`].
/// `rows` are `(observed_a, observed_b, expected_a, expected_b)`; returns the pooled rows.
fn pool(rows: Vec<[f64; 4]>) -> Vec<[f64; 4]> {
    let mut out: Vec<[f64; 4]> = Vec::new();
    let mut acc = [0.0; 4];
    let mut open = false;
    for r in rows {
        for i in 0..4 {
            acc[i] += r[i];
        }
        open = true;
        if acc[2] >= MIN_EXPECTED && acc[3] >= MIN_EXPECTED {
            out.push(acc);
            acc = [0.0; 4];
            open = false;
        }
    }
    if open {
        match out.last_mut() {
            Some(last) => {
                for i in 0..4 {
                    last[i] += acc[i];
                }
            }
            None => out.push(acc),
        }
    }
    out
}

/// Chi-square test of a weighted histogram against an exact law or a second weighted histogram.
///
/// Weighted observations are rescaled to their effective sample size before
/// the usual Pearson statistic is formed.
pub fn chi_square_two_sample(hist_a: &Histogram, hist_b: &Reference) -> LabResult<TestReport> {
    let n_a = hist_a.effective_n();
    if n_a <= 0.0 {
        return Err(LabError::DegenerateBinning("empty sample".into()));
    }
    let fa = hist_a.frequencies();
    match hist_b {
        Reference::Exact(law) => {
            let mass: f64 = law.values().sum();
            if !(mass > 0.0) {
                return Err(LabError::DegenerateBinning(
                    "reference law has no mass".into(),
                ));
            }
            let mut keys: Vec<i64> = fa.keys().chain(law.keys()).copied().collect();
            keys.sort_unstable();
            keys.dedup();
            let rows = keys
                .iter()
                .map(|k| {
                    let o = fa.get(k).copied().unwrap_or(0.0) * n_a;
                    let e = law.get(k).copied().unwrap_or(0.0) / mass * n_a;
                    [o, 0.0, e, f64::INFINITY]
                })
                .collect();
            let groups = pool(rows);
            if groups.len() < 2 {
                return Err(LabError::DegenerateBinning(format!(
                    "{} group after pooling",
                    groups.len()
                )));
            }
            let stat: f64 = groups
                .iter()
                .map(|g| {
                    if g[2] > 0.0 {
                        (g[0] - g[2]).powi(2) / g[2]
                    } else if g[0] > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .sum();
            let df = groups.len() - 1;
            Ok(TestReport {
                test: "chi_square_one_sample".into(),
                statistic: stat,
                df,
                p_value: if stat.is_finite() {
                    chi_square_sf(stat, df)
                } else {
                    0.0
                },
                n_a,
                n_b: None,
                family: 1,
            })
        }
        Reference::Sample(hb) => {
            let n_b = hb.effective_n();
            if n_b <= 0.0 {
                return Err(LabError::DegenerateBinning("empty reference sample".into()));
            }
            let fb = hb.frequencies();
            let mut keys: Vec<i64> = fa.keys().chain(fb.keys()).copied().collect();
            keys.sort_unstable();
            keys.dedup();
            let n = n_a + n_b;
            let rows = keys
                .iter()
                .map(|k| {
                    let r = fa.get(k).copied().unwrap_or(0.0) * n_a;
                    let s = fb.get(k).copied().unwrap_or(0.0) * n_b;
                    [r, s, (r + s) * n_a / n, (r + s) * n_b / n]
                })
                .collect();
            let groups = pool(rows);
            if groups.len() < 2 {
                return Err(LabError::DegenerateBinning(format!(
                    "{} group after pooling",
                    groups.len()
                )));
            }
            let (k1, k2) = ((n_b / n_a).sqrt(), (n_a / n_b).sqrt());
            let stat: f64 = groups
                .iter()
                .filter(|g| g[0] + g[1] > 0.0)
                .map(|g| (k1 * g[0] - k2 * g[1]).powi(2) / (g[0] + g[1]))
                .sum();
            let df = groups.len() - 1;
            Ok(TestReport {
                test: "chi_square_two_sample".into(),
                statistic: stat,
                df,
                p_value: chi_square_sf(stat, df),
                n_a,
                n_b: Some(n_b),
                family: 1,
            })
        }
    }
}

/// Level assignment of a scalar feature: exact levels when there are few
/// distinct values, otherwise equal-count bins represented by their means.
struct Levels {
    index: Vec<usize>,
    values: Vec<f64>,
}

fn levels(xs: &[f64]) -> Levels {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup_by(|a, b| a.total_cmp(b).is_eq());
    if distinct.len() <= MAX_LEVELS {
        let index = xs
            .iter()
            .map(|x| distinct.partition_point(|d| d.total_cmp(x).is_lt()))
            .collect();
        return Levels {
            index,
            values: distinct,
        };
    }
    // Bin edges at quantiles; ties never straddle an edge.
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..QUANTILE_BINS)
        .map(|b| sorted[b * n / QUANTILE_BINS])
        .collect();
    edges.dedup_by(|a, b| a.total_cmp(b).is_eq());
    let bin = |x: f64| edges.partition_point(|e| e.total_cmp(&x).is_le());
    let index: Vec<usize> = xs.iter().map(|&x| bin(x)).collect();
    let k = edges.len() + 1;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&i, &x) in index.iter().zip(xs) {
        sums[i] += x;
        counts[i] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Levels { index, values }
}

/// Double-centred distance matrix over levels, using the sample's level counts.
fn centred_distances(lv: &Levels) -> Vec<Vec<f64>> {
    let k = lv.values.len();
    let n = lv.index.len() as f64;
    let mut counts = vec![0.0; k];
    for &i in &lv.index {
        counts[i] += 1.0;
    }
    let d = |a: usize, b: usize| (lv.values[a] - lv.values[b]).abs();
    let row: Vec<f64> = (0..k)
        .map(|a| (0..k).map(|b| counts[b] * d(a, b)).sum::<f64>() / n)
        .collect();
    let grand: f64 = (0..k).map(|a| counts[a] * row[a]).sum::<f64>() / n;
    (0..k)
        .map(|a| (0..k).map(|b| d(a, b) - row[a] - row[b] + grand).collect())
        .collect()
}

fn dcov2(table: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>], n: f64) -> f64 {
    let (ka, kb) = (a.len(), b.len());
    // T = Ã N, then Σ_km N_km (T B̃)_km.
    let mut t = vec![vec![0.0; kb]; ka];
    for k in 0..ka {
        for k2 in 0..ka {
            let c = a[k][k2];
            if c == 0.0 {
                continue;
            }
            for m in 0..kb {
                t[k][m] += c * table[k2][m];
            }
        }
    }
    let mut s = 0.0;
    for k in 0..ka {
        for m in 0..kb {
            let nkm = table[k][m];
            if nkm == 0.0 {
                continue;
            }
            let tb: f64 = (0..kb).map(|m2| t[k][m2] * b[m2][m]).sum();
            s += nkm * tb;
        }
    }
    s / (n * n)
}

/// Permutation test of independence between two scalar features using the
/// squared distance covariance as statistic.
pub fn permutation_independence(
    pairs: &[(f64, f64)],
    permutations: usize,
    rng: &mut RngStream,
) -> LabResult<TestReport> {
    if pairs.len() < MIN_PAIRS {
        return Err(brwre_core::Error::TooFewSamples {
            got: pairs.len(),
            needed: MIN_PAIRS,
        }
        .into());
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (la, lb) = (levels(&xs), levels(&ys));
    let (a, b) = (centred_distances(&la), centred_distances(&lb));
    let n = pairs.len() as f64;
    let (ka, kb) = (la.values.len(), lb.values.len());
    let table_of = |ib: &[usize]| {
        let mut t = vec![vec![0.0; kb]; ka];
        for (&i, &j) in la.index.iter().zip(ib) {
            t[i][j] += 1.0;
        }
        t
    };
    let observed = dcov2(&table_of(&lb.index), &a, &b, n);
    let tiny = 1e-12 * observed.abs().max(f64::MIN_POSITIVE);
    let mut perm = lb.index.clone();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        for i in (1..perm.len()).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        if dcov2(&table_of(&perm), &a, &b, n) >= observed - tiny {
            exceed += 1;
        }
    }
    Ok(TestReport {
        test: "permutation_distance_covariance".into(),
        statistic: observed,
        df: 0,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        n_a: n,
        n_b: None,
        family: 1,
    })
}

/// Wilson score interval for a binomial proportion at the given two-sided confidence.
pub fn wilson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

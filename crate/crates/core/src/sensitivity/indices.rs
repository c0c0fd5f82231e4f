//! First-, second- and total-order Sobol estimators with percentile
//! bootstrap intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::mh::chain_rng;
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

impl IndexEstimate {
    /// Interval excludes zero and the estimate exceeds `threshold`.
    pub fn significant(&self, threshold: f64) -> bool {
        self.lo > 0.0 && self.point > threshold
    }

    fn zero() -> Self {
        IndexEstimate {
            point: 0.0,
            lo: 0.0,
            hi: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEstimate {
    pub i: usize,
    pub j: usize,
    pub estimate: IndexEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolResult {
    pub names: Vec<String>,
    pub first: Vec<IndexEstimate>,
    pub total: Vec<IndexEstimate>,
    /// Pairs `i < j` in lexicographic order.
    pub second: Vec<PairEstimate>,
    pub n: usize,
    pub bootstrap: usize,
    pub seed: u64,
    /// All evaluations were equal, so every index is reported as 0.
    pub degenerate: bool,
    /// Evaluations that were replaced rather than computed directly.
    pub n_replaced: usize,
}

impl SobolResult {
    pub fn significant_first(&self, threshold: f64) -> Vec<bool> {
        self.first
            .iter()
            .map(|e| e.significant(threshold))
            .collect()
    }

    pub fn significant_total(&self, threshold: f64) -> Vec<bool> {
        self.total
            .iter()
            .map(|e| e.significant(threshold))
            .collect()
    }

    pub fn significant_pairs(&self, threshold: f64) -> Vec<&PairEstimate> {
        self.second
            .iter()
            .filter(|p| p.estimate.significant(threshold))
            .collect()
    }

    /// Index of the parameter with the largest first-order estimate.
    pub fn top_first_order(&self) -> usize {
        (0..self.first.len())
            .max_by(|&a, &b| self.first[a].point.total_cmp(&self.first[b].point))
            .unwrap_or(0)
    }

    pub fn write_csv(&self, writer: impl std::io::Write, threshold_first: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "parameter",
            "S1",
            "S1_lo",
            "S1_hi",
            "ST",
            "ST_lo",
            "ST_hi",
            "S1_significant",
            "ST_significant",
        ])?;
        for (k, name) in self.names.iter().enumerate() {
            let (f, t) = (self.first[k], self.total[k]);
            w.write_record([
                name.clone(),
                f.point.to_string(),
                f.lo.to_string(),
                f.hi.to_string(),
                t.point.to_string(),
                t.lo.to_string(),
                t.hi.to_string(),
                f.significant(threshold_first).to_string(),
                t.significant(threshold_first).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pairs_csv(
        &self,
        writer: impl std::io::Write,
        threshold_second: f64,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "parameter_1",
            "parameter_2",
            "S2",
            "S2_lo",
            "S2_hi",
            "significant",
        ])?;
        for p in &self.second {
            w.write_record([
                self.names[p.i].clone(),
                self.names[p.j].clone(),
                p.estimate.point.to_string(),
                p.estimate.lo.to_string(),
                p.estimate.hi.to_string(),
                p.estimate.significant(threshold_second).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluations addressed by Saltelli block `j` and column `i`.
struct Blocks<'a> {
    d: usize,
    y: &'a [f64],
}

impl Blocks<'_> {
    fn a(&self, j: usize) -> f64 {
        self.y[j * (2 * self.d + 2)]
    }
    fn b(&self, j: usize) -> f64 {
        self.y[j * (2 * self.d + 2) + 2 * self.d + 1]
    }
    fn ab(&self, j: usize, i: usize) -> f64 {
        self.y[j * (2 * self.d + 2) + 1 + i]
    }
    fn ba(&self, j: usize, i: usize) -> f64 {
        self.y[j * (2 * self.d + 2) + 1 + self.d + i]
    }
}

/// Point estimates `(S1, ST, S2)` over the block indices `rows`; `None` when
/// the output variance vanishes.
fn estimate(blocks: &Blocks<'_>, rows: &[usize]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = blocks.d;
    let m = rows.len() as f64;
    // Variance of the concatenated A and B outputs.
    let mut sum = 0.0;
    for &j in rows {
        sum += blocks.a(j) + blocks.b(j);
    }
    let mean = sum / (2.0 * m);
    let mut var = 0.0;
    for &j in rows {
        var += (blocks.a(j) - mean).powi(2) + (blocks.b(j) - mean).powi(2);
    }
    var /= 2.0 * m;
    if !(var > 0.0) {
        return None;
    }

    let mut s1 = vec![0.0; d];
    let mut st = vec![0.0; d];
    let mut vjk = vec![0.0; d * d];
    let mut ab_sum = 0.0;
    let mut ab_row = vec![0.0; d];
    for &j in rows {
        let (fa, fb) = (blocks.a(j), blocks.b(j));
        ab_sum += fa * fb;
        for i in 0..d {
            let fab = blocks.ab(j, i);
            ab_row[i] = fab;
            s1[i] += fb * (fab - fa);
            st[i] += (fa - fab).powi(2);
        }
        for p in 0..d {
            let fba = blocks.ba(j, p);
            for q in p + 1..d {
                vjk[p * d + q] += fba * ab_row[q];
            }
        }
    }
    for i in 0..d {
        s1[i] /= m * var;
        st[i] /= 2.0 * m * var;
    }
    let mut s2 = Vec::with_capacity(d * (d - 1) / 2);
    for p in 0..d {
        for q in p + 1..d {
            let v = (vjk[p * d + q] - ab_sum) / (m * var);
            s2.push(v - s1[p] - s1[q]);
        }
    }
    Some((s1, st, s2))
}

fn percentile_interval(point: f64, mut reps: Vec<f64>, confidence: f64) -> IndexEstimate {
    reps.retain(|v| v.is_finite());
    reps.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let (lo, hi) = if reps.is_empty() {
        (point, point)
    } else {
        (
            quantile_sorted(&reps, tail),
            quantile_sorted(&reps, 1.0 - tail),
        )
    };
    // Percentile intervals of skewed estimators can miss the point estimate;
    // widen so that lo <= point <= hi always holds.
    IndexEstimate {
        point,
        lo: lo.min(point),
        hi: hi.max(point),
    }
}

/// Estimates Sobol indices from evaluations in Saltelli row order.
///
/// Rows are resampled by block for `bootstrap` replicates, each with its own
/// random stream, giving percentile intervals at `confidence`.
pub fn sobol_indices(
    names: &[String],
    n: usize,
    evaluations: &[f64],
    bootstrap: usize,
    confidence: f64,
    seed: u64,
) -> Result<SobolResult> {
    let d = names.len();
    if d < 2 {
        return Err(Error::config("Sobol indices need at least two parameters"));
    }
    if evaluations.len() != n * (2 * d + 2) {
        return Err(Error::data(format!(
            "expected {} evaluations for n = {n}, d = {d}, got {}",
            n * (2 * d + 2),
            evaluations.len()
        )));
    }
    let bad = evaluations.iter().filter(|v| !v.is_finite()).count();
    if bad > 0 {
        return Err(Error::numeric(format!("{bad} non-finite evaluations")));
    }
    let blocks = Blocks { d, y: evaluations };
    let all: Vec<usize> = (0..n).collect();
    let mut result = SobolResult {
        names: names.to_vec(),
        first: vec![IndexEstimate::zero(); d],
        total: vec![IndexEstimate::zero(); d],
        second: Vec::new(),
        n,
        bootstrap,
        seed,
        degenerate: false,
        n_replaced: 0,
    };
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|p| (p + 1..d).map(move |q| (p, q)))
        .collect();
    let Some((s1, st, s2)) = estimate(&blocks, &all) else {
        result.degenerate = true;
        result.second = pairs
            .iter()
            .map(|&(i, j)| PairEstimate {
                i,
                j,
                estimate: IndexEstimate::zero(),
            })
            .collect();
        return Ok(result);
    };

    let reps: Vec<Option<(Vec<f64>, Vec<f64>, Vec<f64>)>> = (0..bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = chain_rng(seed, r);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            estimate(&blocks, &rows)
        })
        .collect();
    let column = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>, Vec<f64>)) -> f64| -> Vec<f64> {
        reps.iter().flatten().map(pick).collect()
    };
    result.first = (0..d)
        .map(|i| percentile_interval(s1[i], column(&|r| r.0[i]), confidence))
        .collect();
    result.total = (0..d)
        .map(|i| percentile_interval(st[i], column(&|r| r.1[i]), confidence))
        .collect();
    result.second = pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| PairEstimate {
            i,
            j,
            estimate: percentile_interval(s2[k], column(&|r| r.2[k]), confidence),
        })
        .collect();
    Ok(result)
}

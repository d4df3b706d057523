use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub kendall_tau: Correlation,
    pub pearson_r: Correlation,
    pub spearman_rho: Correlation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("score lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 pairs, got {0}")]
    TooFew(usize),
    #[error("a score list is constant, so correlation is undefined")]
    Constant,
    #[error("scores must be finite")]
    NonFinite,
}

/// Kendall's tau-b, Pearson's r and Spearman's rho with asymptotic
/// two-sided p-values (normal for tau, Student t for r and rho).
pub fn agreement_stats(a: &[f64], b: &[f64]) -> Result<Agreement, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(StatsError::TooFew(a.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(a) || constant(b) {
        return Err(StatsError::Constant);
    }
    let r = pearson(a, b);
    let rho = pearson(&ranks(a), &ranks(b));
    let n = a.len() as f64;
    Ok(Agreement {
        kendall_tau: kendall(a, b),
        pearson_r: Correlation {
            statistic: r,
            p_value: t_p_value(r, n),
        },
        spearman_rho: Correlation {
            statistic: rho,
            p_value: t_p_value(rho, n),
        },
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// 1-based ranks, ties share their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

fn t_p_value(r: f64, n: f64) -> f64 {
    let df = n - 2.0;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Sizes of the groups of equal values.
fn tie_groups(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut run = 1.0;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
        } else {
            out.push(run);
            run = 1.0;
        }
    }
    out.push(run);
    out
}

fn kendall(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let sx = (a[i] - a[j]).partial_cmp(&0.0).map_or(0.0, |o| o as i8 as f64);
            let sy = (b[i] - b[j]).partial_cmp(&0.0).map_or(0.0, |o| o as i8 as f64);
            s += sx * sy;
        }
    }
    let nf = n as f64;
    let n0 = nf * (nf - 1.0) / 2.0;
    let (ta, tb) = (tie_groups(a), tie_groups(b));
    let pairs = |t: &[f64]| t.iter().map(|t| t * (t - 1.0) / 2.0).sum::<f64>();
    let tau = (s / ((n0 - pairs(&ta)) * (n0 - pairs(&tb))).sqrt()).clamp(-1.0, 1.0);

    // variance of S under independence, with tie corrections
    let m = nf * (nf - 1.0);
    let t1 = |t: &[f64]| t.iter().map(|t| t * (t - 1.0)).sum::<f64>();
    let t2 = |t: &[f64]| t.iter().map(|t| t * (t - 1.0) * (t - 2.0)).sum::<f64>();
    let t3 = |t: &[f64]| t.iter().map(|t| t * (t - 1.0) * (2.0 * t + 5.0)).sum::<f64>();
    let var = (m * (2.0 * nf + 5.0) - t3(&ta) - t3(&tb)) / 18.0
        + t1(&ta) * t1(&tb) / (2.0 * m)
        + t2(&ta) * t2(&tb) / (9.0 * m * (nf - 2.0));
    let z = s / var.sqrt();
    let p = (2.0 * Normal::new(0.0, 1.0).expect("unit normal").sf(z.abs())).min(1.0);
    Correlation {
        statistic: tau,
        p_value: p,
    }
}

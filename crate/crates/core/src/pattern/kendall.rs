//! Kendall's tau-b in O(n log n): sort pairs by the first coordinate, then
//! count the exchanges a merge sort needs to order the second coordinate.

use std::cmp::Ordering;

use log::warn;

use super::PatternError;

/// Pair counts behind tau-b. All counts are over unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TauCounts {
    pub n: u64,
    /// Pairs tied in the first vector.
    pub ties_u: u64,
    /// Pairs tied in the second vector.
    pub ties_v: u64,
    /// Pairs tied in both.
    pub ties_joint: u64,
    /// Concordant minus discordant.
    pub net_concordant: i64,
}

impl TauCounts {
    pub fn total_pairs(&self) -> u64 {
        self.n * (self.n - 1) / 2
    }

    /// `(nc - nd) / sqrt((n0 - n1)(n0 - n2))`; `None` when either vector is all tied.
    pub fn tau_b(&self) -> Option<f64> {
        let n0 = self.total_pairs();
        let left = n0 - self.ties_u;
        let right = n0 - self.ties_v;
        if left == 0 || right == 0 {
            return None;
        }
        let denom = ((left as f64) * (right as f64)).sqrt();
        Some((self.net_concordant as f64 / denom).clamp(-1.0, 1.0))
    }
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("inputs checked finite")
}

fn check_inputs(u: &[f64], v: &[f64]) -> Result<(), PatternError> {
    if u.len() != v.len() {
        return Err(PatternError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.len() < 2 {
        return Err(PatternError::TooShort { len: u.len() });
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(PatternError::NonFinite);
    }
    Ok(())
}

/// Number of tied pairs among runs of equal values in an already sorted slice.
fn tied_pairs_sorted(values: impl Iterator<Item = f64>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for x in values {
        if prev == Some(x) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(x);
    }
    total + run * (run.saturating_sub(1)) / 2
}

/// Sorts `values` ascending and returns the number of strict inversions.
fn merge_sort_exchanges(values: &mut Vec<f64>) -> u64 {
    let n = values.len();
    let mut buffer = vec![0.0; n];
    let mut exchanges = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if values[j] < values[i] {
                    buffer[k] = values[j];
                    exchanges += (mid - i) as u64;
                    j += 1;
                } else {
                    buffer[k] = values[i];
                    i += 1;
                }
                k += 1;
            }
            buffer[k..k + (mid - i)].copy_from_slice(&values[i..mid]);
            k += mid - i;
            buffer[k..k + (end - j)].copy_from_slice(&values[j..end]);
            start = end;
        }
        std::mem::swap(values, &mut buffer);
        width *= 2;
    }
    exchanges
}

pub fn tau_counts(u: &[f64], v: &[f64]) -> Result<TauCounts, PatternError> {
    check_inputs(u, v)?;
    let n = u.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_f64(u[a], u[b]).then(cmp_f64(v[a], v[b])));

    let ties_u = tied_pairs_sorted(order.iter().map(|&i| u[i]));
    let mut ties_joint = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if u[w[0]] == u[w[1]] && v[w[0]] == v[w[1]] {
            run += 1;
        } else {
            ties_joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties_joint += run * (run - 1) / 2;

    let mut second: Vec<f64> = order.iter().map(|&i| v[i]).collect();
    let exchanges = merge_sort_exchanges(&mut second);
    let ties_v = tied_pairs_sorted(second.iter().copied());

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let net = n0 as i64 - ties_u as i64 - ties_v as i64 + ties_joint as i64 - 2 * exchanges as i64;
    Ok(TauCounts {
        n: n as u64,
        ties_u,
        ties_v,
        ties_joint,
        net_concordant: net,
    })
}

/// Kendall's tau-b of `u` and `v`, in [-1, 1].
///
/// When every entry of either vector is tied the coefficient is undefined;
/// that case returns 0 and logs a warning.
pub fn kendall_tau(u: &[f64], v: &[f64]) -> Result<f64, PatternError> {
    let counts = tau_counts(u, v)?;
    Ok(counts.tau_b().unwrap_or_else(|| {
        warn!("kendall tau undefined for an all-tied input of length {}; using 0", u.len());
        0.0
    }))
}

//! One-sided Mann–Whitney U test (normal approximation).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample
    pub u: f64,
    pub z: f64,
    /// P(U ≥ observed) under H0, i.e. evidence that `a` tends to exceed `b`
    pub p_greater: f64,
}

/// Midranks (1-based) and the tie-correction term Σ(t³ − t).
fn ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mid;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (r, ties)
}

/// Tests whether `a` is stochastically greater than `b`, with tie and
/// continuity corrections.
pub fn mann_whitney_greater(a: &[f64], b: &[f64]) -> Result<MannWhitney, AnalyticsError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalyticsError::Domain("Mann-Whitney needs two nonempty samples".into()));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let (r, ties) = ranks(&all);
    let r1: f64 = r[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mu = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Ok(MannWhitney { u, z: 0.0, p_greater: 1.0 });
    }
    let z = (u - mu - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(MannWhitney {
        u,
        z,
        p_greater: normal.sf(z),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_matches_pair_counting() {
        let a = [3.1, 4.2, 5.5, 6.0, 6.0, 7.3, 8.8, 9.1];
        let b = [1.0, 2.5, 3.1, 3.3, 4.0, 4.2, 5.0];
        let mut pairs = 0.0;
        for x in a {
            for y in b {
                pairs += if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let m = mann_whitney_greater(&a, &b).unwrap();
        assert_eq!(m.u, pairs);
        // reference value from an independent statistics package
        // (asymptotic method, continuity correction, alternative = greater)
        assert!((m.p_greater - 0.006300819702332509).abs() < 1e-9, "{}", m.p_greater);
    }

    #[test]
    fn identical_samples_not_significant() {
        let m = mann_whitney_greater(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(m.p_greater > 0.4);
        let m = mann_whitney_greater(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!(m.p_greater, 1.0);
        assert!(mann_whitney_greater(&[], &[1.0]).is_err());
    }
}

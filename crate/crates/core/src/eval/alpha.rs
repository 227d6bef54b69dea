//! Krippendorff's alpha for nominal data with missing values.

use std::collections::BTreeMap;

use super::{EvalError, Result};

/// Items × coders table of nominal labels; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReliabilityMatrix<L> {
    rows: Vec<Vec<Option<L>>>,
    coders: usize,
}

impl<L: Ord + Copy> ReliabilityMatrix<L> {
    /// Requires at least two coders, equally long rows, and at least one item
    /// labelled by two or more coders.
    pub fn new(rows: Vec<Vec<Option<L>>>) -> Result<Self> {
        let coders = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != coders) {
            return Err(EvalError::RaggedMatrix);
        }
        if coders < 2 {
            return Err(EvalError::InsufficientData("fewer than 2 coders".into()));
        }
        if !rows.iter().any(|r| r.iter().flatten().count() >= 2) {
            return Err(EvalError::InsufficientData(
                "no item carries 2 or more labels".into(),
            ));
        }
        Ok(ReliabilityMatrix { rows, coders })
    }

    pub fn items(&self) -> usize {
        self.rows.len()
    }

    pub fn coders(&self) -> usize {
        self.coders
    }

    pub fn rows(&self) -> &[Vec<Option<L>>] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    pub value: f64,
    /// Number of pairable values (labels in items with 2+ labels).
    pub pairable: usize,
    /// False when every pairable value is identical; `value` is then 1.0 by
    /// convention.
    pub expected_disagreement_defined: bool,
}

/// Nominal alpha, `1 - D_o / D_e`, from the coincidence matrix of pairable
/// values.
///
/// Only off-diagonal mass matters for the nominal metric, so per item the
/// disagreeing ordered pairs are `m_u^2 - sum_c n_uc^2`, weighted by
/// `1 / (m_u - 1)`; the expected counterpart is `n^2 - sum_c n_c^2`.
pub fn krippendorff_alpha<L: Ord + Copy>(m: &ReliabilityMatrix<L>) -> Alpha {
    let mut observed = 0.0;
    let mut totals: BTreeMap<L, usize> = BTreeMap::new();
    let mut n = 0usize;
    for row in &m.rows {
        let mut counts: BTreeMap<L, usize> = BTreeMap::new();
        for v in row.iter().flatten() {
            *counts.entry(*v).or_default() += 1;
        }
        let m_u: usize = counts.values().sum();
        if m_u < 2 {
            continue;
        }
        let same: usize = counts.values().map(|c| c * c).sum();
        observed += (m_u * m_u - same) as f64 / (m_u - 1) as f64;
        for (v, c) in counts {
            *totals.entry(v).or_default() += c;
        }
        n += m_u;
    }
    let same_total: usize = totals.values().map(|c| c * c).sum();
    let expected = (n * n - same_total) as f64;
    if expected == 0.0 {
        return Alpha {
            value: 1.0,
            pairable: n,
            expected_disagreement_defined: false,
        };
    }
    Alpha {
        value: 1.0 - (n - 1) as f64 * observed / expected,
        pairable: n,
        expected_disagreement_defined: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Builds the full coincidence matrix by enumerating ordered coder pairs
    /// within each item, then applies the textbook nominal formula.
    fn oracle(rows: &[Vec<Option<u8>>]) -> f64 {
        let mut values: Vec<u8> = rows.iter().flatten().flatten().copied().collect();
        values.sort_unstable();
        values.dedup();
        let idx = |v: u8| values.iter().position(|x| *x == v).unwrap();
        let k = values.len();
        let mut o = vec![vec![0.0f64; k]; k];
        for row in rows {
            let present: Vec<u8> = row.iter().flatten().copied().collect();
            let m = present.len();
            if m < 2 {
                continue;
            }
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        o[idx(present[i])][idx(present[j])] += 1.0 / (m as f64 - 1.0);
                    }
                }
            }
        }
        let n_c: Vec<f64> = o.iter().map(|r| r.iter().sum()).collect();
        let n: f64 = n_c.iter().sum();
        let mut d_o = 0.0;
        let mut d_e = 0.0;
        for c in 0..k {
            for kk in 0..k {
                if c != kk {
                    d_o += o[c][kk];
                    d_e += n_c[c] * n_c[kk];
                }
            }
        }
        1.0 - (n - 1.0) * d_o / d_e
    }

    #[test]
    fn perfect_agreement() {
        let rows = vec![
            vec![Some(1), Some(1), None],
            vec![Some(2), Some(2), Some(2)],
            vec![Some(0), None, Some(0)],
        ];
        let a = krippendorff_alpha(&ReliabilityMatrix::new(rows).unwrap());
        assert_eq!(a.value, 1.0);
        assert!(a.expected_disagreement_defined);
        assert_eq!(a.pairable, 7);
    }

    #[test]
    fn single_category_is_flagged() {
        let rows = vec![vec![Some(1), Some(1)], vec![Some(1), Some(1)]];
        let a = krippendorff_alpha(&ReliabilityMatrix::new(rows).unwrap());
        assert_eq!(a.value, 1.0);
        assert!(!a.expected_disagreement_defined);
    }

    #[test]
    fn textbook_example() {
        // Krippendorff's canonical nominal example: 4 coders, 12 units,
        // alpha = 0.743.
        let raw: [[u8; 12]; 4] = [
            [1, 2, 3, 3, 2, 1, 4, 1, 2, 0, 0, 0],
            [1, 2, 3, 3, 2, 2, 4, 1, 2, 5, 0, 3],
            [0, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, 0],
            [1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, 0],
        ];
        let rows: Vec<Vec<Option<u8>>> = (0..12)
            .map(|u| (0..4).map(|c| Some(raw[c][u]).filter(|v| *v != 0)).collect())
            .collect();
        let a = krippendorff_alpha(&ReliabilityMatrix::new(rows.clone()).unwrap());
        assert!((a.value - 0.743).abs() < 5e-4, "{}", a.value);
        assert!((a.value - oracle(&rows)).abs() < 1e-12);
    }

    #[test]
    fn independent_coders_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20240601);
        let rows: Vec<Vec<Option<u8>>> = (0..1000)
            .map(|_| vec![Some(rng.random_range(0..4)), Some(rng.random_range(0..4))])
            .collect();
        let a = krippendorff_alpha(&ReliabilityMatrix::new(rows).unwrap());
        assert!(a.value.abs() < 0.1, "{}", a.value);
    }

    #[test]
    fn matrix_validation() {
        assert!(matches!(
            ReliabilityMatrix::<u8>::new(vec![vec![Some(1)], vec![Some(2)]]),
            Err(EvalError::InsufficientData(_))
        ));
        assert!(matches!(
            ReliabilityMatrix::new(vec![vec![Some(1), None], vec![None, Some(2)]]),
            Err(EvalError::InsufficientData(_))
        ));
        assert!(matches!(
            ReliabilityMatrix::new(vec![vec![Some(1), Some(1)], vec![Some(2)]]),
            Err(EvalError::RaggedMatrix)
        ));
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<Option<u8>>>> {
        (2usize..=5, 1usize..=20).prop_flat_map(|(coders, items)| {
            prop::collection::vec(
                prop::collection::vec(prop::option::weighted(0.8, 0u8..4), coders),
                items,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_coincidence_oracle(rows in arb_matrix()) {
            let Ok(m) = ReliabilityMatrix::new(rows.clone()) else { return Ok(()) };
            let a = krippendorff_alpha(&m);
            prop_assert!(a.value <= 1.0);
            if a.expected_disagreement_defined {
                prop_assert!((a.value - oracle(&rows)).abs() < 1e-9);
            }
        }

        #[test]
        fn invariant_under_permutations(rows in arb_matrix(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let Ok(m) = ReliabilityMatrix::new(rows.clone()) else { return Ok(()) };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut coder_order: Vec<usize> = (0..m.coders()).collect();
            coder_order.shuffle(&mut rng);
            let mut permuted: Vec<Vec<Option<u8>>> = rows
                .iter()
                .map(|r| coder_order.iter().map(|&c| r[c]).collect())
                .collect();
            permuted.shuffle(&mut rng);
            let b = krippendorff_alpha(&ReliabilityMatrix::new(permuted).unwrap());
            prop_assert!((krippendorff_alpha(&m).value - b.value).abs() < 1e-12);
        }
    }
}

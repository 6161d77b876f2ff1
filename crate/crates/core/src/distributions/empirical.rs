use std::collections::HashMap;

use crate::distributions::Dataset;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-8;

/// Rows sharing one covariate value, with their total weight and the
/// conditional outcome distribution among them.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub x: Vec<f64>,
    pub weight: f64,
    /// `(outcome, probability)`, sorted by outcome, strictly positive.
    pub conditional: Vec<(u64, f64)>,
}

impl Group {
    pub fn conditional_prob(&self, y: u64) -> f64 {
        self.conditional
            .binary_search_by_key(&y, |&(o, _)| o)
            .map_or(0.0, |i| self.conditional[i].1)
    }

    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.conditional.iter().map(|&(y, _)| y)
    }
}

/// A row with positive weight, pointing at its covariate group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedRow {
    pub group: usize,
    pub y: u64,
    pub weight: f64,
}

/// Weighted joint empirical measure `Σ w_i δ(x_i, y_i)`, decomposed into the
/// covariate marginal (group weights) and per-group conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEmpirical {
    groups: Vec<Group>,
    rows: Vec<WeightedRow>,
    total_weight: f64,
}

impl WeightedEmpirical {
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn rows(&self) -> &[WeightedRow] {
        &self.rows
    }

    /// Sum of the raw weights before normalization.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn dim(&self) -> usize {
        self.groups.first().map_or(0, |g| g.x.len())
    }
}

/// Canonical bit pattern of a covariate vector: `-0.0` and `0.0` coincide.
fn covariate_key(x: &[f64]) -> Vec<u64> {
    x.iter()
        .map(|&v| if v == 0.0 { 0u64 } else { v.to_bits() })
        .collect()
}

/// Groups the rows of `data` by exact covariate equality under `weights`.
///
/// Weights are renormalized by their sum; groups whose total weight is zero
/// are dropped. Group order follows first appearance in `data`.
pub fn build_empirical(data: &Dataset, weights: &[f64]) -> Result<WeightedEmpirical> {
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: weights.len(),
            context: "weight vector",
        });
    }
    if let Some(i) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidWeights(format!(
            "weight {i} is {} (must be finite and nonnegative)",
            weights[i]
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {total}, expected 1"
        )));
    }

    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    // per-group (outcome -> accumulated weight)
    let mut cond: Vec<HashMap<u64, f64>> = Vec::new();
    let mut rows = Vec::with_capacity(data.len());

    for (i, (x, y)) in data.rows().enumerate() {
        let w = weights[i] / total;
        if w == 0.0 {
            continue;
        }
        let g = *index.entry(covariate_key(x)).or_insert_with(|| {
            groups.push(Group {
                x: x.iter().map(|&v| if v == 0.0 { 0.0 } else { v }).collect(),
                weight: 0.0,
                conditional: Vec::new(),
            });
            cond.push(HashMap::new());
            groups.len() - 1
        });
        groups[g].weight += w;
        *cond[g].entry(y).or_insert(0.0) += w;
        rows.push(WeightedRow { group: g, y, weight: w });
    }

    for (group, acc) in groups.iter_mut().zip(cond) {
        let mut c: Vec<(u64, f64)> = acc.into_iter().map(|(y, w)| (y, w / group.weight)).collect();
        c.sort_unstable_by_key(|&(y, _)| y);
        group.conditional = c;
    }

    Ok(WeightedEmpirical {
        groups,
        rows,
        total_weight: total,
    })
}

/// Uniform weights `1/n`.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::CovariateKind;
    use proptest::prelude::*;

    fn toy() -> Dataset {
        let rows = vec![(vec![0.0], 1), (vec![0.0], 1), (vec![0.0], 2), (vec![1.0], 0)];
        Dataset::from_rows(&rows, CovariateKind::Discrete).unwrap()
    }

    #[test]
    fn groups_by_counting() {
        let emp = build_empirical(&toy(), &uniform_weights(4)).unwrap();
        let g = emp.groups();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].x, vec![0.0]);
        assert!((g[0].weight - 0.75).abs() < 1e-15);
        assert!((g[0].conditional_prob(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((g[0].conditional_prob(2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((g[1].weight - 0.25).abs() < 1e-15);
        assert_eq!(g[1].conditional, vec![(0, 1.0)]);
    }

    #[test]
    fn one_hot_weights_give_point_mass() {
        let d = toy();
        for i in 0..d.len() {
            let mut w = vec![0.0; d.len()];
            w[i] = 1.0;
            let emp = build_empirical(&d, &w).unwrap();
            assert_eq!(emp.groups().len(), 1);
            assert_eq!(emp.groups()[0].x, d.x(i));
            assert_eq!(emp.groups()[0].conditional, vec![(d.y(i), 1.0)]);
        }
    }

    #[test]
    fn distinct_covariates_are_singletons() {
        let rows: Vec<_> = (0..7).map(|i| (vec![i as f64 * 0.3], (i % 3) as u64)).collect();
        let d = Dataset::from_rows(&rows, CovariateKind::Continuous).unwrap();
        let emp = build_empirical(&d, &uniform_weights(7)).unwrap();
        assert_eq!(emp.groups().len(), 7);
        for (g, (_, y)) in emp.groups().iter().zip(d.rows()) {
            assert!((g.weight - 1.0 / 7.0).abs() < 1e-15);
            assert_eq!(g.conditional, vec![(y, 1.0)]);
        }
    }

    #[test]
    fn negative_zero_groups_with_zero() {
        let rows = vec![(vec![0.0], 1), (vec![-0.0], 2)];
        let d = Dataset::from_rows(&rows, CovariateKind::Discrete).unwrap();
        let emp = build_empirical(&d, &uniform_weights(2)).unwrap();
        assert_eq!(emp.groups().len(), 1);
    }

    #[test]
    fn weight_errors() {
        let d = toy();
        assert!(matches!(
            build_empirical(&d, &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            build_empirical(&d, &[0.5, 0.5, 0.25, -0.25]),
            Err(Error::InvalidWeights(_))
        ));
        assert!(matches!(
            build_empirical(&d, &[0.25, 0.25, 0.25, 0.2]),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn zero_weight_groups_dropped() {
        let emp = build_empirical(&toy(), &[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(emp.groups().len(), 1);
        assert_eq!(emp.groups()[0].conditional, vec![(1, 1.0)]);
        assert_eq!(emp.rows().len(), 2);
    }

    proptest! {
        #[test]
        fn reproduces_joint_counts(rows in prop::collection::vec((0u8..3, 0u64..4), 1..40),
                                   raw in prop::collection::vec(0.01f64..1.0, 40)) {
            let data: Vec<_> = rows.iter().map(|&(x, y)| (vec![x as f64], y)).collect();
            let d = Dataset::from_rows(&data, CovariateKind::Discrete).unwrap();
            let n = d.len();
            let emp = build_empirical(&d, &uniform_weights(n)).unwrap();
            let gsum: f64 = emp.groups().iter().map(|g| g.weight).sum();
            prop_assert!((gsum - 1.0).abs() < 1e-12);
            for g in emp.groups() {
                let csum: f64 = g.conditional.iter().map(|c| c.1).sum();
                prop_assert!((csum - 1.0).abs() < 1e-12);
                for &(y, p) in &g.conditional {
                    let count = data.iter().filter(|(x, yy)| x[0] == g.x[0] && *yy == y).count();
                    prop_assert!((g.weight * p - count as f64 / n as f64).abs() < 1e-12);
                }
            }

            // arbitrary positive weights keep the normalization invariants
            let w: Vec<f64> = raw[..n].to_vec();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / s).collect();
            let emp = build_empirical(&d, &w).unwrap();
            let gsum: f64 = emp.groups().iter().map(|g| g.weight).sum();
            prop_assert!((gsum - 1.0).abs() < 1e-12);
        }
    }
}

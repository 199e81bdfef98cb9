use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, SplitKind, SplitSizes};

pub const TABULAR_FEATURES: usize = 16;
pub const TABULAR_INFORMATIVE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularParams {
    pub splits: SplitSizes,
    pub seed: u64,
}

impl Default for TabularParams {
    fn default() -> Self {
        Self { splits: SplitSizes { train: 8000, validation: 2000, test: 4000 }, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularRow {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Samples of `x = a z / 10 + d eta + eps / 10` with label `z > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    pub a: Vec<f64>,
    pub d: Vec<f64>,
    pub seed: u64,
    pub train: Vec<TabularRow>,
    pub validation: Vec<TabularRow>,
    pub test: Vec<TabularRow>,
}

impl TabularDataset {
    pub fn split(&self, kind: SplitKind) -> &[TabularRow] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Validation => &self.validation,
            SplitKind::Test => &self.test,
        }
    }

    /// Informative feature indices ordered by decreasing `|a_j|`, followed by
    /// the irrelevant ones in index order.
    pub fn ground_truth_order(&self) -> Vec<usize> {
        let mut informative: Vec<usize> = (0..TABULAR_INFORMATIVE).collect();
        informative.sort_by(|&i, &j| self.a[j].abs().total_cmp(&self.a[i].abs()).then(i.cmp(&j)));
        informative.extend(TABULAR_INFORMATIVE..TABULAR_FEATURES);
        informative
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws `n` fresh rows for fixed coefficient vectors.
pub fn sample_rows(a: &[f64], d: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<TabularRow> {
    (0..n)
        .map(|_| {
            let z = normal(rng);
            let eta = normal(rng);
            let features = (0..TABULAR_FEATURES).map(|j| a[j] * z / 10.0 + d[j] * eta + normal(rng) / 10.0).collect();
            TabularRow { features, label: usize::from(z > 0.0) }
        })
        .collect()
}

pub fn gen_tabular(p: &TabularParams) -> Result<TabularDataset, DataError> {
    if p.splits.train == 0 || p.splits.validation == 0 || p.splits.test == 0 {
        return Err(DataError::Config("every split needs at least one example".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let a: Vec<f64> =
        (0..TABULAR_FEATURES).map(|j| if j < TABULAR_INFORMATIVE { normal(&mut rng) } else { 0.0 }).collect();
    let d: Vec<f64> = (0..TABULAR_FEATURES).map(|_| normal(&mut rng)).collect();
    let train = sample_rows(&a, &d, p.splits.train, &mut rng);
    let validation = sample_rows(&a, &d, p.splits.validation, &mut rng);
    let test = sample_rows(&a, &d, p.splits.test, &mut rng);
    Ok(TabularDataset { a, d, seed: p.seed, train, validation, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(seed: u64) -> TabularDataset {
        gen_tabular(&TabularParams { splits: SplitSizes { train: 10000, validation: 1, test: 1 }, seed }).unwrap()
    }

    #[test]
    fn exactly_four_informative_coefficients() {
        let ds = big(1);
        assert!(ds.a[..4].iter().all(|&v| v != 0.0));
        assert!(ds.a[4..].iter().all(|&v| v == 0.0));
        assert_eq!(ds.train[0].features.len(), TABULAR_FEATURES);
    }

    #[test]
    fn labels_balanced_and_features_centered() {
        let ds = big(2);
        let n = ds.train.len() as f64;
        let pos = ds.train.iter().filter(|r| r.label == 1).count() as f64 / n;
        assert!((pos - 0.5).abs() < 0.05, "balance {pos}");
        for j in 0..TABULAR_FEATURES {
            let mean = ds.train.iter().map(|r| r.features[j]).sum::<f64>() / n;
            assert!(mean.abs() < 0.05, "feature {j} mean {mean}");
        }
    }

    #[test]
    fn ground_truth_order_ranks_by_magnitude() {
        let ds = big(3);
        let order = ds.ground_truth_order();
        assert_eq!(order.len(), TABULAR_FEATURES);
        for w in order[..4].windows(2) {
            assert!(ds.a[w[0]].abs() >= ds.a[w[1]].abs());
        }
        assert_eq!(&order[4..], &(4..16).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = TabularParams { splits: SplitSizes { train: 10, validation: 2, test: 3 }, seed: 5 };
        assert_eq!(gen_tabular(&p).unwrap(), gen_tabular(&p).unwrap());
    }
}

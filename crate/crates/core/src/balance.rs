//! SMOTE oversampling of the minority class.
//!
//! Each synthetic sample is `x_i + u * (x_nn - x_i)` with `x_i` a minority
//! sample (cycled in order), `x_nn` drawn from its `k` nearest minority
//! neighbors and `u ~ U[0, 1]`. Sample `j` uses its own ChaCha8 stream, so
//! generation is parallel and still deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{feature_dim, Dataset};
use crate::error::{invalid, Error, Result};
use crate::wfdb::EpisodeLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Minority:majority ratio after synthesis.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(invalid("k_neighbors", "must be at least 1"));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(invalid(
                "target_ratio",
                format!("must be in (0, 1], got {}", self.target_ratio),
            ));
        }
        Ok(())
    }
}

/// Minority count after balancing: `ceil(ratio * majority)`.
pub fn target_minority_count(majority: usize, ratio: f64) -> usize {
    // guard against 0.1 * 30 = 3.0000000000000004 style overshoot
    let t = ratio * majority as f64;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * t.max(1.0) {
        r as usize
    } else {
        t.ceil() as usize
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other rows (Euclidean, ties to lower index).
fn nearest_neighbors(x: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..x.len())
                .filter(|&j| j != i)
                .map(|j| (squared_distance(&x[i], &x[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Synthetic minority rows needed to reach `cfg.target_ratio` against
/// `majority_count`. Returns an empty matrix if the minority is already large
/// enough.
pub fn smote_oversample(minority: &[Vec<f64>], majority_count: usize, cfg: &SmoteConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let need = target_minority_count(majority_count, cfg.target_ratio).saturating_sub(minority.len());
    if need == 0 {
        return Ok(Vec::new());
    }
    if minority.len() <= cfg.k_neighbors {
        return Err(Error::InsufficientData(format!(
            "SMOTE with k = {} needs at least {} minority samples, got {}",
            cfg.k_neighbors,
            cfg.k_neighbors + 1,
            minority.len()
        )));
    }
    feature_dim(minority)?;
    let neighbors = nearest_neighbors(minority, cfg.k_neighbors);
    let m = minority.len();
    Ok((0..need)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(j as u64);
            let base = &minority[j % m];
            let nn = &minority[neighbors[j % m][rng.random_range(0..cfg.k_neighbors)]];
            let u: f64 = rng.random_range(0.0..=1.0);
            base.iter().zip(nn).map(|(a, b)| a + u * (b - a)).collect()
        })
        .collect())
}

/// Appends synthetic rows for whichever class is smaller. Returns the number
/// of rows added.
pub fn balance_dataset(data: &mut Dataset, cfg: &SmoteConfig) -> Result<usize> {
    let vf = data.indices_of(EpisodeLabel::Vf);
    let not_vf = data.indices_of(EpisodeLabel::NotVf);
    let (minority, label, majority) = if vf.len() <= not_vf.len() {
        (vf, EpisodeLabel::Vf, not_vf.len())
    } else {
        (not_vf, EpisodeLabel::NotVf, vf.len())
    };
    let rows: Vec<Vec<f64>> = minority.iter().map(|&i| data.features[i].clone()).collect();
    let synthetic = smote_oversample(&rows, majority, cfg)?;
    let added = synthetic.len();
    data.features.extend(synthetic);
    data.labels.extend(std::iter::repeat_n(label, added));
    Ok(added)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(a: &[f64], b: &[f64]) -> f64 {
        squared_distance(a, b).sqrt()
    }

    #[test]
    fn identical_points_stay_put() {
        let minority = vec![vec![1.5, -2.0, 0.25]; 8];
        let out = smote_oversample(&minority, 20, &SmoteConfig::default()).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.iter().all(|s| *s == minority[0]));
    }

    #[test]
    fn two_points_give_segment_samples() {
        let a = vec![0.0, 1.0, -3.0];
        let b = vec![2.0, -1.0, 5.0];
        let cfg = SmoteConfig {
            k_neighbors: 1,
            ..SmoteConfig::default()
        };
        let out = smote_oversample(&[a.clone(), b.clone()], 50, &cfg).unwrap();
        assert_eq!(out.len(), 48);
        for s in &out {
            assert!((norm(s, &a) + norm(s, &b) - norm(&a, &b)).abs() <= 1e-9);
        }
    }

    #[test]
    fn counts_follow_the_ratio() {
        let minority: Vec<Vec<f64>> = (0..300).map(|i| vec![i as f64, (i * i % 17) as f64]).collect();
        let out = smote_oversample(&minority, 500, &SmoteConfig::default()).unwrap();
        assert_eq!(out.len(), 200);
        let half = SmoteConfig {
            target_ratio: 0.5,
            ..SmoteConfig::default()
        };
        assert_eq!(smote_oversample(&minority, 500, &half).unwrap().len(), 0);
        let odd = SmoteConfig {
            target_ratio: 0.7,
            ..SmoteConfig::default()
        };
        // ceil(0.7 * 501) = 351
        assert_eq!(smote_oversample(&minority, 501, &odd).unwrap().len(), 51);
        assert_eq!(target_minority_count(30, 0.1), 3);
    }

    #[test]
    fn too_few_minority_samples() {
        let minority = vec![vec![0.0]; 5];
        let err = smote_oversample(&minority, 10, &SmoteConfig::default()).unwrap_err();
        assert!(err.to_string().contains("at least 6"), "{err}");
        assert!(smote_oversample(&minority, 5, &SmoteConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn seeds_matter_and_repeat() {
        let minority: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
        let a = smote_oversample(&minority, 60, &SmoteConfig::default()).unwrap();
        let b = smote_oversample(&minority, 60, &SmoteConfig::default()).unwrap();
        let c = smote_oversample(
            &minority,
            60,
            &SmoteConfig {
                seed: 1,
                ..SmoteConfig::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn balance_dataset_picks_the_smaller_class() {
        let mut features: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        features.extend((0..4).map(|i| vec![100.0 + i as f64]));
        let mut labels = vec![EpisodeLabel::Vf; 10];
        labels.extend([EpisodeLabel::NotVf; 4]);
        let mut d = Dataset::new(features, labels).unwrap();
        let cfg = SmoteConfig {
            k_neighbors: 2,
            ..SmoteConfig::default()
        };
        assert_eq!(balance_dataset(&mut d, &cfg).unwrap(), 6);
        assert_eq!(d.indices_of(EpisodeLabel::NotVf).len(), 10);
        assert!(d.features[14..].iter().all(|r| r[0] >= 100.0 && r[0] <= 103.0));
    }

    proptest! {
        #[test]
        fn every_sample_on_a_minority_segment(
            pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 7..30),
            majority in 30usize..120,
            seed in 0u64..1000,
        ) {
            let cfg = SmoteConfig { k_neighbors: 3, target_ratio: 1.0, seed };
            let out = smote_oversample(&pts, majority, &cfg).unwrap();
            prop_assert_eq!(out.len() + pts.len(), majority);
            let nn = nearest_neighbors(&pts, 3);
            for (j, s) in out.iter().enumerate() {
                let a = &pts[j % pts.len()];
                let ok = nn[j % pts.len()].iter().any(|&b| {
                    let b = &pts[b];
                    (norm(s, a) + norm(s, b) - norm(a, b)).abs() <= 1e-9
                });
                prop_assert!(ok);
            }
        }
    }
}

//! Synthetic multi-layer benchmark: every class is a tight blob in exactly one
//! layer and buried in a shared, overlapping cloud in all the others.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::FeatureSet;
use crate::transition::LabelSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub points_per_class: usize,
    pub n_layers: usize,
    /// Layer in which each class forms its own cluster.
    pub separated_layer_of_class: Vec<usize>,
    /// Standard deviation of a class around its dedicated center.
    pub cluster_spread: f64,
    /// Standard deviation of the shared cloud.
    pub mixing_spread: f64,
    /// Distance of dedicated centers from the shared center.
    pub center_distance: f64,
    /// Fraction of nodes whose labels are revealed.
    pub labeled_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            points_per_class: 200,
            n_layers: 3,
            separated_layer_of_class: vec![0, 1, 2],
            cluster_spread: 0.15,
            mixing_spread: 0.5,
            center_distance: 1.0,
            labeled_fraction: 0.3,
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// `n_classes` classes on `n_layers` layers, class `c` separated in layer
    /// `c mod n_layers`.
    pub fn round_robin(n_classes: usize, n_layers: usize) -> Self {
        Self {
            n_classes,
            n_layers,
            separated_layer_of_class: (0..n_classes).map(|c| c % n_layers.max(1)).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_layers == 0 {
            return Err(Error::Parameter(
                "need at least one class and one layer".into(),
            ));
        }
        if self.n_classes * self.points_per_class < 2 {
            return Err(Error::Parameter("need at least two points in total".into()));
        }
        if self.separated_layer_of_class.len() != self.n_classes {
            return Err(Error::Parameter(format!(
                "separated-layer map has {} entries for {} classes",
                self.separated_layer_of_class.len(),
                self.n_classes
            )));
        }
        if let Some(l) = self
            .separated_layer_of_class
            .iter()
            .find(|&&l| l >= self.n_layers)
        {
            return Err(Error::Parameter(format!(
                "separated layer {l} out of range"
            )));
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("mixing_spread", self.mixing_spread),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.labeled_fraction) {
            return Err(Error::Parameter(format!(
                "labeled fraction must lie in [0, 1], got {}",
                self.labeled_fraction
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.n_classes * self.points_per_class
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// One two-dimensional feature set per layer.
    pub features: Vec<FeatureSet>,
    /// Full labels; node `c * points_per_class + k` belongs to class `c`.
    pub labels: LabelSet,
    pub labeled_mask: Vec<bool>,
}

impl SyntheticData {
    /// Labels restricted to the revealed nodes.
    pub fn known_labels(&self) -> LabelSet {
        self.labels.restrict(&self.labeled_mask)
    }
}

pub fn class_name(c: usize) -> String {
    format!("class{c}")
}

/// Draws the benchmark. Output is a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let tight = Normal::new(0.0, spec.cluster_spread).expect("validated spread");
    let loose = Normal::new(0.0, spec.mixing_spread).expect("validated spread");
    let m = spec.nodes();

    let mut features = Vec::with_capacity(spec.n_layers);
    for l in 0..spec.n_layers {
        let mut values = Vec::with_capacity(2 * m);
        for c in 0..spec.n_classes {
            let separated = spec.separated_layer_of_class[c] == l;
            let (center, noise) = if separated {
                let angle = std::f64::consts::TAU * c as f64 / spec.n_classes as f64;
                (
                    [
                        spec.center_distance * angle.cos(),
                        spec.center_distance * angle.sin(),
                    ],
                    &tight,
                )
            } else {
                ([0.0, 0.0], &loose)
            };
            for _ in 0..spec.points_per_class {
                values.push(center[0] + noise.sample(&mut rng));
                values.push(center[1] + noise.sample(&mut rng));
            }
        }
        features.push(FeatureSet::new(format!("layer{l}"), 2, values)?);
    }

    let labels = LabelSet::from_pairs(
        m,
        (0..m).map(|i| (i, class_name(i / spec.points_per_class))),
    )?;

    let revealed = (spec.labeled_fraction * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut labeled_mask = vec![false; m];
    for &i in &order[..revealed] {
        labeled_mask[i] = true;
    }

    Ok(SyntheticData {
        features,
        labels,
        labeled_mask,
    })
}

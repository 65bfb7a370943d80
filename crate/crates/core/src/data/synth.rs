//! Synthetic multi-device traffic.
//!
//! Each device type `k` has a benign mean `μ_k` drawn by rejection sampling
//! on `[0.2, 0.8]^d` so that all means are at least `cluster_separation`
//! apart. Benign samples are `N(μ_k, σ²I)`; attack class `a` samples are
//! `N(μ_k + δ_{k,a}, σ²I)` with `‖δ_{k,a}‖ = attack_shift`. Everything is
//! clipped to `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{default_class_names, default_feature_names, Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{rng_for, SimRng, Stream};

const MAX_MEAN_DRAWS: usize = 100_000;

/// How attack displacement directions relate across device types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// A fresh random direction per (device, class).
    #[default]
    Independent,
    /// One direction per class, shared by every device.
    Shared,
    /// One pool of directions; device `k` gives class `a` the direction of
    /// class `(a − 1 + k) mod A`, so a displacement means different attacks
    /// on different devices.
    Conflicting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_clusters: usize,
    pub feature_dim: usize,
    pub attack_classes: usize,
    pub cluster_separation: f64,
    pub intra_noise: f64,
    pub attack_shift: f64,
    #[serde(default)]
    pub shift_mode: ShiftMode,
    pub benign_per_device: usize,
    pub attack_per_class: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 {
            return Err(Error::field("synthetic.num_clusters", "must be at least 1"));
        }
        if self.feature_dim == 0 {
            return Err(Error::field("synthetic.feature_dim", "must be positive"));
        }
        if !(self.cluster_separation > 0.0) {
            return Err(Error::field("synthetic.cluster_separation", "must be positive"));
        }
        if !(self.intra_noise >= 0.0) || !(self.attack_shift >= 0.0) {
            return Err(Error::field(
                "synthetic",
                "intra_noise and attack_shift must be non-negative",
            ));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut SimRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_direction(rng: &mut SimRng, d: usize, norm: f64) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, d);
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn place_means(spec: &SyntheticSpec, rng: &mut SimRng) -> Result<Vec<Vec<f64>>> {
    let infeasible = || Error::InfeasibleSeparation {
        clusters: spec.num_clusters,
        dim: spec.feature_dim,
        separation: spec.cluster_separation,
    };
    let diameter = 0.6 * (spec.feature_dim as f64).sqrt();
    if spec.num_clusters > 1 && spec.cluster_separation > diameter {
        return Err(infeasible());
    }
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.num_clusters);
    let mut draws = 0;
    while means.len() < spec.num_clusters {
        if draws == MAX_MEAN_DRAWS {
            return Err(infeasible());
        }
        draws += 1;
        let cand: Vec<f64> = (0..spec.feature_dim).map(|_| rng.random_range(0.2..0.8)).collect();
        if means.iter().all(|m| distance(m, &cand) >= spec.cluster_separation) {
            means.push(cand);
        }
    }
    Ok(means)
}

/// One dataset per device type, benign samples first then attacks by class.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<Vec<Dataset>> {
    spec.validate()?;
    let d = spec.feature_dim;
    let a = spec.attack_classes;
    let mut layout_rng = rng_for(spec.seed, Stream::Synthetic, &[0]);
    let means = place_means(spec, &mut layout_rng)?;

    let pool: Vec<Vec<f64>> = (0..a)
        .map(|_| random_direction(&mut layout_rng, d, spec.attack_shift))
        .collect();
    let shifts: Vec<Vec<Vec<f64>>> = (0..spec.num_clusters)
        .map(|k| {
            (0..a)
                .map(|c| match spec.shift_mode {
                    ShiftMode::Independent => random_direction(&mut layout_rng, d, spec.attack_shift),
                    ShiftMode::Shared => pool[c].clone(),
                    ShiftMode::Conflicting => pool[(c + k) % a].clone(),
                })
                .collect()
        })
        .collect();

    let class_names = default_class_names(a + 1);
    let feature_names = default_feature_names(d);
    let mut devices = Vec::with_capacity(spec.num_clusters);
    for (k, mu) in means.iter().enumerate() {
        let mut rng = rng_for(spec.seed, Stream::Synthetic, &[k as u64 + 1]);
        let mut samples = Vec::with_capacity(spec.benign_per_device + a * spec.attack_per_class);
        let mut draw = |center: &[f64], label: usize, rng: &mut SimRng| {
            let features = center
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(rng);
                    (c + spec.intra_noise * z).clamp(0.0, 1.0)
                })
                .collect();
            samples.push(Sample { features, label });
        };
        for _ in 0..spec.benign_per_device {
            draw(mu, 0, &mut rng);
        }
        for (c, delta) in shifts[k].iter().enumerate() {
            let center: Vec<f64> = mu.iter().zip(delta).map(|(m, s)| m + s).collect();
            for _ in 0..spec.attack_per_class {
                draw(&center, c + 1, &mut rng);
            }
        }
        devices.push(Dataset::with_names(
            samples,
            feature_names.clone(),
            class_names.clone(),
        )?);
    }
    Ok(devices)
}

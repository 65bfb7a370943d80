//! Client populations derived from device datasets.
//!
//! All clients of one device draw without replacement from that device's
//! pool, so a ground-truth cluster is exactly the set of clients sharing a
//! device. Each client's draw is then split 50:50 (stratified) into train and
//! test, and a benign validation slice is carved out of the train benign
//! samples for threshold calibration.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{stratified_split_indices, Dataset};
use crate::dm2a::BENIGN;
use crate::error::{Error, Result};
use crate::rng::{rng_for, SimRng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub clients_per_device: usize,
    pub samples_per_client: usize,
    /// Benign share of each client's draw (IID mode).
    pub benign_fraction: f64,
    /// Switches to Dirichlet label skew when set.
    #[serde(default)]
    pub dirichlet_beta: Option<f64>,
    #[serde(default)]
    pub unlabeled_fraction: f64,
    #[serde(default = "default_train_ratio")]
    pub train_ratio: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_train_ratio() -> f64 {
    0.5
}

fn default_val_fraction() -> f64 {
    0.2
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            clients_per_device: 5,
            samples_per_client: 1000,
            benign_fraction: 0.5,
            dirichlet_beta: None,
            unlabeled_fraction: 0.0,
            train_ratio: default_train_ratio(),
            val_fraction: default_val_fraction(),
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clients_per_device == 0 {
            return Err(Error::field("partition.clients_per_device", "must be at least 1"));
        }
        if self.samples_per_client == 0 {
            return Err(Error::field("partition.samples_per_client", "must be at least 1"));
        }
        if !(self.benign_fraction > 0.0 && self.benign_fraction < 1.0) {
            return Err(Error::field("partition.benign_fraction", "must be in (0, 1)"));
        }
        if let Some(b) = self.dirichlet_beta {
            if !(b > 0.0) {
                return Err(Error::field("partition.dirichlet_beta", "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return Err(Error::field("partition.unlabeled_fraction", "must be in [0, 1]"));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::field("partition.train_ratio", "must be in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::field("partition.val_fraction", "must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    /// Ground-truth device type. Never read by the training algorithms.
    pub device_id: usize,
    pub train: Dataset,
    pub test: Dataset,
    pub benign_val: Dataset,
    pub labeled: bool,
    pub alpha: f64,
    /// Indices into the device dataset this client drew.
    pub source_indices: Vec<usize>,
}

/// Integer counts summing to `total`, proportional to `weights`, by the
/// largest-remainder method (ties to the lower index).
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if !(sum > 0.0) {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn class_pools(device: &Dataset, rng: &mut SimRng) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); device.class_count];
    for (i, s) in device.samples.iter().enumerate() {
        pools[s.label].push(i);
    }
    for p in &mut pools {
        p.shuffle(rng);
    }
    pools
}

/// Splits a client's draw into train/test/benign-val.
fn finalize_client(
    device: &Dataset,
    device_id: usize,
    client_id: usize,
    mut indices: Vec<usize>,
    spec: &PartitionSpec,
    alpha: f64,
) -> ClientDataset {
    indices.sort_unstable();
    let drawn = device.subset(&indices);
    let mut rng = rng_for(spec.seed, Stream::Split, &[device_id as u64, client_id as u64]);
    let (train_idx, test_idx) =
        stratified_split_indices(&drawn.labels(), drawn.class_count, spec.train_ratio, &mut rng);

    let mut benign_train: Vec<usize> = train_idx
        .iter()
        .copied()
        .filter(|&i| drawn.samples[i].label == BENIGN)
        .collect();
    benign_train.shuffle(&mut rng);
    let b = benign_train.len();
    let mut val_count = (b as f64 * spec.val_fraction).round() as usize;
    if val_count == 0 && b >= 2 && spec.val_fraction > 0.0 {
        val_count = 1;
    }
    let mut val_idx = benign_train[..val_count].to_vec();
    val_idx.sort_unstable();
    let train_idx: Vec<usize> = train_idx
        .into_iter()
        .filter(|i| val_idx.binary_search(i).is_err())
        .collect();

    ClientDataset {
        client_id,
        device_id,
        train: drawn.subset(&train_idx),
        test: drawn.subset(&test_idx),
        benign_val: drawn.subset(&val_idx),
        labeled: true,
        alpha,
        source_indices: indices,
    }
}

/// IID derivation: every client gets `benign_fraction` benign samples and the
/// rest split equally over the attack classes.
pub fn derive_clients(
    device_id: usize,
    device: &Dataset,
    spec: &PartitionSpec,
    first_client_id: usize,
    alpha: f64,
) -> Result<Vec<ClientDataset>> {
    spec.validate()?;
    let n = spec.samples_per_client;
    let m = spec.clients_per_device;
    let attack_classes = device.class_count.saturating_sub(1);
    let mut mix = vec![0usize; device.class_count];
    if attack_classes == 0 {
        mix[BENIGN] = n;
    } else {
        mix[BENIGN] = (n as f64 * spec.benign_fraction).round() as usize;
        let attacks = largest_remainder(&vec![1.0; attack_classes], n - mix[BENIGN]);
        mix[1..].copy_from_slice(&attacks);
    }

    let available = device.class_counts();
    let shortfalls: Vec<String> = mix
        .iter()
        .zip(&available)
        .enumerate()
        .filter(|(_, (&need, &have))| need * m > have)
        .map(|(c, (&need, &have))| format!("class {c}: need {} have {have}", need * m))
        .collect();
    if !shortfalls.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "device {device_id}: {}",
            shortfalls.join(", ")
        )));
    }

    let mut rng = rng_for(spec.seed, Stream::Partition, &[device_id as u64]);
    let pools = class_pools(device, &mut rng);
    let mut cursor = vec![0usize; device.class_count];
    let mut clients = Vec::with_capacity(m);
    for c in 0..m {
        let mut idx = Vec::with_capacity(n);
        for (class, &count) in mix.iter().enumerate() {
            idx.extend_from_slice(&pools[class][cursor[class]..cursor[class] + count]);
            cursor[class] += count;
        }
        clients.push(finalize_client(
            device,
            device_id,
            first_client_id + c,
            idx,
            spec,
            alpha,
        ));
    }
    Ok(clients)
}

fn sample_dirichlet(beta: f64, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let gamma = Gamma::new(beta, 1.0).expect("beta validated positive");
    let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = g.iter().sum();
    if sum > 0.0 {
        g.into_iter().map(|v| v / sum).collect()
    } else {
        // every draw underflowed; all mass on one class
        let mut p = vec![0.0; k];
        p[rng.random_range(0..k)] = 1.0;
        p
    }
}

/// Counts summing to `n` near `n·p`, capped by what each class has left.
fn capped_counts(p: &[f64], n: usize, remaining: &[usize]) -> Option<Vec<usize>> {
    if remaining.iter().sum::<usize>() < n {
        return None;
    }
    let mut counts = largest_remainder(p, n);
    loop {
        let mut deficit = 0;
        for (c, r) in counts.iter_mut().zip(remaining) {
            if *c > *r {
                deficit += *c - *r;
                *c = *r;
            }
        }
        if deficit == 0 {
            return Some(counts);
        }
        let spare: Vec<f64> = counts
            .iter()
            .zip(remaining)
            .zip(p)
            .map(|((&c, &r), &pk)| if c < r { pk } else { 0.0 })
            .collect();
        let weights = if spare.iter().sum::<f64>() > 0.0 {
            spare
        } else {
            counts.iter().zip(remaining).map(|(&c, &r)| (r - c) as f64).collect()
        };
        for (c, extra) in counts.iter_mut().zip(largest_remainder(&weights, deficit)) {
            *c += extra;
        }
    }
}

/// Dirichlet label skew: each client's class proportions are drawn from a
/// symmetric `Dir(β)`.
pub fn dirichlet_partition(
    device_id: usize,
    device: &Dataset,
    spec: &PartitionSpec,
    first_client_id: usize,
    alpha: f64,
) -> Result<Vec<ClientDataset>> {
    spec.validate()?;
    let beta = spec
        .dirichlet_beta
        .ok_or_else(|| Error::field("partition.dirichlet_beta", "required for Dirichlet partitioning"))?;
    let n = spec.samples_per_client;
    let mut rng = rng_for(spec.seed, Stream::Partition, &[device_id as u64]);
    let pools = class_pools(device, &mut rng);
    let mut cursor = vec![0usize; device.class_count];
    let mut clients = Vec::with_capacity(spec.clients_per_device);
    for c in 0..spec.clients_per_device {
        let p = sample_dirichlet(beta, device.class_count, &mut rng);
        let remaining: Vec<usize> = pools.iter().zip(&cursor).map(|(pool, &cur)| pool.len() - cur).collect();
        let counts = capped_counts(&p, n, &remaining).ok_or_else(|| {
            Error::InsufficientSamples(format!(
                "device {device_id}: pool exhausted at client {c} (need {n}, have {})",
                remaining.iter().sum::<usize>()
            ))
        })?;
        let mut idx = Vec::with_capacity(n);
        for (class, &count) in counts.iter().enumerate() {
            idx.extend_from_slice(&pools[class][cursor[class]..cursor[class] + count]);
            cursor[class] += count;
        }
        clients.push(finalize_client(
            device,
            device_id,
            first_client_id + c,
            idx,
            spec,
            alpha,
        ));
    }
    Ok(clients)
}

/// `round(fraction · N)` clients, spread over devices in proportion to their
/// client counts, lose their training labels: train becomes its benign subset
/// and `alpha` drops to 0. Test sets keep their labels.
pub fn mark_unlabeled(mut clients: Vec<ClientDataset>, fraction: f64, seed: u64) -> Vec<ClientDataset> {
    let total = clients.len();
    let count = (fraction.clamp(0.0, 1.0) * total as f64).round() as usize;
    if count == 0 {
        return clients;
    }
    let mut devices: Vec<usize> = clients.iter().map(|c| c.device_id).collect();
    devices.sort_unstable();
    devices.dedup();
    let per_device: Vec<Vec<usize>> = devices
        .iter()
        .map(|&d| (0..total).filter(|&i| clients[i].device_id == d).collect())
        .collect();
    let quotas = largest_remainder(&per_device.iter().map(|v| v.len() as f64).collect::<Vec<_>>(), count);
    for ((&device, members), quota) in devices.iter().zip(&per_device).zip(quotas) {
        let mut members = members.clone();
        let mut rng = rng_for(seed, Stream::Unlabeled, &[device as u64]);
        members.shuffle(&mut rng);
        for &i in members.iter().take(quota) {
            let c = &mut clients[i];
            c.train = c.train.benign();
            c.labeled = false;
            c.alpha = 0.0;
        }
    }
    clients
}

/// Derives every device's clients (IID or Dirichlet by spec), numbering them
/// consecutively, then applies the unlabeled fraction.
pub fn partition_devices(devices: &[Dataset], spec: &PartitionSpec, alpha: f64) -> Result<Vec<ClientDataset>> {
    let mut clients = Vec::new();
    for (d, device) in devices.iter().enumerate() {
        let first = clients.len();
        let derived = match spec.dirichlet_beta {
            Some(_) => dirichlet_partition(d, device, spec, first, alpha)?,
            None => derive_clients(d, device, spec, first, alpha)?,
        };
        clients.extend(derived);
    }
    Ok(mark_unlabeled(clients, spec.unlabeled_fraction, spec.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use std::collections::HashSet;

    fn device(per_class: &[usize]) -> Dataset {
        let mut samples = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                samples.push(Sample {
                    features: vec![c as f64, i as f64],
                    label: c,
                });
            }
        }
        Dataset::new(samples, 2, per_class.len()).unwrap()
    }

    fn spec(m: usize, n: usize) -> PartitionSpec {
        PartitionSpec {
            clients_per_device: m,
            samples_per_client: n,
            seed: 3,
            ..PartitionSpec::default()
        }
    }

    #[test]
    fn five_clients_of_thousand() {
        let dev = device(&[3000, 1000, 1000, 1000]);
        let clients = derive_clients(0, &dev, &spec(5, 1000), 0, 0.8).unwrap();
        assert_eq!(clients.len(), 5);
        let mut seen = HashSet::new();
        for c in &clients {
            assert_eq!(c.source_indices.len(), 1000);
            let benign = c.source_indices.iter().filter(|&&i| dev.samples[i].label == 0).count();
            assert_eq!(benign, 500);
            assert_eq!(c.train.len() + c.test.len() + c.benign_val.len(), 1000);
            assert!(c.benign_val.samples.iter().all(|s| s.label == 0));
            for &i in &c.source_indices {
                assert!(seen.insert(i), "index {i} drawn twice");
            }
        }
    }

    #[test]
    fn single_client_and_shortfall() {
        let dev = device(&[100, 40, 40]);
        let one = derive_clients(0, &dev, &spec(1, 100), 0, 0.8).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].source_indices.len(), 100);
        match derive_clients(0, &dev, &spec(3, 100), 0, 0.8) {
            Err(Error::InsufficientSamples(msg)) => assert!(msg.contains("class 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let dev = device(&[400, 100, 100]);
        for c in derive_clients(2, &dev, &spec(2, 200), 10, 0.8).unwrap() {
            let key = |s: &Sample| (s.features[0] as i64, s.features[1] as i64);
            let tr: HashSet<_> = c.train.samples.iter().map(key).collect();
            let te: HashSet<_> = c.test.samples.iter().map(key).collect();
            let va: HashSet<_> = c.benign_val.samples.iter().map(key).collect();
            assert!(tr.is_disjoint(&te) && tr.is_disjoint(&va) && te.is_disjoint(&va));
            assert_eq!(c.device_id, 2);
        }
    }

    #[test]
    fn largest_remainder_sums_exactly() {
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[0.5, 0.25, 0.25], 3), vec![1, 1, 1]);
        assert_eq!(largest_remainder(&[0.7, 0.2, 0.1], 3), vec![2, 1, 0]);
        assert_eq!(largest_remainder(&[0.0, 0.0], 5), vec![5, 0]);
    }

    #[test]
    fn dirichlet_counts_sum_to_n() {
        let dev = device(&[2000, 2000, 2000, 2000]);
        let mut s = spec(5, 300);
        for beta in [0.1, 0.5, 1.0] {
            s.dirichlet_beta = Some(beta);
            for c in dirichlet_partition(0, &dev, &s, 0, 0.8).unwrap() {
                assert_eq!(c.source_indices.len(), 300);
            }
        }
    }

    #[test]
    fn dirichlet_large_beta_is_near_uniform() {
        let dev = device(&[3000, 3000, 3000, 3000]);
        let mut s = spec(5, 1000);
        s.dirichlet_beta = Some(1e6);
        for c in dirichlet_partition(0, &dev, &s, 0, 0.8).unwrap() {
            let mut counts = [0usize; 4];
            for &i in &c.source_indices {
                counts[dev.samples[i].label] += 1;
            }
            for k in counts {
                assert!((k as f64 / 1000.0 - 0.25).abs() < 0.02, "{counts:?}");
            }
        }
    }

    #[test]
    fn dirichlet_small_beta_concentrates() {
        // Pinned regression: seed 3, beta 0.1.
        let dev = device(&[3000, 3000, 3000, 3000]);
        let mut s = spec(5, 500);
        s.dirichlet_beta = Some(0.1);
        let clients = dirichlet_partition(0, &dev, &s, 0, 0.8).unwrap();
        let max_share = clients
            .iter()
            .map(|c| {
                let mut counts = [0usize; 4];
                for &i in &c.source_indices {
                    counts[dev.samples[i].label] += 1;
                }
                *counts.iter().max().unwrap() as f64 / 500.0
            })
            .fold(0.0, f64::max);
        assert!(max_share > 0.8, "max share {max_share}");
    }

    #[test]
    fn dirichlet_exhaustion_and_redistribution() {
        let dev = device(&[50, 400]);
        let mut s = spec(2, 200);
        s.dirichlet_beta = Some(0.1);
        let clients = dirichlet_partition(0, &dev, &s, 0, 0.8).unwrap();
        let all: HashSet<usize> = clients.iter().flat_map(|c| c.source_indices.clone()).collect();
        assert_eq!(all.len(), 400);
        s.clients_per_device = 3;
        assert!(matches!(
            dirichlet_partition(0, &dev, &s, 0, 0.8),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn capped_counts_respects_capacity() {
        let c = capped_counts(&[0.9, 0.1, 0.0], 100, &[30, 50, 40]).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 100);
        assert_eq!(c[0], 30);
        assert!(c[1] <= 50 && c[2] <= 40);
        assert!(capped_counts(&[1.0], 10, &[9]).is_none());
    }

    fn population(devices: usize, per_device: usize) -> Vec<ClientDataset> {
        let dev = device(&[2000, 1000, 1000]);
        let mut all = Vec::new();
        for d in 0..devices {
            let first = all.len();
            all.extend(derive_clients(d, &dev, &spec(per_device, 40), first, 0.8).unwrap());
        }
        all
    }

    #[test]
    fn unlabeled_marking() {
        let base = population(5, 10);
        assert_eq!(mark_unlabeled(base.clone(), 0.0, 1), base);

        let all = mark_unlabeled(base.clone(), 1.0, 1);
        assert!(all.iter().all(|c| !c.labeled && c.alpha == 0.0));

        let marked = mark_unlabeled(base.clone(), 0.8, 1);
        let unlabeled: Vec<_> = marked.iter().filter(|c| !c.labeled).collect();
        assert_eq!(unlabeled.len(), 40);
        for d in 0..5 {
            assert_eq!(unlabeled.iter().filter(|c| c.device_id == d).count(), 8);
        }
        for c in &unlabeled {
            assert_eq!(c.train.samples.iter().filter(|s| s.label != 0).count(), 0);
            assert!(c.test.samples.iter().any(|s| s.label != 0));
        }
        assert_eq!(marked, mark_unlabeled(base, 0.8, 1));
    }
}

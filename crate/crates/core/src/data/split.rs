use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_for, SimRng, Stream};

/// Seeded stratified split of sample indices into (first, second) where
/// `first` holds `round(n·ratio)` samples and each class contributes the
/// floor or ceiling of its share (largest remainder, ties to lower class).
/// Both halves are returned in ascending index order.
pub fn stratified_split_indices(
    labels: &[usize],
    class_count: usize,
    ratio: f64,
    rng: &mut SimRng,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for idx in &mut by_class {
        idx.shuffle(rng);
    }

    let target_total = (labels.len() as f64 * ratio).round() as usize;
    let exact: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * ratio).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_count).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = target_total.saturating_sub(take.iter().sum());
    for &c in &order {
        if remaining == 0 {
            break;
        }
        if take[c] < by_class[c].len() && exact[c] > exact[c].floor() {
            take[c] += 1;
            remaining -= 1;
        }
    }

    let mut first = Vec::with_capacity(target_total);
    let mut second = Vec::with_capacity(labels.len() - target_total);
    for (c, idx) in by_class.iter().enumerate() {
        first.extend_from_slice(&idx[..take[c]]);
        second.extend_from_slice(&idx[take[c]..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Stratified train/test split. Every class present needs ≥ 2 samples.
pub fn split_train_test(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    if let Some((class, &count)) = ds.class_counts().iter().enumerate().find(|(_, &c)| c == 1) {
        return Err(Error::ClassTooSmall { class, count });
    }
    let mut rng = rng_for(seed, Stream::Split, &[]);
    let (train, test) = stratified_split_indices(&ds.labels(), ds.class_count, ratio, &mut rng);
    Ok((ds.subset(&train), ds.subset(&test)))
}

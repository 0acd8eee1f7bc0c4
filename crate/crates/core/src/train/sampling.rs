use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Class-balanced epoch order over binary `labels`.
///
/// Every sample appears at least once; the minority class is topped up with
/// draws with replacement until both classes have the majority count. The
/// result is shuffled.
pub fn oversample_epoch(labels: &[u8], rng: &mut Rng) -> Result<Vec<usize>> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        match l {
            0 | 1 => by_class[l as usize].push(i),
            _ => return Err(Error::InvalidArgument(format!("sample {i} has label {l}, expected 0 or 1"))),
        }
    }
    if by_class.iter().any(|c| c.is_empty()) {
        return Err(Error::Data(format!(
            "oversampling needs both classes, got {} real and {} fake",
            by_class[0].len(),
            by_class[1].len()
        )));
    }
    let target = by_class[0].len().max(by_class[1].len());
    let mut order = Vec::with_capacity(2 * target);
    for class in &by_class {
        order.extend_from_slice(class);
        for _ in class.len()..target {
            order.push(class[rng.below(class.len())]);
        }
    }
    rng.shuffle(&mut order);
    Ok(order)
}

/// Splits sample indices into `(train, val)` so that no group straddles both sides.
///
/// `round(fraction * groups)` groups go to validation, at least one and never
/// all of them when `fraction > 0` and there are two or more groups.
pub fn split_groups(groups: &[String], fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut distinct: Vec<&String> = groups.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let n = distinct.len();
    let n_val = if fraction <= 0.0 || n < 2 { 0 } else { ((fraction * n as f64).round() as usize).clamp(1, n - 1) };
    rng.shuffle(&mut distinct);
    let val: BTreeSet<&String> = distinct[..n_val].iter().copied().collect();
    (0..groups.len()).partition(|&i| !val.contains(&groups[i]))
}

/// Start of a uniformly drawn `length`-frame window in a `frames`-frame video.
pub fn window_start(frames: usize, length: usize, rng: &mut Rng) -> Result<usize> {
    if frames < length {
        return Err(Error::Data(format!("video has {frames} frames, fewer than the clip length {length}")));
    }
    Ok(rng.below(frames - length + 1))
}

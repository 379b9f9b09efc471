use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DialogueRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Keep each label's proportion equal in both parts.
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            stratify: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(DatasetError::InvalidArgument(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Number of training records; both parts keep at least one record.
fn train_size(total: usize, fraction: f64) -> usize {
    ((fraction * total as f64).round() as usize).clamp(1, total - 1)
}

/// Seeded shuffle, then the first `round(fraction·n)` records train.
pub fn split(
    records: &[DialogueRecord],
    spec: &SplitSpec,
) -> Result<(Vec<DialogueRecord>, Vec<DialogueRecord>), DatasetError> {
    spec.validate()?;
    let n = records.len();
    if n < 2 {
        return Err(DatasetError::InvalidArgument(format!(
            "split needs at least 2 records, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_train = train_size(n, spec.train_fraction);
    let (mut train_ix, valid_ix) = if spec.stratify {
        stratified(records, n_train, spec.train_fraction, &mut rng)
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let valid = order.split_off(n_train);
        (order, valid)
    };
    if spec.stratify {
        train_ix.shuffle(&mut rng);
    }
    let pick = |ix: &[usize]| ix.iter().map(|&i| records[i].clone()).collect();
    Ok((pick(&train_ix), pick(&valid_ix)))
}

/// Per-label quotas by largest remainder so the total stays `n_train`.
fn stratified(
    records: &[DialogueRecord],
    n_train: usize,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut groups: std::collections::BTreeMap<Option<super::Label>, Vec<usize>> =
        Default::default();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.label).or_default().push(i);
    }
    let mut quotas: Vec<(usize, f64)> = groups
        .values()
        .map(|g| {
            let exact = fraction * g.len() as f64;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut remaining = n_train - quotas.iter().map(|q| q.0).sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
    for g in by_remainder.into_iter().cycle() {
        if remaining == 0 {
            break;
        }
        let size = groups.values().nth(g).map_or(0, Vec::len);
        if quotas[g].0 < size {
            quotas[g].0 += 1;
            remaining -= 1;
        }
    }
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for (g, (_, members)) in groups.into_iter().enumerate() {
        let mut members = members;
        members.shuffle(rng);
        let rest = members.split_off(quotas[g].0);
        train.extend(members);
        valid.extend(rest);
    }
    (train, valid)
}

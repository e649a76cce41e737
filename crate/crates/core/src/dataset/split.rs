use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError};

/// Which strata the split preserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratification {
    /// Joint `(a, y)` cells.
    SensitiveAndLabel,
    /// Fallback when some `(a, y)` cell has fewer than two members.
    SensitiveOnly,
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub stratification: Stratification,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Floors plus one extra unit to the largest fractional parts until the
/// quotas sum to `total`. Ties go to the lowest index.
fn largest_remainder(targets: &[f64], total: usize) -> Vec<usize> {
    let mut quotas: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (
            targets[i] - targets[i].floor(),
            targets[j] - targets[j].floor(),
        );
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    quotas
}

/// Test quotas for the four `(a, y)` cells (index `2a + y`) whose group sums
/// and label sums are both the rounded targets.
fn joint_quotas(counts: [usize; 4], fraction: f64, total: usize) -> [usize; 4] {
    let t: Vec<f64> = counts.iter().map(|&c| c as f64 * fraction).collect();
    let rows = largest_remainder(&[t[0] + t[1], t[2] + t[3]], total);
    let cols = largest_remainder(&[t[0] + t[2], t[1] + t[3]], total);
    let mut best: Option<([usize; 4], f64)> = None;
    for q00 in 0..=counts[0].min(rows[0]).min(cols[0]) {
        let (r0, r1, c0) = (rows[0] as i64, rows[1] as i64, cols[0] as i64);
        let q00 = q00 as i64;
        let q = [q00, r0 - q00, c0 - q00, r1 - (c0 - q00)];
        if q.iter().zip(&counts).any(|(&v, &n)| v < 0 || v > n as i64) {
            continue;
        }
        let dev: f64 = q
            .iter()
            .zip(&t)
            .map(|(&v, &tv)| (v as f64 - tv).abs())
            .sum();
        if best.as_ref().is_none_or(|(_, d)| dev < *d) {
            best = Some((
                [q[0] as usize, q[1] as usize, q[2] as usize, q[3] as usize],
                dev,
            ));
        }
    }
    best.map(|(q, _)| q).unwrap_or_else(|| {
        let q = largest_remainder(&t, total);
        [q[0], q[1], q[2], q[3]]
    })
}

/// Seeded split of `d` into train/test, stratified on `(a, y)`.
///
/// Falls back to stratifying on `a` alone when any `(a, y)` cell has fewer
/// than two members. Both partitions keep the source row order.
pub fn stratified_split(
    d: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitPair, DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::InvalidArgument(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    let m = d.len();
    if m < 2 {
        return Err(DatasetError::InvalidArgument(
            "need at least two rows to split".into(),
        ));
    }
    let total = ((m as f64 * test_fraction).round() as usize).clamp(1, m - 1);

    let mut cells: [Vec<usize>; 4] = Default::default();
    for (i, (&a, &y)) in d.sensitive().iter().zip(d.labels()).enumerate() {
        cells[2 * a as usize + y as usize].push(i);
    }
    let counts = [
        cells[0].len(),
        cells[1].len(),
        cells[2].len(),
        cells[3].len(),
    ];

    let (strata, quotas, stratification): (Vec<Vec<usize>>, Vec<usize>, _) =
        if counts.iter().all(|&c| c >= 2) {
            let q = joint_quotas(counts, test_fraction, total);
            (
                cells.to_vec(),
                q.to_vec(),
                Stratification::SensitiveAndLabel,
            )
        } else {
            let [c00, c01, c10, c11] = cells;
            let groups = vec![
                c00.into_iter().chain(c01).collect::<Vec<_>>(),
                c10.into_iter().chain(c11).collect(),
            ];
            let targets: Vec<f64> = groups
                .iter()
                .map(|g| g.len() as f64 * test_fraction)
                .collect();
            let q = largest_remainder(&targets, total);
            (groups, q, Stratification::SensitiveOnly)
        };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_indices = Vec::with_capacity(total);
    let mut train_indices = Vec::with_capacity(m - total);
    for (mut stratum, q) in strata.into_iter().zip(quotas) {
        stratum.sort_unstable();
        stratum.shuffle(&mut rng);
        let q = q.min(stratum.len());
        test_indices.extend_from_slice(&stratum[..q]);
        train_indices.extend_from_slice(&stratum[q..]);
    }
    test_indices.sort_unstable();
    train_indices.sort_unstable();

    Ok(SplitPair {
        train: d.subset(&train_indices),
        test: d.subset(&test_indices),
        seed,
        stratification,
        train_indices,
        test_indices,
    })
}

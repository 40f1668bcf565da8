//! LIBSVM ingestion and the preparation of per-party training sets.
//!
//! Every instance carries a global ID assigned at parse time (file order).
//! IDs survive splitting and partitioning untouched, so any party can refer
//! to another party's instance without seeing its features.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("invalid split fraction {0}, must lie in (0, 1)")]
    Fraction(f64),
    #[error("dimension override {given} is smaller than required {required}")]
    Dimension { given: usize, required: usize },
}

/// A sparse binary-labelled example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub global_id: u64,
    /// `(feature_index, value)` pairs sorted by strictly increasing index.
    pub features: Vec<(u32, f64)>,
    pub label: u8,
}

impl Instance {
    pub fn new(global_id: u64, features: Vec<(u32, f64)>, label: u8) -> Self {
        Self {
            global_id,
            features,
            label,
        }
    }

    /// Value of `feature`, or `None` when the instance does not store it.
    pub fn feature(&self, feature: u32) -> Option<f64> {
        self.features
            .binary_search_by_key(&feature, |&(idx, _)| idx)
            .ok()
            .map(|pos| self.features[pos].1)
    }

    /// L1 distance treating absent features as zero.
    pub fn l1_distance(&self, other: &Instance) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.features, &other.features);
        let mut acc = 0.0;
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&(fa, va)), Some(&(fb, vb))) if fa == fb => {
                    acc += (va - vb).abs();
                    i += 1;
                    j += 1;
                }
                (Some(&(fa, va)), Some(&(fb, _))) if fa < fb => {
                    acc += va.abs();
                    i += 1;
                }
                (Some(_), Some(&(_, vb))) => {
                    acc += vb.abs();
                    j += 1;
                }
                (Some(&(_, va)), None) => {
                    acc += va.abs();
                    i += 1;
                }
                (None, Some(&(_, vb))) => {
                    acc += vb.abs();
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub dimension: usize,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dimension: usize, instances: Vec<Instance>) -> Self {
        Self {
            name: name.into(),
            dimension,
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Number of instances per class as `[class0, class1]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for inst in &self.instances {
            counts[inst.label as usize] += 1;
        }
        counts
    }
}

/// How feature indices in a LIBSVM file are numbered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexBase {
    /// Indices start at 0 and are stored as written.
    Zero,
    /// Indices start at 1 (the LIBSVM convention) and are shifted down by one.
    #[default]
    One,
}

#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    pub index_base: IndexBase,
    /// Forces the dataset dimension; must cover every referenced index.
    pub dimension: Option<usize>,
}

/// Parses LIBSVM text with the default options (1-based indices).
pub fn parse_libsvm(name: &str, text: &str) -> Result<Dataset, DatasetError> {
    parse_libsvm_with(name, text, &ParseOptions::default())
}

pub fn parse_libsvm_with(
    name: &str,
    text: &str,
    options: &ParseOptions,
) -> Result<Dataset, DatasetError> {
    let mut instances = Vec::new();
    let mut max_index: Option<u32> = None;

    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |reason: String| DatasetError::Parse {
            line: line_no,
            reason,
        };

        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label = parse_label(label_tok).map_err(err)?;

        let mut features: Vec<(u32, f64)> = Vec::new();
        for tok in tokens {
            let (idx_str, val_str) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("token `{tok}` is not an index:value pair")))?;
            let idx: u32 = idx_str
                .parse()
                .map_err(|_| err(format!("non-numeric feature index `{idx_str}`")))?;
            let value: f64 = val_str
                .parse()
                .map_err(|_| err(format!("non-numeric feature value `{val_str}`")))?;
            if !value.is_finite() {
                return Err(err(format!("non-finite feature value `{val_str}`")));
            }
            let idx = match options.index_base {
                IndexBase::Zero => idx,
                IndexBase::One => idx
                    .checked_sub(1)
                    .ok_or_else(|| err("feature index 0 in a 1-based file".to_string()))?,
            };
            if let Some(&(prev, _)) = features.last() {
                if idx <= prev {
                    return Err(err(format!(
                        "feature indices not strictly increasing ({tok} after index {})",
                        match options.index_base {
                            IndexBase::Zero => prev,
                            IndexBase::One => prev + 1,
                        }
                    )));
                }
            }
            features.push((idx, value));
        }
        if let Some(&(last, _)) = features.last() {
            max_index = Some(max_index.map_or(last, |m| m.max(last)));
        }
        instances.push(Instance::new(instances.len() as u64, features, label));
    }

    let required = max_index.map_or(0, |m| m as usize + 1);
    let dimension = match options.dimension {
        Some(given) if given < required => return Err(DatasetError::Dimension { given, required }),
        Some(given) => given,
        None => required.max(1),
    };
    Ok(Dataset::new(name, dimension, instances))
}

fn parse_label(tok: &str) -> Result<u8, String> {
    let value: f64 = tok
        .parse()
        .map_err(|_| format!("non-numeric label `{tok}`"))?;
    if value == 1.0 {
        Ok(1)
    } else if value == 0.0 || value == -1.0 {
        Ok(0)
    } else {
        Err(format!("label `{tok}` is not in {{0,1}} or {{-1,+1}}"))
    }
}

pub fn load_libsvm(path: &Path, options: &ParseOptions) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_libsvm_with(&name, &text, options)
}

/// Unstratified random split; the first part holds `ceil(fraction * N)` instances.
///
/// Both parts keep the input's relative order.
pub fn train_test_split(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::Fraction(fraction));
    }
    let n = dataset.len();
    let train_len = ((fraction * n as f64).ceil() as usize).min(n);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &pos in &order[..train_len] {
        in_train[pos] = true;
    }

    let (mut train, mut test) = (Vec::with_capacity(train_len), Vec::new());
    for (inst, keep) in dataset.instances.iter().zip(in_train) {
        if keep {
            train.push(inst.clone());
        } else {
            test.push(inst.clone());
        }
    }
    Ok((
        Dataset::new(format!("{}-train", dataset.name), dataset.dimension, train),
        Dataset::new(format!("{}-test", dataset.name), dataset.dimension, test),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Balanced,
    Unbalanced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    /// Share of class 0 placed in the first half; ignored when balanced.
    pub theta: f64,
    pub num_parties: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn balanced(num_parties: usize, seed: u64) -> Self {
        Self {
            mode: PartitionMode::Balanced,
            theta: 0.5,
            num_parties,
            seed,
        }
    }

    pub fn unbalanced(theta: f64, num_parties: usize, seed: u64) -> Self {
        Self {
            mode: PartitionMode::Unbalanced,
            theta,
            num_parties,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.num_parties == 0 {
            return Err(DatasetError::Partition("num_parties must be >= 1".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(DatasetError::Partition(format!(
                "theta {} outside (0, 1)",
                self.theta
            )));
        }
        Ok(())
    }
}

/// One party's private shard, sorted by global ID.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyDataset {
    pub party_id: usize,
    pub dimension: usize,
    pub instances: Vec<Instance>,
}

impl PartyDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.instances.iter().map(|i| i.global_id).collect()
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Splits `ids` into `parts` near-equal chunks (sizes differ by at most one,
/// larger chunks first).
fn deal_equally(ids: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let base = ids.len() / parts;
    let extra = ids.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        out.push(ids[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Distributes a training set across `spec.num_parties` parties.
///
/// Unbalanced mode builds two halves: the first takes `round(theta * |class 0|)`
/// class-0 and `round((1 - theta) * |class 1|)` class-1 instances, the second
/// the remainder. Parties `0..ceil(M/2)` split the first half equally, the
/// rest split the second half.
pub fn partition(
    dataset: &Dataset,
    spec: &PartitionSpec,
) -> Result<Vec<PartyDataset>, DatasetError> {
    spec.validate()?;
    let m = spec.num_parties;
    if m > dataset.len() {
        return Err(DatasetError::Partition(format!(
            "{m} parties but only {} instances",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let groups: Vec<Vec<usize>> = match spec.mode {
        PartitionMode::Balanced => {
            let mut all: Vec<usize> = (0..dataset.len()).collect();
            all.shuffle(&mut rng);
            deal_equally(&all, m)
        }
        PartitionMode::Unbalanced => {
            let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for (pos, inst) in dataset.instances.iter().enumerate() {
                by_class[inst.label as usize].push(pos);
            }
            if by_class.iter().any(Vec::is_empty) {
                return Err(DatasetError::Partition(
                    "unbalanced partition needs both classes present".into(),
                ));
            }
            for class in &mut by_class {
                class.shuffle(&mut rng);
            }
            let take0 = round_half_up(spec.theta * by_class[0].len() as f64).min(by_class[0].len());
            let take1 =
                round_half_up((1.0 - spec.theta) * by_class[1].len() as f64).min(by_class[1].len());

            let mut first: Vec<usize> = by_class[0][..take0].to_vec();
            first.extend_from_slice(&by_class[1][..take1]);
            let mut second: Vec<usize> = by_class[0][take0..].to_vec();
            second.extend_from_slice(&by_class[1][take1..]);

            if m == 1 {
                first.extend(second);
                vec![first]
            } else {
                first.shuffle(&mut rng);
                second.shuffle(&mut rng);
                let first_parts = m.div_ceil(2);
                let mut groups = deal_equally(&first, first_parts);
                groups.extend(deal_equally(&second, m - first_parts));
                groups
            }
        }
    };

    groups
        .into_iter()
        .enumerate()
        .map(|(party_id, mut positions)| {
            if positions.is_empty() {
                return Err(DatasetError::Partition(format!(
                    "party {party_id} would receive no instances"
                )));
            }
            positions.sort_unstable_by_key(|&p| dataset.instances[p].global_id);
            Ok(PartyDataset {
                party_id,
                dimension: dataset.dimension,
                instances: positions
                    .into_iter()
                    .map(|p| dataset.instances[p].clone())
                    .collect(),
            })
        })
        .collect()
}

/// Checks that party shards are pairwise disjoint by global ID.
pub fn check_disjoint(parties: &[PartyDataset]) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for party in parties {
        for inst in &party.instances {
            if !seen.insert(inst.global_id) {
                return Err(DatasetError::Partition(format!(
                    "global id {} appears in more than one party",
                    inst.global_id
                )));
            }
        }
    }
    Ok(())
}

/// Reassembles the joint training set ordered by global ID.
pub fn union(parties: &[PartyDataset], name: &str) -> Dataset {
    let dimension = parties.iter().map(|p| p.dimension).max().unwrap_or(1);
    let mut instances: Vec<Instance> = parties
        .iter()
        .flat_map(|p| p.instances.iter().cloned())
        .collect();
    instances.sort_unstable_by_key(|i| i.global_id);
    Dataset::new(name, dimension, instances)
}

/// LIBSVM text for `dataset`: labels `+1`/`-1`, indices shifted by one when
/// `index_base` is [`IndexBase::One`].
pub fn write_libsvm(dataset: &Dataset, index_base: IndexBase) -> String {
    let shift = u32::from(index_base == IndexBase::One);
    let mut out = String::new();
    for x in &dataset.instances {
        out.push_str(if x.label == 1 { "+1" } else { "-1" });
        for &(f, v) in &x.features {
            out.push_str(&format!(" {}:{v}", f + shift));
        }
        out.push('\n');
    }
    out
}

/// Dense synthetic data: features uniform in `[0, 1)`, label from a random
/// linear rule through the cube centre, flipped with probability `noise`.
pub fn synthetic_linear(
    name: &str,
    num_instances: usize,
    dimension: usize,
    noise: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..dimension)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let offset: f64 = weights.iter().sum::<f64>() / 2.0;
    let instances = (0..num_instances)
        .map(|i| {
            let features: Vec<(u32, f64)> = (0..dimension as u32)
                .map(|f| (f, rng.random::<f64>()))
                .collect();
            let score: f64 = features.iter().map(|&(f, v)| weights[f as usize] * v).sum();
            let clean = score > offset;
            let label = clean ^ rng.random_bool(noise);
            Instance::new(i as u64, features, u8::from(label))
        })
        .collect();
    Dataset::new(name, dimension, instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_based(text: &str) -> Dataset {
        let opts = ParseOptions {
            index_base: IndexBase::Zero,
            dimension: None,
        };
        parse_libsvm_with("t", text, &opts).unwrap()
    }

    fn synthetic(n0: usize, n1: usize) -> Dataset {
        let instances = (0..n0 + n1)
            .map(|i| Instance::new(i as u64, vec![(0, i as f64)], u8::from(i >= n0)))
            .collect();
        Dataset::new("syn", 1, instances)
    }

    #[test]
    fn libsvm_text_roundtrips() {
        let ds = synthetic_linear("s", 20, 3, 0.1, 1);
        let back = parse_libsvm("s", &write_libsvm(&ds, IndexBase::One)).unwrap();
        assert_eq!(back.instances, ds.instances);
        assert_eq!(back.dimension, 3);
    }

    #[test]
    fn parses_single_line() {
        let ds = zero_based("1 1:0.5 3:2.0\n");
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.instances[0].label, 1);
        assert_eq!(ds.instances[0].features, vec![(1, 0.5), (3, 2.0)]);
        assert_eq!(ds.dimension, 4);
    }

    #[test]
    fn remaps_negative_label() {
        let ds = zero_based("-1 0:1.0\n");
        assert_eq!(ds.instances[0].label, 0);
        assert_eq!(ds.instances[0].features, vec![(0, 1.0)]);
    }

    #[test]
    fn one_based_indices_shift_down() {
        let ds = parse_libsvm("t", "+1 1:0.5 3:2.0\n-1 2:1\n").unwrap();
        assert_eq!(ds.instances[0].features, vec![(0, 0.5), (2, 2.0)]);
        assert_eq!(ds.dimension, 3);
        assert_eq!(ds.instances[1].global_id, 1);
        assert!(parse_libsvm("t", "1 0:1\n").is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("1 1:1\n1 3:1 2:1\n", 2),
            ("1 1:1\n\n1 x:1\n", 3),
            ("abc 1:1\n", 1),
            ("1 1:zz\n", 1),
            ("2 1:1\n", 1),
            ("1 1:1 1:2\n", 1),
            ("1 1\n", 1),
        ];
        for (text, line) in cases {
            match parse_libsvm("t", text) {
                Err(DatasetError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let ds = parse_libsvm("t", "# header\n1 1:1 # trailing\n\n0 2:3\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.instances[1].features, vec![(1, 3.0)]);
    }

    #[test]
    fn dimension_override() {
        let opts = ParseOptions {
            index_base: IndexBase::One,
            dimension: Some(10),
        };
        assert_eq!(
            parse_libsvm_with("t", "1 2:1\n", &opts).unwrap().dimension,
            10
        );
        let small = ParseOptions {
            dimension: Some(1),
            ..opts
        };
        assert!(parse_libsvm_with("t", "1 2:1\n", &small).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = synthetic(50, 50);
        let (train, test) = train_test_split(&ds, 0.75, 9).unwrap();
        assert_eq!((train.len(), test.len()), (75, 25));

        let small = synthetic(2, 2);
        let a = train_test_split(&small, 0.75, 3).unwrap();
        let b = train_test_split(&small, 0.75, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 3);

        let mut ids: Vec<u64> = train
            .instances
            .iter()
            .chain(&test.instances)
            .map(|i| i.global_id)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..100).collect::<Vec<_>>());
        assert!(train_test_split(&ds, 1.0, 0).is_err());
        assert!(train_test_split(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn split_of_a9a_sized_set() {
        // ceil(0.75 * 32561) = 24421.
        let instances = (0..32561)
            .map(|i| Instance::new(i, vec![], (i % 2) as u8))
            .collect();
        let ds = Dataset::new("a9a-like", 123, instances);
        let (train, test) = train_test_split(&ds, 0.75, 1).unwrap();
        assert_eq!((train.len(), test.len()), (24_421, 8_140));
    }

    #[test]
    fn unbalanced_two_party_counts() {
        let ds = synthetic(100, 100);
        let parts = partition(&ds, &PartitionSpec::unbalanced(0.8, 2, 5)).unwrap();
        let a = &parts[0];
        let zeros = a.instances.iter().filter(|i| i.label == 0).count();
        assert_eq!((zeros, a.len() - zeros), (80, 20));
        assert_eq!(parts[1].len(), 100);
    }

    #[test]
    fn unbalanced_half_theta_mixes_evenly() {
        let ds = synthetic(100, 100);
        let parts = partition(&ds, &PartitionSpec::unbalanced(0.5, 2, 5)).unwrap();
        for p in &parts {
            let zeros = p.instances.iter().filter(|i| i.label == 0).count();
            assert_eq!(zeros, 50);
            assert_eq!(p.len(), 100);
        }
    }

    #[test]
    fn balanced_equal_sizes() {
        let ds = synthetic(500, 500);
        let parts = partition(&ds, &PartitionSpec::balanced(10, 1)).unwrap();
        assert!(parts.iter().all(|p| p.len() == 100));
        check_disjoint(&parts).unwrap();

        let ds = synthetic(6, 5);
        let parts = partition(&ds, &PartitionSpec::balanced(3, 1)).unwrap();
        let sizes: Vec<usize> = parts.iter().map(PartyDataset::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    #[test]
    fn partition_errors() {
        let ds = synthetic(2, 0);
        assert!(partition(&ds, &PartitionSpec::balanced(3, 0)).is_err());
        assert!(partition(&ds, &PartitionSpec::unbalanced(0.8, 2, 0)).is_err());
        assert!(partition(&ds, &PartitionSpec::balanced(0, 0)).is_err());
        assert!(partition(&synthetic(5, 5), &PartitionSpec::unbalanced(1.0, 2, 0)).is_err());
    }

    #[test]
    fn parties_sorted_by_global_id() {
        let parts = partition(&synthetic(30, 30), &PartitionSpec::unbalanced(0.7, 4, 2)).unwrap();
        for p in &parts {
            assert!(p
                .instances
                .windows(2)
                .all(|w| w[0].global_id < w[1].global_id));
        }
        assert_eq!(union(&parts, "u").len(), 60);
    }

    #[test]
    fn l1_distance_on_sparse_vectors() {
        let a = Instance::new(0, vec![(0, 1.0), (2, 3.0)], 0);
        let b = Instance::new(1, vec![(1, -2.0), (2, 1.0), (5, 0.5)], 0);
        assert_eq!(a.l1_distance(&b), 1.0 + 2.0 + 2.0 + 0.5);
        assert_eq!(b.l1_distance(&a), a.l1_distance(&b));
        assert_eq!(a.feature(2), Some(3.0));
        assert_eq!(a.feature(1), None);
    }
}

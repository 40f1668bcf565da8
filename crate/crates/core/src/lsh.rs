//! p-stable locality-sensitive hashing and cross-party similarity lookup.
//!
//! Each party hashes its own instances with `L` shared functions
//! `F(v) = floor((a . v + b) / r)`, where `a` has i.i.d. standard normal
//! entries (2-stable) and `b ~ U[0, r]`. The `(ID, hash)` pairs are reduced
//! into `L` global tables and handed to every party, which then picks, for
//! each local instance and each other party, the foreign instance sharing
//! the most hash values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Instance, PartyDataset};
use crate::federation::ledger::{CommLedger, Message, MessageKind, WORD_BYTES};

pub const DEFAULT_WINDOW: f64 = 4.0;
pub const MAX_DEFAULT_FUNCTIONS: usize = 40;
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LshError {
    #[error("window size must be positive and finite, got {0}")]
    Window(f64),
    #[error("at least one hash function is required")]
    NoFunctions,
    #[error("global id {0} is held by more than one party")]
    DuplicateId(u64),
    #[error("party {party} hashed with {got} functions, expected {expected}")]
    FunctionCount {
        party: usize,
        got: usize,
        expected: usize,
    },
    #[error("party {0} has no instances to match against")]
    EmptyParty(usize),
    #[error("instance {0} is missing from the global hash tables")]
    UnknownInstance(u64),
    #[error("party ids must be 0..M without gaps, found {0}")]
    PartyIds(usize),
    #[error("artifact i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported artifact version {0}")]
    Version(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LshConfig {
    /// Bucket width `r`.
    pub window: f64,
    /// Number of hash functions `L`.
    pub num_functions: usize,
    pub seed: u64,
}

impl LshConfig {
    pub fn new(window: f64, num_functions: usize, seed: u64) -> Result<Self, LshError> {
        let config = Self {
            window,
            num_functions,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// `r = 4` and `L = min(40, d - 1)` (at least one function).
    pub fn for_dimension(dimension: usize, seed: u64) -> Self {
        Self {
            window: DEFAULT_WINDOW,
            num_functions: default_num_functions(dimension),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), LshError> {
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(LshError::Window(self.window));
        }
        if self.num_functions == 0 {
            return Err(LshError::NoFunctions);
        }
        Ok(())
    }
}

pub fn default_num_functions(dimension: usize) -> usize {
    MAX_DEFAULT_FUNCTIONS
        .min(dimension.saturating_sub(1))
        .max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashFunction {
    pub projection: Vec<f64>,
    pub offset: f64,
    pub window: f64,
}

impl HashFunction {
    pub fn dimension(&self) -> usize {
        self.projection.len()
    }
}

/// Draws `config.num_functions` functions over `dimension` features.
pub fn sample_functions(config: &LshConfig, dimension: usize) -> Vec<HashFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.num_functions)
        .map(|_| {
            let projection = (0..dimension)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let offset = rng.random_range(0.0..=config.window);
            HashFunction {
                projection,
                offset,
                window: config.window,
            }
        })
        .collect()
}

/// `floor((a . x + b) / r)` over the stored (non-zero) features of `x`.
pub fn hash_value(function: &HashFunction, instance: &Instance) -> i64 {
    let dot: f64 = instance
        .features
        .iter()
        .map(|&(idx, v)| function.projection[idx as usize] * v)
        .sum();
    ((dot + function.offset) / function.window).floor() as i64
}

/// The hash values one party computed for its own instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyHashes {
    pub party_id: usize,
    pub num_functions: usize,
    pub ids: Vec<u64>,
    /// Row-major `ids.len() x num_functions`.
    pub values: Vec<i64>,
}

impl PartyHashes {
    pub fn row(&self, i: usize) -> &[i64] {
        &self.values[i * self.num_functions..(i + 1) * self.num_functions]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn hash_party(functions: &[HashFunction], party: &PartyDataset) -> PartyHashes {
    let values = party
        .instances
        .par_iter()
        .flat_map_iter(|inst| functions.iter().map(move |f| hash_value(f, inst)))
        .collect();
    PartyHashes {
        party_id: party.party_id,
        num_functions: functions.len(),
        ids: party.ids(),
        values,
    }
}

/// The reduced tables every party holds after the AllReduce.
///
/// Instances are addressed internally by their rank in the sorted ID list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalHashTables {
    pub num_functions: usize,
    /// All global IDs, ascending.
    pub ids: Vec<u64>,
    /// Owning party of each entry in `ids`.
    pub owners: Vec<u32>,
    /// Per party, the ranks of its instances in ascending ID order.
    pub members: Vec<Vec<u32>>,
    /// Per function, hash value -> ranks of colliding instances (ascending).
    pub tables: Vec<BTreeMap<i64, Vec<u32>>>,
}

impl GlobalHashTables {
    pub fn num_parties(&self) -> usize {
        self.members.len()
    }

    pub fn num_instances(&self) -> usize {
        self.ids.len()
    }

    pub fn rank_of(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn owner_of(&self, id: u64) -> Option<usize> {
        self.rank_of(id).map(|r| self.owners[r] as usize)
    }

    /// Global IDs held by `party`, ascending.
    pub fn party_ids(&self, party: usize) -> Vec<u64> {
        self.members[party]
            .iter()
            .map(|&r| self.ids[r as usize])
            .collect()
    }

    /// Position of `id` within `party`'s ascending ID list.
    pub fn local_position(&self, party: usize, id: u64) -> Option<usize> {
        let rank = self.rank_of(id)? as u32;
        self.members.get(party)?.binary_search(&rank).ok()
    }

    /// Instances in `table`'s bucket `value`.
    pub fn bucket(&self, table: usize, value: i64) -> &[u32] {
        self.tables[table]
            .get(&value)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Unions every party's `(ID, hash)` pairs into `L` tables and records the
/// delivery of the full table set to each party.
pub fn build_global_tables(
    parties: &[PartyHashes],
    ledger: &mut CommLedger,
) -> Result<GlobalHashTables, LshError> {
    let num_functions = parties.first().map_or(0, |p| p.num_functions);
    if num_functions == 0 {
        return Err(LshError::NoFunctions);
    }
    let mut owned: Vec<(u64, u32, usize, usize)> = Vec::new();
    for (expected, p) in parties.iter().enumerate() {
        if p.party_id != expected {
            return Err(LshError::PartyIds(p.party_id));
        }
        if p.num_functions != num_functions {
            return Err(LshError::FunctionCount {
                party: p.party_id,
                got: p.num_functions,
                expected: num_functions,
            });
        }
        for (row, &id) in p.ids.iter().enumerate() {
            owned.push((id, p.party_id as u32, expected, row));
        }
    }
    owned.sort_unstable_by_key(|e| e.0);
    if let Some(w) = owned.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(LshError::DuplicateId(w[0].0));
    }

    let ids: Vec<u64> = owned.iter().map(|e| e.0).collect();
    let owners: Vec<u32> = owned.iter().map(|e| e.1).collect();
    let mut members = vec![Vec::new(); parties.len()];
    let mut tables = vec![BTreeMap::<i64, Vec<u32>>::new(); num_functions];
    for (rank, &(_, owner, p, row)) in owned.iter().enumerate() {
        members[owner as usize].push(rank as u32);
        for (k, &v) in parties[p].row(row).iter().enumerate() {
            tables[k].entry(v).or_default().push(rank as u32);
        }
    }

    let entries = (ids.len() * num_functions) as u64;
    for to in 0..parties.len() {
        ledger.record(Message {
            round: None,
            from: None,
            to,
            kind: MessageKind::HashTables,
            bytes: entries * 2 * WORD_BYTES,
        });
    }

    Ok(GlobalHashTables {
        num_functions,
        ids,
        owners,
        members,
        tables,
    })
}

/// Per-party `N_m x M` table of most-similar instance IDs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub owner: usize,
    pub num_parties: usize,
    /// Global IDs of the owner's instances, one per row.
    pub local_ids: Vec<u64>,
    /// Row-major `local_ids.len() x num_parties` global IDs.
    pub entries: Vec<u64>,
}

impl SimilarityMatrix {
    pub fn get(&self, row: usize, party: usize) -> u64 {
        self.entries[row * self.num_parties + party]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.entries[row * self.num_parties..(row + 1) * self.num_parties]
    }

    pub fn num_rows(&self) -> usize {
        self.local_ids.len()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Tie-break stream for one `(instance, foreign party)` pair.
///
/// Keyed by the pair rather than by visit order, so parallel and sequential
/// similarity searches make the same choices.
pub fn tie_break_rng(tie_seed: u64, instance_id: u64, party: usize) -> ChaCha8Rng {
    let key = splitmix64(tie_seed ^ splitmix64(instance_id) ^ splitmix64(!(party as u64)));
    ChaCha8Rng::seed_from_u64(key)
}

/// Uniform pick among `tied` (already in ascending ID order).
pub fn pick_tied(tie_seed: u64, instance_id: u64, party: usize, tied: &[u64]) -> u64 {
    let mut rng = tie_break_rng(tie_seed, instance_id, party);
    tied[rng.random_range(0..tied.len())]
}

/// Builds `S^m` for the party whose hashes are `local`.
pub fn compute_similarity(
    local: &PartyHashes,
    tables: &GlobalHashTables,
    tie_seed: u64,
) -> Result<SimilarityMatrix, LshError> {
    let owner = local.party_id;
    let num_parties = tables.num_parties();
    if owner >= num_parties {
        return Err(LshError::PartyIds(owner));
    }
    if local.num_functions != tables.num_functions {
        return Err(LshError::FunctionCount {
            party: owner,
            got: local.num_functions,
            expected: tables.num_functions,
        });
    }
    if let Some(empty) = (0..num_parties).find(|&j| tables.members[j].is_empty()) {
        return Err(LshError::EmptyParty(empty));
    }
    let n = tables.num_instances();

    let rows: Vec<Result<Vec<u64>, LshError>> = (0..local.len())
        .into_par_iter()
        .map_init(
            || (vec![0u32; n], Vec::<u32>::new()),
            |(counts, touched), row| {
                let id = local.ids[row];
                if tables.rank_of(id).is_none() {
                    return Err(LshError::UnknownInstance(id));
                }
                for (k, &v) in local.row(row).iter().enumerate() {
                    for &rank in tables.bucket(k, v) {
                        if tables.owners[rank as usize] as usize == owner {
                            continue;
                        }
                        let c = &mut counts[rank as usize];
                        if *c == 0 {
                            touched.push(rank);
                        }
                        *c += 1;
                    }
                }
                touched.sort_unstable();

                let mut best = vec![0u32; num_parties];
                for &rank in touched.iter() {
                    let j = tables.owners[rank as usize] as usize;
                    best[j] = best[j].max(counts[rank as usize]);
                }
                let mut out = Vec::with_capacity(num_parties);
                for (j, &top) in best.iter().enumerate() {
                    if j == owner {
                        out.push(id);
                        continue;
                    }
                    let tied: Vec<u64> = if top == 0 {
                        tables.party_ids(j)
                    } else {
                        touched
                            .iter()
                            .filter(|&&r| {
                                tables.owners[r as usize] as usize == j && counts[r as usize] == top
                            })
                            .map(|&r| tables.ids[r as usize])
                            .collect()
                    };
                    out.push(pick_tied(tie_seed, id, j, &tied));
                }

                for &rank in touched.iter() {
                    counts[rank as usize] = 0;
                }
                touched.clear();
                Ok(out)
            },
        )
        .collect();

    let mut entries = Vec::with_capacity(local.len() * num_parties);
    for row in rows {
        entries.extend(row?);
    }
    Ok(SimilarityMatrix {
        owner,
        num_parties,
        local_ids: local.ids.clone(),
        entries,
    })
}

/// Everything produced by the preprocessing stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessed {
    pub config: LshConfig,
    pub tie_seed: u64,
    pub dimension: usize,
    pub tables: GlobalHashTables,
    pub similarities: Vec<SimilarityMatrix>,
}

/// Runs hashing, the table AllReduce and the similarity search for all parties.
pub fn preprocess(
    parties: &[PartyDataset],
    config: &LshConfig,
    tie_seed: u64,
    ledger: &mut CommLedger,
) -> Result<Preprocessed, LshError> {
    config.validate()?;
    let dimension = parties.iter().map(|p| p.dimension).max().unwrap_or(1);
    let functions = sample_functions(config, dimension);
    let hashes: Vec<PartyHashes> = parties.iter().map(|p| hash_party(&functions, p)).collect();
    let tables = build_global_tables(&hashes, ledger)?;
    let similarities = hashes
        .iter()
        .map(|h| compute_similarity(h, &tables, tie_seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Preprocessed {
        config: config.clone(),
        tie_seed,
        dimension,
        tables,
        similarities,
    })
}

/// Versioned on-disk form of [`Preprocessed`].
#[derive(Serialize, Deserialize)]
struct Artifact<'a> {
    format_version: u32,
    preprocessing_bytes: u64,
    data: std::borrow::Cow<'a, Preprocessed>,
}

impl Preprocessed {
    pub fn save_json(&self, path: &Path, preprocessing_bytes: u64) -> Result<(), LshError> {
        let artifact = Artifact {
            format_version: ARTIFACT_VERSION,
            preprocessing_bytes,
            data: std::borrow::Cow::Borrowed(self),
        };
        fs::write(path, serde_json::to_vec(&artifact)?)?;
        Ok(())
    }

    /// Returns the stored preprocessing and the traffic it cost.
    pub fn load_json(path: &Path) -> Result<(Self, u64), LshError> {
        let bytes = fs::read(path)?;
        let artifact: Artifact<'_> = serde_json::from_slice(&bytes)?;
        if artifact.format_version != ARTIFACT_VERSION {
            return Err(LshError::Version(artifact.format_version));
        }
        Ok((artifact.data.into_owned(), artifact.preprocessing_bytes))
    }
}

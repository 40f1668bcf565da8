//! Multi-party training protocols simulated in one process.
//!
//! [`train_simfl`] runs the similarity-weighted protocol. In every round the
//! non-training parties fold their fresh local gradients onto their most
//! similar instance of the training party and ship the per-instance sums.
//! The training party then grows one tree on its own instances with the
//! summed (weighted) gradients and broadcasts it.
//! Baselines ([`train_solo`], [`train_allin`], [`train_tfl`]) share the same
//! tree builder.

pub mod ledger;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, Instance, PartyDataset};
use crate::gbdt::{
    apply_tree, compute_gradients, grow_tree, train_gbdt, FeatureIndex, GbdtError, GbdtModel,
    GbdtParams, GradientPair, Loss, Tree,
};
use crate::lsh::{Preprocessed, SimilarityMatrix};
pub use ledger::{closed_form, CommLedger, Message, MessageKind, WORD_BYTES};

#[derive(Debug, Error)]
pub enum FederationError {
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
    #[error(
        "similarity entry of party {from} points at instance {id}, which party {to} does not hold"
    )]
    UnknownInstance { from: usize, to: usize, id: u64 },
    #[error("no gradient aggregate from party {from} for party {to}")]
    MissingAggregate { from: usize, to: usize },
    #[error("duplicate gradient aggregate from party {from}")]
    DuplicateAggregate { from: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("inconsistent inputs: {0}")]
    Inputs(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Tree `t` goes to party `t mod M`.
    #[default]
    RoundRobin,
    /// Party 0 trains the first block of trees, party 1 the next, and so on.
    Contiguous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub kind: ScheduleKind,
    /// Training party of each tree.
    pub assignment: Vec<usize>,
}

impl TrainingSchedule {
    /// When `M` does not divide `T`, the extra trees go to the lowest party IDs.
    pub fn new(kind: ScheduleKind, num_trees: usize, num_parties: usize) -> Self {
        assert!(num_parties > 0, "schedule needs at least one party");
        let assignment = match kind {
            ScheduleKind::RoundRobin => (0..num_trees).map(|t| t % num_parties).collect(),
            ScheduleKind::Contiguous => {
                let (base, extra) = (num_trees / num_parties, num_trees % num_parties);
                (0..num_parties)
                    .flat_map(|m| std::iter::repeat_n(m, base + usize::from(m < extra)))
                    .collect()
            }
        };
        Self { kind, assignment }
    }

    pub fn num_trees(&self) -> usize {
        self.assignment.len()
    }

    pub fn trees_of(&self, party: usize) -> usize {
        self.assignment.iter().filter(|&&m| m == party).count()
    }

    fn check(&self, num_parties: usize) -> Result<(), FederationError> {
        match self.assignment.iter().find(|&&m| m >= num_parties) {
            Some(m) => Err(FederationError::Schedule(format!(
                "tree assigned to party {m} but only {num_parties} parties exist"
            ))),
            None => Ok(()),
        }
    }
}

/// `(G, H)` sums one party computed over its own instances for the training
/// party, indexed by the training party's local instance positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForeignAggregate {
    pub from: usize,
    pub to: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// Number of individual gradient pairs summed into this message.
    pub pairs_folded: usize,
}

impl ForeignAggregate {
    pub fn wire_bytes(&self) -> u64 {
        self.pairs_folded as u64 * 2 * WORD_BYTES
    }
}

/// Folds party `from`'s gradients onto its most similar instances in party `to`.
///
/// `target_ids` are party `to`'s global IDs in ascending order.
pub fn aggregate_foreign_gradients(
    similarity: &SimilarityMatrix,
    grads: &[GradientPair],
    to: usize,
    target_ids: &[u64],
) -> Result<ForeignAggregate, FederationError> {
    let from = similarity.owner;
    if grads.len() != similarity.num_rows() {
        return Err(FederationError::Inputs(format!(
            "party {from} has {} gradients for {} instances",
            grads.len(),
            similarity.num_rows()
        )));
    }
    let mut g = vec![0.0; target_ids.len()];
    let mut h = vec![0.0; target_ids.len()];
    for (q, gp) in grads.iter().enumerate() {
        let s = similarity.get(q, to);
        let pos = target_ids
            .binary_search(&s)
            .map_err(|_| FederationError::UnknownInstance { from, to, id: s })?;
        g[pos] += gp.g;
        h[pos] += gp.h;
    }
    Ok(ForeignAggregate {
        from,
        to,
        g,
        h,
        pairs_folded: grads.len(),
    })
}

/// Per-instance gradient sums the training party builds its tree with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGradients {
    pub owner: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl WeightedGradients {
    pub fn pairs(&self) -> Vec<GradientPair> {
        self.g
            .iter()
            .zip(&self.h)
            .map(|(&g, &h)| GradientPair::new(g, h))
            .collect()
    }
}

/// `G_q = g_q + sum_{i != m} G^i_q`, accumulated in party order.
pub fn compute_weighted_gradients(
    owner: usize,
    num_parties: usize,
    local: &[GradientPair],
    aggregates: &[ForeignAggregate],
) -> Result<WeightedGradients, FederationError> {
    let mut by_party: Vec<Option<&ForeignAggregate>> = vec![None; num_parties];
    for agg in aggregates {
        if agg.to != owner || agg.from >= num_parties || agg.from == owner {
            return Err(FederationError::Inputs(format!(
                "aggregate {} -> {} delivered to party {owner}",
                agg.from, agg.to
            )));
        }
        if agg.g.len() != local.len() || agg.h.len() != local.len() {
            return Err(FederationError::Inputs(format!(
                "aggregate from party {} has {} slots, party {owner} has {} instances",
                agg.from,
                agg.g.len(),
                local.len()
            )));
        }
        if by_party[agg.from].replace(agg).is_some() {
            return Err(FederationError::DuplicateAggregate { from: agg.from });
        }
    }

    let mut g = vec![0.0; local.len()];
    let mut h = vec![0.0; local.len()];
    for (i, slot) in by_party.iter().enumerate() {
        if i == owner {
            for (q, gp) in local.iter().enumerate() {
                g[q] += gp.g;
                h[q] += gp.h;
            }
        } else {
            let agg = slot.ok_or(FederationError::MissingAggregate { from: i, to: owner })?;
            for q in 0..local.len() {
                g[q] += agg.g[q];
                h[q] += agg.h[q];
            }
        }
    }
    Ok(WeightedGradients { owner, g, h })
}

/// Wire size of one tree: 4-byte feature ID plus 4-byte split value for each
/// internal slot of a complete tree of depth `max_depth`.
pub fn tree_wire_bytes(max_depth: usize) -> u64 {
    2 * WORD_BYTES * ((1u64 << max_depth) - 1)
}

/// State visible to observers right after a tree is built.
pub struct RoundContext<'a> {
    pub round: usize,
    pub trainer: usize,
    pub tree: &'a Tree,
    pub parties: &'a [PartyDataset],
    pub similarities: &'a [SimilarityMatrix],
    /// Local gradients of every party for this round.
    pub gradients: &'a [Vec<GradientPair>],
    /// Weighted gradients the tree was trained on (`None` for baselines).
    pub weighted: Option<&'a WeightedGradients>,
    pub params: &'a GbdtParams,
}

pub trait RoundObserver {
    fn on_tree(&mut self, ctx: &RoundContext<'_>);
}

impl RoundObserver for () {
    fn on_tree(&mut self, _: &RoundContext<'_>) {}
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederatedOutcome {
    pub model: GbdtModel,
    pub ledger: CommLedger,
}

struct Party<'a> {
    data: &'a PartyDataset,
    index: FeatureIndex,
    raw_scores: Vec<f64>,
}

fn check_parties(parties: &[PartyDataset]) -> Result<(), FederationError> {
    if parties.is_empty() {
        return Err(FederationError::Inputs("no parties".into()));
    }
    for (m, p) in parties.iter().enumerate() {
        if p.party_id != m {
            return Err(FederationError::Inputs(format!(
                "party at position {m} has id {}",
                p.party_id
            )));
        }
        if p.is_empty() {
            return Err(FederationError::Inputs(format!("party {m} is empty")));
        }
        if !p
            .instances
            .windows(2)
            .all(|w| w[0].global_id < w[1].global_id)
        {
            return Err(FederationError::Inputs(format!(
                "party {m} instances are not sorted by global id"
            )));
        }
    }
    dataset::check_disjoint(parties).map_err(|e| FederationError::Inputs(e.to_string()))
}

fn check_similarities(
    parties: &[PartyDataset],
    similarities: &[SimilarityMatrix],
) -> Result<(), FederationError> {
    if similarities.len() != parties.len() {
        return Err(FederationError::Inputs(format!(
            "{} similarity matrices for {} parties",
            similarities.len(),
            parties.len()
        )));
    }
    for (p, s) in parties.iter().zip(similarities) {
        if s.owner != p.party_id || s.num_parties != parties.len() || s.local_ids != p.ids() {
            return Err(FederationError::Inputs(format!(
                "similarity matrix does not match party {}",
                p.party_id
            )));
        }
    }
    Ok(())
}

/// Shared round loop for the protocols that train one tree per round on a
/// single party and broadcast it.
fn run_rounds(
    parties: &[PartyDataset],
    similarities: Option<&[SimilarityMatrix]>,
    params: &GbdtParams,
    schedule: &TrainingSchedule,
    loss: &dyn Loss,
    observer: &mut dyn RoundObserver,
) -> Result<FederatedOutcome, FederationError> {
    params.validate()?;
    check_parties(parties)?;
    schedule.check(parties.len())?;
    if let Some(sims) = similarities {
        check_similarities(parties, sims)?;
    }
    let num_parties = parties.len();
    let mut state: Vec<Party<'_>> = parties
        .iter()
        .map(|p| Party {
            data: p,
            index: FeatureIndex::build(&p.instances, p.dimension),
            raw_scores: vec![params.base_score; p.len()],
        })
        .collect();
    let party_ids: Vec<Vec<u64>> = parties.iter().map(PartyDataset::ids).collect();

    let mut model = GbdtModel::new(params.base_score, params.learning_rate);
    let mut ledger = CommLedger::new();
    let tree_bytes = tree_wire_bytes(params.max_depth);

    for (round, &trainer) in schedule.assignment.iter().enumerate() {
        ledger.open_round(round);
        let gradients: Vec<Vec<GradientPair>> = state
            .iter()
            .map(|p| compute_gradients(&p.raw_scores, &p.data.instances, loss))
            .collect();

        let weighted = match similarities {
            Some(sims) => {
                let mut aggregates = Vec::with_capacity(num_parties - 1);
                for i in (0..num_parties).filter(|&i| i != trainer) {
                    let agg = aggregate_foreign_gradients(
                        &sims[i],
                        &gradients[i],
                        trainer,
                        &party_ids[trainer],
                    )?;
                    ledger.record(Message {
                        round: Some(round),
                        from: Some(i),
                        to: trainer,
                        kind: MessageKind::ForeignGradients,
                        bytes: agg.wire_bytes(),
                    });
                    aggregates.push(agg);
                }
                ledger.record(Message {
                    round: Some(round),
                    from: Some(trainer),
                    to: trainer,
                    kind: MessageKind::LocalGradients,
                    bytes: gradients[trainer].len() as u64 * 2 * WORD_BYTES,
                });
                Some(compute_weighted_gradients(
                    trainer,
                    num_parties,
                    &gradients[trainer],
                    &aggregates,
                )?)
            }
            None => None,
        };

        let tree = match &weighted {
            Some(w) => grow_tree(&state[trainer].index, &w.pairs(), params),
            None => grow_tree(&state[trainer].index, &gradients[trainer], params),
        };

        for to in (0..num_parties).filter(|&j| j != trainer) {
            ledger.record(Message {
                round: Some(round),
                from: Some(trainer),
                to,
                kind: MessageKind::TreeBroadcast,
                bytes: tree_bytes,
            });
        }
        for p in state.iter_mut() {
            apply_tree(
                &mut p.raw_scores,
                &p.data.instances,
                &tree,
                params.learning_rate,
            );
        }

        observer.on_tree(&RoundContext {
            round,
            trainer,
            tree: &tree,
            parties,
            similarities: similarities.unwrap_or(&[]),
            gradients: &gradients,
            weighted: weighted.as_ref(),
            params,
        });
        model.trees.push(tree);
    }
    Ok(FederatedOutcome { model, ledger })
}

/// Similarity-weighted federated boosting.
///
/// The returned ledger covers training traffic only; preprocessing traffic
/// is recorded when the hash tables are built.
pub fn train_simfl(
    parties: &[PartyDataset],
    preprocessed: &Preprocessed,
    params: &GbdtParams,
    schedule: &TrainingSchedule,
    loss: &dyn Loss,
    observer: &mut dyn RoundObserver,
) -> Result<FederatedOutcome, FederationError> {
    run_rounds(
        parties,
        Some(&preprocessed.similarities),
        params,
        schedule,
        loss,
        observer,
    )
}

/// Sequential cross-party boosting where each tree sees only its party's
/// plain local gradients; trees are still broadcast and shared.
pub fn train_tfl(
    parties: &[PartyDataset],
    params: &GbdtParams,
    schedule: &TrainingSchedule,
    loss: &dyn Loss,
) -> Result<FederatedOutcome, FederationError> {
    run_rounds(parties, None, params, schedule, loss, &mut ())
}

/// Vanilla boosting on one party's data alone.
pub fn train_solo(
    party: &PartyDataset,
    params: &GbdtParams,
    loss: &dyn Loss,
) -> Result<GbdtModel, FederationError> {
    Ok(train_gbdt(&party.instances, party.dimension, params, loss)?)
}

/// Vanilla boosting on the joint data of all parties, ordered by global ID.
pub fn train_allin(
    parties: &[PartyDataset],
    params: &GbdtParams,
    loss: &dyn Loss,
) -> Result<GbdtModel, FederationError> {
    check_parties(parties)?;
    let joint = dataset::union(parties, "all-in");
    Ok(train_gbdt(&joint.instances, joint.dimension, params, loss)?)
}

/// Raw scores of `instances` under `model`.
pub fn raw_scores(model: &GbdtModel, instances: &[Instance]) -> Vec<f64> {
    instances.iter().map(|x| model.predict(x)).collect()
}

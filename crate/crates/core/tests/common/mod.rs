//! Fixtures and brute-force oracles shared by the property suites and the
//! acceptance run. Every check returns `Err(description)` on the first
//! mismatch so callers can either assert or report.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simfl::analysis::{measure_epsilon, privacy_check, PrivacyVerdict};
use simfl::dataset::{partition, union, Dataset, Instance, PartitionSpec, PartyDataset};
use simfl::federation::{
    aggregate_foreign_gradients, closed_form, compute_weighted_gradients, train_allin, train_simfl,
    train_solo, train_tfl, CommLedger, MessageKind, RoundContext, RoundObserver, ScheduleKind,
    TrainingSchedule,
};
use simfl::gbdt::{
    find_best_split, leaf_weight, logistic_gradients, split_gain, train_tree, tree_objective,
    Direction, GbdtParams, GradientPair, LogisticLoss, Node, Tree,
};
use simfl::lsh::{hash_value, pick_tied, preprocess, sample_functions, LshConfig, Preprocessed};

pub type Check = Result<(), String>;

const GRID: [f64; 5] = [-1.0, 0.0, 0.5, 1.0, 2.0];

/// Random sparse instances. With `grid` the values come from a five-point
/// grid so ties and repeated hash values are common.
pub fn random_instances(rng: &mut ChaCha8Rng, n: usize, d: usize, grid: bool) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let mut features = Vec::new();
            for f in 0..d as u32 {
                if !rng.random_bool(0.8) {
                    continue;
                }
                let v = if grid {
                    GRID[rng.random_range(0..GRID.len())]
                } else {
                    rng.random_range(-3.0..3.0)
                };
                features.push((f, v));
            }
            Instance::new(i as u64, features, u8::from(rng.random_bool(0.5)))
        })
        .collect()
}

pub fn random_dataset(seed: u64, n: usize, d: usize, grid: bool) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = random_instances(&mut rng, n, d, grid);
    // Both classes must be present for the partitioner.
    instances[0].label = 0;
    instances[n - 1].label = 1;
    Dataset::new("fixture", d, instances)
}

pub fn random_parties(seed: u64, n: usize, m: usize, d: usize, grid: bool) -> Vec<PartyDataset> {
    let data = random_dataset(seed, n, d, grid);
    partition(&data, &PartitionSpec::unbalanced(0.7, m, seed)).expect("fixture partition")
}

pub fn random_grads(rng: &mut ChaCha8Rng, n: usize) -> Vec<GradientPair> {
    (0..n)
        .map(|_| GradientPair::new(rng.random_range(-1.0..1.0), rng.random_range(0.01..1.0)))
        .collect()
}

fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(1.0)
}

/// Similarity matrices against a direct recount of hash collisions.
pub fn check_similarity_oracle(
    parties: &[PartyDataset],
    config: &LshConfig,
    tie_seed: u64,
) -> Check {
    let pre =
        preprocess(parties, config, tie_seed, &mut CommLedger::new()).map_err(|e| e.to_string())?;
    let functions = sample_functions(config, pre.dimension);
    let hashes: Vec<Vec<Vec<i64>>> = parties
        .iter()
        .map(|p| {
            p.instances
                .iter()
                .map(|x| functions.iter().map(|f| hash_value(f, x)).collect())
                .collect()
        })
        .collect();
    for (m, party) in parties.iter().enumerate() {
        let s = &pre.similarities[m];
        for (row, x) in party.instances.iter().enumerate() {
            for (j, other) in parties.iter().enumerate() {
                let expected = if j == m {
                    x.global_id
                } else {
                    let counts: Vec<usize> = hashes[j]
                        .iter()
                        .map(|h| {
                            h.iter()
                                .zip(&hashes[m][row])
                                .filter(|(a, b)| a == b)
                                .count()
                        })
                        .collect();
                    let top = *counts.iter().max().unwrap();
                    let mut tied: Vec<u64> = other
                        .instances
                        .iter()
                        .zip(&counts)
                        .filter(|(_, &c)| c == top)
                        .map(|(y, _)| y.global_id)
                        .collect();
                    tied.sort_unstable();
                    pick_tied(tie_seed, x.global_id, j, &tied)
                };
                let got = s.get(row, j);
                if got != expected {
                    return Err(format!(
                        "party {m} instance {} vs party {j}: got {got}, oracle {expected}",
                        x.global_id
                    ));
                }
            }
        }
    }
    Ok(())
}

fn route(x: &Instance, feature: u32, threshold: f64, default: Direction) -> Direction {
    match x.feature(feature) {
        Some(v) if v < threshold => Direction::Left,
        Some(_) => Direction::Right,
        None => default,
    }
}

/// Best gain over every feature, every cut between consecutive distinct
/// values, the cut below the smallest value and both default directions.
pub fn brute_force_best_gain(
    instances: &[Instance],
    grads: &[GradientPair],
    dimension: usize,
    params: &GbdtParams,
) -> Option<f64> {
    if instances.len() < 2 {
        return None;
    }
    let mut best: Option<f64> = None;
    for f in 0..dimension as u32 {
        let mut values: Vec<f64> = instances.iter().filter_map(|x| x.feature(f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut thresholds: Vec<f64> = values.first().copied().into_iter().collect();
        thresholds.extend(values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        for &t in &thresholds {
            for dir in [Direction::Left, Direction::Right] {
                let (mut gl, mut hl, mut nl, mut gr, mut hr, mut nr) = (0.0, 0.0, 0, 0.0, 0.0, 0);
                for (x, gp) in instances.iter().zip(grads) {
                    if route(x, f, t, dir) == Direction::Left {
                        gl += gp.g;
                        hl += gp.h;
                        nl += 1;
                    } else {
                        gr += gp.g;
                        hr += gp.h;
                        nr += 1;
                    }
                }
                if nl < params.min_child_instances.max(1) || nr < params.min_child_instances.max(1)
                {
                    continue;
                }
                if let Ok(g) = split_gain(gl, hl, gr, hr, params.lambda, params.gamma) {
                    best = Some(best.map_or(g, |b: f64| b.max(g)));
                }
            }
        }
    }
    best.filter(|&g| g > 0.0)
}

pub fn check_split_oracle(
    instances: &[Instance],
    grads: &[GradientPair],
    dimension: usize,
    params: &GbdtParams,
) -> Check {
    let oracle = brute_force_best_gain(instances, grads, dimension, params);
    let got = find_best_split(instances, grads, dimension, params);
    match (got, oracle) {
        (None, None) => Ok(()),
        (Some(c), Some(g)) => {
            if !close(c.gain, g, g.abs(), 1e-9) {
                return Err(format!("gain {} vs oracle {g}", c.gain));
            }
            // The reported split must realize its reported gain.
            let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
            for (x, gp) in instances.iter().zip(grads) {
                if route(x, c.feature, c.threshold, c.default_child) == Direction::Left {
                    gl += gp.g;
                    hl += gp.h;
                } else {
                    gr += gp.g;
                    hr += gp.h;
                }
            }
            let realized = split_gain(gl, hl, gr, hr, params.lambda, params.gamma)
                .map_err(|e| e.to_string())?;
            if !close(realized, c.gain, c.gain.abs(), 1e-9) {
                return Err(format!("split realizes {realized}, reports {}", c.gain));
            }
            Ok(())
        }
        (got, oracle) => Err(format!("split {got:?} vs oracle gain {oracle:?}")),
    }
}

/// Sum of weighted gradients equals the sum of all gradients, for every
/// possible trainer.
pub fn check_gradient_conservation(
    parties: &[PartyDataset],
    pre: &Preprocessed,
    seed: u64,
) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grads: Vec<Vec<GradientPair>> = parties
        .iter()
        .map(|p| random_grads(&mut rng, p.len()))
        .collect();
    let total_g: f64 = grads.iter().flatten().map(|p| p.g).sum();
    let total_h: f64 = grads.iter().flatten().map(|p| p.h).sum();
    let scale_g: f64 = grads.iter().flatten().map(|p| p.g.abs()).sum();
    let scale_h: f64 = grads.iter().flatten().map(|p| p.h.abs()).sum();
    for m in 0..parties.len() {
        let ids = parties[m].ids();
        let aggregates = (0..parties.len())
            .filter(|&i| i != m)
            .map(|i| aggregate_foreign_gradients(&pre.similarities[i], &grads[i], m, &ids))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let w = compute_weighted_gradients(m, parties.len(), &grads[m], &aggregates)
            .map_err(|e| e.to_string())?;
        let g: f64 = w.g.iter().sum();
        let h: f64 = w.h.iter().sum();
        if (g - total_g).abs() > 1e-9 * scale_g.max(f64::MIN_POSITIVE) {
            return Err(format!("trainer {m}: sum G {g} vs sum g {total_g}"));
        }
        if (h - total_h).abs() > 1e-9 * scale_h.max(f64::MIN_POSITIVE) {
            return Err(format!("trainer {m}: sum H {h} vs sum h {total_h}"));
        }
    }
    Ok(())
}

/// With one party every method trains on the same instances in the same
/// order, so all four models are bit-identical.
pub fn check_single_party_degeneracy(data: &Dataset, params: &GbdtParams) -> Check {
    let parties = partition(data, &PartitionSpec::balanced(1, 0)).map_err(|e| e.to_string())?;
    let lsh = LshConfig::new(4.0, 1, 0).map_err(|e| e.to_string())?;
    let pre = preprocess(&parties, &lsh, 0, &mut CommLedger::new()).map_err(|e| e.to_string())?;
    let schedule = TrainingSchedule::new(ScheduleKind::RoundRobin, params.num_trees, 1);
    let simfl = train_simfl(&parties, &pre, params, &schedule, &LogisticLoss, &mut ())
        .map_err(|e| e.to_string())?
        .model;
    let tfl = train_tfl(&parties, params, &schedule, &LogisticLoss)
        .map_err(|e| e.to_string())?
        .model;
    let solo = train_solo(&parties[0], params, &LogisticLoss).map_err(|e| e.to_string())?;
    let allin = train_allin(&parties, params, &LogisticLoss).map_err(|e| e.to_string())?;
    let json = |m: &simfl::gbdt::GbdtModel| m.to_json().unwrap();
    if simfl != allin || json(&simfl) != json(&allin) {
        return Err("SimFL differs from ALL-IN".into());
    }
    if simfl != solo || simfl != tfl {
        return Err("SimFL differs from SOLO or TFL".into());
    }
    Ok(())
}

pub fn check_partition_completeness(data: &Dataset, spec: &PartitionSpec) -> Check {
    let parties = partition(data, spec).map_err(|e| e.to_string())?;
    if parties.len() != spec.num_parties {
        return Err(format!(
            "{} parties, expected {}",
            parties.len(),
            spec.num_parties
        ));
    }
    let joined = union(&parties, "u");
    let mut expected = data.instances.clone();
    expected.sort_by_key(|x| x.global_id);
    if joined.instances != expected {
        return Err("union of parties differs from the dataset".into());
    }
    if parties.iter().any(|p| p.is_empty()) {
        return Err("empty party".into());
    }
    if spec.mode == simfl::dataset::PartitionMode::Balanced {
        let (lo, hi) = parties
            .iter()
            .map(|p| p.len())
            .fold((usize::MAX, 0), |(lo, hi), n| (lo.min(n), hi.max(n)));
        if hi - lo > 1 {
            return Err(format!("balanced sizes range {lo}..{hi}"));
        }
    } else if spec.num_parties == 2 {
        let [neg, pos] = data.class_counts();
        let a_neg = parties[0].instances.iter().filter(|x| x.label == 0).count();
        let a_pos = parties[0].len() - a_neg;
        let want_neg = (spec.theta * neg as f64).round() as usize;
        let want_pos = ((1.0 - spec.theta) * pos as f64).round() as usize;
        if a_neg != want_neg || a_pos != want_pos {
            return Err(format!(
                "party A holds {a_neg}/{a_pos}, expected {want_neg}/{want_pos}"
            ));
        }
    }
    Ok(())
}

/// `P[h(u) = h(v)]` for a p-stable hash with Gaussian projections, where
/// `c = |u - v|_2`: the integral of `(1/c) f(t/c) (1 - t/r)` over `[0, r]`
/// with `f` the density of `|N(0, 1)|`.
pub fn collision_probability(c: f64, r: f64) -> f64 {
    let steps = 2000;
    let h = r / steps as f64;
    let density = |t: f64| {
        let z = t / c;
        (2.0 / (2.0 * std::f64::consts::PI).sqrt()) * (-z * z / 2.0).exp() / c * (1.0 - t / r)
    };
    let mut sum = density(0.0) + density(r);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * density(i as f64 * h);
    }
    sum * h / 3.0
}

/// Empirical collision rates over `num_functions` hash functions for pairs at
/// increasing distance: within `tol` of the analytic value, and
/// non-increasing up to `tol`.
pub fn check_collision_monotonicity(num_functions: usize, seed: u64, tol: f64) -> Check {
    let d = 4;
    let config = LshConfig::new(4.0, num_functions, seed).map_err(|e| e.to_string())?;
    let functions = sample_functions(&config, d);
    let base = Instance::new(0, vec![(0, 0.3), (1, -0.2), (2, 1.1), (3, 0.0)], 0);
    let mut prev = 1.0f64;
    for c in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        // Displace along a fixed unit direction by distance c.
        let dir = [0.5, 0.5, 0.5, 0.5];
        let moved = Instance::new(
            1,
            (0..d as u32)
                .map(|f| (f, base.feature(f).unwrap_or(0.0) + c * dir[f as usize]))
                .collect(),
            0,
        );
        let hits = functions
            .iter()
            .filter(|f| hash_value(f, &base) == hash_value(f, &moved))
            .count();
        let rate = hits as f64 / num_functions as f64;
        let expected = collision_probability(c, 4.0);
        if (rate - expected).abs() > tol {
            return Err(format!(
                "distance {c}: rate {rate:.4}, analytic {expected:.4}"
            ));
        }
        if rate > prev + tol {
            return Err(format!(
                "distance {c}: rate {rate:.4} above previous {prev:.4}"
            ));
        }
        prev = rate;
    }
    Ok(())
}

/// Observer that replays each SimFL round through independent checks.
#[derive(Default)]
pub struct RoundAudit {
    pub max_route_disagreement: f64,
    pub failures: Vec<String>,
    pub rounds: usize,
}

impl RoundObserver for RoundAudit {
    fn on_tree(&mut self, ctx: &RoundContext<'_>) {
        self.rounds += 1;
        let Some(w) = ctx.weighted else {
            return;
        };
        let m = measure_epsilon(
            ctx.tree,
            ctx.trainer,
            ctx.parties,
            ctx.similarities,
            ctx.gradients,
            ctx.params.lambda,
            ctx.params.gamma,
        );
        self.max_route_disagreement = self.max_route_disagreement.max(m.route_disagreement());
        if m.route_disagreement() > 1e-9 {
            self.failures.push(format!(
                "round {}: routes disagree by {:e}",
                ctx.round,
                m.route_disagreement()
            ));
        }
        if ctx.tree.depth() > ctx.params.max_depth {
            self.failures
                .push(format!("round {}: depth {}", ctx.round, ctx.tree.depth()));
        }
        // Every leaf weight must come from the trainer's own instances and
        // their weighted gradients.
        let local = &ctx.parties[ctx.trainer].instances;
        let mut sums = vec![(0.0, 0.0); ctx.tree.nodes.len()];
        for (q, x) in local.iter().enumerate() {
            let leaf = ctx.tree.leaf_index(x);
            sums[leaf].0 += w.g[q];
            sums[leaf].1 += w.h[q];
        }
        for (i, node) in ctx.tree.nodes.iter().enumerate() {
            if let Node::Leaf { weight } = node {
                let expected = leaf_weight(sums[i].0, sums[i].1, ctx.params.lambda);
                if !close(*weight, expected, expected.abs(), 1e-9) {
                    self.failures.push(format!(
                        "round {}: leaf {i} weight {weight} vs {expected} from trainer data",
                        ctx.round
                    ));
                }
            }
        }
    }
}

pub fn run_audited_simfl(
    parties: &[PartyDataset],
    pre: &Preprocessed,
    params: &GbdtParams,
) -> Result<RoundAudit, String> {
    let mut audit = RoundAudit::default();
    let schedule = TrainingSchedule::new(ScheduleKind::RoundRobin, params.num_trees, parties.len());
    train_simfl(parties, pre, params, &schedule, &LogisticLoss, &mut audit)
        .map_err(|e| e.to_string())?;
    if audit.rounds != params.num_trees {
        return Err(format!(
            "{} rounds observed, {} trees",
            audit.rounds, params.num_trees
        ));
    }
    Ok(audit)
}

pub fn check_round_audit(
    parties: &[PartyDataset],
    pre: &Preprocessed,
    params: &GbdtParams,
) -> Check {
    let audit = run_audited_simfl(parties, pre, params)?;
    match audit.failures.first() {
        Some(f) => Err(f.clone()),
        None => Ok(()),
    }
}

/// Measured bytes equal the closed forms for SimFL, and TFL carries no
/// gradient traffic.
pub fn check_ledger(parties: &[PartyDataset], num_functions: usize, params: &GbdtParams) -> Check {
    let m = parties.len() as u64;
    let n: u64 = parties.iter().map(|p| p.len() as u64).sum();
    let depth = params.max_depth as u32;
    let mut ledger = CommLedger::new();
    let lsh = LshConfig::new(4.0, num_functions, 1).map_err(|e| e.to_string())?;
    let pre = preprocess(parties, &lsh, 1, &mut ledger).map_err(|e| e.to_string())?;
    let want = closed_form::preprocessing_bytes(m, n, num_functions as u64);
    if ledger.preprocessing_bytes != want {
        return Err(format!(
            "preprocessing {} vs 8MNL = {want}",
            ledger.preprocessing_bytes
        ));
    }
    let schedule = TrainingSchedule::new(ScheduleKind::RoundRobin, params.num_trees, parties.len());
    let out = train_simfl(parties, &pre, params, &schedule, &LogisticLoss, &mut ())
        .map_err(|e| e.to_string())?;
    let per_tree = closed_form::per_tree_bytes(n, depth, m);
    let measured = out.ledger.per_tree_bytes();
    if measured.len() != params.num_trees || measured.iter().any(|&b| b != per_tree) {
        return Err(format!("per-tree bytes {measured:?} vs {per_tree}"));
    }
    if out.ledger.training_bytes()
        != closed_form::training_bytes(params.num_trees as u64, n, depth, m)
    {
        return Err("training total differs from closed form".into());
    }
    let tfl = train_tfl(parties, params, &schedule, &LogisticLoss).map_err(|e| e.to_string())?;
    if tfl
        .ledger
        .messages
        .iter()
        .any(|msg| msg.kind != MessageKind::TreeBroadcast)
    {
        return Err("TFL ledger holds gradient messages".into());
    }
    let tfl_tree = closed_form::tree_broadcast_bytes(depth, m);
    if tfl.ledger.per_tree_bytes().iter().any(|&b| b != tfl_tree) {
        return Err(format!(
            "TFL per-tree bytes {:?} vs {tfl_tree}",
            tfl.ledger.per_tree_bytes()
        ));
    }
    Ok(())
}

pub fn check_privacy_gate(num_functions: usize, dimension: usize) -> Check {
    let verdict = privacy_check(num_functions, dimension);
    let want = if num_functions < dimension {
        PrivacyVerdict::Admissible
    } else {
        PrivacyVerdict::Inadmissible
    };
    if verdict == want {
        Ok(())
    } else {
        Err(format!("L={num_functions} d={dimension}: {verdict:?}"))
    }
}

/// Greedy tree objective against exhaustively enumerated depth-1 trees: the
/// greedy depth-1 tree matches the best stump, and deeper greedy trees do no
/// worse.
pub fn check_greedy_objective(
    instances: &[Instance],
    dimension: usize,
    params: &GbdtParams,
) -> Check {
    let grads: Vec<GradientPair> = instances
        .iter()
        .map(|x| logistic_gradients(0.0, x.label))
        .collect();
    let (lambda, gamma) = (params.lambda, params.gamma);
    let objective = |t: &Tree| tree_objective(t, instances, &grads, lambda, gamma);

    let (g, h) = grads
        .iter()
        .fold((0.0, 0.0), |(g, h), p| (g + p.g, h + p.h));
    let mut best = objective(&Tree::single_leaf(leaf_weight(g, h, lambda)));
    for f in 0..dimension as u32 {
        let mut values: Vec<f64> = instances.iter().filter_map(|x| x.feature(f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut thresholds: Vec<f64> = values.first().copied().into_iter().collect();
        thresholds.extend(values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        for &t in &thresholds {
            for dir in [Direction::Left, Direction::Right] {
                let (mut l, mut r) = ((0.0, 0.0), (0.0, 0.0));
                for (x, gp) in instances.iter().zip(&grads) {
                    let side = if route(x, f, t, dir) == Direction::Left {
                        &mut l
                    } else {
                        &mut r
                    };
                    side.0 += gp.g;
                    side.1 += gp.h;
                }
                let stump = Tree {
                    nodes: vec![
                        Node::Split {
                            feature: f,
                            threshold: t,
                            default_child: dir,
                            left: 1,
                            right: 2,
                        },
                        Node::Leaf {
                            weight: leaf_weight(l.0, l.1, lambda),
                        },
                        Node::Leaf {
                            weight: leaf_weight(r.0, r.1, lambda),
                        },
                    ],
                };
                best = best.min(objective(&stump));
            }
        }
    }

    let one = train_tree(
        instances,
        &grads,
        dimension,
        &GbdtParams {
            max_depth: 1,
            ..params.clone()
        },
    );
    let one_obj = objective(&one);
    if !close(one_obj, best, best.abs(), 1e-9) {
        return Err(format!(
            "greedy stump objective {one_obj} vs enumerated best {best}"
        ));
    }
    let deep = train_tree(instances, &grads, dimension, params);
    let deep_obj = objective(&deep);
    if deep_obj > one_obj + 1e-9 * one_obj.abs().max(1.0) {
        return Err(format!(
            "depth {} objective {deep_obj} above stump {one_obj}",
            params.max_depth
        ));
    }
    if deep.depth() > params.max_depth {
        return Err(format!(
            "depth {} exceeds {}",
            deep.depth(),
            params.max_depth
        ));
    }
    Ok(())
}

//! Measurement of the weighted-gradient approximation error and its
//! probabilistic bound, plus the privacy gate on the number of hash functions.
//!
//! The approximation error of one weighted tree `f` trained by party `m` is
//! `eps = |L_w(f) - L(f)|`, the gap between the weighted objective over `I_m`
//! and the exact second-order objective over all instances. It is measured
//! two ways: as the signed sum of the per-instance terms
//! `g_r (f(x_s) - f(x_r)) + h_r (f(x_s)^2 - f(x_r)^2) / 2` over foreign
//! instances `r` with similar instance `s`, and as the plain difference of
//! the two objectives.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{partition, Dataset, Instance, PartitionSpec, PartyDataset};
use crate::federation::{
    aggregate_foreign_gradients, compute_weighted_gradients, CommLedger, RoundContext,
    RoundObserver,
};
use crate::gbdt::{
    leaf_weight, logistic_gradients, Direction, GbdtModel, GradientPair, Node, Tree,
};
use crate::lsh::{preprocess, LshConfig, SimilarityMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("invalid bound inputs: {0}")]
    BoundInputs(String),
    #[error("invalid synthetic configuration: {0}")]
    Synthetic(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyVerdict {
    Admissible,
    Inadmissible,
}

/// Fewer hash functions than feature dimensions leaves every observed hash
/// vector with infinitely many pre-images.
pub fn privacy_check(num_functions: usize, dimension: usize) -> PrivacyVerdict {
    if num_functions < dimension {
        PrivacyVerdict::Admissible
    } else {
        PrivacyVerdict::Inadmissible
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundInputs {
    /// Largest L1 distance between a foreign instance and its similar instance.
    pub d_t: f64,
    /// L1 diameter of the joint training set.
    pub d_m: f64,
    pub depth: usize,
    pub n_total: usize,
    pub n_local: usize,
    pub g_max: f64,
    pub h_max: f64,
    pub f_max: f64,
    pub delta: f64,
}

/// Per-term cap `2 g' f' + h' f'^2 / 2`.
pub fn xi_cap(g_max: f64, h_max: f64, f_max: f64) -> f64 {
    2.0 * g_max * f_max + 0.5 * h_max * f_max * f_max
}

/// `([1 - (1 - d_t/d_m)^D](N - N_m) + sqrt((N - N_m) ln(1/delta) / 2)) * cap`.
pub fn error_bound(inputs: &ErrorBoundInputs) -> Result<f64, AnalysisError> {
    let bad = |m: String| Err(AnalysisError::BoundInputs(m));
    let ErrorBoundInputs {
        d_t,
        d_m,
        depth,
        n_total,
        n_local,
        g_max,
        h_max,
        f_max,
        delta,
    } = *inputs;
    if !(d_t >= 0.0 && d_m >= 0.0 && d_t.is_finite() && d_m.is_finite()) {
        return bad(format!(
            "distances must be finite and >= 0 (d_t {d_t}, d_m {d_m})"
        ));
    }
    if d_m == 0.0 && d_t > 0.0 {
        return bad("d_m is zero while d_t is positive".into());
    }
    if d_t > d_m {
        return bad(format!("d_t {d_t} exceeds d_m {d_m}"));
    }
    if n_local > n_total {
        return bad(format!("N_m {n_local} exceeds N {n_total}"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return bad(format!("delta {delta} outside (0, 1)"));
    }
    if g_max < 0.0 || h_max < 0.0 || f_max < 0.0 {
        return bad("gradient and output maxima must be >= 0".into());
    }
    let ratio = if d_m == 0.0 { 0.0 } else { d_t / d_m };
    let foreign = (n_total - n_local) as f64;
    let split_prob = 1.0 - (1.0 - ratio).powi(depth as i32);
    let count = split_prob * foreign + (foreign * (1.0 / delta).ln() / 2.0).sqrt();
    Ok(count * xi_cap(g_max, h_max, f_max))
}

/// Both routes to the approximation error of one tree plus the per-term data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMeasurement {
    /// `|sum_r term_r|` over foreign instances.
    pub epsilon_terms: f64,
    /// `|L_w - L|` evaluated on the same tree.
    pub epsilon_objectives: f64,
    /// `|term_r|` for every foreign instance, in party then row order.
    pub xi: Vec<f64>,
    /// Sum of absolute contributions to both objectives; the scale for
    /// comparing the two routes.
    pub objective_scale: f64,
    pub g_max: f64,
    pub h_max: f64,
    pub f_max: f64,
    /// Largest L1 distance between a foreign instance and its similar instance.
    pub d_t: f64,
}

impl EpsilonMeasurement {
    pub fn epsilon(&self) -> f64 {
        self.epsilon_terms
    }

    pub fn cap(&self) -> f64 {
        xi_cap(self.g_max, self.h_max, self.f_max)
    }

    /// Relative disagreement of the two routes against the objective scale.
    pub fn route_disagreement(&self) -> f64 {
        let diff = (self.epsilon_terms - self.epsilon_objectives).abs();
        if self.objective_scale == 0.0 {
            diff
        } else {
            diff / self.objective_scale
        }
    }
}

/// Approximation error of `tree`, built by `trainer`, under the round's
/// local gradients of every party.
pub fn measure_epsilon(
    tree: &Tree,
    trainer: usize,
    parties: &[PartyDataset],
    similarities: &[SimilarityMatrix],
    gradients: &[Vec<GradientPair>],
    lambda: f64,
    gamma: f64,
) -> EpsilonMeasurement {
    let local = &parties[trainer];
    let local_out: Vec<f64> = local.instances.iter().map(|x| tree.predict(x)).collect();
    let position: HashMap<u64, usize> = local
        .instances
        .iter()
        .enumerate()
        .map(|(q, x)| (x.global_id, q))
        .collect();

    // Weighted gradients, regrouped directly from the similarity entries.
    let mut big_g: Vec<f64> = gradients[trainer].iter().map(|p| p.g).collect();
    let mut big_h: Vec<f64> = gradients[trainer].iter().map(|p| p.h).collect();

    let mut signed_sum = 0.0;
    let mut xi = Vec::new();
    let mut scale = 0.0;
    let mut d_t: f64 = 0.0;
    let (mut g_max, mut h_max, mut f_max) = (0.0f64, 0.0f64, 0.0f64);
    let mut exact = 0.0;

    for (j, party) in parties.iter().enumerate() {
        for (r, x) in party.instances.iter().enumerate() {
            let gp = gradients[j][r];
            let fx = tree.predict(x);
            g_max = g_max.max(gp.g.abs());
            h_max = h_max.max(gp.h.abs());
            f_max = f_max.max(fx.abs());
            exact += gp.g * fx + 0.5 * gp.h * fx * fx;
            scale += (gp.g * fx).abs() + (0.5 * gp.h * fx * fx).abs();
            if j == trainer {
                continue;
            }
            let s = similarities[j].get(r, trainer);
            let q = position[&s];
            let fs = local_out[q];
            let term = gp.g * (fs - fx) + 0.5 * gp.h * (fs * fs - fx * fx);
            signed_sum += term;
            xi.push(term.abs());
            big_g[q] += gp.g;
            big_h[q] += gp.h;
            d_t = d_t.max(local.instances[q].l1_distance(x));
        }
    }

    let weighted: f64 = local_out
        .iter()
        .enumerate()
        .map(|(q, &f)| big_g[q] * f + 0.5 * big_h[q] * f * f)
        .sum();
    for (q, &f) in local_out.iter().enumerate() {
        scale += (big_g[q] * f).abs() + (0.5 * big_h[q] * f * f).abs();
    }
    let omega = tree.regularization(lambda, gamma);

    EpsilonMeasurement {
        epsilon_terms: signed_sum.abs(),
        epsilon_objectives: ((weighted + omega) - (exact + omega)).abs(),
        xi,
        objective_scale: scale,
        g_max,
        h_max,
        f_max,
        d_t,
    }
}

/// Largest pairwise L1 distance among `instances` (quadratic).
pub fn l1_diameter(instances: &[Instance]) -> f64 {
    (0..instances.len())
        .into_par_iter()
        .map(|i| {
            instances[i + 1..]
                .iter()
                .map(|y| instances[i].l1_distance(y))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiSummary {
    pub count: usize,
    pub nonzero: usize,
    pub max: f64,
    pub mean: f64,
}

impl XiSummary {
    pub fn of(xi: &[f64]) -> Self {
        let max = xi.iter().copied().fold(0.0, f64::max);
        let mean = if xi.is_empty() {
            0.0
        } else {
            xi.iter().sum::<f64>() / xi.len() as f64
        };
        Self {
            count: xi.len(),
            nonzero: xi.iter().filter(|&&v| v != 0.0).count(),
            max,
            mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundErrorReport {
    pub round: usize,
    pub trainer: usize,
    pub epsilon: f64,
    /// Present only when the joint-data diameter was supplied.
    pub bound: Option<f64>,
    pub xi: XiSummary,
    pub xi_cap: f64,
}

impl RoundErrorReport {
    pub fn pass(&self) -> Option<bool> {
        self.bound.map(|b| self.epsilon <= b)
    }
}

/// Records a [`RoundErrorReport`] for every weighted tree of a run.
#[derive(Debug, Default)]
pub struct EpsilonObserver {
    /// Joint-data L1 diameter; enables bound evaluation when set.
    pub diameter: Option<f64>,
    pub delta: f64,
    pub reports: Vec<RoundErrorReport>,
}

impl EpsilonObserver {
    pub fn new(diameter: Option<f64>, delta: f64) -> Self {
        Self {
            diameter,
            delta,
            reports: Vec::new(),
        }
    }
}

impl RoundObserver for EpsilonObserver {
    fn on_tree(&mut self, ctx: &RoundContext<'_>) {
        if ctx.weighted.is_none() {
            return;
        }
        let m = measure_epsilon(
            ctx.tree,
            ctx.trainer,
            ctx.parties,
            ctx.similarities,
            ctx.gradients,
            ctx.params.lambda,
            ctx.params.gamma,
        );
        let n_total = ctx.parties.iter().map(PartyDataset::len).sum();
        let bound = self.diameter.and_then(|d_m| {
            error_bound(&ErrorBoundInputs {
                d_t: m.d_t.min(d_m),
                d_m,
                depth: ctx.params.max_depth,
                n_total,
                n_local: ctx.parties[ctx.trainer].len(),
                g_max: m.g_max,
                h_max: m.h_max,
                f_max: m.f_max,
                delta: self.delta,
            })
            .ok()
        });
        self.reports.push(RoundErrorReport {
            round: ctx.round,
            trainer: ctx.trainer,
            epsilon: m.epsilon(),
            bound,
            xi: XiSummary::of(&m.xi),
            xi_cap: m.cap(),
        });
    }
}

/// Writes `round,epsilon,bound,pass` rows; bound and pass are empty when no
/// bound was evaluated.
pub fn write_epsilon_csv<W: std::io::Write>(
    reports: &[RoundErrorReport],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "epsilon", "bound", "pass"])?;
    for r in reports {
        w.write_record([
            r.round.to_string(),
            r.epsilon.to_string(),
            r.bound.map(|b| b.to_string()).unwrap_or_default(),
            r.pass().map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Misclassification rate of `model` on `dataset` (0 for an empty set).
pub fn test_error(model: &GbdtModel, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let wrong = dataset
        .instances
        .iter()
        .filter(|x| model.predict_class(x) != x.label)
        .count();
    wrong as f64 / dataset.len() as f64
}

/// Tree with uniformly random split features and split values drawn from the
/// node's feature values; leaves take `-G/(H + lambda)`.
///
/// Only used to reproduce the setting in which the error bound is stated.
pub fn random_split_tree(
    instances: &[Instance],
    grads: &[GradientPair],
    dimension: usize,
    max_depth: usize,
    lambda: f64,
    rng: &mut impl Rng,
) -> Tree {
    fn grow(
        nodes: &mut Vec<Node>,
        at: usize,
        rows: Vec<usize>,
        depth_left: usize,
        ctx: (&[Instance], &[GradientPair], usize, f64),
        rng: &mut impl Rng,
    ) {
        let (instances, grads, dimension, lambda) = ctx;
        let leaf = |rows: &[usize]| {
            let (g, h) = rows
                .iter()
                .fold((0.0, 0.0), |(g, h), &r| (g + grads[r].g, h + grads[r].h));
            Node::Leaf {
                weight: leaf_weight(g, h, lambda),
            }
        };
        if depth_left == 0 || rows.len() < 2 || dimension == 0 {
            nodes[at] = leaf(&rows);
            return;
        }
        let feature = rng.random_range(0..dimension) as u32;
        let value = |r: usize| instances[r].feature(feature).unwrap_or(0.0);
        let mut values: Vec<f64> = rows.iter().map(|&r| value(r)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        if values.len() < 2 {
            nodes[at] = leaf(&rows);
            return;
        }
        let threshold = values[rng.random_range(1..values.len())];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| value(r) < threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { weight: 0.0 });
        nodes.push(Node::Leaf { weight: 0.0 });
        nodes[at] = Node::Split {
            feature,
            threshold,
            // Missing features read as zero above, and zero is below any
            // positive threshold.
            default_child: if threshold > 0.0 {
                Direction::Left
            } else {
                Direction::Right
            },
            left: left as u32,
            right: left as u32 + 1,
        };
        grow(nodes, left, left_rows, depth_left - 1, ctx, rng);
        grow(nodes, left + 1, right_rows, depth_left - 1, ctx, rng);
    }

    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    grow(
        &mut nodes,
        0,
        (0..instances.len()).collect(),
        max_depth,
        (instances, grads, dimension, lambda),
        rng,
    );
    Tree { nodes }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBoundConfig {
    pub num_instances: usize,
    pub dimension: usize,
    pub num_parties: usize,
    pub depth: usize,
    pub delta: f64,
    pub lsh_window: f64,
    pub lsh_functions: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for SyntheticBoundConfig {
    fn default() -> Self {
        Self {
            num_instances: 200,
            dimension: 8,
            num_parties: 2,
            depth: 3,
            delta: 0.05,
            lsh_window: 1.0,
            lsh_functions: 5,
            lambda: 1.0,
            seed: 2020,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTrial {
    pub epsilon: f64,
    pub bound: f64,
    pub xi_max: f64,
    pub xi_cap: f64,
    pub route_disagreement: f64,
}

impl BoundTrial {
    pub fn within_bound(&self) -> bool {
        self.epsilon <= self.bound
    }

    /// Per-term cap check with a relative allowance of `1e-12` for rounding.
    pub fn within_cap(&self) -> bool {
        self.xi_max <= self.xi_cap * (1.0 + 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundVerification {
    pub trials: Vec<BoundTrial>,
}

impl BoundVerification {
    pub fn pass_fraction(&self) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        self.trials.iter().filter(|t| t.within_bound()).count() as f64 / self.trials.len() as f64
    }

    pub fn cap_fraction(&self) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        self.trials.iter().filter(|t| t.within_cap()).count() as f64 / self.trials.len() as f64
    }
}

fn run_bound_trial(config: &SyntheticBoundConfig, trial: u64) -> Result<BoundTrial, AnalysisError> {
    let trial_seed = config.seed.wrapping_mul(0x9E37_79B9).wrapping_add(trial);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let instances: Vec<Instance> = (0..config.num_instances)
        .map(|i| {
            let features = (0..config.dimension as u32)
                .map(|f| (f, rng.random::<f64>()))
                .collect();
            Instance::new(i as u64, features, u8::from(rng.random::<bool>()))
        })
        .collect();
    let data = Dataset::new("uniform", config.dimension, instances);
    let parties = partition(
        &data,
        &PartitionSpec::balanced(config.num_parties, trial_seed),
    )
    .map_err(|e| AnalysisError::Synthetic(e.to_string()))?;
    let lsh = LshConfig::new(config.lsh_window, config.lsh_functions, trial_seed ^ 0x5A5A)
        .map_err(|e| AnalysisError::Synthetic(e.to_string()))?;
    let pre = preprocess(&parties, &lsh, trial_seed ^ 0xA5A5, &mut CommLedger::new())
        .map_err(|e| AnalysisError::Synthetic(e.to_string()))?;

    let gradients: Vec<Vec<GradientPair>> = parties
        .iter()
        .map(|p| {
            p.instances
                .iter()
                .map(|x| logistic_gradients(0.0, x.label))
                .collect()
        })
        .collect();
    let trainer = 0;
    let target_ids = parties[trainer].ids();
    let aggregates = (1..parties.len())
        .map(|i| {
            aggregate_foreign_gradients(&pre.similarities[i], &gradients[i], trainer, &target_ids)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AnalysisError::Synthetic(e.to_string()))?;
    let weighted =
        compute_weighted_gradients(trainer, parties.len(), &gradients[trainer], &aggregates)
            .map_err(|e| AnalysisError::Synthetic(e.to_string()))?;

    let tree = random_split_tree(
        &parties[trainer].instances,
        &weighted.pairs(),
        config.dimension,
        config.depth,
        config.lambda,
        &mut rng,
    );
    let m = measure_epsilon(
        &tree,
        trainer,
        &parties,
        &pre.similarities,
        &gradients,
        config.lambda,
        0.0,
    );
    let d_m = l1_diameter(&data.instances);
    let bound = error_bound(&ErrorBoundInputs {
        d_t: m.d_t.min(d_m),
        d_m,
        depth: config.depth,
        n_total: data.len(),
        n_local: parties[trainer].len(),
        g_max: m.g_max,
        h_max: m.h_max,
        f_max: m.f_max,
        delta: config.delta,
    })?;
    Ok(BoundTrial {
        epsilon: m.epsilon(),
        bound,
        xi_max: m.xi.iter().copied().fold(0.0, f64::max),
        xi_cap: m.cap(),
        route_disagreement: m.route_disagreement(),
    })
}

/// Monte-Carlo check of the error bound on i.i.d. uniform features with
/// random-split trees. Trials are independent and seeded by index.
pub fn verify_bound_empirically(
    config: &SyntheticBoundConfig,
    trials: usize,
) -> Result<BoundVerification, AnalysisError> {
    if config.num_parties < 1 || config.num_instances < config.num_parties {
        return Err(AnalysisError::Synthetic(
            "need at least one instance per party".into(),
        ));
    }
    let trials = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_bound_trial(config, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoundVerification { trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> ErrorBoundInputs {
        ErrorBoundInputs {
            d_t: 1.0,
            d_m: 10.0,
            depth: 2,
            n_total: 110,
            n_local: 10,
            g_max: 1.0,
            h_max: 1.0,
            f_max: 1.0,
            delta: 0.05,
        }
    }

    #[test]
    fn privacy_examples() {
        assert_eq!(privacy_check(40, 123), PrivacyVerdict::Admissible);
        assert_eq!(privacy_check(9, 9), PrivacyVerdict::Inadmissible);
        assert_eq!(privacy_check(10, 9), PrivacyVerdict::Inadmissible);
        // One feature known to an attacker: d - 1 unknowns, L = d - 2.
        let d = 123;
        assert_eq!(privacy_check(d - 2, d - 1), PrivacyVerdict::Admissible);
    }

    #[test]
    fn bound_worked_example() {
        // (1 - 0.9^2) * 100 = 19; sqrt(100 ln 20 / 2) = 12.238734153404081;
        // cap = 2 + 0.5 = 2.5.
        let b = error_bound(&inputs()).unwrap();
        assert!((b - 78.096_835_383_510_18).abs() < 1e-9, "{b}");
    }

    #[test]
    fn bound_degenerate_cases() {
        let zero_dt = error_bound(&ErrorBoundInputs {
            d_t: 0.0,
            ..inputs()
        })
        .unwrap();
        let expected = (100.0 * (20.0f64).ln() / 2.0).sqrt() * 2.5;
        assert!((zero_dt - expected).abs() < 1e-12);

        let no_foreign = error_bound(&ErrorBoundInputs {
            n_total: 10,
            ..inputs()
        })
        .unwrap();
        assert_eq!(no_foreign, 0.0);

        let far = error_bound(&ErrorBoundInputs {
            d_t: 10.0,
            ..inputs()
        })
        .unwrap();
        let expected = (100.0 + (100.0 * (20.0f64).ln() / 2.0).sqrt()) * 2.5;
        assert!((far - expected).abs() < 1e-9);
    }

    #[test]
    fn bound_rejects_bad_inputs() {
        for bad in [
            ErrorBoundInputs {
                d_m: 0.0,
                ..inputs()
            },
            ErrorBoundInputs {
                d_t: 11.0,
                ..inputs()
            },
            ErrorBoundInputs {
                n_local: 200,
                ..inputs()
            },
            ErrorBoundInputs {
                delta: 1.0,
                ..inputs()
            },
            ErrorBoundInputs {
                delta: 0.0,
                ..inputs()
            },
        ] {
            assert!(error_bound(&bad).is_err(), "{bad:?}");
        }
        let both_zero = ErrorBoundInputs {
            d_t: 0.0,
            d_m: 0.0,
            ..inputs()
        };
        assert!(error_bound(&both_zero).is_ok());
    }

    #[test]
    fn test_error_counts_mistakes() {
        let mut model = GbdtModel::new(0.0, 1.0);
        model.trees.push(Tree::single_leaf(1.0));
        let ds = Dataset::new(
            "t",
            1,
            vec![
                Instance::new(0, vec![], 1),
                Instance::new(1, vec![], 0),
                Instance::new(2, vec![], 1),
                Instance::new(3, vec![], 1),
            ],
        );
        assert_eq!(test_error(&model, &ds), 0.25);
    }

    #[test]
    fn single_leaf_tree_has_zero_error() {
        let config = SyntheticBoundConfig {
            depth: 0,
            ..Default::default()
        };
        let v = verify_bound_empirically(&config, 5).unwrap();
        assert!(v.trials.iter().all(|t| t.epsilon == 0.0));
        assert_eq!(v.pass_fraction(), 1.0);
    }

    #[test]
    fn random_split_tree_respects_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let instances: Vec<Instance> = (0..50)
            .map(|i| Instance::new(i, vec![(0, rng.random()), (1, rng.random())], 0))
            .collect();
        let grads = vec![GradientPair::new(0.5, 0.25); 50];
        let tree = random_split_tree(&instances, &grads, 2, 4, 1.0, &mut rng);
        assert!(tree.depth() <= 4);
        assert!(tree.depth() >= 1);
    }

    #[test]
    fn csv_rows() {
        let reports = vec![
            RoundErrorReport {
                round: 0,
                trainer: 1,
                epsilon: 0.5,
                bound: Some(2.0),
                xi: XiSummary::of(&[0.5]),
                xi_cap: 1.0,
            },
            RoundErrorReport {
                round: 1,
                trainer: 0,
                epsilon: 0.25,
                bound: None,
                xi: XiSummary::of(&[]),
                xi_cap: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_epsilon_csv(&reports, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,epsilon,bound,pass\n0,0.5,2,true\n1,0.25,,\n"
        );
    }
}

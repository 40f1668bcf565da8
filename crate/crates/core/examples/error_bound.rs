//! Monte-Carlo check of the approximation-error bound on uniform synthetic
//! data with random-split trees, followed by the per-round error of a real
//! greedy SimFL run.
//!
//! cargo run --release --example error_bound

use simfl::analysis::{
    l1_diameter, verify_bound_empirically, EpsilonObserver, SyntheticBoundConfig,
};
use simfl::dataset::{partition, synthetic_linear, PartitionSpec};
use simfl::federation::{train_simfl, CommLedger, ScheduleKind, TrainingSchedule};
use simfl::gbdt::{GbdtParams, LogisticLoss};
use simfl::lsh::{preprocess, LshConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SyntheticBoundConfig::default();
    let v = verify_bound_empirically(&config, 200)?;
    let worst = v
        .trials
        .iter()
        .map(|t| t.epsilon / t.bound.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    println!(
        "synthetic: {} trials, eps <= bound in {:.1}%, xi cap held in {:.1}%, worst eps/bound {:.3}",
        v.trials.len(),
        100.0 * v.pass_fraction(),
        100.0 * v.cap_fraction(),
        worst
    );

    // Greedy trees on real-looking data: the bound is reported, not promised.
    let data = synthetic_linear("linear", 600, 6, 0.05, 11);
    let parties = partition(&data, &PartitionSpec::unbalanced(0.8, 2, 5))?;
    let pre = preprocess(
        &parties,
        &LshConfig::new(4.0, 5, 7)?,
        9,
        &mut CommLedger::new(),
    )?;
    let params = GbdtParams {
        num_trees: 6,
        max_depth: 3,
        ..Default::default()
    };
    let mut observer = EpsilonObserver::new(Some(l1_diameter(&data.instances)), 0.05);
    let schedule = TrainingSchedule::new(ScheduleKind::RoundRobin, params.num_trees, 2);
    train_simfl(
        &parties,
        &pre,
        &params,
        &schedule,
        &LogisticLoss,
        &mut observer,
    )?;
    println!("round trainer epsilon     bound");
    for r in &observer.reports {
        println!(
            "{:>5} {:>7} {:>9.4} {:>9.4}",
            r.round,
            r.trainer,
            r.epsilon,
            r.bound.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

//! SimFL against its three baselines on a skewed two-party split.
//!
//! cargo run --release --example federated_comparison

use simfl::analysis::test_error;
use simfl::dataset::{partition, synthetic_linear, train_test_split, PartitionSpec};
use simfl::federation::{
    train_allin, train_simfl, train_solo, train_tfl, CommLedger, ScheduleKind, TrainingSchedule,
};
use simfl::gbdt::{GbdtParams, LogisticLoss};
use simfl::lsh::{preprocess, LshConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synthetic_linear("linear", 6000, 10, 0.05, 21);
    let (train, test) = train_test_split(&data, 0.75, 21)?;
    let parties = partition(&train, &PartitionSpec::unbalanced(0.8, 2, 21))?;
    let params = GbdtParams {
        num_trees: 60,
        max_depth: 5,
        learning_rate: 0.2,
        ..Default::default()
    };
    let schedule = TrainingSchedule::new(ScheduleKind::RoundRobin, params.num_trees, parties.len());

    let pre = preprocess(
        &parties,
        &LshConfig::for_dimension(train.dimension, 1),
        2,
        &mut CommLedger::new(),
    )?;
    let simfl = train_simfl(&parties, &pre, &params, &schedule, &LogisticLoss, &mut ())?;
    let tfl = train_tfl(&parties, &params, &schedule, &LogisticLoss)?;
    let allin = train_allin(&parties, &params, &LogisticLoss)?;

    println!("method   test error");
    println!("SimFL    {:.4}", test_error(&simfl.model, &test));
    println!("TFL      {:.4}", test_error(&tfl.model, &test));
    println!("ALL-IN   {:.4}", test_error(&allin, &test));
    for p in &parties {
        let solo = train_solo(p, &params, &LogisticLoss)?;
        println!("SOLO p{}  {:.4}", p.party_id, test_error(&solo, &test));
    }
    Ok(())
}

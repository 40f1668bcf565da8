//! Measured communication against the closed-form cost model.
//!
//! cargo run --example comm_ledger

use simfl::dataset::{partition, synthetic_linear, PartitionSpec};
use simfl::federation::{
    closed_form, train_simfl, train_tfl, CommLedger, MessageKind, ScheduleKind, TrainingSchedule,
};
use simfl::gbdt::{GbdtParams, LogisticLoss};
use simfl::lsh::{preprocess, LshConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, m, l, depth) = (1000u64, 3usize, 40usize, 4usize);
    let data = synthetic_linear("linear", n as usize, 50, 0.1, 8);
    let parties = partition(&data, &PartitionSpec::balanced(m, 8))?;

    let mut ledger = CommLedger::new();
    let pre = preprocess(&parties, &LshConfig::new(4.0, l, 8)?, 8, &mut ledger)?;
    println!(
        "preprocessing: measured {} bytes, 8MNL = {}",
        ledger.preprocessing_bytes,
        closed_form::preprocessing_bytes(m as u64, n, l as u64)
    );

    let params = GbdtParams {
        num_trees: 5,
        max_depth: depth,
        ..Default::default()
    };
    let schedule = TrainingSchedule::new(ScheduleKind::RoundRobin, params.num_trees, m);
    let simfl = train_simfl(&parties, &pre, &params, &schedule, &LogisticLoss, &mut ())?;
    let expected = closed_form::per_tree_bytes(n, depth as u32, m as u64);
    for (t, bytes) in simfl.ledger.per_tree_bytes().iter().enumerate() {
        println!("tree {t}: measured {bytes} bytes, 8[N + (2^D - 1)(M - 1)] = {expected}");
    }
    let gradient_messages = simfl
        .ledger
        .messages
        .iter()
        .filter(|msg| msg.round == Some(0) && msg.kind != MessageKind::TreeBroadcast)
        .count();
    println!("round 0 gradient messages: {gradient_messages}");

    let tfl = train_tfl(&parties, &params, &schedule, &LogisticLoss)?;
    println!("TFL per-tree bytes: {:?}", tfl.ledger.per_tree_bytes());
    Ok(())
}

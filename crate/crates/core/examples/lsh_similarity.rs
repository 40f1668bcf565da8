//! Similarity lookup between two parties whose instances are near duplicates
//! of each other; every instance should find its twin.
//!
//! cargo run --example lsh_similarity

use simfl::analysis::{privacy_check, PrivacyVerdict};
use simfl::dataset::{Instance, PartyDataset};
use simfl::federation::CommLedger;
use simfl::lsh::{preprocess, LshConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 8;
    let point = |id: u64, base: f64, jitter: f64| {
        let features = (0..d as u32)
            .map(|f| (f, base + f as f64 + jitter))
            .collect();
        Instance::new(id, features, 0)
    };
    // Party 1 holds slightly perturbed copies of party 0's points.
    let a: Vec<Instance> = (0..5).map(|i| point(i, 10.0 * i as f64, 0.0)).collect();
    let b: Vec<Instance> = (0..5)
        .map(|i| point(100 + i, 10.0 * i as f64, 0.05))
        .collect();
    let parties = vec![
        PartyDataset {
            party_id: 0,
            dimension: d,
            instances: a,
        },
        PartyDataset {
            party_id: 1,
            dimension: d,
            instances: b,
        },
    ];

    let config = LshConfig::for_dimension(d, 42);
    assert_eq!(
        privacy_check(config.num_functions, d),
        PrivacyVerdict::Admissible
    );
    println!(
        "r = {}, L = {} for d = {d}",
        config.window, config.num_functions
    );

    let mut ledger = CommLedger::new();
    let pre = preprocess(&parties, &config, 7, &mut ledger)?;
    println!(
        "preprocessing traffic: {} bytes",
        ledger.preprocessing_bytes
    );
    for s in &pre.similarities {
        for (row, id) in s.local_ids.iter().enumerate() {
            println!("party {} instance {id:>3} -> {:?}", s.owner, s.row(row));
        }
    }
    println!("L = d gives {:?}", privacy_check(d, d));
    Ok(())
}

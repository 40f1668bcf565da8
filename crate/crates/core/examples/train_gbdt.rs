//! Plain second-order boosting on one dataset, with model persistence.
//!
//! cargo run --release --example train_gbdt

use simfl::analysis::test_error;
use simfl::dataset::{synthetic_linear, train_test_split};
use simfl::gbdt::{train_gbdt, GbdtModel, GbdtParams, LogisticLoss};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synthetic_linear("linear", 4000, 12, 0.05, 3);
    let (train, test) = train_test_split(&data, 0.75, 3)?;
    for trees in [1, 10, 50] {
        let params = GbdtParams {
            num_trees: trees,
            max_depth: 6,
            learning_rate: 0.3,
            ..Default::default()
        };
        let model = train_gbdt(&train.instances, train.dimension, &params, &LogisticLoss)?;
        println!(
            "{trees:>3} trees: train error {:.4}, test error {:.4}",
            test_error(&model, &train),
            test_error(&model, &test)
        );
        if trees == 50 {
            let path = std::env::temp_dir().join("simfl_example_model.json");
            model.save(&path)?;
            let back = GbdtModel::load(&path)?;
            assert_eq!(back, model);
            println!("saved and reloaded {}", path.display());
        }
    }
    Ok(())
}

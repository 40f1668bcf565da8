//! End-to-end experiment through the same code path as the `simfl train`
//! command, writing models and a manifest to the output directory.
//!
//! cargo run --release --example run_experiment -- <libsvm file> [out dir]
//!
//! Without arguments a synthetic LIBSVM file is generated first.

use std::path::PathBuf;

use simfl::cli::{cmd_train, RunConfig};
use simfl::dataset::{synthetic_linear, write_libsvm, IndexBase};
use simfl::gbdt::GbdtParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = std::env::temp_dir().join("simfl_run_experiment");
    let dataset = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            std::fs::create_dir_all(&out)?;
            let data = synthetic_linear("linear", 3000, 10, 0.05, 4);
            let path = out.join("linear.libsvm");
            std::fs::write(&path, write_libsvm(&data, IndexBase::One))?;
            path
        }
    };
    let config = RunConfig {
        dataset,
        out: args.next().map(PathBuf::from).unwrap_or(out),
        gbdt: GbdtParams {
            num_trees: 40,
            max_depth: 5,
            learning_rate: 0.2,
            ..Default::default()
        },
        ..Default::default()
    };
    let manifest = cmd_train(&config)?;
    for r in &manifest.results {
        println!("{:<8} {:.4}  ({})", r.name, r.test_error, r.model_file);
    }
    println!("outputs in {}", config.out.display());
    Ok(())
}

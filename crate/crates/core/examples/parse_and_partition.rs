//! Parse LIBSVM text and distribute the training part of a split across
//! parties with a skewed label distribution.
//!
//! cargo run --example parse_and_partition [path/to/file.libsvm]

use simfl::dataset::{
    check_disjoint, load_libsvm, parse_libsvm, partition, synthetic_linear, train_test_split,
    ParseOptions, PartitionSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tiny = parse_libsvm("tiny", "+1 1:0.5 3:2.0\n-1 2:1.0\n# comment\n\n1 4:0.25\n")?;
    println!(
        "tiny: {} instances, dimension {}",
        tiny.len(),
        tiny.dimension
    );
    for x in &tiny.instances {
        println!(
            "  id {} label {} features {:?}",
            x.global_id, x.label, x.features
        );
    }

    let data = match std::env::args().nth(1) {
        Some(path) => load_libsvm(path.as_ref(), &ParseOptions::default())?,
        None => synthetic_linear("synthetic", 2000, 10, 0.05, 1),
    };
    let (train, test) = train_test_split(&data, 0.75, 1)?;
    println!("{}: train {} test {}", data.name, train.len(), test.len());

    for spec in [
        PartitionSpec::balanced(2, 2),
        PartitionSpec::unbalanced(0.8, 2, 2),
        PartitionSpec::unbalanced(0.8, 4, 2),
    ] {
        let parties = partition(&train, &spec)?;
        check_disjoint(&parties)?;
        let shape: Vec<String> = parties
            .iter()
            .map(|p| {
                let pos = p.instances.iter().filter(|x| x.label == 1).count();
                format!("p{}: {} neg / {} pos", p.party_id, p.len() - pos, pos)
            })
            .collect();
        println!(
            "{:?} theta {} M={}: {}",
            spec.mode,
            spec.theta,
            spec.num_parties,
            shape.join(", ")
        );
    }
    Ok(())
}

//! The core workflow in-process: simulate a library, train a model, and
//! classify held-out sequences, printing the annotated ranks with their
//! posterior probabilities.
//!
//! Run with: cargo run --example train_and_classify

use taxurn::classifier::train;
use taxurn::sequence_model::KernelSpec;
use taxurn::species_prior::LevelParams;
use taxurn::synth::{holdout_split, simulate_library, SplitMode, SynthConfig};
use taxurn::taxonomy::{TaxonomicTree, TreeRecord};

fn main() {
    let config = SynthConfig {
        rank_names: vec!["family".into(), "genus".into(), "species".into()],
        params: vec![
            LevelParams::new(0.5, 0.0).unwrap(),
            LevelParams::new(0.5, 0.0).unwrap(),
            LevelParams::new(1.0, 0.3).unwrap(),
        ],
        seq_len: 150,
        base: vec![50.0, 50.0, 0.5],
        num_sequences: 1200,
        seed: 20,
    };
    let library = simulate_library(&config).unwrap();
    let (train_side, test_side) =
        holdout_split(&library.records, SplitMode::Random, 0.1, 20).unwrap();

    // Build the taxonomy from the training labels, then accumulate the
    // per-locus nucleotide counts of every training sequence.
    let records: Vec<TreeRecord> = train_side
        .iter()
        .map(|r| TreeRecord { id: r.id.clone(), labels: r.labels.clone() })
        .collect();
    let (tree, leaf_of) = TaxonomicTree::build(config.rank_names.clone(), &records).unwrap();
    let pairs = leaf_of
        .iter()
        .zip(&train_side)
        .map(|(&leaf, r)| (leaf, r.sequence.as_str()));
    let model = train(tree, KernelSpec::product1(config.seq_len).unwrap(), pairs).unwrap();

    println!(
        "trained on {} sequences: {} leaves, {} candidate classes (observed + novel)",
        train_side.len(),
        model.tree.leaves().len(),
        model.num_candidates()
    );
    for (level, p) in model.params.iter().enumerate() {
        println!("  level {}: alpha = {:.3}, sigma = {:.3}", level + 1, p.alpha, p.sigma);
    }

    for record in test_side.iter().take(4) {
        let (_, annotation) = model.classify(&record.id, &record.sequence).unwrap();
        println!("\nquery {} (truth: {})", record.id, record.labels.join(" / "));
        for rank in &annotation.ranks {
            println!(
                "  {:<8} {}  p = {:.3}{}",
                rank.rank,
                rank.label,
                rank.probability,
                if rank.novel { "  [novel]" } else { "" }
            );
        }
        let (path, p) = &annotation.top_leaves[0];
        println!("  best leaf: {path}  p = {p:.3}");
    }
}

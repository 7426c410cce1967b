//! Generating a synthetic reference library from the generative model and
//! writing it to disk as FASTA plus a taxonomy TSV.
//!
//! Run with: cargo run --example simulate_library

use taxurn::data_io::write_library;
use taxurn::species_prior::LevelParams;
use taxurn::synth::{holdout_split, simulate_library, SplitMode, SynthConfig};

fn main() {
    let config = SynthConfig {
        rank_names: vec!["family".into(), "genus".into(), "species".into()],
        params: vec![
            LevelParams::new(1.0, 0.2).unwrap(),
            LevelParams::new(1.0, 0.2).unwrap(),
            LevelParams::new(1.0, 0.3).unwrap(),
        ],
        seq_len: 120,
        base: vec![20.0, 5.0, 0.5],
        num_sequences: 800,
        seed: 7,
    };
    let library = simulate_library(&config).unwrap();

    let species: std::collections::BTreeSet<&str> = library
        .records
        .iter()
        .map(|r| r.labels[2].as_str())
        .collect();
    println!(
        "simulated {} sequences across {} species ({} distinct leaf profiles)",
        library.records.len(),
        species.len(),
        library.leaf_theta.len()
    );
    println!("first record: {} -> {}", library.records[0].id, library.records[0].labels.join(" / "));

    // Split 80/20 while guaranteeing each held-out species keeps at least
    // one training sequence, except species drawn only once, which become
    // genuinely novel queries.
    let (train, test) = holdout_split(
        &library.records,
        SplitMode::StratifiedByRank { level: 3, min_keep: 1 },
        0.2,
        7,
    )
    .unwrap();
    println!("stratified split: {} training, {} held out", train.len(), test.len());

    let dir = std::env::temp_dir().join("taxurn_example");
    std::fs::create_dir_all(&dir).unwrap();
    let fasta = dir.join("library.fasta");
    let tsv = dir.join("taxonomy.tsv");
    write_library(&fasta, &tsv, &config.rank_names, &train).unwrap();
    println!("wrote {} and {}", fasta.display(), tsv.display());
}

//! Scoring a model under the two canonical benchmark splits: a random
//! holdout (most queries belong to observed species) and a stratified
//! split engineered so most queries come from taxa the model never saw.
//!
//! Run with: cargo run --example evaluate_scenarios

use taxurn::classifier::{train, Model};
use taxurn::data_io::LibraryRecord;
use taxurn::evaluation::{accuracy_table, novelty_summary, score_prediction, Group};
use taxurn::sequence_model::KernelSpec;
use taxurn::species_prior::LevelParams;
use taxurn::synth::{holdout_split, simulate_library, SplitMode, SynthConfig};
use taxurn::taxonomy::{TaxonomicTree, TreeRecord};

fn train_model(rank_names: &[String], side: &[LibraryRecord], seq_len: usize) -> Model {
    let records: Vec<TreeRecord> = side
        .iter()
        .map(|r| TreeRecord { id: r.id.clone(), labels: r.labels.clone() })
        .collect();
    let (tree, leaf_of) = TaxonomicTree::build(rank_names.to_vec(), &records).unwrap();
    let pairs = leaf_of.iter().zip(side).map(|(&leaf, r)| (leaf, r.sequence.as_str()));
    train(tree, KernelSpec::product1(seq_len).unwrap(), pairs).unwrap()
}

fn score_split(name: &str, model: &Model, queries: &[LibraryRecord]) {
    let scored: Vec<_> = queries
        .iter()
        .map(|r| {
            let (_, annotation) = model.classify(&r.id, &r.sequence).unwrap();
            score_prediction(&annotation, &r.labels, &model.tree).unwrap()
        })
        .collect();
    println!("\n=== {name}: {} queries ===", queries.len());
    println!("rank     group     n     accuracy%  mean-prob");
    for row in accuracy_table(&scored, model.tree.rank_names()).unwrap() {
        if row.group == Group::New && row.n == 0 {
            continue;
        }
        println!(
            "{:<8} {:<9} {:<5} {:<10.2} {:.3}",
            row.rank,
            row.group.as_str(),
            row.n,
            row.accuracy_pct,
            row.mean_probability
        );
    }
    let novelty = novelty_summary(&scored);
    println!(
        "novelty: {} truly novel, {} recognized as novel ({:.1}%), {} fully correct path",
        novelty.truly_novel, novelty.recognized_novel, novelty.recognized_pct,
        novelty.fully_correct_novel
    );
}

fn main() {
    let config = SynthConfig {
        rank_names: vec!["family".into(), "genus".into(), "species".into()],
        params: vec![
            LevelParams::new(0.5, 0.0).unwrap(),
            LevelParams::new(0.5, 0.0).unwrap(),
            LevelParams::new(1.0, 0.35).unwrap(),
        ],
        seq_len: 150,
        base: vec![50.0, 50.0, 0.5],
        num_sequences: 2000,
        seed: 99,
    };
    let library = simulate_library(&config).unwrap();

    // Scenario 1: random 80/20 split. Queries mostly hit observed leaves.
    let (train_side, test_side) =
        holdout_split(&library.records, SplitMode::Random, 0.2, 99).unwrap();
    let model = train_model(&config.rank_names, &train_side, config.seq_len);
    score_split("scenario 1 (random split)", &model, &test_side);

    // Scenario 2: hold out sequences stratified by species, taking whole
    // species where possible, so novel-taxon behavior dominates.
    let (train_side, test_side) = holdout_split(
        &library.records,
        SplitMode::StratifiedByRank { level: 3, min_keep: 1 },
        0.2,
        99,
    )
    .unwrap();
    let model = train_model(&config.rank_names, &train_side, config.seq_len);
    score_split("scenario 2 (stratified by species)", &model, &test_side);
}

//! Choosing the probability temperature on a held-out split so reported
//! confidences match empirical accuracy.
//!
//! Run with: cargo run --example calibrate_temperature

use taxurn::calibration::{select_rho, LabeledQuery, Objective, DEFAULT_RHO_GRID};
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
        seq_len: 120,
        base: vec![50.0, 50.0, 0.5],
        num_sequences: 1500,
        seed: 33,
    };
    let library = simulate_library(&config).unwrap();
    let (train_side, holdout) =
        holdout_split(&library.records, SplitMode::Random, 0.2, 33).unwrap();

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

    let labeled: Vec<LabeledQuery> = holdout
        .iter()
        .map(|r| LabeledQuery { id: &r.id, sequence: &r.sequence, truth: &r.labels })
        .collect();

    // Scan the temperature grid; the gap objective minimizes the distance
    // between mean reported probability and accuracy at the lowest rank.
    let report = select_rho(&model, &labeled, &DEFAULT_RHO_GRID, Objective::Gap, 20).unwrap();

    println!("rho     accuracy%  mean-prob  gap      ece");
    for point in &report.grid {
        let marker = if point.rho == report.chosen_rho { "  <- chosen" } else { "" };
        println!(
            "{:<7} {:<10.2} {:<10.3} {:<8.4} {:<8.4}{}",
            point.rho, point.accuracy_pct, point.mean_probability, point.gap, point.ece, marker
        );
    }
    println!("\nreliability curve at rho = {} (cumulative, most confident first):", report.chosen_rho);
    for point in report.curve.iter().step_by(4) {
        println!(
            "  claimed {:>6.2}%  achieved {:>6.2}%",
            point.cumulative_probability_pct, point.cumulative_accuracy_pct
        );
    }
}

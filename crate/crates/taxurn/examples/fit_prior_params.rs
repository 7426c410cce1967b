//! Recovering urn parameters from observed partitions by maximum
//! likelihood over the exchangeable partition probability.
//!
//! Run with: cargo run --example fit_prior_params

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxurn::species_prior::{fit_partitions, urn_probabilities, LevelParams, PartitionCounts};

/// Draws one partition of `n` items by sampling the urn sequentially.
fn sample_partition(rng: &mut ChaCha8Rng, n: usize, params: LevelParams) -> PartitionCounts {
    let mut freqs: Vec<u64> = vec![1];
    for _ in 1..n {
        let probs = urn_probabilities(&PartitionCounts::new(freqs.clone()).unwrap(), params);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut choice = freqs.len();
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                choice = j;
                break;
            }
        }
        if choice == freqs.len() {
            freqs.push(1);
        } else {
            freqs[choice] += 1;
        }
    }
    PartitionCounts::new(freqs).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let truth = LevelParams::new(2.0, 0.4).unwrap();

    // In a taxonomy, every node at one level contributes a partition (its
    // children split the sequences below it); the level shares one (alpha,
    // sigma) pair, fitted on all of its partitions jointly.
    let partitions: Vec<PartitionCounts> = (0..8)
        .map(|_| sample_partition(&mut rng, 1500, truth))
        .collect();
    for (i, p) in partitions.iter().enumerate() {
        println!("partition {}: {} taxa over {} sequences", i + 1, p.blocks(), p.total());
    }

    let fit = fit_partitions(&partitions);
    println!("\ntrue parameters   : alpha = {:.3}, sigma = {:.3}", truth.alpha, truth.sigma);
    println!(
        "fitted parameters : alpha = {:.3}, sigma = {:.3}  (log-likelihood {:.2})",
        fit.params.alpha, fit.params.sigma, fit.log_objective
    );
    if fit.degenerate {
        println!("fit was degenerate (no repeated taxa); defaults were used");
    }
}

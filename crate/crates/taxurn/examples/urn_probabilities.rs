//! Species-sampling urn basics: allocation probabilities for the next
//! sequence and the exchangeable probability of a whole partition.
//!
//! Run with: cargo run --example urn_probabilities

use taxurn::species_prior::{log_eppf, urn_probabilities, LevelParams, PartitionCounts};

fn main() {
    // Four observed taxa holding 10, 5, 3, and 1 sequences.
    let counts = PartitionCounts::new(vec![10, 5, 3, 1]).unwrap();
    let params = LevelParams::new(1.0, 0.25).unwrap();

    println!("partition: {:?}  (n = {})", counts.frequencies(), counts.total());
    println!("urn parameters: alpha = {}, discount = {}\n", params.alpha, params.sigma);

    let probs = urn_probabilities(&counts, params);
    println!("probability that the next sequence belongs to:");
    for (j, p) in probs.iter().enumerate() {
        if j < counts.blocks() {
            println!("  taxon {} ({:>2} members): {:.4}", j + 1, counts.frequencies()[j], p);
        } else {
            println!("  a brand new taxon    : {:.4}", p);
        }
    }
    println!("  total                : {:.4}\n", probs.iter().sum::<f64>());

    // The same quantity for the whole allocation at once. Exchangeability
    // means the value does not depend on the order sequences arrived in.
    println!("log probability of the whole partition: {:.6}", log_eppf(&counts, params));

    // A larger discount thins existing taxa and feeds the novel class.
    println!("\nnew-taxon probability as the discount grows (alpha = 1):");
    for sigma in [0.0, 0.25, 0.5, 0.75] {
        let p = urn_probabilities(&counts, LevelParams::new(1.0, sigma).unwrap());
        println!("  sigma = {sigma:.2}: {:.4}", p[counts.blocks()]);
    }
}

//! Acceptance suite: one test per acceptance criterion, in order. Each
//! test prints a single summary line (visible with `--nocapture`); the
//! test name and ok/FAILED status from the harness give the per-criterion
//! pass/fail line. Tolerances and runtime budgets are asserted inside.

use std::time::Instant;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use taxurn::calibration::{select_rho, LabeledQuery, Objective, DEFAULT_RHO_GRID};
use taxurn::classifier::{aggregate, temper, train, Model};
use taxurn::data_io::{load_model, save_model, LibraryRecord};
use taxurn::evaluation::{accuracy_table, novelty_summary, score_prediction, Group};
use taxurn::sequence_model::{
    build_log_tables, encode_query, log_predictive, HyperAssignment, KernelSpec, MomentsFit,
    SuffStats,
};
use taxurn::species_prior::{
    fit_partitions, log_eppf, partitions_log_likelihood, urn_probabilities, LevelParams,
    PartitionCounts,
};
use taxurn::synth::{holdout_split, simulate_library, SplitMode, SynthConfig};
use taxurn::taxonomy::{NodeId, TaxonomicTree, TreeRecord};

fn report(name: &str, detail: &str, started: Instant) {
    println!(
        "[PASS] {name}: {detail} ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

fn train_from_records(
    rank_names: &[String],
    records: &[LibraryRecord],
    spec: KernelSpec,
) -> Model {
    let tree_records: Vec<TreeRecord> = records
        .iter()
        .map(|r| TreeRecord {
            id: r.id.clone(),
            labels: r.labels.clone(),
        })
        .collect();
    let (tree, assignments) =
        TaxonomicTree::build(rank_names.to_vec(), &tree_records).expect("tree builds");
    let pairs: Vec<(NodeId, &str)> = assignments
        .iter()
        .zip(records)
        .map(|(&leaf, r)| (leaf, r.sequence.as_str()))
        .collect();
    train(tree, spec, pairs).expect("training succeeds")
}

fn random_sequence(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| b"ACGT"[rng.gen_range(0..4)] as char)
        .collect()
}

#[test]
fn a01_urn_probabilities_exact_values() {
    let started = Instant::now();
    let counts = PartitionCounts::new(vec![10, 5, 3, 1]).unwrap();
    let params = LevelParams::new(1.0, 0.25).unwrap();

    let timer = Instant::now();
    let mut probs = urn_probabilities(&counts, params);
    for _ in 0..999 {
        probs = urn_probabilities(&counts, params);
    }
    let per_call = timer.elapsed().as_secs_f64() / 1000.0;

    assert!((probs[0] - 0.4875).abs() < 1e-12, "largest taxon: {}", probs[0]);
    assert!((probs[4] - 0.1).abs() < 1e-12, "new taxon: {}", probs[4]);
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(per_call < 1e-3, "urn call took {per_call:.2e}s");
    report(
        "urn probabilities",
        &format!("largest=0.4875 new=0.1 exact, {per_call:.1e}s/call"),
        started,
    );
}

/// Draws one allocation sequence from the urn, accumulating the log
/// probability of every sequential choice.
fn sample_allocation(rng: &mut ChaCha8Rng, n: usize, params: LevelParams) -> (Vec<u64>, f64) {
    let mut freqs: Vec<u64> = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..n {
        let probs = if freqs.is_empty() {
            vec![1.0]
        } else {
            urn_probabilities(&PartitionCounts::new(freqs.clone()).unwrap(), params)
        };
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut choice = probs.len() - 1;
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                choice = j;
                break;
            }
        }
        log_prob += probs[choice].ln();
        if choice == freqs.len() {
            freqs.push(1);
        } else {
            freqs[choice] += 1;
        }
    }
    (freqs, log_prob)
}

#[test]
fn a02_eppf_equals_sequential_urn_product() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE99F);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=50);
        let sigma = rng.gen_range(0.0..0.95);
        let alpha = -sigma + 1e-3 + rng.gen_range(0.0..20.0);
        let params = LevelParams::new(alpha, sigma).unwrap();
        let (freqs, log_prob) = sample_allocation(&mut rng, n, params);
        let counts = PartitionCounts::new(freqs).unwrap();
        let diff = (log_eppf(&counts, params) - log_prob).abs();
        worst = worst.max(diff);
        assert!(
            diff < 1e-9,
            "alpha={alpha} sigma={sigma} n={n}: log diff {diff:.2e}"
        );
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
    report(
        "partition probability vs sequential urn",
        &format!("1000 sequences, worst log-diff {worst:.1e}"),
        started,
    );
}

#[test]
fn a03_partition_mle_beats_reference_grid() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x11E);
    let truth = LevelParams::new(1.0, 0.25).unwrap();
    let alpha_grid = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    let sigma_grid: Vec<f64> = (0..19).map(|i| i as f64 * 0.05).collect();

    let mut sigmas = Vec::new();
    for rep in 0..20 {
        let (freqs, _) = sample_allocation(&mut rng, 2000, truth);
        let partition = PartitionCounts::new(freqs).unwrap();
        let parts = [partition];
        let fit = fit_partitions(&parts);
        assert!(!fit.degenerate);

        let mut grid_best = f64::NEG_INFINITY;
        for &a in &alpha_grid {
            for &s in &sigma_grid {
                let value =
                    partitions_log_likelihood(&parts, LevelParams::new(a, s).unwrap());
                grid_best = grid_best.max(value);
            }
        }
        assert!(
            fit.log_objective >= grid_best - 1e-6,
            "rep {rep}: optimizer {:.6} below grid best {grid_best:.6}",
            fit.log_objective
        );
        sigmas.push(fit.params.sigma);
    }
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = (sigmas[9] + sigmas[10]) / 2.0;
    assert!(
        (0.15..=0.35).contains(&median),
        "median sigma-hat {median:.3} outside [0.15, 0.35]"
    );
    assert!(started.elapsed().as_secs_f64() < 60.0);
    report(
        "partition MLE vs reference grid",
        &format!("20 fits all >= grid max - 1e-6, median sigma {median:.3}"),
        started,
    );
}

#[test]
fn a04_predictive_matches_monte_carlo() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x04AC);
    let spec = KernelSpec::product1(3).unwrap();

    let records: Vec<TreeRecord> = (0..10)
        .map(|i| TreeRecord {
            id: format!("r{i}"),
            labels: vec!["fam".into(), format!("sp{i:02}")],
        })
        .collect();
    let (tree, _) =
        TaxonomicTree::build(vec!["family".into(), "species".into()], &records).unwrap();

    // Random counts around 120 per locus keep every factor's Monte-Carlo
    // variance low; leaf 3 gets an all-gap middle locus so one factor is a
    // pure prior predictive.
    let mut leaf_counts = Vec::new();
    let mut xi = vec![0.0; spec.table_len()];
    for v in xi.iter_mut() {
        *v = rng.gen_range(1.0..2.0);
    }
    for leaf in 0..10 {
        let mut counts = vec![0.0; spec.table_len()];
        for s in 0..3 {
            if leaf == 3 && s == 1 {
                continue;
            }
            for g in 0..4 {
                counts[s * 4 + g] = rng.gen_range(20..=50) as f64;
            }
        }
        leaf_counts.push(counts);
    }
    let stats = SuffStats {
        spec,
        leaf_counts: leaf_counts.clone(),
        leaf_norm: vec![130.0; 10],
    };
    let fit = MomentsFit {
        xi: xi.clone(),
        xi0: (0..3).map(|s| xi[s * 4..s * 4 + 4].iter().sum()).collect(),
        clamped_loci: 0,
    };
    let hyper = HyperAssignment {
        node_fits: vec![fit.clone(), fit],
    };
    let tables = build_log_tables(&tree, &stats, &hyper);

    let draws = 1_000_000;
    let mut worst: f64 = 0.0;
    for leaf in 0..10 {
        // Query the best-supported symbol per locus (largest factor, least
        // relative Monte-Carlo noise).
        let query_syms: Vec<usize> = (0..3)
            .map(|s| {
                (0..4)
                    .max_by(|&a, &b| {
                        let w = |g: usize| xi[s * 4 + g] + leaf_counts[leaf][s * 4 + g];
                        w(a).partial_cmp(&w(b)).unwrap()
                    })
                    .unwrap()
            })
            .collect();
        let text: String = query_syms.iter().map(|&g| b"ACGT"[g] as char).collect();
        let query = encode_query(&spec, "q", &text).unwrap();
        let exact = log_predictive(&spec, &tables.observed[leaf], &query).exp();

        // Monte-Carlo integration: draw theta ~ Dirichlet(xi + n) per locus
        // and average the product of queried coordinates.
        let gammas: Vec<Vec<Gamma<f64>>> = (0..3)
            .map(|s| {
                (0..4)
                    .map(|g| {
                        Gamma::new(xi[s * 4 + g] + leaf_counts[leaf][s * 4 + g], 1.0).unwrap()
                    })
                    .collect()
            })
            .collect();
        let mut sum = 0.0;
        for _ in 0..draws {
            let mut product = 1.0;
            for s in 0..3 {
                let mut raw = [0.0; 4];
                let mut total = 0.0;
                for g in 0..4 {
                    raw[g] = gammas[s][g].sample(&mut rng);
                    total += raw[g];
                }
                product *= raw[query_syms[s]] / total;
            }
            sum += product;
        }
        let mc = sum / draws as f64;
        let rel = (mc - exact).abs() / exact;
        worst = worst.max(rel);
        assert!(
            rel < 1e-3,
            "leaf {leaf}: exact {exact:.6e} vs MC {mc:.6e}, rel {rel:.2e}"
        );
    }
    assert!(started.elapsed().as_secs_f64() < 120.0);
    report(
        "predictive vs Monte-Carlo integral",
        &format!("10 leaves x 1e6 draws, worst relative error {worst:.1e}"),
        started,
    );
}

fn random_synth_config(rng: &mut ChaCha8Rng, forced_large: bool) -> SynthConfig {
    let levels = if forced_large { 3 } else { rng.gen_range(2..=4) };
    let params = (0..levels)
        .map(|_| {
            if forced_large {
                LevelParams::new(20.0, 0.9).unwrap()
            } else {
                let sigma = rng.gen_range(0.0..0.8);
                let alpha = (rng.gen_range(-2.3f64..1.6)).exp();
                LevelParams::new(alpha, sigma).unwrap()
            }
        })
        .collect();
    SynthConfig {
        rank_names: (1..=levels).map(|l| format!("level{l}")).collect(),
        params,
        seq_len: 1,
        base: vec![0.5; levels],
        num_sequences: if forced_large {
            10_000
        } else {
            rng.gen_range(50..=3000)
        },
        seed: rng.gen(),
    }
}

#[test]
fn a05_priors_normalize_and_aggregation_conserves() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A11);

    // Leaf priors over all candidates sum to 1 on 100 random trees, the
    // last three pushed toward the 1e4-leaf scale.
    let mut max_leaves = 0;
    let mut worst_prior: f64 = 0.0;
    for rep in 0..100 {
        let config = random_synth_config(&mut rng, rep >= 97);
        let library = simulate_library(&config).expect("simulation succeeds");
        let records: Vec<TreeRecord> = library
            .records
            .iter()
            .map(|r| TreeRecord {
                id: r.id.clone(),
                labels: r.labels.clone(),
            })
            .collect();
        let (tree, _) = TaxonomicTree::build(config.rank_names.clone(), &records).unwrap();
        max_leaves = max_leaves.max(tree.leaves().len());
        let log_priors = taxurn::species_prior::leaf_log_priors(&tree, &config.params);
        let total: f64 = log_priors.iter().map(|lp| lp.exp()).sum();
        worst_prior = worst_prior.max((total - 1.0).abs());
        assert!(
            (total - 1.0).abs() < 1e-10,
            "rep {rep}: priors sum to {total}"
        );
    }

    // Aggregate conservation on every classified query of a trained model:
    // parent = sum of children plus the novel mass anchored at the parent,
    // root = 1.
    let config = SynthConfig {
        rank_names: vec!["order".into(), "family".into(), "genus".into()],
        params: vec![
            LevelParams::new(1.0, 0.25).unwrap(),
            LevelParams::new(1.0, 0.25).unwrap(),
            LevelParams::new(1.0, 0.25).unwrap(),
        ],
        seq_len: 40,
        base: vec![0.5; 3],
        num_sequences: 500,
        seed: 0x5A22,
    };
    let library = simulate_library(&config).unwrap();
    let model = train_from_records(
        &config.rank_names,
        &library.records,
        KernelSpec::product1(40).unwrap(),
    );
    let mut novel_index = std::collections::HashMap::new();
    for (i, c) in model.candidates.iter().enumerate() {
        if let taxurn::taxonomy::CandidateLeaf::Novel(v) = *c {
            novel_index.insert(v, i);
        }
    }
    let mut worst_agg: f64 = 0.0;
    for q in 0..50 {
        let text = if q < 40 {
            library.records[q * 7].sequence.clone()
        } else {
            random_sequence(&mut rng, 40)
        };
        let (posterior, _) = model.classify(&format!("q{q}"), &text).unwrap();
        let agg = aggregate(&model.tree, &model.candidates, &posterior.probs);
        assert!((agg[model.tree.root()] - 1.0).abs() < 1e-10, "root mass");
        for &v in model.tree.internal_nodes() {
            let children_sum: f64 = model
                .tree
                .node(v)
                .children
                .iter()
                .map(|&c| agg[c])
                .sum();
            let novel_mass = posterior.probs[novel_index[&v]];
            let diff = (agg[v] - children_sum - novel_mass).abs();
            worst_agg = worst_agg.max(diff);
            assert!(diff < 1e-10, "node {v}: {diff:.2e}");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 120.0);
    report(
        "prior normalization + aggregation conservation",
        &format!(
            "100 trees (max {max_leaves} leaves) worst |sum-1| {worst_prior:.1e}; 50 queries worst conservation {worst_agg:.1e}"
        ),
        started,
    );
}

#[test]
fn a06_tempering_contract() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E39);
    for _ in 0..10_000 {
        let len = rng.gen_range(2..=50);
        let mut probs: Vec<f64> = (0..len).map(|_| rng.gen_range(1e-6..1.0)).collect();
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        };
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
            idx
        };
        for &rho in &DEFAULT_RHO_GRID {
            let t = temper(&probs, rho).unwrap();
            assert_eq!(argmax(&probs), argmax(&t), "argmax moved at rho={rho}");
            assert_eq!(order(&probs), order(&t), "sort order moved at rho={rho}");
        }
        let identity = temper(&probs, 1.0).unwrap();
        assert!(identity
            .iter()
            .zip(&probs)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    let mut degenerate = vec![0.0; 8];
    degenerate[5] = 1.0;
    let fixed = temper(&degenerate, 0.05).unwrap();
    assert!((fixed[5] - 1.0).abs() < 1e-15);

    let pair = temper(&[0.8, 0.2], 0.1).unwrap();
    assert!((pair[0] - 0.5346).abs() < 1e-4 && (pair[0] - 0.5346019613807635).abs() < 1e-6);
    assert!((pair[1] - 0.4654).abs() < 1e-4 && (pair[1] - 0.4653980386192365).abs() < 1e-6);
    assert!(started.elapsed().as_secs_f64() < 5.0);
    report(
        "tempering contract",
        "1e4 vectors x 10 temperatures: order preserved, fixed points exact",
        started,
    );
}

/// End-to-end self-consistency thresholds. The pipeline run committed
/// with this seed gives observed-leaf accuracy 98.68%, novelty recall
/// 100% (20 pruned taxa in the holdout), calibration gap 0.0026 at
/// rho = 0.1; the bounds below leave margin for those measurements.
const E2E_SEED: u64 = 20260819;
const E2E_MIN_OBSERVED_ACC: f64 = 90.0;
const E2E_MIN_NOVEL_RECALL: f64 = 70.0;
const E2E_MAX_GAP: f64 = 0.05;

#[test]
fn a07_end_to_end_self_consistency() {
    let started = Instant::now();
    let config = SynthConfig {
        rank_names: vec!["level1".into(), "level2".into(), "level3".into()],
        // Few large families and genera (sigma = 0) so every internal
        // node pools enough multi-sequence leaves for an informative
        // moments fit; a heavy-tailed species level supplies both large
        // leaves and singletons the holdout can prune.
        params: vec![
            LevelParams::new(0.5, 0.0).unwrap(),
            LevelParams::new(0.5, 0.0).unwrap(),
            LevelParams::new(1.0, 0.4).unwrap(),
        ],
        seq_len: 400,
        // Flat upper-level centers plus a sparse (0.5 per symbol) leaf
        // level give each leaf its own near-vertex locus profile:
        // well-separated species, related only through their parents.
        base: vec![50.0, 50.0, 0.5],
        num_sequences: 2000,
        seed: E2E_SEED,
    };
    let library = simulate_library(&config).unwrap();
    let (train_side, test_side) =
        holdout_split(&library.records, SplitMode::Random, 0.2, E2E_SEED).unwrap();
    assert_eq!(test_side.len(), 400);

    let model = train_from_records(
        &config.rank_names,
        &train_side,
        KernelSpec::product1(400).unwrap(),
    );
    let labeled: Vec<LabeledQuery> = test_side
        .iter()
        .map(|r| LabeledQuery {
            id: &r.id,
            sequence: &r.sequence,
            truth: &r.labels,
        })
        .collect();
    let calibration = select_rho(&model, &labeled, &DEFAULT_RHO_GRID, Objective::Gap, 20)
        .expect("calibration succeeds");
    let chosen = calibration
        .grid
        .iter()
        .find(|p| p.rho == calibration.chosen_rho)
        .unwrap();

    let mut scored = Vec::new();
    for r in &test_side {
        let (_, annotation) = model
            .classify_with(&r.id, &r.sequence, calibration.chosen_rho, 1)
            .unwrap();
        scored.push(score_prediction(&annotation, &r.labels, &model.tree).unwrap());
    }
    let rows = accuracy_table(&scored, model.tree.rank_names()).unwrap();
    for r in &rows {
        eprintln!(
            "  {} {:<8} n={:<4} acc={:.2}% meanp={:.3}",
            r.rank,
            r.group.as_str(),
            r.n,
            r.accuracy_pct,
            r.mean_probability
        );
    }
    let observed_row = rows
        .iter()
        .find(|r| r.rank == "level3" && r.group == Group::Observed)
        .unwrap();
    let novelty = novelty_summary(&scored);
    eprintln!(
        "  novelty: truly={} recognized={} ({:.1}%) predicted_leaves={} rho={}",
        novelty.truly_novel,
        novelty.recognized_novel,
        novelty.recognized_pct,
        novelty.predicted_novel_leaves,
        calibration.chosen_rho
    );

    assert!(
        novelty.truly_novel > 0,
        "holdout must contain pruned leaves for the recall check"
    );
    assert!(
        observed_row.accuracy_pct >= E2E_MIN_OBSERVED_ACC,
        "observed-leaf accuracy {:.2}% below {E2E_MIN_OBSERVED_ACC}%",
        observed_row.accuracy_pct
    );
    assert!(
        novelty.recognized_pct >= E2E_MIN_NOVEL_RECALL,
        "novelty recall {:.2}% below {E2E_MIN_NOVEL_RECALL}%",
        novelty.recognized_pct
    );
    assert!(
        chosen.gap <= E2E_MAX_GAP,
        "calibration gap {:.4} above {E2E_MAX_GAP}",
        chosen.gap
    );
    assert!(started.elapsed().as_secs_f64() < 300.0);
    report(
        "end-to-end self-consistency",
        &format!(
            "rho={} observed-acc={:.2}% novel-recall={:.2}% ({} truly novel) gap={:.4}",
            calibration.chosen_rho,
            observed_row.accuracy_pct,
            novelty.recognized_pct,
            novelty.truly_novel,
            chosen.gap
        ),
        started,
    );
}

#[test]
fn a08_round_trip_and_thread_determinism() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x80B);
    let config = SynthConfig {
        rank_names: vec!["family".into(), "genus".into()],
        params: vec![
            LevelParams::new(1.0, 0.25).unwrap(),
            LevelParams::new(1.0, 0.25).unwrap(),
        ],
        seq_len: 60,
        base: vec![0.5; 2],
        num_sequences: 300,
        seed: 0x80B,
    };
    let library = simulate_library(&config).unwrap();
    let mut model = train_from_records(
        &config.rank_names,
        &library.records,
        KernelSpec::product1(60).unwrap(),
    );
    model.rho = 0.3;

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("round.model");
    save_model(&model, &model_path).unwrap();
    let loaded = load_model(&model_path).unwrap();

    let queries: Vec<String> = (0..1000).map(|_| random_sequence(&mut rng, 60)).collect();
    for (i, q) in queries.iter().enumerate() {
        let (a, _) = model.classify(&format!("q{i}"), q).unwrap();
        let (b, _) = loaded.classify(&format!("q{i}"), q).unwrap();
        assert_eq!(a.probs.len(), b.probs.len());
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert_eq!(x.to_bits(), y.to_bits(), "query {i} diverged after reload");
        }
    }

    // The installed binary must produce byte-identical files for any
    // worker count.
    let fasta = dir.path().join("queries.fasta");
    let mut text = String::new();
    for (i, q) in queries.iter().enumerate() {
        text.push_str(&format!(">q{i}\n{q}\n"));
    }
    std::fs::write(&fasta, text).unwrap();
    let out1 = dir.path().join("t1.tsv");
    let out4 = dir.path().join("t4.tsv");
    for (threads, out) in [("1", &out1), ("4", &out4)] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_taxurn"))
            .args([
                "classify",
                "--model",
                model_path.to_str().unwrap(),
                "--queries",
                fasta.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .stderr(std::process::Stdio::null())
            .status()
            .expect("binary runs");
        assert!(status.success());
    }
    let bytes1 = std::fs::read(&out1).unwrap();
    let bytes4 = std::fs::read(&out4).unwrap();
    assert_eq!(bytes1, bytes4, "thread count changed the output bytes");
    report(
        "round trip + thread determinism",
        "1000 queries bit-identical after reload; --threads 4 byte-identical to 1",
        started,
    );
}

#[test]
fn a09_classification_performance_budget() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x3EED);
    let p = 658;

    // Structured 25 x 20 x 20 taxonomy: exactly 10,000 leaves.
    let mut records = Vec::with_capacity(10_000);
    for f in 0..25 {
        for g in 0..20 {
            for s in 0..20 {
                records.push(LibraryRecord {
                    id: format!("r{f}_{g}_{s}"),
                    labels: vec![
                        format!("fam{f:02}"),
                        format!("gen{f:02}_{g:02}"),
                        format!("sp{f:02}_{g:02}_{s:02}"),
                    ],
                    sequence: random_sequence(&mut rng, p),
                });
            }
        }
    }
    let rank_names: Vec<String> = vec!["family".into(), "genus".into(), "species".into()];
    let model = train_from_records(&rank_names, &records, KernelSpec::product1(p).unwrap());
    assert_eq!(model.tree.leaves().len(), 10_000);
    let queries: Vec<String> = (0..1000).map(|_| random_sequence(&mut rng, p)).collect();

    let timer = Instant::now();
    let mut mass_check = 0.0;
    for (i, q) in queries.iter().enumerate() {
        let (posterior, _) = model.classify(&format!("q{i}"), q).unwrap();
        mass_check += posterior.probs[0];
    }
    let elapsed = timer.elapsed().as_secs_f64();
    assert!(mass_check.is_finite());
    assert!(
        elapsed <= 60.0,
        "1000 queries against 10k leaves took {elapsed:.1}s single-threaded"
    );
    report(
        "classification throughput",
        &format!("1000 aligned queries (p={p}) vs 10,000 leaves in {elapsed:.1}s single-threaded"),
        started,
    );
}

/// Optional external-library integration. Not gating: without the data
/// directory the test reports SKIP and passes. To run it, point
/// TAXURN_REFLIB_DIR at a directory holding `library.fasta` and
/// `taxonomy.tsv` with species-level labels.
#[test]
fn a10_reference_library_integration_optional() {
    let started = Instant::now();
    let Some(dir) = std::env::var_os("TAXURN_REFLIB_DIR") else {
        println!(
            "[SKIP] reference library integration: optional, set TAXURN_REFLIB_DIR to enable"
        );
        return;
    };
    let dir = std::path::PathBuf::from(dir);
    let lib = taxurn::data_io::load_library(
        &dir.join("library.fasta"),
        Some(&dir.join("taxonomy.tsv")),
        &taxurn::data_io::LoadOptions::default(),
    )
    .expect("reference library loads");
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1B01);
    let mut shuffled = lib.records.clone();
    shuffled.shuffle(&mut rng);
    let test_n = shuffled.len() / 5;
    let (test_side, train_side) = shuffled.split_at(test_n);

    let p = train_side[0].sequence.len();
    let model = train_from_records(
        &lib.rank_names,
        train_side,
        KernelSpec::product1(p).unwrap(),
    );
    let labeled: Vec<LabeledQuery> = test_side
        .iter()
        .map(|r| LabeledQuery {
            id: &r.id,
            sequence: &r.sequence,
            truth: &r.labels,
        })
        .collect();
    let calibration =
        select_rho(&model, &labeled, &DEFAULT_RHO_GRID, Objective::Gap, 20).unwrap();
    let mut scored = Vec::new();
    for r in test_side {
        let (_, annotation) = model
            .classify_with(&r.id, &r.sequence, calibration.chosen_rho, 1)
            .unwrap();
        scored.push(score_prediction(&annotation, &r.labels, &model.tree).unwrap());
    }
    let rows = accuracy_table(&scored, model.tree.rank_names()).unwrap();
    let lowest = model.tree.rank_names().last().unwrap().clone();
    let all_row = rows
        .iter()
        .find(|r| r.rank == lowest && r.group == Group::All)
        .unwrap();
    assert!(
        (all_row.accuracy_pct - 85.2).abs() <= 3.0,
        "species accuracy {:.2}% outside 85.2 +/- 3",
        all_row.accuracy_pct
    );
    assert!(
        (all_row.mean_probability - 0.82).abs() <= 0.05,
        "mean probability {:.3} outside 0.82 +/- 0.05",
        all_row.mean_probability
    );
    report(
        "reference library integration",
        &format!(
            "accuracy {:.2}% mean prob {:.3}",
            all_row.accuracy_pct, all_row.mean_probability
        ),
        started,
    );
}

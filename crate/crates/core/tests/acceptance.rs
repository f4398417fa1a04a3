//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use pcconf_core::confnet::{loss, loss_gradient, ConfidenceModel};
use pcconf_core::embedsim::{generate_world, QualityDistribution, WorldConfig};
use pcconf_core::linalg::largest_principal_angle;
use pcconf_core::metrics::{
    error_vs_reject, roc_summary, sample_protocol_pairs, score_protocol, tar_at_far, ErrorRejectCurve,
    DEFAULT_FAR_TARGETS,
};
use pcconf_core::pairgen::{fit_recognizer, FoldRecords};
use pcconf_core::pipeline::{
    eval_covariate, eval_fusion, evaluation_recognizer, holdout_records, pairscore, run_all, simulate, train_model,
    RunConfig,
};
use pcconf_core::rng::stream;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(limit_secs: u64, elapsed: Duration) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn loss_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(1, "acceptance-loss");
    let (mut asym, mut zero_mismatch, mut worst) = (0, 0, 0.0_f64);
    let h = 1e-6;
    for i in 0..10_000 {
        let s1: f64 = rng.random_range(1e-3..1.0 - 1e-3);
        let s2: f64 = rng.random_range(1e-3..1.0 - 1e-3);
        // every fourth target sits exactly on the minimum
        let y = if i % 4 == 0 { s1.min(s2) } else { rng.random_range(0.0..=1.0) };
        let l = loss(s1, s2, y);
        if l != loss(s2, s1, y) {
            asym += 1;
        }
        if (l == 0.0) != ((s1.min(s2) - y).abs() < 1e-12) {
            zero_mismatch += 1;
        }
        if (s1 - s2).abs() > 10.0 * h {
            let (g1, g2) = loss_gradient(s1, s2, y);
            let n1 = (loss(s1 + h, s2, y) - loss(s1 - h, s2, y)) / (2.0 * h);
            let n2 = (loss(s1, s2 + h, y) - loss(s1, s2 - h, y)) / (2.0 * h);
            worst = worst.max(rel_err(g1, n1)).max(rel_err(g2, n2));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        asym == 0 && zero_mismatch == 0 && worst < 1e-5 && within(5, elapsed),
        format!("asymmetric {asym}, zero mismatches {zero_mismatch}, max gradient rel err {worst:.2e}, {elapsed:.2?}"),
    )
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn backprop_check() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(2, "acceptance-backprop");
    let h = 1e-6;
    let (mut pairs, mut worst) = (0, 0.0_f64);
    while pairs < 100 {
        let mut model = ConfidenceModel::zeros(&[4, 3, 3, 1]).unwrap();
        let theta = random_vec(&mut rng, model.num_parameters());
        model.set_parameters(&theta).unwrap();
        let (x1, x2) = (random_vec(&mut rng, 4), random_vec(&mut rng, 4));
        let y = rng.random_range(0.0..1.0);
        let (s1, s2) = (model.forward(&x1).unwrap(), model.forward(&x2).unwrap());
        if (s1 - s2).abs() < 1e-4 {
            continue;
        }
        let (_, grad) = model.backward(&x1, &x2, y).unwrap();
        let mut probe = model.clone();
        let mut at = |t: &[f64]| {
            probe.set_parameters(t).unwrap();
            loss(probe.forward(&x1).unwrap(), probe.forward(&x2).unwrap(), y)
        };
        for (i, g) in grad.flatten().iter().enumerate() {
            let mut t = theta.clone();
            t[i] += h;
            let up = at(&t);
            t[i] = theta[i] - h;
            let numeric = (up - at(&t)) / (2.0 * h);
            worst = worst.max(rel_err(*g, numeric));
        }
        pairs += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && within(10, elapsed),
        format!("{pairs} pairs, max rel err {worst:.2e}, {elapsed:.2?}"),
    )
}

/// Every candidate threshold is tried; the smallest one whose false accepts
/// stay within the target wins.
fn sweep(genuine: &[f64], impostor: &[f64], far: f64) -> (f64, f64, f64) {
    let above = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x > t).count() as f64;
    let n = impostor.len() as f64;
    let best = std::iter::once(f64::NEG_INFINITY)
        .chain(impostor.iter().cloned())
        .filter(|&t| above(impostor, t) <= far * n + 1e-9)
        .fold(f64::INFINITY, f64::min);
    (best, above(impostor, best) / n, above(genuine, best) / genuine.len() as f64)
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(3, "acceptance-metrics");
    let (mut mismatches, mut non_monotone) = (0, 0);
    for _ in 0..200 {
        let ng = rng.random_range(1..=1000);
        let ni = rng.random_range(1..=1000);
        // coarse values so ties are frequent
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0..200) as f64 / 100.0).collect() };
        let genuine = draw(ng);
        let impostor = draw(ni);
        let mut targets = DEFAULT_FAR_TARGETS.to_vec();
        targets.extend([0.0, 0.1, 0.5, 1.0, rng.random_range(0.0..1.0)]);
        for far in targets {
            let p = tar_at_far(&genuine, &impostor, far).unwrap();
            if (p.threshold, p.achieved_far, p.tar) != sweep(&genuine, &impostor, far) {
                mismatches += 1;
            }
        }
        let s = roc_summary(&genuine, &impostor, &DEFAULT_FAR_TARGETS).unwrap();
        if s.points.windows(2).any(|w| w[0].tar > w[1].tar) {
            non_monotone += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && non_monotone == 0 && within(10, elapsed),
        format!("200 instances, {mismatches} oracle mismatches, {non_monotone} non-monotone summaries, {elapsed:.2?}"),
    )
}

/// Decreases of the TAR series along r and the largest one.
fn decreases(series: &[f64]) -> (usize, f64) {
    let drops: Vec<f64> = series.windows(2).map(|w| w[0] - w[1]).filter(|d| *d > 0.0).collect();
    (drops.len(), drops.iter().cloned().fold(0.0, f64::max))
}

fn tar_series(curve: &ErrorRejectCurve, far: f64) -> Vec<f64> {
    curve.tar_series(far).into_iter().map(|t| t.unwrap_or(f64::NAN)).collect()
}

struct Shared {
    oracle_gain: f64,
}

fn oracle_rejection(config: &RunConfig) -> (Outcome, Shared) {
    let start = Instant::now();
    let world = simulate(config).unwrap();
    let recognizer = evaluation_recognizer(config, &world.records).unwrap();
    let holdout = holdout_records(config, &world.records);
    let pairs = sample_protocol_pairs(&holdout, &config.protocol_config()).unwrap();
    let quality: Vec<f64> = holdout.iter().map(|r| r.quality).collect();
    let scored = score_protocol(&holdout, &pairs, &recognizer, &quality).unwrap();
    let curve = error_vs_reject(&scored, &config.eval.r_grid(), &[1e-2]).unwrap();
    let elapsed = start.elapsed();

    let series = tar_series(&curve, 1e-2);
    let (at0, at3) = (curve.tar(0.0, 1e-2).unwrap(), curve.tar(0.3, 1e-2).unwrap());
    let (n_drops, max_drop) = decreases(&series);
    let pass = at3 > at0 && n_drops <= 2 && max_drop <= 0.005 && within(60, elapsed);
    (
        outcome(
            pass,
            format!("TAR@1e-2 {at0:.4} at r=0, {at3:.4} at r=0.3; {n_drops} decreases (max {max_drop:.4}); {elapsed:.2?}"),
        ),
        Shared {
            oracle_gain: at3 - at0,
        },
    )
}

struct Trained {
    c5: Outcome,
    c6: Outcome,
    c7: Outcome,
}

fn trained_criteria(config: &RunConfig, shared: &Shared) -> Trained {
    let start = Instant::now();
    let world = simulate(config).unwrap();
    let (_, pairs) = pairscore(config, &world.records).unwrap();
    let (model, _) = train_model(config, &world.records, &pairs).unwrap();
    let recognizer = evaluation_recognizer(config, &world.records).unwrap();
    let run = eval_covariate(config, &world.records, &recognizer, &model).unwrap();
    let elapsed = start.elapsed();

    let eval = &run.eval;
    let (at0, at3) = (eval.learned.tar(0.0, 1e-2).unwrap(), eval.learned.tar(0.3, 1e-2).unwrap());
    let gain = at3 - at0;
    let c5 = outcome(
        eval.spearman_quality >= 0.8 && gain >= 0.5 * shared.oracle_gain && within(300, elapsed),
        format!(
            "Spearman {:.4} over {} records; TAR@1e-2 gain {gain:.4} vs oracle gain {:.4}; {elapsed:.2?}",
            eval.spearman_quality, eval.n_records, shared.oracle_gain
        ),
    );

    let violations = eval.bins.monotone_violations();
    let occupied = eval.bins.occupied().count();
    let c7 = outcome(
        violations <= 5,
        format!("{violations} decreases across {occupied} occupied bins (allowed 5)"),
    );

    let start = Instant::now();
    let fusion = eval_fusion(config, &world, &recognizer, &model).unwrap().eval;
    let elapsed = start.elapsed();
    let tar = |s: &pcconf_core::metrics::RocSummary| s.tar_at(1e-3).unwrap();
    let (uniform, learned, oracle) = (tar(&fusion.uniform), tar(&fusion.learned), tar(&fusion.oracle));
    let c6 = outcome(
        learned >= uniform && oracle > uniform && within(60, elapsed),
        format!(
            "TAR@1e-3 uniform {uniform:.4}, learned {learned:.4}, oracle {oracle:.4} over {} sets; {elapsed:.2?}",
            fusion.n_sets
        ),
    );
    Trained { c5, c6, c7 }
}

fn subspace_recovery() -> Outcome {
    let start = Instant::now();
    let world = generate_world(&WorldConfig {
        num_identities: 50,
        images_per_identity: 3,
        quality: QualityDistribution::Fixed(1.0),
        degradation_probability: 0.0,
        ..WorldConfig::default()
    })
    .unwrap();
    let fold = FoldRecords {
        fold: 0,
        records: world.records.iter().collect(),
    };
    let recognizer = fit_recognizer(&fold, 8).unwrap();

    let d = world.config.ambient_dim;
    let mut moment = DMatrix::<f64>::zeros(d, d);
    for r in &world.records {
        let e = DVector::from_column_slice(&r.embedding);
        moment += &e * e.transpose();
    }
    moment /= world.records.len() as f64;
    let eig = moment.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let dense = DMatrix::from_fn(d, 8, |i, j| eig.eigenvectors[(i, order[j])]);

    let to_truth = largest_principal_angle(&world.basis, &recognizer.basis);
    let to_dense = largest_principal_angle(&dense, &recognizer.basis);
    let elapsed = start.elapsed();
    outcome(
        to_truth < 1e-6 && to_dense < 1e-6 && within(5, elapsed),
        format!("angle to true subspace {to_truth:.2e}, to dense eigenvectors {to_dense:.2e}, {elapsed:.2?}"),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read(&path).unwrap())
        })
        .collect()
}

fn determinism(config: &RunConfig) -> Outcome {
    let start = Instant::now();
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_all(config, dir.path())).unwrap();
        read_tree(dir.path())
    };
    let one = run(1);
    let eight = run(8);
    let differing: Vec<&String> = one
        .keys()
        .chain(eight.keys())
        .filter(|k| one.get(*k) != eight.get(*k))
        .collect();
    let elapsed = start.elapsed();
    outcome(
        differing.is_empty() && !one.is_empty(),
        format!("{} artifacts compared at 1 and 8 threads, {} differ {differing:?}; {elapsed:.2?}", one.len(), differing.len()),
    )
}

fn main() {
    let config = RunConfig::default();
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut report = |n: u8, name: &'static str, o: Outcome| {
        println!("criterion {n} ({name}): {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "loss correctness", loss_properties());
    report(2, "backprop correctness", backprop_check());
    report(3, "metric oracle equivalence", metric_oracle());
    let (c4, shared) = oracle_rejection(&config);
    report(4, "rejection efficacy", c4);
    let trained = trained_criteria(&config, &shared);
    report(5, "learned confidence quality", trained.c5);
    report(6, "fusion direction", trained.c6);
    report(7, "correlation trend", trained.c7);
    report(8, "subspace estimation", subspace_recovery());
    report(9, "determinism", determinism(&config));

    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}

//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::time::{Duration, Instant};

use clm::corpus::Vocab;
use clm::diagnostics::{random_params, random_sentence};
use clm::eval::{evaluate, EnergyScaled, EvalConfig};
use clm::oracle::brute_force_log_score;
use clm::synthetic::SyntheticLanguage;
use clm::training::finite_diff::{central_difference, DEFAULT_STEP};
use clm::training::{
    direct_gradient, em_gradient, q_objective, sentence_nll, train, write_checkpoint, TrainConfig,
    TrainOutcome,
};
use clm::tree::{catalan, enumerate_trees};
use clm::{Chart, ModelParams, RuleKind, Sentence};

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(id: usize, name: &'static str, passed: bool, detail: String) -> Outcome {
    println!(
        "[{}] criterion {id:>2}: {name} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

fn seed_for(seed: u64, n: usize, d: usize) -> u64 {
    seed * 1_000 + (n as u64) * 10 + d as u64
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        for d in [1, 2, 5] {
            for n in 1..=8 {
                let p = random_params(7, d, 1.0, seed_for(seed, n, d));
                let s = random_sentence(7, n, seed_for(seed, n, d) + 7);
                let dp = Chart::inside(&p, &s).unwrap().sentence_log_score();
                let bf = brute_force_log_score(&p, &s).unwrap();
                worst = worst.max((dp - bf).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "inside equals brute-force marginal",
        worst < 1e-8 && elapsed < Duration::from_secs(30),
        format!(
            "max |diff| = {worst:.2e}, tol 1e-8, {:.2}s of 30s",
            elapsed.as_secs_f64()
        ),
    )
}

fn chart_identities() -> Outcome {
    let mut leaf: f64 = 0.0;
    let mut mass: f64 = 0.0;
    for seed in 0..20u64 {
        for d in [1, 2, 5] {
            for n in 1..=8 {
                let p = random_params(7, d, 1.0, seed_for(seed, n, d));
                let s = random_sentence(7, n, seed_for(seed, n, d) + 7);
                let c = Chart::full(&p, &s).unwrap();
                let total = c.sentence_log_score();
                for k in 0..n {
                    let v = c.inside_log(k, k).unwrap() + c.outside_log(k, k).unwrap();
                    leaf = leaf.max((v - total).abs());
                }
                let binary: f64 = c
                    .rule_posteriors()
                    .unwrap()
                    .iter()
                    .filter(|r| r.kind != RuleKind::Leaf)
                    .map(|r| r.weight)
                    .sum();
                mass = mass.max((binary - (n as f64 - 1.0)).abs());
            }
        }
    }
    report(
        2,
        "leaf identity and posterior mass",
        leaf < 1e-8 && mass < 1e-8,
        format!("leaf {leaf:.2e}, mass {mass:.2e}, tol 1e-8"),
    )
}

fn tree_counts() -> Outcome {
    let mut ok = true;
    for n in 1..=12usize {
        let count = enumerate_trees(n).unwrap().len() as u64;
        ok &= count == catalan(n as u64 - 1);
    }
    report(
        3,
        "tree enumeration counts",
        ok,
        "n = 1..12 against Catalan(n-1)".into(),
    )
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut em_worst: f64 = 0.0;
    let mut direct_worst: f64 = 0.0;
    for seed in 0..10u64 {
        for d in [1, 3, 5] {
            for n in 1..=6 {
                let p = random_params(6, d, 1.0, seed_for(seed, n, d) + 99);
                let s = random_sentence(6, n, seed_for(seed, n, d) + 55);

                let analytic = em_gradient(&p, &s).unwrap();
                let fd = central_difference(&p, DEFAULT_STEP, |q| q_objective(&p, q, &s).unwrap());
                em_worst = em_worst.max(analytic.max_relative_error(&fd));

                let analytic = direct_gradient(&p, &s).unwrap();
                let fd = central_difference(&p, DEFAULT_STEP, |q| sentence_nll(q, &s).unwrap());
                direct_worst = direct_worst.max(analytic.max_relative_error(&fd));
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        4,
        "EM and direct gradients against central differences",
        em_worst < 1e-4 && direct_worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "em {em_worst:.2e}, direct {direct_worst:.2e}, tol 1e-4, {:.2}s of 60s",
            elapsed.as_secs_f64()
        ),
    )
}

fn closed_forms() -> Outcome {
    let mut count_err: f64 = 0.0;
    for n in 1..=10 {
        let mut p = random_params(5, 3, 1.0, n as u64);
        p.u.fill(0.0);
        p.theta = 1.0;
        let s = random_sentence(5, n, 3 + n as u64);
        let got = Chart::inside(&p, &s).unwrap().sentence_log_score();
        count_err = count_err.max((got - (catalan(n as u64 - 1) as f64).ln()).abs());
    }

    // Identical words and a composition matrix with equal halves make the two
    // bracketings of a three-word sentence indistinguishable.
    let mut split_err: f64 = 0.0;
    for seed in 0..5 {
        let mut p = random_params(4, 3, 1.0, 40 + seed);
        let left = p.w.slice(ndarray::s![.., ..3]).to_owned();
        p.w.slice_mut(ndarray::s![.., 3..]).assign(&left);
        let s = Sentence::new(vec![2, 2, 2]).unwrap();
        let c = Chart::full(&p, &s).unwrap();
        for r in c.rule_posteriors().unwrap() {
            if r.span == (0, 2) {
                split_err = split_err.max((r.weight - 0.5).abs());
            }
        }
    }
    report(
        5,
        "closed forms: ln Catalan and symmetric split",
        count_err < 1e-10 && split_err < 1e-10,
        format!("catalan {count_err:.2e}, split {split_err:.2e}, tol 1e-10"),
    )
}

struct Setup {
    vocab: Vocab,
    train: Vec<Sentence>,
    heldout: Vec<Sentence>,
    config: TrainConfig,
}

fn setup() -> Setup {
    let lang = SyntheticLanguage::new(50, 2024);
    let train_lines = lang.sample(200, 3, 10, 1);
    let heldout_lines = lang.sample(100, 3, 10, 2);
    let vocab = Vocab::build(&train_lines, 1).unwrap();
    let encode = |lines: &[String]| lines.iter().map(|l| vocab.encode(l).unwrap()).collect();
    let train = encode(&train_lines);
    let heldout = encode(&heldout_lines);
    let config = TrainConfig {
        d: 10,
        epochs: 5,
        seed: 7,
        ..TrainConfig::default()
    };
    Setup {
        vocab,
        train,
        heldout,
        config,
    }
}

fn training_smoke(setup: &Setup) -> (Outcome, TrainOutcome) {
    let start = Instant::now();
    let out = train(&setup.config, &setup.train, setup.vocab.len()).unwrap();
    let elapsed = start.elapsed();
    let objectives: Vec<f64> = out.log.iter().map(|r| r.objective).collect();
    let decreases = objectives.windows(2).filter(|w| w[1] < w[0]).count();
    let outcome = report(
        6,
        "training objective decreases",
        decreases >= 4 && elapsed < Duration::from_secs(300),
        format!(
            "{decreases}/5 epochs decreased, objectives {:?}, {:.1}s of 300s",
            objectives
                .iter()
                .map(|o| format!("{o:.1}"))
                .collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
    (outcome, out)
}

fn eval_config() -> EvalConfig {
    EvalConfig {
        levels: vec![0.0, 0.1, 0.2, 0.4],
        baseline_level: 0.1,
        runs: 10,
        seed: 11,
        workers: 1,
    }
}

fn contrastive_trend(setup: &Setup, model: &ModelParams) -> Outcome {
    let r = evaluate(model, &setup.heldout, &setup.vocab, &eval_config()).unwrap();
    let increasing = r.h_c.windows(2).skip(1).all(|w| w[1] > w[0]);
    report(
        7,
        "contrastive entropy increases with distortion",
        r.h_c[0] == 0.0 && increasing,
        format!(
            "H_C(0) = {}, H_C(10/20/40%) = {:.3}/{:.3}/{:.3} bits",
            r.h_c[0], r.h_c[1], r.h_c[2], r.h_c[3]
        ),
    )
}

fn metric_algebra(setup: &Setup, model: &ModelParams) -> Outcome {
    let cfg = EvalConfig {
        levels: vec![0.1, 0.2, 0.4],
        runs: 3,
        ..eval_config()
    };
    let base = evaluate(model, &setup.heldout, &setup.vocab, &cfg).unwrap();
    let mut unit = base.h_cr[0] == 1.0;
    let mut hc_err: f64 = 0.0;
    let mut hcr_err: f64 = 0.0;
    for c in [0.25, 3.0, 17.5] {
        let scaled = EnergyScaled {
            inner: model,
            factor: c,
        };
        let r = evaluate(&scaled, &setup.heldout, &setup.vocab, &cfg).unwrap();
        unit &= r.h_cr[0] == 1.0;
        for (a, b) in base.h_c.iter().zip(&r.h_c) {
            hc_err = hc_err.max(((b - c * a) / (c * a)).abs());
        }
        for (a, b) in base.h_cr.iter().zip(&r.h_cr) {
            hcr_err = hcr_err.max(((b - a) / a).abs());
        }
    }
    report(
        8,
        "metric algebra under energy scaling",
        unit && hc_err < 1e-10 && hcr_err < 1e-10,
        format!("H_CR(base)=1: {unit}, H_C rel {hc_err:.2e}, H_CR rel {hcr_err:.2e}, tol 1e-10"),
    )
}

fn determinism(setup: &Setup, first: &TrainOutcome) -> Outcome {
    let second = train(&setup.config, &setup.train, setup.vocab.len()).unwrap();
    let fp = setup.vocab.fingerprint();
    let a = write_checkpoint(&first.params, &first.state, setup.config.epochs, &fp);
    let b = write_checkpoint(&second.params, &second.state, setup.config.epochs, &fp);
    let cfg = EvalConfig {
        runs: 2,
        ..eval_config()
    };
    let csv_a = evaluate(&first.params, &setup.heldout, &setup.vocab, &cfg)
        .unwrap()
        .to_csv();
    let csv_b = evaluate(&second.params, &setup.heldout, &setup.vocab, &cfg)
        .unwrap()
        .to_csv();
    report(
        9,
        "byte-identical checkpoints and CSVs",
        a == b && csv_a == csv_b,
        format!("checkpoint {} bytes, csv {} bytes", a.len(), csv_a.len()),
    )
}

fn median_time(n: usize, d: usize) -> Duration {
    let p = random_params(20, d, 0.5, 3);
    let s = random_sentence(20, n, 4);
    let mut times: Vec<Duration> = (0..5)
        .map(|_| {
            let t = Instant::now();
            let c = Chart::full(&p, &s).unwrap();
            std::hint::black_box(c.sentence_log_score());
            t.elapsed()
        })
        .collect();
    times.sort();
    times[2]
}

fn complexity_guard() -> Outcome {
    let d = 10;
    median_time(16, d);
    let t16 = median_time(16, d);
    let t32 = median_time(32, d);
    let ratio = t32.as_secs_f64() / t16.as_secs_f64();
    report(
        10,
        "inside+outside scaling n=16 -> 32",
        ratio <= 10.0,
        format!(
            "median {:.3}ms -> {:.3}ms, ratio {ratio:.2} (limit 10)",
            t16.as_secs_f64() * 1e3,
            t32.as_secs_f64() * 1e3
        ),
    )
}

fn main() {
    let mut results = vec![
        oracle_equivalence(),
        chart_identities(),
        tree_counts(),
        gradient_checks(),
        closed_forms(),
    ];
    let s = setup();
    let (smoke, trained) = training_smoke(&s);
    results.push(smoke);
    results.push(contrastive_trend(&s, &trained.params));
    results.push(metric_algebra(&s, &trained.params));
    results.push(determinism(&s, &trained));
    results.push(complexity_guard());

    let failed: Vec<&Outcome> = results.iter().filter(|o| !o.passed).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        for f in failed {
            eprintln!("failed criterion {}: {} ({})", f.id, f.name, f.detail);
        }
        std::process::exit(1);
    }
}

//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use fuzzcoh::evaluation::{rand_index, simulation_accuracy};
use fuzzcoh::fcm::{fcm_fit, fit_from_centers_observed, kmeanspp_centers, FcmParams};
use fuzzcoh::kencoh::{constraints, extract_features, solve_canonical, ExtractOptions};
use fuzzcoh::kendall::{dependence_set, kendall_counts, DependenceEstimator};
use fuzzcoh::pipeline::{InputSource, ReproduceOptions};
use fuzzcoh::seed::{derive_seed, rng_from};
use fuzzcoh::simgen::{gen_ar2, Ar2Damping};
use fuzzcoh::validity::{fsi, grid_search, DEFAULT_C_GRID, DEFAULT_M_GRID};
use fuzzcoh::{contaminate, gen_dataset, reproduce_sim, run_pipeline, NoiseFamily, PipelineConfig, SimConfig};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn kendall_oracle() -> Outcome {
    let mut r = rng(101);
    let mut cases = Vec::new();
    for i in 0..1000 {
        let n = r.random_range(2..=200);
        let (x, y) = if i % 2 == 0 {
            (tied_series(&mut r, n, 5), tied_series(&mut r, n, 8))
        } else {
            let mut x = gaussian(&mut r, n);
            let mut y = gaussian(&mut r, n);
            for _ in 0..n / 4 {
                let (a, b) = (r.random_range(0..n), r.random_range(0..n));
                x[a] = x[b];
                y[b] = y[a];
            }
            (x, y)
        };
        cases.push((x, y));
    }
    let start = Instant::now();
    let fast: Vec<_> = cases.iter().map(|(x, y)| kendall_counts(x, y).unwrap()).collect();
    let elapsed = start.elapsed();
    let mut mismatches = 0;
    for ((x, y), c) in cases.iter().zip(&fast) {
        let n = x.len() as u64;
        let excess = brute_kendall_excess(x, y);
        let tau = excess as f64 / (n * (n - 1) / 2) as f64;
        let constant = x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]);
        if c.concordance_excess != excess || c.tau() != tau || c.degenerate != constant {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("1000 series, {mismatches} mismatches, fast path {}", secs(elapsed)),
    )
}

fn canonical_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_res = 0.0f64;
    let mut solve_time = Duration::ZERO;
    for seed in 0..200 {
        let dep = dependence_set(&random_block(1000 + seed, 128, 2, 2), 5).unwrap();
        let t = Instant::now();
        let f = solve_canonical(&dep).unwrap();
        solve_time += t.elapsed();
        let c = constraints(&dep).unwrap();
        let grid = grid_canonical_2x2(&dep, &c.xx, &c.yy, 180);
        worst_gap = worst_gap.max(grid - f.g_value);
        let u = DVector::from_vec(f.u.clone());
        let v = DVector::from_vec(f.v.clone());
        worst_res = worst_res
            .max((u.dot(&(&c.xx * &u)) - 1.0).abs())
            .max((v.dot(&(&c.yy * &v)) - 1.0).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_gap <= 1e-6 && worst_res <= 1e-8 && elapsed < Duration::from_secs(30),
        format!(
            "200 instances, max(grid - g) = {worst_gap:.2e}, max residual = {worst_res:.2e}, solver {}, total {}",
            secs(solve_time),
            secs(elapsed)
        ),
    )
}

fn fcm_contract() -> Outcome {
    let mut r = rng(303);
    let mut worst_row = 0.0f64;
    let mut worst_rise = f64::NEG_INFINITY;
    for set in 0..500u64 {
        let n = r.random_range(6..60);
        let dim = r.random_range(1..8);
        let c = r.random_range(2..6).min(n - 1);
        let m = r.random_range(1.1..3.0);
        let x: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut r, dim)).collect();
        let params = FcmParams::new(c, m, set);
        let fit = fit_from_centers_observed(&x, kmeanspp_centers(&x, c, set), &params, |_, e| {
            for row in e {
                worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        })
        .unwrap();
        for w in fit.objective_trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    outcome(
        worst_row <= 1e-10 && worst_rise <= 1e-12,
        format!("500 sets, max |row sum - 1| = {worst_row:.2e}, max objective rise = {worst_rise:.2e}"),
    )
}

fn two_blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let (sigma, gap) = (0.01, 1.0);
    let mut x = Vec::new();
    let mut lab = Vec::new();
    for c in 0..2 {
        for _ in 0..25 {
            let mut v: Vec<f64> = gaussian(&mut r, 8).into_iter().map(|e| e * sigma).collect();
            v[0] += gap * c as f64;
            x.push(v);
            lab.push(c);
        }
    }
    (x, lab)
}

fn fsi_sanity() -> Outcome {
    let (x, lab) = two_blobs(404);
    let crisp: Vec<Vec<f64>> = lab.iter().map(|&l| if l == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    let uniform = vec![vec![0.5, 0.5]; x.len()];
    let s_crisp = fsi(&x, &crisp, 2.0).unwrap().fsi;
    let s_uniform = fsi(&x, &uniform, 2.0).unwrap().fsi;
    let mut wrong = Vec::new();
    for &m in DEFAULT_M_GRID.iter() {
        let g = grid_search(&x, &DEFAULT_C_GRID, &[m], 4).unwrap();
        if g.report.selected.c != 2 {
            wrong.push(m);
        }
    }
    outcome(
        s_crisp >= 0.9 && s_crisp > s_uniform && wrong.is_empty(),
        format!("FSI crisp {s_crisp:.4}, uniform {s_uniform:.4}, m values not selecting C=2: {wrong:?}"),
    )
}

fn rand_index_oracle() -> Outcome {
    let mut r = rng(505);
    let (mut mismatches, mut variant) = (0, 0);
    for _ in 0..500 {
        let b = r.random_range(2..=50);
        let ka = r.random_range(1..6);
        let kb = r.random_range(1..6);
        let a: Vec<usize> = (0..b).map(|_| r.random_range(0..ka)).collect();
        let t: Vec<usize> = (0..b).map(|_| r.random_range(0..kb)).collect();
        let ri = rand_index(&a, &t).unwrap();
        if ri != brute_rand_index(&a, &t) {
            mismatches += 1;
        }
        let mut perm: Vec<usize> = (0..ka).collect();
        perm.shuffle(&mut r);
        let pa: Vec<usize> = a.iter().map(|&v| perm[v]).collect();
        if rand_index(&pa, &t).unwrap() != ri || rand_index(&t, &a).unwrap() != ri {
            variant += 1;
        }
    }
    outcome(
        mismatches == 0 && variant == 0,
        format!("500 partitions, {mismatches} oracle mismatches, {variant} permutation failures"),
    )
}

fn spectral_fidelity() -> Outcome {
    let mut misses = Vec::new();
    for f in [2.0, 6.0, 10.0, 20.0, 40.0] {
        for seed in 0..10 {
            let x = gen_ar2(&mut rng_from(seed), 4096, f, 128.0, 1.05, Ar2Damping::RootModulus);
            let peak = periodogram_peak_hz(&x, 128.0, 0);
            if (peak - f).abs() > 1.0 {
                misses.push(format!("{f} Hz seed {seed} peak {peak:.3}"));
            }
        }
    }
    let detail = if misses.is_empty() {
        "50 series, all raw periodogram peaks within 1 Hz".to_string()
    } else {
        format!("{} of 50 raw periodogram peaks off target: {}", misses.len(), misses.join("; "))
    };
    outcome(misses.is_empty(), detail)
}

fn m_index(m: f64) -> usize {
    DEFAULT_M_GRID.iter().position(|&v| v == m).unwrap()
}

fn example_one() -> Outcome {
    let start = Instant::now();
    let opts = ReproduceOptions {
        estimators: vec![DependenceEstimator::Kendall],
        ..ReproduceOptions::new(1, 0.2, 10, 7)
    };
    let res = single_threaded(|| reproduce_sim(&opts)).unwrap();
    let elapsed = start.elapsed();
    let acc = res.mean_accuracy(DependenceEstimator::Kendall, m_index(1.5));
    let scores = &res.scores[0][m_index(2.0)];
    let flag = scores.iter().map(|s| s.switching_flag_rate).sum::<f64>() / scores.len() as f64;
    outcome(
        acc >= 0.85 && flag >= 0.7 && elapsed <= Duration::from_secs(300),
        format!("B=60 x 10 reps, accuracy(m=1.5) {acc:.3}, switching flagged(m=2.0) {flag:.3}, {} on one thread", secs(elapsed)),
    )
}

fn cauchy_robustness() -> Outcome {
    let opts = ReproduceOptions {
        estimators: vec![DependenceEstimator::Kendall, DependenceEstimator::Pearson],
        ..ReproduceOptions::new(3, 0.2, 10, 8)
    };
    let res = reproduce_sim(&opts).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, m) in DEFAULT_M_GRID.iter().enumerate() {
        let ken = res.mean_accuracy(DependenceEstimator::Kendall, k);
        let pea = res.mean_accuracy(DependenceEstimator::Pearson, k);
        pass &= ken - pea >= 0.1;
        parts.push(format!("m={m}: {ken:.3} vs {pea:.3}"));
    }
    outcome(pass, format!("kendall vs pearson accuracy, {}", parts.join(", ")))
}

fn contamination_stability() -> Outcome {
    let channels = [1, 4, 6];
    let mut shift = [0.0f64; 2];
    let mut drop = [0.0f64; 2];
    let seeds = 50;
    let estimators = [DependenceEstimator::Kendall, DependenceEstimator::Pearson];
    for s in 0..seeds {
        let cfg = SimConfig {
            n_blocks: 60,
            seed: derive_seed(909, &[s]),
            ..SimConfig::default()
        };
        let sim = gen_dataset(&cfg).unwrap();
        let dirty = contaminate(&sim.dataset, &channels, 0.1, NoiseFamily::StudentT1, derive_seed(cfg.seed, &[9])).unwrap();
        for (e, &estimator) in estimators.iter().enumerate() {
            let opts = ExtractOptions {
                estimator,
                ..ExtractOptions::default()
            };
            let clean = extract_features(&sim.dataset, &opts).unwrap().vectors();
            let noisy = extract_features(&dirty, &opts).unwrap().vectors();
            let dist: f64 = clean
                .iter()
                .zip(&noisy)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .sum::<f64>()
                / clean.len() as f64;
            shift[e] += dist / seeds as f64;
            let fit_seed = derive_seed(cfg.seed, &[2]);
            let acc = |x: &[Vec<f64>]| {
                let part = fcm_fit(x, &FcmParams::new(2, 1.5, fit_seed)).unwrap();
                simulation_accuracy(&part.memberships, &sim.kinds, 0.7).unwrap().accuracy
            };
            drop[e] += (acc(&clean) - acc(&noisy)) / seeds as f64;
        }
    }
    outcome(
        shift[0] < shift[1] && drop[0] <= drop[1],
        format!(
            "50 seeds, mean feature shift kendall {:.4} vs pearson {:.4}, mean accuracy drop kendall {:.3} vs pearson {:.3}",
            shift[0], shift[1], drop[0], drop[1]
        ),
    )
}

fn pipeline_config(sim: SimConfig, bands: &[&str], out: &Path) -> PipelineConfig {
    let json = serde_json::json!({
        "input": InputSource::Simulation(sim),
        "bands": bands,
        "seed": 12,
        "output_dir": out,
    });
    serde_json::from_value(json).unwrap()
}

fn full_size_runtime(dir: &Path) -> Outcome {
    let cfg = pipeline_config(SimConfig::default(), &["Beta"], &dir.join("full"));
    let start = Instant::now();
    let res = run_pipeline(&cfg);
    let elapsed = start.elapsed();
    let threads = rayon::current_num_threads();
    match res {
        Ok(out) if out.errors.is_empty() => outcome(
            elapsed <= Duration::from_secs(300),
            format!(
                "B=300, T=384, 8 channels, L=5, 30-cell grid, one band: {} on {threads} thread(s)",
                secs(elapsed)
            ),
        ),
        Ok(out) => outcome(false, format!("job errors: {:?}", out.errors)),
        Err(e) => outcome(false, format!("pipeline failed: {e}")),
    }
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(dir: &Path) -> Outcome {
    let sim = SimConfig {
        n_blocks: 60,
        seed: 31,
        ..SimConfig::default()
    };
    let cfg = pipeline_config(sim, &["raw", "Alpha"], &dir.join("repeat"));
    run_pipeline(&cfg).unwrap();
    let first = tree(&cfg.output_dir);
    run_pipeline(&cfg).unwrap();
    let second = tree(&cfg.output_dir);
    let differing: Vec<String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.display().to_string())
        .collect();
    outcome(
        first.len() == second.len() && differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", first.len()),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("Kendall oracle equivalence", Box::new(kendall_oracle)),
        ("Canonical-solver oracle", Box::new(canonical_oracle)),
        ("FCM contract", Box::new(fcm_contract)),
        ("FSI sanity", Box::new(fsi_sanity)),
        ("Rand-index oracle", Box::new(rand_index_oracle)),
        ("Simulation spectral fidelity", Box::new(spectral_fidelity)),
        ("Example 1 at desk scale", Box::new(example_one)),
        ("Cauchy robustness", Box::new(cauchy_robustness)),
        ("Contamination stability", Box::new(contamination_stability)),
        ("End-to-end runtime", Box::new(|| full_size_runtime(dir.path()))),
        ("Determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

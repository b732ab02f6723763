//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion,
//! then fails if any criterion failed.

mod common;

use std::time::Instant;

use common::*;
use num_rational::Ratio;
use ptnn_core::linalg_svd::tail_energies;
use ptnn_core::metrics::ratio_to_f64;
use ptnn_core::model_store::{read_bundle, write_bundle, BundleDescriptor, Dtype};
use ptnn_core::ptnn_engine::write_jsonl;
use ptnn_core::*;
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tt_error_bound() -> Outcome {
    let epsilons = [0.1, 0.3, 0.5];
    let mut cases = Vec::new();
    for (shape, per_eps) in [
        (vec![4, 4, 4], 22),
        (vec![2, 3, 4, 5], 22),
        (vec![8, 8, 8], 22),
        (vec![24, 24, 32, 32], 2),
    ] {
        for &eps in &epsilons {
            for _ in 0..per_eps {
                cases.push((shape.clone(), eps, cases.len() as u64));
            }
        }
    }
    let ratios: Vec<f64> = cases
        .par_iter()
        .map(|(shape, eps, seed)| {
            let y = random_tensor(shape, &mut rng(1000 + seed));
            let cores = tt_svd(&y, *eps).unwrap();
            rel_err(&y, &tt_reconstruct(&cores)) / eps
        })
        .collect();
    let within = ratios.iter().filter(|&&r| r <= 1.0).count();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    outcome(
        within == cases.len() && cases.len() >= 200,
        format!(
            "{within}/{} tensors within ε, worst error/ε = {worst:.3}",
            cases.len()
        ),
    )
}

fn exact_rank_recovery() -> Outcome {
    let mut g = rng(2000);
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = g.random_range(2..=4);
        let modes: Vec<usize> = (0..d).map(|_| g.random_range(2..=8)).collect();
        let planted: Vec<usize> = (0..=d).map(|_| g.random_range(1..=4)).collect();
        let (y, ranks) = planted_tensor(&modes, &planted, &mut g);
        let cores = tt_svd(&y, 1e-10).unwrap();
        let err = rel_err(&y, &cores.reconstruct());
        worst = worst.max(err);
        if cores.ranks().iter().zip(&ranks).all(|(a, b)| a <= b) && err <= 1e-8 {
            ok += 1;
        }
    }
    outcome(
        ok == 50,
        format!("{ok}/50 planted tensors, worst relative error {worst:.2e}"),
    )
}

fn nested_sum_equivalence() -> Outcome {
    let mut g = rng(3000);
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    let sets = 40;
    for _ in 0..sets {
        let d = g.random_range(1..=4);
        let modes: Vec<usize> = (0..d).map(|_| g.random_range(1..=3)).collect();
        let mut ranks: Vec<usize> = (0..=d).map(|_| g.random_range(1..=3)).collect();
        ranks[0] = 1;
        ranks[d] = 1;
        let cores = random_cores(&modes, &ranks, &mut g);
        let tt = Cores::from_cores(cores.clone(), 0.0).unwrap();
        let a = tt_reconstruct(&tt);
        let b = nested_sum(&cores);
        let diff = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
        if a.shape() == b.shape() && diff <= 1e-12 {
            ok += 1;
        }
    }
    outcome(
        ok == sets,
        format!("{ok}/{sets} core sets, worst |Δ| = {worst:.2e}"),
    )
}

fn svd_contract() -> Outcome {
    let mut g = rng(4000);
    let mut failures = Vec::new();
    let mut check = |m: &Mat, exact_rank: Option<usize>, g: &mut rand_chacha::ChaCha8Rng| {
        let svd = full_svd(m, &SvdConfig::default()).unwrap();
        let back = matmul(&svd.u, &svd.s_vt());
        let diff =
            Mat::from_fn(m.rows(), m.cols(), |i, j| back.get(i, j) - m.get(i, j)).frobenius_norm();
        let s = &svd.singular_values;
        let mut ok = gram_defect(&svd.u) <= 1e-10
            && gram_defect(&svd.v) <= 1e-10
            && diff <= 1e-10 * m.frobenius_norm().max(1.0)
            && s.windows(2).all(|w| w[0] >= w[1]);
        if let Some(k) = exact_rank {
            ok &= s[k..].iter().all(|&x| x <= 1e-9 * s[0]);
        }
        let tails = tail_energies(s);
        for _ in 0..8 {
            let sigma = g.random_range(0.0..=1.0) * tails[0];
            let (cut, r) = truncate(svd.clone(), sigma);
            ok &= r == minimal_rank(s, sigma)
                && cut.k() == r
                && tails[r] <= sigma.max(tails[s.len()]);
        }
        if !ok {
            failures.push((m.rows(), m.cols()));
        }
    };
    for _ in 0..100 {
        let (rows, cols) = (g.random_range(1..=64), g.random_range(1..=64));
        let m = random_matrix(rows, cols, &mut g);
        check(&m, None, &mut g);
    }
    for _ in 0..20 {
        let (rows, cols) = (g.random_range(2..=64), g.random_range(2..=64));
        let k = g.random_range(1..=rows.min(cols).min(8));
        let m = matmul(
            &random_matrix(rows, k, &mut g),
            &random_matrix(k, cols, &mut g),
        );
        check(&m, Some(k), &mut g);
    }
    outcome(
        failures.is_empty(),
        format!("120 matrices (20 exact low rank), failures {failures:?}"),
    )
}

fn metrics_exactness() -> Outcome {
    let mut g = rng(5000);
    let mut ok = true;
    let mut checked = 0;
    for _ in 0..30 {
        let (rows, cols) = (g.random_range(2..=40), g.random_range(2..=40));
        let Ok(plan) = plan_shape(rows, cols, 4) else {
            continue;
        };
        let m = random_matrix(rows, cols, &mut g);
        let eps = g.random_range(0.05..0.8);
        let cores = tt_svd(&fold(&m, &plan).unwrap(), eps).unwrap();
        // count stored scalars one by one
        let mut counted = 0usize;
        for core in cores.cores() {
            counted += core.data().iter().count();
        }
        let original = rows * cols;
        let lm = layer_metrics("w", original, &cores, 0.0);
        ok &= lm.compressed_params == counted
            && lm.space_saving_exact()
                == Ratio::new(original as i128 - counted as i128, original as i128)
            && lm.compression_ratio_exact() == Ratio::new(original as i128, counted as i128)
            && lm.space_saving == ratio_to_f64(lm.space_saving_exact())
            && lm.compression_ratio == ratio_to_f64(lm.compression_ratio_exact());
        checked += 1;
    }
    let table_one =
        LayerMetrics::from_counts("e", 1000, 733, vec![1, 1], 0.0, GateDecision::Compressed);
    ok &= table_one.space_saving_exact() == Ratio::new(267, 1000);
    let plan = plan_shape(768, 768, 4).unwrap();
    let product: usize = plan.tensor_shape.iter().product();
    let best = factorizations(589_824, 4)
        .iter()
        .map(|f| spread(f))
        .fold(f64::INFINITY, f64::min);
    ok &= product == 589_824 && spread(&plan.tensor_shape) <= best;
    outcome(
        ok,
        format!(
            "{checked} checkpoints counted exactly; 768x768 -> {:?} (product {product}, spread {:.3}, best {best:.3}); 1 - 733/1000 = 267/1000; pretrained-model savings not reproducible here",
            plan.tensor_shape,
            spread(&plan.tensor_shape)
        ),
    )
}

fn gate_soundness() -> Outcome {
    let (bundle, data) = generate_toy_bundle(&ToyConfig::default()).unwrap();
    let original = evaluate(&bundle, &data).unwrap();
    let mut ok = original == 1.0;
    let mut restored = 0;
    let mut detail = Vec::new();
    for tolerance in [0.05, 0.02, 0.0] {
        let config = GateConfig {
            accuracy_drop_tolerance: tolerance,
            ..GateConfig::default()
        };
        let a = run(&bundle, &data, &config).unwrap();
        let b = run(&bundle, &data, &config).unwrap();
        ok &= write_jsonl(&a.trace.lines()) == write_jsonl(&b.trace.lines());
        ok &= a.trace.final_accuracy >= original - tolerance;
        ok &= a.trace.final_accuracy == a.trace.records.last().unwrap().post_accuracy;
        for r in &a.trace.records {
            if r.decision != GateDecision::Compressed {
                let before = bundle.get(&r.layer).unwrap();
                let after = a.bundle.get(&r.layer).unwrap();
                let same = before
                    .data()
                    .iter()
                    .zip(after.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits());
                ok &= same && r.pre_accuracy == r.post_accuracy;
                restored += 1;
            }
        }
        detail.push(format!("tol {tolerance}: final {}", a.trace.final_accuracy));
    }
    outcome(
        ok,
        format!("original {original}; {}; {restored} non-accepted layers bitwise intact; traces byte-identical", detail.join(", ")),
    )
}

fn toy_space_saving() -> Outcome {
    let config = ToyConfig::default();
    let (bundle, data) = generate_toy_bundle(&config).unwrap();
    let out = run(&bundle, &data, &GateConfig::default()).unwrap();
    let mm = model_metrics(out.trace.metrics(), bundle.total_params()).unwrap();
    let gate = out.trace.final_accuracy >= out.trace.original_accuracy - 0.05;
    outcome(
        config.noise_amplitude <= 0.05 && gate && mm.aggregate_space_saving >= 0.30,
        format!(
            "aggregate saving {:.4}, model fraction {:.4}, {} of {} layers compressed, final accuracy {}",
            mm.aggregate_space_saving,
            mm.model_memory_fraction_saved,
            mm.compressed_layer_count(),
            mm.layers.len(),
            out.trace.final_accuracy
        ),
    )
}

fn file_round_trips() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut g = rng(8000);
    let mut ok = 0;
    for case in 0..20 {
        let mut bundle = ModelBundle::new(BundleDescriptor::default());
        let n = g.random_range(1..=4);
        for t in 0..n {
            let d = g.random_range(1..=3);
            let shape: Vec<usize> = (0..d).map(|_| g.random_range(1..=6)).collect();
            bundle
                .push(format!("layer_{t}"), random_tensor(&shape, &mut g))
                .unwrap();
        }
        let bpath = dir.path().join(format!("b{case}.ptw"));
        save_bundle(&bundle, &bpath).unwrap();
        let bytes = std::fs::read(&bpath).unwrap();
        let back = load_bundle(&bpath).unwrap();
        let mut pass = back == bundle && write_bundle(&back, Dtype::F64).unwrap() == bytes;

        let (rows, cols) = (g.random_range(2..=12) * 2, g.random_range(2..=12));
        let plan = plan_shape(rows, cols, 4).unwrap();
        let cores = tt_svd(
            &fold(&random_matrix(rows, cols, &mut g), &plan).unwrap(),
            0.3,
        )
        .unwrap();
        let cpath = dir.path().join(format!("c{case}.pttt"));
        save_tt_checkpoint(&cores, &plan, &cpath).unwrap();
        let cbytes = std::fs::read(&cpath).unwrap();
        let (cback, pback) = load_tt_checkpoint(&cpath).unwrap();
        pass &= cback == cores && pback == plan;
        let r1 = cores.reconstruct();
        let r2 = cback.reconstruct();
        pass &= r1
            .data()
            .iter()
            .zip(r2.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());

        let cut = g.random_range(0..bytes.len());
        pass &= matches!(read_bundle(&bytes[..cut]), Err(Error::CorruptLength(_)));
        let cut = g.random_range(0..cbytes.len());
        std::fs::write(&cpath, &cbytes[..cut]).unwrap();
        pass &= matches!(load_tt_checkpoint(&cpath), Err(Error::CorruptLength(_)));
        let mut bad = bytes.clone();
        bad[g.random_range(0..4)] ^= 0x20;
        pass &= matches!(read_bundle(&bad), Err(Error::BadMagic { .. }));
        let mut trailing = bytes.clone();
        trailing.push(0);
        pass &= matches!(read_bundle(&trailing), Err(Error::CorruptLength(_)));
        if pass {
            ok += 1;
        }
    }
    outcome(
        ok == 20,
        format!("{ok}/20 bundle+checkpoint round trips with corrupt-file rejection"),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("tt-svd error bound", tt_error_bound),
        ("exact-rank recovery", exact_rank_recovery),
        ("reconstruction vs nested sum", nested_sum_equivalence),
        ("svd contract", svd_contract),
        ("metrics exactness", metrics_exactness),
        ("gate soundness", gate_soundness),
        ("toy space saving", toy_space_saving),
        ("file round trips", file_round_trips),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {}. {name}: {} ({:.1}s)",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

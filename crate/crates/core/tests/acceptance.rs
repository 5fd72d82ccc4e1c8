//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! `cargo test --test acceptance -- 3 5` runs only criteria 3 and 5.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use dcck::config::RunConfig;
use dcck::data::{LabeledDataset, DATA_DIR_ENV};
use dcck::kmeans::{kmeans, KMeansConfig};
use dcck::layers::*;
use dcck::surgery::{merge_layer, split_layer, MergeConfig, SplitConfig, SplitMode, SurgeryKind, WeightVariant};
use dcck::trainer::{evaluate, forward_timings, median, FinetuneConfig, Trainer, TrainerConfig};
use dcck::Tensor;
use rand::Rng;
use sha2::{Digest, Sha256};

type Check = std::result::Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Check {
    let spent = start.elapsed();
    ensure(spent < limit, format!("{detail}; {:.1}s of {}s allowed", spent.as_secs_f64(), limit.as_secs()))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> std::result::Result<RunConfig, String> {
    RunConfig::from_file(&workspace().join("configs").join(name)).map_err(|e| e.to_string())
}

// 1 -----------------------------------------------------------------------

const H: f32 = 1e-2;
const FLOOR: f64 = 1e-3;

fn gradients() -> Check {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = Vec::new();
    let instances = 20;

    let mut e = 0.0f64;
    for _ in 0..instances {
        let (b, d, n, k) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..5), r.random_range(1..5));
        let (h, w) = (k + r.random_range(0..4), k + r.random_range(0..4));
        let x = uniform(&mut r, &[b, d, h, w], -1.0, 1.0);
        let p = ConvLayerParams::new(uniform(&mut r, &[n, d, k, k], -1.0, 1.0), uniform(&mut r, &[n], -1.0, 1.0)).unwrap();
        let probe = uniform(&mut r, &[b, n, h - k + 1, w - k + 1], -1.0, 1.0);
        let g = conv_backward(&x, &p, &probe).unwrap();
        e = e.max(max_grad_error(&x, &g.grad_x, H, FLOOR, |x| dot(&conv_forward(x, &p).unwrap(), &probe)));
        e = e.max(max_grad_error(p.weights(), &g.grad_w, H, FLOOR, |w| {
            dot(&conv_forward(&x, &ConvLayerParams::new(w.clone(), p.biases().clone()).unwrap()).unwrap(), &probe)
        }));
        e = e.max(max_grad_error(p.biases(), &g.grad_b, H, FLOOR, |bias| {
            dot(&conv_forward(&x, &ConvLayerParams::new(p.weights().clone(), bias.clone()).unwrap()).unwrap(), &probe)
        }));
    }
    worst.push(("conv", e));

    let mut e = 0.0f64;
    for _ in 0..instances {
        let (b, i, o) = (r.random_range(1..4), r.random_range(1..16), r.random_range(1..10));
        let x = uniform(&mut r, &[b, i], -1.0, 1.0);
        let p = FcLayerParams::new(uniform(&mut r, &[o, i], -1.0, 1.0), uniform(&mut r, &[o], -1.0, 1.0)).unwrap();
        let probe = uniform(&mut r, &[b, o], -1.0, 1.0);
        let g = fc_backward(&x, &p, &probe).unwrap();
        e = e.max(max_grad_error(&x, &g.grad_x, H, FLOOR, |x| dot(&fc_forward(x, &p).unwrap(), &probe)));
        e = e.max(max_grad_error(p.weights(), &g.grad_w, H, FLOOR, |w| {
            dot(&fc_forward(&x, &FcLayerParams::new(w.clone(), p.biases().clone()).unwrap()).unwrap(), &probe)
        }));
        e = e.max(max_grad_error(p.biases(), &g.grad_b, H, FLOOR, |bias| {
            dot(&fc_forward(&x, &FcLayerParams::new(p.weights().clone(), bias.clone()).unwrap()).unwrap(), &probe)
        }));
    }
    worst.push(("fc", e));

    let mut e = 0.0f64;
    for _ in 0..instances {
        let shape = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..7), r.random_range(1..7)];
        let x = away_from_zero(&mut r, &shape, 0.05);
        let probe = uniform(&mut r, &shape, -1.0, 1.0);
        let g = relu_backward(&x, &probe).unwrap();
        e = e.max(max_grad_error(&x, &g, H, FLOOR, |x| dot(&relu_forward(x), &probe)));
    }
    worst.push(("relu", e));

    let mut e = 0.0f64;
    for _ in 0..instances {
        let window = r.random_range(1..4);
        let (oh, ow) = (r.random_range(1..4), r.random_range(1..4));
        let shape = [r.random_range(1..3), r.random_range(1..3), oh * window, ow * window];
        let pool = MaxPool::new(window, window).unwrap();
        let x = distinct(&mut r, &shape, 0.05);
        let (out, argmax) = maxpool_forward(&x, pool).unwrap();
        let probe = uniform(&mut r, out.shape(), -1.0, 1.0);
        let g = maxpool_backward(x.shape(), &argmax, &probe).unwrap();
        e = e.max(max_grad_error(&x, &g, H, FLOOR, |x| dot(&maxpool_forward(x, pool).unwrap().0, &probe)));
    }
    worst.push(("maxpool", e));

    // flatten has no parameters; its backward is checked through the conv weights beneath it
    let mut e = 0.0f64;
    for seed in 0..instances {
        let (d, n, k) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let side = k + r.random_range(0..3);
        let spec = [LayerSpec::Conv { kernels: n, size: k }, LayerSpec::Flatten, LayerSpec::Fc { outputs: 3 }, LayerSpec::SoftmaxXent];
        let init = InitConfig { conv_std: 0.5, fc_gain: 1.0 };
        let net = Network::from_spec([d, side, side], &spec, init, seed as u64).unwrap();
        let x = uniform(&mut r, &[2, d, side, side], -1.0, 1.0);
        let labels = vec![r.random_range(0..3), r.random_range(0..3)];
        let (_, grads) = net.loss_and_grads(&x, &labels).unwrap();
        let p = net.layers()[0].as_conv().unwrap().clone();
        e = e.max(max_grad_error(p.weights(), &grads[0].as_ref().unwrap().weights, H, FLOOR, |w| {
            let mut layers = net.layers().to_vec();
            layers[0] = Layer::Conv(ConvLayerParams::new(w.clone(), p.biases().clone()).unwrap());
            Network::new(net.input_shape(), layers).unwrap().loss_and_grads(&x, &labels).unwrap().0
        }));
    }
    worst.push(("flatten", e));

    let mut e = 0.0f64;
    for _ in 0..instances {
        let (b, c) = (r.random_range(1..5), r.random_range(2..10));
        let logits = uniform(&mut r, &[b, c], -3.0, 3.0);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
        let (_, probs) = softmax_xent_forward(&logits, &labels).unwrap();
        let g = softmax_xent_backward(&probs, &labels).unwrap();
        e = e.max(max_grad_error(&logits, &g, H, FLOOR, |z| softmax_xent_forward(z, &labels).unwrap().0));
    }
    worst.push(("softmax_xent", e));

    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    let detail = format!("{instances} instances per layer, max rel error {} (< 1e-2)", detail.join(", "));
    if max >= 1e-2 {
        return Err(detail);
    }
    within(Duration::from_secs(60), start, detail)
}

// 2 -----------------------------------------------------------------------

fn conv_oracle() -> Check {
    let mut r = rng(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (b, d, n, k) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..9), r.random_range(1..6));
        let (h, w) = (k + r.random_range(0..10), k + r.random_range(0..10));
        let x = uniform(&mut r, &[b, d, h, w], -1.0, 1.0);
        let p = ConvLayerParams::new(uniform(&mut r, &[n, d, k, k], -1.0, 1.0), uniform(&mut r, &[n], -1.0, 1.0)).unwrap();
        let got = conv_forward(&x, &p).unwrap();
        let want = naive_conv(&x, &p);
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
        let err = got.data().iter().zip(&want).map(|(&g, &o)| (g as f64 - o).abs()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    ensure(worst < 1e-5, format!("100 shapes, max relative error {worst:.2e} (< 1e-5)"))
}

// 3 -----------------------------------------------------------------------

fn relative_change(a: &Network, b: &Network, x: &Tensor) -> f32 {
    let (ya, yb) = (a.forward(x).unwrap(), b.forward(x).unwrap());
    max_abs(&ya, &yb) / scale(&ya).max(1e-12)
}

fn preservation() -> Check {
    let mut noise_worst = 0.0f32;
    let mut rotate_identical = true;
    let mut identity_exact = true;
    let mut collapse_worst = 0.0f32;
    for seed in 0..10 {
        let x = uniform(&mut rng(300 + seed), &[8, 1, 28, 28], 0.0, 1.0);
        let net = mnist_net(20, seed);
        for layer in [0, 3] {
            let mut grown = net.clone();
            let cfg = SplitConfig { sigma_noise: 0.0, sigma_angle: 0.0, mode: SplitMode::Noise, seed };
            split_layer(&mut grown, layer, &cfg).unwrap();
            noise_worst = noise_worst.max(relative_change(&net, &grown, &x));

            let mut rotated = net.clone();
            let cfg = SplitConfig { sigma_noise: 0.0, sigma_angle: 0.5, mode: SplitMode::Rotate, seed };
            split_layer(&mut rotated, layer, &cfg).unwrap();
            rotate_identical &= net.forward(&x).unwrap() == rotated.forward(&x).unwrap();

            let mut merged = net.clone();
            let n = net.layers()[layer].as_conv().unwrap().out_channels();
            merge_layer(&mut merged, layer, &MergeConfig::new(n, WeightVariant::NearestFilter, seed)).unwrap();
            identity_exact &= merged == net && merged.forward(&x).unwrap() == net.forward(&x).unwrap();
        }
        let small = small_net(4, seed);
        let dup = with_duplicate_kernels(&small, &[0, 1, 2, 3, 2, 0, 0, 1]);
        let xs = uniform(&mut rng(400 + seed), &[8, 1, 12, 12], 0.0, 1.0);
        for variant in [WeightVariant::NearestFilter, WeightVariant::Centroid] {
            let mut merged = dup.clone();
            merge_layer(&mut merged, 0, &MergeConfig::new(4, variant, seed)).unwrap();
            collapse_worst = collapse_worst.max(relative_change(&dup, &merged, &xs));
        }
    }
    let detail = format!(
        "(a) noise split {noise_worst:.1e} (< 1e-5), (b) rotation split bit-identical {rotate_identical}, \
         (c) identity merge bit-exact {identity_exact}, (d) duplicate collapse {collapse_worst:.1e} (< 1e-5)"
    );
    ensure(noise_worst < 1e-5 && rotate_identical && identity_exact && collapse_worst < 1e-5, detail)
}

// 4 -----------------------------------------------------------------------

fn random_points(r: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| r.random_range(-5.0f32..5.0) as f64).collect()).collect()
}

fn kmeans_properties() -> Check {
    let start = Instant::now();
    let mut r = rng(404);
    let mut rises = 0;
    for _ in 0..200 {
        let n = r.random_range(2..60);
        let dim = r.random_range(1..8);
        let k = r.random_range(1..=n.min(10));
        let pts = random_points(&mut r, n, dim);
        let out = kmeans(&tensor_rows(&pts), &KMeansConfig::new(k, r.random())).unwrap();
        rises += out.history.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();
    }
    let (mut matched, mut total) = (0, 0);
    for n in 1..=8 {
        for k in 1..=3.min(n) {
            for _ in 0..12 {
                let dim = r.random_range(1..4);
                let pts = random_points(&mut r, n, dim);
                let got = kmeans(&tensor_rows(&pts), &KMeansConfig::new(k, r.random())).unwrap().distortion;
                let best = brute_force_distortion(&pts, k);
                total += 1;
                matched += (got <= best * (1.0 + 1e-6) + 1e-9) as usize;
            }
        }
    }
    let detail = format!("200 instances, {rises} distortion increases; brute-force optimum on {matched}/{total} small instances");
    if rises > 0 || matched < total {
        return Err(detail);
    }
    within(Duration::from_secs(60), start, detail)
}

// 5 -----------------------------------------------------------------------

const EXTRA_EPOCHS: usize = 4;
const MERGE_EPOCHS: usize = 2;

struct MnistSeed {
    baseline: f64,
    continued: f64,
    split: f64,
    merged: f64,
}

fn mnist_seed(seed: u64) -> std::result::Result<MnistSeed, String> {
    let err = |e: dcck::Error| e.to_string();
    let mut cfg = config("mnist_subset.cfg")?;
    let mut overrides = vec![format!("model.seed={seed}"), format!("train.shuffle_seed={seed}")];
    overrides.push(format!("split.seed={seed}"));
    overrides.push(format!("merge.seed={seed}"));
    if std::env::var_os(DATA_DIR_ENV).is_none() {
        overrides.push(format!("data.dir={}", workspace().join("data/mnist").display()));
    }
    cfg.apply_overrides(&overrides).map_err(err)?;
    let data = cfg.load_data().map_err(err)?;
    let test = data.test.as_ref().ok_or("no test hold-out")?;
    let error = |m: &Network| evaluate(m, test).map(|r| r.error_percent()).map_err(err);

    let mut model = cfg.build_model().map_err(err)?;
    Trainer::new(&data, cfg.trainer).map_err(err)?.finetune(&mut model, &cfg.finetune, "baseline").map_err(err)?;

    let more = TrainerConfig { shuffle_seed: seed + 100, ..cfg.trainer };
    let extra = FinetuneConfig { max_evals: EXTRA_EPOCHS, ..cfg.finetune };
    let mut continued = model.clone();
    Trainer::new(&data, more).map_err(err)?.finetune(&mut continued, &extra, "finetune").map_err(err)?;

    let mut split = model.clone();
    let report = split_layer(&mut split, 0, &cfg.schedule.split).map_err(err)?;
    if report.kernels_after != 200 {
        return Err(format!("split produced {} kernels", report.kernels_after));
    }
    Trainer::new(&data, more).map_err(err)?.finetune(&mut split, &extra, "split_finetune").map_err(err)?;

    let mut merged = split.clone();
    merge_layer(&mut merged, 0, &cfg.schedule.merge).map_err(err)?;
    let last = FinetuneConfig { max_evals: MERGE_EPOCHS, ..cfg.finetune };
    Trainer::new(&data, more).map_err(err)?.finetune(&mut merged, &last, "merge_finetune").map_err(err)?;

    Ok(MnistSeed { baseline: error(&model)?, continued: error(&continued)?, split: error(&split)?, merged: error(&merged)? })
}

fn mnist() -> Check {
    let mut runs = Vec::new();
    for seed in [1, 2, 3] {
        let t = Instant::now();
        let run = mnist_seed(seed)?;
        println!(
            "    seed {seed}: baseline {:.2}%, continued {:.2}%, split-200 {:.2}%, merge-100 {:.2}% ({:.0}s)",
            run.baseline,
            run.continued,
            run.split,
            run.merged,
            t.elapsed().as_secs_f64()
        );
        runs.push(run);
    }
    let med = |f: fn(&MnistSeed) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
    let (base, cont, split, merged) = (med(|r| r.baseline), med(|r| r.continued), med(|r| r.split), med(|r| r.merged));
    let (a, b, c) = (base <= 3.0, split < cont, (merged - split).abs() <= 0.5);
    let detail = format!(
        "10k subset, medians: (a) baseline {base:.2}% (<= 3.0) {a}; (b) split {split:.2}% < continued {cont:.2}% {b}; \
         (c) merge {merged:.2}% within 0.5 of split {c}"
    );
    ensure(a && b && c, detail)
}

// 6 -----------------------------------------------------------------------

fn synth_smoke() -> Check {
    let start = Instant::now();
    let cfg = config("synth_smoke.cfg")?;
    let err = |e: dcck::Error| e.to_string();
    let data = cfg.load_data().map_err(err)?;
    let mut model = cfg.build_model().map_err(err)?;
    let kernels = |m: &Network| m.layers()[0].as_conv().map(|p| p.out_channels()).unwrap_or(0);
    let initial = kernels(&model);
    let mut t = Trainer::new(&data, cfg.trainer).map_err(err)?;
    t.finetune(&mut model, &cfg.finetune, "baseline").map_err(err)?;
    let before = evaluate(&model, &data.validation).map_err(err)?.accuracy;
    t.dcck(&mut model, &cfg.schedule).map_err(err)?;
    let after = evaluate(&model, &data.validation).map_err(err)?.accuracy;
    let kinds: Vec<SurgeryKind> = t.history().events.iter().map(|e| e.report.kind).collect();
    let detail = format!(
        "synth_digits({}): events {kinds:?}, conv1 {initial} -> {}, val accuracy {before:.4} -> {after:.4}",
        cfg.data.synth_count,
        kernels(&model)
    );
    let ok = kinds == [SurgeryKind::Split, SurgeryKind::Merge] && kernels(&model) == initial && after >= before;
    if !ok {
        return Err(detail);
    }
    within(Duration::from_secs(120), start, detail)
}

// 7 -----------------------------------------------------------------------

fn timing() -> Check {
    let mut original = mnist_net(100, 7);
    let cfg = SplitConfig { sigma_noise: 0.01, sigma_angle: 0.0, mode: SplitMode::Noise, seed: 7 };
    split_layer(&mut original, 0, &cfg).unwrap();
    let mut merged = original.clone();
    merge_layer(&mut merged, 0, &MergeConfig::new(100, WeightVariant::NearestFilter, 7)).unwrap();
    let images = uniform(&mut rng(707), &[10, 1, 28, 28], 0.0, 1.0);
    let set = LabeledDataset::new(images, vec![0; 10], 10).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    forward_timings(&original, &set, 10, 5).unwrap();
    for _ in 0..100 {
        a.extend(forward_timings(&original, &set, 10, 1).unwrap());
        b.extend(forward_timings(&merged, &set, 10, 1).unwrap());
    }
    let (ma, mb) = (median(&a), median(&b));
    ensure(mb < ma, format!("median forward of 10: conv1 200 {ma:.3} ms, merged conv1 100 {mb:.3} ms"))
}

// 8 -----------------------------------------------------------------------

fn hashes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), Sha256::digest(fs::read(&p).unwrap()).to_vec()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = workspace().join("configs/synth_smoke.cfg");
    let mut runs = Vec::new();
    for name in ["first", "second"] {
        let out = tmp.path().join(name);
        let args = ["dcck", "dcck", "-c", cfg.to_str().unwrap(), "--set", &format!("output.dir={}", out.display())];
        let code = dcck::cli::main_with_args(args);
        if code != 0 {
            return Err(format!("dcck exited with {code}"));
        }
        runs.push(hashes(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure(runs[0] == runs[1] && names.len() == 5, format!("sha-256 of {names:?}: identical {}", runs[0] == runs[1]))
}

fn main() {
    let picks: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 8] = [
        (1, "gradient checks", gradients),
        (2, "conv oracle", conv_oracle),
        (3, "function preservation", preservation),
        (4, "k-means properties", kmeans_properties),
        (5, "MNIST split/merge", mnist),
        (6, "synthetic smoke schedule", synth_smoke),
        (7, "timing direction", timing),
        (8, "determinism", determinism),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !picks.is_empty() && !picks.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

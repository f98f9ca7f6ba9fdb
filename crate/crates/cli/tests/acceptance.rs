//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scatspec::cube::{SpectralCube, HSI_BANDS, SHARED_BAND};
use scatspec::networks::{InverseNet, MatchingNet, MisrNet, Network};
use scatspec::optim::{AdamState, Loss, Parity, Stage};
use scatspec::pipeline::{
    evaluate, even_bands, infer, merge_stacks, odd_bands, parity_merge, parity_split, sam, spline_baseline, train_all,
    EvalItem, PipelineConfig, Sample,
};
use scatspec::scattering::{path_count, scatter2d, FilterBank, Path as ScatterPath};
use scatspec::stack::BandStack;
use scatspec::synthetic::{gen_synthetic, SyntheticScene};
use scatspec::tensor::{BatchNormStats, Graph, Mode, Tensor, Var};

type Outcome = Result<String, String>;
type Files = Vec<(String, Vec<u8>)>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::new(shape.to_vec(), noise(shape.iter().product(), seed)).unwrap()
}

// 1. scattering

fn scattering_suite() -> Outcome {
    let start = Instant::now();
    let (j, l) = (2usize, 4usize);
    let formula = 1 + j * l + l * l * j * (j - 1) / 2;
    check(formula == 25 && path_count(j, l) == 25, || {
        format!("path count {} (formula {formula})", path_count(j, l))
    })?;

    let bank = FilterBank::new(j, l, 32, 32).unwrap();
    let s = scatter2d(&vec![0.37; 1024], &bank).unwrap();
    check(s.map_count() == 25, || format!("{} maps per channel", s.map_count()))?;
    let mut worst_const = 0.0f64;
    for (p, path) in s.paths().iter().enumerate() {
        if *path != ScatterPath::Order0 {
            worst_const = s.map(0, p).iter().fold(worst_const, |m, v| m.max(v.abs()));
        }
    }
    check(worst_const < 1e-10, || {
        format!("constant image order>=1 max {worst_const:e}")
    })?;

    let stride = 1usize << j;
    let (n, on) = (32usize, 32usize >> j);
    let mut worst_shift = 0.0f64;
    for (seed, (sy, sx)) in [(1, (1, 0)), (2, (0, 1)), (3, (2, 3))] {
        let x = noise(n * n, seed);
        let mut shifted = vec![0.0; n * n];
        for y in 0..n {
            for xx in 0..n {
                shifted[((y + sy * stride) % n) * n + (xx + sx * stride) % n] = x[y * n + xx];
            }
        }
        let a = scatter2d(&x, &bank).unwrap();
        let b = scatter2d(&shifted, &bank).unwrap();
        for p in 0..a.map_count() {
            let (ma, mb) = (a.map(0, p), b.map(0, p));
            for y in 0..on {
                for xx in 0..on {
                    let d = (ma[y * on + xx] - mb[((y + sy) % on) * on + (xx + sx) % on]).abs();
                    worst_shift = worst_shift.max(d);
                }
            }
        }
    }
    check(worst_shift < 1e-10, || {
        format!("shift equivariance error {worst_shift:e}")
    })?;

    let mut worst_ratio = 0.0f64;
    for seed in 0..100u64 {
        let x = noise(n * n, 1000 + 2 * seed);
        let mut y = noise(n * n, 1001 + 2 * seed);
        if seed % 2 == 1 {
            y.iter_mut().zip(&x).for_each(|(b, a)| *b = a + 0.01 * *b);
        }
        let (sx, sy) = (scatter2d(&x, &bank).unwrap(), scatter2d(&y, &bank).unwrap());
        let ds: Vec<f64> = sx.maps().iter().zip(sy.maps()).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let (nds, ndx) = (norm(&ds), norm(&dx));
        check(nds <= ndx + 1e-9, || {
            format!("pair {seed}: |S(x)-S(y)| {nds} > |x-y| {ndx}")
        })?;
        worst_ratio = worst_ratio.max(nds / ndx);
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "25 paths, constant {worst_const:.1e}, shift {worst_shift:.1e}, max contraction {worst_ratio:.3}, {elapsed:.1?}"
    ))
}

// 2. gradients

/// Reverse-mode gradients of `build` against central differences; the
/// worst relative error over the inputs.
fn gradcheck(build: &dyn Fn(&mut Graph, &[Var]) -> Var, inputs: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let root = build(&mut g, &vars);
    g.backward(root).unwrap();
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let root = build(&mut g, &vars);
        g.value(root).item().unwrap()
    };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = g.grad_data(*v).unwrap();
        let mut numeric = vec![0.0; inputs[i].numel()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[e] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[e] -= h;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(analytic).max(norm(&numeric)).max(1e-12);
        worst = worst.max(norm(&diff) / scale);
    }
    worst
}

/// Squared error against a fixed random target, so every output element
/// carries its own weight.
fn against(g: &mut Graph, y: Var, seed: u64) -> Var {
    let t = g.constant(random(g.shape(y), seed));
    g.mse(y, t).unwrap()
}

/// Relative error of the whole parameter gradient of `net`. Tensors whose
/// analytic gradient vanishes (conv biases ahead of batch norm) must also
/// have a vanishing numeric gradient; otherwise the error is 1.
fn network_gradcheck(net: &mut dyn Network, x: &Tensor, target: &Tensor, loss: Loss) -> f64 {
    fn loss_of(net: &mut dyn Network, x: &Tensor, target: &Tensor, loss: Loss) -> (Graph, Var, Vec<Var>) {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let f = net.forward(&mut g, xv, Mode::Train).unwrap();
        let t = g.constant(target.clone());
        let l = loss.apply(&mut g, f.output, t).unwrap();
        (g, l, f.params)
    }
    let (mut g, l, params) = loss_of(net, x, target, loss);
    g.backward(l).unwrap();
    let analytic: Vec<Vec<f64>> = params.iter().map(|v| g.grad_data(*v).unwrap().to_vec()).collect();
    let h = 1e-6;
    let (mut all_ana, mut all_num) = (Vec::new(), Vec::new());
    for (p, ana) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; ana.len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let orig = net.parameters()[p].data()[e];
            net.parameters_mut()[p].data_mut()[e] = orig + h;
            let (g1, l1, _) = loss_of(net, x, target, loss);
            net.parameters_mut()[p].data_mut()[e] = orig - h;
            let (g2, l2, _) = loss_of(net, x, target, loss);
            net.parameters_mut()[p].data_mut()[e] = orig;
            *slot = (g1.value(l1).item().unwrap() - g2.value(l2).item().unwrap()) / (2.0 * h);
        }
        if norm(ana) < 1e-12 && norm(&numeric) > 1e-8 {
            return 1.0;
        }
        all_ana.extend_from_slice(ana);
        all_num.extend(numeric);
    }
    let diff: Vec<f64> = all_ana.iter().zip(&all_num).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&all_ana).max(norm(&all_num)).max(1e-12)
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let layers: Vec<(&str, f64)> = vec![
        (
            "linear",
            gradcheck(
                &|g, v| {
                    let y = g.linear(v[0], v[1], v[2]).unwrap();
                    against(g, y, 1)
                },
                &[random(&[4, 3], 2), random(&[3, 5], 3), random(&[5], 4)],
            ),
        ),
        (
            "conv",
            gradcheck(
                &|g, v| {
                    let y = g.conv2d_same(v[0], v[1], v[2]).unwrap();
                    against(g, y, 5)
                },
                &[random(&[2, 2, 4, 5], 6), random(&[3, 2, 3, 3], 7), random(&[3], 8)],
            ),
        ),
        (
            "batchnorm-train",
            gradcheck(
                &|g, v| {
                    let mut stats = BatchNormStats::identity(2);
                    let y = g.batchnorm2d(v[0], v[1], v[2], &mut stats, Mode::Train).unwrap();
                    against(g, y, 9)
                },
                &[random(&[3, 2, 2, 3], 10), random(&[2], 11), random(&[2], 12)],
            ),
        ),
        (
            "upsample",
            gradcheck(
                &|g, v| {
                    let y = g.upsample_nearest2(v[0]).unwrap();
                    against(g, y, 13)
                },
                &[random(&[2, 3, 2, 3], 14)],
            ),
        ),
        (
            "upsample+conv",
            gradcheck(
                &|g, v| {
                    let y = g.upsample2_conv2d_same(v[0], v[1], v[2]).unwrap();
                    against(g, y, 15)
                },
                &[random(&[2, 2, 3, 2], 16), random(&[3, 2, 3, 3], 17), random(&[3], 18)],
            ),
        ),
        (
            "relu",
            gradcheck(
                &|g, v| {
                    let y = g.relu(v[0]);
                    against(g, y, 19)
                },
                &[random(&[4, 5], 20)],
            ),
        ),
        (
            "tanh",
            gradcheck(
                &|g, v| {
                    let y = g.tanh(v[0]);
                    against(g, y, 21)
                },
                &[random(&[4, 5], 22)],
            ),
        ),
        (
            "l2 loss",
            gradcheck(
                &|g, v| g.mse(v[0], v[1]).unwrap(),
                &[random(&[3, 4], 23), random(&[3, 4], 24)],
            ),
        ),
        (
            "l1 loss",
            gradcheck(
                &|g, v| g.mae(v[0], v[1]).unwrap(),
                &[random(&[3, 4], 25), random(&[3, 4], 26)],
            ),
        ),
        (
            "matching net",
            network_gradcheck(
                &mut MatchingNet::new(6, 8, 5, 27),
                &random(&[7, 6], 28),
                &random(&[7, 5], 29),
                Loss::L2,
            ),
        ),
        (
            "inverse net",
            network_gradcheck(
                &mut InverseNet::new(3, [4, 3], 2, 3, 30),
                &random(&[2, 3, 2, 2], 31),
                &random(&[2, 2, 8, 8], 32),
                Loss::L1,
            ),
        ),
        (
            "misr net",
            network_gradcheck(
                &mut MisrNet::new(6, 7, 33),
                &random(&[5, 6], 34),
                &random(&[5, 6], 35),
                Loss::L2,
            ),
        ),
    ];
    let elapsed = start.elapsed();
    let (name, worst) = layers
        .iter()
        .fold(("", 0.0f64), |acc, &(n, e)| if e > acc.1 { (n, e) } else { acc });
    for (n, e) in &layers {
        check(*e < 1e-4, || format!("{n}: relative error {e:e}"))?;
    }
    check(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "{} checks, worst {worst:.1e} ({name}), {elapsed:.1?}",
        layers.len()
    ))
}

// 3. Adam

fn adam_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for (theta0, lr) in [(1.5, 0.001), (-0.8, 0.1)] {
        // scalar Adam on f(θ) = θ², written out independently
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut th, mut m, mut v) = (theta0, 0.0, 0.0);
        let mut expected = Vec::new();
        for t in 1..=10 {
            let grad = 2.0 * th;
            m = b1 * m + (1.0 - b1) * grad;
            v = b2 * v + (1.0 - b2) * grad * grad;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            th -= lr * mh / (vh.sqrt() + eps);
            expected.push(th);
        }

        let mut p = Tensor::new(vec![1], vec![theta0]).unwrap();
        let mut opt = AdamState::new(&[&p], lr);
        for want in expected {
            let grad = [2.0 * p.data()[0]];
            opt.step(vec![&mut p], &[Some(&grad[..])]).unwrap();
            let err = (p.data()[0] - want).abs();
            worst = worst.max(err);
            check(err <= 1e-12, || format!("θ0 {theta0}, lr {lr}: step error {err:e}"))?;
        }
    }
    Ok(format!("10 steps at lr 0.001 and 0.1, worst {worst:.1e}"))
}

// 4. training recipe

fn recipe() -> Outcome {
    let c = PipelineConfig::default();
    let even = Parity::Even;
    let got = (
        c.j,
        c.l,
        c.learning_rate,
        c.stage(Stage::Matching, even).epochs,
        c.stage(Stage::Inverse, even).epochs,
        c.stage(Stage::Misr, Parity::None).epochs,
        c.stage(Stage::Matching, even).loss,
        c.stage(Stage::Inverse, even).loss,
        c.stage(Stage::Misr, Parity::None).loss,
    );
    let want = (2, 4, 0.001, 100, 150, 60, Loss::L2, Loss::L1, Loss::L2);
    check(got == want, || format!("default recipe {got:?}, expected {want:?}"))?;
    for lr in [
        c.stage(Stage::Matching, Parity::Odd).learning_rate,
        c.stage(Stage::Inverse, Parity::Odd).learning_rate,
        c.stage(Stage::Misr, Parity::None).learning_rate,
    ] {
        check(lr == 0.001, || format!("stage learning rate {lr}"))?;
    }
    for epochs in [30, 60] {
        let short = PipelineConfig {
            misr_epochs: epochs,
            ..PipelineConfig::default()
        };
        check(short.validate().is_ok(), || format!("MISR {epochs} epochs rejected"))?;
        check(short.stage(Stage::Misr, Parity::None).epochs == epochs, || {
            "MISR epochs not applied".into()
        })?;
    }
    Ok("J=2 L=4 lr=0.001, epochs 100/150/60 (30 allowed), losses L2/L1/L2".into())
}

// 5. parity

fn parity_suite() -> Outcome {
    let mut r = rng(77);
    for case in 0..100 {
        let (h, w) = (r.gen_range(1..6), r.gen_range(1..6));
        let data: Vec<f64> = (0..HSI_BANDS * h * w).map(|_| r.gen_range(0.0..=1.0)).collect();
        let cube = SpectralCube::new(BandStack::new(HSI_BANDS, h, w, data).unwrap()).unwrap();
        let (even, odd) = parity_split(&cube);
        let back = parity_merge(&even, &odd).unwrap();
        check(back.stack().data() == cube.stack().data(), || {
            format!("cube {case} not restored exactly")
        })?;
    }
    let (h, w) = (3, 2);
    let mut even = BandStack::zeros(31, h, w);
    let mut odd = BandStack::zeros(31, h, w);
    let at = |bands: &[usize]| {
        bands
            .iter()
            .position(|&b| b == SHARED_BAND)
            .expect("700 nm in both sets")
    };
    even.plane_mut(at(&even_bands())).fill(0.2);
    odd.plane_mut(at(&odd_bands())).fill(0.4);
    let merged = merge_stacks(&even, &odd).unwrap();
    let shared = merged.plane(SHARED_BAND);
    check(shared.iter().all(|v| (v - 0.3).abs() < 1e-12), || {
        format!("700 nm plane {shared:?}")
    })?;
    let others_zero = (0..HSI_BANDS)
        .filter(|&b| b != SHARED_BAND)
        .all(|b| merged.plane(b).iter().all(|v| *v == 0.0));
    check(others_zero, || "averaging leaked into other bands".into())?;
    Ok("100 random cubes exact, 700 nm 0.2/0.4 -> 0.3".into())
}

// 6. SAM

fn sam_suite() -> Outcome {
    let u = [0.3, 0.1, 0.7, 0.2];
    let scaled: Vec<f64> = u.iter().map(|v| 3.0 * v).collect();
    let cases = [
        ("identical", sam(&u, &u).unwrap(), 0.0),
        ("orthogonal", sam(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), FRAC_PI_2),
        ("(1,1) vs (1,0)", sam(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), FRAC_PI_4),
        ("u vs 3u", sam(&u, &scaled).unwrap(), 0.0),
    ];
    for (name, got, want) in cases {
        check((got - want).abs() <= 1e-12, || format!("{name}: {got} vs {want}"))?;
    }
    check(sam(&[0.0, 0.0], &[1.0, 0.0]).is_none(), || {
        "zero spectrum scored".into()
    })?;
    Ok("0, π/2, π/4, scale invariance within 1e-12".into())
}

// 7. synthetic benchmark

fn mean_sam(test: &[SyntheticScene], preds: &[SpectralCube]) -> f64 {
    let items: Vec<EvalItem> = test
        .iter()
        .zip(preds)
        .enumerate()
        .map(|(i, (s, p))| EvalItem {
            name: format!("test_{i}"),
            pred: p,
            truth: &s.cube,
            mask: &s.mask,
        })
        .collect();
    evaluate(&items).unwrap().mean
}

fn benchmark() -> Outcome {
    let start = Instant::now();
    let train: Vec<Sample> = gen_synthetic(32, 64, 0)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(Sample::from)
        .collect();
    let test = gen_synthetic(8, 64, 1000).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        misr_epochs: 60,
        ..PipelineConfig::bench()
    };
    let trained = train_all(&train, &config).map_err(|e| e.to_string())?;
    let run = |misr: bool| -> Result<Vec<SpectralCube>, String> {
        test.iter()
            .map(|s| infer(&s.msi, &trained.bundle, &s.mask, misr).map_err(|e| e.to_string()))
            .collect()
    };
    let with = mean_sam(&test, &run(true)?);
    let without = mean_sam(&test, &run(false)?);
    let baseline = mean_sam(&test, &test.iter().map(|s| spline_baseline(&s.msi)).collect::<Vec<_>>());
    let elapsed = start.elapsed();
    let summary = format!(
        "MISR-60 {with:.4}, no MISR {without:.4}, spline {baseline:.4}, {:.1} min",
        elapsed.as_secs_f64() / 60.0
    );
    check(with < baseline, || format!("pipeline not below baseline: {summary}"))?;
    check(with <= without, || format!("MISR did not help: {summary}"))?;
    check(elapsed < Duration::from_secs(30 * 60), || {
        format!("over 30 minutes: {summary}")
    })?;
    Ok(summary)
}

// 8. determinism through the CLI

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_scatspec"))
        .arg("--quiet")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn sorted_files(dir: &Path) -> Files {
    let mut out: Files = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// Train, infer every scene and evaluate; returns the model directory
/// files, the report bytes and the printed summary.
fn full_run(root: &Path, data: &Path, tag: &str) -> Result<(Files, Vec<u8>, String), String> {
    let models = root.join(format!("models_{tag}"));
    let preds = root.join(format!("preds_{tag}"));
    std::fs::create_dir_all(&preds).map_err(|e| e.to_string())?;
    cli(&[
        "train",
        "--data",
        p(data),
        "--out",
        p(&models),
        "--profile",
        "bench",
        "--seed",
        "3",
    ])?;
    for i in 0..2 {
        let msi = data.join(format!("scene_{i:03}_msi.hsc"));
        let mask = data.join(format!("scene_{i:03}_mask.hsc"));
        let out = preds.join(format!("scene_{i:03}_pred.hsc"));
        cli(&[
            "infer",
            "--models",
            p(&models),
            "--msi",
            p(&msi),
            "--mask",
            p(&mask),
            "--out",
            p(&out),
        ])?;
    }
    let report = root.join(format!("report_{tag}.csv"));
    let summary = cli(&[
        "evaluate",
        "--pred",
        p(&preds),
        "--truth",
        p(data),
        "--masks",
        p(data),
        "--out",
        p(&report),
    ])?;
    Ok((sorted_files(&models), std::fs::read(&report).unwrap(), summary))
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = root.path().join("data");
    cli(&[
        "gen-synthetic",
        "--out",
        p(&data),
        "--count",
        "2",
        "--size",
        "16",
        "--seed",
        "9",
    ])?;
    let (ma, ra, sa) = full_run(root.path(), &data, "a")?;
    let (mb, rb, sb) = full_run(root.path(), &data, "b")?;
    let names: Vec<&str> = ma.iter().map(|(n, _)| n.as_str()).collect();
    check(names.iter().filter(|n| n.ends_with(".ckpt")).count() == 5, || {
        format!("model files {names:?}")
    })?;
    check(ma.len() == mb.len(), || "different model file sets".into())?;
    for ((na, a), (nb, b)) in ma.iter().zip(&mb) {
        check(na == nb && a == b, || format!("{na} differs between runs"))?;
    }
    check(ra == rb, || "evaluation reports differ".into())?;
    check(sa == sb, || format!("summaries differ: {sa:?} vs {sb:?}"))?;
    Ok(format!(
        "{} model files and the report bit-identical, SAM {}",
        ma.len(),
        sa.trim()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("scattering correctness", scattering_suite),
        ("gradient checks", gradient_suite),
        ("Adam oracle", adam_oracle),
        ("training recipe", recipe),
        ("parity round-trip", parity_suite),
        ("SAM units", sam_suite),
        ("synthetic benchmark", benchmark),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use scatspec::cube::{read_mask, read_msi, write_cube, CubeFile, MsiImage, SkinMask, SpectralCube};
use scatspec::pipeline::{evaluate, infer, otsu_mask, train_all, EvalItem, ModelBundle, PipelineConfig, Sample};
use scatspec::scattering::{FilterBank, ScatterError};
use scatspec::stack::BandStack;
use scatspec::synthetic::gen_synthetic;

use crate::files::{discover, sha256_hex, FileEntry, Manifest, SceneEntry, EXT, MANIFEST};
use crate::{Command, EvalArgs, FilterArgs, GenArgs, InferArgs, Profile, TrainArgs, UsageError};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynthetic(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer_one(a),
        Command::Evaluate(a) => eval(a),
        Command::InspectFilters(a) => filters(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn write_entry(dir: &Path, name: String, file: &CubeFile) -> Result<FileEntry> {
    let bytes = file.to_bytes();
    let path = dir.join(&name);
    fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(FileEntry {
        name,
        sha256: sha256_hex(&bytes),
    })
}

fn gen(a: GenArgs) -> Result<()> {
    if a.size == 0 || !a.size.is_multiple_of(4) {
        return Err(usage(format!("--size {} is not a positive multiple of 4", a.size)));
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let scenes = gen_synthetic(a.count, a.size, a.seed)?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, s) in scenes.iter().enumerate() {
        let key = format!("scene_{i:03}");
        let source = format!("synthetic seed {}", s.seed);
        entries.push(SceneEntry {
            hsi: write_entry(&a.out, format!("{key}_hsi.{EXT}"), &s.cube.to_file(&source))?,
            msi: write_entry(&a.out, format!("{key}_msi.{EXT}"), &s.msi.to_file(&source))?,
            mask: write_entry(&a.out, format!("{key}_mask.{EXT}"), &s.mask.to_file(&source))?,
            key,
            seed: s.seed,
        });
    }
    let manifest = Manifest {
        count: a.count,
        size: a.size,
        seed: a.seed,
        scenes: entries,
    };
    let path = a.out.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {} scenes to {}", a.count, a.out.display());
    Ok(())
}

/// Defaults of the profile, overlaid by the config file, overlaid by flags.
fn resolve_config(a: &TrainArgs) -> Result<PipelineConfig> {
    let mut config = match a.profile {
        Profile::Reference => PipelineConfig::default(),
        Profile::Bench => PipelineConfig::bench(),
    };
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut merged = toml::Table::try_from(&config)?;
        merged.extend(file);
        config = merged
            .try_into()
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = &a.misr_epochs {
        config.misr_epochs = e.parse().expect("restricted to 30 or 60");
    }
    if let Some(e) = a.matching_epochs {
        config.matching_epochs = e;
    }
    if let Some(e) = a.inverse_epochs {
        config.inverse_epochs = e;
    }
    if let Some(j) = a.j {
        config.j = j;
    }
    if let Some(l) = a.l {
        config.l = l;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn load_samples(dir: &Path) -> Result<Vec<(String, Sample)>> {
    let mut hsi = discover(dir, "hsi")?;
    let msi = discover(dir, "msi")?;
    let mut masks = discover(dir, "mask")?;
    let mut out = Vec::with_capacity(msi.len());
    for (key, (path, file)) in msi {
        let (_, truth) = hsi
            .remove(&key)
            .with_context(|| format!("unpaired file {}: no cube for scene {key}", path.display()))?;
        let msi: MsiImage = file.try_into().with_context(|| format!("reading {}", path.display()))?;
        let cube: SpectralCube = truth.try_into().with_context(|| format!("scene {key}"))?;
        let mask: SkinMask = match masks.remove(&key) {
            Some((p, f)) => f.try_into().with_context(|| format!("reading {}", p.display()))?,
            None => {
                log::warn!("scene {key}: no mask, thresholding the NIR channel");
                otsu_mask(&msi)
            }
        };
        out.push((key, Sample { msi, cube, mask }));
    }
    if let Some((key, (path, _))) = hsi.into_iter().next() {
        bail!("unpaired file {}: no MSI for scene {key}", path.display());
    }
    if out.is_empty() {
        bail!("no training scenes in {}", dir.display());
    }
    Ok(out)
}

fn train(a: TrainArgs) -> Result<()> {
    let config = resolve_config(&a)?;
    let samples = load_samples(&a.data)?;
    log::info!(
        "training on {} scenes, seed {}, MISR {} epochs",
        samples.len(),
        config.seed,
        config.misr_epochs
    );
    let samples: Vec<Sample> = samples.into_iter().map(|(_, s)| s).collect();
    let trained = train_all(&samples, &config)?;
    trained.save(&a.out, &config)?;
    let path = a.out.join("config.toml");
    fs::write(&path, toml::to_string(&config)?).with_context(|| format!("writing {}", path.display()))?;
    for (name, log) in &trained.logs {
        if let Some(last) = log.last() {
            log::info!("{name}: final loss {:.6}", last.mean_loss);
        }
    }
    log::info!("models written to {}", a.out.display());
    Ok(())
}

fn infer_one(a: InferArgs) -> Result<()> {
    let use_misr = !a.no_misr;
    let bundle = ModelBundle::load(&a.models, use_misr)?;
    let msi = read_msi(&a.msi).with_context(|| format!("reading {}", a.msi.display()))?;
    let mask = match &a.mask {
        Some(p) => read_mask(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            log::warn!("no mask given, thresholding the NIR channel");
            otsu_mask(&msi)
        }
    };
    let cube = infer(&msi, &bundle, &mask, use_misr)?;
    write_cube(&cube, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut pred = discover(&a.pred, "hsi")?;
    let truth = discover(&a.truth, "hsi")?;
    let mut masks = discover(&a.masks, "mask")?;
    let mut loaded = Vec::with_capacity(truth.len());
    for (key, (tpath, tfile)) in truth {
        let (_, pfile) = pred
            .remove(&key)
            .with_context(|| format!("unpaired file {}: no prediction for scene {key}", tpath.display()))?;
        let (_, mfile) = masks
            .remove(&key)
            .with_context(|| format!("no mask for scene {key} in {}", a.masks.display()))?;
        let t: SpectralCube = tfile
            .try_into()
            .with_context(|| format!("reading {}", tpath.display()))?;
        let p: SpectralCube = pfile.try_into().with_context(|| format!("prediction of scene {key}"))?;
        let m: SkinMask = mfile.try_into().with_context(|| format!("mask of scene {key}"))?;
        loaded.push((key, p, t, m));
    }
    if let Some((key, (path, _))) = pred.into_iter().next() {
        bail!("unpaired file {}: no ground truth for scene {key}", path.display());
    }
    let items: Vec<EvalItem> = loaded
        .iter()
        .map(|(k, p, t, m)| EvalItem {
            name: k.clone(),
            pred: p,
            truth: t,
            mask: m,
        })
        .collect();
    let report = evaluate(&items)?;
    fs::write(&a.out, report.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", report.summary());
    Ok(())
}

fn centered(values: &[f64], size: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let half = size / 2;
    for y in 0..size {
        for x in 0..size {
            out[((y + half) % size) * size + (x + half) % size] = values[y * size + x];
        }
    }
    out
}

/// Two bands per filter: frequency response magnitude, then spatial
/// modulus, both centered.
fn filter_file(bank: &FilterBank, hat: &[f64], size: usize, name: &str) -> CubeFile {
    let freq: Vec<f64> = hat.iter().map(|v| v.abs()).collect();
    let spatial: Vec<f64> = bank.to_spatial(hat).iter().map(|c| c.norm()).collect();
    let stack = BandStack::from_planes(size, size, &[&centered(&freq, size), &centered(&spatial, size)])
        .expect("square planes");
    CubeFile::new(stack, vec![0.0, 0.0], "filter", name)
}

fn filters(a: FilterArgs) -> Result<()> {
    let bank = FilterBank::new(a.j, a.l, a.size, a.size).map_err(|e| match e {
        ScatterError::NotDivisible { .. } | ScatterError::InvalidParams(_) => usage(e.to_string()),
        other => other.into(),
    })?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written = 0;
    for j in 0..a.j {
        for q in 0..a.l {
            let name = format!("psi_j{j}_q{q}");
            filter_file(&bank, bank.psi(j, q), a.size, &name).write(&a.out.join(format!("{name}.{EXT}")))?;
            written += 1;
        }
    }
    filter_file(&bank, bank.phi(), a.size, "phi").write(&a.out.join(format!("phi.{EXT}")))?;
    written += 1;
    let lp = bank.littlewood_paley();
    log::info!("wrote {written} filters to {}", a.out.display());
    println!("littlewood-paley min {:.6} max {:.6}", lp.min, lp.max);
    Ok(())
}

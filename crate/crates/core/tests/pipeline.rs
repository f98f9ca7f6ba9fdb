use scatspec::cube::{SkinMask, HSI_BANDS};
use scatspec::pipeline::{
    evaluate, infer, train_all, EvalItem, ModelBundle, PipelineConfig, PipelineError, Sample, CHECKPOINT_FILES,
};
use scatspec::synthetic::gen_synthetic;

fn tiny_config() -> PipelineConfig {
    PipelineConfig {
        matching_hidden: 16,
        misr_hidden: 16,
        inverse_widths: [6, 4],
        matching_epochs: 3,
        inverse_epochs: 3,
        misr_epochs: 3,
        seed: 7,
        ..PipelineConfig::default()
    }
}

fn samples(count: usize, size: usize, seed: u64) -> Vec<Sample> {
    gen_synthetic(count, size, seed)
        .unwrap()
        .into_iter()
        .map(Sample::from)
        .collect()
}

#[test]
fn training_is_deterministic() {
    let data = samples(3, 16, 0);
    let a = train_all(&data, &tiny_config()).unwrap();
    let b = train_all(&data, &tiny_config()).unwrap();
    assert_eq!(a.logs.len(), 5);
    for ((na, la), (nb, lb)) in a.logs.iter().zip(&b.logs) {
        assert_eq!(na, nb);
        assert_eq!(la.len(), 3);
        let va: Vec<u64> = la.iter().map(|e| e.mean_loss.to_bits()).collect();
        let vb: Vec<u64> = lb.iter().map(|e| e.mean_loss.to_bits()).collect();
        assert_eq!(va, vb, "{na}");
    }
    let pa = infer(&data[0].msi, &a.bundle, &data[0].mask, true).unwrap();
    let pb = infer(&data[0].msi, &b.bundle, &data[0].mask, true).unwrap();
    assert_eq!(pa.stack().data(), pb.stack().data());
}

#[test]
fn inference_shape_range_and_masking() {
    let data = samples(2, 16, 1);
    let trained = train_all(&data, &tiny_config()).unwrap();
    let s = &data[1];
    let with = infer(&s.msi, &trained.bundle, &s.mask, true).unwrap();
    let without = infer(&s.msi, &trained.bundle, &s.mask, false).unwrap();
    assert_eq!(with.stack().bands(), HSI_BANDS);
    assert_eq!((with.height(), with.width()), (16, 16));
    assert!(with.stack().data().iter().all(|v| (0.0..=1.0).contains(v)));

    let mut changed = 0;
    for y in 0..16 {
        for x in 0..16 {
            let (a, b) = (with.spectrum(y, x), without.spectrum(y, x));
            if s.mask.get(y, x) {
                changed += usize::from(a != b);
            } else {
                assert_eq!(a, b, "non-skin pixel ({y},{x}) changed");
            }
        }
    }
    assert!(changed > 0);

    // an empty mask leaves the preimage untouched
    let none = SkinMask::new(16, 16, vec![false; 256]).unwrap();
    let a = infer(&s.msi, &trained.bundle, &none, true).unwrap();
    assert_eq!(a.stack().data(), without.stack().data());
}

#[test]
fn bundle_round_trip_and_missing_misr() {
    let data = samples(2, 16, 2);
    let config = tiny_config();
    let trained = train_all(&data, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trained.save(dir.path(), &config).unwrap();
    for name in CHECKPOINT_FILES {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert!(dir.path().join("loss_misr.csv").is_file());

    let loaded = ModelBundle::load(dir.path(), true).unwrap();
    let s = &data[0];
    let a = infer(&s.msi, &trained.bundle, &s.mask, true).unwrap();
    let b = infer(&s.msi, &loaded, &s.mask, true).unwrap();
    assert_eq!(a.stack().data(), b.stack().data());

    std::fs::remove_file(dir.path().join(CHECKPOINT_FILES[4])).unwrap();
    assert!(matches!(
        ModelBundle::load(dir.path(), true),
        Err(PipelineError::MissingModel(_))
    ));
    let partial = ModelBundle::load(dir.path(), false).unwrap();
    assert!(partial.misr.is_none());
    assert!(matches!(
        infer(&s.msi, &partial, &s.mask, true),
        Err(PipelineError::MissingModel(_))
    ));
    let c = infer(&s.msi, &partial, &s.mask, false).unwrap();
    let d = infer(&s.msi, &trained.bundle, &s.mask, false).unwrap();
    assert_eq!(c.stack().data(), d.stack().data());
}

#[test]
fn skipping_misr_training_yields_no_misr_network() {
    let data = samples(2, 16, 3);
    let config = PipelineConfig {
        misr_epochs: 0,
        ..tiny_config()
    };
    let trained = train_all(&data, &config).unwrap();
    assert!(trained.bundle.misr.is_none());
    assert_eq!(trained.logs.len(), 4);
}

#[test]
fn rejects_mixed_sizes_and_empty_sets() {
    let mut data = samples(1, 16, 4);
    data.extend(samples(1, 32, 5));
    assert!(train_all(&data, &tiny_config()).is_err());
    assert!(train_all(&[], &tiny_config()).is_err());
}

#[test]
fn mask_size_must_match() {
    let data = samples(2, 16, 6);
    let trained = train_all(&data, &tiny_config()).unwrap();
    let wrong = SkinMask::full(8, 8, true);
    assert!(infer(&data[0].msi, &trained.bundle, &wrong, true).is_err());
}

#[test]
fn evaluation_is_order_independent() {
    let data = samples(2, 16, 8);
    let trained = train_all(&data, &tiny_config()).unwrap();
    let preds: Vec<_> = data
        .iter()
        .map(|s| infer(&s.msi, &trained.bundle, &s.mask, true).unwrap())
        .collect();
    let items: Vec<EvalItem> = data
        .iter()
        .zip(&preds)
        .enumerate()
        .map(|(i, (s, p))| EvalItem {
            name: format!("scene_{i}"),
            pred: p,
            truth: &s.cube,
            mask: &s.mask,
        })
        .collect();
    let fwd = evaluate(&items).unwrap();
    let rev_items: Vec<EvalItem> = items.iter().rev().cloned().collect();
    let rev = evaluate(&rev_items).unwrap();
    assert!((fwd.mean - rev.mean).abs() < 1e-15);
    assert!((fwd.std - rev.std).abs() < 1e-15);
    assert!(fwd.mean > 0.0 && fwd.mean < std::f64::consts::FRAC_PI_2);
}

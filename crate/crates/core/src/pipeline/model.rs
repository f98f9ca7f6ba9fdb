use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::norm::{from_signed, to_signed, Direction, MapStats, NormStats};
use super::parity::{merge_stacks, split_stack};
use super::{PipelineConfig, PipelineError};
use crate::cube::{MsiImage, SkinMask, SpectralCube, HSI_BANDS};
use crate::networks::{
    coeffs_to_rows, inverse_forward, matching_forward, misr_forward, read_checkpoint, write_checkpoint, InverseNet,
    MatchingNet, MisrNet,
};
use crate::optim::{train, write_loss_csv, Dataset, EpochLoss, Parity, Stage};
use crate::scattering::{scatter_multichannel, FilterBank, ScatteringCoeffs};
use crate::stack::BandStack;
use crate::synthetic::SyntheticScene;
use crate::tensor::Tensor;

pub const NORM_FILE: &str = "norm.json";
/// Matching even/odd, inverse even/odd, MISR.
pub const CHECKPOINT_FILES: [&str; 5] = [
    "matching_even.ckpt",
    "matching_odd.ckpt",
    "inverse_even.ckpt",
    "inverse_odd.ckpt",
    "misr.ckpt",
];

type Result<T> = std::result::Result<T, PipelineError>;

/// A training pair with its skin mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub msi: MsiImage,
    pub cube: SpectralCube,
    pub mask: SkinMask,
}

impl From<SyntheticScene> for Sample {
    fn from(s: SyntheticScene) -> Self {
        Self {
            msi: s.msi,
            cube: s.cube,
            mask: s.mask,
        }
    }
}

/// Everything inference needs. Index 0 of each pair is the even parity.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub norm: NormStats,
    pub matching: [MatchingNet; 2],
    pub inverse: [InverseNet; 2],
    pub misr: Option<MisrNet>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl ModelBundle {
    /// Writes the normalization statistics and one checkpoint per network.
    pub fn save(&self, dir: &Path, config: &PipelineConfig) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let norm_path = dir.join(NORM_FILE);
        fs::write(&norm_path, serde_json::to_string_pretty(&self.norm)? + "\n").map_err(io_err(&norm_path))?;
        let seed = config.seed;
        write_checkpoint(
            &dir.join(CHECKPOINT_FILES[0]),
            &self.matching[0],
            seed,
            config.matching_epochs,
        )?;
        write_checkpoint(
            &dir.join(CHECKPOINT_FILES[1]),
            &self.matching[1],
            seed,
            config.matching_epochs,
        )?;
        write_checkpoint(
            &dir.join(CHECKPOINT_FILES[2]),
            &self.inverse[0],
            seed,
            config.inverse_epochs,
        )?;
        write_checkpoint(
            &dir.join(CHECKPOINT_FILES[3]),
            &self.inverse[1],
            seed,
            config.inverse_epochs,
        )?;
        if let Some(m) = &self.misr {
            write_checkpoint(&dir.join(CHECKPOINT_FILES[4]), m, seed, config.misr_epochs)?;
        }
        Ok(())
    }

    /// Loads a saved bundle. A missing MISR checkpoint is an error only when
    /// `need_misr` is set.
    pub fn load(dir: &Path, need_misr: bool) -> Result<Self> {
        let require = |name: &str| {
            let p = dir.join(name);
            if p.is_file() {
                Ok(p)
            } else {
                Err(PipelineError::MissingModel(p.display().to_string()))
            }
        };
        let norm_path = require(NORM_FILE)?;
        let norm: NormStats = serde_json::from_str(&fs::read_to_string(&norm_path).map_err(io_err(&norm_path))?)?;
        let matching = |i: usize| -> Result<MatchingNet> {
            let ck = read_checkpoint(&require(CHECKPOINT_FILES[i])?)?;
            Ok(MatchingNet::from_state(&ck.header.architecture, ck.tensors)?)
        };
        let inverse = |i: usize| -> Result<InverseNet> {
            let ck = read_checkpoint(&require(CHECKPOINT_FILES[i])?)?;
            Ok(InverseNet::from_state(&ck.header.architecture, ck.tensors)?)
        };
        let misr = match require(CHECKPOINT_FILES[4]) {
            Ok(p) => {
                let ck = read_checkpoint(&p)?;
                Some(MisrNet::from_state(&ck.header.architecture, ck.tensors)?)
            }
            Err(e) if need_misr => return Err(e),
            Err(_) => None,
        };
        Ok(Self {
            norm,
            matching: [matching(0)?, matching(1)?],
            inverse: [inverse(2)?, inverse(3)?],
            misr,
        })
    }
}

/// A trained bundle with the per-epoch losses of each network, keyed as
/// `matching_even`, `matching_odd`, `inverse_even`, `inverse_odd`, `misr`.
#[derive(Clone, Debug)]
pub struct TrainedPipeline {
    pub bundle: ModelBundle,
    pub logs: Vec<(String, Vec<EpochLoss>)>,
}

impl TrainedPipeline {
    /// Checkpoints, statistics and one `loss_<network>.csv` per network.
    pub fn save(&self, dir: &Path, config: &PipelineConfig) -> Result<()> {
        self.bundle.save(dir, config)?;
        for (name, log) in &self.logs {
            let p = dir.join(format!("loss_{name}.csv"));
            write_loss_csv(&p, log).map_err(io_err(&p))?;
        }
        Ok(())
    }
}

struct Features {
    msi: ScatteringCoeffs,
    parity: [ScatteringCoeffs; 2],
    stacks: [BandStack; 2],
}

fn check_divisible(h: usize, w: usize, j: usize) -> Result<()> {
    let f = 1usize << j;
    if h == 0 || w == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
        return Err(PipelineError::Shape(format!("{h}x{w} is not divisible by {f}")));
    }
    Ok(())
}

fn stage_err(stage: Stage, parity: Parity) -> impl FnOnce(crate::optim::TrainError) -> PipelineError {
    move |source| PipelineError::Stage {
        stage: if parity == Parity::None {
            stage.to_string()
        } else {
            format!("{stage} ({parity})")
        },
        source,
    }
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).expect("layout matches shape")
}

/// Runs the three stages in order: matching networks on image coefficients
/// against standardized parity coefficients, inverse networks on the true
/// standardized parity coefficients, then the MISR network on the skin
/// spectra of the merged stage-two reconstructions of the training set.
pub fn train_all(samples: &[Sample], config: &PipelineConfig) -> Result<TrainedPipeline> {
    config.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| PipelineError::Config("no training samples".into()))?;
    let (h, w) = (first.msi.height(), first.msi.width());
    check_divisible(h, w, config.j)?;
    for s in samples {
        for (sh, sw) in [
            (s.msi.height(), s.msi.width()),
            (s.cube.height(), s.cube.width()),
            (s.mask.height(), s.mask.width()),
        ] {
            if (sh, sw) != (h, w) {
                return Err(PipelineError::Shape(format!(
                    "training images must share one size: {sh}x{sw} vs {h}x{w}"
                )));
            }
        }
    }
    let bank = FilterBank::new(config.j, config.l, h, w)?;

    let mut feats: Vec<Features> = samples
        .par_iter()
        .map(|s| -> Result<Features> {
            let (even, odd) = split_stack(s.cube.stack())?;
            Ok(Features {
                msi: scatter_multichannel(s.msi.stack(), &bank)?,
                parity: [scatter_multichannel(&even, &bank)?, scatter_multichannel(&odd, &bank)?],
                stacks: [even.map(to_signed), odd.map(to_signed)],
            })
        })
        .collect::<Result<_>>()?;
    let norm = NormStats {
        j: config.j,
        l: config.l,
        msi: MapStats::fit(feats.iter().map(|f| &f.msi))?,
        even: MapStats::fit(feats.iter().map(|f| &f.parity[0]))?,
        odd: MapStats::fit(feats.iter().map(|f| &f.parity[1]))?,
    };
    for f in &mut feats {
        norm.msi.apply(&mut f.msi, Direction::Forward)?;
        norm.even.apply(&mut f.parity[0], Direction::Forward)?;
        norm.odd.apply(&mut f.parity[1], Direction::Forward)?;
    }
    let d_in = feats[0].msi.map_count();
    let d_out = feats[0].parity[0].map_count();
    let (ch, cw) = (feats[0].msi.height(), feats[0].msi.width());

    log::info!(
        "matching stage: {} samples, {d_in} -> {d_out} coefficients",
        feats.len()
    );
    let train_matching = |p: usize, parity: Parity| -> Result<(MatchingNet, Vec<EpochLoss>)> {
        let data = Dataset::new(
            feats.iter().map(|f| coeffs_to_rows(&f.msi)).collect(),
            feats.iter().map(|f| coeffs_to_rows(&f.parity[p])).collect(),
        );
        let tc = config.stage(Stage::Matching, parity);
        let mut net = MatchingNet::new(d_in, config.matching_hidden, d_out, tc.seed);
        let log = train(&mut net, &data, &tc).map_err(stage_err(Stage::Matching, parity))?;
        Ok((net, log))
    };
    let (me, mo) = rayon::join(|| train_matching(0, Parity::Even), || train_matching(1, Parity::Odd));
    let ((m_even, l_me), (m_odd, l_mo)) = (me?, mo?);

    log::info!("inverse stage: {d_out} x {ch}x{cw} -> {} x {h}x{w}", HSI_BANDS / 2 + 1);
    let train_inverse = |p: usize, parity: Parity| -> Result<(InverseNet, Vec<EpochLoss>)> {
        let data = Dataset::new(
            feats
                .iter()
                .map(|f| tensor(vec![1, d_out, ch, cw], f.parity[p].maps().to_vec()))
                .collect(),
            feats
                .iter()
                .map(|f| {
                    let s = &f.stacks[p];
                    tensor(vec![1, s.bands(), h, w], s.data().to_vec())
                })
                .collect(),
        );
        let tc = config.stage(Stage::Inverse, parity);
        let c_out = feats[0].stacks[p].bands();
        let mut net = InverseNet::new(d_out, config.inverse_widths, c_out, config.kernel, tc.seed);
        let log = train(&mut net, &data, &tc).map_err(stage_err(Stage::Inverse, parity))?;
        Ok((net, log))
    };
    let (ie, io) = rayon::join(|| train_inverse(0, Parity::Even), || train_inverse(1, Parity::Odd));
    let ((i_even, l_ie), (i_odd, l_io)) = (ie?, io?);

    let mut bundle = ModelBundle {
        norm,
        matching: [m_even, m_odd],
        inverse: [i_even, i_odd],
        misr: None,
    };
    let mut logs = vec![
        ("matching_even".to_string(), l_me),
        ("matching_odd".to_string(), l_mo),
        ("inverse_even".to_string(), l_ie),
        ("inverse_odd".to_string(), l_io),
    ];

    if config.misr_epochs > 0 {
        let pre: Vec<BandStack> = feats
            .par_iter()
            .map(|f| preimage_from_coeffs(&bundle, &f.msi))
            .collect::<Result<_>>()?;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (p, s) in pre.iter().zip(samples) {
            let (x, _) = skin_rows(p, &s.mask);
            let (y, _) = skin_rows(s.cube.stack(), &s.mask);
            xs.extend(x.into_iter().map(to_signed));
            ys.extend(y.into_iter().map(to_signed));
        }
        if xs.is_empty() {
            return Err(PipelineError::Config("no skin pixels to train the MISR network".into()));
        }
        let chunk = config.misr_chunk * HSI_BANDS;
        let data = Dataset::new(
            xs.chunks(chunk)
                .map(|c| tensor(vec![c.len() / HSI_BANDS, HSI_BANDS], c.to_vec()))
                .collect(),
            ys.chunks(chunk)
                .map(|c| tensor(vec![c.len() / HSI_BANDS, HSI_BANDS], c.to_vec()))
                .collect(),
        );
        log::info!("misr stage: {} skin spectra", xs.len() / HSI_BANDS);
        let tc = config.stage(Stage::Misr, Parity::None);
        let mut net = MisrNet::new(HSI_BANDS, config.misr_hidden, tc.seed);
        let log = train(&mut net, &data, &tc).map_err(stage_err(Stage::Misr, Parity::None))?;
        bundle.misr = Some(net);
        logs.push(("misr".to_string(), log));
    }
    Ok(TrainedPipeline { bundle, logs })
}

/// Skin spectra as consecutive rows, with their flat pixel indices.
fn skin_rows(stack: &BandStack, mask: &SkinMask) -> (Vec<f64>, Vec<usize>) {
    let n = stack.plane_len();
    let idx: Vec<usize> = (0..n).filter(|&i| mask.data()[i]).collect();
    let mut rows = Vec::with_capacity(idx.len() * stack.bands());
    for &i in &idx {
        rows.extend((0..stack.bands()).map(|b| stack.data()[b * n + i]));
    }
    (rows, idx)
}

fn preimage_from_coeffs(bundle: &ModelBundle, msi: &ScatteringCoeffs) -> Result<BandStack> {
    let branch = |p: usize| -> Result<BandStack> {
        let matched = matching_forward(&bundle.matching[p], msi)?;
        Ok(inverse_forward(&bundle.inverse[p], &matched)?)
    };
    let (even, odd) = rayon::join(|| branch(0), || branch(1));
    let merged = merge_stacks(&even?, &odd?)?;
    Ok(merged.map(from_signed))
}

/// Stages one and two: scatter, standardize, match, invert, merge. Values
/// are reflectance, not yet clamped.
pub fn preimage(msi: &MsiImage, bundle: &ModelBundle) -> Result<BandStack> {
    let (h, w) = (msi.height(), msi.width());
    check_divisible(h, w, bundle.norm.j)?;
    let bank = FilterBank::new(bundle.norm.j, bundle.norm.l, h, w)?;
    let mut coeffs = scatter_multichannel(msi.stack(), &bank)?;
    bundle.norm.msi.apply(&mut coeffs, Direction::Forward)?;
    preimage_from_coeffs(bundle, &coeffs)
}

/// Full reconstruction. With `use_misr`, skin pixels are replaced by the
/// refined spectra; other pixels keep the stage-two values.
pub fn infer(msi: &MsiImage, bundle: &ModelBundle, mask: &SkinMask, use_misr: bool) -> Result<SpectralCube> {
    mask.check_dims(msi.height(), msi.width())?;
    let mut pre = preimage(msi, bundle)?;
    if use_misr {
        let net = bundle
            .misr
            .as_ref()
            .ok_or_else(|| PipelineError::MissingModel("MISR network".into()))?;
        let (rows, idx) = skin_rows(&pre, mask);
        let x = tensor(vec![idx.len(), HSI_BANDS], rows.into_iter().map(to_signed).collect());
        let y = misr_forward(net, &x)?;
        let n = pre.plane_len();
        let data = pre.data_mut();
        for (r, &i) in idx.iter().enumerate() {
            for b in 0..HSI_BANDS {
                data[b * n + i] = from_signed(y.data()[r * HSI_BANDS + b]);
            }
        }
    }
    Ok(SpectralCube::new(pre)?)
}

//! On-disk image container and the typed images built on it.
//!
//! Layout: `HSC1`, little-endian `u32` header length, JSON header, then the
//! samples as little-endian `f32`, band-major then row-major. Samples are
//! held as `f64` in memory and rounded to `f32` on write.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stack::{BandStack, StackShapeError};

pub const MAGIC: &[u8; 4] = b"HSC1";

/// Bands of a reconstructed cube: 400 to 1000 nm every 10 nm.
pub const HSI_BANDS: usize = 61;
pub const MSI_BANDS: usize = 4;
/// Index of the 700 nm band.
pub const SHARED_BAND: usize = 30;

pub fn hsi_wavelengths() -> Vec<f64> {
    (0..HSI_BANDS).map(|b| 400.0 + 10.0 * b as f64).collect()
}

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("not a cube file (bad magic)")]
    BadMagic,
    #[error("truncated {part}: need {expected} bytes, found {got}")]
    Truncated {
        part: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("payload has {got} bytes but the header describes {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("header: {0}")]
    Header(String),
    #[error("expected {expected} bands, found {got}")]
    BandCount { expected: usize, got: usize },
    #[error("expected a {expected} file, found {got}")]
    Kind { expected: &'static str, got: String },
    #[error("{0}")]
    Shape(#[from] StackShapeError),
    #[error("{height}x{width} does not match {other_height}x{other_width}")]
    Dimensions {
        height: usize,
        width: usize,
        other_height: usize,
        other_width: usize,
    },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CubeError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// `hsi`, `msi`, `mask` or `filter`.
    pub kind: String,
    pub source: String,
}

/// Header fields serialize in declaration order, so identical cubes give
/// identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub wavelengths: Vec<f64>,
    pub value_range: [f64; 2],
    pub metadata: Metadata,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubeFile {
    pub header: CubeHeader,
    pub data: BandStack,
}

impl CubeFile {
    pub fn new(data: BandStack, wavelengths: Vec<f64>, kind: &str, source: &str) -> Self {
        let (lo, hi) = data
            .data()
            .iter()
            .map(|&v| v as f32 as f64)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let value_range = if data.data().is_empty() { [0.0, 0.0] } else { [lo, hi] };
        Self {
            header: CubeHeader {
                height: data.height(),
                width: data.width(),
                bands: data.bands(),
                wavelengths,
                value_range,
                metadata: Metadata {
                    kind: kind.into(),
                    source: source.into(),
                },
            },
            data,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 4 * self.data.data().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for &v in self.data.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CubeError::BadMagic);
        }
        let hlen = bytes.get(4..8).ok_or(CubeError::Truncated {
            part: "header length",
            expected: 8,
            got: bytes.len(),
        })?;
        let hlen = u32::from_le_bytes(hlen.try_into().expect("4 bytes")) as usize;
        let body = bytes.get(8..8 + hlen).ok_or(CubeError::Truncated {
            part: "header",
            expected: 8 + hlen,
            got: bytes.len(),
        })?;
        let header: CubeHeader = serde_json::from_slice(body).map_err(|e| CubeError::Header(e.to_string()))?;
        if header.wavelengths.len() != header.bands {
            return Err(CubeError::Header(format!(
                "{} wavelengths for {} bands",
                header.wavelengths.len(),
                header.bands
            )));
        }
        let payload = &bytes[8 + hlen..];
        let expected = header.height * header.width * header.bands * 4;
        if payload.len() < expected {
            return Err(CubeError::Truncated {
                part: "payload",
                expected,
                got: payload.len(),
            });
        }
        if payload.len() != expected {
            return Err(CubeError::SizeMismatch {
                expected,
                got: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        let data = BandStack::new(header.bands, header.height, header.width, data)?;
        Ok(Self { header, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    fn expect_kind(&self, kind: &'static str) -> Result<()> {
        if self.header.metadata.kind != kind {
            return Err(CubeError::Kind {
                expected: kind,
                got: self.header.metadata.kind.clone(),
            });
        }
        Ok(())
    }
}

fn check_bands(stack: &BandStack, expected: usize) -> Result<()> {
    if stack.bands() != expected {
        return Err(CubeError::BandCount {
            expected,
            got: stack.bands(),
        });
    }
    Ok(())
}

fn check_finite(stack: &BandStack) -> Result<()> {
    match stack.data().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CubeError::NonFinite(i)),
        None => Ok(()),
    }
}

/// 61-band reflectance cube with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCube {
    stack: BandStack,
}

impl SpectralCube {
    /// Values are clamped to `[0, 1]`; non-finite values are rejected.
    pub fn new(stack: BandStack) -> Result<Self> {
        check_bands(&stack, HSI_BANDS)?;
        check_finite(&stack)?;
        Ok(Self {
            stack: stack.map(|v| v.clamp(0.0, 1.0)),
        })
    }

    pub fn stack(&self) -> &BandStack {
        &self.stack
    }

    pub fn into_stack(self) -> BandStack {
        self.stack
    }

    pub fn height(&self) -> usize {
        self.stack.height()
    }

    pub fn width(&self) -> usize {
        self.stack.width()
    }

    pub fn spectrum(&self, y: usize, x: usize) -> Vec<f64> {
        self.stack.spectrum(y, x)
    }

    pub fn to_file(&self, source: &str) -> CubeFile {
        CubeFile::new(self.stack.clone(), hsi_wavelengths(), "hsi", source)
    }
}

/// Four-channel image: R, G, B, NIR.
#[derive(Clone, Debug, PartialEq)]
pub struct MsiImage {
    stack: BandStack,
    centers: [f64; MSI_BANDS],
}

impl MsiImage {
    pub fn new(stack: BandStack, centers: [f64; MSI_BANDS]) -> Result<Self> {
        check_bands(&stack, MSI_BANDS)?;
        check_finite(&stack)?;
        Ok(Self { stack, centers })
    }

    pub fn stack(&self) -> &BandStack {
        &self.stack
    }

    /// Center wavelength of each channel in nm.
    pub fn centers(&self) -> [f64; MSI_BANDS] {
        self.centers
    }

    pub fn height(&self) -> usize {
        self.stack.height()
    }

    pub fn width(&self) -> usize {
        self.stack.width()
    }

    pub fn to_file(&self, source: &str) -> CubeFile {
        CubeFile::new(self.stack.clone(), self.centers.to_vec(), "msi", source)
    }
}

/// Per-pixel skin labels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkinMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl SkinMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(StackShapeError {
                bands: 1,
                height,
                width,
                expected: height * width,
                got: data.len(),
            }
            .into());
        }
        Ok(Self { height, width, data })
    }

    pub fn full(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len().max(1) as f64
    }

    /// Errors unless the mask is `height × width`.
    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if (self.height, self.width) != (height, width) {
            return Err(CubeError::Dimensions {
                height: self.height,
                width: self.width,
                other_height: height,
                other_width: width,
            });
        }
        Ok(())
    }

    /// Single band of `0.0` / `1.0`; the wavelength slot holds `0`.
    pub fn to_file(&self, source: &str) -> CubeFile {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let stack = BandStack::new(1, self.height, self.width, data).expect("mask layout");
        CubeFile::new(stack, vec![0.0], "mask", source)
    }
}

impl TryFrom<CubeFile> for SpectralCube {
    type Error = CubeError;

    fn try_from(f: CubeFile) -> Result<Self> {
        f.expect_kind("hsi")?;
        Self::new(f.data)
    }
}

impl TryFrom<CubeFile> for MsiImage {
    type Error = CubeError;

    fn try_from(f: CubeFile) -> Result<Self> {
        f.expect_kind("msi")?;
        check_bands(&f.data, MSI_BANDS)?;
        let centers = f.header.wavelengths.clone().try_into().expect("length checked on read");
        Self::new(f.data, centers)
    }
}

impl TryFrom<CubeFile> for SkinMask {
    type Error = CubeError;

    fn try_from(f: CubeFile) -> Result<Self> {
        f.expect_kind("mask")?;
        check_bands(&f.data, 1)?;
        let data = f.data.data().iter().map(|&v| v > 0.5).collect();
        Self::new(f.header.height, f.header.width, data)
    }
}

pub fn read_cube(path: &Path) -> Result<SpectralCube> {
    CubeFile::read(path)?.try_into()
}

pub fn write_cube(cube: &SpectralCube, path: &Path) -> Result<()> {
    cube.to_file("scatspec").write(path)
}

pub fn read_msi(path: &Path) -> Result<MsiImage> {
    CubeFile::read(path)?.try_into()
}

pub fn write_msi(msi: &MsiImage, path: &Path) -> Result<()> {
    msi.to_file("scatspec").write(path)
}

pub fn read_mask(path: &Path) -> Result<SkinMask> {
    CubeFile::read(path)?.try_into()
}

pub fn write_mask(mask: &SkinMask, path: &Path) -> Result<()> {
    mask.to_file("scatspec").write(path)
}

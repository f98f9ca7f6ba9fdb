use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("band stack: expected {expected} values for {bands}x{height}x{width}, got {got}")]
pub struct StackShapeError {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub expected: usize,
    pub got: usize,
}

/// Band-major stack of equally sized planes (`bands × height × width`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStack {
    bands: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandStack {
    pub fn new(bands: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, StackShapeError> {
        let expected = bands * height * width;
        if data.len() != expected {
            return Err(StackShapeError {
                bands,
                height,
                width,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            bands,
            height,
            width,
            data,
        })
    }

    pub fn zeros(bands: usize, height: usize, width: usize) -> Self {
        Self {
            bands,
            height,
            width,
            data: vec![0.0; bands * height * width],
        }
    }

    /// Stacks planes in order; all planes must share `height × width`.
    pub fn from_planes(height: usize, width: usize, planes: &[&[f64]]) -> Result<Self, StackShapeError> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for p in planes {
            if p.len() != height * width {
                return Err(StackShapeError {
                    bands: planes.len(),
                    height,
                    width,
                    expected: height * width,
                    got: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Self::new(planes.len(), height, width, data)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, band: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[band * n..(band + 1) * n]
    }

    pub fn plane_mut(&mut self, band: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[band * n..(band + 1) * n]
    }

    /// All band values at pixel `(y, x)`.
    pub fn spectrum(&self, y: usize, x: usize) -> Vec<f64> {
        let n = self.plane_len();
        let i = y * self.width + x;
        (0..self.bands).map(|b| self.data[b * n + i]).collect()
    }

    pub fn set_spectrum(&mut self, y: usize, x: usize, values: &[f64]) {
        let n = self.plane_len();
        let i = y * self.width + x;
        for (b, v) in values.iter().enumerate().take(self.bands) {
            self.data[b * n + i] = *v;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

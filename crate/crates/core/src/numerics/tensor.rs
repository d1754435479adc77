use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense H×W×C array stored row-major in (row, col, channel) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(NumericsError::Length {
                what: "tensor data",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    /// Copies the `side`×`side` window whose top-left corner is (`row`, `col`)
    /// into `out`, in the same (row, col, channel) order as kernel weights.
    pub fn extract_patch_into(&self, row: usize, col: usize, side: usize, out: &mut [f64]) {
        let run = side * self.channels;
        debug_assert_eq!(out.len(), side * run);
        for dr in 0..side {
            let start = self.index(row + dr, col, 0);
            out[dr * run..(dr + 1) * run].copy_from_slice(&self.data[start..start + run]);
        }
    }

    pub fn patch(&self, row: usize, col: usize, side: usize) -> Result<Patch, NumericsError> {
        if row + side > self.height || col + side > self.width {
            return Err(NumericsError::PatchOutOfBounds {
                row,
                col,
                side,
                height: self.height,
                width: self.width,
            });
        }
        let mut values = vec![0.0; side * side * self.channels];
        self.extract_patch_into(row, col, side, &mut values);
        Ok(Patch {
            side,
            channels: self.channels,
            values,
        })
    }

    /// True when every value lies in the closed unit interval.
    pub fn in_unit_interval(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// A k×k×C window of an image or feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    side: usize,
    channels: usize,
    values: Vec<f64>,
}

impl Patch {
    pub fn new(side: usize, channels: usize, values: Vec<f64>) -> Result<Self, NumericsError> {
        let expected = side * side * channels;
        if values.len() != expected {
            return Err(NumericsError::Length {
                what: "patch values",
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            side,
            channels,
            values,
        })
    }

    pub fn filled(side: usize, channels: usize, value: f64) -> Self {
        Self {
            side,
            channels,
            values: vec![value; side * side * channels],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let var =
            self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.values.len() as f64;
        var.sqrt()
    }

    pub fn same_shape(&self, other: &Patch) -> bool {
        self.side == other.side && self.channels == other.channels
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            side: self.side,
            channels: self.channels,
            values,
        }
    }
}

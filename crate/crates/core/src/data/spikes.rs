use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseArray;

/// Binary spike trains laid out as `(batch, neurons, timesteps)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTensor {
    batch: usize,
    neurons: usize,
    timesteps: usize,
    data: Vec<f64>,
}

impl SpikeTensor {
    pub fn new(batch: usize, neurons: usize, timesteps: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * neurons * timesteps {
            return Err(Error::Dimension(format!(
                "spike tensor ({batch}, {neurons}, {timesteps}) given {} values",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!(
                "spike value {} at index {i} is not binary",
                data[i]
            )));
        }
        Ok(Self {
            batch,
            neurons,
            timesteps,
            data,
        })
    }

    pub fn zeros(batch: usize, neurons: usize, timesteps: usize) -> Self {
        Self {
            batch,
            neurons,
            timesteps,
            data: vec![0.0; batch * neurons * timesteps],
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn index(&self, b: usize, n: usize, t: usize) -> usize {
        (b * self.neurons + n) * self.timesteps + t
    }

    pub fn get(&self, b: usize, n: usize, t: usize) -> f64 {
        self.data[self.index(b, n, t)]
    }

    pub fn set(&mut self, b: usize, n: usize, t: usize, spike: bool) {
        let i = self.index(b, n, t);
        self.data[i] = if spike { 1.0 } else { 0.0 };
    }

    /// All spikes at timestep `t` as a `batch × neurons` array.
    pub fn frame(&self, t: usize) -> DenseArray {
        let mut out = DenseArray::zeros(vec![self.batch, self.neurons]);
        let dst = out.data_mut();
        for b in 0..self.batch {
            for n in 0..self.neurons {
                dst[b * self.neurons + n] = self.data[self.index(b, n, t)];
            }
        }
        out
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> SpikeTensor {
        let stride = self.neurons * self.timesteps;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        SpikeTensor {
            batch: indices.len(),
            neurons: self.neurons,
            timesteps: self.timesteps,
            data,
        }
    }

    pub fn stack(samples: &[SpikeTensor]) -> Result<SpikeTensor> {
        let first = samples
            .first()
            .ok_or_else(|| Error::EmptyInput("no samples to stack".into()))?;
        let (neurons, timesteps) = (first.neurons, first.timesteps);
        let mut data = Vec::new();
        let mut batch = 0;
        for s in samples {
            if s.neurons != neurons || s.timesteps != timesteps {
                return Err(Error::Dimension(format!(
                    "cannot stack ({}, {}) with ({neurons}, {timesteps})",
                    s.neurons, s.timesteps
                )));
            }
            data.extend_from_slice(&s.data);
            batch += s.batch;
        }
        Ok(SpikeTensor {
            batch,
            neurons,
            timesteps,
            data,
        })
    }

    pub fn spike_count(&self) -> u64 {
        self.data.iter().filter(|&&v| v == 1.0).count() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_and_bad_shape() {
        assert!(matches!(SpikeTensor::new(1, 1, 2, vec![0.0, 0.5]), Err(Error::Data(_))));
        assert!(matches!(
            SpikeTensor::new(1, 2, 2, vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn frame_and_select() {
        let mut s = SpikeTensor::zeros(2, 3, 2);
        s.set(1, 2, 1, true);
        s.set(0, 0, 0, true);
        let f = s.frame(1);
        assert_eq!(f.shape(), &[2, 3]);
        assert_eq!(f.data(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let sel = s.select(&[1]);
        assert_eq!(sel.batch(), 1);
        assert_eq!(sel.get(0, 2, 1), 1.0);
        assert_eq!(s.spike_count(), 2);
        let both = SpikeTensor::stack(&[s.select(&[0]), s.select(&[1])]).unwrap();
        assert_eq!(both, s);
    }
}

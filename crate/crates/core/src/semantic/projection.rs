//! Two-layer MLP carrying provider-space vectors into the CF latent space:
//! `W2 · ReLU(W1 · x + b1) + b2`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{axpy, dot, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    /// `hidden × input_dim`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `output_dim × hidden`
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        check_dims(w1.rows(), b1.len())?;
        check_dims(w1.rows(), w2.cols())?;
        check_dims(w2.rows(), b2.len())?;
        let head = Self { w1, b1, w2, b2 };
        if !head.is_finite() {
            return Err(Error::InvalidArgument(
                "projection head has non-finite entries".into(),
            ));
        }
        Ok(head)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument(
                "projection dims must be >= 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + output_dim) as f64).sqrt();
        let w1 = Matrix::from_fn(hidden, input_dim, |_, _| rng.random_range(-a1..=a1));
        let w2 = Matrix::from_fn(output_dim, hidden, |_, _| rng.random_range(-a2..=a2));
        Self::new(w1, vec![0.0; hidden], w2, vec![0.0; output_dim])
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|x| x.is_finite())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.w1.frobenius_sq()
            + self.w2.frobenius_sq()
            + self.b1.iter().chain(&self.b2).map(|x| x * x).sum::<f64>()
    }

    /// Output plus the hidden pre-activations needed by [`Self::backward`].
    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dims(self.input_dim(), x.len())?;
        let pre: Vec<f64> = (0..self.hidden())
            .map(|h| dot(self.w1.row(h), x) + self.b1[h])
            .collect();
        let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let out = (0..self.output_dim())
            .map(|o| dot(self.w2.row(o), &act) + self.b2[o])
            .collect();
        Ok((out, pre))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_cached(x).map(|(out, _)| out)
    }

    /// Accumulates parameter gradients for upstream gradient `g_out`.
    pub fn backward(&self, x: &[f64], pre: &[f64], g_out: &[f64], grad: &mut ProjectionGrad) {
        for (o, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b2[o] += g;
            let row = grad.w2.row_mut(o);
            for (h, &z) in pre.iter().enumerate() {
                if z > 0.0 {
                    row[h] += g * z;
                }
            }
        }
        for (h, &z) in pre.iter().enumerate() {
            if z <= 0.0 {
                continue;
            }
            let g_hidden: f64 = g_out
                .iter()
                .enumerate()
                .map(|(o, &g)| g * self.w2.get(o, h))
                .sum();
            if g_hidden == 0.0 {
                continue;
            }
            grad.b1[h] += g_hidden;
            axpy(g_hidden, x, grad.w1.row_mut(h));
        }
    }

    pub fn zero_grad(&self) -> ProjectionGrad {
        ProjectionGrad {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// `θ -= lr · g`.
    pub fn apply(&mut self, grad: &ProjectionGrad, lr: f64) {
        axpy(-lr, grad.w1.as_slice(), self.w1.as_mut_slice());
        axpy(-lr, &grad.b1, &mut self.b1);
        axpy(-lr, grad.w2.as_slice(), self.w2.as_mut_slice());
        axpy(-lr, &grad.b2, &mut self.b2);
    }

    /// Every parameter as a flat mutable slice, in a fixed order.
    pub fn parameters_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = HeadFile {
            w1: self.w1.as_slice().to_vec(),
            b1: self.b1.clone(),
            w2: self.w2.as_slice().to_vec(),
            b2: self.b2.clone(),
            input_dim: self.input_dim(),
            hidden: self.hidden(),
            output_dim: self.output_dim(),
        };
        serde_json::to_writer(BufWriter::new(File::create(path)?), &file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|_| Error::MissingFile(path.display().to_string()))?;
        let h: HeadFile = serde_json::from_reader(BufReader::new(f))?;
        Self::new(
            Matrix::from_vec(h.hidden, h.input_dim, h.w1)?,
            h.b1,
            Matrix::from_vec(h.output_dim, h.hidden, h.w2)?,
            h.b2,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    input_dim: usize,
    hidden: usize,
    output_dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Gradient buffer with the head's shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionGrad {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ProjectionGrad {
    pub fn add(&mut self, other: &ProjectionGrad) {
        axpy(1.0, other.w1.as_slice(), self.w1.as_mut_slice());
        axpy(1.0, &other.b1, &mut self.b1);
        axpy(1.0, other.w2.as_slice(), self.w2.as_mut_slice());
        axpy(1.0, &other.b2, &mut self.b2);
    }

    pub fn scale(&mut self, s: f64) {
        self.w1.scale(s);
        self.w2.scale(s);
        self.b1
            .iter_mut()
            .chain(self.b2.iter_mut())
            .for_each(|x| *x *= s);
    }

    pub fn add_scaled_params(&mut self, s: f64, head: &ProjectionHead) {
        axpy(s, head.w1.as_slice(), self.w1.as_mut_slice());
        axpy(s, &head.b1, &mut self.b1);
        axpy(s, head.w2.as_slice(), self.w2.as_mut_slice());
        axpy(s, &head.b2, &mut self.b2);
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.w1.as_slice().to_vec();
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(&self.b2);
        v
    }
}

/// Applies the head to one provider vector.
pub fn project(head: &ProjectionHead, e_llm: &[f64]) -> Result<Vec<f64>> {
    head.forward(e_llm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let head = ProjectionHead::init(4, 3, 2, 1).unwrap();
        assert_eq!(project(&head, &[0.0; 4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dead_relu_returns_output_bias() {
        let head = ProjectionHead::new(
            Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
            vec![-5.0],
            Matrix::from_vec(2, 1, vec![3.0, 4.0]).unwrap(),
            vec![0.5, -0.25],
        )
        .unwrap();
        assert_eq!(project(&head, &[1.0, 0.0]).unwrap(), vec![0.5, -0.25]);
    }

    #[test]
    fn dim_mismatch_is_error() {
        let head = ProjectionHead::init(4, 3, 2, 1).unwrap();
        assert!(matches!(
            project(&head, &[1.0; 3]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let head = ProjectionHead::init(5, 4, 3, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("head.json");
        head.save(&p).unwrap();
        assert_eq!(ProjectionHead::load(&p).unwrap(), head);
    }
}

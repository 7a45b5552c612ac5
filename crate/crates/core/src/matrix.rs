use serde::{Deserialize, Serialize};

/// A square `d x d` real matrix acting on lattice vectors, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = c;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix must be square");
        Matrix {
            dim,
            entries: rows.concat(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn transpose(&self) -> Matrix {
        let d = self.dim;
        let mut t = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                t.entries[j * d + i] = self.entries[i * d + j];
            }
        }
        t
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            dim: self.dim,
            entries: self.entries.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += c * b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    /// `Some(c)` when the matrix is `c * Id`.
    pub fn as_scalar(&self) -> Option<f64> {
        let d = self.dim;
        let c = *self.entries.first()?;
        let ok = (0..d).all(|i| (0..d).all(|j| self.entries[i * d + j] == if i == j { c } else { 0.0 }));
        ok.then_some(c)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `out += c * M v` on one lattice vector.
    pub fn apply_add(&self, v: &[f64], out: &mut [f64], c: f64) {
        let d = self.dim;
        for (o, row) in out[..d].iter_mut().zip(self.entries.chunks_exact(d)) {
            let s: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            *o += c * s;
        }
    }

    /// Applies the matrix to every consecutive `d`-chunk of `row`.
    pub fn apply_chunks(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; row.len()];
        for (src, dst) in row.chunks(self.dim).zip(out.chunks_mut(self.dim)) {
            self.apply_add(src, dst, 1.0);
        }
        out
    }
}

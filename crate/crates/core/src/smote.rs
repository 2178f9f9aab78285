//! SMOTE: synthetic minority samples by interpolating towards nearest
//! minority-class neighbours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::matrix::squared_distance;
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            n_samples: 75,
            seed: 0,
        }
    }
}

/// For each row, the indices of its `k` nearest other rows (Euclidean),
/// nearest first, ties broken by lower index.
pub fn knn_minority(x: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = x.rows();
    if k == 0 || n <= k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    let mut table = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        let xi = x.row(i);
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(xi, x.row(j)), j)),
        );
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        table.push(cand[..k].iter().map(|&(_, j)| j).collect());
    }
    Ok(table)
}

/// One synthetic row: the base index, the chosen neighbour and the
/// interpolation weight that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteDraw {
    pub base: usize,
    pub neighbor: usize,
    pub alpha: f64,
}

/// Draws `(base, neighbour, alpha)` triples without materialising rows.
pub fn draw_plan(neighbors: &[Vec<usize>], n_samples: usize, seed: u64) -> Vec<SmoteDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| {
            let base = rng.random_range(0..neighbors.len());
            let nb = &neighbors[base];
            let neighbor = nb[rng.random_range(0..nb.len())];
            let alpha: f64 = rng.random();
            SmoteDraw {
                base,
                neighbor,
                alpha,
            }
        })
        .collect()
}

pub fn interpolate(x: &Matrix, draw: &SmoteDraw) -> Vec<f64> {
    let a = x.row(draw.base);
    let b = x.row(draw.neighbor);
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| ai + draw.alpha * (bi - ai))
        .collect()
}

/// Generates `cfg.n_samples` synthetic minority rows. `k` is capped at
/// `n - 1` so very small minority sets still work.
pub fn generate(minority: &Matrix, cfg: &SmoteConfig) -> Result<Matrix> {
    let n = minority.rows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 1, got: n });
    }
    if cfg.n_samples == 0 {
        return Ok(Matrix::zeros(0, minority.cols()));
    }
    let k = cfg.k_neighbors.min(n - 1);
    let table = knn_minority(minority, k)?;
    let plan = draw_plan(&table, cfg.n_samples, cfg.seed);
    let rows: Vec<Vec<f64>> = plan.iter().map(|d| interpolate(minority, d)).collect();
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_neighbors() {
        let x = Matrix::column(&[0.0, 1.0, 10.0]);
        assert_eq!(knn_minority(&x, 1).unwrap(), vec![vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn duplicates_are_neighbors_but_self_is_not() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]]).unwrap();
        let t = knn_minority(&x, 1).unwrap();
        assert_eq!(t[0], vec![1]);
        assert_eq!(t[1], vec![0]);
    }

    #[test]
    fn too_few_rows() {
        assert!(knn_minority(&Matrix::column(&[0.0, 1.0]), 2).is_err());
        assert!(generate(&Matrix::column(&[0.0]), &SmoteConfig::default()).is_err());
    }

    #[test]
    fn endpoints() {
        let x = Matrix::from_rows(&[[0.0, 2.0], [4.0, -2.0]]).unwrap();
        let d0 = SmoteDraw {
            base: 0,
            neighbor: 1,
            alpha: 0.0,
        };
        assert_eq!(interpolate(&x, &d0), x.row(0));
        let d1 = SmoteDraw { alpha: 1.0, ..d0 };
        assert_eq!(interpolate(&x, &d1), x.row(1));
    }

    #[test]
    fn counts_and_seed() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        for n in [50, 75, 100] {
            let cfg = SmoteConfig {
                k_neighbors: 2,
                n_samples: n,
                seed: 9,
            };
            let a = generate(&x, &cfg).unwrap();
            assert_eq!(a.rows(), n);
            assert_eq!(a, generate(&x, &cfg).unwrap());
            assert_ne!(a, generate(&x, &SmoteConfig { seed: 10, ..cfg }).unwrap());
        }
    }
}

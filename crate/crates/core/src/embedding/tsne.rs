//! Exact t-SNE with per-point Gaussian bandwidths.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmbeddingError;

pub const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// `None` selects `max(50, N / 12)`.
    pub learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: None,
            seed: 7,
        }
    }
}

/// Row-stochastic neighbour probabilities and the bandwidth search outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalP {
    /// `p(j | i)`; zero diagonal.
    pub p: Array2<f64>,
    pub beta: Vec<f64>,
    /// Achieved perplexity per row.
    pub perplexity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    /// `N × 2`.
    pub coords: Array2<f64>,
    pub kl: f64,
    /// KL divergence after every iteration, measured without exaggeration.
    pub kl_history: Vec<f64>,
    pub conditional: ConditionalP,
}

/// Bisection tolerance on the row entropy (natural log).
const ENTROPY_TOL: f64 = 1e-10;

fn squared_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    d.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
        for j in 0..n {
            if j != i {
                row[j] = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        }
    });
    d
}

/// Fills `row` with `exp(−β·d)` over `j ≠ i`, normalized; returns the entropy.
fn row_distribution(d: &[f64], i: usize, beta: f64, d_min: f64, row: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (j, (&dj, p)) in d.iter().zip(row.iter_mut()).enumerate() {
        *p = if j == i { 0.0 } else { (-beta * (dj - d_min)).exp() };
        sum += *p;
    }
    let mut weighted = 0.0;
    for (j, p) in row.iter_mut().enumerate() {
        *p /= sum;
        if j != i {
            weighted += *p * (d[j] - d_min);
        }
    }
    // H = log Σ exp(−β(d − d_min)) + β·E[d − d_min]
    sum.ln() + beta * weighted
}

/// Solves each row's precision so its perplexity equals the target.
pub fn conditional_probabilities(x: ArrayView2<'_, f64>, perplexity: f64) -> Result<ConditionalP, EmbeddingError> {
    check_inputs(x, perplexity)?;
    let n = x.nrows();
    let d = squared_distances(x);
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    let solved: Vec<(f64, f64)> = p
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let di = d.row(i);
            let di = di.as_slice().expect("row-major distances");
            let d_min = di.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
            let out = row.as_slice_mut().expect("row-major probabilities");
            let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
            let mut beta = 1.0 / di.iter().sum::<f64>().max(f64::MIN_POSITIVE) * (n as f64);
            let mut entropy = row_distribution(di, i, beta, d_min, out);
            for _ in 0..200 {
                let gap = entropy - target;
                if gap.abs() < ENTROPY_TOL {
                    break;
                }
                if gap > 0.0 {
                    lo = beta;
                    beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = 0.5 * (beta + lo);
                }
                entropy = row_distribution(di, i, beta, d_min, out);
            }
            (beta, entropy.exp())
        })
        .collect();
    Ok(ConditionalP {
        p,
        beta: solved.iter().map(|s| s.0).collect(),
        perplexity: solved.iter().map(|s| s.1).collect(),
    })
}

fn check_inputs(x: ArrayView2<'_, f64>, perplexity: f64) -> Result<(), EmbeddingError> {
    let n = x.nrows();
    if !(perplexity > 0.0) || perplexity * 3.0 >= n.saturating_sub(1) as f64 {
        return Err(EmbeddingError::PerplexityTooLarge { perplexity, points: n });
    }
    if n < MIN_POINTS {
        return Err(EmbeddingError::TooFewPoints(n));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::DegenerateInput("non-finite latent value".into()));
    }
    let first = x.row(0);
    if x.outer_iter().all(|r| r == first) {
        return Err(EmbeddingError::DegenerateInput("all points are identical".into()));
    }
    Ok(())
}

fn kl_divergence(p: &Array2<f64>, num: &Array2<f64>, z: f64) -> f64 {
    let mut kl = 0.0;
    for (pij, qn) in p.iter().zip(num.iter()) {
        if *pij > 0.0 {
            let q = (qn / z).max(f64::MIN_POSITIVE);
            kl += pij * (pij / q).ln();
        }
    }
    kl
}

/// Embeds the rows of `x` in two dimensions.
pub fn project_tsne(x: ArrayView2<'_, f64>, cfg: &TsneConfig) -> Result<TsneOutput, EmbeddingError> {
    let conditional = conditional_probabilities(x, cfg.perplexity)?;
    let n = x.nrows();
    let nf = n as f64;
    let mut p = &conditional.p + &conditional.p.t();
    p /= 2.0 * nf;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y = Array2::from_shape_fn((n, 2), |_| init.sample(&mut rng));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let lr = cfg.learning_rate.unwrap_or_else(|| (nf / 12.0).max(50.0));
    let mut kl_history = Vec::with_capacity(cfg.iterations);
    let mut num = Array2::<f64>::zeros((n, n));

    for it in 0..cfg.iterations {
        let exaggerate = it < cfg.exaggeration_iterations;
        let momentum = if exaggerate { 0.5 } else { 0.8 };
        let factor = if exaggerate { cfg.exaggeration } else { 1.0 };

        // Student-t kernel (1 + |y_i − y_j|²)⁻¹
        num.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            let (yi0, yi1) = (y[[i, 0]], y[[i, 1]]);
            for j in 0..n {
                row[j] = if i == j {
                    0.0
                } else {
                    let (a, b) = (yi0 - y[[j, 0]], yi1 - y[[j, 1]]);
                    1.0 / (1.0 + a * a + b * b)
                };
            }
        });
        let z: f64 = num.sum();
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i != j {
                        let w = (factor * p[[i, j]] - num[[i, j]] / z) * num[[i, j]];
                        g[0] += w * (y[[i, 0]] - y[[j, 0]]);
                        g[1] += w * (y[[i, 1]] - y[[j, 1]]);
                    }
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();
        kl_history.push(kl_divergence(&p, &num, z));

        for i in 0..n {
            for k in 0..2 {
                let gk = grad[i][k];
                let gain = &mut gains[[i, k]];
                *gain = if (gk > 0.0) != (update[[i, k]] > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
                *gain = gain.max(0.01);
                update[[i, k]] = momentum * update[[i, k]] - lr * *gain * gk;
                y[[i, k]] += update[[i, k]];
            }
        }
        let mean = y.mean_axis(Axis(0)).expect("non-empty layout");
        y -= &mean;
    }

    // objective at the returned layout
    let final_num = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            let (a, b) = (y[[i, 0]] - y[[j, 0]], y[[i, 1]] - y[[j, 1]]);
            1.0 / (1.0 + a * a + b * b)
        }
    });
    let kl = kl_divergence(&p, &final_num, final_num.sum());
    if y.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::DegenerateInput("layout became non-finite".into()));
    }
    Ok(TsneOutput { coords: y, kl, kl_history, conditional })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(per: usize, dim: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 * per;
        let x = Array2::from_shape_fn((n, dim), |(i, d)| {
            let c = i / per;
            let centre = if d % 3 == c { sep } else { 0.0 };
            centre + rng.random_range(-1.0..1.0)
        });
        (x, (0..n).map(|i| i / per).collect())
    }

    #[test]
    fn rows_are_distributions_at_target_perplexity() {
        let (x, _) = blobs(20, 6, 4.0, 1);
        let c = conditional_probabilities(x.view(), 10.0).unwrap();
        for (i, row) in c.p.outer_iter().enumerate() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert_eq!(row[i], 0.0);
            let h: f64 = -row.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
            assert!((h.exp() - 10.0).abs() < 1e-6);
            assert!((c.perplexity[i] - 10.0).abs() < 1e-6);
        }
    }

    #[test]
    fn guards() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f64);
        assert!(matches!(
            project_tsne(x.view(), &TsneConfig::default()),
            Err(EmbeddingError::PerplexityTooLarge { .. })
        ));
        let same = Array2::from_elem((40, 3), 1.5);
        let cfg = TsneConfig { perplexity: 5.0, ..TsneConfig::default() };
        assert!(matches!(project_tsne(same.view(), &cfg), Err(EmbeddingError::DegenerateInput(_))));
    }

    #[test]
    fn deterministic_and_centered() {
        let (x, _) = blobs(10, 5, 5.0, 2);
        let cfg = TsneConfig { perplexity: 5.0, iterations: 300, ..TsneConfig::default() };
        let a = project_tsne(x.view(), &cfg).unwrap();
        let b = project_tsne(x.view(), &cfg).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.kl_history.len(), 300);
        let mean = a.coords.mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|m| m.abs() < 1e-9));
    }

    #[test]
    fn duplicates_land_together() {
        let (mut x, _) = blobs(40, 5, 5.0, 3);
        let copy = x.row(4).to_owned();
        x.row_mut(90).assign(&copy);
        let cfg = TsneConfig { perplexity: 30.0, ..TsneConfig::default() };
        let out = project_tsne(x.view(), &cfg).unwrap();
        let c = &out.coords;
        let dist = |i: usize, j: usize| ((c[[i, 0]] - c[[j, 0]]).powi(2) + (c[[i, 1]] - c[[j, 1]]).powi(2)).sqrt();
        let diameter = (0..c.nrows()).flat_map(|i| (0..c.nrows()).map(move |j| (i, j))).map(|(i, j)| dist(i, j)).fold(0.0, f64::max);
        assert!(dist(4, 90) < 0.01 * diameter, "{} vs {}", dist(4, 90), diameter);
    }

    #[test]
    fn objective_falls_after_exaggeration() {
        let (x, _) = blobs(20, 8, 3.0, 4);
        let cfg = TsneConfig { perplexity: 10.0, ..TsneConfig::default() };
        let out = project_tsne(x.view(), &cfg).unwrap();
        let h = &out.kl_history;
        assert!(h[999] < h[260]);
        assert!(out.kl >= 0.0);
    }
}

//! Non-negative CP decomposition by hierarchical alternating least squares.
//!
//! Approximates the `F x T x N` tensor by `sum_k a_k x b_k x c_k` with all
//! three factors non-negative. Each sweep updates `A`, then `B`, then `C`;
//! within a mode every column is replaced by its closed-form minimizer given
//! all other columns (already-updated columns included), projected onto
//! `[epsilon, inf)`.
//!
//! Components shared by many recordings at the same time positions survive
//! the low-rank fit; events that appear in a single recording do not.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmf::{check_non_negative, uniform_factor, SolverConfig};
use crate::tensor::{cp_reconstruct, dist_sq, mttkrp, sum_sq, Matrix, Tensor3};

/// Fitted CP factors. `fit_history[0]` is the objective at initialization,
/// followed by one entry per sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    /// Spectral components, `F x K`.
    pub a: Matrix,
    /// Temporal components, `T x K`.
    pub b: Matrix,
    /// Recording components, `N x K`.
    pub c: Matrix,
    pub rank: usize,
    pub fit_history: Vec<f64>,
}

impl CpModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let rank = a.cols();
        if b.cols() != rank || c.cols() != rank {
            return Err(Error::DimensionMismatch(format!(
                "factor ranks disagree: {}, {}, {}",
                a.cols(),
                b.cols(),
                c.cols()
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            rank,
            fit_history: Vec::new(),
        })
    }

    pub fn reconstruct(&self) -> Tensor3 {
        cp_reconstruct(&self.a, &self.b, &self.c).expect("factor ranks agree by construction")
    }

    pub fn objective(&self) -> f64 {
        self.fit_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn sweeps(&self) -> usize {
        self.fit_history.len().saturating_sub(1)
    }

    /// Rescales every factor column to unit Euclidean norm and returns the
    /// absorbed per-component weights alongside the normalized model.
    pub fn normalized(&self) -> (Vec<f64>, CpModel) {
        let mut out = self.clone();
        let mut weights = vec![1.0; self.rank];
        for factor in [&mut out.a, &mut out.b, &mut out.c] {
            for (k, w) in weights.iter_mut().enumerate() {
                let norm = sum_sq(factor.col(k)).sqrt();
                if norm > 0.0 {
                    factor.col_mut(k).iter_mut().for_each(|v| *v /= norm);
                }
                *w *= norm;
            }
        }
        (weights, out)
    }
}

/// Largest rank accepted for a tensor of the given shape.
pub fn max_rank(dims: (usize, usize, usize)) -> usize {
    let (f, t, n) = dims;
    (t * n).min(f * n).min(f * t)
}

/// Fits a rank-`cfg.rank` non-negative CP model by HALS.
pub fn nncp_fit(x: &Tensor3, cfg: &SolverConfig) -> Result<CpModel> {
    cfg.validate()?;
    check_non_negative(x.values())?;
    let k = cfg.rank;
    let bound = max_rank(x.dims());
    if k > bound {
        return Err(Error::RankTooLarge { rank: k, bound });
    }
    let (nf, nt, nn) = x.dims();
    let numel = x.values().len() as f64;
    let eps = cfg.epsilon_floor;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mean = x.values().iter().sum::<f64>() / numel;
    let scale = (mean / k as f64).cbrt();
    let mut model = CpModel {
        a: uniform_factor(&mut rng, nf, k, scale),
        b: uniform_factor(&mut rng, nt, k, scale),
        c: uniform_factor(&mut rng, nn, k, scale),
        rank: k,
        fit_history: Vec::new(),
    };

    let objective = |m: &CpModel| dist_sq(x.values(), m.reconstruct().values());
    model.fit_history.push(objective(&model));

    for _ in 0..cfg.max_iters {
        let prev = *model.fit_history.last().unwrap();
        if prev == 0.0 {
            break;
        }
        for mode in 0..3 {
            let numer = mttkrp(x, &model.a, &model.b, &model.c, mode)?;
            let gram = {
                let (p, q) = match mode {
                    0 => (&model.b, &model.c),
                    1 => (&model.a, &model.c),
                    _ => (&model.a, &model.b),
                };
                p.t_matmul(p)?.hadamard(&q.t_matmul(q)?)?
            };
            let mut degenerate = Vec::new();
            let factor = match mode {
                0 => &mut model.a,
                1 => &mut model.b,
                _ => &mut model.c,
            };
            hals_update(factor, &numer, &gram, eps, &mut degenerate);
            if !degenerate.is_empty() {
                let residual_rms = (prev / numel).sqrt();
                reinit_columns(&mut model, &degenerate, residual_rms, &mut rng);
            }
        }
        debug_assert!(
            model.a.min_value() >= 0.0 && model.b.min_value() >= 0.0 && model.c.min_value() >= 0.0
        );
        let obj = objective(&model);
        model.fit_history.push(obj);
        if cfg.converged(prev, obj) {
            break;
        }
    }
    Ok(model)
}

/// In-place Gauss-Seidel column sweep for one factor:
/// `f_k <- max(eps, f_k + (M_k - F G_k) / G_kk)`.
fn hals_update(
    factor: &mut Matrix,
    numer: &Matrix,
    gram: &Matrix,
    eps: f64,
    degenerate: &mut Vec<usize>,
) {
    let (rows, k) = (factor.rows(), factor.cols());
    let mut fg = vec![0.0; rows];
    for kk in 0..k {
        let gkk = gram.get(kk, kk);
        if !(gkk >= f64::MIN_POSITIVE) {
            degenerate.push(kk);
            continue;
        }
        fg.fill(0.0);
        for j in 0..k {
            let g = gram.get(j, kk);
            if g == 0.0 {
                continue;
            }
            for (acc, v) in fg.iter_mut().zip(factor.col(j)) {
                *acc += v * g;
            }
        }
        let m = numer.col(kk);
        for (i, v) in factor.col_mut(kk).iter_mut().enumerate() {
            *v = (*v + (m[i] - fg[i]) / gkk).max(eps);
        }
    }
}

/// Restarts components whose Gram diagonal vanished with uniform noise at
/// the current residual magnitude.
fn reinit_columns(model: &mut CpModel, columns: &[usize], residual_rms: f64, rng: &mut ChaCha8Rng) {
    let scale = residual_rms.cbrt();
    for &kk in columns {
        warn!("CP component {kk} collapsed; reinitializing");
        for factor in [&mut model.a, &mut model.b, &mut model.c] {
            let fresh = uniform_factor(rng, factor.rows(), 1, scale);
            factor.col_mut(kk).copy_from_slice(fresh.col(0));
        }
    }
}

/// Denoised tensor `sum_k a_k x b_k x c_k`.
pub fn nncp_denoise(model: &CpModel) -> Tensor3 {
    model.reconstruct()
}

/// Elbow rule: the candidate farthest from the chord joining the first and
/// last `(K, error)` points. Only interior candidates are eligible; ties go
/// to the smaller `K`.
pub fn select_rank(errors_by_k: &[(usize, f64)]) -> Result<usize> {
    if errors_by_k.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "elbow selection needs at least 3 candidate ranks, got {}",
            errors_by_k.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = errors_by_k.iter().map(|&(k, e)| (k as f64, e)).collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    if pts.windows(2).any(|w| w[1].1 > w[0].1) {
        warn!("fit error is not non-increasing in K; elbow may be meaningless");
    }
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[pts.len() - 1];
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = dx.hypot(dy);
    let mut best = (pts[1].0, f64::NEG_INFINITY);
    for &(x, y) in &pts[1..pts.len() - 1] {
        let dist = if norm > 0.0 {
            (dy * (x - x0) - dx * (y - y0)).abs() / norm
        } else {
            0.0
        };
        if dist > best.1 {
            best = (x, dist);
        }
    }
    Ok(best.0 as usize)
}

//! Non-negative matrix factorization by multiplicative updates.
//!
//! Minimizes `||X - A B^T||_F^2` over `A >= 0` (`F x K`, spectral motifs) and
//! `B >= 0` (`TN x K`, temporal activations) for the matricized
//! multi-recording spectrogram, then rebuilds the denoised tensor from
//! `A B^T`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dist_sq, gemm, tensorize, Matrix, Tensor3};

/// Stopping rule, rank and seed shared by the NMF and CP solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once `(obj_prev - obj) / obj_prev < rel_tol`.
    pub rel_tol: f64,
    pub seed: u64,
    /// Added to multiplicative-update denominators; lower bound of HALS
    /// column entries.
    pub epsilon_floor: f64,
}

impl SolverConfig {
    pub const DEFAULT_MAX_ITERS: usize = 500;
    pub const DEFAULT_REL_TOL: f64 = 1e-6;
    pub const DEFAULT_EPSILON: f64 = 1e-12;

    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iters: Self::DEFAULT_MAX_ITERS,
            rel_tol: Self::DEFAULT_REL_TOL,
            seed: 0,
            epsilon_floor: Self::DEFAULT_EPSILON,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.epsilon_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_floor must be positive, got {}",
                self.epsilon_floor
            )));
        }
        Ok(())
    }

    /// True when the objective moved by less than the relative tolerance.
    pub(crate) fn converged(&self, prev: f64, current: f64) -> bool {
        if prev <= 0.0 {
            return true;
        }
        (prev - current) / prev < self.rel_tol
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(10)
    }
}

/// Fitted factor pair. `fit_history[0]` is the objective at initialization,
/// followed by one entry per completed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfModel {
    pub a: Matrix,
    pub b: Matrix,
    pub rank: usize,
    pub fit_history: Vec<f64>,
}

impl NmfModel {
    /// `A B^T`.
    pub fn reconstruct(&self) -> Matrix {
        self.a
            .matmul_t(&self.b)
            .expect("factor ranks agree by construction")
    }

    pub fn objective(&self) -> f64 {
        *self.fit_history.last().expect("history holds the initial objective")
    }

    pub fn iterations(&self) -> usize {
        self.fit_history.len() - 1
    }
}

/// Returns an error naming the first negative (or NaN) entry.
pub(crate) fn check_non_negative(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v >= 0.0)) {
        None => Ok(()),
        Some(index) => Err(Error::NegativeInput {
            index,
            value: values[index],
        }),
    }
}

/// Factor entries i.i.d. uniform on (0, 1], times `scale`.
pub(crate) fn uniform_factor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| (1.0 - rng.random::<f64>()) * scale)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Fits `x_mat ~ A B^T` with Lee-Seung multiplicative updates.
pub fn nmf_fit(x_mat: &Matrix, cfg: &SolverConfig) -> Result<NmfModel> {
    cfg.validate()?;
    check_non_negative(x_mat.values())?;
    let (nf, ntn) = (x_mat.rows(), x_mat.cols());
    let k = cfg.rank;
    let bound = nf.min(ntn);
    if k > bound {
        return Err(Error::RankTooLarge { rank: k, bound });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = (mean(x_mat.values()) / k as f64).sqrt();
    let mut a = uniform_factor(&mut rng, nf, k, scale);
    let mut b = uniform_factor(&mut rng, ntn, k, scale);
    let eps = cfg.epsilon_floor;

    let mut recon = vec![0.0; nf * ntn];
    let mut objective = |a: &Matrix, b: &Matrix| {
        gemm(1.0, a.view(), b.view().t(), 0.0, &mut recon);
        dist_sq(x_mat.values(), &recon)
    };

    let mut history = vec![objective(&a, &b)];
    let mut numer_a = Matrix::zeros(nf, k);
    let mut numer_b = Matrix::zeros(ntn, k);
    let mut gram = Matrix::zeros(k, k);
    let mut denom_a = Matrix::zeros(nf, k);
    let mut denom_b = Matrix::zeros(ntn, k);

    for _ in 0..cfg.max_iters {
        let prev = *history.last().unwrap();
        if prev == 0.0 {
            break;
        }

        // A <- A * (X B) / (A B^T B + eps)
        gemm(1.0, x_mat.view(), b.view(), 0.0, numer_a.values_mut());
        gemm(1.0, b.view().t(), b.view(), 0.0, gram.values_mut());
        gemm(1.0, a.view(), gram.view(), 0.0, denom_a.values_mut());
        multiplicative_step(&mut a, &numer_a, &denom_a, eps);

        // B <- B * (X^T A) / (B A^T A + eps)
        gemm(1.0, x_mat.view().t(), a.view(), 0.0, numer_b.values_mut());
        gemm(1.0, a.view().t(), a.view(), 0.0, gram.values_mut());
        gemm(1.0, b.view(), gram.view(), 0.0, denom_b.values_mut());
        multiplicative_step(&mut b, &numer_b, &denom_b, eps);

        debug_assert!(a.min_value() >= 0.0 && b.min_value() >= 0.0);
        let obj = objective(&a, &b);
        history.push(obj);
        if cfg.converged(prev, obj) {
            break;
        }
    }

    Ok(NmfModel {
        a,
        b,
        rank: k,
        fit_history: history,
    })
}

fn multiplicative_step(factor: &mut Matrix, numer: &Matrix, denom: &Matrix, eps: f64) {
    for ((v, n), d) in factor
        .values_mut()
        .iter_mut()
        .zip(numer.values())
        .zip(denom.values())
    {
        *v *= n / (d + eps);
    }
}

/// Rebuilds the denoised tensor `tensorize(A B^T)`.
pub fn nmf_denoise(model: &NmfModel, dim_t: usize, dim_n: usize) -> Result<Tensor3> {
    if model.b.rows() != dim_t * dim_n {
        return Err(Error::DimensionMismatch(format!(
            "model has {} temporal rows but T*N = {}",
            model.b.rows(),
            dim_t * dim_n
        )));
    }
    tensorize(&model.reconstruct(), dim_t, dim_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{sum_sq, FrobeniusSq};

    fn rel_fit(x: &Matrix, model: &NmfModel) -> f64 {
        (model.objective() / x.frobenius_sq()).sqrt()
    }

    fn random_nonneg(seed: u64, r: usize, c: usize) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| rng.random::<f64>())
    }

    #[test]
    fn rank_one_outer_product_is_recovered() {
        let x = Matrix::from_rows(&[vec![1., 1., 1.], vec![2., 2., 2.]]).unwrap();
        let model = nmf_fit(&x, &SolverConfig::new(1).with_max_iters(2000).with_rel_tol(1e-15))
            .unwrap();
        assert!(rel_fit(&x, &model) < 1e-5, "fit {}", rel_fit(&x, &model));
        // up to a positive scale exchange: a ∝ [1, 2], b ∝ [1, 1, 1]
        let (a, b) = (model.a.col(0), model.b.col(0));
        assert!((a[1] / a[0] - 2.0).abs() < 1e-4);
        assert!(b.iter().all(|v| (v / b[0] - 1.0).abs() < 1e-4));
        assert!(a[0] > 0.0 && b[0] > 0.0);
    }

    #[test]
    fn zero_matrix_stays_zero() {
        let x = Matrix::zeros(4, 6);
        let model = nmf_fit(&x, &SolverConfig::new(2)).unwrap();
        assert_eq!(model.objective(), 0.0);
        assert!(model.reconstruct().values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn exact_rank_three_within_iteration_budget() {
        let mut best = f64::INFINITY;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let w = uniform_factor(&mut rng, 20, 3, 1.0);
            let h = uniform_factor(&mut rng, 60, 3, 1.0);
            let x = w.matmul_t(&h).unwrap();
            let cfg = SolverConfig::new(3).with_seed(seed).with_max_iters(2000);
            let model = nmf_fit(&x, &cfg).unwrap();
            best = best.min(rel_fit(&x, &model));
        }
        assert!(best < 1e-3, "best relative fit {best}");
    }

    #[test]
    fn rejects_negative_entries_and_oversized_rank() {
        let mut x = Matrix::filled(3, 4, 1.0);
        x.set(1, 2, -0.5);
        assert!(matches!(
            nmf_fit(&x, &SolverConfig::new(1)),
            Err(Error::NegativeInput { index: 7, .. })
        ));
        let x = Matrix::filled(3, 4, 1.0);
        assert!(matches!(
            nmf_fit(&x, &SolverConfig::new(4)),
            Err(Error::RankTooLarge { rank: 4, bound: 3 })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let x = Matrix::filled(3, 4, 1.0);
        assert!(nmf_fit(&x, &SolverConfig::new(0)).is_err());
        assert!(nmf_fit(&x, &SolverConfig::new(1).with_rel_tol(0.0)).is_err());
    }

    #[test]
    fn objective_is_monotone_and_factors_non_negative() {
        for seed in 0..10 {
            let x = random_nonneg(seed, 12 + seed as usize, 40);
            let model = nmf_fit(&x, &SolverConfig::new(4).with_seed(seed)).unwrap();
            let scale = x.frobenius_sq();
            for w in model.fit_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0] + 1e-15 * scale);
            }
            assert!(model.a.min_value() >= 0.0 && model.b.min_value() >= 0.0);
        }
    }

    #[test]
    fn tighter_tolerance_never_ends_worse() {
        let x = random_nonneg(7, 16, 50);
        let loose = nmf_fit(&x, &SolverConfig::new(3).with_rel_tol(1e-3)).unwrap();
        let tight = nmf_fit(&x, &SolverConfig::new(3).with_rel_tol(1e-7)).unwrap();
        assert!(tight.objective() <= loose.objective());
        assert!(tight.iterations() >= loose.iterations());
    }

    #[test]
    fn column_rescaling_keeps_reconstruction() {
        let x = random_nonneg(4, 10, 30);
        let model = nmf_fit(&x, &SolverConfig::new(3)).unwrap();
        let mut scaled = model.clone();
        let s = [2.5, 0.1, 7.0];
        for (k, &sk) in s.iter().enumerate() {
            scaled.a.col_mut(k).iter_mut().for_each(|v| *v *= sk);
            scaled.b.col_mut(k).iter_mut().for_each(|v| *v /= sk);
        }
        let (r0, r1) = (model.reconstruct(), scaled.reconstruct());
        assert!(dist_sq(r0.values(), r1.values()).sqrt() <= 1e-12 * sum_sq(r0.values()).sqrt());
    }

    #[test]
    fn denoise_reshapes_reconstruction() {
        let model = NmfModel {
            a: Matrix::column_vector(&[1.0]).unwrap(),
            b: Matrix::filled(6, 1, 1.0),
            rank: 1,
            fit_history: vec![0.0],
        };
        let x = nmf_denoise(&model, 3, 2).unwrap();
        assert_eq!(x.dims(), (1, 3, 2));
        assert!(x.values().iter().all(|&v| v == 1.0));
        assert!(nmf_denoise(&model, 4, 2).is_err());
    }

    #[test]
    fn denoise_of_exact_rank_fit_matches_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = uniform_factor(&mut rng, 8, 2, 1.0);
        let h = uniform_factor(&mut rng, 5 * 4, 2, 1.0);
        let x = tensorize(&w.matmul_t(&h).unwrap(), 5, 4).unwrap();
        let model = nmf_fit(
            &crate::tensor::matricize(&x),
            &SolverConfig::new(2).with_max_iters(3000).with_rel_tol(1e-12),
        )
        .unwrap();
        let d = nmf_denoise(&model, 5, 4).unwrap();
        let rel = (dist_sq(d.values(), x.values()) / x.frobenius_sq()).sqrt();
        assert!(rel < 1e-3, "relative error {rel}");
        assert!(d.min_value() >= 0.0);
    }
}

//! Kalman recursion over a future-movement vector, with reverse-mode
//! derivatives of each step.
//!
//! State: the `tau_f` per-frame movements along one axis. The process model
//! shifts the horizon by one frame and repeats the final movement; the
//! observation model is the identity with diagonal noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gaussian belief over one axis of a future trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FilterState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        assert_eq!(cov.nrows(), mean.len());
        assert_eq!(cov.ncols(), mean.len());
        Self { mean, cov }
    }

    /// Isotropic prior `N(mean, sigma0^2 I)`.
    pub fn isotropic(mean: DVector<f64>, sigma0: f64) -> Self {
        let n = mean.len();
        Self { mean, cov: DMatrix::identity(n, n) * (sigma0 * sigma0) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Largest asymmetry `|S_ij - S_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.cov - self.cov.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// Shift-and-pad dynamics with fixed diagonal process noise `q I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    pub dim: usize,
    pub q: f64,
}

impl ProcessModel {
    pub fn new(dim: usize, q: f64) -> Self {
        assert!(dim >= 1);
        assert!(q >= 0.0 && q.is_finite());
        Self { dim, q }
    }

    /// Column selected by row `i` of the transition matrix.
    #[inline]
    pub fn source(&self, i: usize) -> usize {
        (i + 1).min(self.dim - 1)
    }

    /// Dense transition matrix: ones on the superdiagonal and in the
    /// bottom-right corner.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if j == self.source(i) { 1.0 } else { 0.0 })
    }

    pub fn noise(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.q
    }

    pub fn apply_mean(&self, mean: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| mean[self.source(i)])
    }

    /// `A S A^T + Q`.
    pub fn apply_cov(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::from_fn(self.dim, self.dim, |i, j| cov[(self.source(i), self.source(j))]);
        for i in 0..self.dim {
            out[(i, i)] += self.q;
        }
        out
    }

    /// `A^T g`.
    pub fn transpose_mean(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for i in 0..self.dim {
            out[self.source(i)] += g[i];
        }
        out
    }

    /// `A^T G A`.
    pub fn transpose_cov(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let si = self.source(i);
            for j in 0..self.dim {
                out[(si, self.source(j))] += g[(i, j)];
            }
        }
        out
    }
}

/// Identity observation with diagonal noise `diag(r_diag)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub r_diag: DVector<f64>,
}

impl ObservationModel {
    /// Noise variances from standard deviations: `R = diag(sigma^2)`.
    pub fn from_std(sigma: &[f64]) -> Self {
        Self { r_diag: DVector::from_iterator(sigma.len(), sigma.iter().map(|s| s * s)) }
    }
}

pub fn predict_step(state: &FilterState, process: &ProcessModel) -> FilterState {
    FilterState { mean: process.apply_mean(&state.mean), cov: process.apply_cov(&state.cov) }
}

/// Quantities shared by every observation fused against the same prior
/// covariance and noise.
#[derive(Debug, Clone)]
pub struct GainTape {
    pub prior_cov: DMatrix<f64>,
    pub r_diag: DVector<f64>,
    pub s_inv: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// `I - K`.
    pub residual: DMatrix<f64>,
    pub post_cov: DMatrix<f64>,
}

fn invert_spd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = s.clone().cholesky() {
        let inv = ch.inverse();
        return Ok((&inv + inv.transpose()) * 0.5);
    }
    s.clone().try_inverse().ok_or_else(|| {
        Error::SingularInnovation(format!("{0}x{0} innovation covariance is not invertible", s.nrows()))
    })
}

/// Gain and Joseph-form posterior covariance for prior covariance `prior_cov`.
pub fn compute_gain(prior_cov: &DMatrix<f64>, obs: &ObservationModel) -> Result<GainTape> {
    let n = prior_cov.nrows();
    assert_eq!(obs.r_diag.len(), n, "observation noise size");
    if obs.r_diag.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidInput("observation noise must be finite and non-negative".into()));
    }
    let mut s = prior_cov.clone();
    for i in 0..n {
        s[(i, i)] += obs.r_diag[i];
    }
    let s_inv = invert_spd(&s)?;
    let gain = prior_cov * &s_inv;
    let residual = DMatrix::identity(n, n) - &gain;
    let mut kr = gain.clone();
    for j in 0..n {
        kr.column_mut(j).scale_mut(obs.r_diag[j]);
    }
    let post = &residual * prior_cov * residual.transpose() + &kr * gain.transpose();
    let post_cov = (&post + post.transpose()) * 0.5;
    Ok(GainTape { prior_cov: prior_cov.clone(), r_diag: obs.r_diag.clone(), s_inv, gain, residual, post_cov })
}

/// Fuses observation `z` into the predicted belief `prior`.
pub fn update_step(prior: &FilterState, z: &DVector<f64>, obs: &ObservationModel) -> Result<FilterState> {
    let tape = compute_gain(&prior.cov, obs)?;
    let mean = &prior.mean + &tape.gain * (z - &prior.mean);
    Ok(FilterState { mean, cov: tape.post_cov })
}

/// Gradients flowing out of one update.
#[derive(Debug, Clone)]
pub struct GainGrad {
    pub prior_cov: DMatrix<f64>,
    pub r_diag: DVector<f64>,
}

/// Backward pass of the mean updates `mu_k = m_k + K (z_k - m_k)` for every
/// observation sharing `tape`, and of the Joseph covariance update.
///
/// Returns `(d prior means, d observations, d prior cov / d R)`.
pub fn update_backward(
    tape: &GainTape,
    prior_means: &[DVector<f64>],
    observations: &[DVector<f64>],
    g_means: &[DVector<f64>],
    g_post_cov: Option<&DMatrix<f64>>,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, GainGrad) {
    let n = tape.gain.nrows();
    let k = &tape.gain;
    let kt = k.transpose();
    let mut g_gain = DMatrix::<f64>::zeros(n, n);
    let mut g_prior_means = Vec::with_capacity(prior_means.len());
    let mut g_obs = Vec::with_capacity(prior_means.len());
    for ((m, z), g) in prior_means.iter().zip(observations).zip(g_means) {
        let e = z - m;
        g_gain += g * e.transpose();
        let gz = &kt * g;
        g_prior_means.push(g - &gz);
        g_obs.push(gz);
    }
    let mut g_prior_cov = DMatrix::<f64>::zeros(n, n);
    let mut g_r = DVector::<f64>::zeros(n);
    if let Some(g) = g_post_cov {
        // post = M P M^T + K R K^T with M = I - K.
        let g_sym = g + g.transpose();
        let m = &tape.residual;
        let g_m = &g_sym * m * &tape.prior_cov;
        g_gain -= &g_m;
        g_prior_cov += m.transpose() * g * m;
        let mut kr = k.clone();
        for j in 0..n {
            kr.column_mut(j).scale_mut(tape.r_diag[j]);
        }
        g_gain += &g_sym * kr;
        let ktgk = &kt * g * k;
        for i in 0..n {
            g_r[i] += ktgk[(i, i)];
        }
    }
    // K = P S^{-1}, S = P + R.
    g_prior_cov += &g_gain * &tape.s_inv;
    let g_s_inv = &tape.prior_cov * &g_gain;
    let g_s = inverse_backward(&tape.s_inv, &g_s_inv);
    g_prior_cov += &g_s;
    for i in 0..n {
        g_r[i] += g_s[(i, i)];
    }
    (g_prior_means, g_obs, GainGrad { prior_cov: g_prior_cov, r_diag: g_r })
}

/// Given `Y = X^{-1}` and `dL/dY`, returns `dL/dX = -Y^T (dL/dY) Y^T`.
pub fn inverse_backward(y: &DMatrix<f64>, g_y: &DMatrix<f64>) -> DMatrix<f64> {
    let yt = y.transpose();
    -(&yt * g_y * &yt)
}

/// Backward of [`predict_step`]: `(A^T g_mean, A^T g_cov A)`.
pub fn predict_backward(process: &ProcessModel, g_mean: &DVector<f64>, g_cov: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    (process.transpose_mean(g_mean), process.transpose_cov(g_cov))
}

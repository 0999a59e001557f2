//! Logistic regression with weakly informative Student-t priors.
//!
//! The optimizer is IRLS with the t prior handled by the approximate-EM
//! reweighting: each iteration treats every prior as a normal whose
//! scale is refreshed from the current coefficient, which has the same
//! fixed point as the exact t-prior posterior mode. The prior applies
//! to internally centered predictors, so the intercept prior acts at
//! the predictor means. The returned covariance is the inverse of the
//! penalized information at the mode (Laplace approximation).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 200;
pub const GRAD_TOL: f64 = 1e-8;
const COV_RIDGE: f64 = 1e-10;

/// Prior and predictor layout for one logistic fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSpec {
    /// Predictor names, excluding the intercept.
    pub names: Vec<String>,
    pub prior_scale_coef: f64,
    pub prior_scale_intercept: f64,
    pub prior_df: f64,
}

impl LogitSpec {
    pub fn new(names: &[&str]) -> LogitSpec {
        LogitSpec {
            names: names.iter().map(|s| s.to_string()).collect(),
            prior_scale_coef: 2.5,
            prior_scale_intercept: 10.0,
            prior_df: 1.0,
        }
    }

    pub fn with_prior(mut self, df: f64, scale_coef: f64, scale_intercept: f64) -> LogitSpec {
        self.prior_df = df;
        self.prior_scale_coef = scale_coef;
        self.prior_scale_intercept = scale_intercept;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.prior_scale_coef <= 0.0 || self.prior_scale_intercept <= 0.0 || self.prior_df <= 0.0 {
            return Err(Error::Config("prior scales and df must be positive".into()));
        }
        Ok(())
    }

    /// Prior scale per centered coefficient, intercept first.
    fn scales(&self) -> Vec<f64> {
        let mut s = vec![self.prior_scale_intercept];
        s.extend(std::iter::repeat(self.prior_scale_coef).take(self.names.len()));
        s
    }
}

/// Prior settings shared by every regression in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub df: f64,
    pub scale_coef: f64,
    pub scale_intercept: f64,
}

impl Default for PriorConfig {
    fn default() -> PriorConfig {
        PriorConfig {
            df: 1.0,
            scale_coef: 2.5,
            scale_intercept: 10.0,
        }
    }
}

impl PriorConfig {
    pub fn spec(&self, names: &[&str]) -> LogitSpec {
        LogitSpec::new(names).with_prior(self.df, self.scale_coef, self.scale_intercept)
    }
}

/// A fitted logistic regression: posterior mode, Laplace covariance,
/// and the centering means that define the intercept prior.
#[derive(Debug, Clone)]
pub struct LogitModel {
    pub spec: LogitSpec,
    /// Coefficients on the raw predictor scale, intercept first.
    pub beta: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub centering: Vec<f64>,
    pub n_obs: usize,
    pub converged: bool,
}

impl LogitModel {
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Posterior standard deviation of each coefficient.
    pub fn sd(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.cov[(j, j)].sqrt()).collect()
    }

    /// Inverse-logit of the linear predictor at `x` (without intercept).
    pub fn prob(&self, x: &[f64]) -> f64 {
        predict_prob(self.beta.as_slice(), x)
    }
}

/// Overflow-safe inverse logit.
pub fn inv_logit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Probability for coefficient vector `beta` (intercept first) at
/// predictor values `x`.
pub fn predict_prob(beta: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), x.len() + 1);
    let mut z = beta[0];
    for (b, v) in beta[1..].iter().zip(x) {
        z += b * v;
    }
    inv_logit(z)
}

fn column_means(x: &[Vec<f64>], p: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let mut means = vec![0.0; p];
    for row in x {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    means
}

/// log t-density of `b` with df `nu` and scale `s`, up to an additive
/// constant that does not depend on `b`.
fn log_t_prior(b: f64, nu: f64, s: f64) -> f64 {
    -0.5 * (nu + 1.0) * (1.0 + b * b / (nu * s * s)).ln()
}

fn log_t_prior_grad(b: f64, nu: f64, s: f64) -> f64 {
    -(nu + 1.0) * b / (nu * s * s + b * b)
}

/// Penalized log-posterior (log-likelihood plus log t-prior density up
/// to constants) at raw-scale coefficients `beta`, using the same
/// internal centering convention as `fit`.
pub fn penalized_objective(spec: &LogitSpec, x: &[Vec<f64>], y: &[bool], beta: &[f64]) -> f64 {
    let p = spec.names.len();
    let means = column_means(x, p);
    let scales = spec.scales();
    let nu = spec.prior_df;

    let mut obj = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let mut z = beta[0];
        for (b, v) in beta[1..].iter().zip(row) {
            z += b * v;
        }
        // y*z - log(1 + e^z), computed stably
        let log1pe = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        obj += if yi { z } else { 0.0 } - log1pe;
    }
    // centered intercept = beta0 + sum_j beta_j * mean_j
    let bc0 = beta[0] + beta[1..].iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    obj += log_t_prior(bc0, nu, scales[0]);
    for j in 1..=p {
        obj += log_t_prior(beta[j], nu, scales[j]);
    }
    obj
}

/// Analytic gradient of `penalized_objective` with respect to the
/// raw-scale coefficients.
pub fn penalized_gradient(spec: &LogitSpec, x: &[Vec<f64>], y: &[bool], beta: &[f64]) -> Vec<f64> {
    let p = spec.names.len();
    let means = column_means(x, p);
    let scales = spec.scales();
    let nu = spec.prior_df;

    let mut grad = vec![0.0; p + 1];
    for (row, &yi) in x.iter().zip(y) {
        let mut z = beta[0];
        for (b, v) in beta[1..].iter().zip(row) {
            z += b * v;
        }
        let resid = (yi as u8) as f64 - inv_logit(z);
        grad[0] += resid;
        for (g, v) in grad[1..].iter_mut().zip(row) {
            *g += resid * v;
        }
    }
    let bc0 = beta[0] + beta[1..].iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    let pg0 = log_t_prior_grad(bc0, nu, scales[0]);
    grad[0] += pg0;
    for j in 1..=p {
        grad[j] += pg0 * means[j - 1] + log_t_prior_grad(beta[j], nu, scales[j]);
    }
    grad
}

/// Fits the penalized logistic regression. `x` holds one predictor row
/// per observation (no intercept column); `y` the binary outcomes.
pub fn fit(spec: &LogitSpec, x: &[Vec<f64>], y: &[bool]) -> Result<LogitModel> {
    spec.validate()?;
    let n = x.len();
    let p = spec.names.len();
    if n == 0 || n != y.len() {
        return Err(Error::Fit("empty design or mismatched outcome length".into()));
    }
    for row in x {
        if row.len() != p {
            return Err(Error::Fit(format!(
                "design row has {} predictors, spec names {}",
                row.len(),
                p
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite value in design matrix".into()));
        }
    }

    let d = p + 1;
    let means = column_means(x, p);
    // Centered design with intercept column.
    let mut xc = DMatrix::zeros(n, d);
    for (i, row) in x.iter().enumerate() {
        xc[(i, 0)] = 1.0;
        for j in 0..p {
            xc[(i, j + 1)] = row[j] - means[j];
        }
    }
    let yv: Vec<f64> = y.iter().map(|&b| (b as u8) as f64).collect();
    let scales = spec.scales();
    let nu = spec.prior_df;

    // Objective/gradient in centered coordinates; the prior applies
    // directly to the centered coefficients.
    let objective = |bc: &DVector<f64>| -> f64 {
        let eta = &xc * bc;
        let mut obj = 0.0;
        for i in 0..n {
            let z = eta[i];
            let log1pe = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            obj += yv[i] * z - log1pe;
        }
        for j in 0..d {
            obj += log_t_prior(bc[j], nu, scales[j]);
        }
        obj
    };

    let mut bc = DVector::zeros(d);
    let mut converged = false;
    let mut obj = objective(&bc);
    let mut final_hess: Option<DMatrix<f64>> = None;

    for _ in 0..MAX_ITER {
        let eta = &xc * &bc;
        let probs: Vec<f64> = (0..n).map(|i| inv_logit(eta[i])).collect();

        // Penalized gradient with the exact t prior.
        let mut grad = DVector::zeros(d);
        for i in 0..n {
            let r = yv[i] - probs[i];
            for j in 0..d {
                grad[j] += r * xc[(i, j)];
            }
        }
        for j in 0..d {
            grad[j] += log_t_prior_grad(bc[j], nu, scales[j]);
        }

        // EM surrogate: normal prior with scale refreshed from bc.
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..n {
            let w = (probs[i] * (1.0 - probs[i])).max(1e-10);
            for j in 0..d {
                let wx = w * xc[(i, j)];
                for k in j..d {
                    hess[(j, k)] += wx * xc[(i, k)];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                hess[(j, k)] = hess[(k, j)];
            }
            let sigma2 = (nu * scales[j] * scales[j] + bc[j] * bc[j]) / (nu + 1.0);
            hess[(j, j)] += 1.0 / sigma2;
        }

        if grad.amax() < GRAD_TOL {
            converged = true;
            final_hess = Some(hess);
            break;
        }

        let chol = Cholesky::new(hess.clone())
            .ok_or_else(|| Error::Fit("singular penalized information matrix".into()))?;
        let step = chol.solve(&grad);

        // Step-halving keeps the penalized objective non-decreasing.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &bc + &step * t;
            let cand_obj = objective(&cand);
            if cand_obj.is_finite() && cand_obj >= obj - 1e-12 {
                bc = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        final_hess = Some(hess);
    }

    let hess = match final_hess {
        Some(h) => h,
        None => return Err(Error::Fit("optimizer made no progress".into())),
    };
    let chol = Cholesky::new(hess)
        .ok_or_else(|| Error::Fit("singular penalized information matrix".into()))?;
    let cov_c = chol.inverse();

    // Translate back to the raw predictor scale: beta0 = bc0 - sum bj*mean_j.
    let mut a = DMatrix::identity(d, d);
    for j in 1..d {
        a[(0, j)] = -means[j - 1];
    }
    let mut beta = bc.clone();
    beta[0] = bc[0] - (1..d).map(|j| bc[j] * means[j - 1]).sum::<f64>();
    let cov = &a * cov_c * a.transpose();

    Ok(LogitModel {
        spec: spec.clone(),
        beta,
        cov,
        centering: means,
        n_obs: n,
        converged,
    })
}

/// One draw from the Gaussian posterior approximation
/// MVN(beta, cov), deterministic given the rng state.
pub fn draw_posterior<R: Rng>(model: &LogitModel, rng: &mut R) -> Result<DVector<f64>> {
    let d = model.dim();
    if model.cov.iter().all(|&v| v == 0.0) {
        return Ok(model.beta.clone());
    }
    let chol = Cholesky::new(model.cov.clone()).or_else(|| {
        let mut ridged = model.cov.clone();
        for j in 0..d {
            ridged[(j, j)] += COV_RIDGE;
        }
        Cholesky::new(ridged)
    });
    let chol = chol.ok_or_else(|| Error::Fit("posterior covariance not positive definite".into()))?;
    let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    Ok(&model.beta + chol.l() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec1() -> LogitSpec {
        LogitSpec::new(&["x1"])
    }

    #[test]
    fn intercept_only_symmetric_data() {
        let spec = LogitSpec::new(&[]);
        let x: Vec<Vec<f64>> = vec![vec![]; 100];
        let y: Vec<bool> = (0..100).map(|i| i < 50).collect();
        let m = fit(&spec, &x, &y).unwrap();
        assert!(m.converged);
        assert!(m.beta[0].abs() < 0.05, "intercept {}", m.beta[0]);
    }

    #[test]
    fn all_zero_beta_predicts_half() {
        assert_eq!(predict_prob(&[0.0, 0.0, 0.0], &[17.0, -3.0]), 0.5);
    }

    #[test]
    fn extreme_linear_predictor_saturates() {
        let p = predict_prob(&[-1000.0], &[]);
        assert_eq!(p, 0.0);
        let p = predict_prob(&[1000.0], &[]);
        assert_eq!(p, 1.0);
        assert!(p.is_finite());
    }

    #[test]
    fn paper_style_hand_arithmetic() {
        // logit^{-1}(-12.95 + 0.20*40 + 1.47*3.5) = logit^{-1}(0.195)
        let p = predict_prob(&[-12.95, 0.20, 1.47], &[40.0, 3.5]);
        assert_abs_diff_eq!(p, inv_logit(0.195), epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.5486, epsilon = 5e-4);
    }

    #[test]
    fn complete_separation_stays_finite_and_converges() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let m = fit(&spec1(), &x, &y).unwrap();
        assert!(m.converged);
        assert!(m.beta.iter().all(|b| b.is_finite()));
        assert!(m.beta.amax() < 50.0);
        let g = penalized_gradient(&spec1(), &x, &y, m.beta.as_slice());
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(gnorm < GRAD_TOL, "gradient norm {gnorm}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..3.0)])
            .collect();
        let y: Vec<bool> = x
            .iter()
            .map(|r| rng.gen_bool(inv_logit(0.3 + 0.8 * r[0] - 0.5 * r[1])))
            .collect();
        let spec = LogitSpec::new(&["a", "b"]);
        let beta = [0.2, 0.5, -0.3];
        let g = penalized_gradient(&spec, &x, &y, &beta);
        let h = 1e-5;
        for j in 0..3 {
            let mut hi = beta;
            let mut lo = beta;
            hi[j] += h;
            lo[j] -= h;
            let fd = (penalized_objective(&spec, &x, &y, &hi) - penalized_objective(&spec, &x, &y, &lo))
                / (2.0 * h);
            let rel = (g[j] - fd).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-4, "coef {j}: analytic {} vs fd {fd}", g[j]);
        }
    }

    #[test]
    fn flat_prior_matches_unpenalized_mle() {
        // Unpenalized Newton oracle on a separation-free instance.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 200;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let y: Vec<bool> = x.iter().map(|r| rng.gen_bool(inv_logit(0.4 + 0.9 * r[0]))).collect();

        let mut beta = [0.0f64, 0.0];
        for _ in 0..200 {
            let mut g = [0.0f64; 2];
            let mut h = [[0.0f64; 2]; 2];
            for (row, &yi) in x.iter().zip(&y) {
                let z = beta[0] + beta[1] * row[0];
                let p = inv_logit(z);
                let r = (yi as u8) as f64 - p;
                let w = p * (1.0 - p);
                let xv = [1.0, row[0]];
                for a in 0..2 {
                    g[a] += r * xv[a];
                    for b in 0..2 {
                        h[a][b] += w * xv[a] * xv[b];
                    }
                }
            }
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let d0 = (h[1][1] * g[0] - h[0][1] * g[1]) / det;
            let d1 = (h[0][0] * g[1] - h[1][0] * g[0]) / det;
            beta[0] += d0;
            beta[1] += d1;
            if g[0].abs().max(g[1].abs()) < 1e-12 {
                break;
            }
        }

        let spec = spec1().with_prior(1.0, 1e8, 1e8);
        let m = fit(&spec, &x, &y).unwrap();
        assert!(m.converged);
        assert_abs_diff_eq!(m.beta[0], beta[0], epsilon = 1e-4);
        assert_abs_diff_eq!(m.beta[1], beta[1], epsilon = 1e-4);
    }

    #[test]
    fn zero_covariance_draw_is_exact_mean() {
        let spec = LogitSpec::new(&[]);
        let model = LogitModel {
            spec,
            beta: DVector::from_vec(vec![1.25]),
            cov: DMatrix::zeros(1, 1),
            centering: vec![],
            n_obs: 10,
            converged: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = draw_posterior(&model, &mut rng).unwrap();
        assert_eq!(d[0], 1.25);
    }

    #[test]
    fn draws_are_deterministic_per_seed() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 7) as f64]).collect();
        let y: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        let m = fit(&spec1(), &x, &y).unwrap();
        let a = draw_posterior(&m, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = draw_posterior(&m, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn posterior_draw_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<bool> = x.iter().map(|r| rng.gen_bool(inv_logit(0.2 + r[0]))).collect();
        let m = fit(&spec1(), &x, &y).unwrap();

        let draws = 100_000;
        let mut sum = [0.0f64; 2];
        let mut sumsq = [[0.0f64; 2]; 2];
        let mut drng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..draws {
            let d = draw_posterior(&m, &mut drng).unwrap();
            for a in 0..2 {
                sum[a] += d[a];
                for b in 0..2 {
                    sumsq[a][b] += (d[a] - m.beta[a]) * (d[b] - m.beta[b]);
                }
            }
        }
        for a in 0..2 {
            let mean = sum[a] / draws as f64;
            let se = (m.cov[(a, a)] / draws as f64).sqrt();
            assert!((mean - m.beta[a]).abs() < 4.0 * se);
        }
        let mut frob_num = 0.0;
        let mut frob_den = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let c = sumsq[a][b] / draws as f64;
                frob_num += (c - m.cov[(a, b)]).powi(2);
                frob_den += m.cov[(a, b)].powi(2);
            }
        }
        assert!(frob_num.sqrt() / frob_den.sqrt() < 0.05);
    }

    #[test]
    fn monotone_in_positive_coefficients() {
        let beta = [0.1, 0.7, 0.2];
        let mut prev = 0.0;
        for i in 0..20 {
            let p = predict_prob(&beta, &[i as f64, 1.0]);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let x = vec![vec![f64::NAN]];
        let y = vec![true];
        assert!(fit(&spec1(), &x, &y).is_err());
    }
}

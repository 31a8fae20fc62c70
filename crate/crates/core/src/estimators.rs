//! Fidelity estimators.
//!
//! Scalar estimators for the basic signal/uniform mixture (`U`, its unbiased
//! variant `V`, the log estimator, the MLE, and the collision statistic `T`),
//! vector estimators for the general p-component mixture, and the readout
//! estimators (moment system on `U`/`W`, the normalized `phi_ro` estimator,
//! the two-parameter readout MLE, and the three-parameter asymmetric MLE).
//!
//! All maximum-likelihood solvers run safeguarded Newton-Raphson: the step is
//! halved until the log-likelihood does not decrease, and iterates are
//! projected back into the parameter domain ([0,1], the simplex, the
//! triangle `phi + phi_ro <= 1`, or the asymmetric box).

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{asymmetric_signal_vector, biased_uniform_mass, ReadoutConstants};
use crate::probmodel::{compensated_sum, ProbabilityVector};

/// Euler-Mascheroni constant, used by the log estimator.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Which estimator produced an [`Estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    U,
    V,
    LogU,
    #[serde(rename = "MLE")]
    Mle,
    T,
    GeneralMoment,
    #[serde(rename = "GeneralMLE")]
    GeneralMle,
    ReadoutMoment,
    #[serde(rename = "ReadoutMLE")]
    ReadoutMle,
    #[serde(rename = "AsymmetricMLE")]
    AsymmetricMle,
}

impl Method {
    /// Names of the value components, in order.
    pub fn value_labels(&self, len: usize) -> Vec<String> {
        match self {
            Method::U => vec!["phi".into()],
            Method::V => vec!["phi".into()],
            Method::LogU => vec!["phi".into()],
            Method::Mle => vec!["phi".into()],
            Method::T => vec!["t".into(), "t_squared".into()],
            Method::GeneralMoment | Method::GeneralMle => {
                (1..=len).map(|k| format!("phi_{k}")).collect()
            }
            Method::ReadoutMoment | Method::ReadoutMle => vec!["phi".into(), "phi_ro".into()],
            Method::AsymmetricMle => vec!["phi_g".into(), "q1".into(), "q2".into()],
        }
    }
}

/// Which formula produced the attached variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarianceSource {
    /// Inverse of the negated observed second derivative at the optimum.
    ObservedInformation,
    /// A conditional (given the realized weights) variance formula.
    ConditionalFormula,
    /// An unconditional (over random circuits) variance formula.
    UnconditionalFormula,
    /// The asymptotic MLE variance integral.
    AsymptoticQuadrature,
}

/// Scalar variance or a covariance matrix for vector estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum VarianceEstimate {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

/// A point estimate with optional variance and iteration count.
///
/// `values` holds one entry for scalar estimators; `T` reports `[t,
/// t_squared]`; the multi-parameter estimators report their parameter
/// vectors in the order given by [`Method::value_labels`].
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub method: Method,
    pub values: Vec<f64>,
    pub variance: Option<VarianceEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_source: Option<VarianceSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
}

impl Estimate {
    /// First (or only) value component.
    pub fn value(&self) -> f64 {
        self.values[0]
    }

    /// Scalar variance, if one is attached.
    pub fn scalar_variance(&self) -> Option<f64> {
        match self.variance {
            Some(VarianceEstimate::Scalar(v)) => Some(v),
            _ => None,
        }
    }
}

/// Newton-Raphson configuration for the maximum-likelihood estimators.
#[derive(Debug, Clone)]
pub struct MleConfig {
    /// Starting point; defaults to the corresponding moment estimate clamped
    /// into the domain (or a fixed interior point where none is computable).
    pub init: Option<Vec<f64>>,
    /// Convergence threshold on the step's infinity norm.
    pub tol: f64,
    /// Iteration budget.
    pub max_iter: u32,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            init: None,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

impl MleConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::Domain("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

fn require_nonempty(sampled: &[f64]) -> Result<()> {
    if sampled.is_empty() {
        return Err(Error::EmptyInput("estimator needs at least one draw".into()));
    }
    Ok(())
}

/// The linear cross-entropy estimator `U = (M/N) sum w~_j - 1`.
///
/// Unclamped: `U` may be negative or exceed one.
pub fn estimator_u(sampled_w: &[f64], m: u64) -> Result<Estimate> {
    require_nonempty(sampled_w)?;
    let mean = compensated_sum(sampled_w.iter().copied()) / sampled_w.len() as f64;
    Ok(Estimate {
        method: Method::U,
        values: vec![m as f64 * mean - 1.0],
        variance: None,
        variance_source: None,
        iterations: None,
    })
}

/// The conditionally unbiased variant `V = U / (M w2 - 1)`, where `w2` is the
/// full vector's second power sum.
pub fn estimator_v(sampled_w: &[f64], m: u64, w2: f64) -> Result<Estimate> {
    require_nonempty(sampled_w)?;
    let denom = m as f64 * w2 - 1.0;
    if denom <= 0.0 {
        return Err(Error::DegenerateDenominator(format!(
            "M w2 - 1 = {denom}; the realized vector carries no signal"
        )));
    }
    let u = estimator_u(sampled_w, m)?.value();
    Ok(Estimate {
        method: Method::V,
        values: vec![u / denom],
        variance: None,
        variance_source: None,
        iterations: None,
    })
}

/// The log estimator `(1/N) sum log w~_j + gamma + log M`, the better linear
/// estimator once the fidelity exceeds roughly 0.32.
pub fn estimator_log(sampled_w: &[f64], m: u64) -> Result<Estimate> {
    require_nonempty(sampled_w)?;
    if sampled_w.iter().any(|&w| w <= 0.0) {
        return Err(Error::Domain(
            "log estimator needs strictly positive sampled probabilities".into(),
        ));
    }
    let mean_log =
        compensated_sum(sampled_w.iter().map(|w| w.ln())) / sampled_w.len() as f64;
    Ok(Estimate {
        method: Method::LogU,
        values: vec![mean_log + EULER_GAMMA + (m as f64).ln()],
        variance: None,
        variance_source: None,
        iterations: None,
    })
}

/// Log-likelihood, score, and curvature of the basic mixture at `phi`.
fn basic_loglik(deviations: &[f64], inv_m: f64, phi: f64) -> f64 {
    let mut ll = 0.0;
    for &a in deviations {
        let pi = phi * a + inv_m;
        if pi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += pi.ln();
    }
    ll
}

fn basic_score_curvature(deviations: &[f64], inv_m: f64, phi: f64) -> (f64, f64) {
    let mut score = 0.0;
    let mut curv = 0.0;
    for &a in deviations {
        let pi = phi * a + inv_m;
        let r = a / pi;
        score += r;
        curv -= r * r;
    }
    (score, curv)
}

/// Maximum-likelihood estimate of the fidelity under the basic mixture.
///
/// Maximizes `sum log(phi w~_j + (1-phi)/M)` over `phi` in `[0,1]` by
/// safeguarded Newton-Raphson; returns the boundary when the score points
/// outward there. The attached variance is the inverse observed information.
pub fn mle_basic(sampled_w: &[f64], m: u64, cfg: &MleConfig) -> Result<Estimate> {
    require_nonempty(sampled_w)?;
    cfg.validate()?;
    let inv_m = 1.0 / m as f64;
    let deviations: Vec<f64> = sampled_w.iter().map(|w| w - inv_m).collect();
    if deviations.iter().all(|a| a.abs() <= 1e-12 * inv_m) {
        return Err(Error::FlatLikelihood(
            "every sampled probability equals 1/M; phi is unidentifiable".into(),
        ));
    }

    let finish = |phi: f64, iterations: u32| {
        let (_, curv) = basic_score_curvature(&deviations, inv_m, phi);
        let variance = if curv < 0.0 { Some(-1.0 / curv) } else { None };
        Estimate {
            method: Method::Mle,
            values: vec![phi],
            variance: variance.map(VarianceEstimate::Scalar),
            variance_source: variance.map(|_| VarianceSource::ObservedInformation),
            iterations: Some(iterations),
        }
    };

    // The log-likelihood is concave, so the score is nonincreasing: an
    // outward-pointing score at an endpoint puts the maximum there.
    let (score0, _) = basic_score_curvature(&deviations, inv_m, 0.0);
    if score0 <= 0.0 {
        return Ok(finish(0.0, 0));
    }
    if sampled_w.iter().all(|&w| w > 0.0) {
        let (score1, _) = basic_score_curvature(&deviations, inv_m, 1.0);
        if score1 >= 0.0 {
            return Ok(finish(1.0, 0));
        }
    }

    let mut phi = match &cfg.init {
        Some(init) if init.len() == 1 => init[0].clamp(1e-9, 1.0 - 1e-9),
        Some(init) => {
            return Err(Error::Dimension(format!(
                "init for the basic MLE has length {}, expected 1",
                init.len()
            )))
        }
        None => estimator_u(sampled_w, m)?.value().clamp(1e-6, 1.0 - 1e-6),
    };
    let mut ll = basic_loglik(&deviations, inv_m, phi);
    for iter in 1..=cfg.max_iter {
        let (score, curv) = basic_score_curvature(&deviations, inv_m, phi);
        if curv >= 0.0 {
            return Err(Error::Convergence("non-concave curvature encountered".into()));
        }
        let mut step = -score / curv;
        let mut next = (phi + step).clamp(0.0, 1.0);
        let mut next_ll = basic_loglik(&deviations, inv_m, next);
        let mut halvings = 0;
        while next_ll < ll - 1e-12 * (1.0 + ll.abs()) && halvings < 60 {
            step *= 0.5;
            next = (phi + step).clamp(0.0, 1.0);
            next_ll = basic_loglik(&deviations, inv_m, next);
            halvings += 1;
        }
        let moved = (next - phi).abs();
        phi = next;
        ll = next_ll;
        if moved <= cfg.tol {
            return Ok(finish(phi, iter));
        }
    }
    Err(Error::Convergence(format!(
        "basic MLE did not converge in {} iterations",
        cfg.max_iter
    )))
}

/// The collision estimator: `T^2` is unbiased for `phi^2` and needs only the
/// bitstring counts, no probabilities.
///
/// Reports `[t, t_squared]`: `t_squared` may be negative; `t` is the clamped
/// root (the clamp and the root carry small opposing biases).
pub fn estimator_t(counts: &HashMap<u64, u64>, m: u64, n_draws: u64) -> Result<Estimate> {
    let total: u64 = counts.values().sum();
    if total != n_draws {
        return Err(Error::Dimension(format!(
            "counts sum to {total}, expected N = {n_draws}"
        )));
    }
    if n_draws < 2 {
        return Err(Error::EmptyInput("T needs at least two draws".into()));
    }
    let sum_sq: u128 = counts.values().map(|&c| u128::from(c) * u128::from(c)).sum();
    let mf = m as f64;
    let nf = n_draws as f64;
    let pairs = nf * nf - nf;
    let t_squared =
        mf * (mf + 1.0) / (pairs * (mf - 1.0)) * (sum_sq as f64 - nf - pairs / mf);
    let t = t_squared.max(0.0).sqrt();
    Ok(Estimate {
        method: Method::T,
        values: vec![t, t_squared],
        variance: None,
        variance_source: None,
        iterations: None,
    })
}

fn check_components(samples: &[Vec<f64>]) -> Result<(usize, usize)> {
    let p = samples.len();
    if p < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 mixture components, got {p}"
        )));
    }
    let n_draws = samples[0].len();
    if n_draws == 0 {
        return Err(Error::EmptyInput("estimator needs at least one draw".into()));
    }
    if samples.iter().any(|s| s.len() != n_draws) {
        return Err(Error::Dimension(
            "per-component sample arrays have mismatched lengths".into(),
        ));
    }
    Ok((p, n_draws))
}

/// Per-component moment estimates `U_k = (1/N) sum (M w~_kj - 1)`.
///
/// When the full component vectors are supplied, the conditional bias is
/// removed by solving the linear system built from their Gram matrix
/// (`E U_k = sum_l phi_l (M <w_k, w_l> - 1)`).
pub fn estimator_general_moment(
    samples: &[Vec<f64>],
    m: u64,
    components: Option<&[ProbabilityVector]>,
) -> Result<Estimate> {
    let (p, _) = check_components(samples)?;
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| estimator_u(s, m).map(|e| e.value()))
        .collect::<Result<_>>()?;
    let values = match components {
        None => raw,
        Some(comps) => {
            if comps.len() != p {
                return Err(Error::Dimension(format!(
                    "{} component vectors for {p} sample arrays",
                    comps.len()
                )));
            }
            let mf = m as f64;
            let mut a = vec![vec![0.0f64; p]; p];
            for k in 0..p {
                for l in k..p {
                    let gram = compensated_sum(
                        comps[k]
                            .weights()
                            .iter()
                            .zip(comps[l].weights())
                            .map(|(x, y)| x * y),
                    );
                    a[k][l] = mf * gram - 1.0;
                    a[l][k] = a[k][l];
                }
            }
            let mut b = raw.clone();
            solve_linear(&mut a, &mut b).ok_or_else(|| {
                Error::DegenerateDenominator("Gram system for the bias correction is singular".into())
            })?;
            b
        }
    };
    Ok(Estimate {
        method: Method::GeneralMoment,
        values,
        variance: None,
        variance_source: None,
        iterations: None,
    })
}

/// Gaussian elimination with partial pivoting; solves in place, leaving the
/// solution in `b`. Returns `None` on a (numerically) singular matrix.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<()> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * b[k];
        }
        if a[col][col].abs() < 1e-300 {
            return None;
        }
        b[col] = acc / a[col][col];
    }
    Some(())
}

/// Invert a small symmetric matrix by solving against unit vectors.
fn invert_small(h: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = h.len();
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut a: Vec<Vec<f64>> = h.to_vec();
        let mut b = vec![0.0; n];
        b[j] = 1.0;
        solve_linear(&mut a, &mut b)?;
        for i in 0..n {
            out[i][j] = b[i];
        }
    }
    Some(out)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        acc += s;
        let candidate = (acc - 1.0) / (j + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Maximum-likelihood estimate of the full mixture vector on the simplex.
///
/// Parameterized by the first `p-1` coordinates; Newton-Raphson on the
/// `(p-1)`-gradient and Hessian with simplex projection. The returned vector
/// has nonnegative coordinates summing to one exactly.
pub fn mle_general(samples: &[Vec<f64>], cfg: &MleConfig) -> Result<Estimate> {
    let (p, n_draws) = check_components(samples)?;
    cfg.validate()?;
    let free = p - 1;
    // d_kj = w~_kj - w~_pj; the mixture at phi is sum_k phi_k d_kj + w~_pj.
    let last = &samples[p - 1];
    let diffs: Vec<Vec<f64>> = (0..free)
        .map(|k| samples[k].iter().zip(last).map(|(a, b)| a - b).collect())
        .collect();
    if diffs
        .iter()
        .all(|col| col.iter().all(|d| d.abs() <= 1e-300))
    {
        return Err(Error::FlatLikelihood(
            "all components agree on every draw; the mixture is unidentifiable".into(),
        ));
    }

    let loglik = |phi_free: &[f64]| -> f64 {
        let mut ll = 0.0;
        for j in 0..n_draws {
            let mut pi = last[j];
            for k in 0..free {
                pi += phi_free[k] * diffs[k][j];
            }
            if pi <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += pi.ln();
        }
        ll
    };
    let score_hessian = |phi_free: &[f64]| -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut g = vec![0.0; free];
        let mut h = vec![vec![0.0; free]; free];
        for j in 0..n_draws {
            let mut pi = last[j];
            for k in 0..free {
                pi += phi_free[k] * diffs[k][j];
            }
            for k in 0..free {
                let rk = diffs[k][j] / pi;
                g[k] += rk;
                for l in k..free {
                    h[k][l] -= rk * diffs[l][j] / pi;
                }
            }
        }
        for k in 0..free {
            for l in 0..k {
                h[k][l] = h[l][k];
            }
        }
        (g, h)
    };

    let mut full: Vec<f64> = match &cfg.init {
        Some(init) => {
            if init.len() != p {
                return Err(Error::Dimension(format!(
                    "init for the general MLE has length {}, expected {p}",
                    init.len()
                )));
            }
            let mut v = init.clone();
            project_simplex(&mut v);
            v
        }
        None => vec![1.0 / p as f64; p],
    };
    let mut ll = loglik(&full[..free]);
    if ll == f64::NEG_INFINITY {
        full = vec![1.0 / p as f64; p];
        ll = loglik(&full[..free]);
    }

    for iter in 1..=cfg.max_iter {
        let (g, mut h) = score_hessian(&full[..free]);
        let mut step = g.clone();
        if solve_linear(&mut h, &mut step).is_none() {
            return Err(Error::Convergence("singular Hessian in the general MLE".into()));
        }
        // Newton: phi - H^-1 g; `step` currently holds H^-1 g.
        for s in step.iter_mut() {
            *s = -*s;
        }
        let mut scale = 1.0;
        let mut moved = 0.0;
        let mut improved = false;
        for _ in 0..60 {
            let mut candidate = full.clone();
            for k in 0..free {
                candidate[k] += scale * step[k];
            }
            candidate[p - 1] = 1.0 - candidate[..free].iter().sum::<f64>();
            project_simplex(&mut candidate);
            let cand_ll = loglik(&candidate[..free]);
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                moved = candidate
                    .iter()
                    .zip(&full)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                full = candidate;
                ll = cand_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            return Err(Error::Convergence(
                "general MLE step halving failed to improve the likelihood".into(),
            ));
        }
        if moved <= cfg.tol {
            // Renormalize exactly on exit.
            let head: f64 = full[..free].iter().sum();
            full[p - 1] = (1.0 - head).max(0.0);
            let (_, h) = score_hessian(&full[..free]);
            let neg_h: Vec<Vec<f64>> = h
                .iter()
                .map(|row| row.iter().map(|x| -x).collect())
                .collect();
            let variance = invert_small(&neg_h).map(VarianceEstimate::Matrix);
            return Ok(Estimate {
                method: Method::GeneralMle,
                values: full,
                variance_source: variance.as_ref().map(|_| VarianceSource::ObservedInformation),
                variance,
                iterations: Some(iter),
            });
        }
    }
    Err(Error::Convergence(format!(
        "general MLE did not converge in {} iterations",
        cfg.max_iter
    )))
}

/// Reciprocal condition number (infinity norm) of a 2x2 system.
fn rcond_2x2(a: &[[f64; 2]; 2]) -> f64 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == 0.0 {
        return 0.0;
    }
    let norm = (a[0][0].abs() + a[0][1].abs()).max(a[1][0].abs() + a[1][1].abs());
    let inv_norm = ((a[1][1].abs() + a[0][1].abs()).max(a[1][0].abs() + a[0][0].abs())) / det.abs();
    1.0 / (norm * inv_norm)
}

/// Threshold below which the readout moment system is declared singular.
pub const RCOND_THRESHOLD: f64 = 1e-10;

/// Moment estimator of `(phi, phi_ro)` from the statistics `U` and
/// `W = (M/N) sum v~_j - 1`, solved against the conditional-expectation
/// system built from the full-vector Gram sums.
pub fn estimator_readout_moment(
    sampled_w: &[f64],
    sampled_v: &[f64],
    pv: &ProbabilityVector,
    v: &ProbabilityVector,
) -> Result<Estimate> {
    require_nonempty(sampled_w)?;
    if sampled_w.len() != sampled_v.len() {
        return Err(Error::Dimension(format!(
            "{} sampled w values vs {} sampled v values",
            sampled_w.len(),
            sampled_v.len()
        )));
    }
    if pv.n() != v.n() {
        return Err(Error::Dimension(format!(
            "probability vector has n = {}, noise vector has n = {}",
            pv.n(),
            v.n()
        )));
    }
    let m = pv.m() as u64;
    let mf = m as f64;
    let u = estimator_u(sampled_w, m)?.value();
    let w_stat = estimator_u(sampled_v, m)?.value();
    let sww = compensated_sum(pv.weights().iter().map(|x| x * x));
    let svv = compensated_sum(v.weights().iter().map(|x| x * x));
    let swv = compensated_sum(pv.weights().iter().zip(v.weights()).map(|(x, y)| x * y));
    // E^w W = phi (M <v,w> - 1) + phi_ro (M <v,v> - 1)
    // E^w U = phi (M <w,w> - 1) + phi_ro (M <w,v> - 1)
    let a = [
        [mf * swv - 1.0, mf * svv - 1.0],
        [mf * sww - 1.0, mf * swv - 1.0],
    ];
    if rcond_2x2(&a) < RCOND_THRESHOLD {
        return Err(Error::DegenerateDenominator(
            "readout moment system is numerically singular".into(),
        ));
    }
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let phi = (w_stat * a[1][1] - a[0][1] * u) / det;
    let phi_ro = (a[0][0] * u - w_stat * a[1][0]) / det;
    Ok(Estimate {
        method: Method::ReadoutMoment,
        values: vec![phi, phi_ro],
        variance: None,
        variance_source: None,
        iterations: None,
    })
}

/// The normalized readout-noise estimator `phi_ro~ = W / (G/D^2 - 1)`.
pub fn estimator_phi_ro_tilde(w_stat: f64, constants: &ReadoutConstants) -> Result<Estimate> {
    let denom = constants.g / (constants.d * constants.d) - 1.0;
    if denom <= 0.0 {
        return Err(Error::DegenerateDenominator(format!(
            "G/D^2 - 1 = {denom} must be positive"
        )));
    }
    Ok(Estimate {
        method: Method::ReadoutMoment,
        values: vec![w_stat / denom],
        variance: None,
        variance_source: None,
        iterations: None,
    })
}

/// Project onto the triangle `x >= 0, y >= 0, x + y <= 1`.
fn project_triangle(x: f64, y: f64) -> (f64, f64) {
    let mut x = x.max(0.0);
    let mut y = y.max(0.0);
    if x + y > 1.0 {
        let shift = (x + y - 1.0) / 2.0;
        x -= shift;
        y -= shift;
        if x < 0.0 {
            y += x;
            x = 0.0;
        }
        if y < 0.0 {
            x += y;
            y = 0.0;
        }
        x = x.clamp(0.0, 1.0);
        y = y.clamp(0.0, 1.0);
    }
    (x, y)
}

/// Two-parameter MLE of `(phi, phi_ro)` under the readout model, maximizing
/// `sum log[phi (w~_j - 1/M) + phi_ro (v~_j - 1/M) + 1/M]` over the triangle.
pub fn mle_readout(
    sampled_w: &[f64],
    sampled_v: &[f64],
    m: u64,
    cfg: &MleConfig,
) -> Result<Estimate> {
    require_nonempty(sampled_w)?;
    cfg.validate()?;
    if sampled_w.len() != sampled_v.len() {
        return Err(Error::Dimension(format!(
            "{} sampled w values vs {} sampled v values",
            sampled_w.len(),
            sampled_v.len()
        )));
    }
    let inv_m = 1.0 / m as f64;
    let a: Vec<f64> = sampled_w.iter().map(|w| w - inv_m).collect();
    let b: Vec<f64> = sampled_v.iter().map(|v| v - inv_m).collect();
    if a.iter().all(|x| x.abs() <= 1e-12 * inv_m) && b.iter().all(|x| x.abs() <= 1e-12 * inv_m) {
        return Err(Error::FlatLikelihood(
            "sample carries no signal in either component".into(),
        ));
    }

    let loglik = |phi: f64, phi_ro: f64| -> f64 {
        let mut ll = 0.0;
        for (ai, bi) in a.iter().zip(&b) {
            let pi = phi * ai + phi_ro * bi + inv_m;
            if pi <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += pi.ln();
        }
        ll
    };
    let score_hessian = |phi: f64, phi_ro: f64| -> ([f64; 2], [[f64; 2]; 2]) {
        let mut g = [0.0f64; 2];
        let mut h = [[0.0f64; 2]; 2];
        for (ai, bi) in a.iter().zip(&b) {
            let pi = phi * ai + phi_ro * bi + inv_m;
            let ra = ai / pi;
            let rb = bi / pi;
            g[0] += ra;
            g[1] += rb;
            h[0][0] -= ra * ra;
            h[0][1] -= ra * rb;
            h[1][1] -= rb * rb;
        }
        h[1][0] = h[0][1];
        (g, h)
    };

    let (mut phi, mut phi_ro) = match &cfg.init {
        Some(init) if init.len() == 2 => project_triangle(init[0], init[1]),
        Some(init) => {
            return Err(Error::Dimension(format!(
                "init for the readout MLE has length {}, expected 2",
                init.len()
            )))
        }
        None => {
            // U estimates phi up to a near-one factor; start phi_ro inside.
            let u = estimator_u(sampled_w, m)?.value();
            project_triangle(u.clamp(1e-3, 0.9), 0.1)
        }
    };
    let mut ll = loglik(phi, phi_ro);
    if ll == f64::NEG_INFINITY {
        phi = 0.2;
        phi_ro = 0.2;
        ll = loglik(phi, phi_ro);
    }

    for iter in 1..=cfg.max_iter {
        let (g, h) = score_hessian(phi, phi_ro);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::Convergence("singular Hessian in the readout MLE".into()));
        }
        // Newton step -H^-1 g.
        let dx = -(h[1][1] * g[0] - h[0][1] * g[1]) / det;
        let dy = -(h[0][0] * g[1] - h[1][0] * g[0]) / det;
        let mut scale = 1.0;
        let mut improved = false;
        let mut moved = 0.0;
        for _ in 0..60 {
            let (nx, ny) = project_triangle(phi + scale * dx, phi_ro + scale * dy);
            let cand = loglik(nx, ny);
            if cand >= ll - 1e-12 * (1.0 + ll.abs()) {
                moved = (nx - phi).abs().max((ny - phi_ro).abs());
                phi = nx;
                phi_ro = ny;
                ll = cand;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            return Err(Error::Convergence(
                "readout MLE step halving failed to improve the likelihood".into(),
            ));
        }
        if moved <= cfg.tol {
            let (_, h) = score_hessian(phi, phi_ro);
            let neg_h = vec![
                vec![-h[0][0], -h[0][1]],
                vec![-h[1][0], -h[1][1]],
            ];
            let variance = invert_small(&neg_h).map(VarianceEstimate::Matrix);
            return Ok(Estimate {
                method: Method::ReadoutMle,
                values: vec![phi, phi_ro],
                variance_source: variance.as_ref().map(|_| VarianceSource::ObservedInformation),
                variance,
                iterations: Some(iter),
            });
        }
    }
    Err(Error::Convergence(format!(
        "readout MLE did not converge in {} iterations",
        cfg.max_iter
    )))
}

/// Box constraints for the asymmetric MLE's readout rates.
const Q_LO: f64 = 1e-6;
const Q_HI: f64 = 0.5 - 1e-6;

/// Likelihood machinery for the asymmetric readout model.
struct AsymmetricModel<'a> {
    pv: &'a ProbabilityVector,
    /// (index, count, popcount) per observed bitstring, index-sorted.
    cells: Vec<(u64, f64, u32)>,
    n_draws: f64,
}

impl<'a> AsymmetricModel<'a> {
    fn new(counts: &HashMap<u64, u64>, pv: &'a ProbabilityVector) -> Result<Self> {
        let m = pv.m() as u64;
        let mut cells: Vec<(u64, f64, u32)> = Vec::with_capacity(counts.len());
        let mut total = 0u64;
        for (&idx, &c) in counts {
            if idx >= m {
                return Err(Error::Dimension(format!("index {idx} out of range for M = {m}")));
            }
            total += c;
            cells.push((idx, c as f64, idx.count_ones()));
        }
        if total < 1 {
            return Err(Error::EmptyInput("asymmetric MLE needs at least one draw".into()));
        }
        cells.sort_unstable_by_key(|c| c.0);
        Ok(AsymmetricModel {
            pv,
            cells,
            n_draws: total as f64,
        })
    }

    fn signal(&self, q1: f64, q2: f64) -> Vec<f64> {
        asymmetric_signal_vector(self.pv, q1, q2)
            .expect("rates kept inside (0,1) by the box")
            .into_weights()
    }

    /// d(signal)/d(q1 or q2): sum over qubit positions of the transform with
    /// the kernel derivative at that position. O(M n^2).
    fn signal_derivative(&self, q1: f64, q2: f64, wrt_q1: bool) -> Vec<f64> {
        let n = self.pv.n();
        let m = self.pv.m();
        let kernel = [[1.0 - q2, q1], [q2, 1.0 - q1]];
        let dkernel = if wrt_q1 {
            [[0.0, 1.0], [0.0, -1.0]]
        } else {
            [[-1.0, 0.0], [1.0, 0.0]]
        };
        let mut acc = vec![0.0f64; m];
        let mut scratch = vec![0.0f64; m];
        for pos in 0..n {
            scratch.copy_from_slice(self.pv.weights());
            apply_kernels_positioned(&mut scratch, n, kernel, dkernel, pos);
            for (a, s) in acc.iter_mut().zip(&scratch) {
                *a += s;
            }
        }
        acc
    }

    fn loglik(&self, theta: &[f64; 3]) -> f64 {
        let [phi_g, q1, q2] = *theta;
        let s = self.signal(q1, q2);
        let q = (1.0 - q1 + q2) / 2.0;
        let n = self.pv.n();
        let mut ll = 0.0;
        for &(idx, c, _) in &self.cells {
            let pi = phi_g * s[idx as usize] + (1.0 - phi_g) * biased_uniform_mass(idx, n, q);
            if pi <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += c * pi.ln();
        }
        ll
    }

    fn gradient(&self, theta: &[f64; 3]) -> [f64; 3] {
        let [phi_g, q1, q2] = *theta;
        let s = self.signal(q1, q2);
        let ds1 = self.signal_derivative(q1, q2, true);
        let ds2 = self.signal_derivative(q1, q2, false);
        let q = (1.0 - q1 + q2) / 2.0;
        let n = self.pv.n();
        let nf = f64::from(n);
        let mut g = [0.0f64; 3];
        for &(idx, c, ones) in &self.cells {
            let bu = biased_uniform_mass(idx, n, q);
            let pi = phi_g * s[idx as usize] + (1.0 - phi_g) * bu;
            // dB/dq, with dq/dq1 = -1/2 and dq/dq2 = +1/2.
            let dbu_dq = bu * (f64::from(ones) / q - (nf - f64::from(ones)) / (1.0 - q));
            let w = c / pi;
            g[0] += w * (s[idx as usize] - bu);
            g[1] += w * (phi_g * ds1[idx as usize] + (1.0 - phi_g) * dbu_dq * -0.5);
            g[2] += w * (phi_g * ds2[idx as usize] + (1.0 - phi_g) * dbu_dq * 0.5);
        }
        g
    }

    /// Hessian by central differences of the analytic gradient.
    fn hessian_fd(&self, theta: &[f64; 3]) -> [[f64; 3]; 3] {
        let lo = [0.0, Q_LO, Q_LO];
        let hi = [1.0, Q_HI, Q_HI];
        let mut h = [[0.0f64; 3]; 3];
        for i in 0..3 {
            let step = 1e-5 * (1.0 + theta[i].abs());
            let mut up = *theta;
            let mut dn = *theta;
            up[i] = (theta[i] + step).min(hi[i]);
            dn[i] = (theta[i] - step).max(lo[i]);
            let span = up[i] - dn[i];
            let gu = self.gradient(&up);
            let gd = self.gradient(&dn);
            for j in 0..3 {
                h[i][j] = (gu[j] - gd[j]) / span;
            }
        }
        // Symmetrize the finite-difference noise away.
        for i in 0..3 {
            for j in (i + 1)..3 {
                let avg = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = avg;
                h[j][i] = avg;
            }
        }
        h
    }
}

/// Apply `kernel` on every qubit except `dpos`, which gets `dkernel`.
fn apply_kernels_positioned(
    values: &mut [f64],
    n: u32,
    kernel: [[f64; 2]; 2],
    dkernel: [[f64; 2]; 2],
    dpos: u32,
) {
    let m = values.len();
    for j in 0..n {
        let k = if j == dpos { dkernel } else { kernel };
        let stride = 1usize << j;
        let mut base = 0;
        while base < m {
            for i0 in base..base + stride {
                let i1 = i0 + stride;
                let a = values[i0];
                let b = values[i1];
                values[i0] = k[0][0] * a + k[0][1] * b;
                values[i1] = k[1][0] * a + k[1][1] * b;
            }
            base += stride << 1;
        }
    }
}

/// Three-parameter MLE `(phi_g, q1, q2)` for the asymmetric readout model.
///
/// The likelihood needs the full probability vector: the readout channel is
/// re-applied (O(M n)) for every candidate rate pair. Box constraints:
/// `phi_g` in `[0,1]`, rates in `(0, 0.5)`.
pub fn mle_asymmetric(
    counts: &HashMap<u64, u64>,
    pv: &ProbabilityVector,
    cfg: &MleConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    let model = AsymmetricModel::new(counts, pv)?;

    let clamp_box = |theta: [f64; 3]| -> [f64; 3] {
        [
            theta[0].clamp(0.0, 1.0),
            theta[1].clamp(Q_LO, Q_HI),
            theta[2].clamp(Q_LO, Q_HI),
        ]
    };
    let mut theta = match &cfg.init {
        Some(init) if init.len() == 3 => clamp_box([init[0], init[1], init[2]]),
        Some(init) => {
            return Err(Error::Dimension(format!(
                "init for the asymmetric MLE has length {}, expected 3",
                init.len()
            )))
        }
        None => {
            // U-based start: U ~ phi = phi_g (1-q)^n at the nominal rate.
            let m = pv.m() as f64;
            let mean_w: f64 = model
                .cells
                .iter()
                .map(|&(idx, c, _)| c * pv.get(idx))
                .sum::<f64>()
                / model.n_draws;
            let u = m * mean_w - 1.0;
            let phi_g = (u / (1.0 - 0.038f64).powi(pv.n() as i32)).clamp(0.05, 0.98);
            [phi_g, 0.038, 0.038]
        }
    };
    let mut ll = model.loglik(&theta);
    if ll == f64::NEG_INFINITY {
        theta = [0.5, 0.038, 0.038];
        ll = model.loglik(&theta);
    }

    for iter in 1..=cfg.max_iter {
        let g = model.gradient(&theta);
        let h = model.hessian_fd(&theta);
        let mut a: Vec<Vec<f64>> = h.iter().map(|r| r.to_vec()).collect();
        let mut step: Vec<f64> = g.iter().map(|x| -x).collect();
        let newton_ok = solve_linear(&mut a, &mut step).is_some();
        if !newton_ok {
            // Fall back to a small gradient-ascent step.
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            step = g.iter().map(|x| 1e-3 * x / norm).collect();
        }
        // A Newton step on a non-concave patch may point downhill; flip to
        // the ascent direction if needed.
        if step.iter().zip(&g).map(|(s, gi)| s * gi).sum::<f64>() < 0.0 {
            for s in step.iter_mut() {
                *s = -*s;
            }
        }
        let mut scale = 1.0;
        let mut improved = false;
        let mut moved = 0.0;
        for _ in 0..60 {
            let cand = clamp_box([
                theta[0] + scale * step[0],
                theta[1] + scale * step[1],
                theta[2] + scale * step[2],
            ]);
            let cand_ll = model.loglik(&cand);
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                moved = cand
                    .iter()
                    .zip(&theta)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                theta = cand;
                ll = cand_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            return Err(Error::Convergence(
                "asymmetric MLE step halving failed to improve the likelihood".into(),
            ));
        }
        if moved <= cfg.tol.max(1e-10) {
            let h = model.hessian_fd(&theta);
            let neg_h: Vec<Vec<f64>> = h
                .iter()
                .map(|row| row.iter().map(|x| -x).collect())
                .collect();
            let variance = invert_small(&neg_h).map(VarianceEstimate::Matrix);
            return Ok(Estimate {
                method: Method::AsymmetricMle,
                values: theta.to_vec(),
                variance_source: variance.as_ref().map(|_| VarianceSource::ObservedInformation),
                variance,
                iterations: Some(iter),
            });
        }
    }
    Err(Error::Convergence(format!(
        "asymmetric MLE did not converge in {} iterations",
        cfg.max_iter
    )))
}

//! Variance formulas, Fisher information, and confidence intervals.
//!
//! Conditional variances hold the realized weight vector fixed (they take its
//! power sums `w2`, `w3`); unconditional variances average over random
//! circuits and depend only on `phi`, `M`, `N`. Intervals use the fixed 0.95
//! level with the 1.96 multiplier.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::probmodel::{compensated_sum, ProbabilityVector};

/// Fixed confidence level of every interval.
pub const CONFIDENCE_LEVEL: f64 = 0.95;
/// The normal multiplier for [`CONFIDENCE_LEVEL`]; kept verbatim, not configurable.
pub const Z_MULTIPLIER: f64 = 1.96;

/// Estimators covered by [`var_unconditional`] and [`ci_unconditional`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarMethod {
    U,
    V,
    LogU,
    #[serde(rename = "MLE")]
    Mle,
}

/// A variance evaluation with its inputs, for reporting.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    pub method: VarMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditional: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unconditional: Option<f64>,
    pub inputs: VarianceInputs,
}

/// The parameters a variance formula was evaluated at.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceInputs {
    pub phi: f64,
    pub m: u64,
    pub n_draws: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w3: Option<f64>,
}

/// Which construction produced a [`ConfidenceInterval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CiKind {
    ConditionalSingle,
    ConditionalCombined,
    UnconditionalU,
    UnconditionalV,
    #[serde(rename = "UnconditionalMLE")]
    UnconditionalMle,
}

/// A symmetric interval `center +/- half_width` at the fixed 0.95 level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    pub kind: CiKind,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.center).abs() <= self.half_width
    }
}

fn check_phi_closed(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Domain(format!("phi must be in [0,1], got {phi}")));
    }
    Ok(())
}

/// Conditional (fixed realization) variance of `U`:
/// `(1/N) [phi (M^2 w3 - 3 M w2 + 2) - phi^2 (M w2 - 1)^2 + M w2 - 1]`.
pub fn var_u_conditional(phi: f64, m: u64, n_draws: u64, w2: f64, w3: f64) -> Result<f64> {
    check_phi_closed(phi)?;
    if n_draws == 0 {
        return Err(Error::Domain("draw count must be >= 1".into()));
    }
    let mf = m as f64;
    let bracket = phi * (mf * mf * w3 - 3.0 * mf * w2 + 2.0)
        - phi * phi * (mf * w2 - 1.0) * (mf * w2 - 1.0)
        + mf * w2
        - 1.0;
    let out = bracket / n_draws as f64;
    if out < 0.0 {
        return Err(Error::Domain(format!(
            "variance formula came out negative ({out}); inputs are inconsistent"
        )));
    }
    Ok(out)
}

/// Conditional variance of `V`: [`var_u_conditional`] divided by `(M w2 - 1)^2`.
pub fn var_v_conditional(phi: f64, m: u64, n_draws: u64, w2: f64, w3: f64) -> Result<f64> {
    let denom = m as f64 * w2 - 1.0;
    if denom <= 0.0 {
        return Err(Error::DegenerateDenominator(format!(
            "M w2 - 1 = {denom}; conditional variance of V undefined"
        )));
    }
    Ok(var_u_conditional(phi, m, n_draws, w2, w3)? / (denom * denom))
}

/// Unconditional (random circuit) variance approximations:
/// `V -> (1/N)(2 phi - phi^2 + 1)`; `U` adds `20 phi^2 / M`;
/// `LogU -> (1/N)(pi^2/6 - phi^2)`. The `MLE` variant defers to
/// [`mle_asymptotic_var`].
pub fn var_unconditional(method: VarMethod, phi: f64, m: u64, n_draws: u64) -> Result<f64> {
    check_phi_closed(phi)?;
    if n_draws == 0 {
        return Err(Error::Domain("draw count must be >= 1".into()));
    }
    let nf = n_draws as f64;
    match method {
        VarMethod::V => Ok((2.0 * phi - phi * phi + 1.0) / nf),
        VarMethod::U => Ok((2.0 * phi - phi * phi + 1.0) / nf + 20.0 * phi * phi / m as f64),
        VarMethod::LogU => {
            Ok((std::f64::consts::PI.powi(2) / 6.0 - phi * phi) / nf)
        }
        VarMethod::Mle => mle_asymptotic_var(phi, n_draws),
    }
}

/// Per-observation Fisher information of the basic mixture at `phi`, given
/// the realized vector: `sum (w_i - 1/M)^2 / (phi w_i + (1-phi)/M)`.
/// Multiply by `N` for a sample of `N` draws.
pub fn fisher_info(phi: f64, pv: &ProbabilityVector) -> Result<f64> {
    if !(0.0..1.0).contains(&phi) {
        // At phi = 1 the sum diverges whenever some weight approaches zero.
        return Err(Error::Domain(format!("phi must be in [0,1), got {phi}")));
    }
    let inv_m = 1.0 / pv.m() as f64;
    Ok(compensated_sum(pv.weights().iter().map(|&w| {
        let dev = w - inv_m;
        dev * dev / (phi * w + (1.0 - phi) * inv_m)
    })))
}

/// Adaptive Simpson quadrature with absolute tolerance `eps`.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, eps / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, eps / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, eps, 50)
}

/// Upper limit of the asymptotic-variance quadrature; the integrand decays
/// like `e^(-z)`, leaving a tail below 7e-15 that the analytic bound covers.
const QUAD_UPPER: f64 = 40.0;

/// Asymptotic variance of the basic MLE:
/// `1 / (N * integral of (z-1)^2 e^(-z) / (phi z + 1 - phi) dz)`.
///
/// Adaptive quadrature on `[0, 40]` plus the analytic tail term; absolute
/// quadrature error at most 1e-9.
pub fn mle_asymptotic_var(phi: f64, n_draws: u64) -> Result<f64> {
    if !(0.0..1.0).contains(&phi) {
        return Err(Error::Domain(format!(
            "phi must be in [0,1); the information integral diverges at 1 (got {phi})"
        )));
    }
    if n_draws == 0 {
        return Err(Error::Domain("draw count must be >= 1".into()));
    }
    let integrand = |z: f64| {
        let d = z - 1.0;
        d * d * (-z).exp() / (phi * z + 1.0 - phi)
    };
    let body = adaptive_simpson(&integrand, 0.0, QUAD_UPPER, 1e-12);
    // Tail: integral of (z-1)^2 e^(-z) above 40 is e^(-40) (39^2 + 2*39 + 2);
    // the denominator exceeds 1 + 39 phi there.
    let a = QUAD_UPPER - 1.0;
    let tail = (-QUAD_UPPER).exp() * (a * a + 2.0 * a + 2.0) / (1.0 + a * phi);
    let info = body + tail;
    Ok(1.0 / (n_draws as f64 * info))
}

/// `estimate +/- 1.96 sigma` for a single conditionally unbiased estimate.
pub fn ci_conditional_single(estimate: f64, sigma: f64) -> Result<ConfidenceInterval> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(ConfidenceInterval {
        center: estimate,
        half_width: Z_MULTIPLIER * sigma,
        level: CONFIDENCE_LEVEL,
        kind: CiKind::ConditionalSingle,
    })
}

/// Variance-minimizing convex combination of independent estimates:
/// center `sum(e_i / s_i^2) / sum(1 / s_i^2)`, half-width
/// `1.96 / sqrt(sum 1/s_i^2)`.
///
/// Plug-in discipline is the caller's: estimate `phi` once by the plain
/// average, evaluate the sigmas there, and stop (no further iteration).
pub fn ci_conditional_combined(estimates: &[f64], sigmas: &[f64]) -> Result<ConfidenceInterval> {
    if estimates.is_empty() || estimates.len() != sigmas.len() {
        return Err(Error::Dimension(format!(
            "{} estimates vs {} sigmas",
            estimates.len(),
            sigmas.len()
        )));
    }
    if sigmas.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
        return Err(Error::Domain("every sigma must be strictly positive".into()));
    }
    let inv_vars: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let total_info: f64 = inv_vars.iter().sum();
    let center = estimates
        .iter()
        .zip(&inv_vars)
        .map(|(e, iv)| e * iv)
        .sum::<f64>()
        / total_info;
    Ok(ConfidenceInterval {
        center,
        half_width: Z_MULTIPLIER / total_info.sqrt(),
        level: CONFIDENCE_LEVEL,
        kind: CiKind::ConditionalCombined,
    })
}

/// Unconditional interval around the average of `L` independent estimates.
///
/// `U`: `1.96 sqrt((1/LN)(2 phi - phi^2 + 1) + 20 phi^2/(LM))`;
/// `V`: the same without the `20 phi^2/(LM)` term;
/// `MLE`: `1.96 sqrt(mle_asymptotic_var(phi, L N))`.
pub fn ci_unconditional(
    method: VarMethod,
    mean_estimate: f64,
    phi_plugin: f64,
    l_files: u64,
    n_draws: u64,
    m: u64,
) -> Result<ConfidenceInterval> {
    if l_files == 0 {
        return Err(Error::Domain("need at least one file".into()));
    }
    check_phi_closed(phi_plugin)?;
    let (kind, variance) = match method {
        VarMethod::U => (
            CiKind::UnconditionalU,
            var_unconditional(VarMethod::V, phi_plugin, m, n_draws)? / l_files as f64
                + 20.0 * phi_plugin * phi_plugin / (l_files as f64 * m as f64),
        ),
        VarMethod::V => (
            CiKind::UnconditionalV,
            var_unconditional(VarMethod::V, phi_plugin, m, n_draws)? / l_files as f64,
        ),
        VarMethod::Mle => (
            CiKind::UnconditionalMle,
            mle_asymptotic_var(phi_plugin, l_files * n_draws)?,
        ),
        VarMethod::LogU => {
            return Err(Error::Domain(
                "unconditional intervals are defined for U, V, and the MLE".into(),
            ))
        }
    };
    Ok(ConfidenceInterval {
        center: mean_estimate,
        half_width: Z_MULTIPLIER * variance.sqrt(),
        level: CONFIDENCE_LEVEL,
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probmodel::{gen_porter_thomas, moments};
    use crate::seed::SeedSpec;

    #[test]
    fn var_u_null_limit() {
        // phi = 0 with Dirichlet-typical moments reduces to ~1/N.
        let m = 1u64 << 14;
        let mf = m as f64;
        let v = var_u_conditional(0.0, m, 1000, 2.0 / mf, 6.0 / (mf * mf)).unwrap();
        assert!((v * 1000.0 - 1.0).abs() < 1e-3, "N Var = {}", v * 1000.0);
    }

    #[test]
    fn var_u_large_m_limit() {
        let m = 1u64 << 20;
        let mf = m as f64;
        let phi = 0.3862;
        let v = var_u_conditional(phi, m, 1, 2.0 / mf, 6.0 / (mf * mf)).unwrap();
        let limit = 2.0 * phi - phi * phi + 1.0;
        assert!((v / limit - 1.0).abs() < 0.01, "{v} vs {limit}");
    }

    #[test]
    fn var_v_relations() {
        let m = 1u64 << 12;
        let mf = m as f64;
        let (w2, w3) = (2.0 / mf, 6.0 / (mf * mf));
        // Unit denominator: M w2 - 1 = 1 at w2 = 2/M.
        let u = var_u_conditional(0.3, m, 500, w2, w3).unwrap();
        let v = var_v_conditional(0.3, m, 500, w2, w3).unwrap();
        assert!((u / v - (mf * w2 - 1.0).powi(2)).abs() < 1e-12);
        assert!(matches!(
            var_v_conditional(0.3, m, 500, 1.0 / mf, w3),
            Err(Error::DegenerateDenominator(_))
        ));
        let limit = (2.0 * 0.3 - 0.09 + 1.0) / 500.0;
        let big = var_v_conditional(0.3, 1 << 20, 500, 2.0 / (1u64 << 20) as f64, 6.0 / ((1u64 << 20) as f64).powi(2)).unwrap();
        assert!((big / limit - 1.0).abs() < 0.01);
    }

    #[test]
    fn unconditional_values_and_ordering() {
        let n_draws = 1000;
        // phi = 0: U and V at 1/N, LogU at 1.6449/N.
        let u0 = var_unconditional(VarMethod::U, 0.0, 1 << 12, n_draws).unwrap();
        let v0 = var_unconditional(VarMethod::V, 0.0, 1 << 12, n_draws).unwrap();
        let l0 = var_unconditional(VarMethod::LogU, 0.0, 1 << 12, n_draws).unwrap();
        assert!((u0 * n_draws as f64 - 1.0).abs() < 1e-12);
        assert!((v0 * n_draws as f64 - 1.0).abs() < 1e-12);
        assert!((l0 * n_draws as f64 - 1.6449).abs() < 1e-4);
        // Var(U) >= Var(V), equality only at phi = 0.
        for i in 0..=10 {
            let phi = i as f64 / 10.0;
            let u = var_unconditional(VarMethod::U, phi, 1 << 12, n_draws).unwrap();
            let v = var_unconditional(VarMethod::V, phi, 1 << 12, n_draws).unwrap();
            if i == 0 {
                assert_eq!(u, v);
            } else {
                assert!(u > v);
            }
        }
    }

    #[test]
    fn log_crossover_near_032() {
        // (1/N)(2 phi - phi^2 + 1) meets (1/N)(pi^2/6 - phi^2) at 0.6449/2.
        let m = 1u64 << 30;
        let f = |phi: f64| {
            var_unconditional(VarMethod::U, phi, m, 1000).unwrap()
                - var_unconditional(VarMethod::LogU, phi, m, 1000).unwrap()
        };
        assert!(f(0.31) < 0.0);
        assert!(f(0.33) > 0.0);
    }

    #[test]
    fn sample_size_reduction_example() {
        // M = 2^18, phi = 0.15: Var(V) at N ~ 299k matches Var(U) at N = 500k.
        let m = 1u64 << 18;
        let target = var_unconditional(VarMethod::U, 0.15, m, 500_000).unwrap();
        let v = var_unconditional(VarMethod::V, 0.15, m, 299_000).unwrap();
        assert!((v / target - 1.0).abs() < 0.02, "{v} vs {target}");
    }

    #[test]
    fn fisher_info_closed_forms() {
        let pv = gen_porter_thomas(12, SeedSpec::new(60, 0)).unwrap();
        let m = pv.m() as f64;
        let w2 = moments(&pv).w2;
        // phi = 0: the denominator is the constant 1/M.
        let info0 = fisher_info(0.0, &pv).unwrap();
        assert!((info0 - (m * w2 - 1.0)).abs() < 1e-10);
        // Uniform vector: no information.
        let uni = ProbabilityVector::uniform(8).unwrap();
        assert!(fisher_info(0.5, &uni).unwrap().abs() < 1e-18);
        assert!(matches!(fisher_info(1.0, &pv), Err(Error::Domain(_))));
    }

    #[test]
    fn fisher_info_nonincreasing_at_small_phi() {
        // The information decreases in phi while the uniform term dominates
        // the mixture denominators; it is U-shaped overall (it diverges as
        // phi -> 1 whenever small weights exist), so monotonicity is only a
        // small-phi property. Checked numerically on 20 random vectors.
        for r in 0..20 {
            let pv = gen_porter_thomas(8, SeedSpec::new(61, r)).unwrap();
            let mut prev = f64::INFINITY;
            for i in 0..=6 {
                let phi = i as f64 * 0.05;
                let info = fisher_info(phi, &pv).unwrap();
                assert!(info <= prev + 1e-12, "rep {r}: info rose at phi {phi}");
                prev = info;
            }
        }
    }

    #[test]
    fn quadrature_null_value_exact() {
        // phi = 0: the integral is Var(Exp(1)) = 1, so the variance is 1/N.
        let v = mle_asymptotic_var(0.0, 1).unwrap();
        assert!((v - 1.0).abs() <= 1e-9, "{v}");
        let v = mle_asymptotic_var(0.0, 12_345).unwrap();
        assert!((v - 1.0 / 12_345.0).abs() <= 1e-9);
    }

    #[test]
    fn quadrature_matches_taylor_for_small_phi() {
        for &phi in &[0.02, 0.05, 0.1] {
            let v = mle_asymptotic_var(phi, 1000).unwrap();
            let taylor = (2.0 * phi - 5.0 * phi * phi + 1.0) / 1000.0;
            assert!((v / taylor - 1.0).abs() < 0.01, "phi {phi}: {v} vs {taylor}");
        }
    }

    #[test]
    fn quadrature_is_self_consistent() {
        // Richardson-style self-check: fixed fine Simpson grid vs adaptive.
        let phi = 0.5;
        let f = |z: f64| (z - 1.0) * (z - 1.0) * (-z).exp() / (phi * z + 1.0 - phi);
        let panels = 400_000;
        let h = QUAD_UPPER / panels as f64;
        let mut acc = f(0.0) + f(QUAD_UPPER);
        for i in 1..panels {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let fixed = acc * h / 3.0;
        let adaptive = adaptive_simpson(&f, 0.0, QUAD_UPPER, 1e-12);
        assert!((fixed - adaptive).abs() < 1e-9, "{fixed} vs {adaptive}");
        assert!(matches!(mle_asymptotic_var(1.0, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn mle_never_beats_v_unconditionally() {
        for i in 0..20 {
            let phi = i as f64 / 20.0;
            let mle = mle_asymptotic_var(phi, 1000).unwrap();
            let v = var_unconditional(VarMethod::V, phi, 1 << 20, 1000).unwrap();
            assert!(mle <= v + 1e-9, "phi {phi}: MLE {mle} vs V {v}");
        }
    }

    #[test]
    fn ci_single_and_combined() {
        let ci = ci_conditional_single(0.4, 0.0).unwrap();
        assert_eq!(ci.half_width, 0.0);
        assert!(ci.contains(0.4));

        // Equal sigmas collapse to the plain average.
        let ci = ci_conditional_combined(&[0.3, 0.5], &[0.1, 0.1]).unwrap();
        assert!((ci.center - 0.4).abs() < 1e-15);
        assert!((ci.half_width - 1.96 * 0.1 / 2.0f64.sqrt()).abs() < 1e-12);
        // Combined interval beats every individual one.
        let sigmas = [0.1, 0.2, 0.05];
        let ci = ci_conditional_combined(&[0.4, 0.38, 0.41], &sigmas).unwrap();
        for s in sigmas {
            assert!(ci.half_width < 1.96 * s);
        }
        assert!(matches!(
            ci_conditional_combined(&[0.4], &[0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ci_unconditional_null_widths_agree() {
        // L = 1, phi = 0: all three half-widths are 1.96/sqrt(N).
        let n_draws = 10_000u64;
        let expect = 1.96 / (n_draws as f64).sqrt();
        for method in [VarMethod::U, VarMethod::V, VarMethod::Mle] {
            let ci = ci_unconditional(method, 0.0, 0.0, 1, n_draws, 1 << 12).unwrap();
            assert!(
                (ci.half_width - expect).abs() < 1e-9,
                "{method:?}: {} vs {expect}",
                ci.half_width
            );
        }
    }

    #[test]
    fn ci_width_scales_with_sqrt_l() {
        for method in [VarMethod::U, VarMethod::V, VarMethod::Mle] {
            let w1 = ci_unconditional(method, 0.3, 0.3, 1, 5000, 1 << 12)
                .unwrap()
                .half_width;
            let w10 = ci_unconditional(method, 0.3, 0.3, 10, 5000, 1 << 12)
                .unwrap()
                .half_width;
            assert!(
                (w1 / w10 - 10.0f64.sqrt()).abs() < 1e-9,
                "{method:?}: ratio {}",
                w1 / w10
            );
        }
    }

    #[test]
    fn u_interval_wider_than_mle_interval() {
        let ci_u = ci_unconditional(VarMethod::U, 0.3862, 0.3862, 10, 500_000, 1 << 12).unwrap();
        let ci_m = ci_unconditional(VarMethod::Mle, 0.3862, 0.3862, 10, 500_000, 1 << 12).unwrap();
        assert!(ci_u.half_width > ci_m.half_width);
    }
}

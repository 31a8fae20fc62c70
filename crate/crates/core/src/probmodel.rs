//! Random discrete distributions standing in for ideal circuit outputs.
//!
//! An ideal random-circuit output distribution over `M = 2^n` bitstrings
//! behaves like a flat-Dirichlet realization: iid Exponential(1) variates
//! normalized by their sum. This module generates such realizations, computes
//! their power sums, and evaluates the limiting densities that sampled
//! probabilities follow under the basic noise model.

use crate::error::{Error, Result};
use crate::seed::SeedSpec;
use rand::Rng;

/// Largest supported qubit count: one weight vector at `n = 30` is 8 GiB.
pub const MAX_QUBITS: u32 = 30;

/// Sum-to-one slack tolerated by [`ProbabilityVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Neumaier compensated summation. At `M = 2^26` terms, naive accumulation
/// loses about three digits; this keeps the error at a few ulps.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A realized probability vector over all `2^n` bitstrings.
///
/// Immutable after construction; cheap to share read-only across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    n: u32,
    weights: Vec<f64>,
}

impl ProbabilityVector {
    /// Validate invariants and wrap the weights: length `2^n`, entries
    /// nonnegative, sum within [`SUM_TOLERANCE`] of one.
    pub fn new(n: u32, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Dimension(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n}"
            )));
        }
        let m = 1usize << n;
        if weights.len() != m {
            return Err(Error::Dimension(format!(
                "expected 2^{n} = {m} weights, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Domain(format!("weight {w} is negative or not finite")));
        }
        let sum = compensated_sum(weights.iter().copied());
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!(
                "weights sum to {sum}, outside 1 +/- {SUM_TOLERANCE}"
            )));
        }
        Ok(ProbabilityVector { n, weights })
    }

    /// The uniform vector `1/M`.
    pub fn uniform(n: u32) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Dimension(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n}"
            )));
        }
        let m = 1usize << n;
        Ok(ProbabilityVector {
            n,
            weights: vec![1.0 / m as f64; m],
        })
    }

    /// Qubit count `n`.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// State count `M = 2^n`.
    pub fn m(&self) -> usize {
        1usize << self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of bitstring index `i`.
    pub fn get(&self, i: u64) -> f64 {
        self.weights[i as usize]
    }

    pub(crate) fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Power sums of a probability vector: `w2 = sum w_i^2`, `w3`, `w4`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentSummary {
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

/// Generate a flat-Dirichlet realization of length `2^n`: iid Exponential(1)
/// variates (inverse-CDF from the seeded stream) normalized by their
/// compensated sum. Deterministic for a fixed seed.
pub fn gen_porter_thomas(n: u32, seed: SeedSpec) -> Result<ProbabilityVector> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Dimension(format!(
            "qubit count must be in 1..={MAX_QUBITS}, got {n}"
        )));
    }
    let m = 1usize << n;
    let mut rng = seed.rng();
    let mut z = Vec::with_capacity(m);
    for _ in 0..m {
        let u: f64 = rng.gen(); // in [0, 1)
        z.push(-(1.0 - u).ln());
    }
    let total = compensated_sum(z.iter().copied());
    for zi in &mut z {
        *zi /= total;
    }
    ProbabilityVector::new(n, z)
}

/// Power sums `w2`, `w3`, `w4`, each accumulated with compensated summation.
pub fn moments(pv: &ProbabilityVector) -> MomentSummary {
    let mut s2 = 0.0f64;
    let mut c2 = 0.0f64;
    let mut s3 = 0.0f64;
    let mut c3 = 0.0f64;
    let mut s4 = 0.0f64;
    let mut c4 = 0.0f64;
    let add = |sum: &mut f64, comp: &mut f64, v: f64| {
        let t = *sum + v;
        if sum.abs() >= v.abs() {
            *comp += (*sum - t) + v;
        } else {
            *comp += (v - t) + *sum;
        }
        *sum = t;
    };
    for &w in pv.weights() {
        let w2 = w * w;
        add(&mut s2, &mut c2, w2);
        add(&mut s3, &mut c3, w2 * w);
        add(&mut s4, &mut c4, w2 * w2);
    }
    MomentSummary {
        w2: s2 + c2,
        w3: s3 + c3,
        w4: s4 + c4,
    }
}

/// Largest power accepted by [`theoretical_moment`]; `k!` overflows `f64`
/// beyond 170, which is the natural limit of the closed form.
pub const MAX_MOMENT_POWER: u64 = 170;

/// Expected `k`-th power of a single flat-Dirichlet coordinate:
/// `k! / [M (M+1) ... (M+k-1)]`.
pub fn theoretical_moment(m: u64, k: u64) -> Result<f64> {
    if m < 1 {
        return Err(Error::Domain(format!("state count must be >= 1, got {m}")));
    }
    if k < 1 || k > MAX_MOMENT_POWER {
        return Err(Error::Domain(format!(
            "power must be in 1..={MAX_MOMENT_POWER}, got {k}"
        )));
    }
    // Product of j / (M + j - 1); every factor stays in a safe range.
    let mut out = 1.0f64;
    for j in 1..=k {
        out *= j as f64 / (m + j - 1) as f64;
    }
    Ok(out)
}

/// Density of a sampled probability under the basic mixture at fidelity
/// `phi`: `phi M(M-1) t (1-t)^(M-2) + (1-phi)(M-1)(1-t)^(M-2)`.
///
/// The `(1-t)^(M-2)` factor is evaluated in log space; the direct form
/// underflows once `M` reaches about `2^20`.
pub fn mixture_beta_density(t: f64, m: u64, phi: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&t));
    debug_assert!((0.0..=1.0).contains(&phi));
    debug_assert!(m >= 2);
    let mf = m as f64;
    if t >= 1.0 {
        return 0.0;
    }
    let base = (mf - 1.0) * ((mf - 2.0) * (-t).ln_1p()).exp();
    base * (phi * mf * t + (1.0 - phi))
}

/// Density of the scaled value `z = M w` in the large-`M` limit:
/// `phi z e^(-z) + (1-phi) e^(-z)`, a Gamma(2,1) / Exponential(1) mixture.
pub fn mixture_exp_density(z: f64, phi: f64) -> f64 {
    debug_assert!(z >= 0.0);
    debug_assert!((0.0..=1.0).contains(&phi));
    (-z).exp() * (phi * z + (1.0 - phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_weights_complement() {
        let pv = gen_porter_thomas(1, SeedSpec::new(9, 0)).unwrap();
        let w = pv.weights();
        assert!(w[0] > 0.0 && w[0] < 1.0);
        assert!(w[1] > 0.0 && w[1] < 1.0);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_seed_is_bit_exact() {
        let a = gen_porter_thomas(3, SeedSpec::new(1234, 5)).unwrap();
        let b = gen_porter_thomas(3, SeedSpec::new(1234, 5)).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn n_out_of_range_is_dimension_error() {
        assert!(matches!(
            gen_porter_thomas(0, SeedSpec::new(0, 0)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            gen_porter_thomas(31, SeedSpec::new(0, 0)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mean_w2_matches_dirichlet_law() {
        // E w^(2) = 2/(M+1); averaged over 200 realizations at n = 12.
        let n = 12;
        let m = 1u64 << n;
        let mut acc = 0.0;
        let reps = 200;
        for r in 0..reps {
            let pv = gen_porter_thomas(n, SeedSpec::new(2024, r)).unwrap();
            acc += moments(&pv).w2;
        }
        let mean = acc / reps as f64;
        let expect = 2.0 / (m + 1) as f64;
        assert!(
            (mean / expect - 1.0).abs() < 0.02,
            "mean w2 {mean} vs {expect}"
        );
    }

    #[test]
    fn moments_uniform_and_point_mass() {
        let n = 6;
        let m = 1usize << n;
        let uni = ProbabilityVector::uniform(n).unwrap();
        let ms = moments(&uni);
        assert!((ms.w2 - 1.0 / m as f64).abs() < 1e-15);
        assert!((ms.w3 - 1.0 / (m as f64 * m as f64)).abs() < 1e-18);

        let mut w = vec![0.0; m];
        w[3] = 1.0;
        let point = ProbabilityVector::new(n, w).unwrap();
        let ms = moments(&point);
        assert_eq!((ms.w2, ms.w3, ms.w4), (1.0, 1.0, 1.0));
    }

    #[test]
    fn w2_concentrates_near_2_over_m() {
        // Monte Carlo: w2 in [1.8/M, 2.2/M] in at least 99% of 1000 seeds.
        let n = 12;
        let m = (1u64 << n) as f64;
        let mut hits = 0;
        let total = 1000;
        for r in 0..total {
            let pv = gen_porter_thomas(n, SeedSpec::new(77, r)).unwrap();
            let w2 = moments(&pv).w2;
            if w2 >= 1.8 / m && w2 <= 2.2 / m {
                hits += 1;
            }
        }
        assert!(hits >= 990, "only {hits}/{total} inside [1.8/M, 2.2/M]");
    }

    #[test]
    fn moment_invariants_hold() {
        for r in 0..20 {
            let pv = gen_porter_thomas(8, SeedSpec::new(5, r)).unwrap();
            let ms = moments(&pv);
            let m = pv.m() as f64;
            assert!(ms.w2 >= 1.0 / m && ms.w2 <= 1.0);
            assert!(ms.w3 <= ms.w2);
            assert!(ms.w4 <= ms.w3);
        }
    }

    #[test]
    fn theoretical_moment_closed_forms() {
        let m = 4096u64;
        assert!((theoretical_moment(m, 1).unwrap() - 1.0 / m as f64).abs() < 1e-18);
        let e2 = theoretical_moment(m, 2).unwrap();
        assert!((e2 - 2.0 / (m as f64 * (m + 1) as f64)).abs() < 1e-18);
        let e3 = theoretical_moment(m, 3).unwrap();
        let direct = 6.0 / (4096.0 * 4097.0 * 4098.0);
        assert!((e3 / direct - 1.0).abs() < 1e-14);
        assert!(matches!(theoretical_moment(m, 0), Err(Error::Domain(_))));
        assert!(matches!(theoretical_moment(m, 171), Err(Error::Domain(_))));
    }

    #[test]
    fn theoretical_moment_large_m_limit() {
        let m = 1u64 << 20;
        let v = theoretical_moment(m, 2).unwrap() * (m as f64) * (m as f64);
        assert!((v - 2.0).abs() < 1e-4, "M^2 E w^2 = {v}");
    }

    #[test]
    fn beta_density_edge_cases() {
        let m = 4096;
        // phi = 0: pure Beta(1, M-1).
        let t = 3.0 / m as f64;
        let expect = (m as f64 - 1.0) * (1.0 - t).powi(m as i32 - 2);
        assert!((mixture_beta_density(t, m, 0.0) / expect - 1.0).abs() < 1e-10);
        // phi = 1 vanishes at the origin.
        assert_eq!(mixture_beta_density(0.0, m, 1.0), 0.0);
        assert_eq!(mixture_beta_density(1.0, m, 0.5), 0.0);
    }

    #[test]
    fn beta_density_survives_huge_m() {
        let m = 1u64 << 20;
        let v = mixture_beta_density(5.0 / m as f64, m, 0.4);
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn exp_density_values() {
        assert!((mixture_exp_density(0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((mixture_exp_density(1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn densities_integrate_to_one() {
        // Composite Simpson oracle, independent of any library quadrature.
        fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
            let h = (b - a) / panels as f64;
            let mut acc = f(a) + f(b);
            for i in 1..panels {
                let x = a + i as f64 * h;
                acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        }
        for &(m, phi) in &[(64u64, 0.0), (64, 0.7), (4096, 0.3862), (1 << 20, 1.0)] {
            // The density concentrates on t ~ 1/M; beyond z = M t = 60 the
            // remaining mass is ~e^(-60). Integrate where the mass lives.
            let upper = (60.0 / m as f64).min(1.0);
            let total = simpson(|t| mixture_beta_density(t, m, phi), 0.0, upper, 200_000);
            assert!((total - 1.0).abs() < 1e-8, "beta integral {total} at M={m}");
        }
        for &phi in &[0.0, 0.25, 1.0] {
            // e^(-60) ~ 9e-27: truncation is far below the tolerance.
            let total = simpson(|z| mixture_exp_density(z, phi), 0.0, 60.0, 200_000);
            assert!((total - 1.0).abs() < 1e-8, "exp integral {total}");
        }
    }

    #[test]
    fn beta_density_matches_scaled_exp_density() {
        // Change of variables z = M t: f_beta(t) ~ M f_exp(M t) once M is
        // large enough that (1-t)^(M-2) ~ e^(-Mt); the gap decays like
        // (Mt)^2 / (2M), so rel. tol 1e-3 needs M around 2^20 for Mt <= 20.
        let m = 1u64 << 20;
        for &phi in &[0.0, 0.3862, 1.0] {
            for i in 1..=100 {
                let z = 0.2 * i as f64; // z = M t in (0, 20]
                let t = z / m as f64;
                let lhs = mixture_beta_density(t, m, phi);
                let rhs = m as f64 * mixture_exp_density(z, phi);
                assert!(
                    (lhs / rhs - 1.0).abs() < 1e-3,
                    "z={z} phi={phi}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn size_biased_draws_converge_to_gamma21() {
        // Drawing an index with probability proportional to its weight and
        // recording M*w at the draw: the empirical law approaches Gamma(2,1).
        use rand::Rng;
        let n = 16;
        let pv = gen_porter_thomas(n, SeedSpec::new(31337, 0)).unwrap();
        let m = pv.m();
        // Inverse-CDF draws via the cumulative weight table.
        let mut cdf = Vec::with_capacity(m);
        let mut acc = 0.0;
        for &w in pv.weights() {
            acc += w;
            cdf.push(acc);
        }
        let mut rng = SeedSpec::new(31337, 1).rng();
        let draws = 100_000;
        let mut zs: Vec<f64> = (0..draws)
            .map(|_| {
                let u: f64 = rng.gen();
                let idx = cdf.partition_point(|&c| c < u).min(m - 1);
                m as f64 * pv.weights()[idx]
            })
            .collect();
        zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Kolmogorov-Smirnov distance to the Gamma(2,1) CDF 1 - e^-z (1+z).
        let mut ks = 0.0f64;
        for (i, &z) in zs.iter().enumerate() {
            let f = 1.0 - (-z).exp() * (1.0 + z);
            let lo = i as f64 / draws as f64;
            let hi = (i + 1) as f64 / draws as f64;
            ks = ks.max((f - lo).abs()).max((hi - f).abs());
        }
        assert!(ks < 0.01, "KS distance {ks}");
    }
}

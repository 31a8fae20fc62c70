//! Sampling models, readout-error transforms, and sample drawing.
//!
//! Four models map an ideal probability vector to the distribution actually
//! sampled: a signal/uniform mixture, a general p-component mixture, and two
//! readout-error refinements (symmetric flip rate `q`, or asymmetric rates
//! `q1` for 1-read-as-0 and `q2` for 0-read-as-1).
//!
//! The readout noise vector is a convolution of the weights with the bitflip
//! law over XOR. Written as a sum over all flip patterns it is O(M^2); here it
//! factorizes into one 2x2 stochastic kernel per qubit applied butterfly-style
//! over the full array, which is O(M n) and makes n = 20+ feasible. The naive
//! sum survives in the tests as an oracle.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::probmodel::{compensated_sum, ProbabilityVector};
use crate::seed::SeedSpec;

/// Rejection sampling gives up after `ATTEMPT_FACTOR * N` attempts; this
/// surfaces acceptance vectors that are all but zero instead of spinning.
pub const ATTEMPT_FACTOR: u64 = 10_000;

/// One of the four sampling models.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Mixture of the ideal distribution (weight `phi`) and uniform noise.
    Basic { phi: f64 },
    /// Mixture of `p` probability vectors with weights `phis` summing to 1.
    GeneralP {
        phis: Vec<f64>,
        components: Vec<ProbabilityVector>,
    },
    /// No error with probability `phi`; readout-only errors with probability
    /// `phi_ro` (per-qubit flip rate `q`); uniform noise otherwise.
    ReadoutSymmetric { phi: f64, phi_ro: f64, q: f64 },
    /// No gate errors with probability `phi_g`, with every readout passed
    /// through the asymmetric channel; biased-uniform noise otherwise.
    ReadoutAsymmetric { phi_g: f64, q1: f64, q2: f64 },
}

impl NoiseModel {
    /// Check the parameter constraints of the variant.
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Basic { phi } => {
                if !(0.0..=1.0).contains(phi) {
                    return Err(Error::Domain(format!("phi must be in [0,1], got {phi}")));
                }
            }
            NoiseModel::GeneralP { phis, components } => {
                if phis.len() != components.len() || components.is_empty() {
                    return Err(Error::Dimension(format!(
                        "{} mixture weights for {} components",
                        phis.len(),
                        components.len()
                    )));
                }
                if phis.iter().any(|p| *p < 0.0) {
                    return Err(Error::Domain("mixture weights must be nonnegative".into()));
                }
                let total: f64 = compensated_sum(phis.iter().copied());
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Domain(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                let n = components[0].n();
                if components.iter().any(|c| c.n() != n) {
                    return Err(Error::Dimension(
                        "mixture components must share one qubit count".into(),
                    ));
                }
            }
            NoiseModel::ReadoutSymmetric { phi, phi_ro, q } => {
                if *phi < 0.0 || *phi_ro < 0.0 || phi + phi_ro > 1.0 {
                    return Err(Error::Domain(format!(
                        "need phi, phi_ro >= 0 and phi + phi_ro <= 1, got ({phi}, {phi_ro})"
                    )));
                }
                if !(*q > 0.0 && *q < 1.0) {
                    // q = 0 makes the conditional noise vector 0/0; callers
                    // wanting no readout errors use Basic.
                    return Err(Error::Domain(format!("q must be in (0,1), got {q}")));
                }
            }
            NoiseModel::ReadoutAsymmetric { phi_g, q1, q2 } => {
                if !(0.0..=1.0).contains(phi_g) {
                    return Err(Error::Domain(format!("phi_g must be in [0,1], got {phi_g}")));
                }
                for (name, q) in [("q1", q1), ("q2", q2)] {
                    if !(*q > 0.0 && *q < 1.0) {
                        return Err(Error::Domain(format!("{name} must be in (0,1), got {q}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A drawn multiset of bitstring indices with the looked-up probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    n: u32,
    /// Draws in order; the multiset view lives in `counts`.
    indices: Vec<u64>,
    counts: HashMap<u64, u64>,
    sampled_w: Vec<f64>,
    sampled_v: Option<Vec<f64>>,
}

impl Sample {
    /// Assemble a sample from drawn indices, looking up `w` (and optionally
    /// `v`) per draw.
    pub fn from_indices(
        indices: Vec<u64>,
        pv_lookup: &ProbabilityVector,
        v_lookup: Option<&ProbabilityVector>,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("sample has no draws".into()));
        }
        let m = pv_lookup.m() as u64;
        if let Some(v) = v_lookup {
            if v.n() != pv_lookup.n() {
                return Err(Error::Dimension(format!(
                    "v vector has n = {}, probabilities have n = {}",
                    v.n(),
                    pv_lookup.n()
                )));
            }
        }
        let mut counts = HashMap::new();
        let mut sampled_w = Vec::with_capacity(indices.len());
        for &i in &indices {
            if i >= m {
                return Err(Error::Dimension(format!("index {i} out of range for M = {m}")));
            }
            *counts.entry(i).or_insert(0u64) += 1;
            sampled_w.push(pv_lookup.get(i));
        }
        let sampled_v = v_lookup.map(|v| indices.iter().map(|&i| v.get(i)).collect());
        Ok(Sample {
            n: pv_lookup.n(),
            indices,
            counts,
            sampled_w,
            sampled_v,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Number of draws `N`.
    pub fn total(&self) -> usize {
        self.indices.len()
    }

    /// Draws in draw order.
    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    /// Occurrence count per drawn index (absent means zero).
    pub fn counts(&self) -> &HashMap<u64, u64> {
        &self.counts
    }

    /// The sampled probabilities, one per draw.
    pub fn sampled_w(&self) -> &[f64] {
        &self.sampled_w
    }

    /// The sampled readout-noise values, when a `v` lookup was supplied.
    pub fn sampled_v(&self) -> Option<&[f64]> {
        self.sampled_v.as_deref()
    }
}

/// Closed-form constants of the readout model for given `n`, `q`, `M`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ReadoutConstants {
    /// `P(any flip) = 1 - (1-q)^n`.
    pub d: f64,
    /// `M/(M+1) * ([q^2 + (1-q)^2]^n - 2(1-q)^n + 1)`.
    pub g: f64,
    /// Diagonal part `[q^2 + (1-q)^2]^n - (1-q)^(2n)`.
    pub h: f64,
    /// Off-diagonal part `D^2 - H`.
    pub k: f64,
}

/// Evaluate [`ReadoutConstants`]. `m` must equal `2^n`.
pub fn readout_constants(n: u32, q: f64, m: u64) -> Result<ReadoutConstants> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("q must be in (0,1), got {q}")));
    }
    if m != 1u64 << n {
        return Err(Error::Dimension(format!("m = {m} is not 2^{n}")));
    }
    let nf = i32::try_from(n).expect("n fits i32");
    let no_flip = (1.0 - q).powi(nf);
    let d = 1.0 - no_flip;
    let h = (q * q + (1.0 - q) * (1.0 - q)).powi(nf) - no_flip * no_flip;
    let k = d * d - h;
    let mf = m as f64;
    let g = mf / (mf + 1.0) * (2.0 * h + k);
    Ok(ReadoutConstants { d, g, h, k })
}

/// Probability of bitstring `x` when uniform noise is read through the
/// asymmetric channel: each coordinate is 1 with probability `q`.
pub fn biased_uniform_mass(x: u64, n: u32, q: f64) -> f64 {
    let ones = x.count_ones();
    q.powi(ones as i32) * (1.0 - q).powi((n - ones) as i32)
}

/// Apply one 2x2 kernel per qubit as a tensor-product pass over the array.
///
/// `kernel(j)[read][true]` is the per-qubit transition for qubit `j`. The
/// pass costs O(M n), the butterfly structure of a Walsh-Hadamard transform
/// with a stochastic kernel in place of the +/- one.
fn apply_qubit_kernels(values: &mut [f64], n: u32, kernel: impl Fn(u32) -> [[f64; 2]; 2]) {
    let m = values.len();
    debug_assert_eq!(m, 1usize << n);
    for j in 0..n {
        let k = kernel(j);
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

/// Full symmetric-flip convolution `t_i = sum_y w_(i XOR y) q^|y| (1-q)^(n-|y|)`,
/// including the identity pattern `y = 0`.
pub(crate) fn symmetric_channel(pv: &ProbabilityVector, q: f64) -> Vec<f64> {
    let mut values = pv.weights().to_vec();
    apply_qubit_kernels(&mut values, pv.n(), |_| [[1.0 - q, q], [q, 1.0 - q]]);
    values
}

/// The readout noise vector `v`: the distribution of observed bitstrings
/// conditioned on at least one readout flip (and no gate errors).
///
/// `v_i = [t_i - (1-q)^n w_i] / D` with `t` the full flip convolution.
pub fn readout_noise_vector(pv: &ProbabilityVector, q: f64) -> Result<ProbabilityVector> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("q must be in (0,1), got {q}")));
    }
    let n = pv.n();
    let no_flip = (1.0 - q).powi(n as i32);
    let d = 1.0 - no_flip;
    let mut t = symmetric_channel(pv, q);
    for (ti, &wi) in t.iter_mut().zip(pv.weights()) {
        // Exact in reals; clamp the floating-point residue.
        *ti = ((*ti - no_flip * wi) / d).max(0.0);
    }
    ProbabilityVector::new(n, t)
}

/// Distribution of read bitstrings when the true output is `pv` and every
/// qubit passes through the asymmetric readout channel
/// (`q1 = P(1 read as 0)`, `q2 = P(0 read as 1)`).
pub fn asymmetric_signal_vector(
    pv: &ProbabilityVector,
    q1: f64,
    q2: f64,
) -> Result<ProbabilityVector> {
    for (name, q) in [("q1", q1), ("q2", q2)] {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("{name} must be in (0,1), got {q}")));
        }
    }
    let mut values = pv.weights().to_vec();
    apply_qubit_kernels(&mut values, pv.n(), |_| [[1.0 - q2, q1], [q2, 1.0 - q1]]);
    ProbabilityVector::new(pv.n(), values)
}

/// The sampling distribution induced by `model` over the states of `pv`.
///
/// For [`NoiseModel::GeneralP`] the mixture components are used and `pv` only
/// fixes the expected dimension.
pub fn sampling_probs(model: &NoiseModel, pv: &ProbabilityVector) -> Result<ProbabilityVector> {
    model.validate()?;
    let n = pv.n();
    let m = pv.m();
    let uniform = 1.0 / m as f64;
    match model {
        NoiseModel::Basic { phi } => {
            let weights = pv
                .weights()
                .iter()
                .map(|&w| phi * w + (1.0 - phi) * uniform)
                .collect();
            ProbabilityVector::new(n, weights)
        }
        NoiseModel::GeneralP { phis, components } => {
            if components[0].n() != n {
                return Err(Error::Dimension(format!(
                    "components have n = {}, expected {n}",
                    components[0].n()
                )));
            }
            let mut out = vec![0.0f64; m];
            for (phi_k, comp) in phis.iter().zip(components) {
                for (o, &w) in out.iter_mut().zip(comp.weights()) {
                    *o += phi_k * w;
                }
            }
            ProbabilityVector::new(n, out)
        }
        NoiseModel::ReadoutSymmetric { phi, phi_ro, q } => {
            let v = readout_noise_vector(pv, *q)?;
            let rest = (1.0 - phi - phi_ro) * uniform;
            let weights = pv
                .weights()
                .iter()
                .zip(v.weights())
                .map(|(&w, &vi)| phi * w + phi_ro * vi + rest)
                .collect();
            ProbabilityVector::new(n, weights)
        }
        NoiseModel::ReadoutAsymmetric { phi_g, q1, q2 } => {
            let s = asymmetric_signal_vector(pv, *q1, *q2)?;
            let q = (1.0 - q1 + q2) / 2.0;
            let weights = s
                .weights()
                .iter()
                .enumerate()
                .map(|(i, &si)| phi_g * si + (1.0 - phi_g) * biased_uniform_mass(i as u64, n, q))
                .collect();
            ProbabilityVector::new(n, weights)
        }
    }
}

/// Alias table for O(1) draws from a discrete distribution after an O(M)
/// build (Vose's method).
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Build from weights proportional to the target probabilities.
    pub fn new(weights: &[f64]) -> Self {
        let m = weights.len();
        assert!(m > 0 && m <= u32::MAX as usize);
        let total: f64 = compensated_sum(weights.iter().copied());
        let scale = m as f64 / total;
        let mut prob: Vec<f64> = weights.iter().map(|&w| w * scale).collect();
        let mut alias: Vec<u32> = (0..m as u32).collect();
        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s as usize] = l;
            let leftover = prob[l as usize] - (1.0 - prob[s as usize]);
            prob[l as usize] = leftover;
            if leftover < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Whatever remains on either stack is 1 up to rounding.
        for &i in small.iter().chain(large.iter()) {
            prob[i as usize] = 1.0;
        }
        AliasTable { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Draw one index; consumes one integer and one float from `rng`.
    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let k = rng.gen_range(0..self.prob.len());
        let u: f64 = rng.gen();
        if u < self.prob[k] {
            k
        } else {
            self.alias[k] as usize
        }
    }
}

fn check_draw_dims(
    pi: &ProbabilityVector,
    pv_lookup: &ProbabilityVector,
    v_lookup: Option<&ProbabilityVector>,
) -> Result<()> {
    if pi.n() != pv_lookup.n() {
        return Err(Error::Dimension(format!(
            "sampling vector has n = {}, lookup has n = {}",
            pi.n(),
            pv_lookup.n()
        )));
    }
    if let Some(v) = v_lookup {
        if v.n() != pi.n() {
            return Err(Error::Dimension(format!(
                "v lookup has n = {}, expected {}",
                v.n(),
                pi.n()
            )));
        }
    }
    Ok(())
}

/// Draw `n_draws` iid indices from `pi`, recording `w` (and `v` when given)
/// at each draw. Deterministic per seed.
pub fn draw_sample(
    pi: &ProbabilityVector,
    pv_lookup: &ProbabilityVector,
    v_lookup: Option<&ProbabilityVector>,
    n_draws: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    check_draw_dims(pi, pv_lookup, v_lookup)?;
    if n_draws == 0 {
        return Err(Error::EmptyInput("draw count must be >= 1".into()));
    }
    let table = AliasTable::new(pi.weights());
    let mut rng = seed.rng();
    let indices: Vec<u64> = (0..n_draws).map(|_| table.sample(&mut rng) as u64).collect();
    Sample::from_indices(indices, pv_lookup, v_lookup)
}

/// Draw from `pi` but accept index `i` only with probability `tau[i]`,
/// repeating until `n_draws` draws are accepted.
///
/// The acceptance coin is drawn only when `0 < tau_i < 1`, so `tau == 1`
/// consumes the random stream exactly like [`draw_sample`] and reproduces
/// its sample for the same seed.
pub fn draw_sample_with_rejection(
    pi: &ProbabilityVector,
    pv_lookup: &ProbabilityVector,
    v_lookup: Option<&ProbabilityVector>,
    tau: &[f64],
    n_draws: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    check_draw_dims(pi, pv_lookup, v_lookup)?;
    if tau.len() != pi.m() {
        return Err(Error::Dimension(format!(
            "acceptance vector has length {}, expected {}",
            tau.len(),
            pi.m()
        )));
    }
    if let Some(t) = tau.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("acceptance probability {t} outside [0,1]")));
    }
    if tau.iter().all(|&t| t == 0.0) {
        return Err(Error::NoAcceptance("every acceptance probability is zero".into()));
    }
    if n_draws == 0 {
        return Err(Error::EmptyInput("draw count must be >= 1".into()));
    }
    let table = AliasTable::new(pi.weights());
    let mut rng = seed.rng();
    let cap = ATTEMPT_FACTOR.saturating_mul(n_draws as u64);
    let mut attempts = 0u64;
    let mut indices = Vec::with_capacity(n_draws);
    while indices.len() < n_draws {
        if attempts >= cap {
            return Err(Error::NoAcceptance(format!(
                "{attempts} attempts produced only {}/{n_draws} accepted draws",
                indices.len()
            )));
        }
        attempts += 1;
        let i = table.sample(&mut rng);
        let t = tau[i];
        let accept = if t >= 1.0 {
            true
        } else if t <= 0.0 {
            false
        } else {
            rng.gen::<f64>() < t
        };
        if accept {
            indices.push(i as u64);
        }
    }
    Sample::from_indices(indices, pv_lookup, v_lookup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probmodel::gen_porter_thomas;

    /// Brute-force oracle: the O(M^2) sum over all nonzero flip patterns.
    fn naive_readout_noise(pv: &ProbabilityVector, q: f64) -> Vec<f64> {
        let n = pv.n();
        let m = pv.m();
        let d = 1.0 - (1.0 - q).powi(n as i32);
        (0..m as u64)
            .map(|x| {
                let mut acc = 0.0;
                for y in 1..m as u64 {
                    let ones = y.count_ones() as i32;
                    acc += pv.get(x ^ y) * q.powi(ones) * (1.0 - q).powi(n as i32 - ones);
                }
                acc / d
            })
            .collect()
    }

    /// Brute-force oracle for the asymmetric channel.
    fn naive_asymmetric_signal(pv: &ProbabilityVector, q1: f64, q2: f64) -> Vec<f64> {
        let n = pv.n();
        let m = pv.m();
        (0..m as u64)
            .map(|x| {
                let mut acc = 0.0;
                for truth in 0..m as u64 {
                    let mut p = pv.get(truth);
                    for j in 0..n {
                        let t = (truth >> j) & 1;
                        let r = (x >> j) & 1;
                        p *= match (t, r) {
                            (1, 0) => q1,
                            (1, 1) => 1.0 - q1,
                            (0, 1) => q2,
                            (0, 0) => 1.0 - q2,
                            _ => unreachable!(),
                        };
                    }
                    acc += p;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn single_qubit_noise_vector_swaps() {
        let pv = ProbabilityVector::new(1, vec![0.3, 0.7]).unwrap();
        let v = readout_noise_vector(&pv, 0.11).unwrap();
        assert!((v.get(0) - 0.7).abs() < 1e-15);
        assert!((v.get(1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn uniform_stays_uniform() {
        let pv = ProbabilityVector::uniform(5).unwrap();
        let v = readout_noise_vector(&pv, 0.038).unwrap();
        for &w in v.weights() {
            assert!((w - 1.0 / 32.0).abs() < 1e-14);
        }
    }

    #[test]
    fn fast_transform_matches_naive_oracle() {
        for r in 0..10 {
            let n = 3 + (r % 5) as u32; // up to n = 7 here; n <= 10 in acceptance
            let pv = gen_porter_thomas(n, SeedSpec::new(800, r)).unwrap();
            let v = readout_noise_vector(&pv, 0.038).unwrap();
            let oracle = naive_readout_noise(&pv, 0.038);
            for (a, b) in v.weights().iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn asymmetric_transform_matches_naive_oracle() {
        for r in 0..6 {
            let n = 2 + (r % 4) as u32;
            let pv = gen_porter_thomas(n, SeedSpec::new(900, r)).unwrap();
            let s = asymmetric_signal_vector(&pv, 0.055, 0.023).unwrap();
            let oracle = naive_asymmetric_signal(&pv, 0.055, 0.023);
            for (a, b) in s.weights().iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn asymmetric_single_qubit_channel_rows() {
        let pv = ProbabilityVector::new(1, vec![1.0, 0.0]).unwrap();
        let s = asymmetric_signal_vector(&pv, 0.055, 0.023).unwrap();
        assert!((s.get(0) - 0.977).abs() < 1e-15);
        assert!((s.get(1) - 0.023).abs() < 1e-15);
        let pv = ProbabilityVector::new(1, vec![0.0, 1.0]).unwrap();
        let s = asymmetric_signal_vector(&pv, 0.055, 0.023).unwrap();
        assert!((s.get(0) - 0.055).abs() < 1e-15);
        assert!((s.get(1) - 0.945).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_equal_rates_recombines_symmetric_parts() {
        // q1 = q2 = q: the channel output is the full flip convolution,
        // i.e. (1-q)^n * pv + D * readout_noise_vector.
        let q = 0.07;
        let pv = gen_porter_thomas(6, SeedSpec::new(901, 0)).unwrap();
        let s = asymmetric_signal_vector(&pv, q, q).unwrap();
        let v = readout_noise_vector(&pv, q).unwrap();
        let no_flip = (1.0 - q).powi(6);
        let d = 1.0 - no_flip;
        for i in 0..pv.m() as u64 {
            let recombined = no_flip * pv.get(i) + d * v.get(i);
            assert!((s.get(i) - recombined).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_probs_basic_and_degenerate_mixture() {
        let pv = gen_porter_thomas(6, SeedSpec::new(55, 0)).unwrap();
        let m = pv.m() as f64;
        let pi = sampling_probs(&NoiseModel::Basic { phi: 0.0 }, &pv).unwrap();
        for &p in pi.weights() {
            assert!((p - 1.0 / m).abs() < 1e-15);
        }
        let other = gen_porter_thomas(6, SeedSpec::new(55, 1)).unwrap();
        let model = NoiseModel::GeneralP {
            phis: vec![1.0, 0.0],
            components: vec![pv.clone(), other],
        };
        let pi = sampling_probs(&model, &pv).unwrap();
        for (a, b) in pi.weights().iter().zip(pv.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_bias_parameter() {
        // q1 = 0.055, q2 = 0.023 biases the uniform term to q = 0.484.
        let q: f64 = (1.0 - 0.055 + 0.023) / 2.0;
        assert!((q - 0.484).abs() < 1e-12);
        // And the biased-uniform masses sum to one.
        let total: f64 = (0..1u64 << 8).map(|x| biased_uniform_mass(x, 8, q)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_probs_outputs_are_valid_vectors() {
        let pv = gen_porter_thomas(8, SeedSpec::new(56, 0)).unwrap();
        let models = [
            NoiseModel::Basic { phi: 0.3862 },
            NoiseModel::ReadoutSymmetric {
                phi: 0.3862,
                phi_ro: 0.2286,
                q: 0.038,
            },
            NoiseModel::ReadoutAsymmetric {
                phi_g: 0.6148,
                q1: 0.055,
                q2: 0.023,
            },
        ];
        for model in &models {
            // Construction revalidates the probability-vector invariants.
            let pi = sampling_probs(model, &pv).unwrap();
            assert_eq!(pi.m(), pv.m());
        }
    }

    #[test]
    fn readout_constants_single_qubit() {
        let c = readout_constants(1, 0.038, 2).unwrap();
        assert!((c.d - 0.038).abs() < 1e-15);
        let expect_g = 2.0 / 3.0 * 2.0 * 0.038 * 0.038;
        assert!((c.g - expect_g).abs() < 1e-15);
        assert!((c.g / (c.d * c.d) - 2.0 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn readout_constants_identity() {
        for &(n, q) in &[(12u32, 0.038), (8, 0.2), (20, 0.004)] {
            let m = 1u64 << n;
            let c = readout_constants(n, q, m).unwrap();
            assert!(c.d > 0.0 && c.d < 1.0);
            assert!(c.g > 0.0);
            let mf = m as f64;
            let direct = mf / (mf + 1.0) * (2.0 * c.h + c.k);
            assert!((c.g - direct).abs() < 1e-14 * c.g.max(1.0));
        }
        let c = readout_constants(12, 0.038, 1 << 12).unwrap();
        assert!((c.d - (1.0 - 0.962f64.powi(12))).abs() < 1e-15);
        assert!((c.d - 0.3718).abs() < 5e-5);
    }

    #[test]
    fn point_mass_sampling() {
        let n = 4;
        let m = 1usize << n;
        let mut w = vec![0.0; m];
        w[7] = 1.0;
        let pi = ProbabilityVector::new(n, w).unwrap();
        let pv = ProbabilityVector::uniform(n).unwrap();
        let s = draw_sample(&pi, &pv, None, 100, SeedSpec::new(3, 0)).unwrap();
        assert_eq!(s.counts().len(), 1);
        assert_eq!(s.counts()[&7], 100);
    }

    #[test]
    fn uniform_multinomial_concentration() {
        let n = 4;
        let m = 1usize << n;
        let pi = ProbabilityVector::uniform(n).unwrap();
        let s = draw_sample(&pi, &pi, None, 1_000_000, SeedSpec::new(4, 0)).unwrap();
        let expect = 1_000_000.0 / m as f64;
        let sd = (1_000_000.0 * (1.0 / m as f64) * (1.0 - 1.0 / m as f64)).sqrt();
        for i in 0..m as u64 {
            let c = *s.counts().get(&i).unwrap_or(&0) as f64;
            assert!((c - expect).abs() < 5.0 * sd, "bin {i}: {c} vs {expect}");
        }
    }

    #[test]
    fn draws_are_bit_identical_per_seed() {
        let pv = gen_porter_thomas(8, SeedSpec::new(10, 0)).unwrap();
        let pi = sampling_probs(&NoiseModel::Basic { phi: 0.5 }, &pv).unwrap();
        let a = draw_sample(&pi, &pv, None, 5000, SeedSpec::new(10, 1)).unwrap();
        let b = draw_sample(&pi, &pv, None, 5000, SeedSpec::new(10, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejection_with_all_ones_matches_plain_draw() {
        let pv = gen_porter_thomas(8, SeedSpec::new(11, 0)).unwrap();
        let pi = sampling_probs(&NoiseModel::Basic { phi: 0.4 }, &pv).unwrap();
        let tau = vec![1.0; pv.m()];
        let a = draw_sample(&pi, &pv, None, 4000, SeedSpec::new(11, 1)).unwrap();
        let b = draw_sample_with_rejection(&pi, &pv, None, &tau, 4000, SeedSpec::new(11, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejection_rate_matches_constant_tau() {
        let pv = gen_porter_thomas(8, SeedSpec::new(12, 0)).unwrap();
        let pi = sampling_probs(&NoiseModel::Basic { phi: 0.0 }, &pv).unwrap();
        let c = 0.3;
        let tau = vec![c; pv.m()];
        // With constant tau the accepted distribution is unchanged and the
        // acceptance rate is ~c; check via the attempt count implied by RNG
        // reproduction: count accepted draws among a fixed attempt budget.
        let n_draws = 30_000;
        let s = draw_sample_with_rejection(&pi, &pv, None, &tau, n_draws, SeedSpec::new(12, 1)).unwrap();
        assert_eq!(s.total(), n_draws);
        // Replay manually to count attempts.
        let table = AliasTable::new(pi.weights());
        let mut rng = SeedSpec::new(12, 1).rng();
        let mut attempts = 0u64;
        let mut accepted = 0usize;
        while accepted < n_draws {
            attempts += 1;
            let _ = table.sample(&mut rng);
            if rng.gen::<f64>() < c {
                accepted += 1;
            }
        }
        let rate = n_draws as f64 / attempts as f64;
        let se = (c * (1.0 - c) / attempts as f64).sqrt();
        assert!((rate - c).abs() < 4.0 * se + 1e-3, "acceptance rate {rate}");
    }

    #[test]
    fn rejection_all_zero_tau_errors() {
        let pv = gen_porter_thomas(4, SeedSpec::new(13, 0)).unwrap();
        let tau = vec![0.0; pv.m()];
        assert!(matches!(
            draw_sample_with_rejection(&pv, &pv, None, &tau, 10, SeedSpec::new(13, 1)),
            Err(Error::NoAcceptance(_))
        ));
    }

    #[test]
    fn weak_dependence_moment_check() {
        // E[sum_i v_i w_i] = 1/(M+1): Monte Carlo over 200 realizations.
        let n = 12;
        let m = (1u64 << n) as f64;
        let reps = 200;
        let mut vals = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let pv = gen_porter_thomas(n, SeedSpec::new(8600, r)).unwrap();
            let v = readout_noise_vector(&pv, 0.038).unwrap();
            let dot: f64 = pv
                .weights()
                .iter()
                .zip(v.weights())
                .map(|(a, b)| a * b)
                .sum();
            vals.push(dot);
        }
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let se = sd / (reps as f64).sqrt();
        let expect = 1.0 / (m + 1.0);
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn alias_table_reproduces_probabilities() {
        let weights = vec![0.5, 0.25, 0.125, 0.0625, 0.0625];
        let table = AliasTable::new(&weights);
        let mut rng = SeedSpec::new(99, 0).rng();
        let mut counts = [0u64; 5];
        let draws = 400_000;
        for _ in 0..draws {
            counts[table.sample(&mut rng)] += 1;
        }
        for (i, &w) in weights.iter().enumerate() {
            let freq = counts[i] as f64 / draws as f64;
            let sd = (w * (1.0 - w) / draws as f64).sqrt();
            assert!((freq - w).abs() < 5.0 * sd, "state {i}: {freq} vs {w}");
        }
    }
}

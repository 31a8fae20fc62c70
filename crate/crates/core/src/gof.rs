//! Goodness-of-fit testing and distributional summaries.
//!
//! Pearson chi-square with smallest-first cell merging, the fidelity value
//! minimizing the statistic, histograms of sampled probabilities with the
//! theoretical mixture overlay, and expected-vs-observed frequency pairs.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::probmodel::{mixture_beta_density, mixture_exp_density, ProbabilityVector};
use crate::special::chi_square_sf;

/// Default minimum expected count per cell before merging.
pub const DEFAULT_MIN_EXPECTED: f64 = 5.0;

/// Result of the Pearson chi-square test after cell merging.
#[derive(Debug, Clone, Serialize)]
pub struct ChiSquareResult {
    /// The X^2 statistic over the merged cells.
    pub statistic: f64,
    /// Degrees of freedom: cells after merging, minus one, minus the number
    /// of estimated parameters.
    pub df: u64,
    /// How many original cells were pooled away.
    pub cells_merged: u64,
    /// Survival probability at the statistic; underflows to zero for extreme
    /// statistics, in which case `log_p_value` stays informative.
    pub p_value: f64,
    /// Natural log of the p-value.
    pub log_p_value: f64,
}

/// Pearson chi-square of observed counts against the model probabilities.
///
/// Cells with expected count `N pi_i` below `min_expected` are pooled,
/// smallest expectation first, into a single cell (absorbing further cells
/// until the pool itself clears the threshold). `estimated_params` lowers the
/// degrees of freedom, e.g. 1 when `phi` was fitted from the same data.
pub fn chi_square(
    counts: &HashMap<u64, u64>,
    pi: &ProbabilityVector,
    n_draws: u64,
    estimated_params: u64,
    min_expected: f64,
) -> Result<ChiSquareResult> {
    let total: u64 = counts.values().sum();
    if total != n_draws {
        return Err(Error::Dimension(format!(
            "counts sum to {total}, expected N = {n_draws}"
        )));
    }
    if n_draws == 0 {
        return Err(Error::EmptyInput("chi-square needs draws".into()));
    }
    let m = pi.m() as u64;
    if let Some(&idx) = counts.keys().find(|&&i| i >= m) {
        return Err(Error::Dimension(format!("index {idx} out of range for M = {m}")));
    }
    let nf = n_draws as f64;

    // Order cells by expected count so pooling is smallest-first.
    let mut order: Vec<u32> = (0..m as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        pi.get(u64::from(a))
            .partial_cmp(&pi.get(u64::from(b)))
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut pooled_expected = 0.0f64;
    let mut pooled_observed = 0u64;
    let mut cells_merged = 0u64;
    let mut cut = 0usize;
    for (pos, &idx) in order.iter().enumerate() {
        let expected = nf * pi.get(u64::from(idx));
        if expected < min_expected || (cells_merged > 0 && pooled_expected < min_expected) {
            pooled_expected += expected;
            pooled_observed += counts.get(&u64::from(idx)).copied().unwrap_or(0);
            cells_merged += 1;
            cut = pos + 1;
        } else {
            break;
        }
    }

    let kept = m - cells_merged;
    let cell_count = kept + u64::from(cells_merged > 0);
    if cell_count < 2 {
        return Err(Error::DegenerateBinning(format!(
            "merging left {cell_count} cell(s)"
        )));
    }

    let mut statistic = 0.0f64;
    for &idx in &order[cut..] {
        let expected = nf * pi.get(u64::from(idx));
        let observed = counts.get(&u64::from(idx)).copied().unwrap_or(0) as f64;
        let dev = observed - expected;
        statistic += dev * dev / expected;
    }
    if cells_merged > 0 {
        if pooled_expected <= 0.0 {
            return Err(Error::DegenerateBinning(
                "pooled cell has zero expected count".into(),
            ));
        }
        let dev = pooled_observed as f64 - pooled_expected;
        statistic += dev * dev / pooled_expected;
    }

    let df_raw = cell_count - 1;
    if df_raw <= estimated_params {
        return Err(Error::DegenerateBinning(format!(
            "{df_raw} degrees of freedom cannot absorb {estimated_params} estimated parameter(s)"
        )));
    }
    let df = df_raw - estimated_params;
    let (p_value, log_p_value) = chi_square_sf(statistic, df as f64);
    Ok(ChiSquareResult {
        statistic,
        df,
        cells_merged,
        p_value,
        log_p_value,
    })
}

/// Convergence window of the golden-section search in [`min_chisq_phi`].
pub const MIN_CHISQ_TOL: f64 = 1e-5;

/// The fidelity minimizing the merged-cell chi-square statistic for the
/// basic mixture `pi(phi) = phi w + (1-phi)/M`, by golden-section search.
pub fn min_chisq_phi(counts: &HashMap<u64, u64>, pv: &ProbabilityVector, n_draws: u64) -> Result<f64> {
    let stat = |phi: f64| -> Result<f64> {
        let m = pv.m() as f64;
        let weights = pv
            .weights()
            .iter()
            .map(|&w| phi * w + (1.0 - phi) / m)
            .collect();
        let pi = ProbabilityVector::new(pv.n(), weights)?;
        Ok(chi_square(counts, &pi, n_draws, 1, DEFAULT_MIN_EXPECTED)?.statistic)
    };
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = 0.0f64;
    let mut b = 1.0f64;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = stat(c)?;
    let mut fd = stat(d)?;
    while (b - a) > MIN_CHISQ_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = stat(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = stat(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Scale a histogram is tallied on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HistogramScale {
    /// Raw sampled probabilities `w`.
    W,
    /// Scaled values `z = M w`.
    Z,
}

/// Binning request for [`histogram`].
#[derive(Debug, Clone, Serialize)]
pub struct HistogramSpec {
    pub bins: usize,
    /// Upper edge on the chosen scale; the lower edge is zero.
    pub t_max: f64,
    pub scale: HistogramScale,
}

impl HistogramSpec {
    /// 200 bins on `[0, 10/M]` of the w-scale.
    pub fn default_w_scale(m: u64) -> Self {
        HistogramSpec {
            bins: 200,
            t_max: 10.0 / m as f64,
            scale: HistogramScale::W,
        }
    }

    /// 200 bins on `[0, 10]` of the z-scale.
    pub fn default_z_scale() -> Self {
        HistogramSpec {
            bins: 200,
            t_max: 10.0,
            scale: HistogramScale::Z,
        }
    }
}

/// A filled histogram with the theoretical overlay.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub spec: HistogramSpec,
    /// Per-bin tallies of the in-range draws.
    pub counts: Vec<u64>,
    /// Draws above `t_max` (kept so `sum(counts) + overflow = N`).
    pub overflow: u64,
    /// Expected counts per bin from the asymptotic mixture density.
    pub overlay: Vec<f64>,
}

impl Histogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        let width = self.spec.t_max / self.spec.bins as f64;
        (0..self.spec.bins).map(|b| (b as f64 + 0.5) * width).collect()
    }
}

/// Tally sampled probabilities and overlay the theoretical density scaled to
/// expected counts per bin (beta mixture on the w-scale, exponential mixture
/// on the z-scale).
pub fn histogram(sampled_w: &[f64], spec: &HistogramSpec, m: u64, phi: f64) -> Result<Histogram> {
    if sampled_w.is_empty() {
        return Err(Error::EmptyInput("histogram needs at least one draw".into()));
    }
    if spec.bins < 2 {
        return Err(Error::Domain(format!("need at least 2 bins, got {}", spec.bins)));
    }
    if !(spec.t_max > 0.0) {
        return Err(Error::Domain(format!("t_max must be positive, got {}", spec.t_max)));
    }
    let width = spec.t_max / spec.bins as f64;
    let mut counts = vec![0u64; spec.bins];
    let mut overflow = 0u64;
    for &w in sampled_w {
        let value = match spec.scale {
            HistogramScale::W => w,
            HistogramScale::Z => m as f64 * w,
        };
        let bin = (value / width).floor() as usize;
        if bin < spec.bins {
            counts[bin] += 1;
        } else {
            overflow += 1;
        }
    }
    let nf = sampled_w.len() as f64;
    let overlay = (0..spec.bins)
        .map(|b| {
            let center = (b as f64 + 0.5) * width;
            let density = match spec.scale {
                HistogramScale::W => mixture_beta_density(center, m, phi),
                HistogramScale::Z => mixture_exp_density(center, phi),
            };
            nf * width * density
        })
        .collect();
    Ok(Histogram {
        spec: spec.clone(),
        counts,
        overflow,
        overlay,
    })
}

/// One `(expected, observed)` frequency pair per bitstring index, optionally
/// dropping indices with expected count below `floor`.
pub fn freq_scatter(
    counts: &HashMap<u64, u64>,
    pi: &ProbabilityVector,
    n_draws: u64,
    floor: Option<f64>,
) -> Vec<(f64, u64)> {
    let nf = n_draws as f64;
    let floor = floor.unwrap_or(f64::NEG_INFINITY);
    (0..pi.m() as u64)
        .filter_map(|i| {
            let expected = nf * pi.get(i);
            if expected >= floor {
                Some((expected, counts.get(&i).copied().unwrap_or(0)))
            } else {
                None
            }
        })
        .collect()
}

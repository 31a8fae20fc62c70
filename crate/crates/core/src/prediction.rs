//! Component-wise fidelity prediction.
//!
//! The predicted fidelity of a circuit is the product of one-minus-error over
//! every 1-qubit gate, 2-qubit gate, and qubit readout. Products of a
//! thousand-plus factors near one are accumulated as summed `ln_1p` terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Average error rate of a 1-qubit gate in the simplified formula.
pub const ERR_GATE1: f64 = 0.0016;
/// Average error rate of a 2-qubit gate in the simplified formula.
pub const ERR_GATE2: f64 = 0.0062;
/// Average per-qubit readout error rate.
pub const ERR_READOUT: f64 = 0.038;

/// Reference per-size fidelities (even `n` from 12 to 26) used throughout the
/// simulation studies. These come from a calibrated variant of the component
/// formula and are shipped as constants rather than recomputed.
pub const REFERENCE_FIDELITIES: [(u32, f64); 8] = [
    (12, 0.3862),
    (14, 0.3320),
    (16, 0.2828),
    (18, 0.2207),
    (20, 0.1875),
    (22, 0.1554),
    (24, 0.1256),
    (26, 0.1024),
];

/// Look up the reference fidelity for a supported qubit count.
pub fn reference_fidelity(n: u32) -> Option<f64> {
    REFERENCE_FIDELITIES
        .iter()
        .find(|(size, _)| *size == n)
        .map(|(_, phi)| *phi)
}

/// Per-component error probabilities of one circuit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CircuitErrorProfile {
    /// Error probability of each 1-qubit gate.
    pub e_g1: Vec<f64>,
    /// Error probability of each 2-qubit gate.
    pub e_g2: Vec<f64>,
    /// Readout error probability of each qubit.
    pub e_q: Vec<f64>,
}

impl CircuitErrorProfile {
    /// Homogeneous profile with the fixed average rates.
    pub fn homogeneous(n_g1: usize, n_g2: usize, n_qubits: usize) -> Self {
        CircuitErrorProfile {
            e_g1: vec![ERR_GATE1; n_g1],
            e_g2: vec![ERR_GATE2; n_g2],
            e_q: vec![ERR_READOUT; n_qubits],
        }
    }

    fn validate(&self) -> Result<()> {
        for e in self.e_g1.iter().chain(&self.e_g2).chain(&self.e_q) {
            if !(0.0..1.0).contains(e) {
                return Err(Error::Domain(format!(
                    "error probability {e} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Predicted fidelity: product of `(1 - e)` over every profile entry,
/// computed as `exp(sum ln_1p(-e))`.
pub fn fidelity_formula77(profile: &CircuitErrorProfile) -> Result<f64> {
    profile.validate()?;
    let log_sum: f64 = profile
        .e_g1
        .iter()
        .chain(&profile.e_g2)
        .chain(&profile.e_q)
        .map(|&e| (-e).ln_1p())
        .sum();
    Ok(log_sum.exp())
}

/// Simplified prediction from component counts at the fixed average rates:
/// `(1-0.0016)^n_g1 (1-0.0062)^n_g2 (1-0.038)^n`.
pub fn fidelity_simple(n_g1: u64, n_g2: u64, n_qubits: u64) -> f64 {
    let log_sum = n_g1 as f64 * (-ERR_GATE1).ln_1p()
        + n_g2 as f64 * (-ERR_GATE2).ln_1p()
        + n_qubits as f64 * (-ERR_READOUT).ln_1p();
    log_sum.exp()
}

/// Total gate fidelity and the readout-only error probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateFidelity {
    /// Probability of no gate errors: `phi / (1-q)^n`.
    pub phi_g: f64,
    /// Probability of no gate errors but some readout errors: `phi_g - phi`.
    pub phi_ro: f64,
}

/// Split the fidelity into its gate part via `phi = phi_g (1-q)^n`.
pub fn total_gate_fidelity(phi: f64, n_qubits: u32, q: f64) -> Result<GateFidelity> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Domain(format!("phi must be in [0,1], got {phi}")));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("q must be in [0,1), got {q}")));
    }
    let phi_g = phi / (1.0 - q).powi(n_qubits as i32);
    if phi_g > 1.0 {
        return Err(Error::Domain(format!(
            "phi = {phi} with q = {q} over {n_qubits} qubits implies phi_g = {phi_g} > 1"
        )));
    }
    Ok(GateFidelity {
        phi_g,
        phi_ro: phi_g - phi,
    })
}

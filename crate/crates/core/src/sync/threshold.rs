use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the sufficient coupling condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInputs {
    /// Heterogeneity bound.
    pub m: f64,
    /// Synchronization tolerance on `V_v`.
    pub eps_tol: f64,
    pub delta: f64,
    /// Synchronization window in fast time.
    pub t_min: f64,
    /// Bound on `W(0)`.
    pub w0: f64,
}

impl ThresholdInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tol > 0.0 && self.eps_tol.is_finite()) {
            return Err(Error::Argument(format!("eps_tol = {} must be positive", self.eps_tol)));
        }
        if !(self.t_min > 0.0 && self.t_min.is_finite()) {
            return Err(Error::Argument(format!("t_min = {} must be positive", self.t_min)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Argument(format!("delta = {} not in (0, 1]", self.delta)));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::Argument(format!("M = {} must be finite and >= 0", self.m)));
        }
        if !(self.w0 >= 0.0 && self.w0.is_finite()) {
            return Err(Error::Argument(format!("W0 = {} must be finite and >= 0", self.w0)));
        }
        Ok(())
    }
}

/// Both terms of the threshold and their maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub k_star: f64,
    /// `2M / sqrt(eps_tol)`.
    pub steady: f64,
    /// `ln(2 W0 / sqrt(eps_tol)) / (delta t_min)`, floored at zero.
    pub transient: f64,
    /// The logarithm was negative and has been floored.
    pub transient_vacuous: bool,
}

pub fn threshold_terms(inputs: &ThresholdInputs) -> Result<Threshold> {
    inputs.validate()?;
    let root = inputs.eps_tol.sqrt();
    let steady = 2.0 * inputs.m / root;
    let raw = if inputs.w0 > 0.0 {
        (2.0 * inputs.w0 / root).ln() / (inputs.delta * inputs.t_min)
    } else {
        f64::NEG_INFINITY
    };
    let transient = raw.max(0.0);
    Ok(Threshold { k_star: steady.max(transient), steady, transient, transient_vacuous: raw < 0.0 })
}

/// `k* = max(2M / sqrt(eps), max(0, ln(2 W0 / sqrt(eps)) / (delta t_min)))`.
pub fn coupling_threshold(inputs: &ThresholdInputs) -> Result<f64> {
    threshold_terms(inputs).map(|t| t.k_star)
}

/// `(W0 - 2M/k) e^{-kt} + 2M/k` at each time.
pub fn gronwall_envelope(w0: f64, m: f64, k: f64, times: &[f64]) -> Result<Vec<f64>> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Argument(format!("envelope needs k > 0, got {k}")));
    }
    let floor = 2.0 * m / k;
    Ok(times.iter().map(|&t| (w0 - floor) * (-k * t).exp() + floor).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let i = ThresholdInputs { m: 1.0, eps_tol: 0.04, delta: 0.5, t_min: 2.0, w0: 0.5 };
        let t = threshold_terms(&i).unwrap();
        assert!((t.steady - 10.0).abs() < 1e-12);
        assert!((t.transient - 5f64.ln()).abs() < 1e-12);
        assert_eq!(t.k_star, t.steady);
    }

    #[test]
    fn floored_log() {
        let i = ThresholdInputs { m: 0.3, eps_tol: 0.01, delta: 0.1, t_min: 5.0, w0: 0.01 };
        let t = threshold_terms(&i).unwrap();
        assert_eq!(t.transient, 0.0);
        assert!(t.transient_vacuous);
        assert!(gronwall_envelope(1.0, 0.0, 0.0, &[0.0]).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::sections::PoincareSection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LingerMethod {
    Quadrature,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorLinger {
    pub oscillator: usize,
    /// Fast-time units.
    pub t_linger: f64,
    /// Quadrature error estimate, fast-time units.
    pub error_estimate: Option<f64>,
    pub entry: PoincareSection,
    pub pre_jump: PoincareSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LingerReport {
    pub method: LingerMethod,
    pub oscillators: Vec<OscillatorLinger>,
    pub t_linger_min: f64,
}

impl LingerReport {
    pub fn new(method: LingerMethod, oscillators: Vec<OscillatorLinger>) -> Result<Self> {
        for o in &oscillators {
            if !(o.t_linger.is_finite() && o.t_linger > 0.0) {
                return Err(Error::Argument(format!(
                    "linger time {} of oscillator {} is not positive",
                    o.t_linger, o.oscillator
                )));
            }
        }
        let t_linger_min = sync_window(&oscillators.iter().map(|o| o.t_linger).collect::<Vec<_>>())?;
        Ok(LingerReport { method, oscillators, t_linger_min })
    }

    pub fn times(&self) -> Vec<f64> {
        self.oscillators.iter().map(|o| o.t_linger).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table: oscillator, method, linger time, network minimum.
    pub fn table(&self) -> String {
        let method = match self.method {
            LingerMethod::Quadrature => "quadrature",
            LingerMethod::Empirical => "empirical",
        };
        let mut s = format!("{:>10}  {:>10}  {:>16}  {:>16}\n", "oscillator", "method", "t_linger", "t_linger_min");
        for o in &self.oscillators {
            s.push_str(&format!(
                "{:>10}  {:>10}  {:>16.6}  {:>16.6}\n",
                o.oscillator, method, o.t_linger, self.t_linger_min
            ));
        }
        s
    }
}

/// Network synchronization window: the smallest linger time.
pub fn sync_window(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::Argument("sync window of an empty set of linger times".into()));
    }
    Ok(times.iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_is_minimum() {
        assert_eq!(sync_window(&[3.0]).unwrap(), 3.0);
        assert_eq!(sync_window(&[5.0, 2.0, 7.5]).unwrap(), 2.0);
        assert!(matches!(sync_window(&[]), Err(Error::Argument(_))));
    }
}

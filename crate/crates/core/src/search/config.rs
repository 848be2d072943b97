use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macrolib::Metric;

/// Search hyperparameters. JSON keys follow the conventional symbol names
/// (`N_mc`, `c_exp`, `k`, `d_sim_max`, `H`, `d_max`, `T_max`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Select/expand/rollout/backpropagate cycles per decision point.
    #[serde(rename = "N_mc")]
    pub n_mc: usize,
    /// Multiplier on the whole selection score; argmax-invariant without value terms.
    pub c_exp: f64,
    /// Children created per expanded node.
    pub k: usize,
    /// Primitive-step cap for one simulated rollout.
    pub d_sim_max: usize,
    /// Macro-action length.
    #[serde(rename = "H")]
    pub horizon: usize,
    /// Tree depth cap in macro-steps; also the decision-point cap of an episode.
    pub d_max: usize,
    /// Wall-clock budget in seconds (per decision point standalone, per episode in
    /// the receding-horizon runner).
    #[serde(rename = "T_max")]
    pub t_max: f64,
    pub alpha_beta: f64,
    pub epsilon_beta: f64,
    pub alpha_psi: f64,
    /// Uniform mixing weight for the selection prior (zero: pure softmax).
    pub psi_epsilon: f64,
    /// Use `sqrt(N(v,u)) / (1 + N(v,u))` instead of the parent-total numerator.
    pub literal_eq2: bool,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_mc: 300,
            c_exp: 1.4,
            k: 10,
            d_sim_max: 300,
            horizon: 4,
            d_max: 100,
            t_max: 600.0,
            alpha_beta: 10.0,
            epsilon_beta: 0.1,
            alpha_psi: 5.0,
            psi_epsilon: 0.0,
            literal_eq2: false,
            metric: Metric::Normalized,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("H must be at least 1".into());
        }
        if self.d_max == 0 {
            return bad("d_max must be at least 1".into());
        }
        if !(self.c_exp.is_finite() && self.c_exp > 0.0) {
            return bad(format!("c_exp must be positive, got {}", self.c_exp));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return bad(format!("T_max must be a non-negative number of seconds, got {}", self.t_max));
        }
        for (name, v) in [("alpha_beta", self.alpha_beta), ("alpha_psi", self.alpha_psi)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("epsilon_beta", self.epsilon_beta), ("psi_epsilon", self.psi_epsilon)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn t_max_duration(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.t_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = SearchConfig::default();
        assert_eq!(
            (c.n_mc, c.k, c.d_sim_max, c.horizon, c.d_max),
            (300, 10, 300, 4, 100)
        );
        assert_eq!((c.c_exp, c.t_max), (1.4, 600.0));
        assert_eq!((c.alpha_beta, c.epsilon_beta, c.alpha_psi), (10.0, 0.1, 5.0));
        c.validate().unwrap();
    }

    #[test]
    fn json_uses_symbol_names() {
        let json = serde_json::to_value(SearchConfig::default()).unwrap();
        for key in ["N_mc", "c_exp", "k", "d_sim_max", "H", "d_max", "T_max", "alpha_beta", "epsilon_beta", "alpha_psi"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let cfg = SearchConfig::from_json(r#"{"N_mc": 50, "T_max": 10, "metric": "raw"}"#).unwrap();
        assert_eq!(cfg.n_mc, 50);
        assert_eq!(cfg.metric, Metric::Raw);
        assert_eq!(cfg.k, 10);
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(SearchConfig::from_json(r#"{"k": 0}"#).is_err());
        assert!(SearchConfig::from_json(r#"{"epsilon_beta": 1.5}"#).is_err());
        assert!(SearchConfig::from_json(r#"{"T_max": -1}"#).is_err());
        assert!(SearchConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}

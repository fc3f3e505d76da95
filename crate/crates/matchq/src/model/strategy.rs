use crate::model::PolicySpec;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic queue-joining probabilities: `sigma[i][c]` is the
/// probability that a type `i` agent joins the queue in column `c` of the
/// policy's queue set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StrategyProfile {
    sigma: Vec<Vec<f64>>,
}

impl StrategyProfile {
    /// Validate entries in `[0, 1]` and row sums within `1e-12` of one.
    pub fn new(sigma: Vec<Vec<f64>>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidInput("strategy profile has no rows".into()));
        }
        let width = sigma[0].len();
        for (i, row) in sigma.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidInput(format!(
                    "strategy row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
                return Err(Error::InvalidInput(format!(
                    "strategy entry {bad} in row {i} is outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "strategy row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { sigma })
    }

    /// Everyone joins the single queue (the only NCR profile).
    pub fn single_queue(ell: usize) -> Self {
        Self {
            sigma: vec![vec![1.0]; ell + 1],
        }
    }

    /// Truthful joining on an `ell + 1` queue set: every type joins its own
    /// queue.
    pub fn truthful(ell: usize) -> Self {
        let mut sigma = vec![vec![0.0; ell + 1]; ell + 1];
        for (i, row) in sigma.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { sigma }
    }

    /// Two-type profile on queues `{0, 1}`: flexible agents join queue 1 with
    /// probability `sigma01`, specialized agents join queue 1.
    pub fn two_type(sigma01: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - sigma01, sigma01], vec![0.0, 1.0]])
    }

    /// Check the profile's shape against a policy and type count.
    pub fn validate_for(&self, policy: &PolicySpec, ell: usize) -> Result<()> {
        if self.sigma.len() != ell + 1 {
            return Err(Error::InvalidInput(format!(
                "strategy has {} rows but there are {} agent types",
                self.sigma.len(),
                ell + 1
            )));
        }
        if self.sigma[0].len() != policy.num_queues() {
            return Err(Error::InvalidInput(format!(
                "strategy rows have {} columns but the policy offers {} queues",
                self.sigma[0].len(),
                policy.num_queues()
            )));
        }
        Ok(())
    }

    pub fn num_types(&self) -> usize {
        self.sigma.len()
    }

    pub fn num_queues(&self) -> usize {
        self.sigma[0].len()
    }

    /// Probability that a type `i` agent joins the queue in column `col`.
    pub fn get(&self, agent_type: usize, col: usize) -> f64 {
        self.sigma[agent_type][col]
    }

    pub fn row(&self, agent_type: usize) -> &[f64] {
        &self.sigma[agent_type]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.sigma
    }

    /// Replace one row (values are validated).
    pub fn set_row(&mut self, agent_type: usize, row: Vec<f64>) -> Result<()> {
        let mut rows = self.sigma.clone();
        rows[agent_type] = row;
        *self = Self::new(rows)?;
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for StrategyProfile {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<StrategyProfile> for Vec<Vec<f64>> {
    fn from(s: StrategyProfile) -> Self {
        s.sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        assert!(StrategyProfile::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(StrategyProfile::new(vec![vec![1.2, -0.2]]).is_err());
        assert!(StrategyProfile::new(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
        assert!(StrategyProfile::new(vec![vec![0.25, 0.75]]).is_ok());
    }

    #[test]
    fn truthful_is_the_identity() {
        let s = StrategyProfile::truthful(2);
        for i in 0..3 {
            for q in 0..3 {
                assert_eq!(s.get(i, q), if i == q { 1.0 } else { 0.0 });
            }
        }
    }
}

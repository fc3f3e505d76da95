use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// The three named dispatch policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Ncr,
    Acr,
    Rcr,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Ncr => "ncr",
            PolicyKind::Acr => "acr",
            PolicyKind::Rcr => "rcr",
        }
    }
}

/// A dispatch policy: an ordered set of queues and, for each job type, an
/// ordered list of queues to try.
///
/// A type `j` job walks `rho[j]` in order. Each entry is offered as one
/// dispatched set; with `pooled_fallback` the queues after the first are
/// offered as a single pooled set instead of one at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySpec {
    queues: Vec<usize>,
    rho: Vec<Vec<usize>>,
    pooled_fallback: bool,
}

impl PolicySpec {
    /// Build a custom policy, checking that every priority list draws from
    /// `queues` without repetition.
    pub fn new(queues: Vec<usize>, rho: Vec<Vec<usize>>, pooled_fallback: bool) -> Result<Self> {
        if queues.is_empty() {
            return Err(Error::InvalidInput(
                "policy needs at least one queue".into(),
            ));
        }
        let mut seen = queues.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate queue identifier".into()));
        }
        for (j, list) in rho.iter().enumerate() {
            let mut used = Vec::with_capacity(list.len());
            for &q in list {
                if !queues.contains(&q) {
                    return Err(Error::InvalidInput(format!(
                        "rho[{j}] names queue {q} which is not in the queue set"
                    )));
                }
                if used.contains(&q) {
                    return Err(Error::InvalidInput(format!(
                        "rho[{j}] lists queue {q} twice"
                    )));
                }
                used.push(q);
            }
        }
        Ok(Self {
            queues,
            rho,
            pooled_fallback,
        })
    }

    pub fn queues(&self) -> &[usize] {
        &self.queues
    }

    pub fn num_queues(&self) -> usize {
        self.queues.len()
    }

    /// Priority list for a job type, if the type is known to the policy.
    pub fn rho(&self, job_type: usize) -> Option<&[usize]> {
        self.rho.get(job_type).map(Vec::as_slice)
    }

    pub fn num_job_types(&self) -> usize {
        self.rho.len()
    }

    pub fn pooled_fallback(&self) -> bool {
        self.pooled_fallback
    }

    /// Column index of a queue in the strategy matrix.
    pub fn queue_index(&self, queue: usize) -> Option<usize> {
        self.queues.iter().position(|&q| q == queue)
    }
}

/// No capacity reservation: one queue, every job dispatched there.
/// Defined for any `ell >= 0`; the single-type market is the plain M/M/1+M.
pub fn make_ncr(ell: usize) -> PolicySpec {
    PolicySpec {
        queues: vec![0],
        rho: vec![vec![0]; ell + 1],
        pooled_fallback: false,
    }
}

/// Aggressive capacity reservation: a queue per type; type `j != 0` jobs try
/// queue `j` then queue 0, type 0 jobs only queue 0.
pub fn make_acr(ell: usize) -> PolicySpec {
    assert!(ell >= 1, "need at least one specialized type");
    let mut rho = vec![vec![0]];
    for j in 1..=ell {
        rho.push(vec![j, 0]);
    }
    PolicySpec {
        queues: (0..=ell).collect(),
        rho,
        pooled_fallback: false,
    }
}

/// Robust capacity reservation: a queue per type; type `j` jobs try queue `j`
/// first and then every remaining queue in ascending identifier order.
///
/// With `pooled` set, the queues after the first are offered as one pooled
/// set with a single patience evaluation, instead of one queue at a time.
pub fn make_rcr(ell: usize, pooled: bool) -> PolicySpec {
    assert!(ell >= 1, "need at least one specialized type");
    let queues: Vec<usize> = (0..=ell).collect();
    let rho = (0..=ell)
        .map(|j| {
            let mut list = vec![j];
            list.extend(queues.iter().copied().filter(|&q| q != j));
            list
        })
        .collect();
    PolicySpec {
        queues,
        rho,
        pooled_fallback: pooled,
    }
}

/// Serializable selector for the named policies; builds the concrete
/// [`PolicySpec`] once `ell` is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySelector {
    pub kind: PolicyKind,
    #[serde(default)]
    pub pooled: bool,
}

impl PolicySelector {
    pub fn build(&self, ell: usize) -> Result<PolicySpec> {
        match self.kind {
            PolicyKind::Ncr | PolicyKind::Acr if self.pooled => Err(Error::InvalidInput(
                "pooled fallback only applies to the rcr policy".into(),
            )),
            PolicyKind::Ncr => Ok(make_ncr(ell)),
            PolicyKind::Acr => Ok(make_acr(ell)),
            PolicyKind::Rcr => Ok(make_rcr(ell, self.pooled)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ncr_is_a_single_queue() {
        let p = make_ncr(1);
        assert_eq!(p.queues(), &[0]);
        assert_eq!(p.rho(0).unwrap(), &[0]);
        assert_eq!(p.rho(1).unwrap(), &[0]);
        assert_eq!(make_ncr(2).rho(2).unwrap(), &[0]);
        assert_eq!(make_ncr(5).num_queues(), 1);
    }

    #[test]
    fn acr_prioritizes_own_queue_then_flexible() {
        let p = make_acr(1);
        assert_eq!(p.rho(0).unwrap(), &[0]);
        assert_eq!(p.rho(1).unwrap(), &[1, 0]);
        assert_eq!(make_acr(2).rho(2).unwrap(), &[2, 0]);
    }

    #[test]
    fn rcr_orders_remaining_queues_ascending() {
        let p = make_rcr(1, false);
        assert_eq!(p.rho(0).unwrap(), &[0, 1]);
        assert_eq!(p.rho(1).unwrap(), &[1, 0]);
        assert_eq!(make_rcr(2, false).rho(1).unwrap(), &[1, 0, 2]);
        assert!(make_rcr(1, true).pooled_fallback());
    }

    #[test]
    fn custom_policy_validation() {
        assert!(PolicySpec::new(vec![0, 1], vec![vec![0], vec![1, 0]], false).is_ok());
        // queue outside the set
        assert!(PolicySpec::new(vec![0], vec![vec![1]], false).is_err());
        // repeated queue within one list
        assert!(PolicySpec::new(vec![0, 1], vec![vec![0, 0]], false).is_err());
        // duplicate queue identifiers
        assert!(PolicySpec::new(vec![0, 0], vec![vec![0]], false).is_err());
    }
}

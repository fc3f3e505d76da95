use crate::model::MarketParams;
use crate::{Error, Result};

/// Which full-information policy to tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullInfoKind {
    Acr,
    Ncr,
}

/// A full-information assignment policy on the truncated state space: for
/// every type-count vector `A` (each entry `<= bound`) and job type `j`, a
/// probability vector over the `ell + 2` actions "assign to a type `i`
/// agent" (`i = 0..=ell`) or "reject the job" (last slot).
#[derive(Debug, Clone)]
pub struct FullInfoTable {
    ell: usize,
    bound: u64,
    probs: Vec<f64>,
}

impl FullInfoTable {
    /// Build a table from an action rule. Used by the named policies below
    /// and by enumeration over deterministic policies.
    pub fn from_rule(
        ell: usize,
        bound: u64,
        mut rule: impl FnMut(&[u64], usize, &mut [f64]),
    ) -> Self {
        let ntypes = ell + 1;
        let actions = ntypes + 1;
        let nstates = (bound as usize + 1).pow(ntypes as u32);
        let mut probs = vec![0.0; nstates * ntypes * actions];
        let mut a = vec![0u64; ntypes];
        for s in 0..nstates {
            decode(s, bound, &mut a);
            for j in 0..ntypes {
                let base = (s * ntypes + j) * actions;
                rule(&a, j, &mut probs[base..base + actions]);
            }
        }
        Self { ell, bound, probs }
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    fn index(&self, a: &[u64], job_type: usize) -> usize {
        let ntypes = self.ell + 1;
        debug_assert_eq!(a.len(), ntypes);
        let mut s = 0usize;
        for &ai in a.iter().rev() {
            debug_assert!(ai <= self.bound);
            s = s * (self.bound as usize + 1) + ai as usize;
        }
        (s * ntypes + job_type) * (ntypes + 1)
    }

    /// Action probabilities for `(A, j)`: entries `0..=ell` assign to that
    /// agent type, the last entry rejects the job.
    pub fn nu(&self, a: &[u64], job_type: usize) -> &[f64] {
        let base = self.index(a, job_type);
        &self.probs[base..base + self.ell + 2]
    }

    /// All type-count vectors of the truncated space, lexicographically.
    pub fn states(&self) -> impl Iterator<Item = Vec<u64>> + '_ {
        let ntypes = self.ell + 1;
        let nstates = (self.bound as usize + 1).pow(ntypes as u32);
        (0..nstates).map(move |s| {
            let mut a = vec![0u64; ntypes];
            decode(s, self.bound, &mut a);
            a
        })
    }

    /// Check the four admissibility constraints on every row: a probability
    /// vector over all actions including rejection, no assignment to a type
    /// with no agents, and assignment only to compatible types.
    pub fn validate(&self) -> Result<()> {
        let ntypes = self.ell + 1;
        for a in self.states() {
            for j in 0..ntypes {
                let nu = self.nu(&a, j);
                let sum: f64 = nu.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || nu.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidInput(format!(
                        "nu({a:?}, {j}) is not a probability vector"
                    )));
                }
                for i in 0..ntypes {
                    if a[i] == 0 && nu[i] != 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "nu({a:?}, {j}) assigns to empty type {i}"
                        )));
                    }
                    if i != 0 && i != j && nu[i] != 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "nu({a:?}, {j}) assigns to incompatible type {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn decode(mut s: usize, bound: u64, a: &mut [u64]) {
    let radix = bound as usize + 1;
    for ai in a.iter_mut() {
        *ai = (s % radix) as u64;
        s /= radix;
    }
}

/// Tabulate the full-information ACR or NCR policy on states with per-type
/// counts up to `bound`.
pub fn full_info_policy_table(
    params: &MarketParams,
    kind: FullInfoKind,
    bound: u64,
) -> Result<FullInfoTable> {
    if bound == 0 {
        return Err(Error::InvalidInput(
            "full-information truncation bound must be at least 1".into(),
        ));
    }
    let ell = params.ell();
    let reject = ell + 1;
    let table = FullInfoTable::from_rule(ell, bound, |a, j, nu| match kind {
        FullInfoKind::Acr => {
            if a[j] > 0 {
                nu[j] = 1.0;
            } else if a[0] > 0 {
                nu[0] = 1.0;
            } else {
                nu[reject] = 1.0;
            }
        }
        FullInfoKind::Ncr => {
            if j == 0 {
                if a[0] > 0 {
                    nu[0] = 1.0;
                } else {
                    nu[reject] = 1.0;
                }
            } else {
                let pool = a[0] + a[j];
                if pool > 0 {
                    nu[0] = a[0] as f64 / pool as f64;
                    nu[j] = a[j] as f64 / pool as f64;
                } else {
                    nu[reject] = 1.0;
                }
            }
        }
    });
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MarketParams {
        MarketParams::new(vec![40.0, 60.0], vec![30.0, 40.0], 4.0).unwrap()
    }

    #[test]
    fn acr_assigns_specialized_first() {
        let t = full_info_policy_table(&params(), FullInfoKind::Acr, 3).unwrap();
        assert_eq!(t.nu(&[1, 1], 1), &[0.0, 1.0, 0.0]);
        assert_eq!(t.nu(&[1, 0], 1), &[1.0, 0.0, 0.0]);
        assert_eq!(t.nu(&[0, 0], 1), &[0.0, 0.0, 1.0]);
        assert_eq!(t.nu(&[0, 2], 0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn ncr_splits_proportionally() {
        let t = full_info_policy_table(&params(), FullInfoKind::Ncr, 3).unwrap();
        let nu = t.nu(&[2, 3], 1);
        assert!((nu[0] - 0.4).abs() < 1e-15);
        assert!((nu[1] - 0.6).abs() < 1e-15);
        assert_eq!(nu[2], 0.0);
        // type 0 jobs never pool with specialized agents
        assert_eq!(t.nu(&[2, 3], 0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn tables_are_admissible() {
        for kind in [FullInfoKind::Acr, FullInfoKind::Ncr] {
            full_info_policy_table(&params(), kind, 3)
                .unwrap()
                .validate()
                .unwrap();
        }
        let p3 = MarketParams::new(vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0], 1.0).unwrap();
        for kind in [FullInfoKind::Acr, FullInfoKind::Ncr] {
            full_info_policy_table(&p3, kind, 2)
                .unwrap()
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn zero_bound_is_rejected() {
        assert!(full_info_policy_table(&params(), FullInfoKind::Acr, 0).is_err());
    }
}

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Job patience for agent rejections.
///
/// `success_prob(a, b)` is the probability that a job dispatched to a set of
/// `b` agents, of which `a` are compatible, ends up matched. Incompatible
/// agents always reject; the job tolerates only so many rejections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatienceModel {
    /// Rejections take negligible time and never exhaust the job: the job is
    /// matched iff a compatible agent exists in the dispatched set, so
    /// `success_prob(a, b) = 1{a > 0}`.
    Perfect,
    /// The job tolerates `k` rejections, i.e. up to `k + 1` dispatch attempts
    /// drawn uniformly without replacement from the set.
    MaxRejections { k: u32 },
}

impl PatienceModel {
    /// Match probability for `compatible` compatible agents among `total`.
    pub fn success_prob(&self, compatible: u64, total: u64) -> f64 {
        debug_assert!(compatible <= total);
        if compatible == 0 {
            return 0.0;
        }
        match *self {
            PatienceModel::Perfect => 1.0,
            PatienceModel::MaxRejections { k } => {
                let draws = (k as u64 + 1).min(total);
                let incompatible = total - compatible;
                if incompatible < draws {
                    return 1.0;
                }
                // P(all of the first `draws` picks are incompatible)
                let mut miss = 1.0;
                for t in 0..draws {
                    miss *= (incompatible - t) as f64 / (total - t) as f64;
                }
                1.0 - miss
            }
        }
    }
}

impl Default for PatienceModel {
    fn default() -> Self {
        PatienceModel::Perfect
    }
}

/// Market primitives: arrival and abandonment rates for `ell + 1` agent and
/// job types, plus the job patience model.
///
/// Type 0 agents are flexible (serve every job type); type `i >= 1` agents
/// serve only type `i` jobs. Type 0 jobs can only be served by flexible
/// agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct MarketParams {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    theta: f64,
    patience: PatienceModel,
}

impl MarketParams {
    /// Build and validate market parameters with perfect patience.
    ///
    /// `lambda[i]` is the Poisson arrival rate of type `i` agents and `mu[j]`
    /// of type `j` jobs; both must have length `ell + 1 >= 2` with every rate
    /// strictly positive and finite, as must the abandonment rate `theta`.
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>, theta: f64) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidInput("need at least one agent type".into()));
        }
        if lambda.len() != mu.len() {
            return Err(Error::InvalidInput(format!(
                "lambda has {} entries but mu has {}",
                lambda.len(),
                mu.len()
            )));
        }
        for (name, rates) in [("lambda", &lambda), ("mu", &mu)] {
            if let Some(bad) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "{name} rates must be strictly positive and finite, got {bad}"
                )));
            }
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "theta must be strictly positive and finite, got {theta}"
            )));
        }
        Ok(Self {
            lambda,
            mu,
            theta,
            patience: PatienceModel::Perfect,
        })
    }

    pub fn with_patience(mut self, patience: PatienceModel) -> Self {
        self.patience = patience;
        self
    }

    /// Number of specialized agent types.
    pub fn ell(&self) -> usize {
        self.lambda.len() - 1
    }

    /// Number of agent (and job) types, `ell + 1`.
    pub fn num_types(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self, agent_type: usize) -> f64 {
        self.lambda[agent_type]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self, job_type: usize) -> f64 {
        self.mu[job_type]
    }

    pub fn mus(&self) -> &[f64] {
        &self.mu
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn patience(&self) -> &PatienceModel {
        &self.patience
    }

    pub fn total_job_rate(&self) -> f64 {
        self.mu.iter().sum()
    }
}

/// Wire form: carries `ell` explicitly so configs are self-describing, and
/// funnels deserialization through the validating constructor.
#[derive(Serialize, Deserialize)]
struct RawParams {
    ell: usize,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    theta: f64,
    #[serde(default)]
    patience: PatienceModel,
}

impl TryFrom<RawParams> for MarketParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        if raw.lambda.len() != raw.ell + 1 {
            return Err(Error::InvalidInput(format!(
                "ell = {} requires {} rates per side, got {} lambda entries",
                raw.ell,
                raw.ell + 1,
                raw.lambda.len()
            )));
        }
        Ok(MarketParams::new(raw.lambda, raw.mu, raw.theta)?.with_patience(raw.patience))
    }
}

impl From<MarketParams> for RawParams {
    fn from(p: MarketParams) -> Self {
        RawParams {
            ell: p.ell(),
            lambda: p.lambda,
            mu: p.mu,
            theta: p.theta,
            patience: p.patience,
        }
    }
}

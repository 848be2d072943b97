//! The prior-policy plug-in boundary and the distributions derived from it:
//! the candidate sampling distribution over the library, node-local candidate
//! sets, and the selection prior over those candidates.

mod external;

pub use external::{serve_prior, ExternalPrior, PriorRequest, PriorResponse, ProcessPrior};

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::macrolib::{MacroAction, MacroLibrary, Metric};
use crate::scalar::Scalar;
use crate::world::{Observation, TaskSpec};

/// Anything that proposes a macro-action for an observation and an instruction.
///
/// Implementations must be reproducible given the supplied rng stream. Priors
/// that cannot serve concurrent callers report `exclusive() == true` and
/// serialize calls internally.
pub trait PriorPolicy<T: Scalar>: Send + Sync {
    fn sample_macro(
        &self,
        obs: &Observation<T>,
        task: &TaskSpec,
        rng: &mut dyn RngCore,
    ) -> Result<MacroAction<T>>;

    fn exclusive(&self) -> bool {
        false
    }
}

impl<T: Scalar, P: PriorPolicy<T> + ?Sized> PriorPolicy<T> for &P {
    fn sample_macro(
        &self,
        obs: &Observation<T>,
        task: &TaskSpec,
        rng: &mut dyn RngCore,
    ) -> Result<MacroAction<T>> {
        (**self).sample_macro(obs, task, rng)
    }

    fn exclusive(&self) -> bool {
        (**self).exclusive()
    }
}

/// Uninformed prior: a uniformly random library prototype, ignoring the observation.
#[derive(Debug, Clone)]
pub struct UniformLibraryPrior<T> {
    library: MacroLibrary<T>,
}

impl<T: Scalar> UniformLibraryPrior<T> {
    pub fn new(library: MacroLibrary<T>) -> Self {
        Self { library }
    }
}

impl<T: Scalar> PriorPolicy<T> for UniformLibraryPrior<T> {
    fn sample_macro(
        &self,
        _obs: &Observation<T>,
        _task: &TaskSpec,
        rng: &mut dyn RngCore,
    ) -> Result<MacroAction<T>> {
        let i = rng.gen_range(0..self.library.len());
        Ok(self.library.prototype(i).clone())
    }
}

/// Discrete distribution over indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<T> {
    probs: Vec<T>,
}

impl<T: Scalar> ProbabilityVector<T> {
    /// Wraps `probs` after checking that they form a distribution.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        let v = Self { probs };
        v.validate(None).map_err(Error::Config)?;
        Ok(v)
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> T {
        self.probs[i]
    }

    /// Checks non-negativity, unit sum, and (when given) the floor `epsilon / len`.
    pub fn validate(&self, epsilon_floor: Option<T>) -> std::result::Result<(), String> {
        let tol = T::prob_tolerance();
        if self.probs.is_empty() {
            return Err("empty probability vector".into());
        }
        if let Some(p) = self.probs.iter().find(|p| !(**p >= T::zero())) {
            return Err(format!("negative or NaN probability {p}"));
        }
        let sum: T = self.probs.iter().copied().sum();
        let sum_tol = if tol > T::lit(1e-9) { tol } else { T::lit(1e-9) };
        if (sum - T::one()).abs() > sum_tol {
            return Err(format!("probabilities sum to {sum}"));
        }
        if let Some(eps) = epsilon_floor.filter(|e| *e > T::zero()) {
            let floor = eps / T::from_usize(self.probs.len()).unwrap() - tol;
            if let Some(p) = self.probs.iter().find(|p| **p < floor) {
                return Err(format!("probability {p} below epsilon floor {floor}"));
            }
        }
        Ok(())
    }

    /// Largest-probability index; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Max-shifted softmax of `-alpha * d`, mixed with a uniform floor.
fn softmax_neg_scaled<T: Scalar>(dists: &[T], alpha: T, epsilon: T) -> ProbabilityVector<T> {
    let logits: Vec<T> = dists.iter().map(|&d| -alpha * d).collect();
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = weights.iter().copied().sum();
    let uniform = epsilon / T::from_usize(dists.len()).unwrap();
    let probs = weights
        .into_iter()
        .map(|w| (T::one() - epsilon) * w / total + uniform)
        .collect();
    ProbabilityVector { probs }
}

fn check_params<T: Scalar>(alpha: T, epsilon: T) -> Result<()> {
    if !(alpha >= T::zero()) || !alpha.is_finite() {
        return Err(Error::Config(format!("temperature must be finite and >= 0, got {alpha}")));
    }
    if !(epsilon >= T::zero() && epsilon <= T::one()) {
        return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(())
}

/// Sampling distribution over library prototypes centred on `u_vla`, measured
/// in normalized coordinates.
pub fn beta_distribution<T: Scalar>(
    lib: &MacroLibrary<T>,
    u_vla: &MacroAction<T>,
    alpha: T,
    epsilon: T,
) -> Result<ProbabilityVector<T>> {
    beta_distribution_with(lib, u_vla, alpha, epsilon, Metric::Normalized)
}

pub fn beta_distribution_with<T: Scalar>(
    lib: &MacroLibrary<T>,
    u_vla: &MacroAction<T>,
    alpha: T,
    epsilon: T,
    metric: Metric,
) -> Result<ProbabilityVector<T>> {
    check_params(alpha, epsilon)?;
    let d = lib.distances_to(u_vla, metric)?;
    Ok(softmax_neg_scaled(&d, alpha, epsilon))
}

/// Draws beyond `k` after which duplicate rejection gives up.
pub const MAX_REJECTED_DRAWS: usize = 1000;

/// The `k` library indices a tree node may branch on, with the anchor that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<T> {
    indices: Vec<usize>,
    anchor: MacroAction<T>,
}

impl<T: Scalar> CandidateSet<T> {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn anchor(&self) -> &MacroAction<T> {
        &self.anchor
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn draw_categorical<T: Scalar>(probs: &[T], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let total: f64 = probs.iter().map(|p| p.as_f64()).sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if target < acc {
            return i;
        }
    }
    // Rounding left the target past the last bucket; return the last positive entry.
    probs
        .iter()
        .rposition(|p| *p > T::zero())
        .unwrap_or(probs.len() - 1)
}

/// Samples `k` distinct indices by repeated categorical draws, discarding
/// repeats. After [`MAX_REJECTED_DRAWS`] rejected draws the remainder is
/// filled with the most probable unused indices.
pub fn sample_candidates<T: Scalar>(
    dist: &ProbabilityVector<T>,
    k: usize,
    anchor: MacroAction<T>,
    rng: &mut dyn RngCore,
) -> Result<CandidateSet<T>> {
    let m = dist.len();
    if k == 0 || k > m {
        return Err(Error::Config(format!(
            "cannot draw {k} distinct candidates from {m} prototypes"
        )));
    }
    let mut taken = vec![false; m];
    let mut indices = Vec::with_capacity(k);
    let mut rejected = 0;
    while indices.len() < k && rejected < MAX_REJECTED_DRAWS {
        let i = draw_categorical(dist.probs(), rng);
        if taken[i] {
            rejected += 1;
        } else {
            taken[i] = true;
            indices.push(i);
        }
    }
    if indices.len() < k {
        let mut rest: Vec<usize> = (0..m).filter(|&i| !taken[i]).collect();
        rest.sort_by(|&a, &b| {
            dist.get(b)
                .partial_cmp(&dist.get(a))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        indices.extend(rest.into_iter().take(k - indices.len()));
    }
    Ok(CandidateSet { indices, anchor })
}

/// Selection prior over a node's candidates: softmax of `-alpha_psi * rho`
/// towards the node's anchor, optionally mixed with an `epsilon` uniform term.
pub fn psi_prior<T: Scalar>(
    candidates: &CandidateSet<T>,
    lib: &MacroLibrary<T>,
    u_vla: &MacroAction<T>,
    alpha_psi: T,
) -> Result<ProbabilityVector<T>> {
    psi_prior_with(candidates, lib, u_vla, alpha_psi, T::zero(), Metric::Normalized)
}

pub fn psi_prior_with<T: Scalar>(
    candidates: &CandidateSet<T>,
    lib: &MacroLibrary<T>,
    u_vla: &MacroAction<T>,
    alpha_psi: T,
    epsilon: T,
    metric: Metric,
) -> Result<ProbabilityVector<T>> {
    check_params(alpha_psi, epsilon)?;
    if candidates.is_empty() {
        return Err(Error::Contract("selection prior needs at least one candidate".into()));
    }
    lib.check_compatible(u_vla)?;
    let d = candidates
        .indices()
        .iter()
        .map(|&i| lib.distance_to(i, u_vla, metric))
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax_neg_scaled(&d, alpha_psi, epsilon))
}

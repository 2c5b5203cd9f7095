//! L2-regularized squared-hinge linear SVM with per-group costs.
//!
//! Minimizes
//!
//! ```text
//! ½·wᵀw + Σ_g C_g · Σ_{i∈g} max(0, 1 − y_i·wᵀx̄_i)²
//! ```
//!
//! over the positive, within-video negative and background groups. The objective
//! is convex and continuously differentiable, so a deterministic full-batch
//! gradient descent with backtracking line search reaches the minimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Positive,
    Negative,
    Background,
}

impl Group {
    pub fn label<T: Scalar>(self) -> T {
        match self {
            Group::Positive => T::one(),
            Group::Negative | Group::Background => -T::one(),
        }
    }
}

/// `[x/‖x‖; 1]`.
pub fn augment<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    let n = norm(x);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::validation("cannot normalize a zero or non-finite feature vector"));
    }
    let mut out: Vec<T> = x.iter().map(|&v| v / n).collect();
    out.push(T::one());
    Ok(out)
}

/// Training data: features (already augmented), labels and group tags.
#[derive(Clone, Debug)]
pub struct SvmProblem<T> {
    features: Vec<Vec<T>>,
    labels: Vec<T>,
    groups: Vec<Group>,
}

impl<T: Scalar> SvmProblem<T> {
    /// Normalizes and augments raw feature vectors.
    pub fn from_raw<'a>(samples: impl IntoIterator<Item = (&'a [T], Group)>) -> Result<Self> {
        let (features, groups): (Vec<_>, Vec<_>) = samples
            .into_iter()
            .map(|(x, g)| augment(x).map(|f| (f, g)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Self::from_features(features, groups)
    }

    /// Uses the given feature vectors as they are.
    pub fn from_features(features: Vec<Vec<T>>, groups: Vec<Group>) -> Result<Self> {
        if features.len() != groups.len() {
            return Err(Error::validation("features and groups have different lengths"));
        }
        if let Some(first) = features.first() {
            if first.is_empty() || features.iter().any(|f| f.len() != first.len()) {
                return Err(Error::validation("SVM features differ in dimension"));
            }
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("SVM features are not finite"));
        }
        let labels = groups.iter().map(|g| g.label()).collect();
        Ok(SvmProblem {
            features,
            labels,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn counts(&self) -> GroupCounts {
        let mut c = GroupCounts::default();
        for g in &self.groups {
            match g {
                Group::Positive => c.positive += 1,
                Group::Negative => c.negative += 1,
                Group::Background => c.background += 1,
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupCounts {
    pub positive: usize,
    pub negative: usize,
    pub background: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupCosts<T> {
    pub positive: T,
    pub negative: T,
    pub background: T,
}

impl<T: Scalar> GroupCosts<T> {
    pub fn of(&self, g: Group) -> T {
        match g {
            Group::Positive => self.positive,
            Group::Negative => self.negative,
            Group::Background => self.background,
        }
    }
}

/// `C_g = C / max(1, n_g)` for non-empty groups, 0 for empty ones.
pub fn group_costs<T: Scalar>(counts: GroupCounts, c: T) -> GroupCosts<T> {
    let cost = |n: usize| {
        if n == 0 {
            T::zero()
        } else {
            c / T::of(n as f64)
        }
    };
    GroupCosts {
        positive: cost(counts.positive),
        negative: cost(counts.negative),
        background: cost(counts.background),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    /// Base cost `C`, split across groups by [`group_costs`].
    #[serde(default = "default_cost")]
    pub cost: f64,
    /// Stop once `‖∇f(w)‖ ≤ tolerance·(1 + ‖w‖)`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_cost() -> f64 {
    10.0
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_max_iterations() -> usize {
    200_000
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            cost: default_cost(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost > 0.0) || !self.cost.is_finite() {
            return Err(Error::Config(format!("SVM cost must be > 0, got {}", self.cost)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("SVM tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel<T> {
    pub weights: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

impl<T: Scalar> SvmModel<T> {
    /// Decision value `wᵀx` for an augmented feature vector.
    pub fn decision(&self, x: &[T]) -> T {
        dot(&self.weights, x)
    }
}

/// Objective value at `w`.
pub fn svm_objective<T: Scalar>(w: &[T], problem: &SvmProblem<T>, costs: &GroupCosts<T>) -> T {
    let reg = T::of(0.5) * dot(w, w);
    let loss: T = problem
        .features
        .iter()
        .zip(&problem.labels)
        .zip(&problem.groups)
        .map(|((x, &y), &g)| {
            let slack = (T::one() - y * dot(w, x)).max(T::zero());
            costs.of(g) * slack * slack
        })
        .sum();
    reg + loss
}

/// Gradient `w − 2·Σ C_i·y_i·max(0, 1 − y_i·wᵀx_i)·x_i`.
pub fn svm_gradient<T: Scalar>(w: &[T], problem: &SvmProblem<T>, costs: &GroupCosts<T>) -> Vec<T> {
    let mut grad = w.to_vec();
    let two = T::of(2.0);
    for ((x, &y), &g) in problem.features.iter().zip(&problem.labels).zip(&problem.groups) {
        let slack = T::one() - y * dot(w, x);
        if slack <= T::zero() {
            continue;
        }
        let coef = two * costs.of(g) * y * slack;
        for (gk, &xk) in grad.iter_mut().zip(x) {
            *gk -= coef * xk;
        }
    }
    grad
}

/// Trains from `w = 0`.
pub fn train<T: Scalar>(problem: &SvmProblem<T>, cfg: &SvmConfig) -> Result<SvmModel<T>> {
    cfg.validate()?;
    let counts = problem.counts();
    if counts.positive == 0 {
        return Err(Error::validation("SVM training needs at least one positive sample"));
    }
    let costs = group_costs(counts, T::of(cfg.cost));
    let tol = T::of(cfg.tolerance);
    let half = T::of(0.5);
    let armijo = T::of(0.5);

    let mut w = vec![T::zero(); problem.dim()];
    let mut f = svm_objective(&w, problem, &costs);
    let mut step = T::one();
    let mut iterations = 0;
    let mut trial = vec![T::zero(); w.len()];
    loop {
        let grad = svm_gradient(&w, problem, &costs);
        let gnorm2 = dot(&grad, &grad);
        if gnorm2.sqrt() <= tol * (T::one() + norm(&w)) {
            return Ok(SvmModel {
                weights: w,
                objective: f,
                iterations,
            });
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::Convergence {
                iterations,
                gap: (half * gnorm2).to_f64_lossy(),
            });
        }
        iterations += 1;

        // grow the step after each success, halve until sufficient decrease
        step = step * T::of(2.0);
        loop {
            for ((t, &wk), &gk) in trial.iter_mut().zip(&w).zip(&grad) {
                *t = wk - step * gk;
            }
            let ft = svm_objective(&trial, problem, &costs);
            if ft <= f - armijo * step * gnorm2 {
                std::mem::swap(&mut w, &mut trial);
                f = ft;
                break;
            }
            step = step * half;
            if step < T::min_positive_value() {
                return Err(Error::Numeric("SVM line search collapsed".into()));
            }
        }
    }
}

//! Convex objectives, their feasible sets and stochastic first-order oracles.
//!
//! Two objective families are provided:
//!
//! * `Quadratic`: the least-squares objective `½‖Ax − b‖²`, a smooth
//!   benchmark whose convergence curves are easy to read.
//! * `HardAbs`: the separable absolute-value function
//!   `f_v(x) = (2Bδ/√d) Σ |x(i) − v(i)·D/(2√d)|` on the box
//!   `‖x‖∞ ≤ D/(2√d)`, with sign vector `v ∈ {−1, +1}^d`. Its subgradient is
//!   the constant `−2Bδv/√d` everywhere on the box, and its minimum value 0
//!   is attained at the corner `vD/(2√d)`.
//!
//! Every oracle satisfies `E[ĝ | x] ∈ ∂f(x)` and `E[‖ĝ‖² | x] ≤ B²`
//! (the Gaussian hard oracle has second moment `B²(1 + 4δ²)`, see
//! [`ConvexProblem::second_moment_bound`]).

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::SimRng;

/// Relative slack used by the membership test to absorb rounding in
/// averaged iterates.
const MEMBERSHIP_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point lies outside the feasible set")]
    OutsideDomain,
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
}

fn param(name: &'static str, reason: impl Into<String>) -> ProblemError {
    ProblemError::Parameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// Euclidean ball of radius `D/2`.
    L2Ball,
    /// Box with per-coordinate half-width `D/(2√d)`.
    LinfBox,
}

/// A feasible set of ℓ2 diameter `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    center: Vec<f64>,
    diameter: f64,
}

impl Domain {
    pub fn new(kind: DomainKind, center: Vec<f64>, diameter: f64) -> Result<Self, ProblemError> {
        if center.is_empty() {
            return Err(param("dimension", "must be positive"));
        }
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(param(
                "diameter",
                format!("must be positive, got {diameter}"),
            ));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(param("center", "must be finite"));
        }
        Ok(Self {
            kind,
            center,
            diameter,
        })
    }

    pub fn centered(kind: DomainKind, dim: usize, diameter: f64) -> Result<Self, ProblemError> {
        Self::new(kind, vec![0.0; dim], diameter)
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Ball radius, or the box half-width per coordinate.
    pub fn radius(&self) -> f64 {
        match self.kind {
            DomainKind::L2Ball => self.diameter / 2.0,
            DomainKind::LinfBox => self.diameter / (2.0 * (self.dim() as f64).sqrt()),
        }
    }

    /// Largest ℓ2 norm of a point in the set.
    pub fn max_norm(&self) -> f64 {
        norm(&self.center) + self.diameter / 2.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let r = self.radius();
        let slack = MEMBERSHIP_SLACK * (1.0 + r);
        match self.kind {
            DomainKind::L2Ball => {
                let d2: f64 = x
                    .iter()
                    .zip(&self.center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                d2.sqrt() <= r + slack
            }
            DomainKind::LinfBox => x
                .iter()
                .zip(&self.center)
                .all(|(a, c)| (a - c).abs() <= r + slack),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        let r = self.radius();
        match self.kind {
            DomainKind::L2Ball => {
                let d2: f64 = x
                    .iter()
                    .zip(&self.center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                let dist = d2.sqrt();
                if dist > r {
                    let s = r / dist;
                    for (a, c) in x.iter_mut().zip(&self.center) {
                        *a = c + (*a - c) * s;
                    }
                }
            }
            DomainKind::LinfBox => {
                for (a, c) in x.iter_mut().zip(&self.center) {
                    *a = a.clamp(c - r, c + r);
                }
            }
        }
    }
}

/// Projection as a free function.
pub fn project(x: &[f64], domain: &Domain) -> Vec<f64> {
    domain.project(x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `½‖Ax − b‖²` with `A` stored row-major (`rows × d`).
    Quadratic { a: Vec<f64>, b: Vec<f64> },
    /// The absolute-value hard instance with signs `v` and parameter `δ`.
    HardAbs { v: Vec<f64>, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    /// True (sub)gradient plus `N(0, τ² I)` noise, τ fixed at construction.
    ExactPlusGaussian { tau2: f64 },
    /// Coordinates independently `∓B/√d` with probabilities `(1 ± 2δv(i))/2`.
    BernoulliHard,
    /// `−2Bδv/√d + G`, `G ~ N(0, (B²/d) I)`.
    GaussianHard,
}

/// An objective over a domain, together with its oracle and constants.
#[derive(Debug, Clone)]
pub struct ConvexProblem {
    domain: Domain,
    objective: Objective,
    oracle: OracleKind,
    grad_bound: f64,
    optimum: f64,
}

impl ConvexProblem {
    /// The absolute-value hard instance on the box domain.
    pub fn hard_abs(
        v: Vec<f64>,
        delta: f64,
        grad_bound: f64,
        diameter: f64,
        oracle: HardOracle,
    ) -> Result<Self, ProblemError> {
        let d = v.len();
        let domain = Domain::centered(DomainKind::LinfBox, d, diameter)?;
        Self::hard_abs_on(domain, v, delta, grad_bound, oracle)
    }

    /// The hard instance on an explicit domain.
    ///
    /// The Bernoulli and Gaussian oracles return the constant mean
    /// `−2Bδv/√d`, which is a subgradient only on the centered box, so they
    /// are rejected on any other set.
    pub fn hard_abs_on(
        domain: Domain,
        v: Vec<f64>,
        delta: f64,
        grad_bound: f64,
        oracle: HardOracle,
    ) -> Result<Self, ProblemError> {
        let d = v.len();
        if d == 0 {
            return Err(param("dimension", "must be positive"));
        }
        if domain.dim() != d {
            return Err(ProblemError::Dimension {
                expected: domain.dim(),
                got: d,
            });
        }
        if v.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(param("v", "entries must be ±1"));
        }
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(param("delta", format!("must lie in (0, 1/2], got {delta}")));
        }
        if !(grad_bound > 0.0 && grad_bound.is_finite()) {
            return Err(param("grad_bound", "must be positive"));
        }
        let oracle = match oracle {
            HardOracle::Bernoulli | HardOracle::Gaussian => {
                let centered = domain.center().iter().all(|&c| c == 0.0);
                if domain.kind() != DomainKind::LinfBox || !centered {
                    return Err(param(
                        "domain",
                        "the hard oracles require the centered box domain",
                    ));
                }
                if oracle == HardOracle::Bernoulli {
                    OracleKind::BernoulliHard
                } else {
                    OracleKind::GaussianHard
                }
            }
            HardOracle::ExactPlusGaussian => {
                // |∂f| per coordinate is at most 2Bδ/√d, so G_max = 2Bδ.
                let g_max = 2.0 * grad_bound * delta;
                OracleKind::ExactPlusGaussian {
                    tau2: (grad_bound * grad_bound - g_max * g_max) / d as f64,
                }
            }
        };
        Ok(Self {
            domain,
            objective: Objective::HardAbs { v, delta },
            oracle,
            grad_bound,
            optimum: 0.0,
        })
    }

    /// Least squares `½‖Ax − b‖²` over `domain` with a noisy exact oracle.
    ///
    /// `a` is row-major with `b.len()` rows. When `grad_bound` is `None` the
    /// bound is set to the largest gradient norm on the domain, which makes
    /// the oracle noiseless. The optimum is found by accelerated projected
    /// gradient descent.
    pub fn quadratic(
        domain: Domain,
        a: Vec<f64>,
        b: Vec<f64>,
        grad_bound: Option<f64>,
    ) -> Result<Self, ProblemError> {
        let d = domain.dim();
        let rows = b.len();
        if rows == 0 || a.len() != rows * d {
            return Err(param(
                "matrix",
                format!("expected {rows}×{d} entries, got {}", a.len()),
            ));
        }
        if a.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(param("matrix", "entries must be finite"));
        }
        let objective = Objective::Quadratic { a, b };
        let lipschitz = gram_spectral_norm(&objective, d);
        let atb = {
            let Objective::Quadratic { a, b } = &objective else {
                unreachable!()
            };
            let mut v = vec![0.0; d];
            for (row, bi) in a.chunks_exact(d).zip(b) {
                for (vj, aij) in v.iter_mut().zip(row) {
                    *vj += aij * bi;
                }
            }
            norm(&v)
        };
        // ‖Aᵀ(Ax − b)‖ ≤ ‖AᵀA‖·‖x‖ + ‖Aᵀb‖ on the whole domain.
        let g_max = lipschitz * domain.max_norm() + atb;
        let grad_bound = grad_bound.unwrap_or(g_max);
        if !(grad_bound > 0.0 && grad_bound.is_finite()) {
            return Err(param("grad_bound", "must be positive"));
        }
        if grad_bound < g_max * (1.0 - 1e-12) {
            return Err(param(
                "grad_bound",
                format!("must be at least the gradient bound {g_max} on the domain"),
            ));
        }
        let tau2 = ((grad_bound * grad_bound - g_max * g_max) / d as f64).max(0.0);
        let mut problem = Self {
            domain,
            objective,
            oracle: OracleKind::ExactPlusGaussian { tau2 },
            grad_bound,
            optimum: 0.0,
        };
        problem.optimum = problem.minimize_quadratic(lipschitz);
        Ok(problem)
    }

    fn minimize_quadratic(&self, lipschitz: f64) -> f64 {
        if lipschitz == 0.0 {
            return self.value_unchecked(self.domain.center());
        }
        let step = 1.0 / lipschitz;
        let mut x = self.domain.center().to_vec();
        let mut y = x.clone();
        let mut t = 1.0_f64;
        let mut best = self.value_unchecked(&x);
        for _ in 0..200_000 {
            let g = self.subgradient(&y);
            let mut next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
            self.domain.project_in_place(&mut next);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let w = (t - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(n, o)| n + w * (n - o)).collect();
            let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            x = next;
            t = t_next;
            let fx = self.value_unchecked(&x);
            best = best.min(fx);
            if moved < 1e-15 * (1.0 + norm(&x)) {
                break;
            }
        }
        best
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn oracle(&self) -> OracleKind {
        self.oracle
    }

    /// The mean-square bound `B`.
    pub fn grad_bound(&self) -> f64 {
        self.grad_bound
    }

    pub fn diameter(&self) -> f64 {
        self.domain.diameter()
    }

    /// Minimum value of the objective over the domain.
    pub fn optimum(&self) -> f64 {
        self.optimum
    }

    /// Upper bound on `E‖ĝ‖²` for this oracle.
    pub fn second_moment_bound(&self) -> f64 {
        let b2 = self.grad_bound * self.grad_bound;
        match (&self.oracle, &self.objective) {
            (OracleKind::GaussianHard, Objective::HardAbs { delta, .. }) => {
                b2 * (1.0 + 4.0 * delta * delta)
            }
            _ => b2,
        }
    }

    /// A minimizer, when known in closed form.
    pub fn minimizer(&self) -> Option<Vec<f64>> {
        match &self.objective {
            Objective::HardAbs { v, .. } => {
                let a = self.diameter() / (2.0 * (self.dim() as f64).sqrt());
                Some(v.iter().map(|s| s * a).collect())
            }
            Objective::Quadratic { .. } => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.dim() {
            return Err(ProblemError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `f(x)`; points outside the domain are rejected, not projected.
    pub fn eval_objective(&self, x: &[f64]) -> Result<f64, ProblemError> {
        self.check_dim(x)?;
        if !self.domain.contains(x) {
            return Err(ProblemError::OutsideDomain);
        }
        Ok(self.value_unchecked(x))
    }

    fn value_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        match &self.objective {
            Objective::Quadratic { a, b } => {
                0.5 * a
                    .chunks_exact(d)
                    .zip(b)
                    .map(|(row, bi)| {
                        let r = dot(row, x) - bi;
                        r * r
                    })
                    .sum::<f64>()
            }
            Objective::HardAbs { v, delta } => {
                let scale = 2.0 * self.grad_bound * delta / (d as f64).sqrt();
                let a = self.diameter() / (2.0 * (d as f64).sqrt());
                scale
                    * x.iter()
                        .zip(v)
                        .map(|(xi, vi)| (xi - vi * a).abs())
                        .sum::<f64>()
            }
        }
    }

    /// A subgradient of `f` at `x`. At kinks of the hard instance the zero
    /// element of the per-coordinate subdifferential is used.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match &self.objective {
            Objective::Quadratic { a, b } => {
                let mut g = vec![0.0; d];
                for (row, bi) in a.chunks_exact(d).zip(b) {
                    let r = dot(row, x) - bi;
                    for (gj, aij) in g.iter_mut().zip(row) {
                        *gj += aij * r;
                    }
                }
                g
            }
            Objective::HardAbs { v, delta } => {
                let scale = 2.0 * self.grad_bound * delta / (d as f64).sqrt();
                let a = self.diameter() / (2.0 * (d as f64).sqrt());
                x.iter()
                    .zip(v)
                    .map(|(xi, vi)| {
                        let r = xi - vi * a;
                        if r > 0.0 {
                            scale
                        } else if r < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        }
    }

    /// `E[ĝ | x]` for the configured oracle.
    pub fn oracle_mean(&self, x: &[f64]) -> Vec<f64> {
        match (&self.oracle, &self.objective) {
            (
                OracleKind::BernoulliHard | OracleKind::GaussianHard,
                Objective::HardAbs { v, delta },
            ) => {
                let scale = 2.0 * self.grad_bound * delta / (self.dim() as f64).sqrt();
                v.iter().map(|vi| -scale * vi).collect()
            }
            _ => self.subgradient(x),
        }
    }

    /// One draw of the stochastic oracle at `x`.
    pub fn query_oracle(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, ProblemError> {
        self.check_dim(x)?;
        let d = self.dim();
        let sd = (d as f64).sqrt();
        Ok(match (&self.oracle, &self.objective) {
            (OracleKind::ExactPlusGaussian { tau2 }, _) => {
                let tau = tau2.sqrt();
                let mut g = self.subgradient(x);
                if tau > 0.0 {
                    for gi in g.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *gi += tau * z;
                    }
                }
                g
            }
            (OracleKind::BernoulliHard, Objective::HardAbs { v, delta }) => {
                let mag = self.grad_bound / sd;
                v.iter()
                    .map(|vi| {
                        let p_neg = (1.0 + 2.0 * delta * vi) / 2.0;
                        if rng.random::<f64>() < p_neg {
                            -mag
                        } else {
                            mag
                        }
                    })
                    .collect()
            }
            (OracleKind::GaussianHard, Objective::HardAbs { v, delta }) => {
                let mean = 2.0 * self.grad_bound * delta / sd;
                let sigma = self.grad_bound / sd;
                v.iter()
                    .map(|vi| {
                        let z: f64 = rng.sample(StandardNormal);
                        -mean * vi + sigma * z
                    })
                    .collect()
            }
            _ => unreachable!("hard oracles are only built for the hard instance"),
        })
    }
}

/// Oracle choices for the hard instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardOracle {
    Bernoulli,
    Gaussian,
    ExactPlusGaussian,
}

/// A ±1 vector drawn uniformly.
pub fn random_signs(d: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// `f(x)` as a free function.
pub fn eval_objective(problem: &ConvexProblem, x: &[f64]) -> Result<f64, ProblemError> {
    problem.eval_objective(x)
}

/// One oracle draw as a free function.
pub fn query_oracle(
    problem: &ConvexProblem,
    x: &[f64],
    rng: &mut SimRng,
) -> Result<Vec<f64>, ProblemError> {
    problem.query_oracle(x, rng)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Spectral norm of `AᵀA` by power iteration.
fn gram_spectral_norm(objective: &Objective, d: usize) -> f64 {
    let Objective::Quadratic { a, .. } = objective else {
        return 0.0;
    };
    let apply = |x: &[f64]| {
        let mut out = vec![0.0; d];
        for row in a.chunks_exact(d) {
            let r = dot(row, x);
            for (o, aij) in out.iter_mut().zip(row) {
                *o += aij * r;
            }
        }
        out
    };
    // Deterministic start with no special alignment.
    let mut x: Vec<f64> = (0..d)
        .map(|i| 1.0 + (i as f64 * 0.618_034).fract())
        .collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let y = apply(&x);
        let n = norm(&y);
        if n == 0.0 {
            return 0.0;
        }
        let next = n / norm(&x);
        x = y.iter().map(|v| v / n).collect();
        if (next - lambda).abs() <= 1e-13 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Small safety margin so the derived bound stays an upper bound.
    lambda * (1.0 + 1e-9)
}

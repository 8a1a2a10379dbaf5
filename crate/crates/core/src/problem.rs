//! Local objectives and the ridge-regression benchmark.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A private cost `f_i : R^p -> R` held by one agent.
pub trait LocalObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// `f(x) = (u^T x - v)^2 + rho ||x||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeObjective {
    pub feature: DVector<f64>,
    pub output: f64,
    pub penalty: f64,
}

impl LocalObjective for RidgeObjective {
    fn dim(&self) -> usize {
        self.feature.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = self.feature.dot(x) - self.output;
        r * r + self.penalty * x.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = self.feature.dot(x) - self.output;
        &self.feature * (2.0 * r) + x * (2.0 * self.penalty)
    }
}

/// Per-agent objectives with shared strong-convexity and smoothness constants.
#[derive(Clone)]
pub struct ObjectiveSuite {
    agents: Vec<Arc<dyn LocalObjective>>,
    mu: f64,
    lipschitz: f64,
    x_star: Option<DVector<f64>>,
}

impl std::fmt::Debug for ObjectiveSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveSuite")
            .field("n", &self.n())
            .field("p", &self.p())
            .field("mu", &self.mu)
            .field("lipschitz", &self.lipschitz)
            .field("x_star", &self.x_star)
            .finish()
    }
}

impl ObjectiveSuite {
    pub fn new(agents: Vec<Arc<dyn LocalObjective>>, mu: f64, lipschitz: f64) -> Result<Self> {
        let Some(first) = agents.first() else {
            return Err(Error::param("agents", "at least one local objective is required"));
        };
        let p = first.dim();
        if p == 0 {
            return Err(Error::param("p", "dimension must be positive"));
        }
        if let Some(bad) = agents.iter().position(|a| a.dim() != p) {
            return Err(Error::DimensionMismatch {
                what: "local objective dimension",
                expected: p.to_string(),
                found: format!("{} at agent {}", agents[bad].dim(), bad + 1),
            });
        }
        if !(mu > 0.0) || !(lipschitz >= mu) || !lipschitz.is_finite() {
            return Err(Error::param(
                "mu/L",
                format!("need 0 < mu <= L, got mu = {mu}, L = {lipschitz}"),
            ));
        }
        Ok(Self {
            agents,
            mu,
            lipschitz,
            x_star: None,
        })
    }

    pub fn with_optimum(mut self, x_star: DVector<f64>) -> Result<Self> {
        if x_star.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "x_star",
                expected: self.p().to_string(),
                found: x_star.len().to_string(),
            });
        }
        self.x_star = Some(x_star);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn p(&self) -> usize {
        self.agents[0].dim()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn x_star(&self) -> Option<&DVector<f64>> {
        self.x_star.as_ref()
    }

    pub fn agent(&self, i: usize) -> &dyn LocalObjective {
        self.agents[i].as_ref()
    }

    pub fn agent_arc(&self, i: usize) -> Arc<dyn LocalObjective> {
        Arc::clone(&self.agents[i])
    }

    pub fn gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        self.agents[i].gradient(x)
    }

    /// Stacked local gradients `grad F(x)`, one row per agent.
    pub fn stacked_gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.p());
        for i in 0..self.n() {
            let g = self.gradient(i, &x.row(i).transpose());
            out.row_mut(i).copy_from(&g.transpose());
        }
        out
    }

    /// `sum_i grad f_i(x)` at a common point.
    pub fn total_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (0..self.n()).fold(DVector::zeros(self.p()), |acc, i| acc + self.gradient(i, x))
    }

    /// Replaces one agent's objective, keeping the declared constants.
    pub fn with_agent(&self, i: usize, objective: Arc<dyn LocalObjective>) -> Result<Self> {
        if objective.dim() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "replacement objective",
                expected: self.p().to_string(),
                found: objective.dim().to_string(),
            });
        }
        let mut out = self.clone();
        out.agents[i] = objective;
        out.x_star = None;
        Ok(out)
    }
}

/// Ridge-regression benchmark data, one sample per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeInstance {
    pub n: usize,
    pub p: usize,
    pub penalty: f64,
    pub seed: u64,
    /// `u_i`.
    pub features: Vec<Vec<f64>>,
    /// `v_i = u_i^T x~_i + gamma_i`.
    pub outputs: Vec<f64>,
    /// `x~_i`.
    pub anchors: Vec<Vec<f64>>,
    /// `gamma_i`.
    pub noise: Vec<f64>,
}

/// Variance of the output noise `gamma_i`.
pub const OUTPUT_NOISE_VARIANCE: f64 = 5.0;

/// Anchors spread evenly over `[0, 10]`, constant across coordinates.
pub fn anchor_level(i: usize, n: usize) -> f64 {
    if n == 1 {
        5.0
    } else {
        10.0 * i as f64 / (n - 1) as f64
    }
}

impl RidgeInstance {
    pub fn feature(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.features[i])
    }

    pub fn anchor(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.anchors[i])
    }

    pub fn objective(&self, i: usize) -> RidgeObjective {
        RidgeObjective {
            feature: self.feature(i),
            output: self.outputs[i],
            penalty: self.penalty,
        }
    }

    pub fn mu(&self) -> f64 {
        2.0 * self.penalty
    }

    /// `2 (max_i ||u_i||^2 + rho)`, the largest Hessian eigenvalue bound.
    pub fn lipschitz(&self) -> f64 {
        let max_sq = (0..self.n)
            .map(|i| self.feature(i).norm_squared())
            .fold(0.0, f64::max);
        2.0 * (max_sq + self.penalty)
    }

    /// Suite with the first-order-condition optimum attached.
    pub fn suite(&self) -> Result<ObjectiveSuite> {
        let agents = (0..self.n)
            .map(|i| Arc::new(self.objective(i)) as Arc<dyn LocalObjective>)
            .collect();
        ObjectiveSuite::new(agents, self.mu(), self.lipschitz())?
            .with_optimum(first_order_optimum(self)?)
    }

    /// Copy with agent `i`'s sample replaced, keeping everything else.
    pub fn with_sample(&self, i: usize, feature: Vec<f64>, output: f64) -> Result<Self> {
        if feature.len() != self.p {
            return Err(Error::DimensionMismatch {
                what: "feature",
                expected: self.p.to_string(),
                found: feature.len().to_string(),
            });
        }
        let mut out = self.clone();
        out.features[i] = feature;
        out.outputs[i] = output;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Draws `u_i ~ U[-1,1]^p`, `gamma_i ~ N(0, 5)` (variance 5) and places the
/// anchors `x~_i` evenly in `[0, 10]^p`.
pub fn generate_ridge(n: usize, p: usize, penalty: f64, seed: u64) -> Result<(RidgeInstance, ObjectiveSuite)> {
    if n == 0 || p == 0 {
        return Err(Error::param("n/p", "must be at least 1"));
    }
    if !(penalty > 0.0) || !penalty.is_finite() {
        return Err(Error::param("rho_pen", format!("must be positive, got {penalty}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let normal = Normal::new(0.0, OUTPUT_NOISE_VARIANCE.sqrt()).expect("valid sd");

    let mut features = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let u: Vec<f64> = (0..p).map(|_| uniform.sample(&mut rng)).collect();
        let anchor = vec![anchor_level(i, n); p];
        let gamma = normal.sample(&mut rng);
        let v = u.iter().zip(&anchor).map(|(a, b)| a * b).sum::<f64>() + gamma;
        features.push(u);
        outputs.push(v);
        anchors.push(anchor);
        noise.push(gamma);
    }
    let instance = RidgeInstance {
        n,
        p,
        penalty,
        seed,
        features,
        outputs,
        anchors,
        noise,
    };
    let suite = instance.suite()?;
    Ok((instance, suite))
}

/// `sum_i u_i u_i^T + shift * I`.
fn gram_plus_shift(instance: &RidgeInstance, shift: f64) -> DMatrix<f64> {
    let p = instance.p;
    let mut h = DMatrix::<f64>::identity(p, p) * shift;
    for i in 0..instance.n {
        let u = instance.feature(i);
        h += &u * u.transpose();
    }
    h
}

fn solve_spd(h: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    h.cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or_else(|| Error::Singular("ridge normal equations are not positive definite".into()))
}

/// `(sum_i [u_i u_i^T + n rho I])^{-1} sum_i u_i u_i^T x~_i`, evaluated as
/// printed: the shift summed over agents is `n^2 rho`. It also ignores the
/// output noise `gamma_i`, so it is reported alongside the exact minimiser
/// rather than used as the reference.
pub fn anchor_optimum(instance: &RidgeInstance) -> Result<DVector<f64>> {
    let mut rhs = DVector::zeros(instance.p);
    for i in 0..instance.n {
        let u = instance.feature(i);
        rhs += &u * u.dot(&instance.anchor(i));
    }
    let n = instance.n as f64;
    solve_spd(gram_plus_shift(instance, n * n * instance.penalty), rhs)
}

/// `(sum_i u_i u_i^T + n rho I)^{-1} sum_i u_i v_i`: the exact minimiser of
/// `sum_i f_i`, from the first-order condition.
pub fn first_order_optimum(instance: &RidgeInstance) -> Result<DVector<f64>> {
    let mut rhs = DVector::zeros(instance.p);
    for i in 0..instance.n {
        rhs += instance.feature(i) * instance.outputs[i];
    }
    solve_spd(gram_plus_shift(instance, instance.n as f64 * instance.penalty), rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeOptimum {
    /// Used as the residual reference.
    pub first_order: Vec<f64>,
    /// The noise-free anchor formula.
    pub anchor: Vec<f64>,
    /// `||sum_i grad f_i||_2` at each candidate.
    pub first_order_gradient_norm: f64,
    pub anchor_gradient_norm: f64,
}

pub fn closed_form_optimum(instance: &RidgeInstance) -> Result<RidgeOptimum> {
    let first_order = first_order_optimum(instance)?;
    let anchor = anchor_optimum(instance)?;
    let suite = instance.suite()?;
    Ok(RidgeOptimum {
        first_order_gradient_norm: suite.total_gradient(&first_order).norm(),
        anchor_gradient_norm: suite.total_gradient(&anchor).norm(),
        first_order: first_order.iter().copied().collect(),
        anchor: anchor.iter().copied().collect(),
    })
}

/// `safety_factor * max_{i, k} ||grad f_i(x_{i,k})||_2` over a recorded
/// trajectory of `n x p` iterates.
pub fn estimate_gradient_bound(
    suite: &ObjectiveSuite,
    trajectory: &[DMatrix<f64>],
    safety_factor: f64,
) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::param("trajectory", "empty trajectory"));
    }
    if !(safety_factor > 0.0) {
        return Err(Error::param("safety_factor", "must be positive"));
    }
    let mut max = 0.0_f64;
    for x in trajectory {
        if x.shape() != (suite.n(), suite.p()) {
            return Err(Error::DimensionMismatch {
                what: "trajectory iterate",
                expected: format!("{}x{}", suite.n(), suite.p()),
                found: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        for i in 0..suite.n() {
            max = max.max(suite.gradient(i, &x.row(i).transpose()).norm());
        }
    }
    Ok(safety_factor * max)
}

//! The private push-pull iteration.
//!
//! Per agent `i` and iteration `k`:
//!
//! ```text
//! ya[i,k+1] = sum_j C~_ij ya[j,k] + (1 - beta_i) yb[i,k] + xi[i,k]
//! yb[i,k+1] = alpha_i ya[i,k] + beta_i yb[i,k] + grad f_i(x[i,k])
//! x[i,k+1]  = sum_j R_ij (x[j,k] - eta (ya[j,k+1] - ya[j,k]))
//! ```
//!
//! and in stacked form `y_{k+1} = C y_k + [xi_k; grad F(x_k)]`,
//! `x_{k+1} = R (x_k - eta T (y_{k+1} - y_k))`. Both forms are implemented
//! and consume noise in the same (iteration, agent, coordinate) order.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::graph::{self, WeightSystem};
use crate::privacy::NoiseSource;
use crate::problem::ObjectiveSuite;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    /// `n x p` decision iterates.
    pub x: DMatrix<f64>,
    /// Shared gradient sub-states.
    pub y_alpha: DMatrix<f64>,
    /// Private gradient sub-states, never transmitted.
    pub y_beta: DMatrix<f64>,
    pub k: usize,
    pub eta: f64,
    /// `y_k - y_{k-1}` (`2n x p`), with `y_{-1} = 0`. Kept for diagnostics only.
    pub last_increment: DMatrix<f64>,
}

impl RunState {
    /// Starts from `x0` with both sub-states at zero.
    pub fn new(x0: DMatrix<f64>, eta: f64) -> Result<Self> {
        let (n, p) = x0.shape();
        Self::with_trackers(x0, DMatrix::zeros(n, p), DMatrix::zeros(n, p), eta)
    }

    pub fn with_trackers(
        x0: DMatrix<f64>,
        y_alpha: DMatrix<f64>,
        y_beta: DMatrix<f64>,
        eta: f64,
    ) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::param("eta", format!("stepsize must be positive, got {eta}")));
        }
        let (n, p) = x0.shape();
        for (what, m) in [("y_alpha", &y_alpha), ("y_beta", &y_beta)] {
            if m.shape() != (n, p) {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: format!("{n}x{p}"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
        }
        let mut last_increment = DMatrix::zeros(2 * n, p);
        last_increment.rows_mut(0, n).copy_from(&y_alpha);
        last_increment.rows_mut(n, n).copy_from(&y_beta);
        Ok(Self {
            x: x0,
            y_alpha,
            y_beta,
            k: 0,
            eta,
            last_increment,
        })
    }

    /// `x_{i,0} ~ U[0,1]^p`, trackers at zero.
    pub fn uniform(n: usize, p: usize, seed: u64, eta: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        let x0 = DMatrix::from_fn(n, p, |_, _| 0.0).map(|_: f64| unit.sample(&mut rng));
        Self::new(x0, eta)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `[y_alpha; y_beta]`.
    pub fn stacked_y(&self) -> DMatrix<f64> {
        let (n, p) = self.x.shape();
        let mut y = DMatrix::zeros(2 * n, p);
        y.rows_mut(0, n).copy_from(&self.y_alpha);
        y.rows_mut(n, n).copy_from(&self.y_beta);
        y
    }

    fn check_dims(&self, weights: &WeightSystem, suite: &ObjectiveSuite, xi: &DMatrix<f64>) -> Result<()> {
        let (n, p) = self.x.shape();
        if weights.n() != n || suite.n() != n || suite.p() != p {
            return Err(Error::DimensionMismatch {
                what: "run state",
                expected: format!("{}x{}", suite.n(), suite.p()),
                found: format!("{n}x{p} with {} weighted agents", weights.n()),
            });
        }
        if xi.shape() != (n, p) {
            return Err(Error::DimensionMismatch {
                what: "noise",
                expected: format!("{n}x{p}"),
                found: format!("{}x{}", xi.nrows(), xi.ncols()),
            });
        }
        Ok(())
    }

    fn ensure_finite(&self) -> Result<()> {
        for (what, m) in [("x", &self.x), ("y_alpha", &self.y_alpha), ("y_beta", &self.y_beta)] {
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                let (n, _) = m.shape();
                return Err(Error::NonFinite {
                    k: self.k,
                    detail: format!(
                        "{what} of agent {} coordinate {} is {}; reduce the stepsize or noise scale",
                        pos % n + 1,
                        pos / n + 1,
                        m[pos]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// One iteration written per agent, summing only over neighbours.
pub fn step_agentwise(
    state: &RunState,
    weights: &WeightSystem,
    suite: &ObjectiveSuite,
    xi: &DMatrix<f64>,
) -> Result<RunState> {
    state.check_dims(weights, suite, xi)?;
    let (n, p) = state.x.shape();
    let eta = state.eta;
    let grads = suite.stacked_gradient(&state.x);

    let mut ya_next = DMatrix::zeros(n, p);
    let mut yb_next = DMatrix::zeros(n, p);
    for i in 0..n {
        let (alpha, beta) = (weights.alpha[i], weights.beta[i]);
        for r in 0..p {
            let mut pushed = 0.0;
            for j in 0..n {
                let w = weights.ctilde[(i, j)];
                if w != 0.0 {
                    pushed += w * state.y_alpha[(j, r)];
                }
            }
            ya_next[(i, r)] = pushed + (1.0 - beta) * state.y_beta[(i, r)] + xi[(i, r)];
            yb_next[(i, r)] =
                alpha * state.y_alpha[(i, r)] + beta * state.y_beta[(i, r)] + grads[(i, r)];
        }
    }

    // What agent j makes available to be pulled.
    let mut payload = DMatrix::zeros(n, p);
    for j in 0..n {
        for r in 0..p {
            payload[(j, r)] = state.x[(j, r)] - eta * (ya_next[(j, r)] - state.y_alpha[(j, r)]);
        }
    }
    let mut x_next = DMatrix::zeros(n, p);
    for i in 0..n {
        for r in 0..p {
            let mut acc = 0.0;
            for j in 0..n {
                let w = weights.r[(i, j)];
                if w != 0.0 {
                    acc += w * payload[(j, r)];
                }
            }
            x_next[(i, r)] = acc;
        }
    }

    let mut last_increment = DMatrix::zeros(2 * n, p);
    last_increment.rows_mut(0, n).copy_from(&(&ya_next - &state.y_alpha));
    last_increment.rows_mut(n, n).copy_from(&(&yb_next - &state.y_beta));
    let next = RunState {
        x: x_next,
        y_alpha: ya_next,
        y_beta: yb_next,
        k: state.k + 1,
        eta,
        last_increment,
    };
    next.ensure_finite()?;
    Ok(next)
}

/// One iteration in stacked matrix form.
pub fn step_matrix(
    state: &RunState,
    weights: &WeightSystem,
    suite: &ObjectiveSuite,
    xi: &DMatrix<f64>,
) -> Result<RunState> {
    state.check_dims(weights, suite, xi)?;
    let (n, p) = state.x.shape();
    let y = state.stacked_y();
    let mut forcing = DMatrix::zeros(2 * n, p);
    forcing.rows_mut(0, n).copy_from(xi);
    forcing.rows_mut(n, n).copy_from(&suite.stacked_gradient(&state.x));

    let y_next = &weights.c * &y + forcing;
    let increment = &y_next - &y;
    let x_next = &weights.r * (&state.x - (&weights.t * &increment) * state.eta);

    let next = RunState {
        x: x_next,
        y_alpha: y_next.rows(0, n).into_owned(),
        y_beta: y_next.rows(n, n).into_owned(),
        k: state.k + 1,
        eta: state.eta,
        last_increment: increment,
    };
    next.ensure_finite()?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepForm {
    #[default]
    Agentwise,
    Matrix,
}

pub fn step(
    form: StepForm,
    state: &RunState,
    weights: &WeightSystem,
    suite: &ObjectiveSuite,
    xi: &DMatrix<f64>,
) -> Result<RunState> {
    match form {
        StepForm::Agentwise => step_agentwise(state, weights, suite, xi),
        StepForm::Matrix => step_matrix(state, weights, suite, xi),
    }
}

/// `||(1/n) 1^T (y_{k+1} - y_k) - (1/n) 1^T grad F(x_k) - (1/n) 1^T xi_k||_inf`.
pub fn tracking_identity_gap(
    increment: &DMatrix<f64>,
    gradients: &DMatrix<f64>,
    xi: &DMatrix<f64>,
) -> f64 {
    let n = gradients.nrows() as f64;
    let lhs = increment.row_sum() / n;
    let rhs = (gradients.row_sum() + xi.row_sum()) / n;
    (lhs - rhs).amax()
}

/// A message seen on a link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub payload: Vec<f64>,
}

/// Everything transmitted during one iteration. Built only from `x` and the
/// shared sub-state, so private sub-states and raw gradients cannot appear.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationRound {
    pub k: usize,
    /// `x_{j,k} - eta (ya_{j,k+1} - ya_{j,k})`, pulled by `to` from `from`.
    pub pulled: Vec<Message>,
    /// `C~_lj ya_{j,k}`, pushed by `from` to `to`.
    pub pushed: Vec<Message>,
}

impl ObservationRound {
    pub fn capture(
        weights: &WeightSystem,
        x: &DMatrix<f64>,
        y_alpha: &DMatrix<f64>,
        y_alpha_next: &DMatrix<f64>,
        eta: f64,
        k: usize,
    ) -> Self {
        let n = x.nrows();
        let mut pulled = Vec::new();
        let mut pushed = Vec::new();
        for to in 0..n {
            for from in 0..n {
                if to == from {
                    continue;
                }
                if weights.r[(to, from)] > 0.0 {
                    let payload = (x.row(from) - (y_alpha_next.row(from) - y_alpha.row(from)) * eta)
                        .iter()
                        .copied()
                        .collect();
                    pulled.push(Message { from, to, payload });
                }
                let w = weights.ctilde[(to, from)];
                if w > 0.0 {
                    let payload = (y_alpha.row(from) * w).iter().copied().collect();
                    pushed.push(Message { from, to, payload });
                }
            }
        }
        Self { k, pulled, pushed }
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let diff = |a: &[Message], b: &[Message]| {
            a.iter()
                .zip(b)
                .flat_map(|(m1, m2)| m1.payload.iter().zip(&m2.payload).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max)
        };
        diff(&self.pulled, &other.pulled).max(diff(&self.pushed, &other.pushed))
    }
}

/// Per-iteration diagnostics; index `k` covers `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trace {
    /// `(1/n) sum_i ||x_{i,k} - x*||^2 / ||x_{i,0} - x*||^2`.
    pub residual: Vec<f64>,
    /// `||x_k - 1 xbar_k||_F` with `xbar_k = u^T x_k / n`.
    pub consensus_error: Vec<f64>,
    /// `||ytilde - v ybar||_F` for the increment that produced `y_k`.
    pub tracking_error: Vec<f64>,
    /// `||xbar_k - x*||_2^2`.
    pub optimality_error: Vec<f64>,
    /// Noise draws per iteration, when recorded.
    #[serde(skip)]
    pub noise: Option<Vec<DMatrix<f64>>>,
    pub elapsed_secs: f64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }

    /// Mean residual over the trailing `fraction` of iterations.
    pub fn plateau(&self, fraction: f64) -> f64 {
        tail_mean(&self.residual, fraction)
    }

    /// `k,residual,consensus_error,tracking_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,residual,consensus_error,tracking_error\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{k},{:e},{:e},{:e}\n",
                self.residual[k], self.consensus_error[k], self.tracking_error[k]
            ));
        }
        out
    }
}

pub fn tail_mean(values: &[f64], fraction: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let take = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    values[values.len() - take..].iter().sum::<f64>() / take as f64
}

/// Reference quantities needed to score a state.
struct Scorer<'a> {
    x_star: &'a DVector<f64>,
    initial_dist: Vec<f64>,
    u: &'a DVector<f64>,
    v: &'a DVector<f64>,
}

impl<'a> Scorer<'a> {
    fn new(x0: &DMatrix<f64>, x_star: &'a DVector<f64>, u: &'a DVector<f64>, v: &'a DVector<f64>) -> Result<Self> {
        let mut initial_dist = Vec::with_capacity(x0.nrows());
        for i in 0..x0.nrows() {
            let d = (x0.row(i).transpose() - x_star).norm_squared();
            if !(d > 0.0) {
                return Err(Error::ZeroInitialDistance { agent: i + 1 });
            }
            initial_dist.push(d);
        }
        Ok(Self {
            x_star,
            initial_dist,
            u,
            v,
        })
    }

    fn record(&self, trace: &mut Trace, x: &DMatrix<f64>, increment: &DMatrix<f64>) {
        let n = x.nrows();
        let residual = (0..n)
            .map(|i| (x.row(i).transpose() - self.x_star).norm_squared() / self.initial_dist[i])
            .sum::<f64>()
            / n as f64;
        let xbar = x.tr_mul(self.u) / n as f64;
        let spread = x - DMatrix::from_element(n, 1, 1.0) * xbar.transpose();
        let ybar = increment.row_sum() / n as f64;
        let tracking = increment - self.v * ybar;

        trace.residual.push(residual);
        trace.consensus_error.push(spread.norm());
        trace.tracking_error.push(tracking.norm());
        trace.optimality_error.push((xbar - self.x_star).norm_squared());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RunConfig {
    pub horizon: usize,
    pub form: StepForm,
    pub record_noise: bool,
    pub record_iterates: bool,
    pub record_observations: bool,
}

impl RunConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    /// `x_0 ..= x_K` when recorded.
    pub iterates: Option<Vec<DMatrix<f64>>>,
    pub observations: Option<Vec<ObservationRound>>,
    pub final_state: RunState,
}

/// Runs `K = cfg.horizon` iterations from `initial`. The suite must carry its
/// optimum; the normalized residual is undefined if any agent starts there.
pub fn run(
    weights: &WeightSystem,
    suite: &ObjectiveSuite,
    noise: &mut dyn NoiseSource,
    initial: RunState,
    cfg: &RunConfig,
) -> Result<RunOutput> {
    let started = Instant::now();
    let x_star = suite
        .x_star()
        .ok_or_else(|| Error::param("suite", "optimum is required to score a run"))?;
    let scorer = Scorer::new(&initial.x, x_star, &weights.u, &weights.v)?;
    let (n, p) = initial.x.shape();

    let mut trace = Trace::default();
    let mut iterates = cfg.record_iterates.then(|| vec![initial.x.clone()]);
    let mut observations = cfg.record_observations.then(Vec::new);
    let mut noise_log = cfg.record_noise.then(Vec::new);
    scorer.record(&mut trace, &initial.x, &initial.last_increment);

    let mut state = initial;
    for _ in 0..cfg.horizon {
        let xi = noise.draw(state.k, n, p);
        let next = step(cfg.form, &state, weights, suite, &xi)?;
        if let Some(obs) = observations.as_mut() {
            obs.push(ObservationRound::capture(
                weights,
                &state.x,
                &state.y_alpha,
                &next.y_alpha,
                state.eta,
                state.k,
            ));
        }
        scorer.record(&mut trace, &next.x, &next.last_increment);
        if let Some(it) = iterates.as_mut() {
            it.push(next.x.clone());
        }
        if let Some(log) = noise_log.as_mut() {
            log.push(xi);
        }
        state = next;
    }
    trace.noise = noise_log;
    trace.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        trace,
        iterates,
        observations,
        final_state: state,
    })
}

/// Plain push-pull: `y_{k+1} = C y_k + grad F(x_k)`,
/// `x_{k+1} = R (x_k - eta (y_{k+1} - y_k))` with an `n`-row tracker and a
/// column-stochastic `C`, no noise. `y_0 = 0`.
pub fn run_baseline_push_pull(
    r: &DMatrix<f64>,
    c: &DMatrix<f64>,
    suite: &ObjectiveSuite,
    x0: DMatrix<f64>,
    eta: f64,
    horizon: usize,
) -> Result<Trace> {
    let started = Instant::now();
    let (n, p) = x0.shape();
    if r.shape() != (n, n) || c.shape() != (n, n) || suite.n() != n || suite.p() != p {
        return Err(Error::DimensionMismatch {
            what: "baseline inputs",
            expected: format!("{n}x{n} weights for {n}x{p} iterates"),
            found: format!("R {:?}, C {:?}, suite {}x{}", r.shape(), c.shape(), suite.n(), suite.p()),
        });
    }
    if !(eta > 0.0) {
        return Err(Error::param("eta", "stepsize must be positive"));
    }
    for j in 0..n {
        if (c.column(j).sum() - 1.0).abs() > graph::STOCHASTIC_TOL {
            return Err(Error::Weights(format!("baseline C column {} does not sum to one", j + 1)));
        }
    }
    graph::check_spanning_trees(r, c).into_result()?;
    let u = graph::left_eigenvector_u(r)?;
    let v = graph::right_perron_vector(c, n as f64)?;
    let x_star = suite
        .x_star()
        .ok_or_else(|| Error::param("suite", "optimum is required to score a run"))?;
    let scorer = Scorer::new(&x0, x_star, &u, &v)?;

    let mut trace = Trace::default();
    let mut x = x0;
    let mut y = DMatrix::zeros(n, p);
    scorer.record(&mut trace, &x, &y);
    for k in 0..horizon {
        let y_next = c * &y + suite.stacked_gradient(&x);
        let increment = &y_next - &y;
        x = r * (&x - &increment * eta);
        y = y_next;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                k: k + 1,
                detail: "baseline state diverged".into(),
            });
        }
        scorer.record(&mut trace, &x, &increment);
    }
    trace.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(trace)
}

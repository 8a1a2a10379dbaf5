//! Numerical evaluation of the error-system machinery.
//!
//! The three error quantities `E||xbar - x*||^2`, `E||x - 1 xbar||_R^2` and
//! `E||ytilde - v ybar||_C^2` obey `z_{k+1} <= A z_k + b` componentwise. This
//! module evaluates the constants `c1..c11` and `d1..d3`, the matrix `A`, the
//! vector `b`, the admissible stepsize and the steady-state bounds
//! `(I - A)^{-1} b`.
//!
//! The norms `||.||_R`, `||.||_C` only need to exist; here they are replaced by
//! the computable surrogate `||x||_* = sup_k ||(M / sigma)^k x||_2`, which
//! satisfies `||M||_* <= sigma` and `||x||_2 <= ||x||_* <= kappa ||x||_2`.
//! Every figure derived from them carries an `indicative` flag.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::Serialize;

use crate::graph::WeightSystem;
use crate::linalg::{norm2, power_sup_constant, spectral_radius};
use crate::problem::ObjectiveSuite;
use crate::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 0.05;

/// Powers examined when bounding `sup_k ||(M / sigma)^k||_2`.
pub const POWER_SUP_CAP: usize = 100_000;

/// Contraction factors and norm-equivalence constants for the weighted norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormSurrogates {
    pub sigma_r: f64,
    pub sigma_c: f64,
    /// `||.||_R <= delta_rc ||.||_C`.
    pub delta_rc: f64,
    /// `||.||_R <= delta_r2 ||.||_2`.
    pub delta_r2: f64,
    /// `||.||_C <= delta_c2 ||.||_2`.
    pub delta_c2: f64,
    /// `||.||_C <= delta_cr ||.||_R`.
    pub delta_cr: f64,
    /// `rho(R - 1 u^T / n)`.
    pub rho_r: f64,
    /// `rho(C - v 1^T / n)`.
    pub rho_c: f64,
    pub margin: f64,
    /// Surrogate norms: bounds are indicative, not certified.
    pub indicative: bool,
}

/// `sigma = rho + margin` for both deviation matrices, and
/// `delta = sup_k ||(M / sigma)^k||_2` for the corresponding surrogate norm.
///
/// Both surrogates dominate the 2-norm, so `||.||_R <= kappa_R ||.||_2 <=
/// kappa_R ||.||_C`, which fixes `delta_rc = delta_r2 = kappa_R` and
/// `delta_cr = delta_c2 = kappa_C`.
pub fn default_norm_surrogates(weights: &WeightSystem, margin: f64) -> Result<NormSurrogates> {
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::param(
            "margin",
            format!("must be positive so the contraction is strict, got {margin}"),
        ));
    }
    let r_dev = weights.r_deviation();
    let c_dev = weights.c_deviation();
    let rho_r = spectral_radius(&r_dev);
    let rho_c = spectral_radius(&c_dev);
    let sigma_r = rho_r + margin;
    let sigma_c = rho_c + margin;
    for (name, sigma, rho) in [("R", sigma_r, rho_r), ("C", sigma_c, rho_c)] {
        if sigma >= 1.0 {
            return Err(Error::Precondition(format!(
                "contraction factor for {name} would be {sigma:.6} >= 1 (spectral radius {rho:.6} plus margin \
                 {margin}); the topology is too weakly connected for this margin"
            )));
        }
    }
    let kappa_r = power_sup_constant(&r_dev, sigma_r, POWER_SUP_CAP)?;
    let kappa_c = power_sup_constant(&c_dev, sigma_c, POWER_SUP_CAP)?;
    Ok(NormSurrogates {
        sigma_r,
        sigma_c,
        delta_rc: kappa_r,
        delta_r2: kappa_r,
        delta_c2: kappa_c,
        delta_cr: kappa_c,
        rho_r,
        rho_c,
        margin,
        indicative: true,
    })
}

/// The stepsize-free constants `c1..c11` and the scalars they are built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    /// `c[0] = c1`, ..., `c[10] = c11`.
    pub c: [f64; 11],
    pub n: usize,
    pub p: usize,
    pub mu: f64,
    pub lipschitz: f64,
    pub u_t_v: f64,
    pub sigma_r: f64,
    pub sigma_c: f64,
}

/// Norms of the fixed matrices entering the constants, all in the 2-norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralNorms {
    /// `||u^T T||_2`.
    pub u_t: f64,
    /// `||T v||`.
    pub t_v: f64,
    /// `||T||`.
    pub t: f64,
    /// `||R T||`.
    pub r_t: f64,
    /// `||R - I||`.
    pub r_minus_i: f64,
    /// `||I_2n - v 1^T / n||`.
    pub c_projector: f64,
    /// `||v||`.
    pub v: f64,
}

impl StructuralNorms {
    pub fn of(weights: &WeightSystem) -> Self {
        let n = weights.n();
        let u_t = weights.t.tr_mul(&weights.u);
        let t_v = &weights.t * &weights.v;
        let projector = DMatrix::<f64>::identity(2 * n, 2 * n)
            - &weights.v * DMatrix::from_element(1, 2 * n, 1.0) / n as f64;
        Self {
            u_t: u_t.norm(),
            t_v: t_v.norm(),
            t: norm2(&weights.t),
            r_t: norm2(&(&weights.r * &weights.t)),
            r_minus_i: norm2(&(&weights.r - DMatrix::<f64>::identity(n, n))),
            c_projector: norm2(&projector),
            v: weights.v.norm(),
        }
    }
}

impl Constants {
    pub fn compute(weights: &WeightSystem, suite: &ObjectiveSuite, norms: &NormSurrogates) -> Self {
        let s = StructuralNorms::of(weights);
        let n = weights.n() as f64;
        let p = suite.p() as f64;
        let (mu, l) = (suite.mu(), suite.lipschitz());
        let utv = weights.u_t_v();
        let (sr2, sc2) = (norms.sigma_r.powi(2), norms.sigma_c.powi(2));
        let dc2_sq = norms.delta_c2.powi(2);
        let proj_sq = s.c_projector.powi(2);
        let rt_sq = s.r_t.powi(2);
        let v_sq = s.v.powi(2);

        let c1 = 2.0 * utv * l * l / (mu * n * n);
        let c2 = 2.0 * s.u_t.powi(2) / (utv * mu * n);
        let c3 = 2.0 * p * utv * utv / n.powi(3);

        let c4 = 8.0 * sr2 * l * l * norms.delta_r2 * s.t_v.powi(2) / (1.0 - sr2);
        let c5 = c4 / n;
        let c6 = 4.0 * sr2 * norms.delta_rc * s.t.powi(2) / (1.0 - sr2);
        let c7 = 8.0 * p * sr2 * norms.delta_r2 * s.t_v.powi(2) / ((1.0 - sr2) * n);

        let head = dc2_sq * proj_sq / (1.0 - sc2);
        let c8 = 12.0 * head * l.powi(4) * rt_sq * v_sq;
        let c9 = 2.0 * head * (3.0 * l * l * s.r_minus_i.powi(2) + 6.0 * l * l * rt_sq * v_sq / n);
        let c10 = 6.0 * head * l * l * rt_sq;
        let c11 = 12.0 * head * p * rt_sq * v_sq / n;

        Self {
            c: [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11],
            n: weights.n(),
            p: suite.p(),
            mu,
            lipschitz: l,
            u_t_v: utv,
            sigma_r: norms.sigma_r,
            sigma_c: norms.sigma_c,
        }
    }

    /// `c_i`, one-based.
    pub fn ci(&self, i: usize) -> f64 {
        self.c[i - 1]
    }

    /// `eta' = eta u^T T v / n`.
    pub fn eta_prime(&self, eta: f64) -> f64 {
        eta * self.u_t_v / self.n as f64
    }

    pub fn d(&self) -> [f64; 3] {
        let c = |i| self.ci(i);
        let (sr2, sc2) = (self.sigma_r.powi(2), self.sigma_c.powi(2));
        let n = self.n as f64;
        let d1 = c(1) * c(6) * c(8);
        let d2 = c(2) * c(4) * c(9)
            + (1.0 - sr2) / 2.0 * c(2) * c(8)
            + (1.0 - sc2) / 2.0 * c(1) * c(4)
            + self.u_t_v * self.mu * c(6) * c(9) / n;
        let d3 = self.u_t_v * self.mu / (18.0 * n) * (1.0 - sr2) * (1.0 - sc2);
        [d1, d2, d3]
    }

    pub fn transition_matrix(&self, eta: f64) -> Matrix3<f64> {
        let c = |i| self.ci(i);
        let (sr2, sc2) = (self.sigma_r.powi(2), self.sigma_c.powi(2));
        let e2 = eta * eta;
        Matrix3::new(
            1.0 - self.eta_prime(eta) * self.mu,
            c(1) * eta,
            c(2) * eta,
            c(4) * e2,
            (1.0 + sr2) / 2.0 + c(5) * e2,
            c(6) * e2,
            c(8) * e2,
            c(9),
            (1.0 + sc2) / 2.0 + c(10) * e2,
        )
    }

    pub fn noise_vector(&self, eta: f64, theta_bar: f64) -> Vector3<f64> {
        let t2 = theta_bar * theta_bar;
        Vector3::new(self.ci(3) * eta * eta * t2, self.ci(7) * eta * eta * t2, self.ci(11) * t2)
    }

    /// Errors naming the violated inequality if `eta` is outside the range the
    /// error system is derived for.
    pub fn check_stepsize(&self, eta: f64) -> Result<()> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::Precondition(format!("stepsize must be positive, got {eta}")));
        }
        let ep = self.eta_prime(eta);
        let cap = 1.0 / (self.mu + self.lipschitz);
        if !(ep < cap) {
            return Err(Error::Precondition(format!(
                "eta' = eta u^T T v / n = {ep:e} must be below 1/(mu + L) = {cap:e}"
            )));
        }
        if !(eta < 1.0 / self.lipschitz) {
            return Err(Error::Precondition(format!(
                "eta = {eta:e} must be below 1/L = {:e}",
                1.0 / self.lipschitz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepsizeBound {
    /// `sqrt((1 - sigma_R^2) / (6 c5))`, `sqrt((1 - sigma_C^2) / (6 c10))` and
    /// `sqrt(2 d3 / (d2 + sqrt(d2^2 + 4 d1 d3)))`.
    pub terms: [f64; 3],
    /// Minimum of the three terms.
    pub contraction_term: f64,
    /// `n / (u^T T v (mu + L))`, from `eta' <= 1 / (mu + L)`.
    pub strong_convexity_cap: f64,
    /// `1 / L`.
    pub smoothness_cap: f64,
    /// Largest stepsize meeting every condition, kept strictly inside the caps.
    pub eta_max: f64,
}

/// Factor keeping `eta_max` strictly inside the strict caps.
const CAP_SHRINK: f64 = 1.0 - 1e-9;

/// `sqrt(2 d3 / (d2 + sqrt(d2^2 + 4 d1 d3)))`, the positive root of
/// `d1 s^2 + d2 s - d3 = 0` in `s = eta^2`, square-rooted.
pub fn determinant_term([d1, d2, d3]: [f64; 3]) -> f64 {
    (2.0 * d3 / (d2 + (d2 * d2 + 4.0 * d1 * d3).sqrt())).sqrt()
}

pub fn stepsize_bound(constants: &Constants) -> Result<StepsizeBound> {
    for (i, &c) in constants.c.iter().enumerate() {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Precondition(format!("constant c{} = {c} must be positive and finite", i + 1)));
        }
    }
    let [d1, d2, d3] = constants.d();
    let (sr2, sc2) = (constants.sigma_r.powi(2), constants.sigma_c.powi(2));
    let terms = [
        ((1.0 - sr2) / (6.0 * constants.ci(5))).sqrt(),
        ((1.0 - sc2) / (6.0 * constants.ci(10))).sqrt(),
        determinant_term([d1, d2, d3]),
    ];
    let contraction_term = terms.iter().copied().fold(f64::INFINITY, f64::min);
    let strong_convexity_cap = constants.n as f64 / (constants.u_t_v * (constants.mu + constants.lipschitz));
    let smoothness_cap = 1.0 / constants.lipschitz;
    let eta_max = contraction_term
        .min(strong_convexity_cap * CAP_SHRINK)
        .min(smoothness_cap * CAP_SHRINK);
    Ok(StepsizeBound {
        terms,
        contraction_term,
        strong_convexity_cap,
        smoothness_cap,
        eta_max,
    })
}

/// `rho(A) < 1` decided two ways.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub rho: f64,
    /// `det(I - A)`.
    pub determinant: f64,
    pub diagonal_below_one: bool,
    /// From the eigenvalues.
    pub by_eigenvalues: bool,
    /// From `a_ii < 1` and `det(I - A) > 0`.
    pub by_determinant: bool,
}

impl ContractionCheck {
    pub fn agree(&self) -> bool {
        self.by_eigenvalues == self.by_determinant
    }
}

pub fn contraction_check(a: &Matrix3<f64>) -> ContractionCheck {
    let rho = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let determinant = (Matrix3::identity() - a).determinant();
    let diagonal_below_one = (0..3).all(|i| a[(i, i)] < 1.0);
    ContractionCheck {
        rho,
        determinant,
        diagonal_below_one,
        by_eigenvalues: rho < 1.0,
        by_determinant: diagonal_below_one && determinant > 0.0,
    }
}

/// `det(I - A)` expanded term by term, as in the stability argument.
pub fn expanded_determinant(a: &Matrix3<f64>) -> f64 {
    let (a11, a12, a13) = (a[(0, 0)], a[(0, 1)], a[(0, 2)]);
    let (a21, a22, a23) = (a[(1, 0)], a[(1, 1)], a[(1, 2)]);
    let (a31, a32, a33) = (a[(2, 0)], a[(2, 1)], a[(2, 2)]);
    (1.0 - a11) * (1.0 - a22) * (1.0 - a33)
        - a12 * a23 * a31
        - a13 * a21 * a32
        - (1.0 - a22) * a13 * a31
        - (1.0 - a11) * a23 * a32
        - (1.0 - a33) * a12 * a21
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateBounds {
    /// `(I - A)^{-1} b`.
    pub z: [f64; 3],
    /// The printed closed-form upper bounds on `z[0]` and `z[1]`.
    pub closed_form: [f64; 2],
    /// Whether each solved bound is at or below its closed form.
    pub within_closed_form: [bool; 2],
}

/// Solves `(I - A) z = b`. Refuses unless `rho(A) < 1`.
pub fn steady_state_bounds(constants: &Constants, eta: f64, theta_bar: f64) -> Result<SteadyStateBounds> {
    let a = constants.transition_matrix(eta);
    let b = constants.noise_vector(eta, theta_bar);
    let check = contraction_check(&a);
    if !check.by_eigenvalues {
        return Err(Error::Precondition(format!(
            "rho(A) = {:.12} >= 1 at eta = {eta:e}; the steady state is unbounded",
            check.rho
        )));
    }
    let z = (Matrix3::identity() - a)
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("I - A".into()))?;
    let closed_form = closed_form_bounds(constants, eta, theta_bar);
    let z = [z[0], z[1], z[2]];
    Ok(SteadyStateBounds {
        z,
        closed_form,
        within_closed_form: [z[0] <= closed_form[0], z[1] <= closed_form[1]],
    })
}

/// The closed-form relaxations of `[(I - A)^{-1} b]_1` and `_2`, transcribed
/// as printed.
pub fn closed_form_bounds(constants: &Constants, eta: f64, theta_bar: f64) -> [f64; 2] {
    let c = |i| constants.ci(i);
    let (sr, sc) = (1.0 - constants.sigma_r.powi(2), 1.0 - constants.sigma_c.powi(2));
    let epm = constants.eta_prime(eta) * constants.mu;
    let pre = 18.0 * theta_bar * theta_bar / (epm * sr * sc);
    let e = eta;
    let first = pre
        * ((sr * sc / 4.0 - c(6) * c(9) * e * e) * c(3) * e * e
            + (c(2) * c(9) + c(1) * sc / 2.0) * c(7) * e.powi(3)
            + (c(1) * c(6) * e.powi(3) + c(2) * e * sr / 2.0) * c(11));
    let second = pre
        * ((c(6) * c(8) * e.powi(4) + c(4) * e * e * sc / 2.0) * c(3) * e * e
            + (epm * sc / 2.0 - c(2) * c(8) * e.powi(3)) * c(7) * e * e
            + (c(2) * c(4) * e.powi(3) + c(6) * e * e * epm) * c(11));
    [first, second]
}

/// Everything the analysis produces for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub norms: NormSurrogates,
    pub structural: StructuralNorms,
    pub constants: Constants,
    pub d: [f64; 3],
    pub eta: f64,
    pub eta_prime: f64,
    pub theta_bar: f64,
    /// Row-major `A`.
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub contraction: ContractionCheck,
    pub stepsize: StepsizeBound,
    pub eta_within_bound: bool,
    /// Present only when `rho(A) < 1`.
    pub steady: Option<SteadyStateBounds>,
    /// Why `steady` is absent.
    pub steady_unavailable: Option<String>,
    pub indicative: bool,
}

impl AnalysisReport {
    pub fn rho_a(&self) -> f64 {
        self.contraction.rho
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates every quantity at stepsize `eta` and noise level `theta_bar`.
pub fn compute_report(
    weights: &WeightSystem,
    suite: &ObjectiveSuite,
    norms: &NormSurrogates,
    theta_bar: f64,
    eta: f64,
) -> Result<AnalysisReport> {
    if !(theta_bar >= 0.0) || !theta_bar.is_finite() {
        return Err(Error::param("theta_bar", format!("must be nonnegative, got {theta_bar}")));
    }
    let constants = Constants::compute(weights, suite, norms);
    constants.check_stepsize(eta)?;
    let stepsize = stepsize_bound(&constants)?;
    let a = constants.transition_matrix(eta);
    let b = constants.noise_vector(eta, theta_bar);
    let contraction = contraction_check(&a);
    let (steady, steady_unavailable) = match steady_state_bounds(&constants, eta, theta_bar) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(AnalysisReport {
        norms: norms.clone(),
        structural: StructuralNorms::of(weights),
        d: constants.d(),
        eta,
        eta_prime: constants.eta_prime(eta),
        theta_bar,
        a: [
            [a[(0, 0)], a[(0, 1)], a[(0, 2)]],
            [a[(1, 0)], a[(1, 1)], a[(1, 2)]],
            [a[(2, 0)], a[(2, 1)], a[(2, 2)]],
        ],
        b: [b[0], b[1], b[2]],
        contraction,
        eta_within_bound: eta <= stepsize.eta_max,
        stepsize,
        steady,
        steady_unavailable,
        indicative: norms.indicative,
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NetworkTopology, WeightParams};
    use crate::problem::generate_ridge;

    fn setup(l_scale: f64) -> Constants {
        let (_, suite) = generate_ridge(5, 3, 0.1, 11).unwrap();
        let ws = WeightSystem::from_topology(
            &NetworkTopology::directed_ring(5).unwrap(),
            &WeightParams::uniform(5, 1.0, 0.3, 1.0, 0.5),
        )
        .unwrap();
        let norms = default_norm_surrogates(&ws, DEFAULT_MARGIN).unwrap();
        let mut c = Constants::compute(&ws, &suite, &norms);
        if l_scale != 1.0 {
            let agents = (0..suite.n()).map(|i| suite.agent_arc(i)).collect();
            let scaled = ObjectiveSuite::new(agents, suite.mu(), suite.lipschitz() * l_scale).unwrap();
            c = Constants::compute(&ws, &scaled, &norms);
        }
        c
    }

    #[test]
    fn zero_noise_gives_zero_bounds() {
        let c = setup(1.0);
        let eta = stepsize_bound(&c).unwrap().eta_max;
        assert_eq!(c.noise_vector(eta, 0.0), Vector3::zeros());
        let s = steady_state_bounds(&c, eta, 0.0).unwrap();
        assert_eq!(s.z, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn bounds_scale_with_theta_squared() {
        let c = setup(1.0);
        let eta = stepsize_bound(&c).unwrap().eta_max;
        let s1 = steady_state_bounds(&c, eta, 1.5).unwrap();
        let s2 = steady_state_bounds(&c, eta, 3.0).unwrap();
        for i in 0..3 {
            assert!((s2.z[i] - 4.0 * s1.z[i]).abs() <= 1e-9 * s2.z[i].abs());
        }
    }

    #[test]
    fn small_stepsize_limit() {
        let c = setup(1.0);
        let a = c.transition_matrix(1e-12);
        assert!((a[(0, 0)] - 1.0).abs() < 1e-10);
        assert!(a[(0, 1)] < 1e-6 && a[(1, 0)] < 1e-6);
        assert!((a[(1, 1)] - (1.0 + c.sigma_r.powi(2)) / 2.0).abs() < 1e-12);
        assert_eq!(a[(2, 1)], c.ci(9));
        let check = contraction_check(&a);
        assert!(check.rho < 1.0 && check.rho > 1.0 - 1e-9);
    }

    #[test]
    fn admissible_stepsize_contracts() {
        let c = setup(1.0);
        let bound = stepsize_bound(&c).unwrap();
        for f in [1.0, 0.5, 0.1] {
            let check = contraction_check(&c.transition_matrix(bound.eta_max * f));
            assert!(check.by_eigenvalues && check.by_determinant, "{check:?}");
        }
    }

    #[test]
    fn third_term_limit_without_d1() {
        let t = determinant_term([0.0, 3.0, 0.2]);
        assert!((t - (0.2_f64 / 3.0).sqrt()).abs() < 1e-15);
        let tiny = determinant_term([1e-12, 3.0, 0.2]);
        assert!(tiny < t && (tiny - t).abs() < 1e-12);
        // root of d1 s^2 + d2 s - d3
        let d = [2.0, 3.0, 0.2];
        let s = determinant_term(d).powi(2);
        assert!((d[0] * s * s + d[1] * s - d[2]).abs() < 1e-14);
    }

    #[test]
    fn larger_smoothness_shrinks_stepsize() {
        let a = stepsize_bound(&setup(1.0)).unwrap().eta_max;
        let b = stepsize_bound(&setup(2.0)).unwrap().eta_max;
        assert!(b < a);
    }

    #[test]
    fn determinant_expansion_matches() {
        let c = setup(1.0);
        let a = c.transition_matrix(1e-3);
        let det = (Matrix3::identity() - a).determinant();
        assert!((expanded_determinant(&a) - det).abs() <= 1e-12 * det.abs().max(1e-300) + 1e-15);
    }

    #[test]
    fn rate_approaches_first_diagonal() {
        let c = setup(1.0);
        let eta0 = stepsize_bound(&c).unwrap().eta_max;
        let mut last = f64::INFINITY;
        for k in 0..4 {
            let eta = eta0 / 10f64.powi(k);
            let rho = contraction_check(&c.transition_matrix(eta)).rho;
            let gap = (rho - (1.0 - c.eta_prime(eta) * c.mu)).abs();
            assert!(gap < last);
            last = gap;
        }
    }

    #[test]
    fn zero_margin_rejected() {
        let ws = WeightSystem::from_topology(
            &NetworkTopology::directed_ring(3).unwrap(),
            &WeightParams::uniform(3, 1.0, 0.3, 1.0, 0.5),
        )
        .unwrap();
        assert!(default_norm_surrogates(&ws, 0.0).is_err());
        assert!(default_norm_surrogates(&ws, 2.0).is_err());
    }

    #[test]
    fn symmetric_doubly_stochastic_radius_is_second_eigenvalue() {
        // undirected ring of 4 with c_R = 1: every R row is 1/3 on self and both neighbours
        let topo = NetworkTopology::new(4, (0..4).flat_map(|i| [(i, (i + 1) % 4), ((i + 1) % 4, i)])).unwrap();
        let ws = WeightSystem::from_topology(&topo, &WeightParams::uniform(4, 1.0, 0.3, 1.0, 0.5)).unwrap();
        let norms = default_norm_surrogates(&ws, 0.05).unwrap();
        // eigenvalues of R: 1, 1/3, 1/3, -1/3
        assert!((norms.rho_r - 1.0 / 3.0).abs() < 1e-12);
        assert!((norms.sigma_r - (1.0 / 3.0 + 0.05)).abs() < 1e-12);
        // symmetric deviation: the surrogate equals the 2-norm
        assert!((norms.delta_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stepsize_outside_caps_is_reported() {
        let c = setup(1.0);
        let err = c.check_stepsize(2.0 / c.lipschitz).unwrap_err();
        assert!(err.to_string().contains("1/(mu + L)") || err.to_string().contains("1/L"));
    }
}

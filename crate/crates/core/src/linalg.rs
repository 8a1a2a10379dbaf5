//! Small dense linear-algebra helpers shared by the graph and analysis code.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Spectral radius from the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `sup_k ||(M / sigma)^k||_2` over `k >= 0`.
///
/// For `rho(M) < sigma` this is finite, and `||x||_* = sup_k ||(M/sigma)^k x||_2`
/// is a vector norm with `||x||_2 <= ||x||_* <= kappa ||x||_2` whose induced
/// matrix norm satisfies `||M||_* <= sigma`. Once some power has 2-norm at most
/// one, every later power is dominated by an earlier one, so the running
/// maximum at that point is the supremum.
pub fn power_sup_constant(m: &DMatrix<f64>, sigma: f64, max_powers: usize) -> Result<f64> {
    assert!(m.is_square());
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let scaled = m / sigma;
    let mut power = DMatrix::<f64>::identity(m.nrows(), m.ncols());
    let mut sup = 1.0_f64;
    for _ in 0..max_powers {
        power = &scaled * &power;
        let nrm = norm2(&power);
        if !nrm.is_finite() {
            break;
        }
        sup = sup.max(nrm);
        if nrm <= 1.0 {
            return Ok(sup);
        }
    }
    Err(Error::NoConvergence {
        what: "power-norm supremum",
        iterations: max_powers,
        last_change: sup,
    })
}

/// Ones vector as a column matrix.
pub fn ones(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, 1, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_of_rotation_is_one() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((spectral_radius(&m) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_matches_gelfand_formula() {
        let m = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.0, 0.0, 0.3, 0.4, 0.1, 0.0, 0.1]);
        let mut p = m.clone();
        for _ in 0..199 {
            p = &m * &p;
        }
        let gelfand = norm2(&p).powf(1.0 / 200.0);
        assert!((spectral_radius(&m) - gelfand).abs() < 1e-2);
    }

    #[test]
    fn power_sup_norm_contracts_at_sigma() {
        // Non-normal: ||M||_2 > 1 but rho = 0.5.
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 4.0, 0.0, 0.5]);
        assert!(norm2(&m) > 1.0);
        let sigma = 0.6;
        let kappa = power_sup_constant(&m, sigma, 10_000).unwrap();
        assert!(kappa >= 1.0);
        // check ||Mx||_* <= sigma ||x||_* on a few vectors
        let star = |x: &DMatrix<f64>| {
            let scaled = &m / sigma;
            let mut best = x.norm();
            let mut y = x.clone();
            for _ in 0..2000 {
                y = &scaled * &y;
                best = best.max(y.norm());
            }
            best
        };
        for x in [
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.3, -1.0]),
            DMatrix::from_column_slice(2, 1, &[-2.0, 0.7]),
        ] {
            let mx = &m * &x;
            assert!(star(&mx) <= sigma * star(&x) * (1.0 + 1e-12));
            assert!(star(&x) <= kappa * x.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn power_sup_rejects_sigma_below_radius() {
        let m = DMatrix::from_row_slice(1, 1, &[0.9]);
        assert!(power_sup_constant(&m, 0.5, 1000).is_err());
    }
}

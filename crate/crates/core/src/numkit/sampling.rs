use rand_distr::{ChiSquared, Distribution, Gamma};

use super::linalg::{cholesky, invert_lower_triangular, squared_norm, CholeskyFactor, Matrix};
use super::rng::RngStream;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `mu + L·eps`: the reparameterized Gaussian draw for a given noise vector.
pub fn mvn_from_noise(mu: &[f64], chol: &CholeskyFactor, eps: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(chol.dim(), mu.len())?;
    let mut x = chol.mul_vec(eps)?;
    for (xi, m) in x.iter_mut().zip(mu) {
        *xi += m;
    }
    Ok(x)
}

pub fn sample_mvn(rng: &mut RngStream, mu: &[f64], chol: &CholeskyFactor) -> Result<Vec<f64>> {
    Error::check_dim(chol.dim(), mu.len())?;
    let eps = rng.normal_vec(mu.len());
    mvn_from_noise(mu, chol, &eps)
}

/// `log N(x; mu, L·Lᵀ)` through a triangular solve.
pub fn mvn_log_density(x: &[f64], mu: &[f64], chol: &CholeskyFactor) -> Result<f64> {
    let d = chol.dim();
    Error::check_dim(d, x.len())?;
    Error::check_dim(d, mu.len())?;
    let diff: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let z = chol.solve_lower(&diff)?;
    Ok(-0.5 * d as f64 * LN_2PI - chol.log_det_half() - 0.5 * squared_norm(&z))
}

pub fn sample_dirichlet(rng: &mut RngStream, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::Empty("Dirichlet concentration"));
    }
    let mut draws = Vec::with_capacity(alpha.len());
    for &a in alpha {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet concentration must be positive, got {a}"
            )));
        }
        let gamma = Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        draws.push(gamma.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights(
            "all Gamma draws underflowed to zero".into(),
        ));
    }
    Ok(draws.into_iter().map(|g| g / total).collect())
}

/// Draws from the inverse-Wishart `IW(scale, dof)`.
///
/// With `scale = L·Lᵀ` and a Bartlett factor `A` of `W(I, dof)`, the matrix
/// `(L⁻ᵀ·A)(L⁻ᵀ·A)ᵀ` is `W(scale⁻¹, dof)`; its inverse is `B·Bᵀ` with
/// `B = L·A⁻ᵀ`, so only triangular inverses are needed.
pub fn sample_inverse_wishart(rng: &mut RngStream, scale: &Matrix, dof: usize) -> Result<Matrix> {
    let d = scale.rows();
    if dof < d {
        return Err(Error::InvalidArgument(format!(
            "inverse-Wishart needs dof >= dimension ({dof} < {d})"
        )));
    }
    let l = cholesky(scale)?;
    let mut bartlett = Matrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new((dof - i) as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.standard_normal();
        }
    }
    let a_inv = invert_lower_triangular(&bartlett);
    let b = l.lower().matmul(&a_inv.transpose())?;
    let mut out = b.matmul(&b.transpose())?;
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Gaussian elimination with partial pivoting; returns (inverse, determinant).
    fn brute_inverse_det(m: &Matrix) -> (Matrix, f64) {
        let n = m.rows();
        let mut a = m.clone();
        let mut inv = Matrix::identity(n);
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[(i, c)].abs().partial_cmp(&a[(j, c)].abs()).unwrap())
                .unwrap();
            if p != c {
                for k in 0..n {
                    let (x, y) = (a[(c, k)], a[(p, k)]);
                    a[(c, k)] = y;
                    a[(p, k)] = x;
                    let (x, y) = (inv[(c, k)], inv[(p, k)]);
                    inv[(c, k)] = y;
                    inv[(p, k)] = x;
                }
                det = -det;
            }
            let piv = a[(c, c)];
            det *= piv;
            for k in 0..n {
                a[(c, k)] /= piv;
                inv[(c, k)] /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = a[(r, c)];
                    for k in 0..n {
                        a[(r, k)] -= f * a[(c, k)];
                        inv[(r, k)] -= f * inv[(c, k)];
                    }
                }
            }
        }
        (inv, det)
    }

    fn random_spd(rng: &mut RngStream, d: usize) -> Matrix {
        let a = Matrix::from_vec(d, d, rng.normal_vec(d * d)).unwrap();
        a.matmul(&a.transpose())
            .unwrap()
            .add(&Matrix::scaled_identity(d, d as f64))
            .unwrap()
    }

    #[test]
    fn mvn_from_noise_identity_factor() {
        let chol = CholeskyFactor::isotropic(3, 1.0).unwrap();
        let mu = [1.0, -2.0, 0.5];
        let mut rng = RngStream::new(3, 0);
        let eps = rng.clone().normal_vec(3);
        let x = sample_mvn(&mut rng, &mu, &chol).unwrap();
        for i in 0..3 {
            assert_eq!(x[i], mu[i] + eps[i]);
        }
        assert!(sample_mvn(&mut rng, &[0.0; 2], &chol).is_err());
    }

    #[test]
    fn mvn_empirical_mean_and_covariance() {
        let mut rng = RngStream::new(11, 0);
        let s = 100_000;
        let chol = CholeskyFactor::isotropic(2, 1.0).unwrap();
        let mut mean = [0.0; 2];
        for _ in 0..s {
            let x = sample_mvn(&mut rng, &[0.0, 0.0], &chol).unwrap();
            mean[0] += x[0] / s as f64;
            mean[1] += x[1] / s as f64;
        }
        assert!(mean[0].abs() < 0.02 && mean[1].abs() < 0.02, "{mean:?}");

        let sigma = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let chol = cholesky(&sigma).unwrap();
        let mut cov = Matrix::zeros(2, 2);
        for _ in 0..s {
            let x = sample_mvn(&mut rng, &[0.0, 0.0], &chol).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    cov[(i, j)] += x[i] * x[j] / s as f64;
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((cov[(i, j)] - sigma[(i, j)]).abs() < 0.05, "{cov:?}");
            }
        }
    }

    #[test]
    fn mvn_log_density_closed_forms() {
        let chol = CholeskyFactor::isotropic(2, 1.0).unwrap();
        let v = mvn_log_density(&[0.3, 0.1], &[0.3, 0.1], &chol).unwrap();
        assert_abs_diff_eq!(v, -(2.0 * std::f64::consts::PI).ln(), epsilon = 1e-14);

        let chol = cholesky(&Matrix::diagonal(&[4.0])).unwrap();
        let v = mvn_log_density(&[2.0], &[0.0], &chol).unwrap();
        let expect = -0.5 * (8.0 * std::f64::consts::PI).ln() - 0.5;
        assert_abs_diff_eq!(v, expect, epsilon = 1e-14);

        let m = Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let chol = cholesky(&m).unwrap();
        let a = mvn_log_density(&[0.4, -1.0], &[1.0, 2.0], &chol).unwrap();
        let b = mvn_log_density(&[5.4, 2.5], &[6.0, 5.5], &chol).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn mvn_log_density_matches_explicit_inverse() {
        let mut rng = RngStream::new(5, 1);
        for d in 1..=4 {
            for _ in 0..5 {
                let m = random_spd(&mut rng, d);
                let (inv, det) = brute_inverse_det(&m);
                let x = rng.normal_vec(d);
                let mu = rng.normal_vec(d);
                let diff: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
                let quad: f64 = super::super::linalg::dot(&diff, &inv.mul_vec(&diff).unwrap());
                let brute = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * det.ln()
                    - 0.5 * quad;
                let fast = mvn_log_density(&x, &mu, &cholesky(&m).unwrap()).unwrap();
                assert_abs_diff_eq!(fast, brute, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_reconstruction_on_random_spd() {
        let mut rng = RngStream::new(99, 0);
        for d in [1, 2, 5, 16, 40] {
            let m = random_spd(&mut rng, d);
            let r = cholesky(&m).unwrap().reconstruct();
            let mut err: f64 = 0.0;
            for i in 0..d {
                for j in 0..d {
                    err = err.max((r[(i, j)] - m[(i, j)]).abs());
                }
            }
            assert!(err <= 1e-10 * m.max_abs(), "d={d} err={err}");
        }
    }

    #[test]
    fn dirichlet_simplex_and_mean() {
        let mut rng = RngStream::new(2, 2);
        let alpha = [10.0; 5];
        let s = 100_000;
        let mut mean = [0.0; 5];
        for _ in 0..s {
            let p = sample_dirichlet(&mut rng, &alpha).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
            for (m, v) in mean.iter_mut().zip(&p) {
                *m += v / s as f64;
            }
        }
        for m in mean {
            assert!((m - 0.2).abs() < 0.01, "{m}");
        }
        let p = sample_dirichlet(&mut rng, &[1e6, 1e6]).unwrap();
        assert!((p[0] - 0.5).abs() < 0.01 && (p[1] - 0.5).abs() < 0.01);
        // small shapes go through the boosted Gamma sampler
        let p = sample_dirichlet(&mut rng, &[0.3, 0.05, 2.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sample_dirichlet(&mut rng, &[1.0, 0.0]).is_err());
        assert!(sample_dirichlet(&mut rng, &[]).is_err());
    }

    #[test]
    fn inverse_wishart_properties() {
        let mut rng = RngStream::new(8, 0);
        let w = sample_inverse_wishart(&mut rng, &Matrix::identity(4), 4).unwrap();
        assert!(w.max_asymmetry() <= 1e-10);
        assert!(cholesky(&w).is_ok());

        let again = sample_inverse_wishart(&mut RngStream::new(8, 0), &Matrix::identity(4), 4).unwrap();
        assert_eq!(w, again);

        assert!(sample_inverse_wishart(&mut rng, &Matrix::identity(3), 2).is_err());
        let bad = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert!(sample_inverse_wishart(&mut rng, &bad, 5).is_err());
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = RngStream::new(21, 0);
        let s = 100_000;
        let mut mean = Matrix::zeros(2, 2);
        for _ in 0..s {
            let w = sample_inverse_wishart(&mut rng, &Matrix::identity(2), 6).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    mean[(i, j)] += w[(i, j)] / s as f64;
                }
            }
        }
        // E[IW(I, 6)] = I / (6 - 2 - 1)
        let third = 1.0 / 3.0;
        assert!((mean[(0, 0)] - third).abs() < 0.05 * third, "{mean:?}");
        assert!((mean[(1, 1)] - third).abs() < 0.05 * third, "{mean:?}");
        assert!(mean[(0, 1)].abs() < 0.05 * third, "{mean:?}");
    }
}

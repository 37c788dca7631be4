use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::Objective;
use crate::rng::seeded;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn checked_hvp<O: Objective + ?Sized>(obj: &O, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let hv = obj.hvp(theta, v)?;
    if hv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("Hessian-vector product is not finite".into()));
    }
    Ok(hv)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    /// Signed eigenvalue of largest magnitude.
    pub lambda_max: f64,
    pub converged: bool,
    pub iters: usize,
}

/// Power iteration with Hessian-vector products.
///
/// Iterating `v ← Hv/‖Hv‖` converges to the eigenvector of largest
/// magnitude; its sign comes from the final Rayleigh quotient `vᵀHv`.
/// Converged once successive quotients differ by less than `tol` relative.
pub fn top_eigenvalue<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<EigenEstimate> {
    let m = theta.len();
    if m == 0 || max_iters == 0 {
        return Err(Error::InvalidInput("power iteration needs parameters and at least one iteration".into()));
    }
    let mut rng = seeded(seed);
    let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let n0 = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n0);

    let mut prev: Option<f64> = None;
    let mut lambda = 0.0;
    for it in 1..=max_iters {
        let hv = checked_hvp(obj, theta, &v)?;
        lambda = dot(&v, &hv);
        if let Some(p) = prev {
            if (lambda - p).abs() <= tol * lambda.abs() {
                return Ok(EigenEstimate {
                    lambda_max: lambda,
                    converged: true,
                    iters: it,
                });
            }
        }
        prev = Some(lambda);
        let norm = dot(&hv, &hv).sqrt();
        if norm == 0.0 {
            // v lies in the null space; the Hessian may be zero on this span
            return Ok(EigenEstimate {
                lambda_max: 0.0,
                converged: true,
                iters: it,
            });
        }
        v = hv.into_iter().map(|x| x / norm).collect();
    }
    Ok(EigenEstimate {
        lambda_max: lambda,
        converged: false,
        iters: max_iters,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub estimate: f64,
    /// Sample standard deviation over `√probes`; undefined for one probe.
    pub stderr: Option<f64>,
    pub probes: usize,
}

/// Hutchinson estimate of `Tr(H)`: the mean of `zᵀHz` over Rademacher
/// probes `z`.
pub fn hessian_trace<O: Objective + ?Sized>(obj: &O, theta: &[f64], probes: usize, seed: u64) -> Result<TraceEstimate> {
    if probes == 0 {
        return Err(Error::InvalidInput("hessian_trace needs at least one probe".into()));
    }
    let mut rng = seeded(seed);
    let mut samples = Vec::with_capacity(probes);
    for _ in 0..probes {
        let z: Vec<f64> = (0..theta.len())
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let hz = checked_hvp(obj, theta, &z)?;
        samples.push(dot(&z, &hz));
    }
    let n = probes as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let stderr = (probes > 1).then(|| {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    Ok(TraceEstimate {
        estimate: mean,
        stderr,
        probes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub probes: usize,
    pub seed: u64,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        CurvatureOptions {
            max_iters: 200,
            tol: 1e-5,
            probes: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub lambda_max: f64,
    pub trace_estimate: f64,
    pub trace_stderr: Option<f64>,
    pub probes_used: usize,
    pub power_iters: usize,
    pub converged: bool,
}

pub fn curvature<O: Objective + ?Sized>(obj: &O, theta: &[f64], opts: &CurvatureOptions) -> Result<CurvatureReport> {
    let eig = top_eigenvalue(obj, theta, opts.max_iters, opts.tol, opts.seed)?;
    let tr = hessian_trace(obj, theta, opts.probes, crate::rng::mix_seed(opts.seed, 1))?;
    Ok(CurvatureReport {
        lambda_max: eig.lambda_max,
        trace_estimate: tr.estimate,
        trace_stderr: tr.stderr,
        probes_used: tr.probes,
        power_iters: eig.iters,
        converged: eig.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::Quadratic;
    use crate::matrix::Matrix;

    fn diag(d: &[f64]) -> Quadratic {
        Quadratic::new(Matrix::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 })).unwrap()
    }

    #[test]
    fn dominant_negative_eigenvalue_keeps_its_sign() {
        let q = diag(&[1.0, -5.0, 2.0]);
        let e = top_eigenvalue(&q, &[0.0; 3], 500, 1e-12, 3).unwrap();
        assert!(e.converged);
        assert!((e.lambda_max + 5.0).abs() < 1e-6, "{e:?}");
    }

    #[test]
    fn unreachable_tolerance_reports_not_converged() {
        let q = diag(&[1.0, 0.999, 0.5]);
        let e = top_eigenvalue(&q, &[0.0; 3], 3, 0.0, 1).unwrap();
        assert!(!e.converged);
        assert_eq!(e.iters, 3);
        assert!(e.lambda_max > 0.5 && e.lambda_max <= 1.0);
    }

    #[test]
    fn identity_trace_is_exact() {
        let q = diag(&[1.0; 7]);
        let t = hessian_trace(&q, &[0.0; 7], 10, 0).unwrap();
        assert_eq!(t.estimate, 7.0);
        assert_eq!(t.stderr, Some(0.0));
        let one = hessian_trace(&q, &[0.0; 7], 1, 0).unwrap();
        assert_eq!(one.stderr, None);
    }

    #[test]
    fn deterministic_in_seed() {
        let q = diag(&[3.0, -1.0, 0.5, 2.0]);
        let a = hessian_trace(&q, &[0.0; 4], 5, 9).unwrap();
        let b = hessian_trace(&q, &[0.0; 4], 5, 9).unwrap();
        assert_eq!(a, b);
    }
}

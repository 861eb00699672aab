//! Weighted nonlinear fits of the correlation decay, and the physics read
//! back off the fitted time constants.
//!
//! The measured cross-correlation follows
//! g(t) = 1 + amp_nc exp(-(t/tau_nc)^2) + amp_c exp(-(t/tau_c)^2),
//! one Gaussian per storage class. Fits run in log-parameter space (all four
//! parameters are positive scale factors), which keeps the solver off the
//! boundaries and makes the result invariant under unit rescaling.

use crate::consts;
use crate::scalar::Real;
use crate::{ModelError, Result};

/// Parameters of the two-component Gaussian decay
/// g(t) = 1 + amp_nc exp(-(t/tau_nc)^2) + amp_c exp(-(t/tau_c)^2).
///
/// By convention tau_nc <= tau_c: the field-sensitive component dies first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams<R: Real = f64> {
    pub amp_nc: R,
    pub amp_c: R,
    /// Fast (field-sensitive) 1/e time [s].
    pub tau_nc: R,
    /// Slow (motional-only) 1/e time [s].
    pub tau_c: R,
}

/// Output of [`fit_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFitResult<R: Real = f64> {
    pub params: DecayParams<R>,
    /// Covariance in (amp_nc, amp_c, tau_nc, tau_c) order.
    pub covariance: [[R; 4]; 4],
    /// Weighted sum of squared residuals at the optimum.
    pub chi_square: R,
    /// Points minus fitted parameters.
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// Output of [`single_exponent_fit`]: g(t) = 1 + amp exp(-(t/tau)^2).
#[derive(Debug, Clone, PartialEq)]
pub struct SingleFitResult<R: Real = f64> {
    pub amp: R,
    pub tau: R,
    /// Covariance in (amp, tau) order.
    pub covariance: [[R; 2]; 2],
    pub chi_square: R,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Which component the single Gaussian stands for in reports.
    pub clock_only: bool,
}

/// Physics deconvolved from the fitted decay times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedPhysics<R: Real = f64> {
    /// RMS field inhomogeneity implied by the fast component [T].
    pub field_rms: R,
    /// Thermal velocity spread implied by the slow component [m/s].
    pub implied_velocity: R,
}

/// Model value at delay t.
pub fn model_eval<R: Real>(p: &DecayParams<R>, t: R) -> R {
    let xn = t / p.tau_nc;
    let xc = t / p.tau_c;
    R::one() + p.amp_nc * (-xn * xn).exp() + p.amp_c * (-xc * xc).exp()
}

/// Gradient of the model w.r.t. (amp_nc, amp_c, tau_nc, tau_c) at delay t.
pub fn model_gradient<R: Real>(p: &DecayParams<R>, t: R) -> [R; 4] {
    let two = R::of(2.0);
    let xn = t / p.tau_nc;
    let xc = t / p.tau_c;
    let en = (-xn * xn).exp();
    let ec = (-xc * xc).exp();
    [
        en,
        ec,
        p.amp_nc * en * two * xn * xn / p.tau_nc,
        p.amp_c * ec * two * xc * xc / p.tau_c,
    ]
}

// --- generic Levenberg-Marquardt core over N log-parameters ---

struct LmOutput<R: Real, const N: usize> {
    q: [R; N],
    cov_q: [[R; N]; N],
    chi_square: R,
    converged: bool,
    iterations: usize,
}

/// Cholesky factor of a symmetric positive-definite matrix, or the index of
/// the first non-positive pivot.
fn cholesky<R: Real, const N: usize>(a: &[[R; N]; N]) -> std::result::Result<[[R; N]; N], usize> {
    let mut l = [[R::zero(); N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > R::zero()) || !s.is_finite() {
                    return Err(i);
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve<R: Real, const N: usize>(l: &[[R; N]; N], b: &[R; N]) -> [R; N] {
    let mut y = [R::zero(); N];
    for i in 0..N {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [R::zero(); N];
    for i in (0..N).rev() {
        let mut s = y[i];
        for k in i + 1..N {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn cholesky_invert<R: Real, const N: usize>(
    a: &[[R; N]; N],
) -> std::result::Result<[[R; N]; N], usize> {
    let l = cholesky(a)?;
    let mut inv = [[R::zero(); N]; N];
    for j in 0..N {
        let mut e = [R::zero(); N];
        e[j] = R::one();
        let col = cholesky_solve(&l, &e);
        for i in 0..N {
            inv[i][j] = col[i];
        }
    }
    Ok(inv)
}

/// Cost, gradient J^T W r and normal matrix J^T W J at q.
fn linearize<R: Real, const N: usize>(
    points: &[(R, R, R)],
    q: &[R; N],
    eval: &impl Fn(&[R; N], R) -> (R, [R; N]),
) -> (R, [R; N], [[R; N]; N]) {
    let mut cost = R::zero();
    let mut grad = [R::zero(); N];
    let mut hess = [[R::zero(); N]; N];
    for &(t, y, sigma) in points {
        let (m, g) = eval(q, t);
        let r = (y - m) / sigma;
        cost += r * r;
        let mut jw = [R::zero(); N];
        for j in 0..N {
            jw[j] = g[j] / sigma;
        }
        for j in 0..N {
            grad[j] += jw[j] * r;
            for k in 0..=j {
                hess[j][k] += jw[j] * jw[k];
            }
        }
    }
    // mirror the lower triangle
    for j in 0..N {
        for k in j + 1..N {
            hess[j][k] = hess[k][j];
        }
    }
    (cost, grad, hess)
}

fn lm_fit<R: Real, const N: usize>(
    points: &[(R, R, R)],
    q0: [R; N],
    eval: impl Fn(&[R; N], R) -> (R, [R; N]),
) -> Result<LmOutput<R, N>> {
    // convergence thresholds widen automatically at f32 precision
    let tol = R::of(1e-10).max(R::epsilon() * R::of(100.0));
    let lambda_max = R::of(1e12);
    let mut lambda = R::of(1e-3);
    let mut q = q0;
    let (mut cost, mut grad, mut hess) = linearize(points, &q, &eval);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 500 {
        iterations += 1;
        // Marquardt damping scales with the curvature diagonal
        let mut damped = hess;
        for j in 0..N {
            damped[j][j] = hess[j][j] * (R::one() + lambda);
        }
        let step = match cholesky(&damped) {
            Ok(l) => cholesky_solve(&l, &grad),
            Err(_) => {
                lambda *= R::of(10.0);
                if lambda > lambda_max {
                    break;
                }
                continue;
            }
        };
        let mut q_try = q;
        for j in 0..N {
            q_try[j] = q[j] + step[j];
        }
        let (cost_try, grad_try, hess_try) = linearize(points, &q_try, &eval);
        if cost_try.is_finite() && cost_try <= cost {
            let improvement = cost - cost_try;
            let max_step = step.iter().fold(R::zero(), |m, s| m.max(s.abs()));
            q = q_try;
            cost = cost_try;
            grad = grad_try;
            hess = hess_try;
            lambda = (lambda / R::of(10.0)).max(R::of(1e-12));
            if max_step < tol && improvement <= tol * cost.max(R::one()) {
                converged = true;
                break;
            }
        } else {
            lambda *= R::of(10.0);
            if lambda > lambda_max {
                break;
            }
        }
    }
    let cov_q = cholesky_invert(&hess).map_err(|index| ModelError::SingularFit { index })?;
    Ok(LmOutput {
        q,
        cov_q,
        chi_square: cost,
        converged,
        iterations,
    })
}

/// Shared precondition checks; returns the distinct-delay count.
fn check_points<R: Real>(points: &[(R, R, R)], min_points: usize, min_distinct: usize) -> Result<()> {
    let usable = points.len();
    if usable < min_points {
        return Err(ModelError::TooFewPoints {
            what: "fit points",
            needed: min_points,
            got: usable,
        });
    }
    for &(t, y, sigma) in points {
        if !(t.is_finite() && t >= R::zero()) {
            return Err(ModelError::InvalidConfig {
                field: "fit.delay",
                constraint: "finite and nonnegative",
                value: t.as_f64(),
            });
        }
        if !y.is_finite() {
            return Err(ModelError::InvalidConfig {
                field: "fit.g_value",
                constraint: "finite",
                value: y.as_f64(),
            });
        }
        if !(sigma.is_finite() && sigma > R::zero()) {
            return Err(ModelError::InvalidConfig {
                field: "fit.std_error",
                constraint: "finite and positive",
                value: sigma.as_f64(),
            });
        }
    }
    let mut ts: Vec<R> = points.iter().map(|p| p.0).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    if ts.len() < min_distinct {
        return Err(ModelError::TooFewPoints {
            what: "distinct delays",
            needed: min_distinct,
            got: ts.len(),
        });
    }
    Ok(())
}

// inverse crossing abscissas of exp(-x^2): 0.6 and 0.2 levels, and 1/e
const X_60: f64 = 0.714_721_584_789_658_9; // sqrt(ln(1/0.6))
const X_20: f64 = 1.268_636_260_024_629_7; // sqrt(ln 5)
const X_1E: f64 = 1.0;

/// First delay at which the excess g-1 falls below `level` times its t=0
/// value, linearly interpolated; None if it never does.
fn crossing_delay<R: Real>(sorted: &[(R, R, R)], excess0: R, level: f64) -> Option<R> {
    let target = excess0 * R::of(level);
    let mut prev = sorted[0];
    for &p in &sorted[1..] {
        let (t, y, _) = p;
        let (tp, yp, _) = prev;
        if (yp - R::one()) > target && (y - R::one()) <= target {
            let num = (yp - R::one()) - target;
            let den = (yp - R::one()) - (y - R::one());
            let frac = if den > R::zero() { num / den } else { R::of(0.5) };
            return Some(tp + frac * (t - tp));
        }
        prev = p;
    }
    None
}

/// Starting point estimated from the data: split the zero-delay excess evenly
/// and read the two time scales off the 60% and 20% decay crossings.
fn auto_init<R: Real>(points: &[(R, R, R)]) -> DecayParams<R> {
    let mut sorted: Vec<(R, R, R)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let excess0 = (sorted[0].1 - R::one()).max(R::of(1e-3));
    let t_max = sorted.last().unwrap().0.max(R::of(1e-12));
    let amp = (excess0 / R::of(2.0)).max(R::of(1e-3));
    let tau_nc = crossing_delay(&sorted, excess0, 0.6)
        .map(|t| t / R::of(X_60))
        .filter(|t| *t > R::zero())
        .unwrap_or(t_max / R::of(3.0));
    let mut tau_c = crossing_delay(&sorted, excess0, 0.2)
        .map(|t| t / R::of(X_20))
        .filter(|t| *t > R::zero())
        .unwrap_or(t_max);
    if tau_c <= tau_nc {
        tau_c = tau_nc * R::of(2.0);
    }
    DecayParams {
        amp_nc: amp,
        amp_c: amp,
        tau_nc,
        tau_c,
    }
}

/// Orders the components so tau_nc <= tau_c, permuting the covariance along.
fn normalize_order<R: Real>(params: &mut DecayParams<R>, cov: &mut [[R; 4]; 4]) {
    if params.tau_nc <= params.tau_c {
        return;
    }
    std::mem::swap(&mut params.amp_nc, &mut params.amp_c);
    std::mem::swap(&mut params.tau_nc, &mut params.tau_c);
    // permutation (0 1)(2 3) on rows and columns
    let perm = [1usize, 0, 3, 2];
    let old = *cov;
    for i in 0..4 {
        for j in 0..4 {
            cov[i][j] = old[perm[i]][perm[j]];
        }
    }
}

/// Weighted fit of the two-component decay to (delay [s], g, std_error)
/// points. With `init` absent a data-driven starting point is used.
pub fn fit_decay<R: Real>(
    points: &[(R, R, R)],
    init: Option<DecayParams<R>>,
) -> Result<DecayFitResult<R>> {
    check_points(points, 5, 4)?;
    let start = match init {
        Some(p) => {
            for (v, name) in [
                (p.amp_nc, "fit.init.amp_nc"),
                (p.amp_c, "fit.init.amp_c"),
                (p.tau_nc, "fit.init.tau_nc"),
                (p.tau_c, "fit.init.tau_c"),
            ] {
                if !(v.is_finite() && v > R::zero()) {
                    return Err(ModelError::InvalidConfig {
                        field: name,
                        constraint: "finite and positive",
                        value: v.as_f64(),
                    });
                }
            }
            p
        }
        None => auto_init(points),
    };
    let q0 = [
        start.amp_nc.ln(),
        start.amp_c.ln(),
        start.tau_nc.ln(),
        start.tau_c.ln(),
    ];
    let out = lm_fit(points, q0, |q: &[R; 4], t: R| {
        let p = DecayParams {
            amp_nc: q[0].exp(),
            amp_c: q[1].exp(),
            tau_nc: q[2].exp(),
            tau_c: q[3].exp(),
        };
        let g = model_gradient(&p, t);
        let scale = [p.amp_nc, p.amp_c, p.tau_nc, p.tau_c];
        let mut gq = [R::zero(); 4];
        for j in 0..4 {
            gq[j] = g[j] * scale[j];
        }
        (model_eval(&p, t), gq)
    })?;
    let p = [out.q[0].exp(), out.q[1].exp(), out.q[2].exp(), out.q[3].exp()];
    let mut covariance = [[R::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            covariance[i][j] = out.cov_q[i][j] * p[i] * p[j];
        }
    }
    let mut params = DecayParams {
        amp_nc: p[0],
        amp_c: p[1],
        tau_nc: p[2],
        tau_c: p[3],
    };
    normalize_order(&mut params, &mut covariance);
    Ok(DecayFitResult {
        params,
        covariance,
        chi_square: out.chi_square,
        dof: points.len().saturating_sub(4),
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Weighted fit of a single Gaussian component, for data where only one class
/// contributes (`clock_only` records which one for reporting).
pub fn single_exponent_fit<R: Real>(
    points: &[(R, R, R)],
    clock_only: bool,
) -> Result<SingleFitResult<R>> {
    check_points(points, 3, 2)?;
    let mut sorted: Vec<(R, R, R)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let excess0 = (sorted[0].1 - R::one()).max(R::of(1e-3));
    let t_max = sorted.last().unwrap().0.max(R::of(1e-12));
    let tau0 = crossing_delay(&sorted, excess0, (-1.0f64).exp())
        .map(|t| t / R::of(X_1E))
        .filter(|t| *t > R::zero())
        .unwrap_or(t_max / R::of(2.0));
    let q0 = [excess0.ln(), tau0.ln()];
    let out = lm_fit(points, q0, |q: &[R; 2], t: R| {
        let amp = q[0].exp();
        let tau = q[1].exp();
        let x = t / tau;
        let e = (-x * x).exp();
        let m = R::one() + amp * e;
        // gradient w.r.t. (ln amp, ln tau)
        (m, [amp * e, amp * e * R::of(2.0) * x * x])
    })?;
    let amp = out.q[0].exp();
    let tau = out.q[1].exp();
    let scale = [amp, tau];
    let mut covariance = [[R::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            covariance[i][j] = out.cov_q[i][j] * scale[i] * scale[j];
        }
    }
    Ok(SingleFitResult {
        amp,
        tau,
        covariance,
        chi_square: out.chi_square,
        dof: points.len().saturating_sub(2),
        converged: out.converged,
        iterations: out.iterations,
        clock_only,
    })
}

/// Deconvolves the field and motional contributions from the fitted times.
///
/// The fast component carries both dephasing mechanisms, the slow one only
/// motion, and inverse-square rates add; so 1/tau_B^2 = 1/tau_nc^2 - 1/tau_c^2
/// isolates the magnetic part, and tau_c fixes the velocity spread through
/// the stored wavevector mismatch.
pub fn extract_physics<R: Real>(params: &DecayParams<R>, delta_k: R) -> Result<ExtractedPhysics<R>> {
    if !(params.tau_nc < params.tau_c) {
        return Err(ModelError::DeconvolutionUndefined {
            tau_nc_us: params.tau_nc.as_f64() * 1e6,
            tau_c_us: params.tau_c.as_f64() * 1e6,
        });
    }
    let inv_sq =
        R::one() / (params.tau_nc * params.tau_nc) - R::one() / (params.tau_c * params.tau_c);
    let tau_b = R::one() / inv_sq.sqrt();
    Ok(ExtractedPhysics {
        field_rms: R::of(consts::HBAR) / (R::of(consts::MU_B) * tau_b),
        implied_velocity: R::one() / (params.tau_c * delta_k),
    })
}

//! Small numerical kernels: normal distribution, adaptive quadrature,
//! quasi-Newton minimisation and bounded one-dimensional search.

use libm::erfc;

use crate::error::{domain, Error, Result};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance
/// `rel_tol` (absolute floor `1e-300`).
pub fn integrate<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(b >= a) {
        return domain(format!("integration bounds reversed ({a} > {b})"));
    }
    if a == b {
        return Ok(0.0);
    }
    // A coarse composite pass fixes the absolute scale of the tolerance and
    // keeps the recursion from stopping early on a symmetric integrand.
    const PANELS: usize = 16;
    let w = (b - a) / PANELS as f64;
    let mut nodes = Vec::with_capacity(2 * PANELS + 1);
    for k in 0..=2 * PANELS {
        let x = a + 0.5 * w * k as f64;
        nodes.push(f(x)?);
    }
    let mut coarse = 0.0;
    for k in 0..PANELS {
        coarse += w / 6.0 * (nodes[2 * k] + 4.0 * nodes[2 * k + 1] + nodes[2 * k + 2]);
    }
    let tol = (rel_tol * coarse.abs()).max(1e-300) / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let (lo, hi) = (a + w * k as f64, a + w * (k + 1) as f64);
        let (fa, fm, fb) = (nodes[2 * k], nodes[2 * k + 1], nodes[2 * k + 2]);
        let whole = w / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_step(&f, lo, hi, fa, fm, fb, whole, tol, 48)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// Central-difference gradient with step `h_i = rel_step · max(|x_i|, 1)`.
pub fn central_gradient<F>(f: &F, x: &[f64], rel_step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step.
    pub rel_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 500,
            rel_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// BFGS with numerical gradients and a backtracking Armijo line search.
///
/// Converges when the gradient norm drops below `grad_tol`. Stops early,
/// unconverged, when the objective no longer moves and the gradient sits
/// within a factor 1000 of the tolerance (finite-difference noise floor).
pub fn bfgs<F>(f: F, x0: &[f64], opts: BfgsOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return domain("cannot minimise over zero parameters");
    }
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::Numeric(format!("objective is not finite at the start point ({fx})")));
    }
    let mut g = central_gradient(&f, &x, opts.rel_step);
    let mut hinv = identity(n);
    let mut iterations = 0;
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    while iterations < opts.max_iter {
        let gn = norm(&g);
        if gn < opts.grad_tol {
            return Ok(Minimum {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: true,
            });
        }
        iterations += 1;
        let mut dir: Vec<f64> = mat_vec(&hinv, &g).iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            hinv = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        // backtracking with an initial step capped in parameter space
        let dn = norm(&dir);
        let mut step = if dn > 1.0 { 1.0 / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if hinv != identity(n) {
                hinv = identity(n);
                continue;
            }
            return Ok(Minimum {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: false,
            });
        };
        let g_new = central_gradient(&f, &x_new, opts.rel_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if iterations == 1 {
                // scale the initial inverse Hessian
                let scale = sy / dot(&y, &y);
                hinv = identity(n).into_iter().map(|r| r.into_iter().map(|v| v * scale).collect()).collect();
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        let stalled = (fx - f_new).abs() <= 1e-15 * fx.abs().max(1e-300);
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled && norm(&g) < opts.grad_tol * 1e3 {
            break;
        }
    }
    let gn = norm(&g);
    Ok(Minimum {
        x,
        value: fx,
        grad_norm: gn,
        iterations,
        converged: gn < opts.grad_tol,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Minimises `f` on `[lo, hi]`: a coarse grid scan picks the bracket,
/// golden-section search narrows it to `tol`, and a final parabolic step
/// through the best three points refines it.
pub fn minimize_bounded<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if !(hi > lo) {
        return domain(format!("empty search interval [{lo}, {hi}]"));
    }
    const GRID: usize = 40;
    let h = (hi - lo) / GRID as f64;
    let mut best = (lo, f(lo));
    for k in 1..=GRID {
        let x = lo + h * k as f64;
        let v = f(x);
        if v < best.1 || !best.1.is_finite() {
            best = (x, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let (xm, fm) = if fc < fd { (c, fc) } else { (d, fd) };
    let mut out = if fm < best.1 { (xm, fm) } else { best };
    // parabolic refinement through (x - tol, x, x + tol)
    let x = out.0;
    let step = tol.max(1e-9);
    if x - step >= lo && x + step <= hi {
        let (fl, fr) = (f(x - step), f(x + step));
        let denom = fl - 2.0 * out.1 + fr;
        if denom > 0.0 {
            let xp = x - 0.5 * step * (fr - fl) / denom;
            if (xp - x).abs() <= step {
                let fp = f(xp);
                if fp < out.1 {
                    out = (xp, fp);
                }
            }
        }
    }
    Ok(out)
}

//! Regression and curve fitting for the measured exponents and rates.
//!
//! Two-parameter laws are fitted by ordinary least squares, after a log
//! transform where needed. The two critical forms
//!
//! * `p(alpha) = a + b |alpha - alpha0|^gamma`
//! * `r(alpha) = c exp(-b / |alpha - alpha_c|^(1/2))`
//!
//! are linear in some parameters once the others are fixed, so the linear
//! ones are solved exactly inside the objective and a bounded Nelder-Mead
//! search runs over the rest from a fixed set of starts.

use crate::error::{Error, Result};
use crate::fractal::ols;

/// Critical exponent of the cycle-length tail at the transition.
pub const UNIVERSAL_EXPONENT: f64 = 0.25;
/// The linear dimension law is fitted on `alpha <= LINEAR_LAW_MAX_ALPHA`.
pub const LINEAR_LAW_MAX_ALPHA: f64 = 0.65;
/// The power dimension law is fitted on `alpha >= POWER_LAW_MIN_ALPHA`.
pub const POWER_LAW_MIN_ALPHA: f64 = 0.75;
pub const DEFAULT_RATE_BAND: (f64, f64) = (1e-6, 1e-3);

const SIMPLEX_TOLERANCE: f64 = 1e-10;
const EVALUATION_BUDGET: usize = 100_000;
const MULTI_STARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitModel {
    /// `ln nu = intercept - p ln K`.
    PowerLawSlope,
    /// `-ln nu = intercept + r K`.
    ExpRate,
    KtPowerForm,
    KtRateForm,
    /// `d = d0 - s alpha`.
    LinearLaw,
    /// `d = 1 + b alpha^(-c)`.
    PowerLaw1Plus,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::PowerLawSlope => "power-law-slope",
            FitModel::ExpRate => "exp-rate",
            FitModel::KtPowerForm => "kt-power",
            FitModel::KtRateForm => "kt-rate",
            FitModel::LinearLaw => "linear-law",
            FitModel::PowerLaw1Plus => "power-law-1-plus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<(&'static str, f64)>,
    /// Residual sum of squares in the space the fit was performed in.
    pub rss: f64,
    /// Standard errors in the order of `params`, when estimable.
    pub param_std_err: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Points dropped from the fit and why.
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }

    fn linear(model: FitModel, params: Vec<(&'static str, f64)>, rss: f64, std_err: Vec<f64>) -> Self {
        FitResult { model, params, rss, param_std_err: Some(std_err), converged: true, iterations: 1, warnings: Vec::new() }
    }
}

fn rss_of(xs: &[f64], ys: &[f64], slope: f64, intercept: f64) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum()
}

/// `stderr(a) = stderr(b) * sqrt(mean(x^2))` for the OLS line `a + b x`.
fn intercept_std_err(xs: &[f64], slope_err: f64) -> f64 {
    let mean_sq = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    slope_err * mean_sq.sqrt()
}

/// Power of `K` in `nu(K) ~ K^-p`, from OLS on `(ln K, ln nu)` over
/// `k_min <= K <= k_max`.
pub fn loglog_slope(points: &[(f64, f64)], k_min: f64, k_max: f64) -> Result<FitResult> {
    let window: Vec<(f64, f64)> = points.iter().copied().filter(|&(k, _)| k >= k_min && k <= k_max).collect();
    if let Some(&(k, v)) = window.iter().find(|&&(k, v)| !(k > 0.0 && v > 0.0)) {
        return Err(Error::Degenerate(format!("log-log fit needs positive values, got ({k}, {v})")));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = window.iter().map(|&(k, v)| (k.ln(), v.ln())).unzip();
    let (slope, intercept, slope_err) = ols(&xs, &ys)?;
    let rss = rss_of(&xs, &ys, slope, intercept);
    Ok(FitResult::linear(
        FitModel::PowerLawSlope,
        vec![("p", -slope), ("intercept", intercept)],
        rss,
        vec![slope_err, intercept_std_err(&xs, slope_err)],
    ))
}

/// Decay rate `r` of `nu(K) ~ exp(-r K)` from the points with `nu` inside
/// `band`, and the correlation length `1/r`.
pub fn exp_rate(points: &[(f64, f64)], band: (f64, f64)) -> Result<FitResult> {
    let (lo, hi) = band;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|&&(_, v)| v >= lo && v <= hi && v > 0.0)
        .map(|&(k, v)| (k, -v.ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} point(s) with nu in [{lo:e}, {hi:e}]; widen the band or extend the K range",
            xs.len()
        )));
    }
    let (r, intercept, r_err) = ols(&xs, &ys)?;
    let rss = rss_of(&xs, &ys, r, intercept);
    Ok(FitResult::linear(
        FitModel::ExpRate,
        vec![("r", r), ("xi", 1.0 / r), ("intercept", intercept)],
        rss,
        vec![r_err, r_err / (r * r), intercept_std_err(&xs, r_err)],
    ))
}

/// Where the OLS line through `points` reaches `level`.
pub fn linear_extrapolate_crossing(points: &[(f64, f64)], level: f64) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (slope, intercept, _) = ols(&xs, &ys)?;
    if slope == 0.0 {
        return Err(Error::Degenerate("line is flat and never crosses the level".into()));
    }
    Ok((level - intercept) / slope)
}

/// Minimum of `f` over the box `[lower, upper]`.
#[derive(Debug, Clone)]
struct Minimum {
    x: Vec<f64>,
    fx: f64,
    evaluations: usize,
    converged: bool,
}

/// Nelder-Mead with vertices projected onto the box. Stops once every vertex
/// lies within `SIMPLEX_TOLERANCE` of the best one, or the budget runs out.
fn nelder_mead(f: &impl Fn(&[f64]) -> f64, start: &[f64], lower: &[f64], upper: &[f64], budget: usize) -> Minimum {
    let dim = start.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..dim {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let evaluations = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut x0 = start.to_vec();
    clamp(&mut x0);
    simplex.push((x0.clone(), eval(&x0)));
    for i in 0..dim {
        let mut x = x0.clone();
        let span = upper[i] - lower[i];
        let step = 0.1 * span.min(x0[i].abs().max(0.1));
        x[i] = if x[i] + step <= upper[i] { x[i] + step } else { x[i] - step };
        clamp(&mut x);
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let mut converged = false;
    while evaluations.get() < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter <= SIMPLEX_TOLERANCE {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64, worst: &[f64]| {
            let mut x: Vec<f64> = (0..dim).map(|i| centroid[i] + t * (worst[i] - centroid[i])).collect();
            clamp(&mut x);
            x
        };
        let worst = simplex[dim].0.clone();
        let (f_best, f_second, f_worst) = (simplex[0].1, simplex[dim - 1].1, simplex[dim].1);
        let xr = along(-1.0, &worst);
        let fr = eval(&xr);
        if fr < f_best {
            let xe = along(-2.0, &worst);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < f_second {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < f_worst {
                let xc = along(-0.5, &worst);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5, &worst);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < f_worst.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = v.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    clamp(&mut x);
                    let fx = eval(&x);
                    *v = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Minimum { x, fx, evaluations: evaluations.get(), converged }
}

/// Nelder-Mead from every start, each polished by restarts until a restart
/// no longer improves; the best result wins with ties going to the earlier
/// start.
fn minimize(f: impl Fn(&[f64]) -> f64, starts: &[Vec<f64>], lower: &[f64], upper: &[f64]) -> Minimum {
    let per_start = EVALUATION_BUDGET / starts.len();
    let mut best: Option<Minimum> = None;
    let mut evaluations = 0;
    for start in starts {
        let mut m = nelder_mead(&f, start, lower, upper, per_start);
        let mut spent = m.evaluations;
        while spent < per_start {
            let again = nelder_mead(&f, &m.x, lower, upper, per_start - spent);
            spent += again.evaluations;
            let improved = again.fx < m.fx;
            let converged = again.converged;
            if improved || again.fx == m.fx {
                m = Minimum { evaluations: 0, ..again };
            }
            if !improved {
                m.converged = converged;
                break;
            }
        }
        evaluations += spent;
        if best.as_ref().is_none_or(|b| m.fx < b.fx) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = evaluations;
    best
}

/// Solve `A x = b` for a small dense system; `None` if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Asymptotic standard errors `sqrt(diag(s^2 (J^T J)^-1))` from a central
/// difference Jacobian of the residuals.
fn nonlinear_std_err(residuals: impl Fn(&[f64]) -> Vec<f64>, params: &[f64]) -> Option<Vec<f64>> {
    let r0 = residuals(params);
    let (n, k) = (r0.len(), params.len());
    if n <= k {
        return None;
    }
    let jac: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let h = 1e-6 * params[j].abs().max(1e-3);
            let (mut up, mut down) = (params.to_vec(), params.to_vec());
            up[j] += h;
            down[j] -= h;
            let (ru, rd) = (residuals(&up), residuals(&down));
            ru.iter().zip(&rd).map(|(u, d)| (u - d) / (2.0 * h)).collect()
        })
        .collect();
    let s2 = r0.iter().map(|r| r * r).sum::<f64>() / (n - k) as f64;
    let jtj: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum()).collect())
        .collect();
    (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let col = solve(jtj.clone(), e)?;
            let v = s2 * col[j];
            (v >= 0.0 && v.is_finite()).then(|| v.sqrt())
        })
        .collect()
}

/// Best `y ~ u0 + u1 * t` for fixed basis values `t`: `(u0, u1, rss)`.
fn project(ts: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let (slope, intercept, _) = ols(ts, ys).ok()?;
    let rss = rss_of(ts, ys, slope, intercept);
    rss.is_finite().then_some((intercept, slope, rss))
}

fn kt_power_basis(alphas: &[f64], alpha0: f64, gamma: f64) -> Vec<f64> {
    alphas.iter().map(|a| (a - alpha0).abs().powf(gamma)).collect()
}

/// Fit `p(alpha) = a + b |alpha - alpha0|^gamma` with
/// `alpha0` in `(max alpha, max alpha + 1]` and `gamma` in `(0, 2]`.
pub fn fit_kt_power(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 5 {
        return Err(Error::InsufficientData(format!("KT power form needs at least 5 points, got {}", points.len())));
    }
    let (alphas, ps): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let max_alpha = alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lower = [max_alpha + 1e-9, 1e-6];
    let upper = [max_alpha + 1.0, 2.0];
    let objective = |v: &[f64]| match project(&kt_power_basis(&alphas, v[0], v[1]), &ps) {
        Some((_, _, rss)) => rss,
        None => f64::INFINITY,
    };
    let starts: Vec<Vec<f64>> = [0.005, 0.05, 0.25, 0.75]
        .iter()
        .flat_map(|&d| [0.5, 1.5].map(|g| vec![max_alpha + d, g]))
        .collect();
    debug_assert_eq!(starts.len(), MULTI_STARTS);
    let m = minimize(objective, &starts, &lower, &upper);
    let (alpha0, gamma) = (m.x[0], m.x[1]);
    let (a, b, rss) = project(&kt_power_basis(&alphas, alpha0, gamma), &ps)
        .ok_or_else(|| Error::Degenerate("KT power basis has no spread".into()))?;
    let params = [a, b, alpha0, gamma];
    let std_err = nonlinear_std_err(
        |q| alphas.iter().zip(&ps).map(|(x, p)| p - q[0] - q[1] * (x - q[2]).abs().powf(q[3])).collect(),
        &params,
    );
    Ok(FitResult {
        model: FitModel::KtPowerForm,
        params: vec![("a", a), ("b", b), ("alpha0", alpha0), ("gamma", gamma)],
        rss,
        param_std_err: std_err,
        converged: m.converged,
        iterations: m.evaluations,
        warnings: Vec::new(),
    })
}

fn kt_rate_basis(alphas: &[f64], alpha_c: f64) -> Vec<f64> {
    alphas.iter().map(|a| -1.0 / (a - alpha_c).abs().sqrt()).collect()
}

/// Fit `r(alpha) = c exp(-b / |alpha - alpha_c|^(1/2))` on `ln r`, with
/// `alpha_c` in `[0, min alpha)`, `b > 0` and `c > 0`.
pub fn fit_kt_rate(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!("KT rate form needs at least 4 points, got {}", points.len())));
    }
    if let Some(&(a, r)) = points.iter().find(|&&(a, r)| !(r > 0.0) || !(a > 0.0)) {
        return Err(Error::Degenerate(format!("KT rate fit needs alpha > 0 and r > 0, got ({a}, {r})")));
    }
    let (alphas, ln_r): (Vec<f64>, Vec<f64>) = points.iter().map(|&(a, r)| (a, r.ln())).unzip();
    let min_alpha = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let lower = [0.0];
    let upper = [min_alpha * (1.0 - 1e-9)];
    let objective = |v: &[f64]| match project(&kt_rate_basis(&alphas, v[0]), &ln_r) {
        Some((_, b, rss)) if b > 0.0 => rss,
        _ => f64::INFINITY,
    };
    let starts: Vec<Vec<f64>> = (0..MULTI_STARTS)
        .map(|k| vec![upper[0] * (k as f64 + 0.5) / MULTI_STARTS as f64])
        .collect();
    let m = minimize(objective, &starts, &lower, &upper);
    let alpha_c = m.x[0];
    let (ln_c, b, rss) = match project(&kt_rate_basis(&alphas, alpha_c), &ln_r) {
        Some(fit) if fit.1 > 0.0 => fit,
        _ => return Err(Error::Degenerate("no admissible KT rate fit with b > 0".into())),
    };
    let params = [ln_c.exp(), b, alpha_c];
    let std_err = nonlinear_std_err(
        |q| {
            alphas
                .iter()
                .zip(&ln_r)
                .map(|(x, y)| y - q[0].ln() + q[1] / (x - q[2]).abs().sqrt())
                .collect()
        },
        &params,
    );
    Ok(FitResult {
        model: FitModel::KtRateForm,
        params: vec![("c", params[0]), ("b", b), ("alpha_c", alpha_c)],
        rss,
        param_std_err: std_err,
        converged: m.converged,
        iterations: m.evaluations,
        warnings: Vec::new(),
    })
}

/// `d = d0 - s alpha` by OLS.
pub fn fit_linear_law(points: &[(f64, f64)]) -> Result<FitResult> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (slope, d0, slope_err) = ols(&xs, &ys)?;
    let rss = rss_of(&xs, &ys, slope, d0);
    Ok(FitResult::linear(
        FitModel::LinearLaw,
        vec![("d0", d0), ("s", -slope)],
        rss,
        vec![intercept_std_err(&xs, slope_err), slope_err],
    ))
}

/// `d = 1 + b alpha^-c` by OLS on `ln(d - 1) = ln b - c ln alpha`. Points
/// with `d <= 1` are dropped and listed in `warnings`.
pub fn fit_power_law_one_plus(points: &[(f64, f64)]) -> Result<FitResult> {
    let mut warnings = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(alpha, d) in points {
        if d > 1.0 && alpha > 0.0 {
            xs.push(alpha.ln());
            ys.push((d - 1.0).ln());
        } else {
            warnings.push(format!("excluded point alpha={alpha}, d={d}: needs d > 1 and alpha > 0"));
        }
    }
    let (slope, ln_b, slope_err) = ols(&xs, &ys)?;
    let rss = rss_of(&xs, &ys, slope, ln_b);
    let b = ln_b.exp();
    Ok(FitResult {
        warnings,
        ..FitResult::linear(
            FitModel::PowerLaw1Plus,
            vec![("b", b), ("c", -slope)],
            rss,
            vec![b * intercept_std_err(&xs, slope_err), slope_err],
        )
    })
}

/// The linear law on `alpha <= LINEAR_LAW_MAX_ALPHA` and the power law on
/// `alpha >= POWER_LAW_MIN_ALPHA`.
pub fn fit_dimension_laws(points: &[(f64, f64)]) -> Result<(FitResult, FitResult)> {
    let low: Vec<(f64, f64)> = points.iter().copied().filter(|&(a, _)| a <= LINEAR_LAW_MAX_ALPHA).collect();
    let high: Vec<(f64, f64)> = points.iter().copied().filter(|&(a, _)| a >= POWER_LAW_MIN_ALPHA).collect();
    Ok((fit_linear_law(&low)?, fit_power_law_one_plus(&high)?))
}

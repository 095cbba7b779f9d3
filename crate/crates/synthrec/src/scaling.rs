//! Loss scaling-law fitting and compute-optimal allocation.
//!
//! Two model classes: the per-model data law `L(D) = L_inf + A * D^-alpha`
//! and the joint law `L(N, D) = E + A * N^-alpha + B * D^-beta`. Exponents
//! are fit by a multi-start log-spaced grid followed by golden-section
//! refinement of the profile objective; the linear coefficients are solved
//! exactly at every exponent with their non-negativity (and `L_inf <= min L`)
//! constraints enforced by active-set enumeration. Everything is
//! deterministic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Exponent search range. Fitted exponents in this problem family live well
/// inside [1e-3, 2]; power-law profiles are multi-modal enough to need the
/// multi-start grid.
const EXP_LO: f64 = 1e-3;
const EXP_HI: f64 = 2.0;
const GRID: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    /// Model size N in raw parameters (0.6B is 6e8).
    pub model_params: f64,
    pub label: String,
    /// (training tokens D, loss L), D strictly increasing.
    pub points: Vec<(f64, f64)>,
}

impl LossCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.model_params > 0.0) {
            return Err(Error::InvalidInput(format!(
                "curve '{}': model_params must be positive",
                self.label
            )));
        }
        if self.points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "curve '{}': need at least 2 points",
                self.label
            )));
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidInput(format!(
                    "curve '{}': token counts must be strictly increasing",
                    self.label
                )));
            }
        }
        for &(d, l) in &self.points {
            if !(d > 0.0) || !l.is_finite() || !(l > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "curve '{}': invalid point ({d}, {l})",
                    self.label
                )));
            }
        }
        Ok(())
    }

    /// Replace each loss with its natural log (perplexity input).
    pub fn map_loss_ln(&self) -> LossCurve {
        LossCurve {
            model_params: self.model_params,
            label: self.label.clone(),
            points: self.points.iter().map(|&(d, l)| (d, l.ln())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerModelFit {
    pub l_inf: f64,
    pub a: f64,
    pub alpha: f64,
    pub rmse: f64,
    /// False when the fit is no better than the best constant, e.g. on a
    /// constant or non-decreasing curve; `alpha` is then meaningless.
    pub alpha_identifiable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointScalingFit {
    pub e: f64,
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub rmse: f64,
    pub alpha_identifiable: bool,
    pub beta_identifiable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub enum FitObjective {
    #[default]
    SquaredError,
    /// Robust alternative for noisy curves; `delta` in loss units.
    Huber { delta: f64 },
}


fn golden_min(mut lo: f64, mut hi: f64, iters: usize, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Constrained 2-variable least squares for fixed basis `x`:
/// minimize sum w*(c + a*x - y)^2 with c in [0, c_max], a >= 0.
/// The box optimum is the interior stationary point or lies on a face;
/// enumerating the clamped face solutions covers every case.
fn solve_offset_slope(
    x: &[f64],
    y: &[f64],
    w: &[f64],
    c_max: f64,
) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let sx: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
    let sy: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| a * a * b).sum();
    let sxy: f64 = x.iter().zip(x).zip(y).zip(w).map(|(((a, _), c), d)| a * c * d).sum();

    let sse = |c: f64, a: f64| -> f64 {
        x.iter()
            .zip(y)
            .zip(w)
            .map(|((&xi, &yi), &wi)| {
                let r = c + a * xi - yi;
                wi * r * r
            })
            .sum()
    };

    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(4);
    let det = sw * sxx - sx * sx;
    if det.abs() > 0.0 {
        let a = (sw * sxy - sx * sy) / det;
        let c = (sy - a * sx) / sw;
        if (0.0..=c_max).contains(&c) && a >= 0.0 {
            candidates.push((c, a));
        }
    }
    // Faces: c pinned at either bound, or a pinned at zero.
    for c in [0.0, c_max] {
        let a = if sxx > 0.0 { ((sxy - c * sx) / sxx).max(0.0) } else { 0.0 };
        candidates.push((c, a));
    }
    candidates.push(((sy / sw).clamp(0.0, c_max), 0.0));

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for (c, a) in candidates {
        let s = sse(c, a);
        if s < best.0 {
            best = (s, c, a);
        }
    }
    (best.1, best.2, best.0)
}

fn huber_weights(residuals: &[f64], delta: f64) -> Vec<f64> {
    residuals
        .iter()
        .map(|&r| {
            let ar = r.abs();
            if ar <= delta {
                1.0
            } else {
                delta / ar
            }
        })
        .collect()
}

/// Profile objective for the per-model law at a fixed alpha: exact solve of
/// the linear part, optionally IRLS-reweighted for the Huber objective.
fn per_model_profile(
    d: &[f64],
    y: &[f64],
    alpha: f64,
    c_max: f64,
    objective: FitObjective,
) -> (f64, f64, f64) {
    let x: Vec<f64> = d.iter().map(|&di| di.powf(-alpha)).collect();
    let mut w = vec![1.0; y.len()];
    match objective {
        FitObjective::SquaredError => {
            let (c, a, sse) = solve_offset_slope(&x, y, &w, c_max);
            (c, a, sse)
        }
        FitObjective::Huber { delta } => {
            let (mut c, mut a, mut sse) = solve_offset_slope(&x, y, &w, c_max);
            for _ in 0..25 {
                let residuals: Vec<f64> =
                    x.iter().zip(y).map(|(&xi, &yi)| c + a * xi - yi).collect();
                w = huber_weights(&residuals, delta);
                let (c2, a2, sse2) = solve_offset_slope(&x, y, &w, c_max);
                let moved = (c2 - c).abs() + (a2 - a).abs();
                c = c2;
                a = a2;
                sse = sse2;
                if moved < 1e-14 {
                    break;
                }
            }
            (c, a, sse)
        }
    }
}

/// Fit `L(D) = L_inf + A * D^-alpha` with `L_inf` constrained to
/// `[0, min L]` and `A >= 0`.
pub fn fit_per_model(curve: &LossCurve) -> Result<PerModelFit> {
    fit_per_model_with(curve, FitObjective::SquaredError)
}

pub fn fit_per_model_with(curve: &LossCurve, objective: FitObjective) -> Result<PerModelFit> {
    curve.validate()?;
    if curve.points.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "curve '{}': need at least 4 points to fit, got {}",
            curve.label,
            curve.points.len()
        )));
    }
    let d: Vec<f64> = curve.points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    let c_max = y.iter().cloned().fold(f64::INFINITY, f64::min);

    let grid = log_grid(EXP_LO, EXP_HI, GRID);
    let sses: Vec<f64> = grid
        .iter()
        .map(|&alpha| per_model_profile(&d, &y, alpha, c_max, objective).2)
        .collect();

    // Refine around the best few grid points; power-law profiles can carry
    // shallow secondary minima.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| sses[i].partial_cmp(&sses[j]).unwrap());
    let mut best_alpha = grid[order[0]];
    let mut best_sse = sses[order[0]];
    for &idx in order.iter().take(3) {
        let lo = grid[idx.saturating_sub(1)].ln();
        let hi = grid[(idx + 1).min(grid.len() - 1)].ln();
        let mut eval = |t: f64| per_model_profile(&d, &y, t.exp(), c_max, objective).2;
        let t = golden_min(lo, hi, 160, &mut eval);
        let alpha = t.exp();
        let sse = per_model_profile(&d, &y, alpha, c_max, objective).2;
        if sse < best_sse {
            best_sse = sse;
            best_alpha = alpha;
        }
    }

    let (l_inf, a, sse) = per_model_profile(&d, &y, best_alpha, c_max, objective);
    let n = y.len() as f64;
    // The power term is identifiable only when it spreads meaningfully over
    // the observed range and the fit beats the unconstrained mean.
    let mean = y.iter().sum::<f64>() / n;
    let sse_mean: f64 = y.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let x_min = d.last().unwrap().powf(-best_alpha);
    let x_max = d.first().unwrap().powf(-best_alpha);
    let y_scale = y.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-12);
    let identifiable = a > 0.0
        && a * (x_max - x_min) > 1e-9 * y_scale
        && sse < sse_mean * (1.0 - 1e-9);

    Ok(PerModelFit {
        l_inf,
        a,
        alpha: best_alpha,
        rmse: (sse / n).sqrt(),
        alpha_identifiable: identifiable,
    })
}

/// Solve the 3-variable constrained least squares
/// `min sum (e + a*u + b*v - y)^2, e, a, b >= 0`
/// by enumerating the active sets at the zero bounds.
fn solve_three(u: &[f64], v: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = y.len() as f64;
    let su: f64 = u.iter().sum();
    let sv: f64 = v.iter().sum();
    let sy: f64 = y.iter().sum();
    let suu: f64 = u.iter().map(|a| a * a).sum();
    let svv: f64 = v.iter().map(|a| a * a).sum();
    let suv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let suy: f64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
    let svy: f64 = v.iter().zip(y).map(|(a, b)| a * b).sum();

    let sse = |e: f64, a: f64, b: f64| -> f64 {
        u.iter()
            .zip(v)
            .zip(y)
            .map(|((&ui, &vi), &yi)| {
                let r = e + a * ui + b * vi - yi;
                r * r
            })
            .sum()
    };

    let solve3 = || -> Option<(f64, f64, f64)> {
        // Gaussian elimination on the 3x3 normal equations.
        let mut m = [
            [n, su, sv, sy],
            [su, suu, suv, suy],
            [sv, suv, svv, svy],
        ];
        for col in 0..3 {
            let mut pivot = col;
            for row in col + 1..3 {
                if m[row][col].abs() > m[pivot][col].abs() {
                    pivot = row;
                }
            }
            if m[pivot][col].abs() < 1e-300 {
                return None;
            }
            m.swap(col, pivot);
            for row in 0..3 {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    let pivot_row = m[col];
                    for (k, v) in m[row].iter_mut().enumerate().skip(col) {
                        *v -= f * pivot_row[k];
                    }
                }
            }
        }
        Some((m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]))
    };
    let solve2 = |p11: f64, p12: f64, p22: f64, q1: f64, q2: f64| -> Option<(f64, f64)> {
        let det = p11 * p22 - p12 * p12;
        if det.abs() < 1e-300 {
            return None;
        }
        Some(((q1 * p22 - q2 * p12) / det, (q2 * p11 - q1 * p12) / det))
    };

    let mut candidates: Vec<(f64, f64, f64)> = Vec::new();
    if let Some((e, a, b)) = solve3() {
        candidates.push((e, a, b));
    }
    if let Some((e, a)) = solve2(n, su, suu, sy, suy) {
        candidates.push((e, a, 0.0));
    }
    if let Some((e, b)) = solve2(n, sv, svv, sy, svy) {
        candidates.push((e, 0.0, b));
    }
    if let Some((a, b)) = solve2(suu, suv, svv, suy, svy) {
        candidates.push((0.0, a, b));
    }
    candidates.push((sy / n, 0.0, 0.0));
    if suu > 0.0 {
        candidates.push((0.0, suy / suu, 0.0));
    }
    if svv > 0.0 {
        candidates.push((0.0, 0.0, svy / svv));
    }
    candidates.push((0.0, 0.0, 0.0));

    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for (e, a, b) in candidates {
        if e < 0.0 || a < 0.0 || b < 0.0 {
            continue;
        }
        let s = sse(e, a, b);
        if s < best.0 {
            best = (s, e, a, b);
        }
    }
    (best.1, best.2, best.3, best.0)
}

fn joint_profile(
    nn: &[f64],
    dd: &[f64],
    y: &[f64],
    alpha: f64,
    beta: f64,
) -> (f64, f64, f64, f64) {
    let u: Vec<f64> = nn.iter().map(|&x| x.powf(-alpha)).collect();
    let v: Vec<f64> = dd.iter().map(|&x| x.powf(-beta)).collect();
    solve_three(&u, &v, y)
}

/// Fit the joint law `L = E + A * N^-alpha + B * D^-beta` over all points of
/// all curves. Requires at least 3 distinct model sizes with >= 4 points each.
pub fn fit_joint(curves: &[LossCurve]) -> Result<JointScalingFit> {
    for c in curves {
        c.validate()?;
        if c.points.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "curve '{}': joint fit needs >= 4 points per curve",
                c.label
            )));
        }
    }
    let mut sizes: Vec<f64> = curves.iter().map(|c| c.model_params).collect();
    sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(Error::InvalidInput(
            "joint fit is rank-deficient with a single model size".into(),
        ));
    }
    if sizes.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "joint fit needs >= 3 distinct model sizes, got {}",
            sizes.len()
        )));
    }

    let mut nn = Vec::new();
    let mut dd = Vec::new();
    let mut y = Vec::new();
    for c in curves {
        for &(d, l) in &c.points {
            nn.push(c.model_params);
            dd.push(d);
            y.push(l);
        }
    }

    let grid = log_grid(EXP_LO, EXP_HI, 32);
    let mut scored: Vec<(f64, f64, f64)> = Vec::with_capacity(grid.len() * grid.len());
    for &alpha in &grid {
        for &beta in &grid {
            let (_, _, _, sse) = joint_profile(&nn, &dd, &y, alpha, beta);
            scored.push((sse, alpha, beta));
        }
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let refine = |alpha0: f64, beta0: f64| -> (f64, f64, f64) {
        let mut alpha = alpha0;
        let mut beta = beta0;
        let mut sse = joint_profile(&nn, &dd, &y, alpha, beta).3;
        for _ in 0..60 {
            let (lo, hi) = ((alpha / 4.0).max(EXP_LO).ln(), (alpha * 4.0).min(EXP_HI).ln());
            let mut eval_a = |t: f64| joint_profile(&nn, &dd, &y, t.exp(), beta).3;
            alpha = golden_min(lo, hi, 120, &mut eval_a).exp();
            let (lo, hi) = ((beta / 4.0).max(EXP_LO).ln(), (beta * 4.0).min(EXP_HI).ln());
            let mut eval_b = |t: f64| joint_profile(&nn, &dd, &y, alpha, t.exp()).3;
            beta = golden_min(lo, hi, 120, &mut eval_b).exp();
            let new_sse = joint_profile(&nn, &dd, &y, alpha, beta).3;
            if sse - new_sse <= 1e-16 * sse.max(1e-300) {
                sse = new_sse;
                break;
            }
            sse = new_sse;
        }
        (alpha, beta, sse)
    };

    let mut best: Option<(f64, f64, f64)> = None;
    for &(_, a0, b0) in scored.iter().take(3) {
        let (alpha, beta, sse) = refine(a0, b0);
        if best.is_none_or(|(_, _, s)| sse < s) {
            best = Some((alpha, beta, sse));
        }
    }
    let (alpha, beta, _) = best.unwrap();
    let (e, a, b, sse) = joint_profile(&nn, &dd, &y, alpha, beta);
    let n = y.len() as f64;

    // Identifiability: the term must contribute meaningfully above the
    // data's own scale.
    let spread = |xs: &[f64], exp: f64, coef: f64| -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in xs {
            let t = coef * x.powf(-exp);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        hi - lo
    };
    let y_scale = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max).abs().max(1e-12);
    let alpha_identifiable = a > 0.0 && spread(&nn, alpha, a) > 1e-9 * y_scale;
    let beta_identifiable = b > 0.0 && spread(&dd, beta, b) > 1e-9 * y_scale;

    Ok(JointScalingFit {
        e,
        a,
        alpha,
        b,
        beta,
        rmse: (sse / n).sqrt(),
        alpha_identifiable,
        beta_identifiable,
    })
}

/// The compute-optimal trade-off pair `(alpha * A, beta * B)`.
pub fn tradeoff_coefficients(fit: &JointScalingFit) -> (f64, f64) {
    (fit.alpha * fit.a, fit.beta * fit.b)
}

/// Predicted loss of a joint fit at `(n, d)`.
pub fn predicted_loss(fit: &JointScalingFit, n: f64, d: f64) -> f64 {
    fit.e + fit.a * n.powf(-fit.alpha) + fit.b * d.powf(-fit.beta)
}

/// Minimize the joint law subject to `6 * N * D = C`.
///
/// The optimality condition `alpha A N^-alpha = beta B D^-beta` has a unique
/// root because its log form is strictly decreasing in `ln N`; a bisection
/// root search in `ln N` pins it to machine precision.
pub fn compute_optimal_allocation(fit: &JointScalingFit, c: f64) -> Result<(f64, f64, f64)> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("compute budget must be positive, got {c}")));
    }
    if !(fit.alpha > 0.0 && fit.beta > 0.0 && fit.a > 0.0 && fit.b > 0.0) {
        return Err(Error::InvalidInput(
            "corner solution: compute-optimal allocation needs alpha, A, beta, B all \
             positive"
                .into(),
        ));
    }
    let log_c6 = (c / 6.0).ln();
    // g(ln N) = ln(alpha A) - alpha ln N - ln(beta B) + beta (ln(C/6) - ln N)
    let g = |ln_n: f64| -> f64 {
        (fit.alpha * fit.a).ln() - fit.alpha * ln_n - (fit.beta * fit.b).ln()
            + fit.beta * (log_c6 - ln_n)
    };
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    // Expand the bracket outward until it straddles the root.
    let mut step = 1.0;
    while g(lo) < 0.0 {
        lo -= step;
        step *= 2.0;
        if lo < -1e6 {
            return Err(Error::InvalidInput("allocation root search diverged".into()));
        }
    }
    step = 1.0;
    while g(hi) > 0.0 {
        hi += step;
        step *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidInput("allocation root search diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ln_n = 0.5 * (lo + hi);
    let n = ln_n.exp();
    let d = c / (6.0 * n);
    Ok((n, d, predicted_loss(fit, n, d)))
}

/// Data volume multiplier that halves the data-dependent loss term:
/// `2^(1/beta)`.
pub fn data_multiplier_for_half_loss(beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    Ok(2.0f64.powf(1.0 / beta))
}

#[derive(Serialize, Deserialize)]
struct CurveRecord {
    model_params: f64,
    tokens: f64,
    loss: f64,
}

fn group_curves(records: Vec<CurveRecord>) -> Result<Vec<LossCurve>> {
    let mut order: Vec<f64> = Vec::new();
    for r in &records {
        if !order.contains(&r.model_params) {
            order.push(r.model_params);
        }
    }
    let mut curves = Vec::new();
    for n in order {
        let mut points: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.model_params == n)
            .map(|r| (r.tokens, r.loss))
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let curve = LossCurve { model_params: n, label: format!("N={n:.3e}"), points };
        curve.validate()?;
        curves.push(curve);
    }
    Ok(curves)
}

/// Delimited curve input: header `model_params,tokens,loss`, one point per row.
pub fn read_curves_delimited(path: &Path) -> Result<Vec<LossCurve>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file, expected header"))?;
    if header.trim_end_matches('\r') != "model_params,tokens,loss" {
        return Err(Error::parse(
            path,
            1,
            format!("expected header 'model_params,tokens,loss', got '{header}'"),
        ));
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, idx + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        let parse = |s: &str, name: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(path, idx + 1, format!("bad {name} '{s}'")))
        };
        records.push(CurveRecord {
            model_params: parse(fields[0], "model_params")?,
            tokens: parse(fields[1], "tokens")?,
            loss: parse(fields[2], "loss")?,
        });
    }
    group_curves(records)
}

/// JSON-lines curve input: `{"model_params": .., "tokens": .., "loss": ..}`.
pub fn read_curves_jsonl(path: &Path) -> Result<Vec<LossCurve>> {
    group_curves(jsonl::read_jsonl(path)?)
}

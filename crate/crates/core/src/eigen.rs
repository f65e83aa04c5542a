//! Bound states of the gravitational slit.
//!
//! Inside the well the wave function is a combination of Ai(s − λ) and
//! Bi(s − λ). The eigenvalue conditions are written without division and
//! rooted on a λ grid whose spacing follows the WKB level density; roots are
//! then refined by bisection.
//!
//! Wall values are not read off the wave function directly: for a
//! gravitational state the combination Ai − S·Bi near s = h is the small
//! difference of two exponentially large terms. Instead the Wronskian
//! Ai·Bi' − Ai'·Bi = 1/π is used to express the wall derivatives through
//! Bi(−λ) and Bi(h − λ), which are evaluated in log space.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;

use crate::airy::{airy_eval, airy_scaled};
use crate::error::{Error, Result};
use crate::scales::WellConfig;

const LN_03: f64 = -1.203_972_804_325_936;
const MAX_BISECTIONS: usize = 200;
const SCAN_CELLS_PER_LEVEL: f64 = 4.0;
const DEFAULT_MAX_STATES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateKind {
    Gravitational,
    SquareWell,
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateKind::Gravitational => "gravitational",
            StateKind::SquareWell => "square_well",
        })
    }
}

/// How the normalization integral treats the wave function under the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Integral over the slit only.
    #[default]
    Interior,
    /// Adds the exponential tails outside the slit.
    WithTails,
}

/// Which boundary conditions produced a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WellModel {
    Infinite,
    Finite(Normalization),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundState {
    pub n: usize,
    pub lambda: f64,
    pub s: f64,
    pub a: f64,
    pub log_b: f64,
    pub log_c: f64,
    pub beta: f64,
    pub kind: StateKind,
    pub model: WellModel,
    /// Scale-free residual of the eigenvalue condition at `lambda`.
    pub residual: f64,
}

impl BoundState {
    pub fn kappa(&self, uc: f64) -> f64 {
        (uc - self.lambda).sqrt()
    }

    /// ln of the wall coefficient seen by the rough plate.
    pub fn log_wall(&self, geometry: crate::scales::Geometry) -> f64 {
        match geometry {
            crate::scales::Geometry::Direct => self.log_b,
            crate::scales::Geometry::Inverse => self.log_c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelLadder {
    pub states: Vec<BoundState>,
    pub config: WellConfig,
    pub total_expected: usize,
}

/// One level of the well with impenetrable walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfiniteWellLevel {
    pub lambda: f64,
    pub s: f64,
    pub a: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
struct Walls {
    s: f64,
    a: f64,
    log_b: f64,
    log_c: f64,
    /// ln of (ψ'(h)/ψ'(0))² for the infinite well, (ψ(h)/ψ(0))² for the finite one.
    log_ratio: f64,
}

/// Semiclassical single-wall eigenvalue (3π/4·(2n − 1/2))^(2/3).
pub fn semiclassical_single_wall(n: usize) -> f64 {
    (0.75 * PI * (2.0 * n as f64 - 0.5)).powf(2.0 / 3.0)
}

/// Estimated number of bound levels, (h/π)·sqrt(uc).
pub fn level_count_estimate(h: f64, uc: f64) -> usize {
    (h / PI * uc.sqrt()).round() as usize
}

/// ∫ sqrt(λ − s) ds over the classically allowed part of [0, h].
fn wkb_phase(lambda: f64, h: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let top = (lambda - h).max(0.0);
    2.0 / 3.0 * (lambda.powf(1.5) - top.powf(1.5))
}

/// Walls described by their decay constant; `None` is an impenetrable wall.
#[derive(Clone, Copy)]
struct Barrier {
    h: Option<f64>,
    uc: Option<f64>,
}

impl Barrier {
    fn k(&self, lambda: f64) -> Option<f64> {
        self.uc.map(|uc| (uc - lambda).max(0.0).sqrt())
    }

    /// Monotone level-density coordinate used to place the scan grid.
    fn grid_coordinate(&self, lambda: f64) -> f64 {
        let h = self.h.unwrap_or(f64::INFINITY);
        let mut n = wkb_phase(lambda, h) / PI;
        if let Some(k) = self.k(lambda) {
            let q0 = lambda.max(0.0).sqrt();
            n += (FRAC_PI_2 - k.atan2(q0)) / PI;
            if lambda > h {
                n += (FRAC_PI_2 - k.atan2((lambda - h).sqrt())) / PI;
            }
        }
        n
    }

    /// WKB estimate of the (real-valued) level index at λ.
    fn wkb_index(&self, lambda: f64) -> f64 {
        let h = self.h.unwrap_or(f64::INFINITY);
        let phase = |q: f64| match self.k(lambda) {
            Some(k) => k.atan2(q),
            None => FRAC_PI_2,
        };
        let left = phase(lambda.max(0.0).sqrt());
        let right = if lambda > h {
            phase((lambda - h).sqrt())
        } else {
            FRAC_PI_4
        };
        (wkb_phase(lambda, h) - left - right) / PI + 1.0
    }

    fn invert_grid(&self, target: f64, from: f64) -> f64 {
        let mut lo = from;
        let mut hi = from.max(1.0);
        while self.grid_coordinate(hi) < target {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.grid_coordinate(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        hi
    }
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: &F, mut lo: f64, mut hi: f64, mut flo: f64) -> Result<f64> {
    for _ in 0..MAX_BISECTIONS {
        let tol = 1e-12_f64.max(4.0 * f64::EPSILON * hi.abs());
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence {
        what: format!("bisection on [{lo}, {hi}]"),
        iterations: MAX_BISECTIONS,
    })
}

/// Roots of `f` in increasing order, at most `n_max`, below `lambda_max`.
fn scan_roots<F: Fn(f64) -> Result<f64>>(
    f: &F,
    barrier: Barrier,
    n_max: usize,
    lambda_max: f64,
    cells_per_level: f64,
) -> Result<Vec<f64>> {
    let step = 1.0 / cells_per_level;
    let mut roots = Vec::new();
    let mut lo = 0.0;
    let mut flo = f(lo)?;
    let mut target = step;
    while roots.len() < n_max && lo < lambda_max {
        let hi = barrier.invert_grid(target, lo).min(lambda_max);
        target += step;
        let fhi = f(hi)?;
        if (fhi > 0.0) != (flo > 0.0) || fhi == 0.0 {
            roots.push(bisect(f, lo, hi, flo)?);
        }
        lo = hi;
        flo = fhi;
    }
    Ok(roots)
}

/// Check every root against the WKB index; a miss means a cell held two roots.
fn roots_consistent(roots: &[f64], barrier: Barrier) -> Option<usize> {
    roots
        .iter()
        .enumerate()
        .find(|(i, &l)| (barrier.wkb_index(l) - (i + 1) as f64).abs() > 0.6)
        .map(|(i, _)| i + 1)
}

fn scan_checked<F: Fn(f64) -> Result<f64>>(
    f: &F,
    barrier: Barrier,
    n_max: usize,
    lambda_max: f64,
) -> Result<Vec<f64>> {
    let roots = scan_roots(f, barrier, n_max, lambda_max, SCAN_CELLS_PER_LEVEL)?;
    if roots_consistent(&roots, barrier).is_none() {
        return Ok(roots);
    }
    let roots = scan_roots(f, barrier, n_max, lambda_max, 2.0 * SCAN_CELLS_PER_LEVEL)?;
    match roots_consistent(&roots, barrier) {
        None => Ok(roots),
        Some(n) => Err(Error::Bracketing(format!(
            "level {n} at lambda = {} is inconsistent with the level count after refinement",
            roots[n - 1]
        ))),
    }
}

/// Roots of Ai(−λ) = 0.
pub fn solve_single_wall(n_max: usize) -> Result<Vec<f64>> {
    if n_max == 0 {
        return Err(Error::validation("n_max", 0, ">= 1"));
    }
    let f = |l: f64| Ok(airy_eval(-l)?.ai);
    let barrier = Barrier { h: None, uc: None };
    scan_checked(&f, barrier, n_max, f64::INFINITY)
}

/// Ai(−λ)Bi(h−λ) − Bi(−λ)Ai(h−λ), divided by Bi(h−λ) when that is positive.
fn infinite_condition(lambda: f64, h: f64) -> Result<(f64, f64)> {
    let a0 = airy_eval(-lambda)?;
    let x = h - lambda;
    let env = a0.ai.hypot(a0.bi);
    if x > 0.0 {
        let s = airy_scaled(x)?;
        let ratio = s.ai / s.bi * (-2.0 * s.zeta).exp();
        Ok((a0.ai - a0.bi * ratio, env * (1.0 + ratio.abs())))
    } else {
        let p = airy_eval(x)?;
        Ok((a0.ai * p.bi - a0.bi * p.ai, env * p.ai.hypot(p.bi)))
    }
}

fn infinite_walls(lambda: f64, h: f64) -> Result<Walls> {
    let a0 = airy_eval(-lambda)?;
    let x = h - lambda;
    // ψ̃ = Bi(−λ)Ai(s−λ) − Ai(−λ)Bi(s−λ) has ψ̃'(0) = −1/π exactly.
    let (log_rho, s) = if x > 1.0 {
        let sc = airy_scaled(x)?;
        let log_bi_x = sc.bi.ln() + sc.zeta;
        let ratio = sc.ai / sc.bi * (-2.0 * sc.zeta).exp();
        let s = if log_bi_x >= a0.bi.abs().ln() { ratio } else { a0.ai / a0.bi };
        (2.0 * (a0.bi.abs().ln() - log_bi_x), s)
    } else {
        let p = airy_eval(x)?;
        let dpsi_h = a0.bi * p.dai - a0.ai * p.dbi;
        let s = if p.bi.abs() >= a0.bi.abs() { p.ai / p.bi } else { a0.ai / a0.bi };
        (2.0 * (PI * dpsi_h.abs()).ln(), s)
    };
    let rho = log_rho.exp();
    let log_one_minus = (-rho).ln_1p();
    Ok(Walls {
        s,
        a: PI * PI * a0.bi * a0.bi / (1.0 - rho),
        log_b: LN_03 + log_rho - log_one_minus,
        log_c: LN_03 - log_one_minus,
        log_ratio: log_rho,
    })
}

/// Levels of the well with impenetrable walls at s = 0 and s = h.
pub fn solve_infinite_well(h: f64, n_max: usize) -> Result<Vec<InfiniteWellLevel>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::validation("h", h, "finite value > 0"));
    }
    if n_max == 0 {
        return Err(Error::validation("n_max", 0, ">= 1"));
    }
    let f = |l: f64| Ok(infinite_condition(l, h)?.0);
    let barrier = Barrier { h: Some(h), uc: None };
    let roots = scan_checked(&f, barrier, n_max, f64::INFINITY)?;
    roots
        .into_iter()
        .map(|lambda| {
            let w = infinite_walls(lambda, h)?;
            let (c, env) = infinite_condition(lambda, h)?;
            Ok(InfiniteWellLevel {
                lambda,
                s: w.s,
                a: w.a,
                residual: c.abs() / env,
            })
        })
        .collect()
}

/// Eliminated matching condition for the finite well and its scale.
fn finite_condition(lambda: f64, cfg: &WellConfig) -> Result<(f64, f64)> {
    let k = cfg.kappa(lambda);
    let a0 = airy_eval(-lambda)?;
    let q = a0.dbi - k * a0.bi;
    let p = a0.dai - k * a0.ai;
    let x = cfg.h - lambda;
    let hyp = p.hypot(q);
    if x > 0.0 {
        let s = airy_scaled(x)?;
        let r = (s.dai + k * s.ai) / (s.dbi + k * s.bi) * (-2.0 * s.zeta).exp();
        Ok((r * q - p, hyp * (1.0 + r.abs())))
    } else {
        let e = airy_eval(x)?;
        let top_a = e.dai + k * e.ai;
        let top_b = e.dbi + k * e.bi;
        Ok((top_a * q - p * top_b, hyp * (top_a.abs() + top_b.abs())))
    }
}

fn finite_walls(lambda: f64, cfg: &WellConfig, norm: Normalization) -> Result<Walls> {
    let k = cfg.kappa(lambda);
    let a0 = airy_eval(-lambda)?;
    let q = a0.dbi - k * a0.bi;
    let p = a0.dai - k * a0.ai;
    let x = cfg.h - lambda;
    // ψ̃ = Q·Ai(s−λ) − P·Bi(s−λ) has ψ̃(0) = 1/π and ψ̃'(0) = k/π exactly.
    let (log_psi_h, s) = if x > 1.0 {
        let sc = airy_scaled(x)?;
        let den = sc.dbi + k * sc.bi;
        let s = (sc.dai + k * sc.ai) / den * (-2.0 * sc.zeta).exp();
        (q.abs().ln() - PI.ln() - den.ln() - sc.zeta, s)
    } else {
        let e = airy_eval(x)?;
        let top_b = e.dbi + k * e.bi;
        let s = if top_b.abs() >= q.abs() { (e.dai + k * e.ai) / top_b } else { p / q };
        ((q * e.ai - p * e.bi).abs().ln(), s)
    };
    let log_sigma = 2.0 * (PI.ln() + log_psi_h);
    let sigma = log_sigma.exp();
    // π²∫ψ̃² over the slit, from d/ds[(s−λ)ψ² − ψ'²] = ψ².
    let mut d = cfg.uc - (cfg.uc - cfg.h) * sigma;
    if norm == Normalization::WithTails {
        d += (1.0 + sigma) / (2.0 * k);
    }
    let ln_k2 = 2.0 * k.ln();
    Ok(Walls {
        s,
        a: PI * PI * q * q / d,
        log_b: LN_03 + ln_k2 + log_sigma - d.ln(),
        log_c: LN_03 + ln_k2 - d.ln(),
        log_ratio: log_sigma,
    })
}

fn classify(lambda: f64, h: f64) -> StateKind {
    if lambda < h {
        StateKind::Gravitational
    } else {
        StateKind::SquareWell
    }
}

fn state_from(n: usize, lambda: f64, w: Walls, cfg: &WellConfig, model: WellModel, residual: f64) -> BoundState {
    BoundState {
        n,
        lambda,
        s: w.s,
        a: w.a,
        log_b: w.log_b,
        log_c: w.log_c,
        beta: (cfg.e - lambda).sqrt(),
        kind: classify(lambda, cfg.h),
        model,
        residual,
    }
}

/// Ladder of the lowest `n_max` levels of the impenetrable well, as
/// [`BoundState`]s carrying the configuration's beam energy.
pub fn infinite_well_ladder(cfg: &WellConfig, n_max: usize) -> Result<LevelLadder> {
    let levels = solve_infinite_well(cfg.h, n_max)?;
    let states = levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let w = infinite_walls(l.lambda, cfg.h)?;
            Ok(state_from(i + 1, l.lambda, w, cfg, WellModel::Infinite, l.residual))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelLadder {
        states,
        config: *cfg,
        total_expected: level_count_estimate(cfg.h, cfg.uc),
    })
}

/// Default ladder size, min(estimated level count, 200).
pub fn default_n_max(cfg: &WellConfig) -> usize {
    level_count_estimate(cfg.h, cfg.uc).clamp(1, DEFAULT_MAX_STATES)
}

pub fn solve_finite_well(cfg: &WellConfig, n_max: usize) -> Result<LevelLadder> {
    solve_finite_well_with(cfg, n_max, Normalization::Interior)
}

pub fn solve_finite_well_with(cfg: &WellConfig, n_max: usize, norm: Normalization) -> Result<LevelLadder> {
    if n_max == 0 {
        return Err(Error::validation("n_max", 0, ">= 1"));
    }
    let f = |l: f64| Ok(finite_condition(l, cfg)?.0);
    let barrier = Barrier {
        h: Some(cfg.h),
        uc: Some(cfg.uc),
    };
    let roots = scan_checked(&f, barrier, n_max, cfg.uc)?;
    let states = roots
        .into_iter()
        .filter(|&l| l < cfg.uc)
        .enumerate()
        .map(|(i, lambda)| {
            let w = finite_walls(lambda, cfg, norm)?;
            let (c, scale) = finite_condition(lambda, cfg)?;
            Ok(state_from(i + 1, lambda, w, cfg, WellModel::Finite(norm), c.abs() / scale))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelLadder {
        states,
        config: *cfg,
        total_expected: level_count_estimate(cfg.h, cfg.uc),
    })
}

/// Number of finite-well levels found by scanning all the way to the barrier top.
pub fn bracketed_level_count(cfg: &WellConfig) -> Result<usize> {
    let f = |l: f64| Ok(finite_condition(l, cfg)?.0);
    let barrier = Barrier {
        h: Some(cfg.h),
        uc: Some(cfg.uc),
    };
    let mut count = 0;
    let mut lo = 0.0;
    let mut flo = f(lo)?;
    let mut target = 1.0 / SCAN_CELLS_PER_LEVEL;
    while lo < cfg.uc {
        let hi = barrier.invert_grid(target, lo).min(cfg.uc);
        target += 1.0 / SCAN_CELLS_PER_LEVEL;
        let fhi = f(hi)?;
        if (fhi > 0.0) != (flo > 0.0) && hi < cfg.uc {
            count += 1;
        }
        lo = hi;
        flo = fhi;
    }
    Ok(count)
}

/// (ln b, ln c) for a state, recomputed from its eigenvalue.
pub fn wall_coefficients(state: &BoundState, cfg: &WellConfig) -> Result<(f64, f64)> {
    let w = match state.model {
        WellModel::Infinite => infinite_walls(state.lambda, cfg.h)?,
        WellModel::Finite(norm) => finite_walls(state.lambda, cfg, norm)?,
    };
    Ok((w.log_b, w.log_c))
}

/// First-order shift of an impenetrable-well level when the walls drop to
/// height uc: δλ = −a(D0² + Dh²)/k with D the wall derivatives.
pub fn finite_barrier_shift(lambda_bar: f64, h: f64, uc: f64) -> Result<f64> {
    if lambda_bar.is_nan() || uc.is_nan() || lambda_bar >= uc {
        return Err(Error::domain("finite_barrier_shift", "lambda must lie below uc"));
    }
    let w = infinite_walls(lambda_bar, h)?;
    let rho = w.log_ratio.exp();
    Ok(-(1.0 + rho) / ((1.0 - rho) * (uc - lambda_bar).sqrt()))
}

/// Deep square-well eigenvalue with the finite-barrier correction,
/// λ̄(1 − 4/(h·sqrt(uc))), λ̄ = π²n²/h².
pub fn deep_square_well_eigenvalue(n: usize, h: f64, uc: f64) -> f64 {
    let lb = (PI * n as f64 / h).powi(2);
    lb * (1.0 - 4.0 / (h * uc.sqrt()))
}

/// l0·ψ² on either wall of a square-well state with walls of height uc
/// (gravity neglected inside).
pub fn square_well_wall_value(lambda: f64, cfg: &WellConfig) -> Result<f64> {
    if !(lambda > cfg.h && lambda < cfg.uc) {
        return Err(Error::domain(
            "square_well_wall_value",
            format!("lambda = {lambda} must satisfy h = {} < lambda < uc = {}", cfg.h, cfg.uc),
        ));
    }
    let q = lambda.sqrt();
    let k = cfg.kappa(lambda);
    let s = q / k;
    let qh = q * cfg.h;
    let (sn, cs) = (2.0 * qh).sin_cos();
    let inside = (2.0 * (qh + s + qh * s * s) - 2.0 * s * cs - (1.0 - s * s) * sn) / (4.0 * q);
    Ok(s * s / (s * s / k + inside))
}

/// Deep-level limit of [`square_well_wall_value`], (2/h)(λ/uc).
pub fn square_well_wall_value_deep(lambda: f64, cfg: &WellConfig) -> f64 {
    2.0 / cfg.h * lambda / cfg.uc
}

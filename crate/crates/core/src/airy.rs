//! Airy functions Ai, Bi and their derivatives on the real line.
//!
//! For |x| >= 8 the standard asymptotic expansions are summed up to the
//! smallest term. Inside (-8, 8) values come from a table of anchors at the
//! integers, continued to x with one Taylor step of the Airy equation
//! y'' = x y. The anchors are built once: Ai on [0, 8] by stepping backward
//! from the asymptotic region (the stable direction for the decaying
//! solution), Bi on [0, 8] and both functions on [-8, 0] by stepping away
//! from the exact values at the origin.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const AI0: f64 = 0.355_028_053_887_817_2;
pub const DAI0: f64 = -0.258_819_403_792_806_8;
pub const BI0: f64 = 0.614_926_627_446_000_7;
pub const DBI0: f64 = 0.448_288_357_353_826_4;

const ASYMPTOTIC_EDGE: f64 = 8.0;
const BACKWARD_START: f64 = 12.0;
const MAX_TAYLOR_TERMS: usize = 80;
const MAX_ASYMPTOTIC_TERMS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiryPair {
    pub ai: f64,
    pub bi: f64,
    pub dai: f64,
    pub dbi: f64,
}

impl AiryPair {
    pub fn wronskian(&self) -> f64 {
        self.ai * self.dbi - self.dai * self.bi
    }
}

/// Exponentially scaled values. For x > 0, `ai`/`dai` carry a factor e^zeta
/// and `bi`/`dbi` a factor e^-zeta with zeta = (2/3) x^(3/2); for x <= 0
/// zeta is 0 and the values are unscaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledAiry {
    pub ai: f64,
    pub bi: f64,
    pub dai: f64,
    pub dbi: f64,
    pub zeta: f64,
}

pub fn airy_eval(x: f64) -> Result<AiryPair> {
    if !x.is_finite() {
        return Err(Error::domain("airy_eval", format!("non-finite x = {x}")));
    }
    if x.abs() < ASYMPTOTIC_EDGE {
        return Ok(taylor_branch(x));
    }
    if x < 0.0 {
        return Ok(asymptotic_negative(x));
    }
    let s = asymptotic_positive(x);
    let grow = s.zeta.exp();
    let p = AiryPair {
        ai: s.ai / grow,
        dai: s.dai / grow,
        bi: s.bi * grow,
        dbi: s.dbi * grow,
    };
    if !p.bi.is_finite() || !p.dbi.is_finite() {
        return Err(Error::Overflow {
            what: "airy_eval (Bi)",
            x,
        });
    }
    Ok(p)
}

pub fn airy_scaled(x: f64) -> Result<ScaledAiry> {
    if !x.is_finite() {
        return Err(Error::domain("airy_scaled", format!("non-finite x = {x}")));
    }
    if x >= ASYMPTOTIC_EDGE {
        return Ok(asymptotic_positive(x));
    }
    let p = airy_eval(x)?;
    if x <= 0.0 {
        return Ok(ScaledAiry {
            ai: p.ai,
            bi: p.bi,
            dai: p.dai,
            dbi: p.dbi,
            zeta: 0.0,
        });
    }
    let zeta = zeta_of(x);
    let e = zeta.exp();
    Ok(ScaledAiry {
        ai: p.ai * e,
        dai: p.dai * e,
        bi: p.bi / e,
        dbi: p.dbi / e,
        zeta,
    })
}

/// ln|Ai(x)| and the sign of Ai(x), for x >= 0.
pub fn airy_ai_log(x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain("airy_ai_log", format!("requires finite x >= 0, got {x}")));
    }
    let s = airy_scaled(x)?;
    Ok((s.ai.ln() - s.zeta, 1.0))
}

/// ln Bi(x) for x >= 0 (Bi is positive there).
pub fn airy_bi_log(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain("airy_bi_log", format!("requires finite x >= 0, got {x}")));
    }
    let s = airy_scaled(x)?;
    Ok(s.bi.ln() + s.zeta)
}

fn zeta_of(x: f64) -> f64 {
    2.0 / 3.0 * x.abs().powf(1.5)
}

/// u_k and v_k coefficients of the asymptotic expansions.
fn asymptotic_coefficients() -> &'static [(f64, f64)] {
    static COEFFS: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let mut out = Vec::with_capacity(MAX_ASYMPTOTIC_TERMS);
        let mut u = 1.0;
        out.push((1.0, 1.0));
        for k in 1..MAX_ASYMPTOTIC_TERMS {
            let kf = k as f64;
            u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
                / ((2.0 * kf - 1.0) * 216.0 * kf);
            let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
            out.push((u, v));
        }
        out
    })
}

/// Number of terms to keep: stop before the terms start growing.
fn optimal_terms(zeta: f64) -> usize {
    let c = asymptotic_coefficients();
    let mut best = 1;
    let mut prev = f64::INFINITY;
    let mut zk = 1.0;
    for (k, &(u, _)) in c.iter().enumerate() {
        let t = u.abs() / zk;
        if t > prev || t < 1e-18 {
            break;
        }
        prev = t;
        best = k + 1;
        zk *= zeta;
    }
    best
}

pub(crate) fn asymptotic_positive(x: f64) -> ScaledAiry {
    let zeta = zeta_of(x);
    let c = asymptotic_coefficients();
    let n = optimal_terms(zeta);
    let (mut sa, mut sda, mut sb, mut sdb) = (0.0, 0.0, 0.0, 0.0);
    let mut zk = 1.0;
    for (k, &(u, v)) in c.iter().take(n).enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sa += sign * u / zk;
        sda += sign * v / zk;
        sb += u / zk;
        sdb += v / zk;
        zk *= zeta;
    }
    let q = x.powf(0.25);
    let rpi = PI.sqrt();
    ScaledAiry {
        ai: sa / (2.0 * rpi * q),
        dai: -q * sda / (2.0 * rpi),
        bi: sb / (rpi * q),
        dbi: q * sdb / rpi,
        zeta,
    }
}

pub(crate) fn asymptotic_negative(x: f64) -> AiryPair {
    let z = -x;
    let zeta = zeta_of(z);
    let c = asymptotic_coefficients();
    let n = optimal_terms(zeta);
    // P, Q from even/odd u terms; R, T from even/odd v terms.
    let (mut p, mut qq, mut r, mut t) = (0.0, 0.0, 0.0, 0.0);
    let mut zk = 1.0;
    for (k, &(u, v)) in c.iter().take(n).enumerate() {
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * u / zk;
            r += sign * v / zk;
        } else {
            qq += sign * u / zk;
            t += sign * v / zk;
        }
        zk *= zeta;
    }
    let (sn, cs) = (zeta - FRAC_PI_4).sin_cos();
    let q4 = z.powf(0.25);
    let rpi = PI.sqrt();
    AiryPair {
        ai: (cs * p + sn * qq) / (rpi * q4),
        dai: q4 * (sn * r - cs * t) / rpi,
        bi: (-sn * p + cs * qq) / (rpi * q4),
        dbi: q4 * (cs * r + sn * t) / rpi,
    }
}

/// One Taylor step of y'' = x y from x0 by dx, for a value/derivative pair.
fn taylor_step(x0: f64, y: f64, dy: f64, dx: f64) -> (f64, f64) {
    let scale = y.abs() + dy.abs() * dx.abs() + f64::MIN_POSITIVE;
    // c[k-1], c[k], c[k+1] rolling window
    let mut cm1 = y;
    let mut c0 = dy;
    let mut c1 = 0.5 * x0 * y;
    let mut sum = y + dy * dx;
    let mut dsum = dy;
    let mut pow = dx; // dx^(k-1) for the term c_k with k = 2 below
    let mut small = 0;
    for k in 2..MAX_TAYLOR_TERMS {
        let kf = k as f64;
        let term = c1 * pow * dx;
        sum += term;
        dsum += kf * c1 * pow;
        pow *= dx;
        if term.abs() < 1e-18 * scale {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
        // c_{k+1} = (x0 c_{k-1} + c_{k-2}) / ((k+1) k)
        let next = (x0 * c0 + cm1) / ((kf + 1.0) * kf);
        cm1 = c0;
        c0 = c1;
        c1 = next;
    }
    (sum, dsum)
}

/// Anchor values (ai, dai, bi, dbi) at the integers -8..=8.
fn anchors() -> &'static [[f64; 4]; 17] {
    static TABLE: OnceLock<[[f64; 4]; 17]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0.0; 4]; 17];
        let idx = |x: i32| (x + 8) as usize;
        const H: f64 = 0.25;

        // Ai on [0, 8], marching backward from the asymptotic region.
        let start = asymptotic_positive(BACKWARD_START);
        let e = (-start.zeta).exp();
        let (mut y, mut dy) = (start.ai * e, start.dai * e);
        let mut x = BACKWARD_START;
        let steps = ((BACKWARD_START / H).round()) as usize;
        for _ in 0..steps {
            let (ny, ndy) = taylor_step(x, y, dy, -H);
            y = ny;
            dy = ndy;
            x -= H;
            let xi = x.round();
            if (x - xi).abs() < 1e-12 && (1.0..=ASYMPTOTIC_EDGE).contains(&xi) {
                t[idx(xi as i32)][0] = y;
                t[idx(xi as i32)][1] = dy;
            }
        }

        // Bi on [0, 8] forward from the origin.
        let (mut y, mut dy) = (BI0, DBI0);
        let mut x = 0.0;
        for _ in 0..(8.0 / H) as usize {
            let (ny, ndy) = taylor_step(x, y, dy, H);
            y = ny;
            dy = ndy;
            x += H;
            let xi = x.round();
            if (x - xi).abs() < 1e-12 {
                t[idx(xi as i32)][2] = y;
                t[idx(xi as i32)][3] = dy;
            }
        }

        // Both on [-8, 0] from the origin.
        let (mut a, mut da, mut b, mut db) = (AI0, DAI0, BI0, DBI0);
        let mut x = 0.0;
        for _ in 0..(8.0 / H) as usize {
            let (na, nda) = taylor_step(x, a, da, -H);
            let (nb, ndb) = taylor_step(x, b, db, -H);
            a = na;
            da = nda;
            b = nb;
            db = ndb;
            x -= H;
            let xi = x.round();
            if (x - xi).abs() < 1e-12 {
                t[idx(xi as i32)] = [a, da, b, db];
            }
        }

        t[idx(0)] = [AI0, DAI0, BI0, DBI0];
        t
    })
}

pub(crate) fn taylor_branch(x: f64) -> AiryPair {
    let n = x.round().clamp(-ASYMPTOTIC_EDGE, ASYMPTOTIC_EDGE);
    let a = anchors()[(n as i32 + 8) as usize];
    let dx = x - n;
    let (ai, dai) = taylor_step(n, a[0], a[1], dx);
    let (bi, dbi) = taylor_step(n, a[2], a[3], dx);
    AiryPair { ai, bi, dai, dbi }
}

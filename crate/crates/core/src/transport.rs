//! Level populations under interstate scattering and direct absorption.
//!
//! With line densities N_j and velocities β_j the balance reads
//! dN_j/dt = Σ_k W_jk (N_k/β_k − N_j/β_j) − D_j N_j, i.e. dN/dt = −M N with
//! M = K B⁻¹ + D, K = diag(Σ_k W_jk) − W, B = diag(β).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::roughness::RateSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// N_j = N/Z.
    Uniform,
    /// N_j ∝ β_j, stationary under scattering alone.
    Equilibrium,
}

impl fmt::Display for InitialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialKind::Uniform => "uniform",
            InitialKind::Equilibrium => "equilibrium",
        })
    }
}

impl FromStr for InitialKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InitialKind::Uniform),
            "equilibrium" => Ok(InitialKind::Equilibrium),
            _ => Err(Error::validation("init", s, "uniform | equilibrium")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDistribution {
    pub kind: InitialKind,
    pub total: f64,
}

impl InitialDistribution {
    pub fn uniform(total: f64) -> Self {
        InitialDistribution {
            kind: InitialKind::Uniform,
            total,
        }
    }

    pub fn equilibrium(total: f64) -> Self {
        InitialDistribution {
            kind: InitialKind::Equilibrium,
            total,
        }
    }

    pub fn populations(&self, betas: &[f64]) -> Vec<f64> {
        let z = betas.len() as f64;
        match self.kind {
            InitialKind::Uniform => vec![self.total / z; betas.len()],
            InitialKind::Equilibrium => {
                let s: f64 = betas.iter().sum();
                betas.iter().map(|b| self.total * b / s).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub n: Vec<f64>,
    pub t: f64,
    /// Population removed so far (absorption and pruned levels).
    pub lost: f64,
}

impl PopulationState {
    pub fn total(&self) -> f64 {
        self.n.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportOptions {
    pub rtol: f64,
    /// Absolute tolerance relative to the initial total.
    pub atol: f64,
    /// Levels with t/τ above this are emptied before integrating.
    pub prune_threshold: f64,
    pub max_steps: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            rtol: 1e-9,
            atol: 1e-15,
            prune_threshold: 50.0,
            max_steps: 2_000_000,
        }
    }
}

/// Dense rate matrix M with dN/dt = −M N.
pub fn rate_matrix(rates: &RateSystem) -> DMatrix<f64> {
    let n = rates.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let row: f64 = (0..n).filter(|&k| k != j).map(|k| rates.interstate[j][k]).sum();
        m[(j, j)] = row / rates.betas[j] + rates.direct[j];
        for k in 0..n {
            if k != j {
                m[(j, k)] = -rates.interstate[j][k] / rates.betas[k];
            }
        }
    }
    m
}

fn validate(rates: &RateSystem) -> Result<()> {
    let n = rates.len();
    if rates.interstate.len() != n || rates.direct.len() != n || rates.interstate.iter().any(|r| r.len() != n) {
        return Err(Error::validation("rates", "shape", "square kernel matching the level count"));
    }
    for j in 0..n {
        if !(rates.betas[j].is_finite() && rates.betas[j] > 0.0) {
            return Err(Error::validation("beta", rates.betas[j], "finite value > 0"));
        }
        if !(rates.direct[j].is_finite() && rates.direct[j] >= 0.0) {
            return Err(Error::validation("direct rate", rates.direct[j], "finite value >= 0"));
        }
        if rates.interstate[j].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation("interstate rate", j + 1, "finite values >= 0"));
        }
    }
    Ok(())
}

/// Populations at `t_final`.
pub fn evolve(rates: &RateSystem, init: InitialDistribution, t_final: f64) -> Result<PopulationState> {
    let mut out = evolve_sampled(rates, init, &[t_final], &TransportOptions::default())?;
    Ok(out.pop().expect("one sample"))
}

/// Populations at each of the ascending `times`. Pruning uses the last time.
pub fn evolve_sampled(
    rates: &RateSystem,
    init: InitialDistribution,
    times: &[f64],
    opts: &TransportOptions,
) -> Result<Vec<PopulationState>> {
    if !(init.total.is_finite() && init.total >= 0.0) {
        return Err(Error::validation("total", init.total, "finite value >= 0"));
    }
    evolve_from(rates, &init.populations(&rates.betas), times, opts)
}

/// [`evolve_sampled`] from explicit initial populations.
pub fn evolve_from(
    rates: &RateSystem,
    n0: &[f64],
    times: &[f64],
    opts: &TransportOptions,
) -> Result<Vec<PopulationState>> {
    validate(rates)?;
    if n0.len() != rates.len() || n0.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::validation("populations", "initial", "one finite value >= 0 per level"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("times", "sequence", "finite, >= 0, ascending"));
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    let active: Vec<usize> = (0..rates.len())
        .filter(|&j| rates.direct[j] * horizon <= opts.prune_threshold)
        .collect();
    let lost0: f64 = (0..rates.len()).filter(|j| !active.contains(j)).map(|j| n0[j]).sum();

    // Reduced matrix on the active levels; outflow into pruned levels stays on
    // the diagonal and is booked as loss.
    let full = rate_matrix(rates);
    let na = active.len();
    let m = DMatrix::from_fn(na, na, |a, b| full[(active[a], active[b])]);
    let loss_coeff: Vec<f64> = (0..na).map(|a| m.column(a).sum()).collect();

    let rhs = |y: &[f64], dy: &mut [f64]| {
        let mut lost_rate = 0.0;
        for a in 0..na {
            let mut s = 0.0;
            for b in 0..na {
                s -= m[(a, b)] * y[b];
            }
            dy[a] = s;
            lost_rate += loss_coeff[a] * y[a];
        }
        dy[na] = lost_rate;
    };

    let mut y: Vec<f64> = active.iter().map(|&j| n0[j]).collect();
    y.push(lost0);
    let scale = n0.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let mut t = 0.0;
    let mut h = None;
    let mut out = Vec::with_capacity(times.len());
    for &ts in times {
        if ts > t {
            h = Some(dopri5(&rhs, &mut y, t, ts, h, opts, scale, &active)?);
            t = ts;
        }
        let mut n = vec![0.0; rates.len()];
        for (a, &j) in active.iter().enumerate() {
            n[j] = y[a];
        }
        out.push(PopulationState { n, t: ts, lost: y[na] });
    }
    Ok(out)
}

// Dormand-Prince 5(4) coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive DOPRI5 from t0 to t1 in place; returns the last accepted step size.
#[allow(clippy::too_many_arguments)]
fn dopri5<F: Fn(&[f64], &mut [f64])>(
    f: &F,
    y: &mut [f64],
    t0: f64,
    t1: f64,
    h0: Option<f64>,
    opts: &TransportOptions,
    scale: f64,
    levels: &[usize],
) -> Result<f64> {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let atol = opts.atol * scale;
    let mut t = t0;
    f(y, &mut k[0]);
    let mut h = h0.unwrap_or_else(|| {
        let rate = k[0].iter().zip(y.iter()).map(|(d, v)| d.abs() / (v.abs() + atol)).fold(0.0, f64::max);
        if rate > 0.0 {
            (0.01 / rate).min(t1 - t0)
        } else {
            t1 - t0
        }
    });
    let mut steps = 0;
    let mut worst = 0;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::Integration {
                level: levels.get(worst).map_or(0, |l| l + 1),
                t,
                reason: format!("step budget of {} exhausted (h = {h:e})", opts.max_steps),
            });
        }
        steps += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let stage = |tmp: &mut [f64], y: &[f64], k: &[Vec<f64>], coef: &[f64]| {
            for i in 0..n {
                let mut s = 0.0;
                for (c, kk) in coef.iter().zip(k) {
                    s += c * kk[i];
                }
                tmp[i] = y[i] + h * s;
            }
        };
        stage(&mut tmp, y, &k[..1], &[A21]);
        f(&tmp, &mut k[1]);
        stage(&mut tmp, y, &k[..2], &[A31, A32]);
        f(&tmp, &mut k[2]);
        stage(&mut tmp, y, &k[..3], &[A41, A42, A43]);
        f(&tmp, &mut k[3]);
        stage(&mut tmp, y, &k[..4], &[A51, A52, A53, A54]);
        f(&tmp, &mut k[4]);
        stage(&mut tmp, y, &k[..5], &[A61, A62, A63, A64, A65]);
        f(&tmp, &mut k[5]);
        for i in 0..n {
            ynew[i] = y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        f(&ynew, &mut k[6]);
        let mut err = 0.0f64;
        for i in 0..n {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            let r = (e / sc).abs();
            if r > err {
                err = r;
                worst = i;
            }
        }
        if !err.is_finite() {
            return Err(Error::Integration {
                level: levels.get(worst).map_or(0, |l| l + 1),
                t,
                reason: "non-finite error estimate".into(),
            });
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                h *= fac;
            }
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.1);
            if h <= f64::EPSILON * t.abs().max(t1) {
                return Err(Error::Integration {
                    level: levels.get(worst).map_or(0, |l| l + 1),
                    t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
        }
    }
    Ok(h)
}

/// One decay mode of dN/dt = −M N.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationMode {
    /// Decay rate 1/τ in s⁻¹.
    pub rate: f64,
    /// Right eigenvector of M, unit Euclidean norm.
    pub vector: Vec<f64>,
    /// Left eigenvector scaled so that left·vector = 1.
    pub adjoint: Vec<f64>,
    /// ‖M v − rate·v‖ / ‖v‖.
    pub residual: f64,
}

/// Maximum system size accepted by [`relaxation_spectrum`].
pub const MAX_SPECTRUM_SIZE: usize = 200;

/// The `k` slowest modes, ascending by rate.
///
/// M is similar to the symmetric matrix B^{-1/2} K B^{-1/2} + D, so the
/// spectrum is real and computed with a symmetric eigensolver.
pub fn relaxation_spectrum(rates: &RateSystem, k: usize) -> Result<Vec<RelaxationMode>> {
    validate(rates)?;
    let n = rates.len();
    if n > MAX_SPECTRUM_SIZE {
        return Err(Error::validation("levels", n, "<= 200"));
    }
    if k > n {
        return Err(Error::validation("k", k, "<= system size"));
    }
    let m = rate_matrix(rates);
    let sq: Vec<f64> = rates.betas.iter().map(|b| b.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * sq[j] / sq[i]);
    // symmetrize away rounding
    let st = s.transpose();
    s = (&s + st) * 0.5;
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, 10_000).ok_or_else(|| Error::Convergence {
        what: "symmetric eigensolver".into(),
        iterations: 10_000,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let m_norm = m.norm().max(1.0);
    let mut out = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let u = eig.eigenvectors.column(i);
        let mut v = DVector::from_fn(n, |j, _| sq[j] * u[j]);
        let mut w = DVector::from_fn(n, |j, _| u[j] / sq[j]);
        let vn = v.norm();
        v /= vn;
        w /= w.dot(&v);
        let rate = eig.eigenvalues[i];
        let residual = (&m * &v - &v * rate).norm();
        if residual > 1e-8 * m_norm {
            return Err(Error::Convergence {
                what: format!("relaxation mode {} (residual {residual:e})", out.len() + 1),
                iterations: 10_000,
            });
        }
        out.push(RelaxationMode {
            rate,
            vector: v.iter().copied().collect(),
            adjoint: w.iter().copied().collect(),
            residual,
        });
    }
    Ok(out)
}

/// N(t) = Σ_i (wᵢ·N(0)) e^{−rate_i t} vᵢ over the given modes.
pub fn reconstruct(modes: &[RelaxationMode], n0: &[f64], t: f64) -> Vec<f64> {
    let mut n = vec![0.0; n0.len()];
    for m in modes {
        let c: f64 = m.adjoint.iter().zip(n0).map(|(a, b)| a * b).sum::<f64>() * (-m.rate * t).exp();
        for (x, v) in n.iter_mut().zip(&m.vector) {
            *x += c * v;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn system(w: Vec<Vec<f64>>, direct: Vec<f64>, betas: Vec<f64>) -> RateSystem {
        RateSystem {
            interstate: w,
            direct,
            betas,
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn random_system(seed: &[f64], n: usize, absorb: bool) -> RateSystem {
        let mut it = seed.iter().cycle();
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = it.next().unwrap() * 50.0;
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        let direct = (0..n).map(|_| if absorb { it.next().unwrap() * 80.0 } else { 0.0 }).collect();
        let betas = (0..n).map(|_| 300.0 + 700.0 * it.next().unwrap()).collect();
        system(w, direct, betas)
    }

    /// Characteristic polynomial coefficients c_0..c_n of det(λI − M),
    /// leading coefficient first (Faddeev-LeVerrier).
    fn char_poly(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut c = vec![1.0];
        let mut mk = DMatrix::<f64>::zeros(n, n);
        let id = DMatrix::<f64>::identity(n, n);
        for k in 1..=n {
            mk = m * (&mk + &id * c[k - 1]);
            c.push(-mk.trace() / k as f64);
        }
        c
    }

    #[test]
    fn zero_rates_freeze() {
        let s = system(vec![vec![0.0; 3]; 3], vec![0.0; 3], vec![500.0, 600.0, 700.0]);
        let out = evolve(&s, InitialDistribution::uniform(3.0), 0.02).unwrap();
        assert_eq!(out.n, vec![1.0, 1.0, 1.0]);
        assert_eq!(out.lost, 0.0);
    }

    #[test]
    fn single_level_decay() {
        for rate in [1.0, 37.0, 900.0] {
            let s = system(vec![vec![0.0]], vec![rate], vec![800.0]);
            let out = evolve(&s, InitialDistribution::uniform(1.0), 0.02).unwrap();
            let exact = (-rate * 0.02f64).exp();
            assert!((out.n[0] - exact).abs() < 1e-8, "rate {rate}: {} vs {exact}", out.n[0]);
            if rate * 0.02 < 1.0 {
                assert!((out.n[0] / exact - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pruning_counts_as_loss() {
        let w = vec![vec![0.0, 10.0], vec![10.0, 0.0]];
        let s = system(w, vec![0.0, 1e5], vec![900.0, 800.0]);
        let out = evolve(&s, InitialDistribution::uniform(2.0), 0.02).unwrap();
        assert_eq!(out.n[1], 0.0);
        assert!((out.n[0] + out.lost - 2.0).abs() < 1e-12);
        let exact = (-10.0 / 900.0 * 0.02f64).exp();
        assert!((out.n[0] / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn two_level_closed_form() {
        let (w, d1, d2, b1, b2) = (40.0, 3.0, 11.0, 950.0, 870.0);
        let s = system(vec![vec![5.0, w], vec![w, 2.0]], vec![d1, d2], vec![b1, b2]);
        let modes = relaxation_spectrum(&s, 2).unwrap();
        let a = w / b1 + d1;
        let d = w / b2 + d2;
        let bc = (w / b2) * (w / b1);
        let tr = a + d;
        let disc = ((a - d).powi(2) + 4.0 * bc).sqrt();
        let l1 = (tr - disc) / 2.0;
        let l2 = (tr + disc) / 2.0;
        assert!((modes[0].rate - l1).abs() < 1e-12 * l2);
        assert!((modes[1].rate - l2).abs() < 1e-12 * l2);
    }

    #[test]
    fn diagonal_spectrum_is_direct_rates() {
        let s = system(vec![vec![0.0; 3]; 3], vec![7.0, 2.0, 5.0], vec![1.0, 2.0, 3.0]);
        let rates: Vec<f64> = relaxation_spectrum(&s, 3).unwrap().iter().map(|m| m.rate).collect();
        assert_eq!(rates, vec![2.0, 5.0, 7.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let s = system(vec![vec![0.0]], vec![-1.0], vec![1.0]);
        assert!(evolve(&s, InitialDistribution::uniform(1.0), 1.0).unwrap_err().is_validation());
        let s = system(vec![vec![0.0]], vec![1.0], vec![1.0]);
        assert!(relaxation_spectrum(&s, 2).is_err());
        assert!(evolve_sampled(&s, InitialDistribution::uniform(1.0), &[1.0, 0.5], &TransportOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn conservation_and_equilibrium(seed in prop::collection::vec(0.0f64..1.0, 64), n in 2usize..12) {
            let s = random_system(&seed, n, false);
            let u = evolve(&s, InitialDistribution::uniform(1.0), 0.02).unwrap();
            prop_assert!((u.total() - 1.0).abs() < 1e-9);
            prop_assert!(u.n.iter().all(|&x| x >= -1e-12));
            let e0 = InitialDistribution::equilibrium(1.0).populations(&s.betas);
            let e = evolve(&s, InitialDistribution::equilibrium(1.0), 0.02).unwrap();
            for (a, b) in e.n.iter().zip(&e0) {
                prop_assert!((a - b).abs() < 1e-9 * b.max(1e-300) + 1e-15);
            }
        }

        #[test]
        fn mass_balance_with_absorption(seed in prop::collection::vec(0.0f64..1.0, 64), n in 1usize..10) {
            let s = random_system(&seed, n, true);
            let times: Vec<f64> = (1..=10).map(|i| i as f64 * 2e-3).collect();
            let traj = evolve_sampled(&s, InitialDistribution::uniform(1.0), &times, &TransportOptions::default()).unwrap();
            let mut prev = 1.0;
            for p in &traj {
                prop_assert!((p.total() + p.lost - 1.0).abs() < 1e-9);
                prop_assert!(p.total() <= prev + 1e-12);
                prop_assert!(p.n.iter().all(|&x| x >= -1e-12));
                prev = p.total();
            }
        }

        #[test]
        fn spectrum_reconstructs_integration(seed in prop::collection::vec(0.0f64..1.0, 64), n in 1usize..20) {
            let s = random_system(&seed, n, true);
            let modes = relaxation_spectrum(&s, n).unwrap();
            let n0 = InitialDistribution::uniform(1.0).populations(&s.betas);
            let opts = TransportOptions { prune_threshold: f64::INFINITY, ..Default::default() };
            let direct = evolve_sampled(&s, InitialDistribution::uniform(1.0), &[0.02], &opts).unwrap().pop().unwrap();
            let rec = reconstruct(&modes, &n0, 0.02);
            let tot: f64 = direct.total();
            for (a, b) in rec.iter().zip(&direct.n) {
                prop_assert!((a - b).abs() < 1e-6 * tot.max(1e-12), "{} vs {}", a, b);
            }
        }

        #[test]
        fn decay_rates_nonnegative_char_poly(seed in prop::collection::vec(0.0f64..1.0, 64), n in 1usize..=10) {
            let s = random_system(&seed, n, true);
            let m = rate_matrix(&s);
            let modes = relaxation_spectrum(&s, n).unwrap();
            prop_assert!(modes.iter().all(|md| md.rate >= -1e-9 * m.norm()));
            let c = char_poly(&m);
            // p(−x) for x > 0: (−1)^n Σ c_k x^{n−k}(−1)^k... all coefficients
            // (−1)^k c_k share one sign ⇒ no negative eigenvalues (Descartes).
            let signed: Vec<f64> = c.iter().enumerate().map(|(k, v)| if k % 2 == 0 { *v } else { -v }).collect();
            let tol = 1e-9 * signed.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            prop_assert!(signed.iter().all(|&v| v >= -tol));
            // and the computed rates are its roots
            for md in &modes {
                let mut p = 0.0;
                let mut scale = 0.0;
                for v in &c {
                    p = p * md.rate + v;
                    scale = scale * md.rate.abs() + v.abs();
                }
                prop_assert!(p.abs() <= 1e-7 * scale);
            }
        }
    }
}

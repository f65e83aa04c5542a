//! Exit neutron count n(h) and per-level survival curves.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::absorption::{direct_rate_with_f, kinematic_factor};
use crate::eigen::solve_finite_well;
use crate::error::{Error, Result};
use crate::roughness::{ExponentMode, RateSystem, RoughnessSpec};
use crate::scales::{Geometry, PhysicalScales, WellConfig};
use crate::transport::{evolve_sampled, InitialDistribution, InitialKind, TransportOptions};

pub const DEFAULT_LEVELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountParams {
    pub scales: PhysicalScales,
    pub chi: f64,
    pub spec: RoughnessSpec,
    pub geometry: Geometry,
}

impl CountParams {
    pub fn new(scales: PhysicalScales, chi: f64, spec: RoughnessSpec, geometry: Geometry) -> Result<Self> {
        // validates χ and the barrier once, up front
        WellConfig::new(1.0, scales.uc, chi, geometry)?;
        Ok(CountParams {
            scales,
            chi,
            spec,
            geometry,
        })
    }

    pub fn well(&self, h: f64) -> Result<WellConfig> {
        WellConfig::new(h, self.scales.uc, self.chi, self.geometry)
    }

    pub fn with_geometry(&self, geometry: Geometry) -> Self {
        CountParams { geometry, ..*self }
    }
}

/// Named parameter sets for the published count figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// χ = 0.15, η = r = 0.01, full exponent.
    Fig10,
    /// χ = 0.15, η = r = 0.015, full exponent (the values quoted in the text).
    Fig10Text,
    /// χ = 0.15, r = 0.015, η = 30r, suppressed exponent.
    Fig11,
    /// χ = 0.15, r = 0.015, η/r ∈ {1, 2, 3, 4, 5, 6, 8}.
    Fig14,
}

pub const FIG14_RATIOS: [f64; 7] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0];

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig10, Preset::Fig10Text, Preset::Fig11, Preset::Fig14];

    /// Parameter sets with a short label each (several for `Fig14`).
    pub fn params(&self, scales: PhysicalScales) -> Result<Vec<(String, CountParams)>> {
        let one = |eta: f64, r: f64, mode: ExponentMode| -> Result<CountParams> {
            let spec = RoughnessSpec::new(eta, r)?.with_mode(mode);
            CountParams::new(scales, 0.15, spec, Geometry::Direct)
        };
        Ok(match self {
            Preset::Fig10 => vec![("fig10".into(), one(0.01, 0.01, ExponentMode::Full)?)],
            Preset::Fig10Text => vec![("fig10text".into(), one(0.015, 0.015, ExponentMode::Full)?)],
            Preset::Fig11 => vec![("fig11".into(), one(0.45, 0.015, ExponentMode::Suppressed)?)],
            Preset::Fig14 => FIG14_RATIOS
                .iter()
                .map(|&k| {
                    let spec = RoughnessSpec::new(k * 0.015, 0.015)?;
                    Ok((format!("fig14_eta{k}r"), CountParams::new(scales, 0.15, spec, Geometry::Direct)?))
                })
                .collect::<Result<_>>()?,
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Fig10 => "fig10",
            Preset::Fig10Text => "fig10text",
            Preset::Fig11 => "fig11",
            Preset::Fig14 => "fig14",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::validation("preset", s, "fig10 | fig10text | fig11 | fig14"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountCurve {
    pub h_grid: Vec<f64>,
    /// per_level[j][i]: survival of level j+1 at h_grid[i].
    pub per_level: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub params: CountParams,
}

/// 0.5, 0.55, ..., 12.
pub fn default_h_grid() -> Vec<f64> {
    (0..=230).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Ascending grid a, a+step, ... up to b inclusive (within rounding).
pub fn uniform_grid(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite() && step.is_finite() && step > 0.0 && b >= a) {
        return Err(Error::validation("grid", format!("{a}:{b}:{step}"), "A:B:STEP with B >= A and STEP > 0"));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + step * i as f64).collect())
}

fn check_grid(h_grid: &[f64], n_levels: usize) -> Result<()> {
    if n_levels == 0 {
        return Err(Error::validation("levels", 0, ">= 1"));
    }
    if h_grid.is_empty() || h_grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) || h_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("grid", "h values", "positive, strictly ascending, non-empty"));
    }
    Ok(())
}

fn assemble(h_grid: &[f64], rows: Vec<Vec<f64>>, n_levels: usize, params: CountParams) -> CountCurve {
    let mut per_level = vec![Vec::with_capacity(h_grid.len()); n_levels];
    let mut total = Vec::with_capacity(h_grid.len());
    for row in rows {
        total.push(row.iter().sum());
        for (j, level) in per_level.iter_mut().enumerate() {
            level.push(row.get(j).copied().unwrap_or(0.0));
        }
    }
    CountCurve {
        h_grid: h_grid.to_vec(),
        per_level,
        total,
        params,
    }
}

/// n_j(h) = exp(−t/τ_j) from direct absorption alone; n(h) = Σ_j n_j(h).
pub fn count_direct(params: &CountParams, h_grid: &[f64], n_levels: usize) -> Result<CountCurve> {
    check_grid(h_grid, n_levels)?;
    let f = kinematic_factor(&params.spec, &params.well(h_grid[0])?)?;
    let rows = h_grid
        .par_iter()
        .map(|&h| {
            let cfg = params.well(h)?;
            let lad = solve_finite_well(&cfg, n_levels)?;
            lad.states
                .iter()
                .map(|s| direct_rate_with_f(s, &params.spec, &params.scales, &cfg, f).map(|d| (-d.t_over_tau).exp()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(h_grid, rows, n_levels, *params))
}

/// Count from the full population transport over the lowest `n_levels`
/// states, each starting with population 1 (uniform) or with populations
/// ∝ β_j summing to `n_levels` (equilibrium).
pub fn count_transport(
    params: &CountParams,
    h_grid: &[f64],
    n_levels: usize,
    init: InitialKind,
    opts: &TransportOptions,
) -> Result<CountCurve> {
    check_grid(h_grid, n_levels)?;
    let t = params.scales.flight_time;
    let rows = h_grid
        .par_iter()
        .map(|&h| {
            let cfg = params.well(h)?;
            let lad = solve_finite_well(&cfg, n_levels)?;
            let sys = RateSystem::build(&lad, &params.spec, &params.scales)?;
            let dist = InitialDistribution {
                kind: init,
                total: lad.states.len() as f64,
            };
            let mut out = evolve_sampled(&sys, dist, &[t], opts)?;
            Ok(out.pop().expect("one sample").n)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(h_grid, rows, n_levels, *params))
}

/// Direct-absorption curves for the direct and the inverse geometry.
pub fn geometry_compare(params: &CountParams, h_grid: &[f64], n_levels: usize) -> Result<(CountCurve, CountCurve)> {
    let d = count_direct(&params.with_geometry(Geometry::Direct), h_grid, n_levels)?;
    let i = count_direct(&params.with_geometry(Geometry::Inverse), h_grid, n_levels)?;
    Ok((d, i))
}

/// A stretch of the total count curve where it is nearly flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub h_start: f64,
    pub h_end: f64,
    /// Mean of n(h) over the stretch.
    pub level: f64,
}

impl Plateau {
    pub fn width(&self) -> f64 {
        self.h_end - self.h_start
    }

    /// Within 0.25 of an integer.
    pub fn near_integer(&self) -> bool {
        (self.level - self.level.round()).abs() <= 0.25
    }
}

/// Contiguous runs where |dn/dh| < `slope_tol` and 0.5 < n < n_levels − 0.5,
/// with dn/dh from central differences on the grid.
pub fn plateaus(curve: &CountCurve, slope_tol: f64) -> Vec<Plateau> {
    let h = &curve.h_grid;
    let n = &curve.total;
    let m = h.len();
    let top = curve.per_level.len() as f64 - 0.5;
    if m < 2 {
        return Vec::new();
    }
    let slope = |i: usize| {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(m - 1));
        (n[b] - n[a]) / (h[b] - h[a])
    };
    let flat: Vec<bool> = (0..m).map(|i| slope(i).abs() < slope_tol && n[i] > 0.5 && n[i] < top).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < m {
        if !flat[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < m && flat[i] {
            i += 1;
        }
        let run = &n[start..i];
        out.push(Plateau {
            h_start: h[start],
            h_end: h[i - 1],
            level: run.iter().sum::<f64>() / run.len() as f64,
        });
    }
    out
}

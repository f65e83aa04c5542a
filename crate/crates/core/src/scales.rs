//! Physical scales and the dimensionless well description.
//!
//! Lengths are measured in l0 = ħ^(2/3) (2 m² g)^(-1/3), energies in
//! e0 = m g l0 and vertical velocities in v0 = sqrt(2 g l0).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};

/// Inputs for [`make_scales`]. Defaults are the standard neutron constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleInputs {
    pub hbar: f64,
    pub mass: f64,
    pub g: f64,
    pub uc_joule: f64,
    pub flight_time: f64,
    pub eta: f64,
}

impl Default for ScaleInputs {
    fn default() -> Self {
        ScaleInputs {
            hbar: 1.054_571_817e-34,
            mass: 1.674_927_498_04e-27,
            g: 9.806_65,
            uc_joule: 1.34e-26,
            flight_time: 2e-2,
            eta: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalScales {
    pub hbar: f64,
    pub neutron_mass: f64,
    pub g: f64,
    pub l0: f64,
    pub e0: f64,
    pub v0: f64,
    pub uc_joule: f64,
    pub uc: f64,
    pub flight_time: f64,
    pub eta: f64,
    /// 1/τ0 at the stored η, in s⁻¹ (zero when η = 0).
    pub inv_tau0: f64,
}

impl PhysicalScales {
    /// τ0 in seconds; infinite when η = 0.
    pub fn tau0(&self) -> f64 {
        1.0 / self.inv_tau0
    }

    /// 1/τ0 for another roughness amplitude (it is quadratic in η).
    pub fn inv_tau0_for(&self, eta: f64) -> f64 {
        inv_tau0_per_eta2(self.hbar, self.neutron_mass, self.l0, self.v0) * eta * eta
    }

    pub fn length_to_si(&self, s: f64) -> f64 {
        s * self.l0
    }
    pub fn length_from_si(&self, z: f64) -> f64 {
        z / self.l0
    }
    pub fn energy_to_si(&self, u: f64) -> f64 {
        u * self.e0
    }
    pub fn energy_from_si(&self, e: f64) -> f64 {
        e / self.e0
    }
    pub fn velocity_to_si(&self, b: f64) -> f64 {
        b * self.v0
    }
    pub fn velocity_from_si(&self, v: f64) -> f64 {
        v / self.v0
    }
}

fn inv_tau0_per_eta2(hbar: f64, m: f64, l0: f64, v0: f64) -> f64 {
    (2.0 * PI).sqrt() / (4.0 * m * m) * hbar * hbar / (l0.powi(3) * v0)
}

fn require_positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(key, v, "finite value > 0"))
    }
}

pub fn make_scales(inputs: ScaleInputs) -> Result<PhysicalScales> {
    require_positive("hbar", inputs.hbar)?;
    require_positive("mass", inputs.mass)?;
    require_positive("g", inputs.g)?;
    require_positive("Uc_J", inputs.uc_joule)?;
    require_positive("flight_time_s", inputs.flight_time)?;
    if !(inputs.eta.is_finite() && inputs.eta >= 0.0) {
        return Err(Error::validation("eta", inputs.eta, "finite value >= 0"));
    }
    let m = inputs.mass;
    let l0 = inputs.hbar.powf(2.0 / 3.0) * (2.0 * m * m * inputs.g).powf(-1.0 / 3.0);
    let e0 = m * inputs.g * l0;
    let v0 = (2.0 * inputs.g * l0).sqrt();
    Ok(PhysicalScales {
        hbar: inputs.hbar,
        neutron_mass: m,
        g: inputs.g,
        l0,
        e0,
        v0,
        uc_joule: inputs.uc_joule,
        uc: inputs.uc_joule / e0,
        flight_time: inputs.flight_time,
        eta: inputs.eta,
        inv_tau0: inv_tau0_per_eta2(inputs.hbar, m, l0, v0) * inputs.eta * inputs.eta,
    })
}

/// Dimensionless lateral velocity sqrt(e − λ).
pub fn beta(e: f64, lambda: f64) -> Result<f64> {
    if lambda.is_nan() || e.is_nan() || lambda > e {
        return Err(Error::domain("beta", format!("lambda = {lambda} exceeds e = {e}")));
    }
    Ok((e - lambda).sqrt())
}

/// Which plate is rough: `Direct` has the rough absorber on top at s = h,
/// `Inverse` has it at the bottom, s = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    Direct,
    Inverse,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Geometry::Direct => "direct",
            Geometry::Inverse => "inverse",
        })
    }
}

impl FromStr for Geometry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Geometry::Direct),
            "inverse" => Ok(Geometry::Inverse),
            _ => Err(Error::validation("geometry", s, "direct | inverse")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellConfig {
    pub h: f64,
    pub uc: f64,
    pub e: f64,
    pub chi: f64,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigWarning {
    ChiOutsideRange(f64),
}

impl fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigWarning::ChiOutsideRange(c) => {
                write!(f, "chi = {c} is outside the experimental range 0.15 <= chi < 1")
            }
        }
    }
}

impl WellConfig {
    /// Build from slit height, barrier and χ = uc/e.
    pub fn new(h: f64, uc: f64, chi: f64, geometry: Geometry) -> Result<Self> {
        require_positive("h", h)?;
        require_positive("uc", uc)?;
        if !(chi.is_finite() && chi > 0.0 && chi < 1.0) {
            return Err(Error::validation("chi", chi, "0 < chi < 1 (e must exceed uc)"));
        }
        let cfg = WellConfig {
            h,
            uc,
            e: uc / chi,
            chi,
            geometry,
        };
        for w in cfg.warnings() {
            warn!("{w}");
        }
        Ok(cfg)
    }

    /// True when sqrt(e) lies in the experimental window 373..932.
    pub fn in_beam_window(&self) -> bool {
        (373.0..=932.0).contains(&self.e.sqrt())
    }

    pub fn warnings(&self) -> Vec<ConfigWarning> {
        let mut out = Vec::new();
        if self.chi < 0.15 {
            out.push(ConfigWarning::ChiOutsideRange(self.chi));
        }
        out
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        require_positive("h", h)?;
        Ok(WellConfig { h, ..*self })
    }

    pub fn with_geometry(&self, geometry: Geometry) -> Self {
        WellConfig { geometry, ..*self }
    }

    /// Decay constant sqrt(uc − λ) under the barrier.
    pub fn kappa(&self, lambda: f64) -> f64 {
        (self.uc - lambda).sqrt()
    }
}

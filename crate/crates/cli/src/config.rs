//! Run settings: defaults, then a key = value file, then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gravwell::count::Preset;
use gravwell::roughness::ExponentMode;
use gravwell::scales::{Geometry, ScaleInputs};
use gravwell::transport::InitialKind;

/// Every key accepted in a config file, with its accepted range.
pub const KEYS: &[(&str, &str)] = &[
    ("hbar", "finite value > 0 (J s)"),
    ("mass", "finite value > 0 (kg)"),
    ("g", "finite value > 0 (m/s^2)"),
    ("Uc_J", "finite value > 0 (J)"),
    ("flight_time_s", "finite value > 0 (s)"),
    ("h", "finite value > 0"),
    ("grid", "A:B:STEP with 0 < A <= B, STEP > 0"),
    ("chi", "0 < chi < 1"),
    ("eta", "finite value > 0"),
    ("r", "finite value > 0"),
    ("geometry", "direct | inverse | both"),
    ("mode", "full | suppressed"),
    ("levels", "integer >= 1"),
    ("preset", "fig10 | fig10text | fig11 | fig14"),
    ("out", "file path"),
    ("threads", "integer >= 1"),
    ("init", "uniform | equilibrium"),
    ("t_final", "finite value >= 0 (s)"),
    ("samples", "integer >= 2"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub key: String,
    pub value: String,
    pub expected: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {} = {:?} (accepted: {})", self.key, self.value, self.expected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryChoice {
    One(Geometry),
    Both,
}

impl GeometryChoice {
    pub fn list(&self) -> Vec<Geometry> {
        match self {
            GeometryChoice::One(g) => vec![*g],
            GeometryChoice::Both => vec![Geometry::Direct, Geometry::Inverse],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl FromStr for Grid {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse().map_err(|_| ())).collect::<Result<_, _>>()?;
        match parts[..] {
            [start, stop, step] if start.is_finite() && stop >= start && step > 0.0 && step.is_finite() => {
                Ok(Grid { start, stop, step })
            }
            _ => Err(()),
        }
    }
}

/// Fully validated settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scales: ScaleInputs,
    pub h: f64,
    pub grid: Option<Grid>,
    pub chi: f64,
    pub eta: f64,
    pub r: f64,
    pub geometry: GeometryChoice,
    /// None selects the mode from the aperture η/r.
    pub mode: Option<ExponentMode>,
    pub levels: usize,
    pub preset: Option<Preset>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub init: InitialKind,
    pub t_final: Option<f64>,
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scales: ScaleInputs::default(),
            h: 10.0,
            grid: None,
            chi: 0.15,
            eta: 0.01,
            r: 0.01,
            geometry: GeometryChoice::One(Geometry::Direct),
            mode: None,
            levels: 9,
            preset: None,
            out: None,
            threads: None,
            init: InitialKind::Uniform,
            t_final: None,
            samples: 11,
        }
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, Vec<FieldError>> {
    let mut map = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            _ => errors.push(FieldError {
                key: format!("line {}", i + 1),
                value: raw.to_string(),
                expected: "key = value".into(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(map)
    } else {
        Err(errors)
    }
}

struct Checker<'a> {
    map: &'a BTreeMap<String, String>,
    errors: Vec<FieldError>,
}

impl Checker<'_> {
    fn expected(key: &str) -> &'static str {
        KEYS.iter().find(|(k, _)| *k == key).map(|(_, e)| *e).unwrap_or("")
    }

    fn fail(&mut self, key: &str, value: &str) {
        self.errors.push(FieldError {
            key: key.into(),
            value: value.into(),
            expected: Self::expected(key).into(),
        });
    }

    fn get<T>(&mut self, key: &str, target: &mut T, parse: impl Fn(&str) -> Option<T>) {
        if let Some(v) = self.map.get(key) {
            match parse(v) {
                Some(x) => *target = x,
                None => self.fail(key, v),
            }
        }
    }

    fn float(&mut self, key: &str, target: &mut f64, ok: impl Fn(f64) -> bool) {
        self.get(key, target, |s| s.parse::<f64>().ok().filter(|x| x.is_finite() && ok(*x)));
    }

    fn count(&mut self, key: &str, target: &mut usize, min: usize) {
        self.get(key, target, |s| s.parse::<usize>().ok().filter(|&n| n >= min));
    }
}

impl RunConfig {
    /// Validate a merged key map; reports every bad or unknown key.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, Vec<FieldError>> {
        let mut c = RunConfig::default();
        let mut ck = Checker { map, errors: Vec::new() };
        for (k, v) in map {
            if !KEYS.iter().any(|(key, _)| key == k) {
                ck.errors.push(FieldError {
                    key: k.clone(),
                    value: v.clone(),
                    expected: "a known key".into(),
                });
            }
        }
        let pos = |x: f64| x > 0.0;
        ck.float("hbar", &mut c.scales.hbar, pos);
        ck.float("mass", &mut c.scales.mass, pos);
        ck.float("g", &mut c.scales.g, pos);
        ck.float("Uc_J", &mut c.scales.uc_joule, pos);
        ck.float("flight_time_s", &mut c.scales.flight_time, pos);
        ck.float("h", &mut c.h, pos);
        ck.float("chi", &mut c.chi, |x| x > 0.0 && x < 1.0);
        ck.float("eta", &mut c.eta, pos);
        ck.float("r", &mut c.r, pos);
        c.scales.eta = c.eta;
        ck.get("grid", &mut c.grid, |s| s.parse::<Grid>().ok().filter(|g| g.start > 0.0).map(Some));
        ck.get("geometry", &mut c.geometry, |s| match s {
            "both" => Some(GeometryChoice::Both),
            _ => s.parse().ok().map(GeometryChoice::One),
        });
        ck.get("mode", &mut c.mode, |s| s.parse().ok().map(Some));
        ck.count("levels", &mut c.levels, 1);
        ck.get("preset", &mut c.preset, |s| s.parse().ok().map(Some));
        ck.get("out", &mut c.out, |s| (!s.is_empty()).then(|| Some(PathBuf::from(s))));
        ck.get("threads", &mut c.threads, |s| s.parse::<usize>().ok().filter(|&n| n >= 1).map(Some));
        ck.get("init", &mut c.init, |s| s.parse().ok());
        ck.get("t_final", &mut c.t_final, |s| s.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0).map(Some));
        ck.count("samples", &mut c.samples, 2);
        if ck.errors.is_empty() {
            Ok(c)
        } else {
            Err(ck.errors)
        }
    }
}

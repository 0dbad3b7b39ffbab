//! Scenario files: one `key = value` per line, dotted section prefixes,
//! `#` comments. Every key is validated before anything is computed.
//!
//! Profiles are written `mu:index:amp:t0:x0:width` for one-form bumps and
//! `index:amp:t0:x0:width` for gauge parameters; several profiles are
//! separated by `;`. Positions and widths are in physical units.

use std::collections::BTreeMap;

use crate::background::Bump;
use crate::ppa::Parametrix;
use crate::states::ZeroModes;
use crate::{Error, Result};

pub const EXPERIMENTS: [&str; 13] = [
    "hadamard",
    "car",
    "moller",
    "tau-iso",
    "axioms",
    "ppa-d0",
    "ppa-d1",
    "obstruction-e",
    "anomaly",
    "calibrate",
    "ward",
    "polarization",
    "convergence",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupChoice {
    U1 { charge: f64 },
    Su2,
}

impl GroupChoice {
    pub fn n_gen(&self) -> usize {
        match self {
            GroupChoice::U1 { .. } => 1,
            GroupChoice::Su2 => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormBump {
    pub mu: usize,
    pub index: usize,
    pub bump: Bump,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeBump {
    pub index: usize,
    pub bump: Bump,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub algebra: f64,
    pub state: f64,
    pub car: f64,
    pub moller: f64,
    pub tau: f64,
    pub tau_onshell: f64,
    pub factorization: f64,
    pub source: f64,
    pub unitarity: f64,
    pub expansion: f64,
    pub d0: f64,
    /// None: max(1e-8, 10 h^2)
    pub tree: Option<f64>,
    pub one_loop: f64,
    pub anomaly: f64,
    pub calibration: f64,
    pub ward: f64,
    pub oracle: f64,
    pub order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            algebra: 1e-12,
            state: 1e-8,
            car: 1e-10,
            moller: 1e-10,
            tau: 1e-10,
            tau_onshell: 1e-9,
            factorization: 1e-10,
            source: 1e-9,
            unitarity: 1e-9,
            expansion: 1e-10,
            d0: 1e-8,
            tree: None,
            one_loop: 1e-9,
            anomaly: 1e-10,
            calibration: 1e-9,
            ward: 1e-6,
            oracle: 1e-9,
            order: 1.0,
        }
    }
}

/// Physical box and ladder for refinement studies.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub ladder: Vec<usize>,
    pub length: f64,
    pub duration: f64,
    pub width: f64,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement { ladder: vec![8, 16, 24], length: 8.0, duration: 6.0, width: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub dx: f64,
    pub wilson_r: f64,
    pub group: GroupChoice,
    pub a_t: Vec<f64>,
    pub a_x: Vec<f64>,
    pub mass: f64,
    /// bumps added on top of the constant background; the vacuum is built
    /// on the constant part and transported
    pub background_bumps: Vec<FormBump>,
    pub mass_bump: Option<Bump>,
    pub a: Option<Vec<FormBump>>,
    pub a_prime: Option<Vec<FormBump>>,
    pub c: Option<Vec<GaugeBump>>,
    pub probe_width: f64,
    pub experiments: Vec<String>,
    pub h: f64,
    pub richardson: bool,
    pub seed: u64,
    pub probes: usize,
    pub tau_pairs: usize,
    pub counterterm_radius: usize,
    pub unitary_contact: bool,
    pub parametrix: Parametrix,
    pub zero_modes: ZeroModes,
    pub refinement: Refinement,
    pub tol: Tolerances,
    pub out_dir: String,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".into(),
            nt: 16,
            nx: 16,
            dt: 0.3,
            dx: 1.0,
            wilson_r: 1.0,
            group: GroupChoice::U1 { charge: 1.0 },
            a_t: vec![0.0],
            a_x: vec![0.0],
            mass: 0.5,
            background_bumps: vec![],
            mass_bump: None,
            a: None,
            a_prime: None,
            c: None,
            probe_width: 0.15,
            experiments: vec!["car".into(), "hadamard".into()],
            h: 1e-3,
            richardson: true,
            seed: 7,
            probes: 50,
            tau_pairs: 20,
            counterterm_radius: crate::ppa::COUNTERTERM_RADIUS,
            unitary_contact: true,
            parametrix: Parametrix::Covariant,
            zero_modes: ZeroModes::Abort,
            refinement: Refinement::default(),
            tol: Tolerances::default(),
            out_dir: "reports".into(),
        }
    }
}

impl Scenario {
    pub fn tree_tol(&self) -> f64 {
        self.tol.tree.unwrap_or(1e-8f64.max(10.0 * self.h * self.h))
    }

    /// Default probe bumps: A early, c central, A' late.
    pub fn probe_a(&self) -> Vec<FormBump> {
        self.a.clone().unwrap_or_else(|| self.default_form(0.3, 0.4, [0.5, 0.3]))
    }

    pub fn probe_a_prime(&self) -> Vec<FormBump> {
        self.a_prime.clone().unwrap_or_else(|| self.default_form(0.7, 0.4, [0.7, -0.4]))
    }

    pub fn probe_c(&self) -> Vec<GaugeBump> {
        self.c.clone().unwrap_or_else(|| {
            let (t, x) = self.at(0.5, 0.45);
            vec![GaugeBump { index: 0, bump: Bump { amp: 0.6, t0: t, x0: x, width: self.probe_width } }]
        })
    }

    /// Grid point at fractions of the box, pulled in from the time ends so a
    /// probe of width `probe_width` (and its stencil) stays interior.
    fn at(&self, ft: f64, fx: f64) -> (f64, f64) {
        let mut t = (ft * (self.nt - 1) as f64).round() * self.dt;
        let reach = self.probe_width * (1e12f64).ln().sqrt();
        let (lo, hi) = (reach + 2.0 * self.dt, (self.nt as f64 - 3.0) * self.dt - reach);
        if lo <= hi {
            t = t.clamp(lo, hi);
        }
        let x = (fx * self.nx as f64).round() * self.dx;
        (t, x)
    }

    fn default_form(&self, ft: f64, fx: f64, amps: [f64; 2]) -> Vec<FormBump> {
        let (t, x) = self.at(ft, fx);
        let last = self.group.n_gen() - 1;
        let w = self.probe_width;
        vec![
            FormBump { mu: 1, index: 0, bump: Bump { amp: amps[0], t0: t, x0: x, width: w } },
            FormBump { mu: 0, index: last, bump: Bump { amp: amps[1], t0: t, x0: x + self.dx, width: w } },
        ]
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let mut s = Scenario::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut dt_line = None;
        let mut cfl = None;
        let mut group_kind: Option<(usize, String)> = None;
        let mut charge = None;
        let mut a_t = None;
        let mut a_x = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(cfg(line, format!("expected `key = value`, got `{body}`")));
            };
            let (key, v) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(cfg(line, format!("duplicate key `{key}` (first set on line {prev})")));
            }
            let e = |msg: String| cfg(line, format!("{key}: {msg}"));
            match key {
                "scenario.name" => {
                    if v.is_empty() || !v.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                        return Err(e("name must be non-empty [A-Za-z0-9._-]".into()));
                    }
                    s.name = v.into();
                }
                "lattice.nt" => s.nt = num(v).map_err(e)?,
                "lattice.nx" => s.nx = num(v).map_err(e)?,
                "lattice.dt" => {
                    s.dt = positive(v).map_err(e)?;
                    dt_line = Some(line);
                }
                "lattice.cfl" => cfl = Some((line, positive(v).map_err(e)?)),
                "lattice.dx" => s.dx = positive(v).map_err(e)?,
                "lattice.wilson_r" => s.wilson_r = num::<f64>(v).map_err(e)?,
                "group.kind" => group_kind = Some((line, v.to_ascii_lowercase())),
                "group.charge" => charge = Some((line, num::<f64>(v).map_err(e)?)),
                "background.a_t" => a_t = Some((line, list::<f64>(v).map_err(e)?)),
                "background.a_x" => a_x = Some((line, list::<f64>(v).map_err(e)?)),
                "background.mass" => s.mass = num(v).map_err(e)?,
                "background.bumps" => s.background_bumps = forms(v).map_err(e)?,
                "background.mass_bump" => s.mass_bump = Some(bump(&fields(v, 4).map_err(e)?)),
                "perturbation.a" => s.a = Some(forms(v).map_err(e)?),
                "perturbation.a_prime" => s.a_prime = Some(forms(v).map_err(e)?),
                "perturbation.width" => s.probe_width = positive(v).map_err(e)?,
                "gauge.c" => s.c = Some(gauges(v).map_err(e)?),
                "run.experiments" => s.experiments = experiments(v).map_err(e)?,
                "run.h" => s.h = positive(v).map_err(e)?,
                "run.richardson" => s.richardson = boolean(v).map_err(e)?,
                "run.seed" => s.seed = num(v).map_err(e)?,
                "run.probes" => s.probes = num(v).map_err(e)?,
                "run.tau_pairs" => s.tau_pairs = num(v).map_err(e)?,
                "run.counterterm_radius" => s.counterterm_radius = num(v).map_err(e)?,
                "run.unitary_contact" => s.unitary_contact = boolean(v).map_err(e)?,
                "run.parametrix" => {
                    s.parametrix = match v {
                        "covariant" => Parametrix::Covariant,
                        "fixed" => Parametrix::Fixed,
                        _ => return Err(e("expected covariant or fixed".into())),
                    }
                }
                "run.zero_modes" => {
                    s.zero_modes = match v {
                        "abort" => ZeroModes::Abort,
                        "split" => ZeroModes::Split,
                        _ => return Err(e("expected abort or split".into())),
                    }
                }
                "refine.ladder" => {
                    let l = list::<usize>(v).map_err(e)?;
                    if l.len() < 2 || l.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(e("need at least two increasing resolutions".into()));
                    }
                    s.refinement.ladder = l;
                }
                "refine.length" => s.refinement.length = positive(v).map_err(e)?,
                "refine.duration" => s.refinement.duration = positive(v).map_err(e)?,
                "refine.width" => s.refinement.width = positive(v).map_err(e)?,
                "output.dir" => s.out_dir = v.into(),
                _ => match key.strip_prefix("tol.") {
                    Some(t) => set_tol(&mut s.tol, t, v).map_err(e)?,
                    None => return Err(cfg(line, format!("unknown key `{key}`"))),
                },
            }
        }
        match (dt_line, cfl) {
            (Some(a), Some((b, _))) => return Err(cfg(a.max(b), "set either lattice.dt or lattice.cfl, not both".into())),
            (None, Some((_, c))) => s.dt = c * s.dx,
            _ => {}
        }
        if let Some((line, kind)) = group_kind {
            s.group = match kind.as_str() {
                "u1" => GroupChoice::U1 { charge: 1.0 },
                "su2" => GroupChoice::Su2,
                _ => return Err(cfg(line, format!("group.kind: expected u1 or su2, got `{kind}`"))),
            };
        }
        if let Some((line, q)) = charge {
            match &mut s.group {
                GroupChoice::U1 { charge } => *charge = q,
                GroupChoice::Su2 => return Err(cfg(line, "group.charge applies to u1 only".into())),
            }
        }
        let ng = s.group.n_gen();
        s.a_t = vec![0.0; ng];
        s.a_x = vec![0.0; ng];
        for (slot, given) in [(&mut s.a_t, a_t), (&mut s.a_x, a_x)] {
            if let Some((line, v)) = given {
                if v.len() != ng {
                    return Err(cfg(line, format!("expected {ng} Lie components, got {}", v.len())));
                }
                *slot = v;
            }
        }
        let check_index = |line: usize, idx: usize, what: &str| -> Result<()> {
            if idx >= ng {
                return Err(cfg(line, format!("{what}: Lie index {idx} out of range for {ng} generators")));
            }
            Ok(())
        };
        let ln = |k: &str| seen.get(k).copied().unwrap_or(0);
        for (key, f) in [("background.bumps", Some(&s.background_bumps)), ("perturbation.a", s.a.as_ref()), ("perturbation.a_prime", s.a_prime.as_ref())] {
            for b in f.into_iter().flatten() {
                check_index(ln(key), b.index, key)?;
            }
        }
        for b in s.c.iter().flatten() {
            check_index(ln("gauge.c"), b.index, "gauge.c")?;
        }
        if s.nt < 4 || s.nx < 2 {
            return Err(cfg(ln("lattice.nt").max(ln("lattice.nx")), "lattice needs nt >= 4 and nx >= 2".into()));
        }
        Ok(s)
    }
}

fn cfg(line: usize, msg: String) -> Error {
    Error::Config { line, msg }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn positive(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = num(v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got `{v}`"))
    }
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|x| num(x.trim())).collect()
}

fn fields(v: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let f: Vec<f64> = v.split(':').map(|x| num(x.trim())).collect::<std::result::Result<_, _>>()?;
    if f.len() != n {
        return Err(format!("expected {n} `:`-separated fields in `{v}`"));
    }
    if f[n - 1] <= 0.0 {
        return Err("bump width must be positive".into());
    }
    Ok(f)
}

fn bump(f: &[f64]) -> Bump {
    Bump { amp: f[0], t0: f[1], x0: f[2], width: f[3] }
}

fn index(x: f64, what: &str) -> std::result::Result<usize, String> {
    if x >= 0.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(format!("{what} must be a non-negative integer"))
    }
}

fn forms(v: &str) -> std::result::Result<Vec<FormBump>, String> {
    v.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let f = fields(p, 6)?;
            let mu = index(f[0], "direction")?;
            if mu > 1 {
                return Err("direction must be 0 (time) or 1 (space)".into());
            }
            Ok(FormBump { mu, index: index(f[1], "Lie index")?, bump: bump(&f[2..]) })
        })
        .collect()
}

fn gauges(v: &str) -> std::result::Result<Vec<GaugeBump>, String> {
    v.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let f = fields(p, 5)?;
            Ok(GaugeBump { index: index(f[0], "Lie index")?, bump: bump(&f[1..]) })
        })
        .collect()
}

pub fn experiments(v: &str) -> std::result::Result<Vec<String>, String> {
    let mut out: Vec<String> = vec![];
    for name in v.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        if !EXPERIMENTS.contains(&name) {
            return Err(format!("unknown experiment `{name}`"));
        }
        if !out.iter().any(|x| x == name) {
            out.push(name.into());
        }
    }
    if out.is_empty() {
        return Err("empty experiment list".into());
    }
    Ok(out)
}

fn set_tol(t: &mut Tolerances, key: &str, v: &str) -> std::result::Result<(), String> {
    let x: f64 = num(v)?;
    if !(x >= 0.0) {
        return Err("tolerance must be non-negative".into());
    }
    let slot = match key {
        "algebra" => &mut t.algebra,
        "state" => &mut t.state,
        "car" => &mut t.car,
        "moller" => &mut t.moller,
        "tau" => &mut t.tau,
        "tau_onshell" => &mut t.tau_onshell,
        "factorization" => &mut t.factorization,
        "source" => &mut t.source,
        "unitarity" => &mut t.unitarity,
        "expansion" => &mut t.expansion,
        "d0" => &mut t.d0,
        "tree" => {
            t.tree = Some(x);
            return Ok(());
        }
        "one_loop" => &mut t.one_loop,
        "anomaly" => &mut t.anomaly,
        "calibration" => &mut t.calibration,
        "ward" => &mut t.ward,
        "oracle" => &mut t.oracle,
        "order" => &mut t.order,
        _ => return Err("unknown tolerance".into()),
    };
    *slot = x;
    Ok(())
}

//! The named experiments. Each appends rows to a report; the context holds
//! the operators and states shared between them.

use std::sync::Arc;

use crate::background::{bump_gauge, bump_perturbation, d_bar, perturb, Background, Bump, GaugeGroup, GaugeParameter, Perturbation};
use crate::checks;
use crate::dirac::{Dirac, DiracParams};
use crate::funcalg::fields::LocalField;
use crate::lattice::Lattice;
use crate::moller::FdParams;
use crate::oracle;
use crate::ppa::{convergence_order, Bound, ConvergenceRow, CountertermKernel, CountertermSummary, LatticeSummary, Parametrix, Ppa, PpaReport, CONSERVING_FLOOR};
use crate::states::{check_hadamard, scattered_state, transport_state, vacuum_two_point, HadamardOptions, TwoPoint, VacuumParams};
use crate::{Error, Result, C64};

use super::config::{FormBump, GaugeBump, GroupChoice, Scenario};

pub struct Context {
    pub sc: Scenario,
    pub dirac: Arc<Dirac>,
    pub omega: Arc<TwoPoint>,
    pub h: Arc<TwoPoint>,
    pub a: Perturbation,
    pub a_prime: Perturbation,
    pub c: GaugeParameter,
    counterterm: Option<CountertermKernel>,
    changed: Option<Arc<Dirac>>,
}

fn group(g: GroupChoice) -> Arc<GaugeGroup> {
    match g {
        GroupChoice::U1 { charge } => GaugeGroup::u1(charge),
        GroupChoice::Su2 => GaugeGroup::su2(),
    }
}

fn form(bg: &Background, f: &[FormBump]) -> Perturbation {
    let p: Vec<(usize, usize, Bump)> = f.iter().map(|b| (b.mu, b.index, b.bump)).collect();
    bump_perturbation(bg, &p, None)
}

fn gauge(bg: &Background, g: &[GaugeBump]) -> GaugeParameter {
    let p: Vec<(usize, Bump)> = g.iter().map(|b| (b.index, b.bump)).collect();
    bump_gauge(bg, &p)
}

impl Context {
    pub fn new(sc: &Scenario) -> Result<Context> {
        let lat = Lattice::new(sc.nt, sc.nx, sc.dt, sc.dx)?;
        let bg = Background::constant(lat, group(sc.group), &sc.a_t, &sc.a_x, sc.mass)?;
        let params = DiracParams { wilson_r: sc.wilson_r, ..DiracParams::default() };
        let base = Dirac::new(&bg, &params)?;
        let vp = VacuumParams { zero_modes: sc.zero_modes, ..VacuumParams::default() };
        let w0 = Arc::new(vacuum_two_point(&base, &vp)?);
        let (dirac, omega) = if sc.background_bumps.is_empty() && sc.mass_bump.is_none() {
            (base, w0.clone())
        } else {
            let shape: Vec<(usize, usize, Bump)> = sc.background_bumps.iter().map(|b| (b.mu, b.index, b.bump)).collect();
            let x = bump_perturbation(&bg, &shape, sc.mass_bump.as_ref());
            let d = Dirac::new(&perturb(&bg, &x, 1.0)?, &params)?;
            let w = Arc::new(transport_state(&w0, &base, &d)?);
            (d, w)
        };
        let h = match sc.parametrix {
            Parametrix::Covariant => omega.clone(),
            Parametrix::Fixed => w0,
        };
        let bg = &dirac.bg;
        let (a, a_prime, c) = (form(bg, &sc.probe_a()), form(bg, &sc.probe_a_prime()), gauge(bg, &sc.probe_c()));
        if a.is_zero() || a_prime.is_zero() || c.c.iter().all(|&v| v == 0.0) {
            return Err(Error::Precondition("a probe profile vanishes on this lattice".into()));
        }
        Ok(Context { sc: sc.clone(), dirac, omega, h, a, a_prime, c, counterterm: None, changed: None })
    }

    pub fn summary(&self) -> LatticeSummary {
        let sc = &self.sc;
        LatticeSummary {
            group: self.dirac.bg.group.name().into(),
            nt: sc.nt,
            nx: sc.nx,
            dt: sc.dt,
            dx: sc.dx,
            wilson_r: sc.wilson_r,
            mass: sc.mass,
        }
    }

    fn fd(&self) -> FdParams {
        FdParams { h: self.sc.h, richardson: self.sc.richardson }
    }

    pub fn ppa(&self) -> Ppa {
        let mut p = Ppa::new(self.dirac.clone(), self.omega.clone(), self.h.clone());
        p.fd = self.fd();
        p.parametrix = self.sc.parametrix;
        p.unitary_contact = self.sc.unitary_contact;
        if let Some(k) = &self.counterterm {
            p = p.with_counterterm(k.clone());
        }
        p
    }

    /// Background changed compactly by A and a mass bump at the same place.
    fn changed(&mut self) -> Result<Arc<Dirac>> {
        if let Some(d) = &self.changed {
            return Ok(d.clone());
        }
        let bg = &self.dirac.bg;
        let mut x = self.a.clone();
        let b = self.sc.probe_a()[0].bump;
        let m = bump_perturbation(bg, &[], Some(&Bump { amp: 0.3, ..b }));
        x.m = m.m;
        let d = Dirac::new(&perturb(bg, &x, 1.0)?, &self.dirac.params)?;
        self.changed = Some(d.clone());
        Ok(d)
    }

    /// Gauge-parameter probes for calibration: a grid over the middle of the
    /// lattice with at least as many probes as kernel parameters.
    fn calibration_probes(&self) -> Vec<GaugeParameter> {
        let sc = &self.sc;
        let c = sc.probe_c()[0];
        let need = CountertermKernel::n_params(sc.counterterm_radius);
        let nx = sc.nx;
        let rows = need.div_ceil(nx).max(1);
        // keep every bump (and its d-bar stencil) two steps from the ends
        let reach = c.bump.width * (c.bump.amp.abs() / 1e-12).ln().sqrt();
        let (lo, hi) = (reach + 2.0 * sc.dt, (sc.nt - 3) as f64 * sc.dt - reach);
        let (lo, step) = if rows == 1 || hi <= lo { (c.bump.t0, 0.0) } else { (lo, (hi - lo) / (rows - 1) as f64) };
        let mut out = Vec::with_capacity(rows * nx);
        for r in 0..rows {
            for x in 0..nx {
                let b = Bump { t0: lo + r as f64 * step, x0: x as f64 * sc.dx, ..c.bump };
                out.push(gauge(&self.dirac.bg, &[GaugeBump { index: c.index, bump: b }]));
            }
        }
        out
    }

    fn calibrated(&mut self) -> Result<CountertermKernel> {
        if let Some(k) = &self.counterterm {
            return Ok(k.clone());
        }
        let probes = self.calibration_probes();
        let k = self.ppa().calibrate(&probes, self.sc.counterterm_radius)?;
        self.counterterm = Some(k.clone());
        Ok(k)
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn run_experiment(name: &str, cx: &mut Context, rep: &mut PpaReport) -> Result<()> {
    let tol = cx.sc.tol.clone();
    let seed = cx.sc.seed;
    match name {
        "hadamard" => {
            let opts = HadamardOptions { probes: cx.sc.probes, seed, ..HadamardOptions::default() };
            let dp = cx.changed()?;
            let wp = Arc::new(transport_state(&cx.omega, &cx.dirac, &dp)?);
            for (tag, w, d) in [("vacuum", &cx.omega, &cx.dirac), ("transported", &wp, &dp)] {
                let r = check_hadamard(w, d, &opts);
                for (q, v) in [("bisolution", r.bisolution), ("anticommutator", r.anticommutator), ("conjugation", r.conjugation), ("positivity", (-r.positivity).max(0.0))] {
                    rep.push(&format!("hadamard.{tag}.{q}"), real(v), 0, 0.0, Some(tol.state), Bound::Max);
                }
            }
        }
        "car" => {
            let r = checks::car(&cx.dirac, &cx.omega, cx.sc.probes, seed);
            rep.push("car.anticommutator", real(r), 1, 0.0, Some(tol.car), Bound::Max);
        }
        "moller" => {
            let dp = cx.changed()?;
            let r = checks::moller(&cx.dirac, &dp, cx.sc.probes.min(20), seed)?;
            rep.push("moller.identity_before", real(r.identity_before), 0, 0.0, Some(tol.moller), Bound::Max);
            rep.push("moller.intertwining", real(r.intertwining), 0, 0.0, Some(tol.moller), Bound::Max);
        }
        "tau-iso" => {
            let dp = cx.changed()?;
            let r = checks::tau_iso(&cx.dirac, &dp, &cx.omega, cx.sc.tau_pairs, seed)?;
            rep.push("tau.homomorphism", real(r.homomorphism), 0, 0.0, Some(tol.tau), Bound::Max);
            rep.push("tau.star", real(r.star_compat), 0, 0.0, Some(tol.tau), Bound::Max);
            rep.push("tau.onshell", real(r.onshell), 0, 0.0, Some(tol.tau_onshell), Bound::Max);
        }
        "axioms" => {
            let f = checks::algebra_floor(&cx.dirac, &cx.omega, seed)?;
            for (q, v) in [("clifford", f.clifford), ("wedge_commutativity", f.wedge_commutativity), ("involution", f.involution), ("retarded_support", f.retarded_support)] {
                rep.push(&format!("algebra.{q}"), real(v), 0, 0.0, Some(tol.algebra), Bound::Max);
            }
            let dp = cx.changed()?;
            let scattered = Arc::new(scattered_state(&cx.omega, &cx.dirac, &dp)?);
            let mut worst = checks::Axioms::default();
            for w in [&cx.omega, &scattered] {
                let a = checks::axioms(&cx.dirac, w, &cx.h, seed)?;
                worst.factorization = worst.factorization.max(a.factorization);
                worst.source_term = worst.source_term.max(a.source_term);
                worst.unitarity = worst.unitarity.max(a.unitarity);
                worst.expansion = worst.expansion.max(a.expansion);
                worst.symmetry = worst.symmetry.max(a.symmetry);
            }
            rep.push("tproducts.factorization", real(worst.factorization), 0, 0.0, Some(tol.factorization), Bound::Max);
            rep.push("tproducts.source_term", real(worst.source_term), 1, 0.0, Some(tol.source), Bound::Max);
            rep.push("tproducts.unitarity", real(worst.unitarity), 0, 0.0, Some(tol.unitarity), Bound::Max);
            rep.push("tproducts.expansion", real(worst.expansion), 0, 0.0, Some(tol.expansion), Bound::Max);
            rep.push("tproducts.symmetry", real(worst.symmetry), 0, 0.0, Some(tol.algebra), Bound::Max);
        }
        "ppa-d0" => {
            let d = cx.ppa().deviation_d0(&cx.a)?;
            rep.push("ppa.d0", real(d.value.max_abs()), 0, d.fd_error, Some(tol.d0), Bound::Max);
        }
        "ppa-d1" => {
            let ppa = cx.ppa();
            let tree = cx.sc.tree_tol();
            for field in [LocalField::Current(cx.a_prime.clone()), LocalField::DbarCurrent(cx.c.clone())] {
                let d = ppa.deviation_d1(&field, &cx.a)?;
                let n = field.name();
                rep.push(&format!("ppa.d1.{n}.tree"), real(d.tree), 0, d.fd_error, Some(tree), Bound::Max);
                rep.push(&format!("ppa.d1.{n}.c_number"), d.c_number, 1, d.fd_error, Some(tol.one_loop), Bound::Max);
            }
        }
        "obstruction-e" => {
            let ppa = cx.ppa();
            let tree = cx.sc.tree_tol();
            let e = ppa.obstruction_e(&cx.a, &cx.a_prime)?;
            let er = ppa.obstruction_e(&cx.a_prime, &cx.a)?;
            rep.push("e.antisymmetry", real(e.value.add(&er.value).max_abs()), 0, 0.0, Some(tol.algebra), Bound::Max);
            rep.push("e.tree_onshell", real(ppa.obstruction_tree_onshell(&e)), 0, e.fd_error, Some(tree), Bound::Max);
            rep.push("e.c_number", e.c_number, 1, e.fd_error, Some(tol.one_loop), Bound::Max);
            let dc = d_bar(&cx.dirac.bg, &cx.c)?;
            let e = ppa.obstruction_e(&cx.a, &dc)?;
            rep.push("e_dc.tree_onshell", real(ppa.obstruction_tree_onshell(&e)), 0, e.fd_error, Some(tree), Bound::Max);
            rep.push("e_dc.c_number", e.c_number, 1, e.fd_error, Some(tol.one_loop), Bound::Max);
        }
        "anomaly" => {
            let ppa = cx.ppa();
            let a1 = ppa.anomaly(&cx.c)?;
            rep.push("anomaly.value", a1, 1, 0.0, Some(tol.anomaly), Bound::Max);
            // linearity in c, against a shifted second parameter
            let b = cx.sc.probe_c()[0];
            let c2 = gauge(&cx.dirac.bg, &[GaugeBump { bump: Bump { x0: b.bump.x0 + 2.0 * cx.sc.dx, amp: -0.4, ..b.bump }, ..b }]);
            let mut sum = cx.c.clone();
            sum.c.iter_mut().zip(&c2.c).for_each(|(x, y)| *x += 2.0 * y);
            let lin = ppa.anomaly(&sum)? - a1 - ppa.anomaly(&c2)? * 2.0;
            rep.push("anomaly.linearity", lin, 1, 0.0, Some(tol.algebra), Bound::Max);
        }
        "calibrate" => {
            let k = cx.calibrated()?;
            rep.push("calibrate.residual", real(k.residual), 1, 0.0, Some(tol.calibration), Bound::Max);
            rep.push("calibrate.kernel_norm", real(k.norm()), 1, 0.0, None, Bound::Max);
            rep.counterterm = Some(CountertermSummary::from(&k));
        }
        "ward" => {
            let k = cx.calibrated()?;
            rep.counterterm = Some(CountertermSummary::from(&k));
            let w = cx.ppa().ward_residual(&cx.a_prime, &cx.c)?;
            rep.push("ward.grade2", real(w.grade2), 0, 0.0, Some(tol.ward), Bound::Max);
            rep.push("ward.c_number", w.c_number, 1, 0.0, Some(tol.ward), Bound::Max);
        }
        "polarization" => {
            let ppa = cx.ppa();
            let p = ppa.vacuum_polarization(&cx.a_prime, &cx.a)?;
            rep.push("polarization.value", p, 1, 0.0, None, Bound::Max);
            if Arc::ptr_eq(&cx.omega, &cx.h) && cx.sc.unitary_contact && cx.counterterm.as_ref().is_none_or(|k| k.is_zero()) {
                let d = &cx.dirac;
                let want = oracle::polarization(d, &cx.omega, &oracle::current_tensor(d, &cx.a_prime), &oracle::current_tensor(d, &cx.a));
                rep.push("polarization.oracle_diff", p - want, 1, 0.0, Some(tol.oracle), Bound::Max);
            }
            let dc = d_bar(&cx.dirac.bg, &cx.c)?;
            let t = ppa.vacuum_polarization(&dc, &cx.a)?;
            rep.push("polarization.transversality", t, 1, 0.0, Some(tol.ward), Bound::Max);
        }
        "convergence" => convergence(cx, rep)?,
        other => return Err(Error::Precondition(format!("unknown experiment {other}"))),
    }
    Ok(())
}

/// Scenario for one rung: fixed physical box, dt/dx held at the scenario's ratio.
pub fn rung(sc: &Scenario, nx: usize) -> Scenario {
    let rf = &sc.refinement;
    let dx = rf.length / nx as f64;
    let dt = sc.dt / sc.dx * dx;
    let nt = (rf.duration / dt).round() as usize;
    let (tm, xm) = (0.5 * (nt - 1) as f64 * dt, 0.5 * rf.length);
    let w = rf.width;
    let last = sc.group.n_gen() - 1;
    let b = |amp: f64, x0: f64| Bump { amp, t0: tm, x0, width: w };
    let mut r = sc.clone();
    r.name = format!("{}-nx{nx}", sc.name);
    (r.nt, r.nx, r.dt, r.dx) = (nt, nx, dt, dx);
    // A and A' overlap, so shared temporal links carry the literal contact
    r.a = Some(vec![FormBump { mu: 1, index: 0, bump: b(0.5, xm) }, FormBump { mu: 0, index: last, bump: b(0.3, xm) }]);
    r.a_prime = Some(vec![FormBump { mu: 1, index: 0, bump: b(0.7, xm + 0.5) }, FormBump { mu: 0, index: last, bump: b(-0.4, xm + 0.5) }]);
    r.c = Some(vec![GaugeBump { index: 0, bump: b(0.6, xm + 0.25) }]);
    r
}

fn convergence(cx: &mut Context, rep: &mut PpaReport) -> Result<()> {
    let sc = cx.sc.clone();
    let mut rows = vec![];
    for &nx in &sc.refinement.ladder {
        let r = rung(&sc, nx);
        let mut c = Context::new(&r)?;
        c.calibrated()?;
        let ppa = c.ppa();
        let f = LocalField::Current(c.a_prime.clone());
        let anomaly = ppa.anomaly(&c.c)?.norm();
        let d1 = ppa.deviation_d1(&f, &c.a)?;
        let dc = d_bar(&c.dirac.bg, &c.c)?;
        let e = ppa.obstruction_e(&c.a, &dc)?;
        let mut lit = ppa.clone();
        lit.unitary_contact = false;
        let ld1 = lit.deviation_d1(&f, &c.a)?;
        let lw = lit.ward_residual(&c.a_prime, &c.c)?;
        let row = ConvergenceRow {
            nx,
            nt: r.nt,
            dx: r.dx,
            dt: r.dt,
            anomaly,
            d1_c: d1.c_number.norm(),
            e_dc_c: e.c_number.norm(),
            literal_d1_c: ld1.c_number.norm(),
            literal_ward_c: lw.c_number.norm(),
        };
        let p = format!("convergence.nx{nx}");
        rep.push_on(&format!("{p}.anomaly"), real(row.anomaly), 1, 0.0, None, Bound::Max, r.nt, nx);
        rep.push_on(&format!("{p}.d1_c"), real(row.d1_c), 1, d1.fd_error, None, Bound::Max, r.nt, nx);
        rep.push_on(&format!("{p}.e_dc_c"), real(row.e_dc_c), 1, e.fd_error, None, Bound::Max, r.nt, nx);
        rep.push_on(&format!("{p}.literal_d1_c"), real(row.literal_d1_c), 1, ld1.fd_error, None, Bound::Max, r.nt, nx);
        rep.push_on(&format!("{p}.literal_ward_c"), real(row.literal_ward_c), 1, 0.0, None, Bound::Max, r.nt, nx);
        rows.push(row);
    }
    let nxs: Vec<usize> = rows.iter().map(|r| r.nx).collect();
    let series: [(&str, fn(&ConvergenceRow) -> f64, bool); 5] = [
        ("anomaly", |r| r.anomaly, true),
        ("d1_c", |r| r.d1_c, true),
        ("e_dc_c", |r| r.e_dc_c, true),
        ("literal_d1_c", |r| r.literal_d1_c, false),
        ("literal_ward_c", |r| r.literal_ward_c, false),
    ];
    for (q, get, gated) in series {
        let v: Vec<f64> = rows.iter().map(get).collect();
        match convergence_order(&nxs, &v, CONSERVING_FLOOR) {
            // zero at every rung: nothing to fit
            None => {
                let m = v.iter().cloned().fold(0.0, f64::max);
                rep.push(&format!("convergence.floor.{q}"), real(m), 1, 0.0, gated.then_some(CONSERVING_FLOOR), Bound::Max);
            }
            Some(o) => {
                rep.push(&format!("convergence.order.{q}"), real(o), 1, 0.0, gated.then_some(sc.tol.order), Bound::Min);
            }
        }
    }
    rep.convergence = rows;
    Ok(())
}

/// Run the scenario's experiments (or `only`) and collect one report.
pub fn run_scenario(sc: &Scenario, only: Option<&[String]>) -> Result<PpaReport> {
    let mut cx = Context::new(sc)?;
    let mut rep = PpaReport::new(&sc.name, sc.seed, cx.summary());
    for name in only.unwrap_or(&sc.experiments) {
        run_experiment(name, &mut cx, &mut rep)?;
    }
    Ok(rep)
}

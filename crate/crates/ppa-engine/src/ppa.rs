//! Perturbative agreement on the lattice: the deviations D_0 and D_1, the
//! obstruction E, the anomaly candidate T((delta-bar j)(c)), c-number
//! counterterms, the Ward identity at one insertion and the vacuum
//! polarization.
//!
//! All T's are taken in the omega representative with ordering kernel H.
//! Along a background family the state is Moller-transported; H either
//! moves with it (covariant parametrix) or stays fixed (naive ordering).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::background::{d_bar, Background, GaugeParameter, Perturbation};
use crate::dirac::Dirac;
use crate::funcalg::fields::{current, LocalField};
use crate::funcalg::{onshell_residual, Functional, StarOpts};
use crate::moller::{delta_ret, FdParams, FamilyPoint};
use crate::states::TwoPoint;
use crate::tproducts::Ordering;
use crate::{exec, Error, Result, C64, I};

pub const COUNTERTERM_RADIUS: usize = 2;
pub const MAX_CONDITION: f64 = 1e8;
/// Relative singular value below which a design direction counts as absent.
pub const STRUCTURAL_ZERO: f64 = 1e-12;
/// Anomaly targets below this are treated as already conserving.
pub const CONSERVING_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrix {
    /// H transported along with the background
    Covariant,
    /// H held fixed while the background moves
    Fixed,
}

/// r(j(A)) = hbar w sum_x sum_{mu,nu} sum_{o} k_{mu nu}(o) kappa(Abar_nu(x + o), A_mu(x)),
/// offsets o = (dt, dx) with |dt|, |dx| <= radius.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountertermKernel {
    pub radius: usize,
    pub k: Vec<f64>,
    /// calibration residual sqrt(sum |T'(dbar j(c_i))|^2)
    pub residual: f64,
    pub condition: f64,
}

impl CountertermKernel {
    pub fn zero(radius: usize) -> Self {
        CountertermKernel { radius, k: vec![0.0; Self::n_params(radius)], residual: 0.0, condition: 1.0 }
    }

    pub fn n_params(radius: usize) -> usize {
        let w = 2 * radius + 1;
        4 * w * w
    }

    pub fn norm(&self) -> f64 {
        self.k.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.k.iter().all(|&v| v == 0.0)
    }

    /// d r / d k_p for the test one-form a.
    pub fn design_row(radius: usize, bg: &Background, a: &Perturbation) -> Vec<f64> {
        let lat = &bg.lat;
        let ng = bg.n_gen();
        let w = 2 * radius + 1;
        let r = radius as isize;
        let mut row = vec![0.0; Self::n_params(radius)];
        for s in 0..lat.sites() {
            let (t, x) = lat.coords(s);
            for mu in 0..2 {
                let o = (s * 2 + mu) * ng;
                let am = &a.a[o..o + ng];
                if am.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for dt in -r..=r {
                    let ty = t as isize + dt;
                    if ty < 0 || ty >= lat.nt as isize {
                        continue;
                    }
                    for dx in -r..=r {
                        let y = lat.site(ty as usize, x as isize + dx);
                        for nu in 0..2 {
                            let v = bg.group.kappa_pair(bg.a_at(y, nu), am);
                            if v != 0.0 {
                                let off = ((dt + r) as usize) * w + (dx + r) as usize;
                                row[(mu * 2 + nu) * w * w + off] += lat.weight() * v;
                            }
                        }
                    }
                }
            }
        }
        row
    }

    /// Coefficient of hbar in r(j(a)).
    pub fn eval(&self, bg: &Background, a: &Perturbation) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        Self::design_row(self.radius, bg, a).iter().zip(&self.k).map(|(x, y)| x * y).sum()
    }
}

/// A checked quantity with its finite-difference error estimate.
#[derive(Clone, Debug)]
pub struct Deviation {
    pub value: Functional,
    /// largest hbar^0 grade-2 coefficient (off shell)
    pub tree: f64,
    pub c_number: C64,
    pub fd_error: f64,
}

impl Deviation {
    fn new(value: Functional, fd_error: f64) -> Self {
        let tree = value.grade_part(2).hbar_part(0).max_abs();
        let c_number = value.c_number();
        Deviation { value, tree, c_number, fd_error }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct WardResidual {
    /// grade-2 part of LHS - RHS on shell
    pub grade2: f64,
    pub c_number: C64,
}

impl WardResidual {
    pub fn max(&self) -> f64 {
        self.grade2.max(self.c_number.norm())
    }
}

/// Everything needed to run the agreement checks on one background.
#[derive(Clone, Debug)]
pub struct Ppa {
    pub dirac: Arc<Dirac>,
    pub omega: Arc<TwoPoint>,
    pub h: Arc<TwoPoint>,
    pub parametrix: Parametrix,
    pub fd: FdParams,
    pub opts: StarOpts,
    pub counterterm: CountertermKernel,
    /// unitarity-restoring contact in T(F, G), see `Ordering::contact`
    pub unitary_contact: bool,
}

/// Multiply by i/hbar.
fn i_over_hbar(f: &Functional) -> Functional {
    f.scale(I).hbar_shift(-1)
}

fn hbar_scalar(v: f64) -> Functional {
    Functional::scalar(C64::from(v)).hbar_shift(1)
}

impl Ppa {
    pub fn new(dirac: Arc<Dirac>, omega: Arc<TwoPoint>, h: Arc<TwoPoint>) -> Self {
        Ppa {
            dirac,
            omega,
            h,
            parametrix: Parametrix::Covariant,
            fd: FdParams::default(),
            // grade-4 outputs of two quadratic factors are on-shell zero here
            opts: StarOpts { max_out_grade: Some(2), ..Default::default() },
            counterterm: CountertermKernel::zero(COUNTERTERM_RADIUS),
            unitary_contact: true,
        }
    }

    pub fn with_counterterm(mut self, k: CountertermKernel) -> Self {
        self.counterterm = k;
        self
    }

    pub fn ordering(&self) -> Ordering {
        Ordering::new(self.dirac.clone(), self.omega.clone(), self.h.clone())
            .with_opts(self.opts)
            .with_unitary_contact(self.unitary_contact)
    }

    fn family_states(&self) -> Vec<Arc<TwoPoint>> {
        match self.parametrix {
            Parametrix::Covariant => vec![self.omega.clone(), self.h.clone()],
            Parametrix::Fixed => vec![self.omega.clone()],
        }
    }

    fn ordering_at(&self, p: &FamilyPoint) -> Ordering {
        let h = match self.parametrix {
            Parametrix::Covariant => p.states[1].clone(),
            Parametrix::Fixed => self.h.clone(),
        };
        Ordering::new(p.dirac.clone(), p.states[0].clone(), h).with_opts(self.opts).with_unitary_contact(self.unitary_contact)
    }

    /// Coefficient of hbar added to T(Phi) by the counterterm.
    fn counterterm_on(&self, bg: &Background, field: &LocalField) -> Result<f64> {
        if self.counterterm.is_zero() {
            return Ok(0.0);
        }
        Ok(match field {
            LocalField::Current(a) => self.counterterm.eval(bg, a),
            LocalField::DbarCurrent(c) => self.counterterm.eval(bg, &d_bar(bg, c)?),
            LocalField::Action(_) => 0.0,
        })
    }

    fn t_prime(&self, ord: &Ordering, field: &LocalField) -> Result<Functional> {
        let t = ord.order(&field.eval(&ord.dirac)?)?.rep;
        let r = self.counterterm_on(&ord.dirac.bg, field)?;
        Ok(if r == 0.0 { t } else { t.add(&hbar_scalar(r)) })
    }

    /// T'(Phi(t)) on the base background.
    pub fn ordered(&self, field: &LocalField) -> Result<Functional> {
        self.t_prime(&self.ordering(), field)
    }

    /// delta_ret^A of the family s -> T'_{X_s}(Phi_s(t)).
    fn varied(&self, field: &LocalField, a: &Perturbation) -> Result<crate::moller::Variation> {
        delta_ret(&self.dirac, &self.family_states(), a, self.fd, |p| self.t_prime(&self.ordering_at(p), field))
    }

    /// D_1(A, t) = delta_ret^A T(Phi~(t)) - i hbar^-1 R(Phi(t); j(A)) - T(Phi^(1)(A, t)).
    pub fn deviation_d1(&self, field: &LocalField, a: &Perturbation) -> Result<Deviation> {
        let ord = self.ordering();
        let v = self.varied(field, a)?;
        if a.is_zero() {
            return Ok(Deviation::new(Functional::zero(), 0.0));
        }
        let phi = field.eval(&self.dirac)?;
        let ja = current(&self.dirac, a)?;
        let r = i_over_hbar(&ord.retarded(&phi, &ja)?.rep);
        let d1 = ord.order(&field.background_derivative(&self.dirac, a, self.fd.h)?)?.rep;
        Ok(Deviation::new(v.value.sub(&r).sub(&d1), v.error))
    }

    /// D_0(A) = delta_ret^A T(1) - i hbar^-1 R(1; j(A)).
    pub fn deviation_d0(&self, a: &Perturbation) -> Result<Deviation> {
        let one = Functional::scalar(C64::new(1.0, 0.0));
        let v = delta_ret(&self.dirac, &[], a, self.fd, |_| Ok(one.clone()))?;
        if a.is_zero() {
            return Ok(Deviation::new(v.value, 0.0));
        }
        let ja = current(&self.dirac, a)?;
        let r = i_over_hbar(&self.ordering().retarded(&one, &ja)?.rep);
        Ok(Deviation::new(v.value.sub(&r), v.error))
    }

    /// E(A1, A2) = delta^{A1} T(j~(A2)) - delta^{A2} T(j~(A1)) + i hbar^-1 [T(j(A1)), T(j(A2))].
    pub fn obstruction_e(&self, a1: &Perturbation, a2: &Perturbation) -> Result<Deviation> {
        let f1 = LocalField::Current(a1.clone());
        let f2 = LocalField::Current(a2.clone());
        let v12 = self.varied(&f2, a1)?;
        let v21 = self.varied(&f1, a2)?;
        let ord = self.ordering();
        let t1 = self.ordered(&f1)?;
        let t2 = self.ordered(&f2)?;
        let comm = ord.star(&t1, &t2)?.sub(&ord.star(&t2, &t1)?);
        let e = v12.value.sub(&v21.value).add(&i_over_hbar(&comm));
        Ok(Deviation::new(e, v12.error.max(v21.error)))
    }

    /// Grade-2 part of E on shell; the classical sector of the obstruction.
    pub fn obstruction_tree_onshell(&self, e: &Deviation) -> f64 {
        onshell_residual(&e.value.grade_part(2), &self.dirac.onshell_basis(), 5)
    }

    /// c-number of T'((delta-bar j)(c)).
    pub fn anomaly(&self, c: &GaugeParameter) -> Result<C64> {
        Ok(self.ordered(&LocalField::DbarCurrent(c.clone()))?.c_number())
    }

    /// Least-squares counterterm cancelling the anomaly on the probes.
    pub fn calibrate(&self, probes: &[GaugeParameter], radius: usize) -> Result<CountertermKernel> {
        let bare = Ppa { counterterm: CountertermKernel::zero(radius), ..self.clone() };
        let bg = &self.dirac.bg;
        let rows = exec::try_map(probes.len(), |i| -> Result<(C64, Vec<f64>)> {
            let dc = d_bar(bg, &probes[i])?;
            Ok((bare.anomaly(&probes[i])?, CountertermKernel::design_row(radius, bg, &dc)))
        })?;
        fit_counterterm(&rows, radius)
    }

    /// i hbar^-1 T'(j(A'), (delta-bar j)(c)) against T'(j(L_c A')) - T(j^(1)(d-bar c, A')).
    pub fn ward_residual(&self, ap: &Perturbation, c: &GaugeParameter) -> Result<WardResidual> {
        let ord = self.ordering();
        let bg = &self.dirac.bg;
        let fj = LocalField::Current(ap.clone());
        let fc = LocalField::DbarCurrent(c.clone());
        let (jp, dj) = (fj.eval(&self.dirac)?, fc.eval(&self.dirac)?);
        let mut lhs = ord.time_ordered(&[jp, dj])?.rep;
        // T'(F, G) = T(F, G) + r(F) T(G) + r(G) T(F) + r(F) r(G)
        let (rf, rg) = (self.counterterm_on(bg, &fj)?, self.counterterm_on(bg, &fc)?);
        if rf != 0.0 || rg != 0.0 {
            let tf = ord.order(&fj.eval(&self.dirac)?)?.rep;
            let tg = ord.order(&fc.eval(&self.dirac)?)?.rep;
            lhs = lhs
                .add(&tg.scale(C64::from(rf)).hbar_shift(1))
                .add(&tf.scale(C64::from(rg)).hbar_shift(1))
                .add(&hbar_scalar(rf * rg).hbar_shift(1));
        }
        let lhs = i_over_hbar(&lhs);
        let moved = self.ordered(&fj.gauge_moved(bg, c)?)?;
        let dc = d_bar(bg, c)?;
        let derived = ord.order(&fj.background_derivative(&self.dirac, &dc, self.fd.h)?)?.rep;
        let diff = lhs.sub(&moved.sub(&derived));
        let grade2 = onshell_residual(&diff.grade_part(2), &self.dirac.onshell_basis(), 3);
        Ok(WardResidual { grade2, c_number: diff.c_number() })
    }

    /// c-number of i hbar^-1 R(j(A1); j(A2)).
    pub fn vacuum_polarization(&self, a1: &Perturbation, a2: &Perturbation) -> Result<C64> {
        let ord = self.ordering();
        let (j1, j2) = (current(&self.dirac, a1)?, current(&self.dirac, a2)?);
        if j1.is_zero() || j2.is_zero() {
            return Ok(C64::new(0.0, 0.0));
        }
        Ok(i_over_hbar(&ord.retarded(&j1, &j2)?.rep).c_number())
    }
}

/// Least-squares kernel k with sum_p row_p k_p = -Re(anomaly) over the probes;
/// `rows` pairs each probe's anomaly with its design row.
pub fn fit_counterterm(rows: &[(C64, Vec<f64>)], radius: usize) -> Result<CountertermKernel> {
    let target: f64 = rows.iter().map(|r| r.0.norm_sqr()).sum::<f64>().sqrt();
    if target <= CONSERVING_FLOOR {
        return Ok(CountertermKernel { residual: target, ..CountertermKernel::zero(radius) });
    }
    let np = CountertermKernel::n_params(radius);
    let m = DMatrix::from_fn(rows.len(), np, |i, p| rows[i].1[p]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| -r.0.re));
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    // d-bar c is a lattice gradient, so some kernel directions never reach
    // the design (summation by parts); those are dropped, not ill-conditioned
    let cut = smax * STRUCTURAL_ZERO;
    let smin = sv.iter().cloned().filter(|&v| v > cut).fold(f64::INFINITY, f64::min);
    let condition = if rows.len() < np || smax == 0.0 { f64::INFINITY } else { smax / smin };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    // minimum-norm solution on the identifiable subspace
    let k = svd.solve(&b, cut).map_err(|e| Error::Precondition(e.to_string()))?;
    let fit = &m * &k - &b;
    let im: f64 = rows.iter().map(|r| r.0.im * r.0.im).sum();
    let residual = (fit.norm_squared() + im).sqrt();
    Ok(CountertermKernel { radius, k: k.iter().copied().collect(), residual, condition })
}

/// Least-squares slope of log(value) against log(1/Nx); values at or below
/// `floor` count as converged and yield None.
pub fn convergence_order(nx: &[usize], values: &[f64], floor: f64) -> Option<f64> {
    if values.iter().all(|&v| v <= floor) {
        return None;
    }
    let pts: Vec<(f64, f64)> = nx.iter().zip(values).map(|(&n, &v)| ((1.0 / n as f64).ln(), v.max(floor).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Direction of a tolerance: the value must stay below it, or reach it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Max,
    Min,
}

/// One row of a report. Rows without a tolerance are informational.
#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    pub name: String,
    pub value_re: f64,
    pub value_im: f64,
    pub hbar_order: i32,
    /// finite-difference error estimate from delta_ret, 0 where none enters
    pub fd_error: f64,
    pub nt: usize,
    pub nx: usize,
    pub tol: Option<f64>,
    pub bound: Bound,
    pub pass: bool,
}

impl Residual {
    pub fn magnitude(&self) -> f64 {
        C64::new(self.value_re, self.value_im).norm()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LatticeSummary {
    pub group: String,
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub dx: f64,
    pub wilson_r: f64,
    pub mass: f64,
}

/// One rung of a refinement ladder.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub anomaly: f64,
    pub d1_c: f64,
    pub e_dc_c: f64,
    /// the same c-numbers with the literal Feynman product
    pub literal_d1_c: f64,
    pub literal_ward_c: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountertermSummary {
    pub radius: usize,
    pub norm: f64,
    pub residual: f64,
    pub condition: Option<f64>,
}

impl From<&CountertermKernel> for CountertermSummary {
    fn from(k: &CountertermKernel) -> Self {
        let condition = k.condition.is_finite().then_some(k.condition);
        CountertermSummary { radius: k.radius, norm: k.norm(), residual: k.residual, condition }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PpaReport {
    pub scenario: String,
    pub seed: u64,
    pub lattice: LatticeSummary,
    pub residuals: Vec<Residual>,
    pub convergence: Vec<ConvergenceRow>,
    pub counterterm: Option<CountertermSummary>,
}

impl PpaReport {
    pub fn new(scenario: &str, seed: u64, lattice: LatticeSummary) -> Self {
        PpaReport { scenario: scenario.into(), seed, lattice, residuals: vec![], convergence: vec![], counterterm: None }
    }

    /// Append a row on the report's own lattice.
    pub fn push(&mut self, name: &str, value: C64, hbar_order: i32, fd_error: f64, tol: Option<f64>, bound: Bound) -> &Residual {
        let (nt, nx) = (self.lattice.nt, self.lattice.nx);
        self.push_on(name, value, hbar_order, fd_error, tol, bound, nt, nx)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push_on(&mut self, name: &str, value: C64, hbar_order: i32, fd_error: f64, tol: Option<f64>, bound: Bound, nt: usize, nx: usize) -> &Residual {
        let m = value.norm();
        let pass = match (tol, bound) {
            (None, _) => true,
            (Some(t), Bound::Max) => m <= t,
            (Some(t), Bound::Min) => value.re >= t,
        };
        let fd_error = if fd_error.is_finite() { fd_error } else { 0.0 };
        self.residuals.push(Residual { name: name.into(), value_re: value.re, value_im: value.im, hbar_order, fd_error, nt, nx, tol, bound, pass });
        self.residuals.last().unwrap()
    }

    pub fn get(&self, name: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.name == name)
    }

    pub fn failures(&self) -> Vec<&Residual> {
        self.residuals.iter().filter(|r| !r.pass).collect()
    }

    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value_re,value_im,hbar_order,fd_error,Nt,Nx\n");
        for r in &self.residuals {
            s.push_str(&format!("{},{:e},{:e},{},{:e},{},{}\n", r.name, r.value_re, r.value_im, r.hbar_order, r.fd_error, r.nt, r.nx));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

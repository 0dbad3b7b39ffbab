//! Two-point functions: static vacua, Moller-transported states, the
//! reference kernel H, the Feynman kernel and the Hadamard checker.
//!
//! A state is stored in factored form  omega(f, g) = (F f)^T Q (F g),
//! where F f is the Cauchy data of S+ f on slices (1, 2) and Q = i Sigma P
//! with Sigma the symplectic form of the data and P the spectral projector
//! of the one-step transfer onto e^{-i theta}, 0 < theta < pi.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dirac::{involution, Dirac, DoubleSection, Layout, Prop};
use crate::moller::{p_apply, p_inv, MollerMap};
use crate::{exec, Error, Result, C64, I};

pub type CMat = DMatrix<C64>;

/// First data slice of the vacuum construction.
pub const DATA_SLICE: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateTag {
    Vacuum,
    Transported,
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroModes {
    Abort,
    /// weight 1/2 on zero-frequency modes
    Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VacuumParams {
    pub zero_modes: ZeroModes,
    pub zero_tol: f64,
}

impl Default for VacuumParams {
    fn default() -> Self {
        VacuumParams { zero_modes: ZeroModes::Abort, zero_tol: 1e-10 }
    }
}

/// Cauchy-surface data shared between a vacuum and its transports.
#[derive(Debug)]
pub struct CauchyData {
    pub cidx: Vec<usize>,
    pub sigma: CMat,
    pub p_plus: CMat,
    /// orthonormal basis (columns) of data with |theta| < pi/2
    pub physical: CMat,
    /// number of transfer eigenvalues treated as zero modes
    pub zero_modes: usize,
}

#[derive(Clone, Debug)]
pub struct TwoPoint {
    pub tag: StateTag,
    pub layout: Layout,
    pub weight: f64,
    /// n_c x N data map
    pub f: CMat,
    /// n_c x n_c
    pub q: CMat,
    pub cauchy: Arc<CauchyData>,
}

impl TwoPoint {
    pub fn data(&self, a: &DoubleSection) -> DVector<C64> {
        &self.f * DVector::from_column_slice(&a.data)
    }

    pub fn eval(&self, a: &DoubleSection, b: &DoubleSection) -> C64 {
        let fa = self.data(a);
        let fb = self.data(b);
        (fa.transpose() * (&self.q * fb))[(0, 0)]
    }

    /// Omega[i, j] = omega(e_i, e_j)
    pub fn omega_block(&self, rows: &[usize], cols: &[usize]) -> CMat {
        let fr = self.f.select_columns(rows.iter());
        let fc = self.f.select_columns(cols.iter());
        fr.transpose() * (&self.q * fc)
    }

    pub fn retag(mut self, tag: StateTag) -> Self {
        self.tag = tag;
        self
    }
}

/// Matrix sign by scaled Newton iteration.
pub fn matrix_sign(y: &CMat) -> Result<CMat> {
    let n = y.nrows();
    let mut x = y.clone();
    for it in 0..200 {
        let inv = x.clone().try_inverse().ok_or_else(|| Error::ZeroModes("singular matrix in sign iteration".into()))?;
        let mu = if it < 20 { (inv.norm() / x.norm()).sqrt() } else { 1.0 };
        let next = (&x * C64::from(mu) + inv * C64::from(1.0 / mu)) * C64::from(0.5);
        let diff = (&next - &x).norm();
        x = next;
        if diff <= 1e-14 * (n as f64).sqrt() * x.norm().max(1.0) {
            // one cleanup step at full quadratic rate
            let inv = x.clone().try_inverse().ok_or_else(|| Error::ZeroModes("singular".into()))?;
            return Ok((&x + inv) * C64::from(0.5));
        }
    }
    Err(Error::ZeroModes("sign iteration did not converge".into()))
}

/// Singular values; a zero eigenvalue of Y shows up as a zero singular value.
fn singular_values(m: &CMat) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Ground state of a static background.
pub fn vacuum_two_point(d: &Arc<Dirac>, params: &VacuumParams) -> Result<TwoPoint> {
    let bg = &d.bg;
    if !bg.is_static() {
        return Err(Error::Precondition("vacuum requires a time-independent background".into()));
    }
    let l = d.layout;
    let w = d.weight();
    let t0 = DATA_SLICE;
    let cidx = d.cauchy_indices(t0);
    let nc = cidx.len();
    let per = bg.lat.nx * l.b;

    // F[a, j] = (S+ e_{sigma c_a})[sigma j]
    let rows = exec::map(nc, |a| d.solve(&DoubleSection::unit(&l, l.sigma(cidx[a])), Prop::Causal));
    let f = CMat::from_fn(nc, l.n, |a, j| rows[a].data[l.sigma(j)]);

    // Sigma_ab = <f_a, e_{c_b}>, f_a the cut source of unit data a
    let cuts = exec::map(nc, |a| {
        let mut e = vec![C64::new(0.0, 0.0); nc];
        e[a] = C64::new(1.0, 0.0);
        d.cut_source(t0, &cidx, &e)
    });
    let sigma = CMat::from_fn(nc, nc, |a, b| cuts[a].data[l.sigma(cidx[b])] * w);

    // one-step transfer (slices t0, t0+1) -> (t0+1, t0+2)
    let cols = exec::map(nc, |a| {
        let mut x = DoubleSection::unit(&l, cidx[a]);
        d.step_forward(&mut x, t0 + 1);
        cidx.iter().map(|&g| x.data[g + per]).collect::<Vec<_>>()
    });
    let tr = CMat::from_fn(nc, nc, |i, a| cols[a][i]);
    let tinv = tr.clone().try_inverse().ok_or_else(|| Error::ZeroModes("singular transfer matrix".into()))?;
    let y = (&tr - &tinv) * C64::new(0.0, -0.5);

    let ev = singular_values(&y);
    let nzero = ev.iter().filter(|&&e| e <= params.zero_tol).count();
    let id = CMat::identity(nc, nc);
    let sign = if nzero == 0 {
        matrix_sign(&y)?
    } else {
        match params.zero_modes {
            ZeroModes::Abort => {
                return Err(Error::ZeroModes(format!("{nzero} transfer eigenvalues with |sin theta| <= {:e}", params.zero_tol)))
            }
            ZeroModes::Split => {
                let gap = ev.iter().copied().filter(|&a| a > params.zero_tol).fold(f64::INFINITY, f64::min);
                let delta = (0.5 * gap).min(1e-6);
                let a = matrix_sign(&(&y - &id * C64::from(delta)))?;
                let b = matrix_sign(&(&y + &id * C64::from(delta)))?;
                (a + b) * C64::from(0.5)
            }
        }
    };
    let p_plus = (&id - sign) * C64::from(0.5);
    let q = &sigma * &p_plus * I;

    // physical branch: cos theta > 0
    let xc = (&tr + &tinv) * C64::from(0.5);
    let pc = (&id + matrix_sign(&xc)?) * C64::from(0.5);
    let svd = pc.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let keep: Vec<usize> = (0..nc).filter(|&k| svd.singular_values[k] > 0.5).collect();
    let physical = u.select_columns(keep.iter());

    Ok(TwoPoint {
        tag: StateTag::Vacuum,
        layout: l,
        weight: w,
        f,
        q,
        cauchy: Arc::new(CauchyData { cidx, sigma, p_plus, physical, zero_modes: nzero }),
    })
}

/// omega'(f, g) = omega(r^t f, r^t g) with r = r^{X', X}.
pub fn transport_state(omega: &TwoPoint, from: &Arc<Dirac>, to: &Arc<Dirac>) -> Result<TwoPoint> {
    transport_with(omega, &MollerMap::new(to, from)?)
}

/// omega o S^t for the scattering map S = a^{X,Y} r^{Y,X} through a
/// compactly supported change Y: the out-state of omega, again a state on X.
pub fn scattered_state(omega: &TwoPoint, x: &Arc<Dirac>, y: &Arc<Dirac>) -> Result<TwoPoint> {
    let there = transport_with(omega, &MollerMap::new(y, x)?)?;
    transport_with(&there, &MollerMap::advanced(x, y)?)
}

fn transport_with(omega: &TwoPoint, r: &MollerMap) -> Result<TwoPoint> {
    let to = &r.x;
    if omega.layout != to.layout {
        return Err(Error::LatticeMismatch);
    }
    if r.is_identity() {
        return Ok(omega.clone());
    }
    let l = omega.layout;
    let w = omega.weight;
    let nc = omega.f.nrows();
    // (F r^t)^T = P r P^-1 F^T, row by row
    let rows = exec::map(nc, |a| {
        let y = DoubleSection { data: omega.f.row(a).iter().copied().collect() };
        p_apply(&l, w, &r.apply(&p_inv(&l, w, &y)))
    });
    let f = CMat::from_fn(nc, l.n, |a, j| rows[a].data[j]);
    let out = TwoPoint { tag: StateTag::Transported, layout: l, weight: w, f, q: omega.q.clone(), cauchy: omega.cauchy.clone() };
    let rep = check_hadamard(&out, to, &HadamardOptions { probes: 8, seed: 7, positivity: false, ..Default::default() });
    let tol = 10.0 * TOL_STATE;
    if rep.bisolution > tol || rep.anticommutator > tol || rep.conjugation > tol {
        return Err(Error::StateCheck(format!(
            "transported state: bisolution {:.2e}, anticommutator {:.2e}, conjugation {:.2e}",
            rep.bisolution, rep.anticommutator, rep.conjugation
        )));
    }
    Ok(out)
}

/// H = transported vacuum of a static reference background.
pub fn reference_kernel(d: &Arc<Dirac>, d_ref: &Arc<Dirac>, params: &VacuumParams) -> Result<TwoPoint> {
    let vac = vacuum_two_point(d_ref, params)?;
    Ok(transport_state(&vac, d_ref, d)?.retag(StateTag::Reference))
}

/// Bilinear kernel on double sections, available block by block.
#[derive(Clone, Debug)]
pub enum Kernel {
    State(Arc<TwoPoint>),
    /// K(f, g) = <f, S g>
    Prop(Arc<Dirac>, Prop),
    /// explicit kernel on an index set, zero elsewhere
    Dense { idx: Vec<usize>, m: CMat, layout: Layout, weight: f64 },
    Combo(Vec<(C64, Kernel)>),
}

impl Kernel {
    pub fn layout(&self) -> Layout {
        match self {
            Kernel::State(s) => s.layout,
            Kernel::Prop(d, _) => d.layout,
            Kernel::Dense { layout, .. } => *layout,
            Kernel::Combo(v) => v[0].1.layout(),
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            Kernel::State(s) => s.weight,
            Kernel::Prop(d, _) => d.weight(),
            Kernel::Dense { weight, .. } => *weight,
            Kernel::Combo(v) => v[0].1.weight(),
        }
    }

    pub fn zero(layout: Layout, weight: f64) -> Kernel {
        Kernel::Dense { idx: vec![], m: CMat::zeros(0, 0), layout, weight }
    }

    pub fn diff(a: &Kernel, b: &Kernel) -> Kernel {
        Kernel::Combo(vec![(C64::new(1.0, 0.0), a.clone()), (C64::new(-1.0, 0.0), b.clone())])
    }

    /// K[i, j] = K(e_i, e_j)
    pub fn omega_block(&self, rows: &[usize], cols: &[usize]) -> CMat {
        match self {
            Kernel::State(s) => s.omega_block(rows, cols),
            Kernel::Prop(d, kind) => d.pairing_block(rows, cols, *kind),
            Kernel::Dense { idx, m, .. } => CMat::from_fn(rows.len(), cols.len(), |i, j| {
                match (idx.binary_search(&rows[i]), idx.binary_search(&cols[j])) {
                    (Ok(a), Ok(b)) => m[(a, b)],
                    _ => C64::new(0.0, 0.0),
                }
            }),
            Kernel::Combo(v) => {
                // identical states cancel exactly
                if v.len() == 2 {
                    if let ((a, Kernel::State(x)), (b, Kernel::State(y))) = (&v[0], &v[1]) {
                        if Arc::ptr_eq(x, y) && (a + b).norm() == 0.0 {
                            return CMat::zeros(rows.len(), cols.len());
                        }
                    }
                }
                let mut out = CMat::zeros(rows.len(), cols.len());
                for (c, k) in v {
                    out += k.omega_block(rows, cols) * *c;
                }
                out
            }
        }
    }

    /// Kernel in coefficient coordinates: W[a, b] = K[sigma a, sigma b] / w^2.
    pub fn w_block(&self, a: &[usize], b: &[usize]) -> CMat {
        let l = self.layout();
        let w = self.weight();
        let sa: Vec<usize> = a.iter().map(|&i| l.sigma(i)).collect();
        let sb: Vec<usize> = b.iter().map(|&i| l.sigma(i)).collect();
        self.omega_block(&sa, &sb) / C64::from(w * w)
    }

    pub fn eval(&self, f: &DoubleSection, g: &DoubleSection) -> C64 {
        match self {
            Kernel::State(s) => s.eval(f, g),
            Kernel::Prop(d, kind) => d.pairing(f, &d.solve(g, *kind)),
            Kernel::Dense { idx, m, .. } => {
                let mut s = C64::new(0.0, 0.0);
                for (i, &a) in idx.iter().enumerate() {
                    for (j, &b) in idx.iter().enumerate() {
                        s += f.data[a] * m[(i, j)] * g.data[b];
                    }
                }
                s
            }
            Kernel::Combo(v) => v.iter().map(|(c, k)| c * k.eval(f, g)).sum(),
        }
    }
}

/// omega_F = omega + i <., S_adv .>
pub fn feynman_kernel(omega: &Arc<TwoPoint>, d: &Arc<Dirac>) -> Kernel {
    Kernel::Combo(vec![(C64::new(1.0, 0.0), Kernel::State(omega.clone())), (I, Kernel::Prop(d.clone(), Prop::Adv))])
}

pub const TOL_STATE: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct HadamardOptions {
    pub probes: usize,
    pub seed: u64,
    pub positivity: bool,
    pub reference: Option<Arc<TwoPoint>>,
}

impl Default for HadamardOptions {
    fn default() -> Self {
        HadamardOptions { probes: 50, seed: 1, positivity: true, reference: None }
    }
}

#[derive(Clone, Debug, Default)]
pub struct HadamardReport {
    pub bisolution: f64,
    pub anticommutator: f64,
    pub conjugation: f64,
    /// min eigenvalue of omega(B*, B) on physical-branch probes
    pub positivity: f64,
    /// min eigenvalue over all Cauchy data (includes the temporal doubler)
    pub positivity_full: f64,
    /// max |omega - H| over sampled off-diagonal point pairs
    pub omega_minus_h: Option<f64>,
}

impl HadamardReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.bisolution <= tol && self.anticommutator <= tol && self.conjugation <= tol && self.positivity >= -tol
    }
}

/// Random section on a small patch of sites with times in [tmin, tmax].
pub fn random_patch(d: &Dirac, rng: &mut ChaCha8Rng, tmin: usize, tmax: usize) -> DoubleSection {
    let l = d.layout;
    let lat = d.lat();
    let mut s = DoubleSection::zeros(&l);
    let t0 = rng.gen_range(tmin..=tmax);
    let x0 = rng.gen_range(0..lat.nx) as isize;
    let t1 = (t0 + 1).min(tmax);
    for t in t0..=t1 {
        for dx in 0..2 {
            let site = lat.site(t, x0 + dx);
            for g in l.site_indices(site).collect::<Vec<_>>() {
                s.data[g] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
    }
    s
}

pub fn check_hadamard(omega: &TwoPoint, d: &Arc<Dirac>, opts: &HadamardOptions) -> HadamardReport {
    let l = d.layout;
    let nt = d.lat().nt;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pairs: Vec<(DoubleSection, DoubleSection, DoubleSection)> = (0..opts.probes)
        .map(|_| {
            let f = random_patch(d, &mut rng, 1, nt - 2);
            let g = random_patch(d, &mut rng, 1, nt - 2);
            let u = random_patch(d, &mut rng, 2, nt - 3);
            (f, g, u)
        })
        .collect();
    let res = exec::map(pairs.len(), |k| {
        let (f, g, u) = &pairs[k];
        let du = d.apply(u);
        let bis = omega.eval(&du, g).norm().max(omega.eval(g, &du).norm());
        let sf = d.solve(g, Prop::Causal);
        let anti = (omega.eval(f, g) + omega.eval(g, f) - I * d.pairing(f, &sf)).norm();
        let conj = (omega.eval(f, g).conj() - omega.eval(&involution(&l, g), &involution(&l, f))).norm();
        (bis, anti, conj)
    });
    let mut rep = HadamardReport::default();
    for (b, a, c) in res {
        rep.bisolution = rep.bisolution.max(b);
        rep.anticommutator = rep.anticommutator.max(a);
        rep.conjugation = rep.conjugation.max(c);
    }
    if opts.positivity {
        let cd = &omega.cauchy;
        rep.positivity = positivity_min(omega, d, &cd.physical);
        let all = CMat::identity(cd.cidx.len(), cd.cidx.len());
        rep.positivity_full = positivity_min(omega, d, &all);
    }
    if let Some(h) = &opts.reference {
        let sites = d.lat().sites();
        let mut m: f64 = 0.0;
        for _ in 0..opts.probes {
            let a = rng.gen_range(0..sites);
            let b = rng.gen_range(0..sites);
            if a == b {
                continue;
            }
            let ia: Vec<usize> = l.site_indices(a).collect();
            let ib: Vec<usize> = l.site_indices(b).collect();
            let diff = omega.omega_block(&ia, &ib) - h.omega_block(&ia, &ib);
            m = m.max(diff.iter().fold(0.0, |x, v| x.max(v.norm())));
        }
        rep.omega_minus_h = Some(m);
    }
    rep
}

/// Min eigenvalue of the Hermitian form M_kl = omega(B_k*, B_l) where B_k is the
/// cut source carrying data column k of `basis`.
fn positivity_min(omega: &TwoPoint, d: &Arc<Dirac>, basis: &CMat) -> f64 {
    let l = d.layout;
    let cidx = &omega.cauchy.cidx;
    let nb = basis.ncols();
    let probes = exec::map(nb, |k| {
        let col: Vec<C64> = basis.column(k).iter().copied().collect();
        let b = d.cut_source(crate::states::DATA_SLICE, cidx, &col);
        (omega.data(&involution(&l, &b)), omega.data(&b))
    });
    let mut m = CMat::zeros(nb, nb);
    let qd: Vec<DVector<C64>> = probes.iter().map(|(_, b)| &omega.q * b).collect();
    for k in 0..nb {
        for j in 0..nb {
            m[(k, j)] = (probes[k].0.transpose() * &qd[j])[(0, 0)];
        }
    }
    let h = (&m + m.adjoint()) * C64::from(0.5);
    h.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

//! Gauge groups, backgrounds, perturbations and gauge transformations.
//!
//! Connections are stored as site-based Lie-algebra components A_mu^I(t,x).
//! The Dirac operator sees them through link transporters
//! W_mu(t,x) = exp(a_mu rho(A_mu(t,x))), a_0 = dt, a_1 = dx, where the
//! temporal link joins (t,x) to (t+1,x) and the spatial one (t,x) to (t,x+1).

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::lattice::{Lattice, SiteRegion};
use crate::{Error, Result, C64, I};

pub type Mat = DMatrix<C64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupKind {
    U1 { charge: f64 },
    SU2,
}

#[derive(Clone, Debug)]
pub struct GaugeGroup {
    pub kind: GroupKind,
    pub dim_v: usize,
    /// Anti-Hermitian generators T_I of the representation.
    pub gens: Vec<Mat>,
    /// Invariant pairing kappa_IJ.
    pub kappa: Vec<Vec<f64>>,
    /// Structure constants, [T_I, T_J] = f[I][J][K] T_K.
    pub f: Vec<Vec<Vec<f64>>>,
}

impl GaugeGroup {
    pub fn u1(charge: f64) -> Arc<Self> {
        Arc::new(GaugeGroup {
            kind: GroupKind::U1 { charge },
            dim_v: 1,
            gens: vec![Mat::from_element(1, 1, I * charge)],
            kappa: vec![vec![1.0]],
            f: vec![vec![vec![0.0]]],
        })
    }

    pub fn su2() -> Arc<Self> {
        let h = C64::new(0.0, -0.5);
        let s1 = Mat::from_row_slice(2, 2, &[0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()]);
        let s2 = Mat::from_row_slice(2, 2, &[0.0.into(), -I, I, 0.0.into()]);
        let s3 = Mat::from_row_slice(2, 2, &[1.0.into(), 0.0.into(), 0.0.into(), (-1.0).into()]);
        let gens = vec![s1 * h, s2 * h, s3 * h];
        let mut f = vec![vec![vec![0.0; 3]; 3]; 3];
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            f[i][j][k] = 1.0;
            f[j][i][k] = -1.0;
        }
        let kappa = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Arc::new(GaugeGroup { kind: GroupKind::SU2, dim_v: 2, gens, kappa, f })
    }

    pub fn n_gen(&self) -> usize {
        self.gens.len()
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GroupKind::U1 { .. } => "U1",
            GroupKind::SU2 => "SU2",
        }
    }

    /// rho(a) = sum_I a^I T_I.
    pub fn rho(&self, a: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.dim_v, self.dim_v);
        for (g, &c) in self.gens.iter().zip(a) {
            if c != 0.0 {
                m += g * C64::from(c);
            }
        }
        m
    }

    pub fn bracket(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.n_gen();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let p = a[i] * b[j];
                if p != 0.0 {
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += self.f[i][j][k] * p;
                    }
                }
            }
        }
        out
    }

    pub fn kappa_pair(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                s += self.kappa[i][j] * ai * bj;
            }
        }
        s
    }

    /// exp(rho(a)), closed form.
    pub fn exp(&self, a: &[f64]) -> Mat {
        match self.kind {
            GroupKind::U1 { charge } => Mat::from_element(1, 1, (I * charge * a[0]).exp()),
            GroupKind::SU2 => {
                let th = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                let mut m = Mat::identity(2, 2) * C64::from((0.5 * th).cos());
                if th > 0.0 {
                    // rho(a) = -(i/2) a.sigma, so exp = cos(th/2) + sin(th/2) rho(a)/(th/2)
                    m += self.rho(a) * C64::from((0.5 * th).sin() / (0.5 * th));
                }
                m
            }
        }
    }

    /// Inverse of `exp` near the identity.
    pub fn log(&self, u: &Mat) -> Vec<f64> {
        match self.kind {
            GroupKind::U1 { charge } => vec![u[(0, 0)].arg() / charge],
            GroupKind::SU2 => {
                let c = (0.5 * (u[(0, 0)] + u[(1, 1)]).re).clamp(-1.0, 1.0);
                let half = c.acos();
                // u = cos(half) + sin(half)/half * rho(a); rho(a) = -(i/2) a.sigma
                // tr(u sigma_k) = -i sin(half) a_k / th * 2 ... solved componentwise
                let s = half.sin();
                if s.abs() < 1e-300 {
                    return vec![0.0; 3];
                }
                let th = 2.0 * half;
                let scale = th / s;
                // a_k/th * sin(half) = i tr(u sigma_k)/2
                let t1 = u[(0, 1)] + u[(1, 0)];
                let t2 = I * (u[(0, 1)] - u[(1, 0)]);
                let t3 = u[(0, 0)] - u[(1, 1)];
                [t1, t2, t3].iter().map(|t| (I * t * 0.5).re * scale).collect()
            }
        }
    }

    /// d/ds exp(X + sY) at s = 0 for arbitrary square X, Y.
    pub fn dexp(x: &Mat, y: &Mat) -> Mat {
        let n = x.nrows();
        if n == 1 {
            return y * x[(0, 0)].exp();
        }
        let mut big = Mat::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(x);
        big.view_mut((n, n), (n, n)).copy_from(x);
        big.view_mut((0, n), (n, n)).copy_from(y);
        let e = big.exp();
        e.view((0, n), (n, n)).into_owned()
    }

    /// Solve a * dexp_{a rho(base)}(rho(z)) = target for z (real components).
    pub fn dexp_inverse(&self, base: &[f64], a: f64, target: &Mat) -> Vec<f64> {
        let n = self.n_gen();
        let x = self.rho(base) * C64::from(a);
        if let GroupKind::U1 { charge } = self.kind {
            let w = x[(0, 0)].exp();
            return vec![(target[(0, 0)] / (w * I * charge * a)).re];
        }
        let cols: Vec<Mat> = (0..n).map(|j| GaugeGroup::dexp(&x, &(&self.gens[j] * C64::from(a)))).collect();
        // least squares on real and imaginary parts of all entries
        let d = self.dim_v * self.dim_v;
        let mut m = DMatrix::<f64>::zeros(2 * d, n);
        let mut rhs = nalgebra::DVector::<f64>::zeros(2 * d);
        for e in 0..d {
            let (r, c) = (e / self.dim_v, e % self.dim_v);
            for (j, col) in cols.iter().enumerate() {
                m[(2 * e, j)] = col[(r, c)].re;
                m[(2 * e + 1, j)] = col[(r, c)].im;
            }
            rhs[2 * e] = target[(r, c)].re;
            rhs[2 * e + 1] = target[(r, c)].im;
        }
        let mt = m.transpose();
        let sol = (&mt * &m).lu().solve(&(&mt * rhs)).expect("dexp is invertible near the identity");
        sol.iter().copied().collect()
    }
}

/// Gauge connection and mass on a lattice.
#[derive(Clone, Debug)]
pub struct Background {
    pub lat: Lattice,
    pub group: Arc<GaugeGroup>,
    /// A_mu^I at ((site*2 + mu)*n_gen + I).
    pub a: Vec<f64>,
    pub m: Vec<f64>,
}

impl Background {
    pub fn new(lat: Lattice, group: Arc<GaugeGroup>, a: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        let ng = group.n_gen();
        if a.len() != lat.sites() * 2 * ng || m.len() != lat.sites() {
            return Err(Error::LatticeMismatch);
        }
        if a.iter().chain(&m).any(|v| !v.is_finite()) {
            return Err(Error::Precondition("background has non-finite values".into()));
        }
        Ok(Background { lat, group, a, m })
    }

    /// Constant connection components and constant mass.
    pub fn constant(lat: Lattice, group: Arc<GaugeGroup>, a_t: &[f64], a_x: &[f64], mass: f64) -> Result<Self> {
        let ng = group.n_gen();
        if a_t.len() != ng || a_x.len() != ng {
            return Err(Error::Precondition("connection component count".into()));
        }
        let n = lat.sites();
        let mut a = Vec::with_capacity(n * 2 * ng);
        for _ in 0..n {
            a.extend_from_slice(a_t);
            a.extend_from_slice(a_x);
        }
        Background::new(lat, group, a, vec![mass; n])
    }

    pub fn n_gen(&self) -> usize {
        self.group.n_gen()
    }

    #[inline]
    pub fn a_at(&self, site: usize, mu: usize) -> &[f64] {
        let ng = self.n_gen();
        let o = (site * 2 + mu) * ng;
        &self.a[o..o + ng]
    }

    pub fn step(&self, mu: usize) -> f64 {
        if mu == 0 {
            self.lat.dt
        } else {
            self.lat.dx
        }
    }

    /// Neighbouring site along mu (temporal neighbour may not exist).
    pub fn neighbour(&self, site: usize, mu: usize) -> Option<usize> {
        let (t, x) = self.lat.coords(site);
        if mu == 0 {
            (t + 1 < self.lat.nt).then(|| self.lat.site(t + 1, x as isize))
        } else {
            Some(self.lat.site(t, x as isize + 1))
        }
    }

    /// Link transporter from the neighbour back to `site`.
    pub fn link(&self, site: usize, mu: usize) -> Mat {
        let a: Vec<f64> = self.a_at(site, mu).iter().map(|v| v * self.step(mu)).collect();
        self.group.exp(&a)
    }

    /// d/ds of the link under A -> A + s*dA at this site and direction.
    pub fn link_derivative(&self, site: usize, mu: usize, da: &[f64]) -> Mat {
        let h = self.step(mu);
        let x = self.group.rho(self.a_at(site, mu)) * C64::from(h);
        let y = self.group.rho(da) * C64::from(h);
        GaugeGroup::dexp(&x, &y)
    }

    pub fn max_abs_mass(&self) -> f64 {
        self.m.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Time-independent connection and mass.
    pub fn is_static(&self) -> bool {
        let lat = &self.lat;
        let ng = self.n_gen();
        for t in 1..lat.nt {
            for x in 0..lat.nx {
                let s = lat.site(t, x as isize);
                let s0 = x;
                if self.m[s] != self.m[s0] {
                    return false;
                }
                // the temporal link at the last slice is never used
                let kmax = if t + 1 == lat.nt { 1 } else { 0 };
                for mu in kmax..2 {
                    let o = (s * 2 + mu) * ng;
                    let o0 = (s0 * 2 + mu) * ng;
                    if self.a[o..o + ng] != self.a[o0..o0 + ng] {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn same_lattice(&self, other: &Background) -> bool {
        self.lat == other.lat && self.group.kind == other.group.kind
    }
}

/// Compactly supported deviation (A, m) of a background.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub a: Vec<f64>,
    pub m: Vec<f64>,
}

impl Perturbation {
    pub fn zero(bg: &Background) -> Self {
        Perturbation { a: vec![0.0; bg.a.len()], m: vec![0.0; bg.m.len()] }
    }

    pub fn support(&self, lat: &Lattice) -> SiteRegion {
        let n = lat.sites();
        let per = self.a.len() / n;
        SiteRegion::from_sites(
            n,
            (0..n).filter(|&s| self.m[s] != 0.0 || self.a[s * per..(s + 1) * per].iter().any(|&v| v != 0.0)),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.m).all(|&v| v == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Perturbation { a: self.a.iter().map(|v| v * s).collect(), m: self.m.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, o: &Perturbation) -> Self {
        Perturbation {
            a: self.a.iter().zip(&o.a).map(|(x, y)| x + y).collect(),
            m: self.m.iter().zip(&o.m).map(|(x, y)| x + y).collect(),
        }
    }

    /// Sites whose field-equation rows change when the background moves by this perturbation.
    pub fn affected_rows(&self, bg: &Background) -> SiteRegion {
        let lat = &bg.lat;
        let ng = bg.n_gen();
        let mut r = lat.region();
        for s in 0..lat.sites() {
            if self.m[s] != 0.0 {
                r.insert(s);
            }
            for mu in 0..2 {
                let o = (s * 2 + mu) * ng;
                if self.a[o..o + ng].iter().any(|&v| v != 0.0) {
                    if let Some(nb) = bg.neighbour(s, mu) {
                        r.insert(s);
                        r.insert(nb);
                    }
                }
            }
        }
        r
    }
}

/// Check that every changed row of the field equation lies on an interior slice.
pub fn check_interior_rows(bg: &Background, rows: &SiteRegion, what: &str) -> Result<()> {
    for s in rows.sites() {
        let t = bg.lat.coords(s).0;
        if !bg.lat.is_interior_time(t) {
            return Err(Error::Support(format!("{what} touches the temporal boundary at t={t}")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GaugeParameter {
    /// c^I at (site*n_gen + I).
    pub c: Vec<f64>,
}

impl GaugeParameter {
    pub fn zero(bg: &Background) -> Self {
        GaugeParameter { c: vec![0.0; bg.lat.sites() * bg.n_gen()] }
    }

    pub fn at(&self, site: usize, ng: usize) -> &[f64] {
        &self.c[site * ng..(site + 1) * ng]
    }

    pub fn support(&self, lat: &Lattice) -> SiteRegion {
        let n = lat.sites();
        let ng = self.c.len() / n;
        SiteRegion::from_sites(n, (0..n).filter(|&s| self.c[s * ng..(s + 1) * ng].iter().any(|&v| v != 0.0)))
    }

    pub fn scaled(&self, s: f64) -> Self {
        GaugeParameter { c: self.c.iter().map(|v| v * s).collect() }
    }
}

/// Linear family bg + s X.
pub fn perturb(bg: &Background, x: &Perturbation, s: f64) -> Result<Background> {
    if x.a.len() != bg.a.len() || x.m.len() != bg.m.len() {
        return Err(Error::LatticeMismatch);
    }
    let a = bg.a.iter().zip(&x.a).map(|(a, d)| a + s * d).collect();
    let m = bg.m.iter().zip(&x.m).map(|(a, d)| a + s * d).collect();
    Background::new(bg.lat.clone(), bg.group.clone(), a, m)
}

fn check_gauge_support(bg: &Background, c: &GaugeParameter) -> Result<()> {
    if c.c.len() != bg.lat.sites() * bg.n_gen() {
        return Err(Error::LatticeMismatch);
    }
    for s in c.support(&bg.lat).sites() {
        let t = bg.lat.coords(s).0;
        if t < 2 || t + 3 > bg.lat.nt {
            return Err(Error::Support(format!("gauge parameter at t={t} leaves no margin for d_bar")));
        }
    }
    Ok(())
}

/// Covariant differential of c: the exact first-order link variation of the
/// gauge transformation with parameter c, expressed in site components.
pub fn d_bar(bg: &Background, c: &GaugeParameter) -> Result<Perturbation> {
    check_gauge_support(bg, c)?;
    let ng = bg.n_gen();
    let g = &bg.group;
    let mut out = Perturbation::zero(bg);
    for s in 0..bg.lat.sites() {
        for mu in 0..2 {
            let Some(nb) = bg.neighbour(s, mu) else { continue };
            let cx = c.at(s, ng);
            let cy = c.at(nb, ng);
            if cx.iter().chain(cy).all(|&v| v == 0.0) {
                continue;
            }
            let w = bg.link(s, mu);
            // g = exp(-s rho(c)):  d/ds g_x W g_y^{-1} = -rho(c_x) W + W rho(c_y)
            let dw = -(g.rho(cx) * &w) + &w * g.rho(cy);
            let z = g.dexp_inverse(bg.a_at(s, mu), bg.step(mu), &dw);
            let o = (s * 2 + mu) * ng;
            out.a[o..o + ng].copy_from_slice(&z);
        }
    }
    Ok(out)
}

/// Exact finite gauge transformation with g = exp(-s rho(c)) at each site.
pub fn gauge_transform(bg: &Background, c: &GaugeParameter, s: f64) -> Result<Background> {
    check_gauge_support(bg, c)?;
    let ng = bg.n_gen();
    let grp = &bg.group;
    let g: Vec<Mat> = (0..bg.lat.sites()).map(|x| grp.exp(&c.at(x, ng).iter().map(|v| -s * v).collect::<Vec<_>>())).collect();
    let mut a = bg.a.clone();
    for site in 0..bg.lat.sites() {
        for mu in 0..2 {
            let Some(nb) = bg.neighbour(site, mu) else { continue };
            if c.at(site, ng).iter().chain(c.at(nb, ng)).all(|&v| v == 0.0) {
                continue;
            }
            let w = bg.link(site, mu);
            let ginv = g[nb].adjoint();
            let wn = &g[site] * w * ginv;
            let z = grp.log(&wn);
            let o = (site * 2 + mu) * ng;
            for (k, v) in z.iter().enumerate() {
                a[o + k] = v / bg.step(mu);
            }
        }
    }
    Background::new(bg.lat.clone(), bg.group.clone(), a, bg.m.clone())
}

/// Gauge action on a test one-form: L_c A' = -d/dsigma of the transformed
/// perturbation (exact link formula), by Richardson-extrapolated central differences.
pub fn gauge_lie_one_form(bg: &Background, c: &GaugeParameter, ap: &Perturbation) -> Result<Perturbation> {
    check_gauge_support(bg, c)?;
    let ng = bg.n_gen();
    let grp = &bg.group;
    let transformed = |sig: f64| -> Vec<f64> {
        let g: Vec<Mat> =
            (0..bg.lat.sites()).map(|x| grp.exp(&c.at(x, ng).iter().map(|v| -sig * v).collect::<Vec<_>>())).collect();
        let mut out = vec![0.0; ap.a.len()];
        for site in 0..bg.lat.sites() {
            for mu in 0..2 {
                let o = (site * 2 + mu) * ng;
                if ap.a[o..o + ng].iter().all(|&v| v == 0.0) {
                    continue;
                }
                let Some(nb) = bg.neighbour(site, mu) else { continue };
                let w = bg.link(site, mu);
                let dw = bg.link_derivative(site, mu, &ap.a[o..o + ng]);
                let wn = &g[site] * &w * g[nb].adjoint();
                let dwn = &g[site] * dw * g[nb].adjoint();
                let base = grp.log(&wn).iter().map(|v| v / bg.step(mu)).collect::<Vec<_>>();
                let z = grp.dexp_inverse(&base, bg.step(mu), &dwn);
                out[o..o + ng].copy_from_slice(&z);
            }
        }
        out
    };
    let h = 1e-3;
    let d = |h: f64| -> Vec<f64> {
        let p = transformed(h);
        let m = transformed(-h);
        p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    let d1 = d(h);
    let d2 = d(h / 2.0);
    let a = d1.iter().zip(&d2).map(|(x, y)| -(4.0 * y - x) / 3.0).collect();
    Ok(Perturbation { a, m: vec![0.0; ap.m.len()] })
}

/// Lie-algebra valued differential form of degree 0, 1 or 2 on the lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LieForm {
    pub degree: usize,
    /// components at ((site*ncomp + comp)*n_gen + I); ncomp = 1, 2, 1 for degree 0, 1, 2
    pub v: Vec<f64>,
}

impl LieForm {
    pub fn ncomp(degree: usize) -> usize {
        if degree == 1 {
            2
        } else {
            1
        }
    }
}

pub fn lie_wedge(g: &GaugeGroup, a: &LieForm, b: &LieForm) -> Result<LieForm> {
    let deg = a.degree + b.degree;
    if deg > 2 {
        return Err(Error::GradeOverflow(deg, 2));
    }
    let ng = g.n_gen();
    let (na, nb, nout) = (LieForm::ncomp(a.degree), LieForm::ncomp(b.degree), LieForm::ncomp(deg));
    let sites = a.v.len() / (na * ng);
    let mut v = vec![0.0; sites * nout * ng];
    let comp = |f: &LieForm, n: usize, s: usize, k: usize| -> Vec<f64> { f.v[(s * n + k) * ng..(s * n + k + 1) * ng].to_vec() };
    for s in 0..sites {
        // (out component, a component, b component, sign)
        let terms: Vec<(usize, usize, usize, f64)> = match (a.degree, b.degree) {
            (0, 0) => vec![(0, 0, 0, 1.0)],
            (0, 1) => vec![(0, 0, 0, 1.0), (1, 0, 1, 1.0)],
            (1, 0) => vec![(0, 0, 0, 1.0), (1, 1, 0, 1.0)],
            (1, 1) => vec![(0, 0, 1, 1.0), (0, 1, 0, -1.0)],
            (0, 2) | (2, 0) => vec![(0, 0, 0, 1.0)],
            _ => unreachable!(),
        };
        for (o, ka, kb, sg) in terms {
            let br = g.bracket(&comp(a, na, s, ka), &comp(b, nb, s, kb));
            for (i, x) in br.iter().enumerate() {
                v[(s * nout + o) * ng + i] += sg * x;
            }
        }
    }
    Ok(LieForm { degree: deg, v })
}

/// Smooth bump amp * exp(-((t-t0)^2 + d(x,x0)^2)/w^2) in physical units,
/// truncated to zero below 1e-12.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub amp: f64,
    pub t0: f64,
    pub x0: f64,
    pub width: f64,
}

impl Bump {
    pub fn value(&self, lat: &Lattice, t: usize, x: usize) -> f64 {
        let tt = t as f64 * lat.dt - self.t0;
        let len = lat.nx as f64 * lat.dx;
        let mut dxp = (x as f64 * lat.dx - self.x0).rem_euclid(len);
        if dxp > 0.5 * len {
            dxp = len - dxp;
        }
        let v = self.amp * (-(tt * tt + dxp * dxp) / (self.width * self.width)).exp();
        if v.abs() < 1e-12 {
            0.0
        } else {
            v
        }
    }

    pub fn sample(&self, lat: &Lattice) -> Vec<f64> {
        (0..lat.sites())
            .map(|s| {
                let (t, x) = lat.coords(s);
                self.value(lat, t, x)
            })
            .collect()
    }
}

/// Perturbation with bump profiles for selected (direction, Lie index) components.
pub fn bump_perturbation(bg: &Background, a_profiles: &[(usize, usize, Bump)], m_profile: Option<&Bump>) -> Perturbation {
    let mut p = Perturbation::zero(bg);
    let ng = bg.n_gen();
    for (mu, i, b) in a_profiles {
        for (s, v) in b.sample(&bg.lat).into_iter().enumerate() {
            p.a[(s * 2 + mu) * ng + i] += v;
        }
    }
    if let Some(b) = m_profile {
        for (s, v) in b.sample(&bg.lat).into_iter().enumerate() {
            p.m[s] += v;
        }
    }
    p
}

pub fn bump_gauge(bg: &Background, profiles: &[(usize, Bump)]) -> GaugeParameter {
    let mut c = GaugeParameter::zero(bg);
    let ng = bg.n_gen();
    for (i, b) in profiles {
        for (s, v) in b.sample(&bg.lat).into_iter().enumerate() {
            c.c[s * ng + i] += v;
        }
    }
    c
}

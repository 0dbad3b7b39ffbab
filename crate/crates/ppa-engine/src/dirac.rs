//! Double Dirac operator, explicit Cauchy solvers and propagators.
//!
//! D u = -gamma^0 grad_t u - gamma^1 grad_x u + m u - (r dx / 2) lap u with
//! centred covariant differences built from link transporters. The double
//! operator is D+ = D (+) (-D^T) acting on sections (u, v).
//!
//! Section layout: u-part index  site*b + spin*dim_v + a,  b = 2*dim_v;
//! v-part at the same offset shifted by n_u = sites*b.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::background::{Background, Mat, Perturbation};
use crate::lattice::{Lattice, SiteRegion};
use crate::{exec, Error, Result, C64, I};

pub fn gamma0() -> Mat {
    Mat::from_row_slice(2, 2, &[0.0.into(), 1.0.into(), (-1.0).into(), 0.0.into()])
}

pub fn gamma1() -> Mat {
    Mat::from_row_slice(2, 2, &[0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()])
}

pub fn eta(mu: usize, nu: usize) -> f64 {
    match (mu, nu) {
        (0, 0) => -1.0,
        (1, 1) => 1.0,
        _ => 0.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiracParams {
    pub wilson_r: f64,
    /// Largest dimension for which dense kernels may be assembled.
    pub dense_cap: usize,
}

impl Default for DiracParams {
    fn default() -> Self {
        DiracParams { wilson_r: 1.0, dense_cap: 6000 }
    }
}

/// Index bookkeeping shared by sections and kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub sites: usize,
    pub nx: usize,
    pub dim_v: usize,
    /// block size per site and sector = 2*dim_v
    pub b: usize,
    pub nu: usize,
    pub n: usize,
}

impl Layout {
    pub fn new(lat: &Lattice, dim_v: usize) -> Self {
        let b = 2 * dim_v;
        let nu = lat.sites() * b;
        Layout { sites: lat.sites(), nx: lat.nx, dim_v, b, nu, n: 2 * nu }
    }

    #[inline]
    pub fn site_of(&self, g: usize) -> usize {
        (g % self.nu) / self.b
    }

    #[inline]
    pub fn time_of(&self, g: usize) -> usize {
        self.site_of(g) / self.nx
    }

    #[inline]
    pub fn is_v(&self, g: usize) -> bool {
        g >= self.nu
    }

    /// Swap u and v parts of a global index.
    #[inline]
    pub fn sigma(&self, g: usize) -> usize {
        if g >= self.nu {
            g - self.nu
        } else {
            g + self.nu
        }
    }

    pub fn index(&self, v_part: bool, site: usize, spin: usize, a: usize) -> usize {
        (if v_part { self.nu } else { 0 }) + site * self.b + spin * self.dim_v + a
    }

    /// All global indices of a site (u then v).
    pub fn site_indices(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.b).map(move |k| site * self.b + k).chain((0..self.b).map(move |k| self.nu + site * self.b + k))
    }

    pub fn region_indices(&self, r: &SiteRegion) -> Vec<usize> {
        let mut v: Vec<usize> = r.sites().flat_map(|s| self.site_indices(s).collect::<Vec<_>>()).collect();
        v.sort_unstable();
        v
    }

    pub fn support(&self, data: &[C64]) -> SiteRegion {
        SiteRegion::from_sites(self.sites, (0..self.n).filter(|&g| data[g] != C64::new(0.0, 0.0)).map(|g| self.site_of(g)))
    }
}

/// Configuration or test section of the double bundle. `data` has layout `Layout`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleSection {
    pub data: Vec<C64>,
}

impl DoubleSection {
    pub fn zeros(l: &Layout) -> Self {
        DoubleSection { data: vec![C64::new(0.0, 0.0); l.n] }
    }

    pub fn unit(l: &Layout, g: usize) -> Self {
        let mut s = Self::zeros(l);
        s.data[g] = C64::new(1.0, 0.0);
        s
    }

    pub fn axpy(&mut self, a: C64, x: &DoubleSection) {
        for (y, xv) in self.data.iter_mut().zip(&x.data) {
            *y += a * xv;
        }
    }

    pub fn sub(&self, o: &DoubleSection) -> DoubleSection {
        DoubleSection { data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Fixed-size complex block stored row-major.
pub type Blk = Vec<C64>;

/// Site blocks (row, col, block) of D. With `dot`, the blocks of the
/// derivative of D along the perturbation instead.
pub fn operator_blocks(bg: &Background, r: f64, dot: Option<&Perturbation>) -> Vec<(usize, usize, Blk)> {
    let lat = &bg.lat;
    let dv = bg.group.dim_v;
    let b = 2 * dv;
    let ng = bg.n_gen();
    let (dt, dx) = (lat.dt, lat.dx);
    let g0 = gamma0();
    let g1 = gamma1();
    let id2 = Mat::identity(2, 2);
    let kron = |s: &Mat, w: &Mat, c: C64| -> Blk {
        let mut out = vec![C64::new(0.0, 0.0); b * b];
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..dv {
                    for a2 in 0..dv {
                        out[(i * dv + a) * b + j * dv + a2] = c * s[(i, j)] * w[(a, a2)];
                    }
                }
            }
        }
        out
    };
    let link = |s: usize, mu: usize| -> Option<Mat> {
        match dot {
            None => Some(bg.link(s, mu)),
            Some(p) => {
                let da = &p.a[(s * 2 + mu) * ng..(s * 2 + mu + 1) * ng];
                da.iter().any(|&v| v != 0.0).then(|| bg.link_derivative(s, mu, da))
            }
        }
    };
    let idv = Mat::identity(dv, dv);
    let mut entries = Vec::new();
    for s in 0..lat.sites() {
        let (t, x) = lat.coords(s);
        let xi = x as isize;
        let diag = match dot {
            None => bg.m[s] + r / dx,
            Some(p) => p.m[s],
        };
        if diag != 0.0 {
            entries.push((s, s, kron(&id2, &idv, C64::from(diag))));
        }
        if t + 1 < lat.nt {
            if let Some(w) = link(s, 0) {
                entries.push((s, lat.site(t + 1, xi), kron(&g0, &w, C64::from(-0.5 / dt))));
            }
        }
        if t >= 1 {
            let sb = lat.site(t - 1, xi);
            if let Some(w) = link(sb, 0) {
                entries.push((s, sb, kron(&g0, &w.adjoint(), C64::from(0.5 / dt))));
            }
        }
        if let Some(w) = link(s, 1) {
            entries.push((s, lat.site(t, xi + 1), kron(&(&g1 + &id2 * C64::from(r)), &w, C64::from(-0.5 / dx))));
        }
        let sl = lat.site(t, xi - 1);
        if let Some(w) = link(sl, 1) {
            entries.push((s, sl, kron(&(&g1 - &id2 * C64::from(r)), &w.adjoint(), C64::from(0.5 / dx))));
        }
    }
    entries
}

fn blk_from(m: &Mat) -> Blk {
    let n = m.nrows();
    (0..n * n).map(|k| m[(k / n, k % n)]).collect()
}

fn blk_inv(b: &Blk, n: usize) -> Blk {
    let m = Mat::from_row_slice(n, n, b);
    blk_from(&m.try_inverse().expect("hop block must be invertible"))
}

#[inline]
fn blk_mv_sub(b: &[C64], n: usize, x: &[C64], out: &mut [C64]) {
    for r in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..n {
            acc += b[r * n + c] * x[c];
        }
        out[r] -= acc;
    }
}

#[inline]
fn blk_mv(b: &[C64], n: usize, x: &[C64], out: &mut [C64]) {
    for r in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..n {
            acc += b[r * n + c] * x[c];
        }
        out[r] = acc;
    }
}

/// Site-block sparse operator on one sector.
#[derive(Clone, Debug)]
pub struct BlockOp {
    pub b: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub blocks: Vec<Blk>,
}

impl BlockOp {
    fn from_entries(sites: usize, b: usize, mut entries: Vec<(usize, usize, Blk)>) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut merged: Vec<(usize, usize, Blk)> = Vec::with_capacity(entries.len());
        for (r, c, blk) in entries {
            if let Some(last) = merged.last_mut() {
                if last.0 == r && last.1 == c {
                    for (x, y) in last.2.iter_mut().zip(&blk) {
                        *x += y;
                    }
                    continue;
                }
            }
            merged.push((r, c, blk));
        }
        let mut row_ptr = vec![0; sites + 1];
        for e in &merged {
            row_ptr[e.0 + 1] += 1;
        }
        for i in 0..sites {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = merged.iter().map(|e| e.1).collect();
        let blocks = merged.into_iter().map(|e| e.2).collect();
        BlockOp { b, row_ptr, cols, blocks }
    }

    fn entries(&self) -> Vec<(usize, usize, Blk)> {
        let mut v = Vec::new();
        for r in 0..self.row_ptr.len() - 1 {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                v.push((r, self.cols[k], self.blocks[k].clone()));
            }
        }
        v
    }

    /// -(this)^T
    fn neg_transpose(&self, sites: usize) -> Self {
        let b = self.b;
        let e = self
            .entries()
            .into_iter()
            .map(|(r, c, blk)| {
                let t: Blk = (0..b * b).map(|k| -blk[(k % b) * b + k / b]).collect();
                (c, r, t)
            })
            .collect();
        BlockOp::from_entries(sites, b, e)
    }

    fn find(&self, r: usize, c: usize) -> Option<&Blk> {
        (self.row_ptr[r]..self.row_ptr[r + 1]).find(|&k| self.cols[k] == c).map(|k| &self.blocks[k])
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let b = self.b;
        let mut tmp = vec![C64::new(0.0, 0.0); b];
        for r in 0..self.row_ptr.len() - 1 {
            let out = &mut y[r * b..(r + 1) * b];
            out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                blk_mv(&self.blocks[k], b, &x[c * b..(c + 1) * b], &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
            }
        }
    }
}

/// Sector (u or v) with solver data.
#[derive(Clone, Debug)]
struct Sector {
    op: BlockOp,
    /// inverse hop block to (t+1, x), per row site with t <= nt-2
    fwd_inv: Vec<Option<Blk>>,
    /// inverse hop block to (t-1, x), per row site with t >= 1
    bwd_inv: Vec<Option<Blk>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prop {
    Ret,
    Adv,
    Causal,
}

/// D+ on a background, with explicit solvers.
#[derive(Debug)]
pub struct Dirac {
    pub bg: Background,
    pub params: DiracParams,
    pub layout: Layout,
    u: Sector,
    v: Sector,
}

impl Dirac {
    pub fn new(bg: &Background, params: &DiracParams) -> Result<Arc<Dirac>> {
        let lat = &bg.lat;
        cfl_guard(lat, bg.max_abs_mass(), params.wilson_r)?;
        if lat.nt < 5 {
            return Err(Error::Lattice(format!("need Nt >= 5 for the two-step solver, got {}", lat.nt)));
        }
        let layout = Layout::new(lat, bg.group.dim_v);
        let b = layout.b;
        let entries = operator_blocks(bg, params.wilson_r, None);
        let dop = BlockOp::from_entries(lat.sites(), b, entries);
        let eop = dop.neg_transpose(lat.sites());
        let mk = |op: BlockOp| -> Sector {
            let mut fwd_inv = vec![None; lat.sites()];
            let mut bwd_inv = vec![None; lat.sites()];
            for s in 0..lat.sites() {
                let (t, x) = lat.coords(s);
                if t + 1 < lat.nt {
                    fwd_inv[s] = Some(blk_inv(op.find(s, lat.site(t + 1, x as isize)).expect("forward hop"), b));
                }
                if t >= 1 {
                    bwd_inv[s] = Some(blk_inv(op.find(s, lat.site(t - 1, x as isize)).expect("backward hop"), b));
                }
            }
            Sector { op, fwd_inv, bwd_inv }
        };
        Ok(Arc::new(Dirac { bg: bg.clone(), params: params.clone(), layout, u: mk(dop), v: mk(eop) }))
    }

    pub fn lat(&self) -> &Lattice {
        &self.bg.lat
    }

    pub fn weight(&self) -> f64 {
        self.bg.lat.weight()
    }

    pub fn apply(&self, x: &DoubleSection) -> DoubleSection {
        let nu = self.layout.nu;
        let mut y = DoubleSection::zeros(&self.layout);
        let (yu, yv) = y.data.split_at_mut(nu);
        self.u.op.apply(&x.data[..nu], yu);
        self.v.op.apply(&x.data[nu..], yv);
        y
    }

    /// Rows (sites) of D+ whose stencil sees site `s`.
    pub fn stencil(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        let op = &self.u.op;
        (op.row_ptr[s]..op.row_ptr[s + 1]).map(move |k| op.cols[k])
    }

    /// Sparse matrix of D+ restricted to (row, col) global index pairs, as triplets.
    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        let b = self.layout.b;
        let mut out = Vec::new();
        for (off, sec) in [(0, &self.u), (self.layout.nu, &self.v)] {
            for (r, c, blk) in sec.op.entries() {
                for i in 0..b {
                    for j in 0..b {
                        let val = blk[i * b + j];
                        if val != C64::new(0.0, 0.0) {
                            out.push((off + r * b + i, off + c * b + j, val));
                        }
                    }
                }
            }
        }
        out
    }

    fn check_source(&self, f: &DoubleSection) -> Result<()> {
        let l = &self.layout;
        let nt = self.bg.lat.nt;
        for (g, v) in f.data.iter().enumerate() {
            if *v != C64::new(0.0, 0.0) {
                let t = l.time_of(g);
                if t == 0 || t + 1 == nt {
                    return Err(Error::Support(format!("source on boundary slice t={t}")));
                }
            }
        }
        Ok(())
    }

    pub fn solve_retarded(&self, f: &DoubleSection) -> Result<DoubleSection> {
        self.check_source(f)?;
        Ok(self.solve(f, Prop::Ret))
    }

    pub fn solve_advanced(&self, f: &DoubleSection) -> Result<DoubleSection> {
        self.check_source(f)?;
        Ok(self.solve(f, Prop::Adv))
    }

    pub fn solve_causal(&self, f: &DoubleSection) -> Result<DoubleSection> {
        self.check_source(f)?;
        Ok(self.solve(f, Prop::Causal))
    }

    /// Unchecked solve; boundary rows of `f` are ignored.
    pub fn solve(&self, f: &DoubleSection, kind: Prop) -> DoubleSection {
        match kind {
            Prop::Causal => {
                let a = self.solve(f, Prop::Ret);
                let b = self.solve(f, Prop::Adv);
                a.sub(&b)
            }
            _ => {
                let nu = self.layout.nu;
                let mut out = DoubleSection::zeros(&self.layout);
                let (ou, ov) = out.data.split_at_mut(nu);
                let fwd = kind == Prop::Ret;
                self.solve_sector(&self.u, &f.data[..nu], ou, fwd);
                self.solve_sector(&self.v, &f.data[nu..], ov, fwd);
                out
            }
        }
    }

    fn solve_sector(&self, sec: &Sector, f: &[C64], u: &mut [C64], forward: bool) {
        let lat = &self.bg.lat;
        let b = self.layout.b;
        let nx = lat.nx;
        let zero = C64::new(0.0, 0.0);
        let rows_nonzero = |t: usize| f[t * nx * b..(t + 1) * nx * b].iter().any(|v| *v != zero);
        let mut rhs = vec![zero; b];
        let mut tmp = vec![zero; b];
        let step = |t: usize, u: &mut [C64], rhs: &mut Vec<C64>, tmp: &mut Vec<C64>| {
            for x in 0..nx {
                let s = t * nx + x;
                rhs.copy_from_slice(&f[s * b..(s + 1) * b]);
                let target = if forward { s + nx } else { s - nx };
                for k in sec.op.row_ptr[s]..sec.op.row_ptr[s + 1] {
                    let c = sec.op.cols[k];
                    if c == target {
                        continue;
                    }
                    blk_mv_sub(&sec.op.blocks[k], b, &u[c * b..(c + 1) * b], rhs);
                }
                let inv = if forward { &sec.fwd_inv[s] } else { &sec.bwd_inv[s] };
                blk_mv(inv.as_ref().expect("hop"), b, rhs, tmp);
                u[target * b..(target + 1) * b].copy_from_slice(tmp);
            }
        };
        if forward {
            let Some(t0) = (1..lat.nt - 1).find(|&t| rows_nonzero(t)) else { return };
            for t in t0..lat.nt - 1 {
                step(t, u, &mut rhs, &mut tmp);
            }
        } else {
            let Some(t0) = (1..lat.nt - 1).rev().find(|&t| rows_nonzero(t)) else { return };
            for t in (1..=t0).rev() {
                step(t, u, &mut rhs, &mut tmp);
            }
        }
    }

    /// Propagate a homogeneous solution one slice forward: fills slice t+1 from
    /// slices t-1, t using row t.
    pub fn step_forward(&self, x: &mut DoubleSection, t: usize) {
        let nu = self.layout.nu;
        let b = self.layout.b;
        let nx = self.bg.lat.nx;
        let zero = C64::new(0.0, 0.0);
        let (xu, xv) = x.data.split_at_mut(nu);
        for (sec, u) in [(&self.u, xu), (&self.v, xv)] {
            let mut rhs = vec![zero; b];
            let mut tmp = vec![zero; b];
            for xs in 0..nx {
                let s = t * nx + xs;
                rhs.iter_mut().for_each(|v| *v = zero);
                for k in sec.op.row_ptr[s]..sec.op.row_ptr[s + 1] {
                    let c = sec.op.cols[k];
                    if c == s + nx {
                        continue;
                    }
                    blk_mv_sub(&sec.op.blocks[k], b, &u[c * b..(c + 1) * b], &mut rhs);
                }
                blk_mv(sec.fwd_inv[s].as_ref().expect("hop"), b, &rhs, &mut tmp);
                u[(s + nx) * b..(s + nx + 1) * b].copy_from_slice(&tmp);
            }
        }
    }

    /// Sites whose rows of D+ differ between the two operators.
    pub fn rows_differing(&self, other: &Dirac) -> Result<SiteRegion> {
        if self.layout != other.layout || !self.bg.same_lattice(&other.bg) {
            return Err(Error::LatticeMismatch);
        }
        let a = &self.u.op;
        let b = &other.u.op;
        let sites = self.layout.sites;
        let rows = (0..sites).filter(|&s| {
            let ra = a.row_ptr[s]..a.row_ptr[s + 1];
            let rb = b.row_ptr[s]..b.row_ptr[s + 1];
            ra.len() != rb.len() || ra.zip(rb).any(|(i, j)| a.cols[i] != b.cols[j] || a.blocks[i] != b.blocks[j])
        });
        Ok(SiteRegion::from_sites(sites, rows.collect::<Vec<_>>()))
    }

    /// Propagate a homogeneous solution one slice backward: fills slice t-1
    /// from slices t, t+1 using row t.
    pub fn step_backward(&self, x: &mut DoubleSection, t: usize) {
        let nu = self.layout.nu;
        let b = self.layout.b;
        let nx = self.bg.lat.nx;
        let zero = C64::new(0.0, 0.0);
        let (xu, xv) = x.data.split_at_mut(nu);
        for (sec, u) in [(&self.u, xu), (&self.v, xv)] {
            let mut rhs = vec![zero; b];
            let mut tmp = vec![zero; b];
            for xs in 0..nx {
                let s = t * nx + xs;
                rhs.iter_mut().for_each(|v| *v = zero);
                for k in sec.op.row_ptr[s]..sec.op.row_ptr[s + 1] {
                    let c = sec.op.cols[k];
                    if c + nx == s {
                        continue;
                    }
                    blk_mv_sub(&sec.op.blocks[k], b, &u[c * b..(c + 1) * b], &mut rhs);
                }
                blk_mv(sec.bwd_inv[s].as_ref().expect("hop"), b, &rhs, &mut tmp);
                u[(s - nx) * b..(s - nx + 1) * b].copy_from_slice(&tmp);
            }
        }
    }

    /// Solution of D+ u = 0 on rows 1..Nt-2 with the given data on slices (t0, t0+1).
    pub fn evolve_data(&self, t0: usize, cidx: &[usize], data: &[C64]) -> DoubleSection {
        let mut x = DoubleSection::zeros(&self.layout);
        for (&g, &d) in cidx.iter().zip(data) {
            x.data[g] = d;
        }
        for t in t0 + 1..self.bg.lat.nt - 1 {
            self.step_forward(&mut x, t);
        }
        for t in (1..=t0).rev() {
            self.step_backward(&mut x, t);
        }
        x
    }

    /// Global indices of Cauchy data on slices (t0, t0+1), ordered u(t0), u(t0+1), v(t0), v(t0+1).
    pub fn cauchy_indices(&self, t0: usize) -> Vec<usize> {
        let l = self.layout;
        let per = self.bg.lat.nx * l.b;
        let mut v = Vec::with_capacity(4 * per);
        for off in [0, l.nu] {
            for t in [t0, t0 + 1] {
                v.extend((0..per).map(|k| off + t * per + k));
            }
        }
        v
    }

    /// Source f with S+ f equal to the solution carrying the given data on
    /// slices (t0, t0+1):  f = rows_t0 D+(phi|t0+1) - rows_{t0+1} D+(phi|t0).
    pub fn cut_source(&self, t0: usize, cidx: &[usize], data: &[C64]) -> DoubleSection {
        let l = self.layout;
        let mut lo = DoubleSection::zeros(&l);
        let mut hi = DoubleSection::zeros(&l);
        for (&g, &d) in cidx.iter().zip(data) {
            if l.time_of(g) == t0 {
                lo.data[g] = d;
            } else {
                hi.data[g] = d;
            }
        }
        let ylo = self.apply(&lo);
        let yhi = self.apply(&hi);
        let mut f = DoubleSection::zeros(&l);
        for g in 0..l.n {
            let t = l.time_of(g);
            if t == t0 {
                f.data[g] = yhi.data[g];
            } else if t == t0 + 1 {
                f.data[g] = -ylo.data[g];
            }
        }
        f
    }

    /// Bilinear pairing <a, b> = w (a_v . b_u + a_u . b_v).
    pub fn pairing(&self, a: &DoubleSection, b: &DoubleSection) -> C64 {
        pairing(&self.layout, self.weight(), a, b)
    }

    pub fn causal_pairing(&self, u: &DoubleSection, v: &DoubleSection) -> Result<C64> {
        let sv = self.solve_causal(v)?;
        Ok(self.pairing(u, &sv))
    }

    /// Basis of on-shell configurations from unit Cauchy data on slices 0 and 1.
    pub fn onshell_basis(&self) -> Vec<DoubleSection> {
        let l = self.layout;
        let nt = self.bg.lat.nt;
        let per_slice = self.bg.lat.nx * l.b;
        let mut data_idx = Vec::new();
        for off in [0, l.nu] {
            for k in 0..2 * per_slice {
                data_idx.push(off + k);
            }
        }
        exec::map(data_idx.len(), |i| {
            let mut x = DoubleSection::unit(&l, data_idx[i]);
            for t in 1..nt - 1 {
                self.step_forward(&mut x, t);
            }
            x
        })
    }

    /// Columns of a propagator for unit sources at the given global indices.
    pub fn columns(&self, cols: &[usize], kind: Prop) -> Vec<DoubleSection> {
        let l = self.layout;
        exec::map(cols.len(), |k| {
            let f = DoubleSection::unit(&l, cols[k]);
            self.solve(&f, kind)
        })
    }

    /// Bilinear block  K[i,j] = <e_i, S e_j>  for the chosen propagator.
    pub fn pairing_block(&self, rows: &[usize], cols: &[usize], kind: Prop) -> DMatrix<C64> {
        let l = self.layout;
        let w = self.weight();
        let colv = self.columns(cols, kind);
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| colv[j].data[l.sigma(rows[i])] * w)
    }

    /// Dense propagator matrix (guarded by the dense cap).
    pub fn dense(&self, kind: Prop) -> Result<DMatrix<C64>> {
        let n = self.layout.n;
        if n > self.params.dense_cap {
            return Err(Error::Precondition(format!("dimension {n} exceeds dense cap {}", self.params.dense_cap)));
        }
        let cols: Vec<usize> = (0..n).filter(|&g| self.bg.lat.is_interior_time(self.layout.time_of(g))).collect();
        let colv = self.columns(&cols, kind);
        let mut m = DMatrix::zeros(n, n);
        for (k, &c) in cols.iter().enumerate() {
            for r in 0..n {
                m[(r, c)] = colv[k].data[r];
            }
        }
        Ok(m)
    }
}

pub fn pairing(l: &Layout, w: f64, a: &DoubleSection, b: &DoubleSection) -> C64 {
    let nu = l.nu;
    let mut s = C64::new(0.0, 0.0);
    for i in 0..nu {
        s += a.data[nu + i] * b.data[i] + a.data[i] * b.data[nu + i];
    }
    s * w
}

/// Involution (u, v)* = (J' conj v, J conj u), J = -i gamma^0, J' = i gamma^0.
pub fn involution(l: &Layout, x: &DoubleSection) -> DoubleSection {
    let mut out = DoubleSection::zeros(l);
    let dv = l.dim_v;
    let nu = l.nu;
    // i gamma^0 = [[0, i], [-i, 0]]
    for s in 0..l.sites {
        for a in 0..dv {
            let u0 = x.data[s * l.b + a];
            let u1 = x.data[s * l.b + dv + a];
            let v0 = x.data[nu + s * l.b + a];
            let v1 = x.data[nu + s * l.b + dv + a];
            // u-part: J' conj v = i gamma^0 conj v
            out.data[s * l.b + a] = I * v1.conj();
            out.data[s * l.b + dv + a] = -I * v0.conj();
            // v-part: J conj u = -i gamma^0 conj u
            out.data[nu + s * l.b + a] = -I * u1.conj();
            out.data[nu + s * l.b + dv + a] = I * u0.conj();
        }
    }
    out
}

/// The involution sends e_g to phase * e_pi(g) (before conjugation); returns (pi(g), phase).
pub fn involution_map(l: &Layout, g: usize) -> (usize, C64) {
    let v_part = l.is_v(g);
    let local = g % l.nu;
    let site = local / l.b;
    let spin = (local % l.b) / l.dim_v;
    let a = local % l.dim_v;
    let target = l.index(!v_part, site, 1 - spin, a);
    // C[u0, v1] = i, C[u1, v0] = -i, C[v0, u1] = -i, C[v1, u0] = i
    let phase = if spin == 1 { I } else { -I };
    let phase = if v_part { phase } else { -phase };
    (target, phase)
}

/// Sparse matrix C with x* = C conj(x): list of (row, col, value).
pub fn involution_entries(l: &Layout) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::with_capacity(l.n);
    for g in 0..l.n {
        let mut e = DoubleSection::zeros(l);
        e.data[g] = C64::new(1.0, 0.0);
        let s = involution(l, &e);
        for (r, v) in s.data.iter().enumerate() {
            if *v != C64::new(0.0, 0.0) {
                out.push((r, g, *v));
            }
        }
    }
    out
}

/// Stability bound for the leapfrog with Wilson term; the free dispersion
/// sin(E dt) = dt*eps(k) must stay below one.
pub fn cfl_guard(lat: &Lattice, mmax: f64, r: f64) -> Result<()> {
    let mut emax: f64 = 0.0;
    let n = 512;
    for i in 0..=n {
        let k = std::f64::consts::PI * i as f64 / n as f64;
        let s = k.sin() / lat.dx;
        let m = mmax + r * (1.0 - k.cos()) / lat.dx;
        emax = emax.max((s * s + m * m).sqrt());
    }
    let q = lat.dt * emax;
    if q >= 1.0 - 1e-6 {
        return Err(Error::Cfl(format!("dt * max dispersion = {q:.6} >= 1")));
    }
    Ok(())
}

/// Plane wave w e^{i(kx - E t)} on lattice sites (u-part only, Abelian, zero connection).
pub fn plane_wave(l: &Layout, lat: &Lattice, k: f64, e: f64, w: [C64; 2]) -> DoubleSection {
    let mut out = DoubleSection::zeros(l);
    for s in 0..lat.sites() {
        let (t, x) = lat.coords(s);
        let ph = (I * (k * x as f64 * lat.dx - e * t as f64 * lat.dt)).exp();
        for sp in 0..2 {
            out.data[l.index(false, s, sp, 0)] = w[sp] * ph;
        }
    }
    out
}

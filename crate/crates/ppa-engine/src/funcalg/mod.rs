//! Graded functional algebra.
//!
//! A functional is a finite sum of components, each a fully antisymmetric
//! coefficient tensor c of some grade k and hbar order. Evaluation on a word
//! of configurations is  F(B_1 ^ ... ^ B_k) = sum_I c_I B_1(i_1) ... B_k(i_k),
//! so psi(f) has c = P f. The wedge product is the shuffle sum, the
//! derivative contracts the first slot, and Gamma_K F = 1/2 sum W_ij c_ij...
//! with W the kernel in coefficient coordinates. hbar is kept as an integer
//! exponent; numerically hbar = 1.

pub mod fields;
pub mod tensor;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dirac::{involution_map, DoubleSection, Layout};
use crate::lattice::{Lattice, SiteRegion};
use crate::states::Kernel;
use crate::{exec, Error, Result, C64};
pub use tensor::Component;
use tensor::{digits, pow, shuffle_place, union};

const ZERO: C64 = C64::new(0.0, 0.0);

pub const DEFAULT_MAX_GRADE: usize = 4;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Functional {
    /// sorted by (grade, hbar), at most one component per key
    pub comps: Vec<Component>,
}

impl Functional {
    pub fn zero() -> Self {
        Functional { comps: vec![] }
    }

    pub fn scalar(v: C64) -> Self {
        Self::from_components(vec![Component::scalar(v, 0)])
    }

    pub fn from_components(comps: Vec<Component>) -> Self {
        let mut comps: Vec<Component> = comps.into_iter().filter(|c| c.t.iter().any(|v| *v != ZERO)).collect();
        comps.sort_by_key(|c| (c.grade, c.hbar));
        let mut out: Vec<Component> = Vec::with_capacity(comps.len());
        for c in comps {
            if let Some(last) = out.last_mut() {
                if last.grade == c.grade && last.hbar == c.hbar {
                    let u = union(&last.idx, &c.idx);
                    let mut a = last.embed(&u);
                    let b = c.embed(&u);
                    for (x, y) in a.t.iter_mut().zip(&b.t) {
                        *x += y;
                    }
                    *last = a;
                    continue;
                }
            }
            out.push(c);
        }
        out.retain(|c| c.t.iter().any(|v| *v != ZERO));
        Functional { comps: out }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn add(&self, o: &Functional) -> Functional {
        Self::from_components(self.comps.iter().chain(&o.comps).cloned().collect())
    }

    pub fn sub(&self, o: &Functional) -> Functional {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Functional {
        if c == ZERO {
            return Functional::zero();
        }
        Functional { comps: self.comps.iter().map(|x| x.scaled(c)).collect() }
    }

    /// Largest coefficient over all components.
    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn grade_part(&self, k: usize) -> Functional {
        Functional { comps: self.comps.iter().filter(|c| c.grade == k).cloned().collect() }
    }

    pub fn hbar_part(&self, h: i32) -> Functional {
        Functional { comps: self.comps.iter().filter(|c| c.hbar == h).cloned().collect() }
    }

    /// Multiply by hbar^k.
    pub fn hbar_shift(&self, k: i32) -> Functional {
        Functional { comps: self.comps.iter().map(|c| Component { hbar: c.hbar + k, ..c.clone() }).collect() }
    }

    pub fn grades(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.comps.iter().map(|c| c.grade).collect();
        g.dedup();
        g
    }

    pub fn top_grade(&self) -> usize {
        self.comps.iter().map(|c| c.grade).max().unwrap_or(0)
    }

    /// Sum of grade-0 components at hbar = 1.
    pub fn c_number(&self) -> C64 {
        self.comps.iter().filter(|c| c.grade == 0).map(|c| c.t[0]).sum()
    }

    pub fn truncate(&self, max_grade: usize) -> Functional {
        Functional { comps: self.comps.iter().filter(|c| c.grade <= max_grade).cloned().collect() }
    }

    pub fn compact(&self) -> Functional {
        Functional { comps: self.comps.iter().map(|c| c.compact()).collect() }
    }

    /// Union of lattice sites touched by nonzero kernel entries.
    pub fn support(&self, l: &Layout) -> SiteRegion {
        let mut r = SiteRegion::empty(l.sites);
        for c in &self.comps {
            let c = c.compact();
            for &g in &c.idx {
                r.insert(l.site_of(g));
            }
        }
        r
    }

    /// Every nonzero entry joins sites at mutual distance <= radius.
    pub fn is_local(&self, l: &Layout, lat: &Lattice, radius: usize) -> bool {
        for c in &self.comps {
            if c.grade < 2 {
                continue;
            }
            let n = c.n();
            let mut d = vec![0; c.grade];
            for (f, v) in c.t.iter().enumerate() {
                if *v == ZERO {
                    continue;
                }
                digits(f, n, c.grade, &mut d);
                for a in 0..c.grade {
                    for b in a + 1..c.grade {
                        let (ta, xa) = lat.coords(l.site_of(c.idx[d[a]]));
                        let (tb, xb) = lat.coords(l.site_of(c.idx[d[b]]));
                        if ta.abs_diff(tb) > radius || lat.xdist(xa, xb) > radius {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn max_antisymmetry_defect(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.antisymmetry_defect()))
    }
}

/// Linear field psi(f): coefficient P f.
pub fn psi(l: &Layout, w: f64, f: &DoubleSection) -> Functional {
    let idx: Vec<usize> = (0..l.n).filter(|&i| f.data[l.sigma(i)] != ZERO).collect();
    let t = idx.iter().map(|&i| f.data[l.sigma(i)] * w).collect();
    Functional::from_components(vec![Component { grade: 1, hbar: 0, idx, t }])
}

pub fn wedge(f: &Functional, g: &Functional, max_grade: usize) -> Result<Functional> {
    let mut out = Vec::new();
    for a in &f.comps {
        for b in &g.comps {
            let k = a.grade + b.grade;
            if k > max_grade {
                return Err(Error::GradeOverflow(k, max_grade));
            }
            out.push(cross(a, b, 0, None));
        }
    }
    Ok(Functional::from_components(out))
}

/// Antisymmetrised product of the n-fold contraction of a and b through W.
fn cross(a: &Component, b: &Component, n: usize, w: Option<&DMatrix<C64>>) -> Component {
    let (p, q) = (a.grade - n, b.grade - n);
    let u = union(&a.idx, &b.idx);
    let pos_a = tensor::positions(&a.idx, &u);
    let pos_b = tensor::positions(&b.idx, &u);
    let (ni, nj) = (a.n(), b.n());
    let x: Vec<C64> = if n == 0 {
        let mut x = Vec::with_capacity(a.t.len() * b.t.len());
        for va in &a.t {
            for vb in &b.t {
                x.push(va * vb);
            }
        }
        x
    } else {
        let w = w.expect("contraction kernel");
        // first n axes of a pushed through W^T
        let wt = w.transpose();
        let mut t = a.t.clone();
        let mut dims = vec![ni; a.grade];
        for ax in 0..n {
            let (nt, nd) = tensor::mode_mul(&t, &dims, ax, &wt);
            t = nt;
            dims = nd;
        }
        let r = pow(nj, n);
        let fa = DMatrix::from_row_slice(r, pow(ni, p), &t);
        let gb = DMatrix::from_row_slice(r, pow(nj, q), &b.t);
        let xm = fa.transpose() * gb;
        let mut x = Vec::with_capacity(xm.len());
        for i in 0..xm.nrows() {
            for j in 0..xm.ncols() {
                x.push(xm[(i, j)]);
            }
        }
        x
    };
    let mut sign = 1.0;
    for m in 0..n {
        if (a.grade - m + 1) % 2 == 1 {
            sign = -sign;
        }
    }
    let fact: f64 = (1..=n).map(|v| v as f64).product();
    let coef = C64::from(sign / fact);
    let t = if p + q == 0 { vec![x[0]] } else { shuffle_place(&x, p, ni, q, nj, &pos_a, &pos_b, u.len()) };
    let idx = if p + q == 0 { vec![] } else { u };
    Component { grade: p + q, hbar: a.hbar + b.hbar + n as i32, idx, t: t.into_iter().map(|v| v * coef).collect() }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarOpts {
    pub max_grade: usize,
    /// drop output components above this grade (computed terms only)
    pub max_out_grade: Option<usize>,
}

impl Default for StarOpts {
    fn default() -> Self {
        StarOpts { max_grade: DEFAULT_MAX_GRADE, max_out_grade: None }
    }
}

/// F star_K G = wedge o exp(hbar Gamma^x_K) (F x G).
pub fn star(f: &Functional, g: &Functional, k: &Kernel, opts: StarOpts) -> Result<Functional> {
    let mut jobs = Vec::new();
    for (ia, a) in f.comps.iter().enumerate() {
        for (ib, b) in g.comps.iter().enumerate() {
            for n in 0..=a.grade.min(b.grade) {
                let og = a.grade + b.grade - 2 * n;
                if let Some(m) = opts.max_out_grade {
                    if og > m {
                        continue;
                    }
                } else if og > opts.max_grade {
                    return Err(Error::GradeOverflow(og, opts.max_grade));
                }
                jobs.push((ia, ib, n));
            }
        }
    }
    // one kernel block per component pair
    let mut pairs: Vec<(usize, usize)> = jobs.iter().filter(|j| j.2 > 0).map(|j| (j.0, j.1)).collect();
    pairs.dedup();
    let blocks = exec::map(pairs.len(), |p| {
        let (ia, ib) = pairs[p];
        k.w_block(&f.comps[ia].idx, &g.comps[ib].idx)
    });
    let comps = exec::map(jobs.len(), |j| {
        let (ia, ib, n) = jobs[j];
        let w = if n > 0 { Some(&blocks[pairs.iter().position(|&p| p == (ia, ib)).unwrap()]) } else { None };
        cross(&f.comps[ia], &g.comps[ib], n, w)
    });
    Ok(Functional::from_components(comps))
}

/// Gamma_K F = 1/2 sum W_ij c_{ij...}; raises the hbar order by one.
pub fn gamma(f: &Functional, k: &Kernel) -> Functional {
    let comps = f
        .comps
        .iter()
        .filter(|c| c.grade >= 2)
        .map(|c| {
            let w = k.w_block(&c.idx, &c.idx);
            let n = c.n();
            let inner = pow(n, c.grade - 2);
            let mut t = vec![ZERO; inner];
            for i in 0..n {
                for j in 0..n {
                    let wij = w[(i, j)];
                    if wij == ZERO {
                        continue;
                    }
                    let base = (i * n + j) * inner;
                    for (o, s) in t.iter_mut().zip(&c.t[base..base + inner]) {
                        *o += 0.5 * wij * s;
                    }
                }
            }
            let idx = if c.grade == 2 { vec![] } else { c.idx.clone() };
            Component { grade: c.grade - 2, hbar: c.hbar + 1, idx, t }
        })
        .collect();
    Functional::from_components(comps)
}

/// exp(hbar Gamma_K) F, a finite sum.
pub fn ordering_transport(f: &Functional, k: &Kernel) -> Functional {
    let mut sum = f.clone();
    let mut term = f.clone();
    let mut n = 1.0;
    while term.top_grade() >= 2 {
        term = gamma(&term, k).scale(C64::from(1.0 / n));
        sum = sum.add(&term);
        n += 1.0;
    }
    sum
}

/// F*(B) = conj F(B*), with B* reversing argument order.
pub fn involution(f: &Functional, l: &Layout) -> Functional {
    let comps = f
        .comps
        .iter()
        .map(|c| {
            let k = c.grade;
            if k == 0 {
                return Component::scalar(c.t[0].conj(), c.hbar);
            }
            let maps: Vec<(usize, C64)> = c.idx.iter().map(|&g| involution_map(l, g)).collect();
            let mut nidx: Vec<usize> = maps.iter().map(|m| m.0).collect();
            nidx.sort_unstable();
            // new position j <- old position of pi(nidx[j])
            let src: Vec<usize> = nidx.iter().map(|&j| c.idx.binary_search(&involution_map(l, j).0).unwrap()).collect();
            let ph: Vec<C64> = nidx.iter().map(|&j| involution_map(l, j).1.conj()).collect();
            let rev = if (k * (k - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let n = c.n();
            let mut t = vec![ZERO; c.t.len()];
            let mut d = vec![0; k];
            for (g, v) in t.iter_mut().enumerate() {
                digits(g, n, k, &mut d);
                let mut f = 0;
                let mut p = C64::from(rev);
                for &x in &d {
                    f = f * n + src[x];
                    p *= ph[x];
                }
                *v = p * c.t[f].conj();
            }
            Component { grade: k, hbar: c.hbar, idx: nidx, t }
        })
        .collect();
    Functional::from_components(comps)
}

/// F^(1)(u): contraction of the first slot with u.
pub fn derivative(f: &Functional, u: &DoubleSection) -> Functional {
    let comps = f
        .comps
        .iter()
        .filter(|c| c.grade >= 1)
        .map(|c| {
            let uv: Vec<C64> = c.idx.iter().map(|&g| u.data[g]).collect();
            c.contract_first(&uv)
        })
        .collect();
    Functional::from_components(comps)
}

/// F(B_1 ^ ... ^ B_k) summed over hbar orders of grade k.
pub fn evaluate(f: &Functional, words: &[DoubleSection]) -> C64 {
    let k = words.len();
    let mut s = ZERO;
    for c in f.comps.iter().filter(|c| c.grade == k) {
        let mut cur = c.clone();
        for w in words {
            let v: Vec<C64> = c.idx.iter().map(|&g| w.data[g]).collect();
            cur = cur.contract_first(&v);
        }
        s += cur.t[0];
    }
    s
}

/// Max |F| over on-shell words: exhaustive for grades <= 2, random
/// normalised words for higher grades. Each hbar order is tested separately.
pub fn onshell_residual(f: &Functional, basis: &[DoubleSection], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in &f.comps {
        let r = match c.grade {
            0 => c.t[0].norm(),
            1 | 2 => {
                let b = DMatrix::from_fn(c.n(), basis.len(), |i, j| basis[j].data[c.idx[i]]);
                let m = if c.grade == 1 {
                    DMatrix::from_row_slice(1, c.n(), &c.t) * &b
                } else {
                    b.transpose() * DMatrix::from_row_slice(c.n(), c.n(), &c.t) * &b
                };
                m.iter().fold(0.0f64, |a, v| a.max(v.norm()))
            }
            k => {
                let single = Functional { comps: vec![c.clone()] };
                let mut m: f64 = 0.0;
                for _ in 0..32 {
                    let words: Vec<DoubleSection> = (0..k).map(|_| random_onshell(basis, &mut rng)).collect();
                    m = m.max(evaluate(&single, &words).norm());
                }
                m
            }
        };
        worst = worst.max(r);
    }
    worst
}

pub const ONSHELL_TOL: f64 = 1e-9;

pub fn onshell_zero(f: &Functional, basis: &[DoubleSection], seed: u64) -> (bool, f64) {
    let r = onshell_residual(f, basis, seed);
    (r <= ONSHELL_TOL, r)
}

/// Random unit-norm combination of on-shell basis elements.
pub fn random_onshell(basis: &[DoubleSection], rng: &mut ChaCha8Rng) -> DoubleSection {
    let n = basis[0].data.len();
    let mut out = DoubleSection { data: vec![ZERO; n] };
    let mut norm = 0.0;
    let coefs: Vec<C64> = basis.iter().map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    for c in &coefs {
        norm += c.norm_sqr();
    }
    let s = C64::from(1.0 / norm.sqrt());
    for (c, b) in coefs.iter().zip(basis) {
        out.axpy(c * s, b);
    }
    out
}

/// Random component of given grade on an index set (antisymmetrised).
pub fn random_component(idx: &[usize], grade: usize, rng: &mut ChaCha8Rng) -> Component {
    let mut idx = idx.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let mut f = Functional::scalar(C64::new(1.0, 0.0));
    for _ in 0..grade {
        let t: Vec<C64> = idx.iter().map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let lin = Functional::from_components(vec![Component { grade: 1, hbar: 0, idx: idx.clone(), t }]);
        f = wedge(&f, &lin, grade).expect("grade within bound");
    }
    // a sum of two decomposables is generic enough for grade 2
    if grade == 2 {
        let t1: Vec<C64> = idx.iter().map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let t2: Vec<C64> = idx.iter().map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let a = Functional::from_components(vec![Component { grade: 1, hbar: 0, idx: idx.clone(), t: t1 }]);
        let b = Functional::from_components(vec![Component { grade: 1, hbar: 0, idx: idx.clone(), t: t2 }]);
        f = f.add(&wedge(&a, &b, 2).expect("grade 2"));
    }
    f.comps.into_iter().next().unwrap_or(Component { grade, hbar: 0, idx: idx.clone(), t: vec![ZERO; pow(idx.len(), grade)] })
}

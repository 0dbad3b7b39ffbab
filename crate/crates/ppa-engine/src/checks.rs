//! Seeded residual batteries shared by the experiment runner and the
//! acceptance suite. Probe positions are placed relative to the lattice so
//! the same battery runs on any size that leaves room for them.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::background::Perturbation;
use crate::dirac::{eta, gamma0, gamma1, involution as section_involution, Dirac, DoubleSection, Prop};
use crate::funcalg::fields::current;
use crate::funcalg::{involution, onshell_residual, psi, random_component, star, wedge, Functional, StarOpts};
use crate::moller::{identity_before, tau_ret, MollerMap};
use crate::states::{random_patch, transport_state, Kernel, TwoPoint};
use crate::tproducts::Ordering;
use crate::{Error, Result, C64, I};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sites_idx(d: &Dirac, sites: &[(usize, isize)]) -> Vec<usize> {
    let mut v: Vec<usize> = sites.iter().flat_map(|&(t, x)| d.layout.site_indices(d.lat().site(t, x)).collect::<Vec<_>>()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Random functional of one grade on the given sites.
pub fn local_functional(d: &Dirac, sites: &[(usize, isize)], grade: usize, rng: &mut ChaCha8Rng) -> Functional {
    Functional::from(random_component(&sites_idx(d, sites), grade, rng))
}

/// Random section on the given sites.
pub fn local_section(d: &Dirac, sites: &[(usize, isize)], rng: &mut ChaCha8Rng) -> DoubleSection {
    let mut s = DoubleSection::zeros(&d.layout);
    for i in sites_idx(d, sites) {
        s.data[i] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    s
}

/// j(A) for A on single links (t, x, mu, value), first Lie component.
pub fn link_current(d: &Dirac, links: &[(usize, isize, usize, f64)]) -> Result<Functional> {
    let mut a = Perturbation::zero(&d.bg);
    let ng = d.bg.n_gen();
    for &(t, x, mu, v) in links {
        a.a[(d.lat().site(t, x) * 2 + mu) * ng] = v;
    }
    current(d, &a)
}

/// Time slices used by the batteries: early, middle, late.
fn slices(d: &Dirac) -> Result<(usize, usize, usize)> {
    let nt = d.lat().nt;
    if nt < 10 || d.lat().nx < 4 {
        return Err(Error::Precondition(format!("lattice {}x{} too small for the probe layout", nt, d.lat().nx)));
    }
    Ok((nt / 2 - 3, nt / 2, nt / 2 + 3))
}

#[derive(Clone, Debug, Default)]
pub struct AlgebraFloor {
    pub clifford: f64,
    pub wedge_commutativity: f64,
    pub involution: f64,
    pub retarded_support: f64,
}

impl AlgebraFloor {
    pub fn max(&self) -> f64 {
        self.clifford.max(self.wedge_commutativity).max(self.involution).max(self.retarded_support)
    }
}

pub fn algebra_floor(d: &Arc<Dirac>, omega: &Arc<TwoPoint>, seed: u64) -> Result<AlgebraFloor> {
    let mut out = AlgebraFloor::default();
    let g = [gamma0(), gamma1()];
    for mu in 0..2 {
        for nu in 0..2 {
            let ac = &g[mu] * &g[nu] + &g[nu] * &g[mu];
            let want = crate::background::Mat::identity(2, 2) * C64::from(2.0 * eta(mu, nu));
            out.clifford = out.clifford.max((ac - want).iter().fold(0.0, |m, v| m.max(v.norm())));
        }
    }
    let (t0, tm, t1) = slices(d)?;
    let l = d.layout;
    let mut r = rng(seed);
    for (ga, gb) in [(1, 1), (1, 2), (2, 2), (1, 3)] {
        let f = local_functional(d, &[(tm, 1), (tm, 2)], ga, &mut r);
        let h = local_functional(d, &[(tm + 1, 2)], gb, &mut r);
        let sign = if ga * gb % 2 == 1 { -1.0 } else { 1.0 };
        let fg = wedge(&f, &h, 6)?;
        let gf = wedge(&h, &f, 6)?;
        out.wedge_commutativity = out.wedge_commutativity.max(fg.sub(&gf.scale(C64::from(sign))).max_abs());
    }
    for grade in 0..4 {
        let f = local_functional(d, &[(tm, 1), (tm + 1, 1)], grade, &mut r);
        out.involution = out.involution.max(involution(&involution(&f, &l), &l).sub(&f).max_abs());
    }
    // S_ret f vanishes before supp f, and R(F; G) vanishes for G after F
    let f = local_section(d, &[(tm, 2)], &mut r);
    let sf = d.solve(&f, Prop::Ret);
    let before = (0..l.n).filter(|&k| l.time_of(k) < tm).fold(0.0f64, |m, k| m.max(sf.data[k].norm()));
    let ord = Ordering::new(d.clone(), omega.clone(), omega.clone());
    let early = link_current(d, &[(t0, 2, 1, 0.8)])?;
    let late = link_current(d, &[(t1, 2, 1, 0.5)])?;
    let rs = ord.retarded(&early, &late)?.rep.max_abs();
    out.retarded_support = before.max(rs);
    Ok(out)
}

/// max over probe pairs of |psi(u) * psi(v)* + psi(v)* * psi(u) - i hbar S(u, v*)|.
pub fn car(d: &Arc<Dirac>, omega: &Arc<TwoPoint>, pairs: usize, seed: u64) -> f64 {
    let k = Kernel::State(omega.clone());
    let l = d.layout;
    let nt = d.lat().nt;
    let mut r = rng(seed);
    let probes: Vec<(DoubleSection, DoubleSection)> =
        (0..pairs).map(|_| (random_patch(d, &mut r, 1, nt - 2), random_patch(d, &mut r, 1, nt - 2))).collect();
    let o = StarOpts::default();
    crate::exec::map(pairs, |i| {
        let (u, v) = &probes[i];
        let pu = psi(&l, d.weight(), u);
        let pv = involution(&psi(&l, d.weight(), v), &l);
        let ac = star(&pu, &pv, &k, o).and_then(|a| Ok(a.add(&star(&pv, &pu, &k, o)?)));
        let Ok(ac) = ac else { return f64::INFINITY };
        let sv = d.solve(&section_involution(&l, v), Prop::Causal);
        let expect = I * d.pairing(u, &sv);
        ac.sub(&Functional::scalar(expect).hbar_shift(1)).max_abs()
    })
    .into_iter()
    .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Default)]
pub struct MollerChecks {
    /// |r u - u| before the change
    pub identity_before: f64,
    /// |D+ r u| on interior rows for solutions u of the changed operator
    pub intertwining: f64,
}

pub fn moller(d: &Arc<Dirac>, dp: &Arc<Dirac>, probes: usize, seed: u64) -> Result<MollerChecks> {
    let r = MollerMap::new(d, dp)?;
    let nt = d.lat().nt;
    let l = d.layout;
    let mut g = rng(seed);
    let mut out = MollerChecks::default();
    for _ in 0..probes {
        let f = random_patch(d, &mut g, 1, nt - 2);
        let u = dp.solve(&f, Prop::Causal);
        out.identity_before = out.identity_before.max(identity_before(&r, &u));
        let du = d.apply(&r.apply(&u));
        let m = (0..l.n).filter(|&k| (1..nt - 1).contains(&l.time_of(k))).fold(0.0f64, |m, k| m.max(du.data[k].norm()));
        out.intertwining = out.intertwining.max(m);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct TauIso {
    pub homomorphism: f64,
    pub star_compat: f64,
    pub onshell: f64,
}

/// tau_ret from functionals on `dp` back to `d`, with omega transported to `dp`.
pub fn tau_iso(d: &Arc<Dirac>, dp: &Arc<Dirac>, omega: &Arc<TwoPoint>, pairs: usize, seed: u64) -> Result<TauIso> {
    let wp = Arc::new(transport_state(omega, d, dp)?);
    let (k, kp) = (Kernel::State(omega.clone()), Kernel::State(wp));
    let (_, tm, _) = slices(d)?;
    let l = d.layout;
    let nx = d.lat().nx as isize;
    let o = StarOpts::default();
    let mut g = rng(seed);
    let mut out = TauIso::default();
    let span = (d.lat().nt - 4) as isize;
    for _ in 0..pairs {
        let (ta, tb) = (g.gen_range(2..2 + span) as usize, g.gen_range(2..2 + span) as usize);
        let (xa, xb) = (g.gen_range(0..nx), g.gen_range(0..nx));
        let f = local_functional(d, &[(ta, xa), (ta, xa + 1)], 2, &mut g);
        let h = local_functional(d, &[(tb, xb)], 2, &mut g);
        let lhs = tau_ret(&star(&f, &h, &kp, o)?, d, dp)?;
        let rhs = star(&tau_ret(&f, d, dp)?, &tau_ret(&h, d, dp)?, &k, o)?;
        out.homomorphism = out.homomorphism.max(lhs.sub(&rhs).max_abs());
        let a = tau_ret(&involution(&f, &l), d, dp)?;
        let b = involution(&tau_ret(&f, d, dp)?, &l);
        out.star_compat = out.star_compat.max(a.sub(&b).max_abs());
    }
    // psi(D' g) ^ psi(u) vanishes on solutions of the changed operator
    let basis = d.onshell_basis();
    for s in 0..4 {
        let gs = local_section(d, &[(tm, 1 + s), (tm + 1, 1 + s)], &mut g);
        let u = local_section(d, &[(tm - 1, 2)], &mut g);
        let f = wedge(&psi(&l, d.weight(), &dp.apply(&gs)), &psi(&l, d.weight(), &u), 2)?;
        out.onshell = out.onshell.max(onshell_residual(&tau_ret(&f, d, dp)?, &basis, seed + s as u64));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct Axioms {
    pub factorization: f64,
    pub source_term: f64,
    pub unitarity: f64,
    pub expansion: f64,
    pub symmetry: f64,
}

/// Time-ordered-product axioms for (omega, H) on fixed probe layouts.
pub fn axioms(d: &Arc<Dirac>, omega: &Arc<TwoPoint>, h: &Arc<TwoPoint>, seed: u64) -> Result<Axioms> {
    let ord = Ordering::new(d.clone(), omega.clone(), h.clone());
    let (t0, tm, t1) = slices(d)?;
    let mut g = rng(seed);
    let mut out = Axioms::default();
    let late = local_functional(d, &[(t1, 2), (t1, 3)], 2, &mut g);
    let early = local_functional(d, &[(t0, 2), (t0 + 1, 2)], 2, &mut g);
    let jl = link_current(d, &[(t1, 1, 0, 0.5), (t1, 1, 1, -0.3)])?;
    let je = link_current(d, &[(t0, 3, 1, 0.9)])?;
    out.factorization = ord.causal_factorization_residual(&late, &early)?.max(ord.causal_factorization_residual(&jl, &je)?);

    let jg = link_current(d, &[(tm, 2, 1, 0.8), (tm, 3, 0, -0.4)])?;
    for _ in 0..4 {
        let f = local_section(d, &[(tm - 1, 2), (tm, 2), (tm + 1, 3)], &mut g);
        out.source_term = out.source_term.max(ord.source_term_residual(&f, &jg)?);
    }

    let j1 = link_current(d, &[(tm, 2, 1, 0.8)])?;
    let j2 = link_current(d, &[(tm + 1, 2, 0, 0.3), (tm + 1, 3, 1, 0.6)])?;
    let j3 = link_current(d, &[(tm, 2, 0, 0.6)])?;
    let fa = local_functional(d, &[(tm, 2), (tm, 3)], 2, &mut g);
    let fb = local_functional(d, &[(t1, 2)], 2, &mut g);
    for (a, b) in [(&j1, &j2), (&j1, &j1), (&j3, &j3), (&fa, &fb)] {
        out.unitarity = out.unitarity.max(ord.unitarity_residual(a, b)?);
    }

    let fe = local_functional(d, &[(tm, 2), (tm, 3)], 2, &mut g);
    let gl = link_current(d, &[(tm + 1, 2, 1, 0.5)])?;
    let fo = local_functional(d, &[(tm - 1, 2)], 1, &mut g);
    for _ in 0..3 {
        let u = local_section(d, &[(tm - 1, 2), (tm, 2), (tm, 3), (tm + 1, 2)], &mut g);
        out.expansion = out.expansion.max(ord.expansion_residual(&fe, &gl, &u)?).max(ord.expansion_residual(&fo, &gl, &u)?);
    }

    let a = local_functional(d, &[(tm, 2)], 1, &mut g);
    let b = local_functional(d, &[(tm + 1, 3)], 1, &mut g);
    for (x, y) in [(&fe, &gl), (&a, &b), (&a, &fe)] {
        out.symmetry = out.symmetry.max(ord.symmetry_residual(x, y)?);
    }
    Ok(out)
}

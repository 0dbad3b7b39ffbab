//! Ordered functionals, time-ordered and retarded products, and the axiom
//! residuals used by the test battery.
//!
//! T(F_1, ..., F_k) in the omega representative is
//!     alpha_H F_1 star_{omega_F} alpha_H F_2 star_{omega_F} ... ,
//! with alpha_H F = exp(hbar Gamma_{omega - H}) F the self-ordering of each
//! factor and omega_F = omega + i <., S_adv .> the cross kernel. Since
//! omega_F is antisymmetric this expansion is graded symmetric.

use std::sync::Arc;

use crate::dirac::{Dirac, DoubleSection, Prop};
use crate::funcalg::{self, derivative, involution, ordering_transport, star, Functional, StarOpts};
use crate::states::{feynman_kernel, Kernel, TwoPoint};
use crate::{Error, Result, C64, I};

/// Kernels may join sites at most this far apart.
pub const LOCAL_RADIUS: usize = 2;
pub const MAX_FACTORS: usize = 3;

/// A member of the family {F_omega}: its representative in one state.
#[derive(Clone, Debug)]
pub struct OrderedFunctional {
    pub rep: Functional,
    pub state: Arc<TwoPoint>,
}

impl OrderedFunctional {
    /// Representative in another state: F_omega' = exp(hbar Gamma_{omega' - omega}) F_omega.
    pub fn in_state(&self, other: &Arc<TwoPoint>) -> OrderedFunctional {
        if Arc::ptr_eq(other, &self.state) {
            return self.clone();
        }
        let k = Kernel::diff(&Kernel::State(other.clone()), &Kernel::State(self.state.clone()));
        OrderedFunctional { rep: ordering_transport(&self.rep, &k), state: other.clone() }
    }
}

/// Everything needed to order functionals on one background.
#[derive(Clone, Debug)]
pub struct Ordering {
    pub dirac: Arc<Dirac>,
    pub omega: Arc<TwoPoint>,
    pub h: Arc<TwoPoint>,
    pub opts: StarOpts,
    /// add the k = 2 c-number contact that restores unitarity for even
    /// factors sharing a temporal link
    pub unitary_contact: bool,
}

impl Ordering {
    pub fn new(dirac: Arc<Dirac>, omega: Arc<TwoPoint>, h: Arc<TwoPoint>) -> Self {
        Ordering { dirac, omega, h, opts: StarOpts::default(), unitary_contact: true }
    }

    pub fn with_opts(mut self, opts: StarOpts) -> Self {
        self.opts = opts;
        self
    }

    pub fn with_unitary_contact(mut self, on: bool) -> Self {
        self.unitary_contact = on;
        self
    }

    /// Same ordering prescription, represented in another state.
    pub fn with_state(&self, omega: Arc<TwoPoint>) -> Self {
        Ordering { omega, ..self.clone() }
    }

    pub fn omega_kernel(&self) -> Kernel {
        Kernel::State(self.omega.clone())
    }

    /// omega - H
    pub fn ordering_kernel(&self) -> Kernel {
        Kernel::diff(&Kernel::State(self.omega.clone()), &Kernel::State(self.h.clone()))
    }

    pub fn feynman(&self) -> Kernel {
        feynman_kernel(&self.omega, &self.dirac)
    }

    fn wrap(&self, rep: Functional) -> OrderedFunctional {
        OrderedFunctional { rep, state: self.omega.clone() }
    }

    /// alpha_H(F), defined on local F only.
    pub fn order(&self, f: &Functional) -> Result<OrderedFunctional> {
        Ok(self.wrap(self.alpha(f)?))
    }

    fn alpha(&self, f: &Functional) -> Result<Functional> {
        if !f.is_local(&self.dirac.layout, self.dirac.lat(), LOCAL_RADIUS) {
            return Err(Error::NonLocal);
        }
        Ok(ordering_transport(f, &self.ordering_kernel()))
    }

    /// Star product in the current representative.
    pub fn star(&self, a: &Functional, b: &Functional) -> Result<Functional> {
        star(a, b, &self.omega_kernel(), self.opts)
    }

    pub fn time_ordered(&self, fs: &[Functional]) -> Result<OrderedFunctional> {
        if fs.len() > MAX_FACTORS {
            return Err(Error::TooManyFactors(fs.len()));
        }
        let Some((first, rest)) = fs.split_first() else {
            return Ok(self.wrap(Functional::scalar(C64::new(1.0, 0.0))));
        };
        let kf = self.feynman();
        let mut acc = self.alpha(first)?;
        for f in rest {
            acc = star(&acc, &self.alpha(f)?, &kf, self.opts)?;
        }
        if self.unitary_contact && fs.len() == 2 {
            acc = acc.add(&self.contact(&fs[0], &fs[1])?);
        }
        Ok(self.wrap(acc))
    }

    /// Literal contraction T(F, G) without any contact term.
    fn literal_pair(&self, f: &Functional, g: &Functional, opts: StarOpts) -> Result<Functional> {
        star(&self.alpha(f)?, &self.alpha(g)?, &self.feynman(), opts)
    }

    /// -1/2 [T(F, G) + T(F*, G*)* - T(F) star T(G) - T(G) star T(F)]_c on the even parts.
    /// Zero whenever one factor lies in the future of the other.
    pub fn contact(&self, f: &Functional, g: &Functional) -> Result<Functional> {
        let l = self.dirac.layout;
        let c_only = StarOpts { max_out_grade: Some(0), ..self.opts };
        let even = |x: &Functional| Functional { comps: x.comps.iter().filter(|c| c.grade % 2 == 0).cloned().collect() };
        let (fe, ge) = (even(f), even(g));
        if fe.is_zero() || ge.is_zero() {
            return Ok(Functional::zero());
        }
        let (fs, gs) = (involution(&fe, &l), involution(&ge, &l));
        let (tf, tg) = (self.alpha(&fe)?, self.alpha(&ge)?);
        let mut sum = self.literal_pair(&fe, &ge, c_only)?.grade_part(0);
        sum = sum.add(&involution(&self.literal_pair(&fs, &gs, c_only)?.grade_part(0), &l));
        sum = sum.sub(&star(&tf, &tg, &self.omega_kernel(), c_only)?.grade_part(0));
        sum = sum.sub(&star(&tg, &tf, &self.omega_kernel(), c_only)?.grade_part(0));
        Ok(sum.scale(C64::new(-0.5, 0.0)))
    }

    /// R(F; G) = T(F, G) - (-1)^{|F||G|} T(G) star T(F), by parity parts.
    pub fn retarded(&self, f: &Functional, g: &Functional) -> Result<OrderedFunctional> {
        let mut out = Functional::zero();
        for (fp, pf) in parity_parts(f) {
            for (gp, pg) in parity_parts(g) {
                let t = self.time_ordered(&[fp.clone(), gp.clone()])?.rep;
                let tg = self.alpha(&gp)?;
                let tf = self.alpha(&fp)?;
                let sign = if pf && pg { -1.0 } else { 1.0 };
                let back = self.star(&tg, &tf)?;
                out = out.add(&t.sub(&back.scale(C64::from(sign))));
            }
        }
        Ok(self.wrap(out))
    }

    /// T(F, G) - T(F) star T(G); vanishes when F lies in the future of G.
    pub fn causal_factorization_residual(&self, f: &Functional, g: &Functional) -> Result<f64> {
        let t = self.time_ordered(&[f.clone(), g.clone()])?.rep;
        let fg = self.star(&self.alpha(f)?, &self.alpha(g)?)?;
        Ok(t.sub(&fg).max_abs())
    }

    /// T(F, G) - (-1)^{|F||G|} T(G, F) for pure-parity F, G.
    pub fn symmetry_residual(&self, f: &Functional, g: &Functional) -> Result<f64> {
        let a = self.time_ordered(&[f.clone(), g.clone()])?.rep;
        let b = self.time_ordered(&[g.clone(), f.clone()])?.rep;
        let sign = if is_odd(f) && is_odd(g) { -1.0 } else { 1.0 };
        Ok(a.sub(&b.scale(C64::from(sign))).max_abs())
    }

    /// Source term with F = psi(f):
    /// T(F, G) - F star T(G) + i hbar T(G^(1)(S_ret f)), where D+ S_ret f = f.
    pub fn source_term_residual(&self, f: &DoubleSection, g: &Functional) -> Result<f64> {
        Ok(self.source_term_parts(f, g)?.0)
    }

    /// The same identity with the opposite sign in front of the correction.
    pub fn source_term_residual_flipped(&self, f: &DoubleSection, g: &Functional) -> Result<f64> {
        Ok(self.source_term_parts(f, g)?.1)
    }

    fn source_term_parts(&self, f: &DoubleSection, g: &Functional) -> Result<(f64, f64)> {
        let l = self.dirac.layout;
        let psi = funcalg::psi(&l, self.dirac.weight(), f);
        let sf = self.dirac.solve(f, Prop::Ret);
        let t = self.time_ordered(&[psi.clone(), g.clone()])?.rep;
        let base = t.sub(&self.star(&psi, &self.alpha(g)?)?);
        let corr = self.alpha(&derivative(g, &sf))?.hbar_shift(1).scale(I);
        Ok((base.add(&corr).max_abs(), base.sub(&corr).max_abs()))
    }

    /// Unitarity at k = 2 for even F, G:
    /// T(F, G)* + T(F*, G*) - T(F*) star T(G*) - T(G*) star T(F*).
    pub fn unitarity_residual(&self, f: &Functional, g: &Functional) -> Result<f64> {
        let l = self.dirac.layout;
        let (fs, gs) = (involution(f, &l), involution(g, &l));
        let lhs = involution(&self.time_ordered(&[f.clone(), g.clone()])?.rep, &l);
        let (tfs, tgs) = (self.alpha(&fs)?, self.alpha(&gs)?);
        let rhs = self
            .time_ordered(&[fs.clone(), gs.clone()])?
            .rep
            .scale(C64::new(-1.0, 0.0))
            .add(&self.star(&tfs, &tgs)?)
            .add(&self.star(&tgs, &tfs)?);
        Ok(lhs.sub(&rhs).max_abs())
    }

    /// d/du T(F, G) - T(F^(1)(u), G) - (-1)^{|F|} T(F, G^(1)(u)), pure-parity F.
    pub fn expansion_residual(&self, f: &Functional, g: &Functional, u: &DoubleSection) -> Result<f64> {
        let lhs = derivative(&self.time_ordered(&[f.clone(), g.clone()])?.rep, u);
        let a = self.time_ordered(&[derivative(f, u), g.clone()])?.rep;
        let b = self.time_ordered(&[f.clone(), derivative(g, u)])?.rep;
        let sign = if is_odd(f) { -1.0 } else { 1.0 };
        Ok(lhs.sub(&a).sub(&b.scale(C64::from(sign))).max_abs())
    }
}

fn is_odd(f: &Functional) -> bool {
    f.comps.first().is_some_and(|c| c.grade % 2 == 1)
}

/// Even and odd parts, with their parity flag (true = odd).
pub fn parity_parts(f: &Functional) -> Vec<(Functional, bool)> {
    let even = Functional { comps: f.comps.iter().filter(|c| c.grade % 2 == 0).cloned().collect() };
    let odd = Functional { comps: f.comps.iter().filter(|c| c.grade % 2 == 1).cloned().collect() };
    [(even, false), (odd, true)].into_iter().filter(|(p, _)| !p.is_zero()).collect()
}

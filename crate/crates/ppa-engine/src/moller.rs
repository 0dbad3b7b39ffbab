//! Retarded Moller maps, the pullback tau_ret and the retarded variation delta_ret.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::background::{check_interior_rows, d_bar, perturb, Background, GaugeParameter, Perturbation};
use crate::dirac::{Dirac, DoubleSection, Layout, Prop};
use crate::funcalg::fields::LocalField;
use crate::funcalg::{onshell_residual, Component, Functional};
use crate::lattice::SiteRegion;
use crate::states::{transport_state, TwoPoint};
use crate::{exec, Result, C64};

/// r^{X,X'} u = u + S_ret^X ((D'+ - D+) u): maps solutions for X' to solutions for X.
#[derive(Clone, Debug)]
pub struct MollerMap {
    /// background X, whose retarded propagator is used
    pub x: Arc<Dirac>,
    /// background X'
    pub xp: Arc<Dirac>,
    /// rows where the two operators differ
    pub rows: SiteRegion,
    /// propagator used: Ret for the retarded map; Adv gives the advanced map
    /// (agreeing with the identity after the change instead of before)
    pub kind: Prop,
}

impl MollerMap {
    pub fn new(x: &Arc<Dirac>, xp: &Arc<Dirac>) -> Result<Self> {
        let rows = x.rows_differing(xp)?;
        check_interior_rows(&x.bg, &rows, "background change")?;
        Ok(MollerMap { x: x.clone(), xp: xp.clone(), rows, kind: Prop::Ret })
    }

    pub fn advanced(x: &Arc<Dirac>, xp: &Arc<Dirac>) -> Result<Self> {
        Ok(MollerMap { kind: Prop::Adv, ..Self::new(x, xp)? })
    }

    fn dual_kind(&self) -> Prop {
        match self.kind {
            Prop::Ret => Prop::Adv,
            _ => Prop::Ret,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rows.is_empty()
    }

    fn layout(&self) -> Layout {
        self.x.layout
    }

    /// (D'+ - D+) u
    fn delta(&self, u: &DoubleSection) -> DoubleSection {
        let a = self.xp.apply(u);
        let b = self.x.apply(u);
        a.sub(&b)
    }

    pub fn apply(&self, u: &DoubleSection) -> DoubleSection {
        if self.is_identity() {
            return u.clone();
        }
        let mut out = self.x.solve(&self.delta(u), self.kind);
        out.axpy(C64::new(1.0, 0.0), u);
        out
    }

    /// Transpose with respect to the pairing: <r^t f, u> = <f, r u>.
    pub fn pairing_transpose(&self, f: &DoubleSection) -> DoubleSection {
        if self.is_identity() {
            return f.clone();
        }
        let s = self.x.solve(f, self.dual_kind());
        let mut out = self.delta(&s);
        out.axpy(C64::new(1.0, 0.0), f);
        out
    }

    /// Plain matrix transpose r^T acting on coefficient vectors: P r^t P^-1.
    pub fn matrix_transpose(&self, y: &DoubleSection) -> DoubleSection {
        if self.is_identity() {
            return y.clone();
        }
        let l = self.layout();
        let w = self.x.weight();
        let z = p_inv(&l, w, y);
        p_apply(&l, w, &self.pairing_transpose(&z))
    }

    /// Indices reached by r^T from `idx`.
    pub fn pullback_support(&self, idx: &[usize]) -> Vec<usize> {
        let mut v: Vec<usize> = idx.to_vec();
        v.extend(self.layout().region_indices(&self.rows));
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Matrix M[j', i] = (r^T e_i)_{j'} for i in `idx`, j' in `out_idx`.
    pub fn transpose_block(&self, idx: &[usize], out_idx: &[usize]) -> DMatrix<C64> {
        let l = self.layout();
        let cols = exec::map(idx.len(), |k| self.matrix_transpose(&DoubleSection::unit(&l, idx[k])));
        DMatrix::from_fn(out_idx.len(), idx.len(), |j, i| cols[i].data[out_idx[j]])
    }
}

/// (P x)_i = w x_{sigma(i)}
pub fn p_apply(l: &Layout, w: f64, x: &DoubleSection) -> DoubleSection {
    DoubleSection { data: (0..l.n).map(|i| x.data[l.sigma(i)] * w).collect() }
}

pub fn p_inv(l: &Layout, w: f64, x: &DoubleSection) -> DoubleSection {
    DoubleSection { data: (0..l.n).map(|i| x.data[l.sigma(i)] / w).collect() }
}

/// tau_ret^{X,X'} F: pull a functional on X' back to X through r^{X',X}.
pub fn tau_ret(f: &Functional, x: &Arc<Dirac>, xp: &Arc<Dirac>) -> Result<Functional> {
    let r = MollerMap::new(xp, x)?;
    Ok(pullback(f, &r))
}

/// Slotwise contraction with r^T.
pub fn pullback(f: &Functional, r: &MollerMap) -> Functional {
    if r.is_identity() {
        return f.clone();
    }
    let comps = f
        .comps
        .iter()
        .map(|c| {
            if c.grade == 0 {
                return c.clone();
            }
            let out_idx = r.pullback_support(&c.idx);
            let m = r.transpose_block(&c.idx, &out_idx);
            c.mode_product(&m, out_idx)
        })
        .collect();
    Functional::from_components(comps)
}

/// Value of a retarded variation with its finite-difference error estimate.
#[derive(Clone, Debug)]
pub struct Variation {
    pub value: Functional,
    pub error: f64,
}

/// Background, operator and transported states at one family parameter.
pub struct FamilyPoint {
    pub s: f64,
    pub bg: Background,
    pub dirac: Arc<Dirac>,
    /// transported states, in the order given to `delta_ret`
    pub states: Vec<Arc<TwoPoint>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdParams {
    pub h: f64,
    pub richardson: bool,
}

impl Default for FdParams {
    fn default() -> Self {
        FdParams { h: 1e-3, richardson: true }
    }
}

/// Family member at parameter s, states transported from the base.
pub fn family_point(base: &Arc<Dirac>, states: &[Arc<TwoPoint>], x: &Perturbation, s: f64) -> Result<FamilyPoint> {
    let bg = perturb(&base.bg, x, s)?;
    let dirac = Dirac::new(&bg, &base.params)?;
    let mut out: Vec<Arc<TwoPoint>> = Vec::with_capacity(states.len());
    for (k, st) in states.iter().enumerate() {
        // identical inputs transport identically
        if let Some(j) = (0..k).find(|&j| Arc::ptr_eq(&states[j], st)) {
            out.push(out[j].clone());
            continue;
        }
        out.push(Arc::new(transport_state(st, base, &dirac)?));
    }
    Ok(FamilyPoint { s, bg, dirac, states: out })
}

/// delta_ret^X F = d/ds tau^{X, X_s} F_s at s = 0, by central differences
/// (h, and h/2 with Richardson extrapolation when enabled).
pub fn delta_ret<F>(base: &Arc<Dirac>, states: &[Arc<TwoPoint>], x: &Perturbation, fd: FdParams, family: F) -> Result<Variation>
where
    F: Fn(&FamilyPoint) -> Result<Functional> + Sync + Send,
{
    if x.is_zero() {
        return Ok(Variation { value: Functional::zero(), error: 0.0 });
    }
    check_interior_rows(&base.bg, &x.affected_rows(&base.bg), "perturbation")?;
    let steps: Vec<f64> = if fd.richardson { vec![fd.h, -fd.h, 0.5 * fd.h, -0.5 * fd.h] } else { vec![fd.h, -fd.h] };
    let pulled = exec::try_map(steps.len(), |k| -> Result<Functional> {
        let p = family_point(base, states, x, steps[k])?;
        let f = family(&p)?;
        tau_ret(&f, base, &p.dirac)
    })?;
    let central = |a: &Functional, b: &Functional, h: f64| a.sub(b).scale(C64::from(1.0 / (2.0 * h)));
    let d1 = central(&pulled[0], &pulled[1], fd.h);
    if !fd.richardson {
        return Ok(Variation { value: d1, error: f64::NAN });
    }
    let d2 = central(&pulled[2], &pulled[3], 0.5 * fd.h);
    let r = d2.scale(C64::from(4.0 / 3.0)).sub(&d1.scale(C64::from(1.0 / 3.0)));
    let error = r.sub(&d2).max_abs();
    Ok(Variation { value: r, error })
}

/// Check that a map acts as identity below the perturbation: helper for tests.
pub fn identity_before(r: &MollerMap, u: &DoubleSection) -> f64 {
    let l = r.x.layout;
    let ru = r.apply(u);
    let t0 = r.rows.time_span(&r.x.bg.lat).map(|s| s.0).unwrap_or(usize::MAX);
    (0..l.n).filter(|&g| l.time_of(g) <= t0).fold(0.0, |m, g| m.max((ru.data[g] - u.data[g]).norm()))
}

impl From<Component> for Functional {
    fn from(c: Component) -> Self {
        Functional::from_components(vec![c])
    }
}

/// Lemma check for the gauge direction X = d-bar c:
/// delta_ret^{d-bar c} Phi~(t) - Phi(L_c t), evaluated on shell.
pub fn delta_ret_gauge_morphism_check(base: &Arc<Dirac>, field: &LocalField, c: &GaugeParameter, fd: FdParams) -> Result<f64> {
    let x = d_bar(&base.bg, c)?;
    if x.is_zero() {
        return Ok(0.0);
    }
    let lhs = delta_ret(base, &[], &x, fd, |p| field.eval(&p.dirac))?;
    let rhs = field.gauge_moved(&base.bg, c)?.eval(base)?;
    Ok(onshell_residual(&lhs.value.sub(&rhs), &base.onshell_basis(), 11))
}

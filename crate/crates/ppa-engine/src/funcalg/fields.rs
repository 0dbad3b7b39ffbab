//! Concrete local fields: the free action S(f), the current j(A), its
//! divergence (delta-bar j)(c) = j(d-bar c), and the gauge action L_c.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{Component, Functional};
use crate::background::{check_interior_rows, d_bar, gauge_lie_one_form, perturb, Background, GaugeParameter, Perturbation};
use crate::dirac::{operator_blocks, Blk, Dirac, Layout};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Grade-2 kernel of B1 ^ B2 -> <B1, f D B2> built from operator blocks:
/// c[v_r, u_c] = w f_r D[r, c] and c[u_c, v_r] = -w f_r D[r, c].
fn pairing_kernel(l: &Layout, w: f64, blocks: &[(usize, usize, Blk)], f: impl Fn(usize) -> f64) -> Functional {
    let b = l.b;
    let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for (r, c, blk) in blocks {
        let fr = f(*r);
        if fr == 0.0 {
            continue;
        }
        for i in 0..b {
            for j in 0..b {
                let val = blk[i * b + j];
                if val == ZERO {
                    continue;
                }
                let vi = l.nu + r * b + i;
                let uj = c * b + j;
                *acc.entry((vi, uj)).or_insert(ZERO) += val * (w * fr);
                *acc.entry((uj, vi)).or_insert(ZERO) -= val * (w * fr);
            }
        }
    }
    let mut idx: Vec<usize> = acc.keys().flat_map(|&(a, b)| [a, b]).collect();
    idx.sort_unstable();
    idx.dedup();
    let n = idx.len();
    let mut t = vec![ZERO; n * n];
    for ((a, b), v) in acc {
        let pa = idx.binary_search(&a).unwrap();
        let pb = idx.binary_search(&b).unwrap();
        t[pa * n + pb] += v;
    }
    Functional::from_components(vec![Component { grade: 2, hbar: 0, idx, t }])
}

/// Free action S(f)(B1 ^ B2) = w sum_r f_r (v1 . D u2 - v2 . D u1)_r.
pub fn action(d: &Dirac, f: &[f64]) -> Functional {
    let blocks = operator_blocks(&d.bg, d.params.wilson_r, None);
    pairing_kernel(&d.layout, d.weight(), &blocks, |r| f[r])
}

/// Exact derivative of the action along a background change (A and mass).
pub fn background_derivative(d: &Dirac, x: &Perturbation) -> Functional {
    if x.is_zero() {
        return Functional::zero();
    }
    let blocks = operator_blocks(&d.bg, d.params.wilson_r, Some(x));
    pairing_kernel(&d.layout, d.weight(), &blocks, |_| 1.0)
}

/// The current j(A): derivative of the action along the connection part of A.
pub fn current(d: &Dirac, a: &Perturbation) -> Result<Functional> {
    let a = Perturbation { a: a.a.clone(), m: vec![0.0; a.m.len()] };
    check_interior_rows(&d.bg, &a.affected_rows(&d.bg), "current test one-form")?;
    Ok(background_derivative(d, &a))
}

/// (delta-bar j)(c) = j(d-bar c).
pub fn dbar_current(d: &Dirac, c: &GaugeParameter) -> Result<Functional> {
    let dc = d_bar(&d.bg, c)?;
    current(d, &dc)
}

/// S(f)^(1)(A): central differences of the action along bg + sA, with
/// Richardson extrapolation from h and h/2. Requires f = 1 on every row
/// touched by A.
pub fn action_derivative(d: &Dirac, a: &Perturbation, f: &[f64], h: f64) -> Result<Functional> {
    let rows = a.affected_rows(&d.bg);
    if rows.sites().any(|s| f[s] != 1.0) {
        return Err(Error::Precondition("f must equal 1 on the rows touched by A".into()));
    }
    let at = |s: f64| -> Result<Functional> {
        let bg = perturb(&d.bg, a, s)?;
        let blocks = operator_blocks(&bg, d.params.wilson_r, None);
        Ok(pairing_kernel(&d.layout, d.weight(), &blocks, |r| f[r]))
    };
    richardson(h, at)
}

/// Richardson-extrapolated central difference of a functional family at 0.
pub fn richardson(h: f64, at: impl Fn(f64) -> Result<Functional>) -> Result<Functional> {
    let c = |a: Functional, b: Functional, h: f64| a.sub(&b).scale(C64::from(1.0 / (2.0 * h)));
    let d1 = c(at(h)?, at(-h)?, h);
    let d2 = c(at(0.5 * h)?, at(-0.5 * h)?, 0.5 * h);
    Ok(d2.scale(C64::from(4.0 / 3.0)).sub(&d1.scale(C64::from(1.0 / 3.0))))
}

/// Background derivative Phi^(1)(A, t) of a field rule, by finite differences.
pub fn field_background_derivative(
    d: &Dirac,
    a: &Perturbation,
    h: f64,
    field: impl Fn(&Dirac) -> Result<Functional>,
) -> Result<Functional> {
    richardson(h, |s| {
        let bg = perturb(&d.bg, a, s)?;
        let ds = Dirac::new(&bg, &d.params)?;
        field(&ds)
    })
}

/// Sitewise generator rho+(c) on a double section, as a matrix over `idx`:
/// rho(c) on the gauge index of u, the dual action -rho(c)^T on v.
pub fn rho_double(bg: &Background, l: &Layout, c: &GaugeParameter, idx: &[usize]) -> DMatrix<C64> {
    let n = idx.len();
    let dv = l.dim_v;
    let mut m = DMatrix::from_element(n, n, ZERO);
    let mut cache: BTreeMap<usize, DMatrix<C64>> = BTreeMap::new();
    for (p, &g) in idx.iter().enumerate() {
        let site = l.site_of(g);
        let r = cache.entry(site).or_insert_with(|| bg.group.rho(c.at(site, bg.n_gen()))).clone();
        let local = g % l.nu;
        let spin = (local % l.b) / dv;
        let a = local % dv;
        let v = l.is_v(g);
        for a2 in 0..dv {
            let h = l.index(v, site, spin, a2);
            if let Ok(q) = idx.binary_search(&h) {
                // component a of rho+ applied to e_{a2}
                let val = if v { -r[(a2, a)] } else { r[(a, a2)] };
                if val != ZERO {
                    m[(p, q)] = val;
                }
            }
        }
    }
    m
}

/// (L_c F)(B) = F(rho+(c) B), slotwise.
pub fn gauge_lie(f: &Functional, d: &Dirac, c: &GaugeParameter) -> Functional {
    let comps = f
        .comps
        .iter()
        .map(|k| {
            if k.grade == 0 {
                return Component::scalar(ZERO, k.hbar);
            }
            let m = rho_double(&d.bg, &d.layout, c, &k.idx);
            let mut out = Component { t: vec![ZERO; k.t.len()], ..k.clone() };
            // the derivation acts on one slot at a time
            let mt = m.transpose();
            for ax in 0..k.grade {
                let (t, _) = super::tensor::mode_mul(&k.t, &vec![k.n(); k.grade], ax, &mt);
                for (o, v) in out.t.iter_mut().zip(t) {
                    *o += v;
                }
            }
            out
        })
        .collect();
    Functional::from_components(comps)
}

/// Field rules Phi(t) accepted by the agreement checks.
#[derive(Clone, Debug)]
pub enum LocalField {
    /// j(A') with test one-form A'
    Current(Perturbation),
    /// (delta-bar j)(c)
    DbarCurrent(GaugeParameter),
    /// S(f)
    Action(Vec<f64>),
}

impl LocalField {
    pub fn name(&self) -> &'static str {
        match self {
            LocalField::Current(_) => "j",
            LocalField::DbarCurrent(_) => "dbar_j",
            LocalField::Action(_) => "action",
        }
    }

    pub fn eval(&self, d: &Dirac) -> Result<Functional> {
        match self {
            LocalField::Current(a) => current(d, a),
            LocalField::DbarCurrent(c) => dbar_current(d, c),
            LocalField::Action(f) => Ok(action(d, f)),
        }
    }

    /// Phi^(1)(A, t) by finite differences along bg + sA.
    pub fn background_derivative(&self, d: &Dirac, a: &Perturbation, h: f64) -> Result<Functional> {
        field_background_derivative(d, a, h, |ds| self.eval(ds))
    }

    /// The field with its test function moved by L_c.
    pub fn gauge_moved(&self, bg: &Background, c: &GaugeParameter) -> Result<LocalField> {
        Ok(match self {
            LocalField::Current(a) => LocalField::Current(gauge_lie_one_form(bg, c, a)?),
            LocalField::DbarCurrent(cp) => {
                let ng = bg.n_gen();
                let mut out = GaugeParameter::zero(bg);
                for s in 0..bg.lat.sites() {
                    let v = bg.group.bracket(c.at(s, ng), cp.at(s, ng));
                    out.c[s * ng..(s + 1) * ng].copy_from_slice(&v);
                }
                LocalField::DbarCurrent(out)
            }
            LocalField::Action(f) => LocalField::Action(f.clone()),
        })
    }
}

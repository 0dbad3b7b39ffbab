mod common;

use ppa_engine::oracle::*;
use common::*;
use ppa_engine::background::{bump_perturbation, Bump, Perturbation};
use ppa_engine::dirac::Dirac;
use ppa_engine::funcalg::fields::{background_derivative, current};
use ppa_engine::funcalg::tensor::Component;
use ppa_engine::funcalg::{involution, star, Functional, StarOpts};
use ppa_engine::ppa::Ppa;
use ppa_engine::states::Kernel;
use ppa_engine::tproducts::Ordering;
use ppa_engine::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// narrow enough for an 8-step time axis
fn b(amp: f64, t0: f64, x0: f64) -> Bump {
    Bump { amp, t0, x0, width: 0.1 }
}

fn one_form(d: &Dirac, comps: &[(usize, usize, Bump)]) -> Perturbation {
    bump_perturbation(&d.bg, comps, None)
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

/// Self-adjoint random bilinear on the sites (t, 3) and (t + 1, 3).
fn random_bilinear(d: &Dirac, t: usize, rng: &mut ChaCha8Rng) -> (Functional, Quadratic) {
    let l = d.layout;
    let lo = d.lat().site(t, 3) * l.b;
    let hi = d.lat().site(t + 1, 3) * l.b;
    let mut idx: Vec<usize> = (0..l.b).flat_map(|i| [lo + i, l.nu + lo + i, hi + i, l.nu + hi + i]).collect();
    idx.sort_unstable();
    let n = idx.len();
    let mut t = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..i {
            let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            t[i * n + j] = v;
            t[j * n + i] = -v;
        }
    }
    let f = Functional { comps: vec![Component { grade: 2, hbar: 0, idx, t }] };
    let f = f.add(&involution(&f, &l)).scale(C64::new(0.5, 0.0));
    let c = &f.comps[0];
    let q = Quadratic { idx: c.idx.clone(), beta: CMat::from_row_slice(n, n, &c.t) };
    (f, q)
}

#[test]
fn current_tensor_and_loops_match_engine() {
    let d = free_u1(8, 8, 0.5);
    let w = vacuum(&d);
    let a1 = one_form(&d, &[(1, 0, b(0.7, 1.2, 3.0)), (0, 0, b(0.4, 1.2, 4.0))]);
    let a2 = one_form(&d, &[(1, 0, b(0.5, 0.9, 3.0)), (0, 0, b(-0.3, 0.9, 4.0))]);
    let (q1, q2) = (current_tensor(&d, &a1), current_tensor(&d, &a2));
    let (j1, j2) = (current(&d, &a1).unwrap(), current(&d, &a2).unwrap());
    let c = &j1.comps[0];
    assert_eq!(c.idx, q1.idx);
    let n = c.idx.len();
    let diff = (0..n * n).map(|k| (c.t[k] - q1.beta[(k / n, k % n)]).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-14, "tensor diff {diff}");

    let l = loops(&d, &w, &q1, &q2);
    let opts = StarOpts { max_out_grade: Some(0), ..Default::default() };
    let fg = star(&j1, &j2, &Kernel::State(w.clone()), opts).unwrap().c_number();
    let literal = Ordering::new(d.clone(), w.clone(), w.clone()).with_unitary_contact(false);
    let t = literal.time_ordered(&[j1, j2]).unwrap().rep.c_number();
    assert!(close(fg, l.fg, 1e-10), "{fg} vs {}", l.fg);
    assert!(close(t, l.t, 1e-10), "{t} vs {}", l.t);
    assert!(l.fg.norm() > 1e-3);
}

#[test]
fn current_polarization_matches_loop_sum() {
    for d in [free_u1(8, 8, 0.5), const_su2(8, 8, 0.5)] {
        let w = vacuum(&d);
        let ppa = Ppa::new(d.clone(), w.clone(), w.clone());
        let a1 = one_form(&d, &[(1, 0, b(0.7, 1.2, 3.0)), (0, 0, b(0.4, 1.2, 4.0))]);
        let a2 = one_form(&d, &[(1, 0, b(0.5, 0.9, 3.0)), (0, 0, b(-0.3, 0.9, 4.0))]);
        let got = ppa.vacuum_polarization(&a1, &a2).unwrap();
        let want = polarization(&d, &w, &current_tensor(&d, &a1), &current_tensor(&d, &a2));
        assert!((got - want).norm() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn mass_insertions_match_loop_sum() {
    let d = free_u1(8, 8, 0.5);
    let w = vacuum(&d);
    let ord = Ordering::new(d.clone(), w.clone(), w.clone());
    let p1 = bump_perturbation(&d.bg, &[], Some(&b(0.6, 1.2, 3.0)));
    let p2 = one_form(&d, &[(1, 0, b(0.5, 0.9, 3.0))]);
    let (f, g) = (background_derivative(&d, &p1), background_derivative(&d, &p2));
    let got = ord.retarded(&f, &g).unwrap().rep.c_number() * C64::new(0.0, 1.0);
    let want = polarization(&d, &w, &current_tensor(&d, &p1), &current_tensor(&d, &p2));
    assert!((got - want).norm() < 1e-9);
}

#[test]
fn random_bilinears_match_loop_sum() {
    let d = free_u1(8, 8, 0.5);
    let w = vacuum(&d);
    let prod = Ordering::new(d.clone(), w.clone(), w.clone());
    let literal = prod.clone().with_unitary_contact(false);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut largest = 0.0f64;
    let mut contact = 0.0f64;
    for (ta, tb) in [(4, 2), (3, 3), (3, 2), (2, 3)] {
        let (f, qf) = random_bilinear(&d, ta, &mut rng);
        let (g, qg) = random_bilinear(&d, tb, &mut rng);
        let i = C64::new(0.0, 1.0);
        let r = prod.retarded(&f, &g).unwrap().rep.c_number() * i;
        let rl = literal.retarded(&f, &g).unwrap().rep.c_number() * i;
        let (want, want_l) = (polarization(&d, &w, &qf, &qg), polarization_literal(&d, &w, &qf, &qg));
        assert!(close(r, want, 1e-10), "{ta}{tb}: {r} vs {want}");
        assert!(close(rl, want_l, 1e-10), "{ta}{tb}: {rl} vs {want_l}");
        largest = largest.max(want.norm());
        contact = contact.max((want - want_l).norm());
    }
    // the comparison is not vacuous, and the contact matters on shared links
    assert!(largest > 0.1 && contact > 0.1);
}

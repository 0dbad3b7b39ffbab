mod common;

use common::*;
use ppa_engine::background::{bump_gauge, bump_perturbation, d_bar, gauge_transform, perturb, Background, Bump, GaugeGroup};
use ppa_engine::checks;
use ppa_engine::dirac::{cfl_guard, pairing, Dirac, DiracParams, DoubleSection, Prop};
use ppa_engine::lattice::Lattice;
use ppa_engine::moller::{identity_before, MollerMap};
use ppa_engine::states::random_patch;
use ppa_engine::{Error, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn lattice_rejects_bad_shapes() {
    assert!(Lattice::new(8, 5, 0.3, 1.0).is_err());
    assert!(Lattice::new(8, 4, 1.2, 1.0).is_err());
    assert!(Lattice::new(8, 4, -0.1, 1.0).is_err());
    let lat = Lattice::new(6, 4, 0.3, 1.0).unwrap();
    for s in 0..lat.sites() {
        let (t, x) = lat.coords(s);
        assert_eq!(lat.site(t, x as isize), s);
        assert_eq!(lat.site(t, x as isize - 4), s);
    }
    assert_eq!(lat.xdist(0, 3), 1);
}

#[test]
fn cfl_guard_trips_at_large_steps() {
    // r = 1 puts the top of the band at sqrt(0 + (m + 2)^2) for k = pi
    let ok = Lattice::new(8, 8, 0.3, 1.0).unwrap();
    assert!(cfl_guard(&ok, 0.5, 1.0).is_ok());
    let bad = Lattice::new(8, 8, 0.45, 1.0).unwrap();
    assert!(cfl_guard(&bad, 0.5, 1.0).is_err());
}

#[test]
fn su2_exp_log_roundtrip() {
    let g = GaugeGroup::su2();
    for a in [[0.1, -0.2, 0.3], [1.0, 0.5, -0.7], [0.0, 0.0, 1e-3]] {
        let b = g.log(&g.exp(&a));
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12, "{a:?} -> {b:?}");
        }
    }
}

#[test]
fn d_bar_is_the_gauge_tangent() {
    for d in [free_u1(12, 6, 0.5), const_su2(12, 6, 0.5)] {
        let bg = &d.bg;
        let c = bump_gauge(bg, &[(0, Bump { amp: 0.5, t0: 1.8, x0: 2.0, width: 0.2 })]);
        let dc = d_bar(bg, &c).unwrap();
        let h = 1e-4;
        let p = gauge_transform(bg, &c, h).unwrap();
        let m = gauge_transform(bg, &c, -h).unwrap();
        let err = (0..bg.a.len()).map(|i| ((p.a[i] - m.a[i]) / (2.0 * h) - dc.a[i]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
        assert!(dc.a.iter().any(|v| v.abs() > 1e-3));
    }
}

#[test]
fn gauge_parameter_near_the_ends_is_rejected() {
    let d = free_u1(12, 6, 0.5);
    let c = bump_gauge(&d.bg, &[(0, Bump { amp: 0.5, t0: 0.0, x0: 2.0, width: 0.2 })]);
    assert!(matches!(d_bar(&d.bg, &c), Err(Error::Support(_))));
}

#[test]
fn retarded_solution_is_causal_and_solves() {
    let d = free_u1(12, 8, 0.5);
    let l = d.layout;
    let nt = d.lat().nt;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_patch(&d, &mut rng, 5, 6);
    let u = d.solve_retarded(&f).unwrap();
    // nothing before the source
    let early = (0..l.n).filter(|&g| l.time_of(g) < 5).fold(0.0f64, |m, g| m.max(u.data[g].norm()));
    assert_eq!(early, 0.0);
    let r = d.apply(&u).sub(&f);
    let bad = (0..l.n).filter(|&g| (1..nt - 1).contains(&l.time_of(g))).fold(0.0f64, |m, g| m.max(r.data[g].norm()));
    assert!(bad < 1e-12, "{bad}");
    assert!(u.max_abs() > 1e-3);
}

#[test]
fn boundary_sources_are_rejected() {
    let d = free_u1(8, 4, 0.5);
    let mut f = DoubleSection::zeros(&d.layout);
    f.data[0] = C64::new(1.0, 0.0);
    assert!(d.solve_retarded(&f).is_err());
}

#[test]
fn retarded_and_advanced_are_reciprocal() {
    let d = const_su2(12, 6, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (l, w) = (d.layout, d.weight());
    for _ in 0..4 {
        let f = random_patch(&d, &mut rng, 2, 9);
        let g = random_patch(&d, &mut rng, 2, 9);
        let a = pairing(&l, w, &f, &d.solve(&g, Prop::Adv));
        let b = pairing(&l, w, &d.solve(&f, Prop::Ret), &g);
        assert!((a + b).norm() < 1e-11 * (1.0 + a.norm()), "{a} vs {b}");
    }
}

fn changed(d: &Dirac) -> std::sync::Arc<Dirac> {
    let bg = &d.bg;
    let b = Bump { amp: 0.4, t0: 1.8, x0: 3.0, width: 0.3 };
    let x = bump_perturbation(bg, &[(1, 0, b)], Some(&Bump { amp: 0.3, ..b }));
    Dirac::new(&perturb(bg, &x, 1.0).unwrap(), &d.params).unwrap()
}

#[test]
fn moller_map_is_identity_before_and_intertwines() {
    for d in [free_u1(14, 6, 0.5), const_su2(14, 6, 0.5)] {
        let dp = changed(&d);
        let r = checks::moller(&d, &dp, 6, 3).unwrap();
        assert!(r.identity_before < 1e-12 && r.intertwining < 1e-10, "{r:?}");
    }
}

#[test]
fn moller_map_of_identical_backgrounds_is_trivial() {
    let d = free_u1(10, 4, 0.5);
    let r = MollerMap::new(&d, &d).unwrap();
    assert!(r.is_identity());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = d.solve(&random_patch(&d, &mut rng, 1, 8), Prop::Causal);
    assert_eq!(identity_before(&r, &u), 0.0);
    assert_eq!(r.apply(&u).sub(&u).max_abs(), 0.0);
}

#[test]
fn static_background_is_detected() {
    let lat = Lattice::new(8, 4, 0.3, 1.0).unwrap();
    let bg = Background::constant(lat, GaugeGroup::u1(1.0), &[0.2], &[0.1], 0.5).unwrap();
    assert!(bg.is_static());
    let d = Dirac::new(&bg, &DiracParams::default()).unwrap();
    assert!(!changed(&d).bg.is_static());
}

//! Parallel vs sequential on the two hot paths: building the vacuum
//! (independent column solves) and one retarded variation of a current.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ppa_engine::background::{bump_perturbation, Background, Bump, GaugeGroup};
use ppa_engine::dirac::{Dirac, DiracParams};
use ppa_engine::exec::{self, Mode};
use ppa_engine::funcalg::fields::LocalField;
use ppa_engine::lattice::Lattice;
use ppa_engine::ppa::Ppa;
use ppa_engine::states::{vacuum_two_point, VacuumParams};

fn dirac(n: usize) -> Arc<Dirac> {
    let lat = Lattice::new(n, n, 0.3, 1.0).unwrap();
    let bg = Background::constant(lat, GaugeGroup::u1(1.0), &[0.0], &[0.0], 0.5).unwrap();
    Dirac::new(&bg, &DiracParams::default()).unwrap()
}

fn modes() -> [(&'static str, Mode); 2] {
    [("parallel", Mode::Parallel), ("sequential", Mode::Sequential)]
}

fn vacuum(c: &mut Criterion) {
    let mut g = c.benchmark_group("vacuum");
    g.sample_size(10);
    for n in [12, 16] {
        let d = dirac(n);
        for (name, mode) in modes() {
            exec::set_mode(mode);
            g.bench_with_input(BenchmarkId::new(name, n), &d, |b, d| {
                b.iter(|| vacuum_two_point(d, &VacuumParams::default()).unwrap())
            });
        }
    }
    exec::set_mode(Mode::Parallel);
    g.finish();
}

fn deviation(c: &mut Criterion) {
    let mut g = c.benchmark_group("deviation_d1");
    g.sample_size(10);
    let d = dirac(16);
    let w = Arc::new(vacuum_two_point(&d, &VacuumParams::default()).unwrap());
    let ppa = Ppa::new(d.clone(), w.clone(), w);
    let b = |amp, t0| Bump { amp, t0, x0: 6.0, width: 0.25 };
    let a = bump_perturbation(&d.bg, &[(1, 0, b(0.5, 1.8))], None);
    let ap = LocalField::Current(bump_perturbation(&d.bg, &[(1, 0, b(0.7, 2.7))], None));
    for (name, mode) in modes() {
        exec::set_mode(mode);
        g.bench_function(name, |bch| bch.iter(|| ppa.deviation_d1(&ap, &a).unwrap()));
    }
    exec::set_mode(Mode::Parallel);
    g.finish();
}

criterion_group!(benches, vacuum, deviation);
criterion_main!(benches);

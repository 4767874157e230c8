use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nonholo_bench::{scenario, states, BENCH_SCENARIOS};
use nonholo_core::conservation::zf::integral_sample;
use nonholo_core::conservation::Observable;
use nonholo_core::dynamics::{gamma_constrained, gamma_frame_solve, integrate, IntegrateOptions};
use nonholo_core::expr::parse;
use nonholo_core::SymbolTable;

fn accelerations(c: &mut Criterion) {
    let mut group = c.benchmark_group("acceleration");
    for name in BENCH_SCENARIOS {
        let s = scenario(name);
        let st = states(&s, 16);
        group.bench_with_input(BenchmarkId::new("projection", name), &st, |b, st| {
            b.iter(|| {
                st.iter()
                    .map(|x| gamma_constrained(&s.system, black_box(x)).unwrap().a[0])
                    .sum::<f64>()
            })
        });
        group.bench_with_input(BenchmarkId::new("frame", name), &st, |b, st| {
            b.iter(|| {
                st.iter()
                    .map(|x| gamma_frame_solve(&s.system, black_box(x)).unwrap()[0])
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

fn frames(c: &mut Criterion) {
    let mut group = c.benchmark_group("adapted_frame");
    for name in BENCH_SCENARIOS {
        let s = scenario(name);
        let st = states(&s, 16);
        group.bench_with_input(BenchmarkId::from_parameter(name), &st, |b, st| {
            b.iter(|| {
                st.iter()
                    .map(|x| s.system.adapted_frame(black_box(x)).unwrap().residuals.duality)
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

fn first_integrals(c: &mut Criterion) {
    let s = scenario("nonholonomic_particle");
    let st = states(&s, 16);
    c.bench_function("z_f energy particle", |b| {
        b.iter(|| {
            st.iter()
                .map(|x| {
                    integral_sample(&s.system, &Observable::Energy, black_box(x))
                        .unwrap()
                        .two_path
                })
                .sum::<f64>()
        })
    });
}

fn trajectories(c: &mut Criterion) {
    let mut group = c.benchmark_group("rk4_one_second");
    group.sample_size(10);
    for name in BENCH_SCENARIOS {
        let s = scenario(name);
        let options = IntegrateOptions::new(1.0, 1e-3);
        group.bench_function(name, |b| {
            b.iter(|| integrate(&s.system, black_box(&s.initial), &options).unwrap())
        });
    }
    group.finish();
}

fn expressions(c: &mut Criterion) {
    let t = SymbolTable::for_coordinates(&["x", "y", "theta"]).unwrap();
    let src = "0.5*(u_x^2 + u_y^2) + cos(theta)*u_x*u_theta - sin(theta)*u_y*u_theta + 0.1*x*y";
    c.bench_function("parse", |b| b.iter(|| parse(black_box(src), &t).unwrap()));
    let e = parse(src, &t).unwrap();
    let vals = [0.3, -0.2, 0.7, 1.0, 0.5, -0.4];
    c.bench_function("eval", |b| b.iter(|| e.eval(black_box(&vals)).unwrap()));
    c.bench_function("second derivative", |b| {
        b.iter(|| e.derivative(&[3, 5], black_box(&vals)).unwrap())
    });
}

criterion_group!(
    benches,
    accelerations,
    frames,
    first_integrals,
    trajectories,
    expressions
);
criterion_main!(benches);

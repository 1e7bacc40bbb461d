use std::hint::black_box;

use biclab::geometry::{caratheodory_decompose, random_unit, SlabPolytope};
use biclab::linear_ts::{glm_mle, LinkFunction, SpectralHistory};
use biclab::recgame::{build_game, solve_minimax, SignalSpec};
use biclab::semibandit::{prepare_algorithm1, run_algorithm1, SemibanditInstance};
use biclab::derive_stream;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DVector;
use rand::Rng;

fn two_singletons() -> SemibanditInstance {
    SemibanditInstance::uniform(2, vec![vec![0], vec![1]]).unwrap()
}

fn game_solve(c: &mut Criterion) {
    let game = build_game(&two_singletons(), 1, &SignalSpec::exact(2, &[0, 1]), 2_000, 1).unwrap();
    c.bench_function("solve_minimax 2000 scenarios", |b| b.iter(|| solve_minimax(black_box(&game)).unwrap()));
}

fn decompose(c: &mut Criterion) {
    let poly = SlabPolytope::new(6).unwrap();
    let mut rng = derive_stream(2, 0);
    let verts = &poly.vertices;
    c.bench_function("caratheodory_decompose d=6", |b| {
        b.iter_batched(
            || {
                let w: Vec<f64> = verts.vertices.iter().map(|_| rng.random::<f64>()).collect();
                let total: f64 = w.iter().sum();
                (0..6).map(|i| verts.vertices.iter().zip(&w).map(|(v, wk)| v[i] * wk / total).sum()).collect::<Vec<f64>>()
            },
            |p| caratheodory_decompose(verts, &p).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn logistic_fit(c: &mut Criterion) {
    let mut rng = derive_stream(3, 0);
    let truth = DVector::from_vec(vec![0.3, -0.2, 0.1]);
    let mut h = SpectralHistory::new(3);
    for i in 0..200 {
        let a = random_unit(&mut rng, 3);
        let p = 1.0 / (1.0 + (-a.dot(&truth)).exp());
        h.push(i, &a, f64::from(u8::from(rng.random_bool(p)))).unwrap();
    }
    c.bench_function("glm_mle logistic t=200", |b| b.iter(|| glm_mle(black_box(&h), LinkFunction::Logistic).unwrap()));
}

fn exploration(c: &mut Criterion) {
    let plan = prepare_algorithm1(&two_singletons(), 29, 10_000, 4).unwrap().plan;
    let mut seed = 0;
    c.bench_function("run_algorithm1 N=29", |b| {
        b.iter(|| {
            seed += 1;
            run_algorithm1(&plan, &mut derive_stream(seed, 0)).unwrap()
        })
    });
}

criterion_group!(benches, game_solve, decompose, logistic_fit, exploration);
criterion_main!(benches);

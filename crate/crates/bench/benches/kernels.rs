use criterion::{black_box, criterion_group, criterion_main, Criterion};

use kplane_bench::vector_fixture;
use kplane_core::multiplier::{apply_q, MultiplierSpec};
use kplane_core::xray::{adjoint, forward};

fn transform(c: &mut Criterion) {
    let fx = vector_fixture(24, 16);
    c.bench_function("forward 3d 16 planes", |b| {
        b.iter(|| forward(black_box(&fx.alpha), &fx.planes, fx.k_grid, &fx.quad).unwrap())
    });
    let sino = forward(&fx.alpha, &fx.planes, fx.k_grid, &fx.quad).unwrap();
    c.bench_function("adjoint 3d 16 planes", |b| b.iter(|| adjoint(black_box(&sino), fx.grid).unwrap()));
}

fn multiplier(c: &mut Criterion) {
    let fx = vector_fixture(32, 1);
    let spec = MultiplierSpec::new(3, 2, 1).unwrap();
    c.bench_function("apply_q 32^3 padded", |b| b.iter(|| apply_q(black_box(&fx.sampled), &spec).unwrap()));
}

criterion_group!(benches, transform, multiplier);
criterion_main!(benches);

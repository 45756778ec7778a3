// SPDX-License-Identifier: MIT OR Apache-2.0

use std::hint::black_box;

use assimlab_bench::filled;
use assimlab_core::tensor::{conv1d, layer_norm_rows, linear, matmul, softmax};
use assimlab_core::Tensor;
use criterion::{criterion_group, criterion_main, Criterion};

fn kernels(c: &mut Criterion) {
    // one second of audio gives 49 frames; eight seconds about 400
    let x = filled(400, 768, 1);
    let w = filled(768, 768, 2);
    let bias = vec![0.01f32; 768];
    c.bench_function("matmul 400x768x768", |b| {
        b.iter(|| matmul(black_box(&x), black_box(&w)).unwrap())
    });
    c.bench_function("linear 400x768 -> 768", |b| {
        b.iter(|| linear(black_box(&x), black_box(&w), Some(&bias)).unwrap())
    });

    let scores = filled(1, 400, 3);
    c.bench_function("softmax 400", |b| b.iter(|| softmax(black_box(scores.row(0))).unwrap()));

    let gamma = vec![1.0f32; 768];
    let beta = vec![0.0f32; 768];
    c.bench_function("layer_norm 400x768", |b| {
        b.iter(|| layer_norm_rows(black_box(&x), &gamma, &beta, 1e-5).unwrap())
    });

    let wave = filled(1, 16_000, 4);
    let kernel = Tensor::new(vec![512, 1, 10], filled(512, 10, 5).into_data()).unwrap();
    c.bench_function("conv1d first layer, 1 s", |b| {
        b.iter(|| conv1d(black_box(&wave), black_box(&kernel), 5, None, 1).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);

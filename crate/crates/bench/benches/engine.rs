use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use xtinyunet_bench::{desk_family, filled};
use xtinyunet_core::ops::{conv2d, instance_norm};
use xtinyunet_core::sensitivity::sensitivity_score;
use xtinyunet_core::{build_family, input_gradient, ConvSpec, NetworkInstance, Tensor};

fn bench_conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3x3");
    for &ch in &[8usize, 32, 64] {
        let spec = ConvSpec::same(ch, ch, 3);
        let x = filled(&[4, ch, 32, 32], 1);
        let w = filled(&spec.weight_shape(), 2);
        let b = Tensor::zeros(&[ch]);
        group.bench_with_input(BenchmarkId::new("forward", ch), &ch, |bench, _| {
            bench.iter(|| conv2d(&x, &w, &b, &spec).unwrap())
        });
        let (y, pb) = conv2d(&x, &w, &b, &spec).unwrap();
        let g = filled(y.shape(), 3);
        group.bench_with_input(BenchmarkId::new("pullback", ch), &ch, |bench, _| {
            bench.iter(|| pb.apply_unary(&g).unwrap())
        });
    }
    group.finish();
}

fn bench_norm(c: &mut Criterion) {
    let x = filled(&[4, 32, 64, 64], 4);
    let gamma = Tensor::ones(&[32]);
    let beta = Tensor::zeros(&[32]);
    let (_, pb) = instance_norm(&x, &gamma, &beta, 1e-5).unwrap();
    let g = filled(x.shape(), 5);
    c.bench_function("instance_norm/forward", |b| {
        b.iter(|| instance_norm(&x, &gamma, &beta, 1e-5).unwrap())
    });
    c.bench_function("instance_norm/pullback", |b| {
        b.iter(|| pb.apply_unary(&g).unwrap())
    });
}

fn bench_sensitivity(c: &mut Criterion) {
    let fc = desk_family();
    let configs = build_family(&fc).unwrap();
    let x = filled(&[2, 1, 64, 64], 6);
    let mut group = c.benchmark_group("sensitivity");
    group.sample_size(10);
    for i in [0usize, 4, 9] {
        let net = NetworkInstance::init(&configs[i], &fc, 0).unwrap();
        group.bench_with_input(BenchmarkId::new("cap_index", i), &i, |b, _| {
            b.iter(|| sensitivity_score(&input_gradient(&net, &x).unwrap()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_conv, bench_norm, bench_sensitivity);
criterion_main!(benches);

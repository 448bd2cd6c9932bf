use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eaclab_core::circuit::evaluate_with;
use eaclab_core::gen;
use eaclab_core::literal::rational_to_f64;
use eaclab_core::par;
use eaclab_core::reductions::{decide_ov3, Ov3Path, OvInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ov3_sweep(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances: Vec<OvInstance> = (0..24).map(|_| OvInstance::random(&[12, 12, 4], 16, 0.5, &mut rng)).collect();
    let mut g = c.benchmark_group("ov3_sweep");
    g.sample_size(10);
    for path in [Ov3Path::HardmaxExact, Ov3Path::SoftmaxFloat] {
        let run = |i: &OvInstance| decide_ov3(i, path, None).map(|d| d.yes).ok();
        g.bench_with_input(BenchmarkId::new("sequential", path), &instances, |b, v| {
            b.iter(|| par::map_sequential(v, run))
        });
        g.bench_with_input(BenchmarkId::new("parallel", path), &instances, |b, v| b.iter(|| par::map(v, run)));
    }
    g.finish();
}

fn batch_eval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ge = gen::random_eac(&mut rng, 4, 2000);
    let base: Vec<f64> = ge.point.iter().map(rational_to_f64).collect();
    let points: Vec<Vec<f64>> =
        (0..512).map(|_| base.iter().map(|x| x + rng.gen_range(-1e-3..1e-3)).collect()).collect();
    let circuit = &ge.circuit;
    let run = |x: &Vec<f64>| evaluate_with(circuit, x, ()).map(|t| t.outputs[0]).ok();
    let mut g = c.benchmark_group("batch_eval");
    g.bench_function("sequential", |b| b.iter(|| par::map_sequential(&points, run)));
    g.bench_function("parallel", |b| b.iter(|| par::map(&points, run)));
    g.finish();
}

criterion_group!(benches, ov3_sweep, batch_eval);
criterion_main!(benches);

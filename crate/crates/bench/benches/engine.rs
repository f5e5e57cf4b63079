use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use iea_bench::{bundled_scenario, counting_model};
use iea_core::protocol::conformance::random_message;
use iea_core::protocol::{decode, encode};
use iea_core::risk::{build_risk_report, BlameFunction};
use iea_core::sim::{run_episode, FaultAssignment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn risk_report(c: &mut Criterion) {
    let mut group = c.benchmark_group("risk_report");
    for n in [3, 8, 12] {
        let (model, lik) = counting_model(n);
        group.throughput(Throughput::Elements(1 << n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| build_risk_report(black_box(&model), black_box(&lik), &BlameFunction::ProportionalShare).unwrap())
        });
    }
    group.finish();
}

fn codec(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let messages: Vec<_> = (0..256).map(|_| random_message(&mut rng)).collect();
    let frames: Vec<Vec<u8>> = messages.iter().map(encode).collect();
    let bytes: u64 = frames.iter().map(|f| f.len() as u64).sum();
    let mut group = c.benchmark_group("codec");
    group.throughput(Throughput::Bytes(bytes));
    group.bench_function("encode", |b| b.iter(|| messages.iter().map(|m| encode(black_box(m)).len()).sum::<usize>()));
    group.bench_function("decode", |b| b.iter(|| frames.iter().filter(|f| decode(black_box(f)).is_ok()).count()));
    group.finish();
}

fn episode(c: &mut Criterion) {
    let cfg = bundled_scenario("three_vehicle.toml");
    let mut group = c.benchmark_group("episode");
    group.sample_size(20);
    for bits in ["000", "111"] {
        let f = FaultAssignment::parse(bits).unwrap();
        group.bench_function(bits, |b| b.iter(|| run_episode(black_box(&cfg), f, 17).unwrap().outcome));
    }
    group.finish();
}

criterion_group!(benches, risk_report, codec, episode);
criterion_main!(benches);

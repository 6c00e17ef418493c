use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use macgen::config::Config;
use macgen::ct_assign::greedy_assignment;
use macgen::ct_plan::plan_compressors;
use macgen::ct_wire::{sample_random_wirings, zero_arrivals};
use macgen::par::with_threads;
use macgen::pipeline::{generate, GenSpec, Strategy};
use macgen::ppg::generate_and_array;
use macgen::tech::DelayTable;
use macgen::verify::{check_equivalence, Mode, VerifyOptions};

fn pools() -> [(&'static str, usize); 2] {
    [("pool", std::thread::available_parallelism().map_or(1, |n| n.get())), ("single", 1)]
}

fn wiring_sampling(c: &mut Criterion) {
    let a = greedy_assignment(&plan_compressors(&generate_and_array(8).unwrap())).unwrap();
    let d = DelayTable::default();
    let arr = zero_arrivals(&a);
    let mut g = c.benchmark_group("random_wirings_w8_2000");
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            with_threads(threads, || b.iter(|| sample_random_wirings(&a, &d, &arr, 2000, 1)))
        });
    }
    g.finish();
}

fn random_verification(c: &mut Criterion) {
    let nl = generate(&GenSpec::new(16, 0, Strategy::Tradeoff), &Config::default()).unwrap().netlist;
    let opts = VerifyOptions { mode: Some(Mode::Random), vectors: 1 << 16, seed: 1 };
    let mut g = c.benchmark_group("verify_w16_65536");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            with_threads(threads, || b.iter(|| check_equivalence(&nl, &opts).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, wiring_sampling, random_verification);
criterion_main!(benches);

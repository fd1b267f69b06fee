//! Compensation throughput over one 9-frame clip (8 target frames) with 1 and
//! 4 workers. The speedup target is soft: a shortfall is printed as a
//! warning and never fails the run.

use criterion::{criterion_group, criterion_main, Criterion};
use trackersplat_bench::Fixture;

const TARGET_SPEEDUP: f64 = 3.0;

fn throughput(c: &mut Criterion) {
    let fx = Fixture::new(2000, 8, 9);
    let mut group = c.benchmark_group("throughput");
    group.sample_size(10);
    for workers in [1, 2, 4] {
        group.bench_function(format!("compensate_8_frames_{workers}_workers"), |b| {
            b.iter_custom(|iters| {
                let total: f64 = (0..iters).map(|_| fx.compensate_all(workers)).sum();
                std::time::Duration::from_secs_f64(total)
            })
        });
    }
    group.finish();

    let best = |w: usize| (0..3).map(|_| fx.compensate_all(w)).fold(f64::INFINITY, f64::min);
    let (one, four) = (best(1), best(4));
    let speedup = one / four;
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("compensation speedup with 4 workers: {speedup:.2}x ({one:.3}s -> {four:.3}s, {cpus} CPU(s))");
    if speedup < TARGET_SPEEDUP {
        println!("warning: speedup below {TARGET_SPEEDUP:.1}x");
    }
}

criterion_group!(benches, throughput);
criterion_main!(benches);

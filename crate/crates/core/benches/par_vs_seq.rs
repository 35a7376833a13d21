//! Parallel vs sequential throughput on the batch-evaluation entry points.

use criterion::{criterion_group, criterion_main, Criterion};

fn bench_exec(c: &mut Criterion) {
    let items: Vec<u64> = (0..64).collect();
    let work = |k: &u64| -> u64 {
        // placeholder load until the algebra benches land
        (0..*k).fold(0u64, |a, b| a.wrapping_add(b * b))
    };
    c.bench_function("map_par", |b| b.iter(|| dtoda::exec::map(&items, work)));
    c.bench_function("map_seq", |b| b.iter(|| dtoda::exec::map_seq(&items, work)));
}

criterion_group!(benches, bench_exec);
criterion_main!(benches);

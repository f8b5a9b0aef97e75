use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ugibbs::entropy::{topological_u_entropy, DEFAULT_BUDGET};
use ugibbs::factor::Factor;
use ugibbs::leaves::plaque_chart;
use ugibbs::measures::cesaro_state;
use ugibbs::par::{self, ExecMode};
use ugibbs::systems::{make_solenoid, TrigPoly2};

fn engine(c: &mut Criterion) {
    let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
    let f = Factor::new(&m, 1e-8).unwrap();
    let x = m.iterate(&[0.2, 0.0, 0.0], 60);
    let plaque = plaque_chart(&f, &x).unwrap();
    for (label, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        let mut g = c.benchmark_group(label);
        g.sample_size(10);
        par::set_mode(mode);
        g.bench_function("cesaro_500x200", |b| b.iter(|| black_box(cesaro_state(&f, &plaque, 500, 200, 1, 6).unwrap())));
        g.bench_function("volume_growth_n10", |b| b.iter(|| black_box(topological_u_entropy(&f, &x, 0.01, 10, DEFAULT_BUDGET).unwrap())));
        g.finish();
    }
    par::set_mode(ExecMode::Parallel);
}

criterion_group!(benches, engine);
criterion_main!(benches);

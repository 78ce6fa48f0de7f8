use criterion::{criterion_group, criterion_main, Criterion};
use membrane_cli::config::DEFAULT_MAX_ITERS;
use membrane_cli::validate::validate;
use membrane_core::mesh::{AxisBox, Geometry, RefugeRegion, Subdomain};
use membrane_core::{Execution, MassKind, ProblemSpec};
use std::hint::black_box;

fn suite(c: &mut Criterion) {
    let g = Geometry::Interval {
        x_lo: 0.0,
        x_hi: 1.0,
        gamma: 0.5,
    };
    let spec = ProblemSpec::uniform(g, 1.0, 2.0, 1.0, 1.0).with_refuges(vec![
        RefugeRegion::new(Subdomain::One, AxisBox::interval(0.125, 0.375)),
        RefugeRegion::new(Subdomain::Two, AxisBox::interval(0.625, 0.875)),
    ]);
    let mut group = c.benchmark_group("validate");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| black_box(validate(&spec, false, MassKind::Lumped, 1e-10, DEFAULT_MAX_ITERS, exec)))
        });
    }
    group.finish();
}

criterion_group!(benches, suite);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use airgrad::channel::ChannelSpec;
use airgrad::exec::Execution;
use airgrad::harness::config::{build_code, ExperimentConfig};
use airgrad::harness::{measure_code_quality, run_sweep, MeasureConfig, SchemeSpec};

fn small_sweep() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::headline();
    cfg.repetitions = 8;
    cfg.dimensions = vec![16];
    cfg.budgets = vec![4096];
    cfg.snrs = vec![0.1, 1e6];
    cfg.schemes.push(SchemeSpec::SampledAnalog(4));
    cfg
}

fn execution_modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ]
}

fn sweep(c: &mut Criterion) {
    let cfg = small_sweep();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, exec) in execution_modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_sweep(black_box(&cfg), exec).unwrap())
        });
    }
    group.finish();
}

fn measure(c: &mut Criterion) {
    let cfg = ExperimentConfig::headline();
    let d = 64;
    let problem = cfg.problem.build(d, 1).unwrap();
    let channel = ChannelSpec::from_snr(1.0, 1e6).unwrap();
    let code = build_code(
        SchemeSpec::Digital {
            bits: Some(9),
            split: false,
        },
        d,
        1.0,
        1.0,
        1e6,
        1 << 14,
        &cfg.digital,
    )
    .unwrap();
    let mut group = c.benchmark_group("measure");
    group.sample_size(10);
    for (name, exec) in execution_modes() {
        let mut mc = MeasureConfig::new(20_000, 3);
        mc.exec = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &mc, |b, mc| {
            b.iter(|| measure_code_quality(code.as_ref(), &problem, &channel, mc).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, measure);
criterion_main!(benches);

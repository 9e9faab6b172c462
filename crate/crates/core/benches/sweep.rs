use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use pepbcd::algos::{MethodSpec, StepSchedule};
use pepbcd::analysis::{worst_case_batch, Job};
use pepbcd::expr::LipschitzVector;
use pepbcd::par::Execution;
use pepbcd::pep::{self, Setting, SolverOptions};

/// Cyclic descent over a small grid of relative steps and cycle counts.
fn grid() -> Vec<Job> {
    let l = LipschitzVector::uniform(2, 1.0).unwrap();
    let mut jobs = Vec::new();
    for k in 1..=3 {
        for i in 0..6 {
            let rel = 0.5 + 0.2 * i as f64;
            jobs.push(Job {
                spec: MethodSpec::ccd(2, k, StepSchedule::relative(&[rel], &l).unwrap()).unwrap(),
                setting: Setting::init(1.0),
                criterion: pep::Criterion::FinalValueGap,
                lipschitz: l.clone(),
            });
        }
    }
    jobs
}

fn bench_sweep(c: &mut Criterion) {
    let jobs = grid();
    let options = SolverOptions::default();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10).measurement_time(Duration::from_secs(20));

    group.bench_function(format!("sequential {} solves", jobs.len()), |b| {
        b.iter(|| worst_case_batch(black_box(&jobs), &options, Execution::Sequential))
    });
    group.bench_function(format!("parallel {} solves", jobs.len()), |b| {
        b.iter(|| worst_case_batch(black_box(&jobs), &options, Execution::Parallel))
    });

    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);

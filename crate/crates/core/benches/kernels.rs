use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maooam_core::timestepper::run_for;
use maooam_core::tlm::propagate;
use maooam_core::{par, Exec, Model, ModelConfig, Resolution, RunState, SchemeConfig};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn model(n: usize, exec: Exec) -> Model {
    Model::new(&ModelConfig { resolution: Resolution::square(n), exec, ..Default::default() }).unwrap()
}

fn tendency(c: &mut Criterion) {
    let mut g = c.benchmark_group("tendency");
    for n in [8, 12] {
        for (name, exec) in POLICIES {
            let m = model(n, exec);
            let x = m.random_state(1, 0.05, 5.0).fields;
            g.bench_with_input(BenchmarkId::new(name, format!("{n}x{n}")), &x, |b, x| {
                b.iter(|| m.tendency(x).unwrap())
            });
        }
    }
    g.finish();
}

fn tangent_linear(c: &mut Criterion) {
    let mut g = c.benchmark_group("tlm_day");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let m = model(8, exec);
        let s = m.random_state(2, 0.05, 5.0);
        let v = m.random_state(3, 0.01, 1.0).fields;
        g.bench_function(name, |b| b.iter(|| propagate(&m, 900.0, 96, &s, &v).unwrap()));
    }
    g.finish();
}

fn ensemble(c: &mut Criterion) {
    let mut g = c.benchmark_group("ensemble_8_members_day");
    g.sample_size(10);
    let cfg = SchemeConfig::default();
    for (name, exec) in POLICIES {
        // Members run under `exec`; each model stays sequential inside.
        let m = model(8, Exec::Sequential);
        let members: Vec<_> = (0..8).map(|k| m.random_state(k, 0.05, 5.0)).collect();
        g.bench_function(name, |b| {
            b.iter(|| par::map(exec, &members, |s| run_for(&m, &cfg, RunState::new(s.clone()), 86400.0).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, tendency, tangent_linear, ensemble);
criterion_main!(benches);

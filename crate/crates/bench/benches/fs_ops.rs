use criterion::{criterion_group, criterion_main, Criterion};

use bytefs_core::harness::{self, Profile, RunConfig};
use bytefs_core::Mode;

fn small(profile: Profile, mode: Mode) -> RunConfig {
    let mut cfg = RunConfig {
        workload: profile.defaults(),
        ..Default::default()
    };
    cfg.workload.file_count = cfg.workload.file_count.min(200);
    cfg.workload.ops = 500;
    cfg.mount.mode = mode;
    cfg
}

fn workloads(c: &mut Criterion) {
    let mut g = c.benchmark_group("fs");
    g.sample_size(10);
    for mode in [Mode::BlockOnly, Mode::Full] {
        for profile in [Profile::Create, Profile::Varmail, Profile::Oltp] {
            let cfg = small(profile, mode);
            g.bench_function(format!("{profile}_{mode}"), |b| {
                b.iter(|| harness::run(&cfg).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, workloads);
criterion_main!(benches);

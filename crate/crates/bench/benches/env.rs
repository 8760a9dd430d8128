use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sem_bench::worlds;
use sem_core::env::{shortest_path_oracle, Action, GridWorld, WorldConfig};

fn step(c: &mut Criterion) {
    let mut world = GridWorld::generate(0, WorldConfig::taxi(15, 400)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("step_15x15", |b| {
        b.iter(|| {
            let out = world.step(Action::ALL[rng.random_range(0..6)]).unwrap();
            if out.episode_done {
                world.reset().unwrap();
            }
        })
    });
}

fn observe(c: &mut Criterion) {
    let ws = worlds(16, 8);
    c.bench_function("observe_16", |b| b.iter(|| ws.iter().map(|w| w.observe()).collect::<Vec<_>>()));
}

fn generate(c: &mut Criterion) {
    let mut seed = 0;
    c.bench_function("generate_15x15", |b| {
        b.iter(|| {
            seed += 1;
            GridWorld::generate(seed, WorldConfig::taxi(15, 400)).unwrap()
        })
    });
}

fn bfs(c: &mut Criterion) {
    let w = GridWorld::generate(3, WorldConfig::taxi(15, 400)).unwrap();
    c.bench_function("bfs_15x15", |b| b.iter(|| shortest_path_oracle(&w, w.taxi(), w.target())));
}

criterion_group!(benches, step, observe, generate, bfs);
criterion_main!(benches);

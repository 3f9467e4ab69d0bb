use criterion::{criterion_group, criterion_main, Criterion};
use edgesplit_core::placement::{
    optimize_placement, random_fill, Encoder, PlacementConfig, SurrogateNet,
};
use edgesplit_core::sim::{EnvConfig, Environment};
use edgesplit_core::workload::{default_profiles, generate_arrivals, ArrivalConfig};
use edgesplit_core::SplitDecision;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn busy_environment() -> Environment {
    let mut env = Environment::new(EnvConfig::reference(), default_profiles(), 1).unwrap();
    let arrivals = ArrivalConfig {
        lambda: 6.0,
        ..ArrivalConfig::default()
    };
    let tasks = (0..3)
        .flat_map(|t| generate_arrivals(&arrivals, t))
        .map(|t| t.with_decision(SplitDecision::Semantic))
        .collect();
    env.admit(tasks).unwrap();
    env
}

fn bench_surrogate(c: &mut Criterion) {
    let cfg = PlacementConfig::default();
    let enc = Encoder::new(10, cfg.max_containers, true);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = SurrogateNet::new(enc.dim(), cfg.hidden, &mut rng);
    let x: Vec<f64> = (0..enc.dim()).map(|_| rng.random::<f64>()).collect();
    let range = enc.placement_range(cfg.max_containers);

    c.bench_function("surrogate_predict", |b| {
        b.iter(|| net.predict(black_box(&x)).unwrap())
    });
    c.bench_function("surrogate_input_gradient", |b| {
        b.iter(|| net.input_gradient(black_box(&x), range.clone()).unwrap())
    });

    let env = busy_environment();
    let state = env.snapshot_state();
    let p_init = random_fill(&state, &env.previous_placement(), None, &mut rng);
    c.bench_function("optimize_placement", |b| {
        b.iter(|| optimize_placement(&net, &enc, black_box(&state), &p_init, &cfg).unwrap())
    });
}

criterion_group!(benches, bench_surrogate);
criterion_main!(benches);

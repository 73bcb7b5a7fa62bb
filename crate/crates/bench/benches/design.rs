use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hitl_abc::design::to_unit_box;
use hitl_abc::{
    candidate_utility, kl_knn, sample_feedback_posterior, BeliefHyperparams, DesignConfig,
    InclusionBelief, InclusionVector, RngStream, SampleMatrix,
};
use hitl_abc_bench::gaussian_engine;
use std::hint::black_box;

fn uniform_set(n: usize, dim: usize, seed: u64) -> SampleMatrix {
    use rand::Rng;
    let mut rng = RngStream::new(seed).rng();
    SampleMatrix::new(dim, (0..n * dim).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn kl(c: &mut Criterion) {
    for dim in [1, 4] {
        let (p, q) = (uniform_set(4000, dim, 1), uniform_set(4000, dim, 2));
        c.bench_function(&format!("kl_knn 4000x{dim}"), |b| {
            b.iter(|| kl_knn(black_box(&p), black_box(&q)).unwrap())
        });
    }
}

fn posterior(c: &mut Criterion) {
    let all = InclusionVector::ones(5);
    c.bench_function("abc_posterior gaussian n_sim=2000 fresh engine", |b| {
        b.iter_batched(
            || gaussian_engine(2000, 3),
            |engine| engine.abc_posterior(&all, &RngStream::new(4)).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn utility(c: &mut Criterion) {
    let engine = gaussian_engine(2000, 5);
    let config = DesignConfig::default();
    let belief = InclusionBelief::fresh(5, BeliefHyperparams::default());
    let root = RngStream::new(6);
    let base = sample_feedback_posterior(
        &engine,
        &belief,
        4000,
        config.mixture_draws,
        &root.child("base", 0),
    )
    .unwrap();
    let base = to_unit_box(&base.samples, engine.prior()).unwrap();
    c.bench_function("candidate_utility gaussian fresh belief", |b| {
        b.iter(|| {
            candidate_utility(
                &engine,
                &belief,
                0,
                &base,
                &config,
                &root.child("candidate", 0),
            )
            .unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kl, posterior, utility
}
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadekit_core::dataset::generate;
use shadekit_core::design_space::{encode, enumerate, is_valid};
use shadekit_core::moo::non_dominated_sort;
use shadekit_core::sensitivity::shap_mc;
use shadekit_core::sim::simulate;
use shadekit_core::surrogate::{train, Hyperparams};
use shadekit_core::{Family, Fidelity, Output, SplitSpec};

fn oracle(c: &mut Criterion) {
    let alts: Vec<_> = enumerate(Family::Louvers).into_iter().filter(is_valid).step_by(997).collect();
    let mut i = 0;
    c.bench_function("simulate louvers coarse", |b| {
        b.iter(|| {
            i = (i + 1) % alts.len();
            simulate(black_box(&alts[i]), Fidelity::Coarse).unwrap()
        })
    });
}

fn surrogate(c: &mut Criterion) {
    let ds = generate(Family::VerticalPanel, Fidelity::Coarse, 1).unwrap();
    let split = SplitSpec::new(42);
    let params = Hyperparams::Forest { n_estimators: 100, max_depth: None };
    let model = train(&ds, Output::Sda, params, &split, 42).unwrap();
    let x = encode(&enumerate(Family::VerticalPanel).into_iter().find(is_valid).unwrap());
    c.bench_function("forest predict (100 trees)", |b| b.iter(|| model.predict(black_box(&x))));

    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("forest fit vertical_panel sda", |b| b.iter(|| train(&ds, Output::Sda, params, &split, 42).unwrap()));
    g.finish();

    let background: Vec<Vec<f64>> = ds.rows.iter().filter(|r| r.valid).step_by(20).map(|r| r.features.clone()).collect();
    let f = |v: &[f64]| model.predict(v);
    let mut g = c.benchmark_group("shap");
    g.sample_size(10);
    g.bench_function("shap_mc 32 permutations", |b| b.iter(|| shap_mc(&f, black_box(&x), &background, 32, 7).unwrap()));
    g.finish();
}

fn sorting(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("non-dominated sort 1000x4", |b| {
        b.iter_batched(
            || (0..1000).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>()).collect::<Vec<_>>(),
            |rows| non_dominated_sort(&rows),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, oracle, surrogate, sorting);
criterion_main!(benches);

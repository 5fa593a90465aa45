use criterion::{criterion_group, criterion_main, Criterion};
use ivtrial_core::estimators::{self, ExtendedTslsSpec, Link};
use ivtrial_core::montecarlo::{run_campaign, CampaignSpec};
use ivtrial_core::regress::{logistic_fit, ols_fit};
use ivtrial_core::{dgp, Dag, DesignMatrix, DgpConfig, Model};
use std::hint::black_box;

fn regression(c: &mut Criterion) {
    let data = dgp::generate(&DgpConfig::new(Model::AdherenceC, 1000, 1))
        .unwrap()
        .data;
    let n = data.len();
    let x = DesignMatrix::with_intercept(
        n,
        [
            ("t", data.column("t").unwrap()),
            ("x", data.column("x").unwrap()),
        ],
    )
    .unwrap();
    let y = data.column("y").unwrap();
    let a = data.column("a").unwrap();
    c.bench_function("ols_fit n=1000 p=3", |b| {
        b.iter(|| ols_fit(black_box(&x), black_box(&y)).unwrap())
    });
    c.bench_function("logistic_fit n=1000 p=3", |b| {
        b.iter(|| logistic_fit(black_box(&x), black_box(&a)).unwrap())
    });
}

fn estimators(c: &mut Criterion) {
    let data = dgp::generate(&DgpConfig::new(Model::PainTrialA, 1000, 1))
        .unwrap()
        .data;
    c.bench_function("iv_ratio n=1000", |b| {
        b.iter(|| estimators::iv_ratio(black_box(&data)).unwrap())
    });
    let spec = ExtendedTslsSpec::new("s", Link::Linear);
    c.bench_function("extended_tsls n=1000", |b| {
        b.iter(|| estimators::extended_tsls(black_box(&data), &spec).unwrap())
    });
}

fn d_separation(c: &mut Criterion) {
    let g =
        Dag::parse("latent U\nR -> T\nT -> Y\nU -> T\nU -> Y\nX -> T\nX -> Y\nT -> M\nM -> Y\n")
            .unwrap();
    c.bench_function("check_iv 6 nodes", |b| {
        b.iter(|| g.check_iv(black_box("R"), "T", "Y", &["U", "X"]).unwrap())
    });
}

fn campaign(c: &mut Criterion) {
    let spec = CampaignSpec::new(DgpConfig::new(Model::PainTrialA, 500, 0), 50, 1)
        .estimator("policy", "policy")
        .unwrap()
        .estimator("iv", "iv_ratio")
        .unwrap();
    let mut group = c.benchmark_group("campaign");
    group.sample_size(10);
    group.bench_function("pain_a 50 reps n=500", |b| {
        b.iter(|| run_campaign(black_box(&spec)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, regression, estimators, d_separation, campaign);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, Criterion};
use gsf_bench::{anes, scenario};
use gsf_core::design::AsymmetryFamily;
use gsf_core::mle::Fitter;
use gsf_core::simulate::replicate_outcomes;
use gsf_core::{decompose, fit_model, FFunction, ModelSpec};

fn fits(c: &mut Criterion) {
    let table = anes();
    let mut group = c.benchmark_group("fit_anes");
    group.bench_function("s", |b| b.iter(|| fit_model(&table, &ModelSpec::symmetry()).unwrap()));
    for (name, ff) in [("gs_kl", FFunction::KullbackLeibler), ("gs_pearson", FFunction::Pearson), ("gs_hellinger", FFunction::Hellinger)] {
        let spec = ModelSpec::asymmetry(AsymmetryFamily::Gs, ff);
        group.bench_function(name, |b| b.iter(|| fit_model(&table, &spec).unwrap()));
    }
    let ls = ModelSpec::asymmetry(AsymmetryFamily::Ls, FFunction::KullbackLeibler);
    group.bench_function("ls_kl", |b| b.iter(|| fit_model(&table, &ls).unwrap()));
    group.finish();
}

fn wald(c: &mut Criterion) {
    let table = anes();
    c.bench_function("decompose_anes_kl", |b| b.iter(|| decompose(&table, FFunction::KullbackLeibler).unwrap()));
}

fn replicate(c: &mut Criterion) {
    let config = scenario(3);
    let shape = config.shape().unwrap();
    let fitters: Vec<Fitter> = config.models.iter().map(|m| Fitter::new(&shape, *m).unwrap()).collect();
    let mut rep = 0u64;
    c.bench_function("power_replicate_row3", |b| {
        b.iter(|| {
            rep += 1;
            replicate_outcomes(&config, &fitters, rep).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = fits, wald, replicate
}
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use kwe_bench::bump_on;
use kwe_core::collision::{collision, collision_sym};
use kwe_core::fluxes::flux_mass;
use kwe_core::linearized::KzKernel;
use kwe_core::{LogGrid, QuadratureConfig, Spectrum};

fn collision_benches(c: &mut Criterion) {
    let grid = LogGrid::default();
    let kz = Spectrum::kz(grid);
    let bump = bump_on(grid);
    let q = QuadratureConfig::default();
    let sweep = QuadratureConfig::sweep();

    c.bench_function("collision_kz_default", |b| b.iter(|| collision(black_box(&kz), 1.0, &q).unwrap()));
    c.bench_function("collision_kz_sweep", |b| b.iter(|| collision(black_box(&kz), 1.0, &sweep).unwrap()));
    c.bench_function("collision_sym_kz_kz_bump", |b| {
        b.iter(|| collision_sym(&kz, &kz, black_box(&bump), 1.0, &sweep).unwrap())
    });
}

fn flux_benches(c: &mut Criterion) {
    let kz = Spectrum::kz(LogGrid::default());
    let sweep = QuadratureConfig::sweep();
    let mut g = c.benchmark_group("flux");
    g.sample_size(10);
    g.bench_function("flux_mass_kz_sweep", |b| b.iter(|| flux_mass(black_box(&kz), 1.0, &sweep).unwrap()));
    g.finish();
}

fn kernel_benches(c: &mut Criterion) {
    let k = KzKernel::new(&QuadratureConfig::default()).unwrap();
    c.bench_function("kappa_near_diagonal", |b| b.iter(|| k.kappa(black_box(1e-3))));
    c.bench_function("kappa_far", |b| b.iter(|| k.kappa(black_box(3.0))));
}

criterion_group!(benches, collision_benches, flux_benches, kernel_benches);
criterion_main!(benches);

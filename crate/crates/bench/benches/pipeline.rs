use criterion::{black_box, criterion_group, criterion_main, Criterion};
use qdcav_core::sweep::{analyze_point, simulate_point};
use qdcav_core::{effective_1pl_fwhm, filter, fit, qd_emission, CavityMode, LineLabel, PhononModel, QdLine, Scenario, SpectralGrid};

fn spectra(c: &mut Criterion) {
    let grid = SpectralGrid::default();
    let pm = PhononModel::default();
    let line = QdLine::fixed(LineLabel::X, 1350.0);
    let cav = CavityMode::from_q(1351.0, 1000.0).unwrap();
    c.bench_function("qd_emission", |b| b.iter(|| qd_emission(&pm, black_box(&line), 20.0, &grid).unwrap()));
    let em = qd_emission(&pm, &line, 20.0, &grid).unwrap();
    c.bench_function("filter", |b| b.iter(|| filter(black_box(&cav), &em.zpl, &em.one_phonon).unwrap()));
    c.bench_function("effective_1pl_fwhm", |b| b.iter(|| effective_1pl_fwhm(&pm, black_box(20.0)).unwrap()));
}

fn fitting(c: &mut Criterion) {
    let spec = Scenario::Fig3a.spec();
    let sim = simulate_point(&spec, 0, 80).unwrap();
    c.bench_function("sweep_point", |b| b.iter(|| analyze_point(&spec, black_box(&sim), 1.5)));
    let init = qdcav_core::initialize_peaks(&sim.spectrum, 2).unwrap();
    c.bench_function("fit_two_peaks", |b| b.iter(|| fit(black_box(&sim.spectrum), &init.model).unwrap()));
}

criterion_group!(benches, spectra, fitting);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use trackersplat_bench::Fixture;
use trackersplat_core::multiview::{update_all, UpdateThresholds};
use trackersplat_core::pipeline::compensate_with_index;
use trackersplat_core::pwils::{accumulate_all_views, SolveThresholds};
use trackersplat_core::regularize::{detect_static_all, median_filter, StaticRule};
use trackersplat_core::splat::rasterize_weights;

fn stages(c: &mut Criterion) {
    let fx = Fixture::new(2000, 8, 2);
    let frame1 = fx.frame1();
    let cameras = &fx.scene.cameras;
    let tracks = &fx.tracks[0];
    let config = &fx.config;
    let maps: Vec<_> = cameras
        .iter()
        .enumerate()
        .map(|(v, cam)| rasterize_weights(v, cam, frame1, config.alpha_cutoff).unwrap())
        .collect();
    let table = accumulate_all_views(&maps, tracks, frame1.len(), config.static_threshold_px).unwrap();
    let motions = table.solve(&SolveThresholds::from(config));
    let updates = update_all(frame1, &motions, table.n_views(), cameras, &UpdateThresholds::from(config));

    let mut group = c.benchmark_group("stages");
    group.sample_size(10);
    group.bench_function("rasterize_one_view", |b| {
        b.iter(|| rasterize_weights(0, &cameras[0], frame1, config.alpha_cutoff).unwrap())
    });
    group.bench_function("accumulate_all_views", |b| {
        b.iter(|| accumulate_all_views(&maps, tracks, frame1.len(), config.static_threshold_px).unwrap())
    });
    group.bench_function("solve_all_views", |b| b.iter(|| table.solve(&SolveThresholds::from(config))));
    group.bench_function("multiview_update", |b| {
        b.iter(|| update_all(frame1, &motions, table.n_views(), cameras, &UpdateThresholds::from(config)))
    });
    group.bench_function("static_detection", |b| b.iter(|| detect_static_all(&table, &StaticRule::from(config))));
    group.bench_function("median_filter", |b| {
        b.iter_batched(|| updates.clone(), |u| median_filter(&u, &fx.index, frame1).unwrap(), BatchSize::LargeInput)
    });
    group.bench_function("compensate_frame", |b| {
        b.iter(|| compensate_with_index(frame1, cameras, tracks, &fx.index, config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);

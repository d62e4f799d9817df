use criterion::{criterion_group, criterion_main, Criterion};
use rainview::photometric::{ambient_from_density, compose};
use rainview::rain::sample_drops;
use rainview::streak::{rasterize, render_view, streaks_for_view, DEFAULT_EXPOSURE, DEFAULT_NEAR};
use rainview::StreakSettings;
use rainview_bench::{midtone, rain_scene};
use std::hint::black_box;

fn render(c: &mut Criterion) {
    let (params, volume, cam) = rain_scene(0.3);
    c.bench_function("sample_drops", |b| b.iter(|| sample_drops(black_box(&params), &volume, 1.5)));

    let drops = sample_drops(&params, &volume, 0.0);
    let settings = StreakSettings { exposure: DEFAULT_EXPOSURE, near: DEFAULT_NEAR, far: params.omega_dep };
    c.bench_function("streaks_for_view", |b| b.iter(|| streaks_for_view(black_box(&drops), &cam, &settings)));

    let streaks = streaks_for_view(&drops, &cam, &settings);
    c.bench_function("rasterize_640x480", |b| b.iter(|| rasterize(black_box(&streaks), 640, 480)));

    c.bench_function("render_view_640x480", |b| {
        b.iter(|| render_view(black_box(&params), &volume, &cam, 0.0, DEFAULT_EXPOSURE, DEFAULT_NEAR))
    });

    let mask = render_view(&params, &volume, &cam, 0.0, DEFAULT_EXPOSURE, DEFAULT_NEAR);
    let bg = midtone(640, 480);
    let light = ambient_from_density([1.0; 3], 0.5, params.omega_den).unwrap();
    c.bench_function("compose_640x480", |b| b.iter(|| compose(black_box(&bg), &mask, &light, [1.0; 3]).unwrap()));
}

criterion_group!(benches, render);
criterion_main!(benches);

//! Criterion benches comparing the batch-parallel code path against the
//! sequential reference on the hot per-item workloads: embedding inference,
//! one PGD attack step, and dataset rendering.
//!
//! Build with the default `parallel` feature to measure rayon against the
//! in-process sequential reference; build with `--no-default-features` to
//! confirm the sequential fallback matches the reference exactly.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rfidlab_core::data::{generate_split, random_noise_images, Split, ToyDatasetSpec};
use rfidlab_core::models::MiniEmbedder;
use rfidlab_core::parallel::{par_map_indexed, seq_map_indexed};
use rfidlab_core::tape::Tape;

fn embed_one(model: &MiniEmbedder, batch: &rfidlab_core::data::ImageBatch, i: usize) -> f32 {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let image = batch.image(i);
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    let x = tape.constant(rfidlab_core::Tensor::new(shape, image.data().to_vec()).unwrap());
    let emb = model.embed_on(&mut tape, &vars, x).unwrap();
    tape.value(emb).data()[0]
}

fn attack_step_one(model: &MiniEmbedder, batch: &rfidlab_core::data::ImageBatch, i: usize) -> f32 {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let image = batch.image(i);
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    let x = tape.leaf(rfidlab_core::Tensor::new(shape, image.data().to_vec()).unwrap(), true);
    let emb = model.embed_on(&mut tape, &vars, x).unwrap();
    let loss = tape.l2_norm(emb);
    tape.backward(loss).unwrap();
    tape.grad(x).unwrap().data()[0]
}

fn bench_embed(c: &mut Criterion) {
    let model = MiniEmbedder::init(1);
    let batch = random_noise_images(32, 7);
    let mut group = c.benchmark_group("embed_batch32");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| par_map_indexed(batch.len(), |i| embed_one(&model, &batch, i)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| seq_map_indexed(batch.len(), |i| embed_one(&model, &batch, i)))
    });
    group.finish();
}

fn bench_attack_step(c: &mut Criterion) {
    let model = MiniEmbedder::init(1);
    let batch = random_noise_images(16, 9);
    let mut group = c.benchmark_group("pgd_step_batch16");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| par_map_indexed(batch.len(), |i| attack_step_one(&model, &batch, i)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| seq_map_indexed(batch.len(), |i| attack_step_one(&model, &batch, i)))
    });
    group.finish();
}

fn bench_dataset_render(c: &mut Criterion) {
    let mut group = c.benchmark_group("render_dataset_100");
    group.sample_size(10);
    // generate_split is internally parallel; the sequential comparison point
    // is the same renderer driven through seq_map_indexed
    group.bench_function("parallel", |b| {
        b.iter_batched(
            || ToyDatasetSpec::new(10, 1, 3),
            |spec| generate_split(&spec, Split::Train),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_embed, bench_attack_step, bench_dataset_render);
criterion_main!(benches);

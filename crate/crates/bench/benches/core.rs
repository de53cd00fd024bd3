use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use twdb::fulltext::{kept_terms, FilterConfig};
use twdb::geocluster::{cluster_user, fof_cluster, ClusterConfig};
use twdb::htm::{cover_circle, latlon_to_htm};
use twdb::store::segment::{write_segment, Segment};
use twdb::TweetRow;
use twdb_bench::{local_points, sphere_points, tweet_rows};

fn htm(c: &mut Criterion) {
    let pts = sphere_points(10_000, 1);
    let mut g = c.benchmark_group("htm");
    g.throughput(Throughput::Elements(pts.len() as u64));
    for level in [10u8, 20] {
        g.bench_with_input(BenchmarkId::new("lookup", level), &level, |b, &level| {
            b.iter(|| {
                for &(lon, lat) in &pts {
                    black_box(latlon_to_htm(lon, lat, level).unwrap());
                }
            })
        });
    }
    g.finish();
    let mut g = c.benchmark_group("cover");
    for r in [1.0, 10.0, 300.0] {
        g.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            b.iter(|| black_box(cover_circle(-74.0, 40.72, r, 64).unwrap()))
        });
    }
    g.finish();
}

fn text(c: &mut Criterion) {
    let rows = tweet_rows(5_000, 2);
    let cfg = FilterConfig::default();
    let mut g = c.benchmark_group("text");
    g.throughput(Throughput::Elements(rows.len() as u64));
    g.bench_function("tokenize_filter", |b| {
        b.iter(|| {
            for r in &rows {
                black_box(kept_terms(&r.text, &cfg));
            }
        })
    });
    g.finish();
}

fn cluster(c: &mut Criterion) {
    let mut g = c.benchmark_group("fof");
    for n in [500usize, 2_000, 8_000] {
        let pts = local_points(n, -74.0, 40.72, 0.5, n as u64);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("partition", n), &pts, |b, pts| b.iter(|| black_box(fof_cluster(pts, 1.0))));
        g.bench_with_input(BenchmarkId::new("top3", n), &pts, |b, pts| {
            b.iter(|| black_box(cluster_user(1, pts, &ClusterConfig::default())))
        });
    }
    g.finish();
}

fn segment(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let rows = tweet_rows(50_000, 3);
    let path = dir.path().join("tweet.twseg");
    write_segment(&path, &rows, true).unwrap();
    let seg = Segment::open(&path).unwrap();
    let mut g = c.benchmark_group("segment");
    g.throughput(Throughput::Bytes(seg.bytes()));
    g.bench_function("scan", |b| {
        b.iter(|| {
            let n = seg.iter::<TweetRow>().map(|r| r.unwrap().tweet_id).fold(0u64, u64::wrapping_add);
            black_box(n)
        })
    });
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = htm, text, cluster, segment
}
criterion_main!(benches);

//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twdb::geocluster::GeoPoint;
use twdb::htm::latlon_to_htm;
use twdb::{Lang, TweetRow};

/// Uniform points on the sphere as (lon, lat).
pub fn sphere_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            (rng.random_range(-180.0..180.0), z.asin().to_degrees())
        })
        .collect()
}

/// Points scattered over a box of `side_deg` around (lon, lat).
pub fn local_points(n: usize, lon: f64, lat: f64, side_deg: f64, seed: u64) -> Vec<GeoPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = side_deg / 2.0;
    (0..n).map(|i| GeoPoint::new(lon + rng.random_range(-h..h), lat + rng.random_range(-h..h), i as i64)).collect()
}

const WORDS: &[&str] = &[
    "network", "coffee", "the", "morning", "subway", "#nyc", "@friend", "2012", "soooo", "good", "weather", "traffic",
    "東京", "again", "lol", "http", "meeting", "tonight", "game", "!!!",
];

pub fn tweet_text(rng: &mut impl Rng) -> String {
    let n = rng.random_range(4..16);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Geo-tagged tweet rows in key order.
pub fn tweet_rows(n: usize, seed: u64) -> Vec<TweetRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sphere_points(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, (lon, lat))| TweetRow {
            tweet_id: i as u64 + 1,
            run_id: 1,
            created_at: 1_325_376_000 + i as i64,
            user_id: rng.random_range(1..10_000),
            text: tweet_text(&mut rng),
            in_reply_to_tweet_id: None,
            in_reply_to_user_id: None,
            lon: Some(lon),
            lat: Some(lat),
            htm_id: Some(latlon_to_htm(lon, lat, 20).unwrap().raw()),
            lang: Lang::UND,
            embedded: false,
        })
        .collect()
}

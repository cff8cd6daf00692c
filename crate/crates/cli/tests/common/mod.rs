#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use tiny_circuits::rng;

pub fn iris_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv")
}

fn normal(r: &mut rng::StreamRng) -> f64 {
    // Box-Muller
    let u: f64 = r.random::<f64>().max(1e-300);
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Donor-style data: recency, frequency, monetary and time columns with a
/// roughly 3:1 class imbalance, 748 rows.
pub fn blood_like_csv(seed: u64) -> String {
    let mut r = rng::stream(seed, 1, 0);
    let mut out = String::from("recency,frequency,monetary,time,donated\n");
    for _ in 0..748 {
        let recency = (r.random::<f64>().powi(2) * 40.0).round();
        let frequency = 1.0 + (r.random::<f64>().powi(3) * 40.0).round();
        let time = recency + frequency * 2.0 + (r.random::<f64>() * 30.0).round();
        let z = -0.9 - 0.09 * recency + 0.12 * frequency - 0.01 * time + 0.6 * normal(&mut r);
        let donated = u8::from(z > 0.0 || r.random::<f64>() < 0.08);
        writeln!(out, "{recency},{frequency},{},{time},{donated}", frequency * 250.0).unwrap();
    }
    out
}

/// Four Gaussian classes in two informative dimensions plus two noise
/// columns and a weakly informative categorical, 400 rows.
pub fn four_class_csv(seed: u64) -> String {
    let centers = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];
    let shades = ["red", "green", "blue", "grey"];
    let mut r = rng::stream(seed, 2, 0);
    let mut out = String::from("a,b,noise1,noise2,shade,class\n");
    for i in 0..400 {
        let k = i % 4;
        let (cx, cy) = centers[k];
        let a = cx + 0.6 * normal(&mut r);
        let b = cy + 0.6 * normal(&mut r);
        let shade = if r.random::<f64>() < 0.4 { shades[k] } else { shades[r.random_range(0..4)] };
        writeln!(out, "{a:.4},{b:.4},{:.4},{:.4},{shade},c{k}", normal(&mut r), normal(&mut r)).unwrap();
    }
    out
}

/// Writes `text` to `dir/name` and returns the path.
pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

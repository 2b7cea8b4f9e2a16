//! Replays the checked-in fuzz corpus, plus truncations and byte flips of
//! every seed, through the same checks the fuzz targets make.

use std::path::Path;

use pgf::detection::{
    detections_from_csv_str, detections_from_json_str, detections_to_csv_string,
    detections_to_json_string,
};
use pgf::guidance::parse_pgm16;
use pgf::harness::RunConfig;
use pgf::scene::{scene_from_bytes, scene_from_csv_str, scene_to_bytes, scene_to_csv_string};

/// Runs one input; returns whether it parsed.
type Target = fn(&[u8]) -> bool;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

fn scene_bin(data: &[u8]) -> bool {
    let Ok(s) = scene_from_bytes(data) else {
        return false;
    };
    assert_eq!(scene_from_bytes(&scene_to_bytes(&s)).unwrap(), s);
    true
}

fn scene_csv(data: &[u8]) -> bool {
    let Some(Ok(s)) = text(data).map(scene_from_csv_str) else {
        return false;
    };
    assert_eq!(scene_from_csv_str(&scene_to_csv_string(&s)).unwrap(), s);
    true
}

fn detections_csv(data: &[u8]) -> bool {
    let Some(Ok(b)) = text(data).map(detections_from_csv_str) else {
        return false;
    };
    assert_eq!(
        detections_from_csv_str(&detections_to_csv_string(&b)).unwrap(),
        b
    );
    true
}

fn detections_json(data: &[u8]) -> bool {
    let Some(Ok(b)) = text(data).map(detections_from_json_str) else {
        return false;
    };
    assert_eq!(
        detections_from_json_str(&detections_to_json_string(&b)).unwrap(),
        b
    );
    true
}

fn config_json(data: &[u8]) -> bool {
    let Some(Ok(c)) = text(data).map(RunConfig::from_json_str) else {
        return false;
    };
    assert_eq!(RunConfig::from_json_str(&c.to_json_string()).unwrap(), c);
    true
}

fn pgm16(data: &[u8]) -> bool {
    let Ok(img) = parse_pgm16(data) else {
        return false;
    };
    assert_eq!(img.data.len(), img.width * img.height);
    assert!(img.data.iter().all(|&v| v <= img.maxval));
    true
}

fn mutations(seed: &[u8]) -> impl Iterator<Item = Vec<u8>> + '_ {
    let n = seed.len();
    let cuts = (0..n)
        .step_by((n / 64).max(1))
        .map(move |k| seed[..k].to_vec());
    let flips = (0..n).step_by((n / 128).max(1)).flat_map(move |i| {
        [0x01u8, 0x80, 0xff].into_iter().map(move |m| {
            let mut v = seed.to_vec();
            v[i] ^= m;
            v
        })
    });
    cuts.chain(flips)
}

fn replay(name: &str, target: Target) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(name);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {}", dir.display());
    let mut parsed = 0;
    for f in &files {
        let seed = std::fs::read(f).unwrap();
        parsed += usize::from(target(&seed));
        for m in mutations(&seed) {
            target(&m);
        }
    }
    assert!(parsed > 0, "no seed in {} parses", dir.display());
}

#[test]
fn scene_bin_corpus() {
    replay("scene_bin", scene_bin);
}

#[test]
fn scene_csv_corpus() {
    replay("scene_csv", scene_csv);
}

#[test]
fn detections_csv_corpus() {
    replay("detections_csv", detections_csv);
}

#[test]
fn detections_json_corpus() {
    replay("detections_json", detections_json);
}

#[test]
fn config_json_corpus() {
    replay("config_json", config_json);
}

#[test]
fn pgm16_corpus() {
    replay("pgm16", pgm16);
}

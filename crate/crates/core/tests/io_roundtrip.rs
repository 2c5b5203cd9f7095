use std::fs;

use facesub::dataset::Protocol;
use facesub::io::{self, Manifest, ManifestOptions};
use facesub::synth::{gen_scenario, ScenarioConfig};
use facesub::Error;

fn options() -> ManifestOptions {
    ManifestOptions { filtering: true, score_floor: 0.0 }
}

#[test]
fn synthetic_datasets_survive_a_round_trip() {
    for (seed, protocol, networks) in [
        (1, Protocol::SurveillanceBooking, 1),
        (2, Protocol::MultishotSearch, 2),
        (3, Protocol::SurveillanceSurveillance, 1),
    ] {
        let cfg = ScenarioConfig {
            seed,
            protocol,
            networks,
            shot_cut_frames: if protocol.uses_anchors() { vec![30, 70] } else { vec![] },
            box_jitter: 1.5,
            ..Default::default()
        };
        let ds = gen_scenario(&cfg).unwrap().dataset;
        let dir = tempfile::tempdir().unwrap();
        let path = io::write_dataset(&ds, dir.path(), options()).unwrap();
        let back = io::ingest(&Manifest::load(&path).unwrap()).unwrap();
        assert_eq!(back.protocol, ds.protocol);
        assert_eq!(back.embeddings, ds.embeddings, "seed {seed}");
        assert_eq!(back.gallery, ds.gallery, "seed {seed}");
        assert_eq!(back.truth, ds.truth, "seed {seed}");
        assert_eq!(back.anchors, ds.anchors, "seed {seed}");
        assert_eq!(back.background, ds.background, "seed {seed}");
        assert_eq!(back.videos.len(), ds.videos.len());
        for (a, b) in back.videos.iter().zip(&ds.videos) {
            assert_eq!(a.scene_cuts, b.scene_cuts, "{}", b.id);
            assert_eq!(a.detections.len(), b.detections.len(), "{}", b.id);
            for (x, y) in a.detections.iter().zip(&b.detections) {
                assert_eq!(x, y);
            }
        }
        assert_eq!(back, ds, "seed {seed}");

        // writing the re-read dataset reproduces every file byte for byte
        let again = tempfile::tempdir().unwrap();
        io::write_dataset(&back, again.path(), options()).unwrap();
        for entry in fs::read_dir(dir.path()).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name();
            if name == "manifest.toml" {
                continue;
            }
            assert_eq!(fs::read(entry.path()).unwrap(), fs::read(again.path().join(&name)).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn fte_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.fte");
    let ids = vec!["a".to_string(), "b".to_string()];
    let rows = vec![vec![0.5f32, -1.25, 3.0], vec![f32::MIN_POSITIVE, 0.0, -0.0]];
    io::write_fte(&p, &ids, &rows).unwrap();
    let (i2, r2) = io::read_fte(&p).unwrap();
    assert_eq!(i2, ids);
    assert_eq!(
        r2.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
        rows.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let mut bytes = fs::read(&p).unwrap();
    bytes.truncate(bytes.len() - 2);
    fs::write(&p, &bytes).unwrap();
    assert!(io::read_fte(&p).is_err());
    assert!(io::write_fte(&p, &ids, &[vec![f32::NAN, 0.0, 0.0], vec![0.0; 3]]).is_err());
}

fn small_dataset_dir() -> (tempfile::TempDir, std::path::PathBuf) {
    let ds = gen_scenario(&ScenarioConfig { frames: 10, ..Default::default() }).unwrap().dataset;
    let dir = tempfile::tempdir().unwrap();
    let path = io::write_dataset(&ds, dir.path(), options()).unwrap();
    (dir, path)
}

fn edit_line(path: &std::path::Path, line: usize, f: impl Fn(&str) -> String) {
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i + 1 == line { f(l) } else { l.to_string() })
        .collect();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn out_of_range_score_names_its_line() {
    let (dir, path) = small_dataset_dir();
    let det = dir.path().join("detections.jsonl");
    let text = fs::read_to_string(&det).unwrap();
    let line = text.lines().position(|l| l.contains("\"score\"")).unwrap() + 3;
    edit_line(&det, line, |l| {
        let start = l.find("\"score\":").unwrap() + 8;
        let end = start + l[start..].find(',').unwrap();
        format!("{}1.2{}", &l[..start], &l[end..])
    });
    match io::ingest(&Manifest::load(&path).unwrap()) {
        Err(Error::Parse { line: l, path: p, .. }) => {
            assert_eq!(l, line);
            assert!(p.ends_with("detections.jsonl"));
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn dangling_embedding_id_is_rejected() {
    let (dir, path) = small_dataset_dir();
    let det = dir.path().join("detections.jsonl");
    let text = fs::read_to_string(&det).unwrap();
    let line = text.lines().position(|l| l.contains("embedding_id")).unwrap() + 1;
    edit_line(&det, line, |l| {
        let start = l.find("\"embedding_id\":\"").unwrap() + 16;
        format!("{}missing_{}", &l[..start], &l[start..])
    });
    let err = io::ingest(&Manifest::load(&path).unwrap()).unwrap_err();
    assert!(err.to_string().contains("missing_"), "{err}");
}

#[test]
fn empty_detection_file_is_accepted() {
    let (dir, path) = small_dataset_dir();
    fs::write(dir.path().join("detections.jsonl"), "").unwrap();
    let ds = io::ingest(&Manifest::load(&path).unwrap()).unwrap();
    assert!(ds.videos.iter().all(|v| v.detections.is_empty()));
}

#[test]
fn score_floor_drops_low_detections() {
    let (_dir, path) = small_dataset_dir();
    let mut m = Manifest::load(&path).unwrap();
    let all = io::ingest(&m).unwrap();
    m.options.score_floor = 0.6;
    let kept = io::ingest(&m).unwrap();
    let count = |d: &facesub::dataset::Dataset| d.videos.iter().map(|v| v.detections.len()).sum::<usize>();
    let expected = all.videos.iter().flat_map(|v| &v.detections).filter(|d| d.score > 0.6).count();
    assert_eq!(count(&kept), expected);
    assert!(count(&kept) < count(&all));
}

#[test]
fn malformed_json_is_a_parse_error() {
    let (dir, path) = small_dataset_dir();
    let g = dir.path().join("gallery.jsonl");
    edit_line(&g, 2, |l| l[..l.len() / 2].to_string());
    assert!(matches!(io::ingest(&Manifest::load(&path).unwrap()), Err(Error::Parse { line: 2, .. })));
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fuzzcoh::mts::{write_csv, DatasetMetadata};
use fuzzcoh::pipeline::{CsvInput, InputSource};
use fuzzcoh::{gen_dataset, run_pipeline, DependenceEstimator, PipelineConfig, SimConfig};

fn small_sim(seed: u64) -> SimConfig {
    SimConfig {
        n_blocks: 30,
        seed,
        ..SimConfig::default()
    }
}

fn config(input: InputSource, out: &Path) -> PipelineConfig {
    let json = serde_json::json!({
        "input": input,
        "c_grid": [2, 3],
        "m_grid": [1.5, 2.0],
        "seed": 11,
        "output_dir": out,
    });
    serde_json::from_value(json).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(InputSource::Simulation(small_sim(3)), tmp.path());
    run_pipeline(&cfg).unwrap();
    let first = snapshot(tmp.path());
    run_pipeline(&cfg).unwrap();
    assert_eq!(first, snapshot(tmp.path()));
    for f in [
        "config.json",
        "truth.json",
        "summary.csv",
        "raw/X-Y/features.csv",
        "raw/X-Y/fsi_grid.json",
        "raw/X-Y/memberships.csv",
        "raw/X-Y/centers.json",
        "raw/X-Y/evaluation.json",
        "raw/X-Y/connectivity_summary.json",
    ] {
        assert!(first.contains_key(Path::new(f)), "missing {f}");
    }
}

#[test]
fn every_band_gets_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(InputSource::Simulation(small_sim(5)), tmp.path());
    cfg.bands = ["Delta", "Theta", "Alpha", "Beta", "Gamma"].map(String::from).to_vec();
    let outcome = run_pipeline(&cfg).unwrap();
    assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);
    assert_eq!(outcome.rows.len(), 5);
    for band in &cfg.bands {
        assert!(tmp.path().join(band).join("X-Y").join("memberships.csv").is_file());
    }
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    assert!(summary.starts_with("band,pair,n_blocks,n_excluded,C,m,FSI,RI,accuracy,fuzzy_pct,status"));
}

fn write_csv_input(dir: &Path, regions: bool) -> CsvInput {
    let sim = gen_dataset(&small_sim(8)).unwrap();
    let data = dir.join("data.csv");
    write_csv(&sim.dataset, fs::File::create(&data).unwrap(), true).unwrap();
    let meta = DatasetMetadata {
        block_length: None,
        labels: Some(sim.kinds.iter().map(|k| *k as i64).collect()),
        regions: regions.then(|| {
            BTreeMap::from([
                ("Front".to_string(), vec!["X1".to_string(), "X2".to_string()]),
                ("Back".to_string(), vec!["Y1".to_string(), "Y2".to_string()]),
                ("Side".to_string(), vec!["X3".to_string(), "Y3".to_string(), "Y4".to_string()]),
            ])
        }),
    };
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_string(&meta).unwrap()).unwrap();
    CsvInput {
        path: data,
        sample_rate_hz: 128.0,
        block_length: None,
        boundary_column: Some("block".into()),
        p: (!regions).then_some(4),
        q: (!regions).then_some(4),
        label_column: None,
        metadata: Some(meta_path),
        strict: true,
    }
}

#[test]
fn csv_input_with_regions_runs_each_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_csv_input(tmp.path(), true);
    let mut cfg = config(InputSource::Csv(input), &tmp.path().join("out"));
    cfg.pairs = vec![("Front".into(), "Back".into()), ("Front".into(), "Side".into())];
    let outcome = run_pipeline(&cfg).unwrap();
    assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);
    let pairs: Vec<&str> = outcome.rows.iter().map(|r| r.pair.as_str()).collect();
    assert_eq!(pairs, ["Front-Back", "Front-Side"]);
    for r in &outcome.rows {
        assert_eq!(r.n_blocks, 30);
        assert!(r.rand_index.is_some(), "labels from metadata should be scored");
        assert!(r.accuracy.is_none());
    }
    let conn: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("out/raw/Front-Side/connectivity_summary.json")).unwrap())
            .unwrap();
    assert_eq!(conn["y_channels"], serde_json::json!(["X3", "Y3", "Y4"]));
}

#[test]
fn csv_input_matches_simulation_input() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_csv_input(tmp.path(), false);
    let a = run_pipeline(&config(InputSource::Csv(input), &tmp.path().join("csv"))).unwrap();
    let b = run_pipeline(&config(InputSource::Simulation(small_sim(8)), &tmp.path().join("sim"))).unwrap();
    let read = |p: &str| fs::read_to_string(tmp.path().join(p)).unwrap();
    assert_eq!(read("csv/raw/X-Y/features.csv"), read("sim/raw/X-Y/features.csv"));
    assert_eq!(a.rows[0].fsi, b.rows[0].fsi);
}

#[test]
fn pairs_without_regions_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(InputSource::Simulation(small_sim(1)), tmp.path());
    cfg.pairs = vec![("A".into(), "B".into())];
    assert!(run_pipeline(&cfg).unwrap_err().is_config());
    let mut cfg = config(InputSource::Simulation(small_sim(1)), tmp.path());
    cfg.m_grid = vec![1.0];
    assert!(run_pipeline(&cfg).unwrap_err().is_config());
}

#[test]
fn pearson_and_kendall_paths_differ_only_in_features() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(InputSource::Simulation(small_sim(4)), &tmp.path().join("k"));
    cfg.bands = vec!["Theta".into()];
    run_pipeline(&cfg).unwrap();
    cfg.dependence = DependenceEstimator::Pearson;
    cfg.output_dir = tmp.path().join("p");
    run_pipeline(&cfg).unwrap();
    let read = |p: &str| fs::read_to_string(tmp.path().join(p)).unwrap();
    assert_eq!(read("k/truth.json"), read("p/truth.json"));
    assert_ne!(read("k/Theta/X-Y/features.csv"), read("p/Theta/X-Y/features.csv"));
}

#[test]
fn constant_blocks_are_skipped_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = gen_dataset(&small_sim(2)).unwrap();
    let data = tmp.path().join("data.csv");
    write_csv(&sim.dataset, fs::File::create(&data).unwrap(), false).unwrap();
    let text = fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    for line in lines.iter_mut().skip(1 + 384).take(384) {
        let mut fields: Vec<&str> = line.split(',').collect();
        fields[0] = "0.5";
        *line = fields.join(",");
    }
    fs::write(&data, lines.join("\n") + "\n").unwrap();
    let input = CsvInput {
        path: data,
        sample_rate_hz: 128.0,
        block_length: Some(384),
        boundary_column: None,
        p: Some(4),
        q: Some(4),
        label_column: None,
        metadata: None,
        strict: true,
    };
    let mut cfg = config(InputSource::Csv(input), &tmp.path().join("out"));
    cfg.skip_degenerate = true;
    let outcome = run_pipeline(&cfg).unwrap();
    assert_eq!(outcome.rows[0].n_blocks, 29);
    assert_eq!(outcome.rows[0].n_excluded, 1);
    let excluded = fs::read_to_string(tmp.path().join("out/raw/X-Y/excluded.json")).unwrap();
    assert!(excluded.contains("constant channel"));
    let members = fs::read_to_string(tmp.path().join("out/raw/X-Y/memberships.csv")).unwrap();
    assert_eq!(members.lines().count(), 30);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use hyperwave_core::io::{self, IoError};
use hyperwave_core::pipeline::{self, run_pipeline, ErrorKind, Mode, RunOptions};
use hyperwave_core::wavelets::ScaleSequence;

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hyperwave"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    for f in ["cells.csv", "expression_dense.csv", "expression_sparse.csv"] {
        fs::copy(toy(f), dir.join(f)).unwrap();
    }
    let path = dir.join("pipeline.toml");
    fs::write(&path, body).unwrap();
    path
}

const TOY_CONFIG: &str = "[input]\ncells = \"cells.csv\"\nexpression = \"expression_dense.csv\"\n";

#[test]
fn toy_fixture_ingests_identically_from_both_encodings() {
    let dense = io::ingest(&toy("cells.csv"), &toy("expression_dense.csv")).unwrap();
    let sparse = io::ingest(&toy("cells.csv"), &toy("expression_sparse.csv")).unwrap();
    assert_eq!(dense, sparse);
    assert_eq!((dense.n_cells(), dense.n_genes()), (3, 2));
    for vocab in [&dense.cell_types, &dense.subclasses, &dense.supertypes, &dense.condition] {
        assert!(vocab.vocabulary().len() <= 2);
    }
}

#[test]
fn unknown_cell_in_expression_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let expr = dir.path().join("e.csv");
    fs::write(&expr, "cell_id,gene,count\nc1,GFAP,1\nghost,GFAP,2\n").unwrap();
    match io::ingest(&toy("cells.csv"), &expr) {
        Err(IoError::MissingCell { id }) => assert_eq!(id, "ghost"),
        other => panic!("expected MissingCell, got {other:?}"),
    }
}

#[test]
fn toy_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let out = dir.path().join("out");
    let outcome = run_pipeline(&config, Mode::Run, &RunOptions { out: Some(out.clone()), ..Default::default() }).unwrap();
    for f in [
        pipeline::FEATURES_FILE,
        pipeline::REPRESENTATIONS_FILE,
        pipeline::REPRESENTATIONS_CSV_FILE,
        pipeline::METRICS_FILE,
        pipeline::CLUSTERS_FILE,
        pipeline::MANIFEST_FILE,
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!fs::read_dir(&out).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with(".staging")));

    let reps = io::read_matrix(&out.join(pipeline::REPRESENTATIONS_FILE)).unwrap();
    let text = fs::read_to_string(out.join(pipeline::FEATURES_FILE)).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let p = header.len() - 1;
    let j = ScaleSequence::default().j();
    assert_eq!(reps.dim(), (3, (j + 1) * p));
    assert_eq!(header[0], "anchor");
    assert_eq!(header[1], "mean:GFAP");
    assert_eq!(outcome.manifest.inputs.len(), 2);

    let clusters = fs::read_to_string(out.join(pipeline::CLUSTERS_FILE)).unwrap();
    assert_eq!(clusters.lines().count(), 4);
    assert!(clusters.starts_with("cell_id,cluster\nc1,"));
}

#[test]
fn feature_csv_header_follows_the_schema() {
    use hyperwave_core::diffusion::DiffusionOperator;
    use hyperwave_core::niche::{build_spatial_graph, hyperedge_features, khop_lift, lognormalize, NicheConfig};
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let out = dir.path().join("out");
    run_pipeline(&config, Mode::Run, &RunOptions { out: Some(out.clone()), no_cache: true, ..Default::default() }).unwrap();

    let ds = io::ingest(&toy("cells.csv"), &toy("expression_dense.csv")).unwrap();
    let cfg = NicheConfig::default();
    let g = khop_lift(&build_spatial_graph(ds.coords.view(), &cfg).unwrap().graph, cfg.hop_k).unwrap();
    let norm = lognormalize(ds.expression.view()).unwrap();
    let z = hyperedge_features(&g, norm.view(), &ds, &cfg, &DiffusionOperator::new(&g)).unwrap();
    let text = fs::read_to_string(out.join(pipeline::FEATURES_FILE)).unwrap();
    let header: Vec<String> = text.lines().next().unwrap().split(',').skip(1).map(str::to_owned).collect();
    let want: Vec<String> = z.column_schema.iter().map(|c| c.header(&ds)).collect();
    assert_eq!(header, want);
    for (line, row) in text.lines().skip(1).zip(z.values.rows()) {
        let parsed: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(parsed, row.to_vec());
    }
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let opts = RunOptions { out: Some(first.clone()), no_cache: true, ..Default::default() };
    run_pipeline(&config, Mode::Run, &opts).unwrap();
    let opts = RunOptions { out: Some(second.clone()), no_cache: true, ..Default::default() };
    run_pipeline(&first.join(pipeline::MANIFEST_FILE), Mode::Run, &opts).unwrap();
    for f in [pipeline::REPRESENTATIONS_FILE, pipeline::FEATURES_FILE, pipeline::CLUSTERS_FILE] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_rerun_rejects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let out = dir.path().join("out");
    run_pipeline(&config, Mode::Run, &RunOptions { out: Some(out.clone()), ..Default::default() }).unwrap();
    fs::write(dir.path().join("expression_dense.csv"), "cell_id,GFAP,MBP\nc1,1,1\nc2,1,2\nc3,2,1\n").unwrap();
    let err = run_pipeline(&out.join(pipeline::MANIFEST_FILE), Mode::Run, &RunOptions::default()).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Data);
}

#[test]
fn corrupt_magic_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let out = dir.path().join("out");
    run_pipeline(&config, Mode::Run, &RunOptions { out: Some(out.clone()), ..Default::default() }).unwrap();
    let path = out.join(pipeline::REPRESENTATIONS_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes[..6].copy_from_slice(b"NOPE!\0");
    fs::write(&path, bytes).unwrap();
    assert!(matches!(io::read_matrix(&path), Err(IoError::Format(_))));
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{TOY_CONFIG}[cluster]\nn_clusters = 3\n"));
    let out = dir.path().join("out");
    let err = run_pipeline(&config, Mode::Run, &RunOptions { out: Some(out.clone()), ..Default::default() }).unwrap_err();
    assert_eq!((err.stage, err.kind), ("cluster", ErrorKind::Config));
    let left: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|name| name != ".cache")
        .collect();
    assert!(left.is_empty(), "{left:?}");
}

#[test]
fn eval_only_reuses_cached_representations() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let out = dir.path().join("out");
    let cache = dir.path().join("cache");
    let opts = RunOptions { out: Some(out.clone()), cache_dir: Some(cache.clone()), ..Default::default() };
    let first = run_pipeline(&config, Mode::Run, &opts).unwrap();
    assert!(!first.manifest.cache.hit);
    let eval_out = dir.path().join("eval");
    let opts = RunOptions { out: Some(eval_out.clone()), cache_dir: Some(cache), ..Default::default() };
    let second = run_pipeline(&config, Mode::EvalOnly, &opts).unwrap();
    assert!(second.manifest.cache.hit);
    assert!(!second.manifest.stage_timings.iter().any(|t| t.stage == "wavelets"));
    assert!(eval_out.join(pipeline::METRICS_FILE).is_file());
    assert!(!eval_out.join(pipeline::REPRESENTATIONS_FILE).exists());
}

#[test]
fn seed_flag_rewrites_the_seed_registry() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let opts = RunOptions { out: Some(dir.path().join("o")), seed: Some(100), ..Default::default() };
    let outcome = run_pipeline(&config, Mode::ClusterOnly, &opts).unwrap();
    assert_eq!(outcome.manifest.seeds.eval_split_seeds, vec![100, 101, 102, 103, 104]);
    assert_eq!(outcome.manifest.seeds.cluster_seed, 100);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), TOY_CONFIG);
    let out = dir.path().join("out");

    let status = bin().args(["run", "--config"]).arg(&good).arg("--out").arg(&out).args(["--threads", "1"]).output().unwrap().status;
    assert_eq!(status.code(), Some(0));

    let check = bin().args(["ingest-check", "--config"]).arg(&good).output().unwrap();
    assert_eq!(check.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&check.stdout).unwrap();
    assert_eq!(summary["cells"], 3);
    assert_eq!(summary["genes"], 2);

    let bad_toml = dir.path().join("bad.toml");
    fs::write(&bad_toml, "[input]\ncells = \"cells.csv\"\nexpression = \"expression_dense.csv\"\n[niche]\nhop_k = 0\n").unwrap();
    let status = bin().args(["run", "--config"]).arg(&bad_toml).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(status.code(), Some(2));

    let unknown_key = dir.path().join("unknown.toml");
    fs::write(&unknown_key, format!("{TOY_CONFIG}[niche]\nhopk = 2\n")).unwrap();
    let status = bin().args(["run", "--config"]).arg(&unknown_key).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(status.code(), Some(2));

    fs::write(dir.path().join("ghost.csv"), "cell_id,gene,count\nghost,GFAP,1\n").unwrap();
    let ghost = dir.path().join("ghost.toml");
    fs::write(&ghost, "[input]\ncells = \"cells.csv\"\nexpression = \"ghost.csv\"\n").unwrap();
    let output = bin().args(["ingest-check", "--config"]).arg(&ghost).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("ghost"));

    fs::write(dir.path().join("zero.csv"), "cell_id,GFAP,MBP\nc1,0,0\nc2,1,1\nc3,2,2\n").unwrap();
    let zero = dir.path().join("zero.toml");
    fs::write(&zero, "[input]\ncells = \"cells.csv\"\nexpression = \"zero.csv\"\n").unwrap();
    let status = bin().args(["run", "--config"]).arg(&zero).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(status.code(), Some(3));

    let status = bin().args(["run", "--config"]).arg(&good).args(["--threads", "0"]).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn cache_dir_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TOY_CONFIG);
    let cache = dir.path().join("shared-cache");
    let status = bin()
        .args(["eval-only", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env(pipeline::CACHE_ENV, &cache)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
}

#[test]
fn synth_cli_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen.toml");
    fs::write(&gen, "grid_width = 10\ngrid_height = 8\nn_genes = 12\n").unwrap();
    for name in ["a", "b"] {
        let status = bin().args(["synth", "--config"]).arg(&gen).arg("--out").arg(dir.path().join(name)).args(["--seed", "5"]).output().unwrap().status;
        assert_eq!(status.code(), Some(0));
    }
    for f in ["cells.csv", "expression.csv", "ground_truth.csv", "synth.toml", "pipeline.toml"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    fs::write(&gen, "grid_width = 1\n").unwrap();
    let status = bin().args(["synth", "--config"]).arg(&gen).arg("--out").arg(dir.path().join("c")).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}

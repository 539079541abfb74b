use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use riddle_cli::RunConfig;
use tempfile::TempDir;

const PAPER: &str = include_str!("../examples/paper.toml");

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn riddle(cmd: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riddle"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The paper config with the sections after `[discretization]` replaced.
fn paper_with(tail: &str) -> String {
    let head = PAPER.split("[basin]").next().unwrap();
    format!("{head}{tail}")
}

fn data_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    r.records().map(Result::unwrap).collect()
}

#[test]
fn check_reports_paper_witnesses() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), PAPER);
    let o = riddle("check", &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.contains("m(lambda) m(|T'|)^alpha = 1.100000"),
        "{text}"
    );
    assert!(text.contains("int log lambda dmu = -0.248504"), "{text}");
    assert!(text.contains("orbit mean log lambda = 0.048790"), "{text}");
}

#[test]
fn check_fails_without_an_expanding_orbit() {
    let dir = TempDir::new().unwrap();
    let text = PAPER.replace(r#"lambda = "4/5 + cos(2*pi*x)/4""#, r#"lambda = "0.5""#);
    let o = riddle("check", &write_config(dir.path(), &text), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("H3 int log lambda dzeta > 0: FAILS"));
}

#[test]
fn nonpositive_f_is_a_hypothesis_error() {
    let dir = TempDir::new().unwrap();
    let text = PAPER.replace(r#"f = "(2 + sin(2*pi*x))/5""#, r#"f = "sin(2*pi*x)""#);
    let o = riddle("check", &write_config(dir.path(), &text), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_configs_exit_2_and_missing_files_exit_3() {
    let dir = TempDir::new().unwrap();
    let bad = PAPER.replace(r#"builtin = "doubling""#, r#"builtin = "tripling""#);
    assert_eq!(
        riddle("check", &write_config(dir.path(), &bad), dir.path())
            .status
            .code(),
        Some(2)
    );
    let o = riddle("check", &dir.path().join("absent.toml"), dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_validation() {
    assert!(RunConfig::from_toml(&format!("{PAPER}\nunknown = 1\n")).is_err());
    let unsorted = PAPER.replace(
        r#"builtin = "doubling""#,
        "partition = [0.0, 0.6, 0.5, 1.0]\nbranches = [\"x\", \"x\", \"x\"]",
    );
    assert!(RunConfig::from_toml(&unsorted).is_err());
    let short = PAPER.replace(
        r#"builtin = "doubling""#,
        "partition = [0.0, 0.5, 0.9]\nbranches = [\"2*x\", \"2*x - 1\"]",
    );
    assert!(RunConfig::from_toml(&short).is_err());
    let explicit = PAPER.replace(
        r#"builtin = "doubling""#,
        "partition = [0.0, 0.5, 1.0]\nbranches = [\"2*x\", \"2*x - 1\"]",
    );
    let cfg = RunConfig::from_toml(&explicit).unwrap();
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert!(cfg.skew_product().is_ok());
    let wavy = PAPER.replace(
        r#"builtin = "doubling""#,
        "name = \"wavy\"\npartition = [0.0, 0.5, 1.0]\n\
         branches = [\"2*x + 0.05*sin(2*pi*x)\", \"2*x - 1 + 0.05*sin(2*pi*x)\"]",
    );
    let cfg = RunConfig::from_toml(&wavy).unwrap();
    assert_eq!(cfg.base_map().unwrap().branch_count(), 2);
    assert!(cfg.skew_product().is_ok());
}

#[test]
fn per_branch_lambda_round_trips() {
    let text = PAPER.replace(
        r#"lambda = "4/5 + cos(2*pi*x)/4""#,
        r#"lambda = ["0.5", "1.5"]"#,
    );
    let cfg = RunConfig::from_toml(&text).unwrap();
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert!(cfg.skew_product().is_ok());
}

#[test]
fn graph_rows_and_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), PAPER);
    let o = riddle("graph", &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let path = dir.path().join("graph.csv");
    let first = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let hash = RunConfig::from_toml(PAPER)
        .map(|c| riddle_cli::Run::new(c, Some(dir.path().to_path_buf()), None).config_hash)
        .unwrap();
    assert_eq!(first, format!("# config_hash={hash}"));
    let rows = data_rows(&path);
    assert_eq!(rows.len(), 1026);
    assert_eq!(&rows[0][0], "0");
    assert_eq!(&rows[0][1], "DIVERGENT");
    let third = rows.last().unwrap();
    let u: f64 = third[1].parse().unwrap();
    assert!((u - 0.9005683944).abs() < 1e-6, "{u}");
}

#[test]
fn basin_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let text =
        paper_with("[basin]\nx_range = [0.0, 1.0]\nt_range = [0.0, 12.0]\nnx = 32\nnt = 24\n");
    let cfg = write_config(dir.path(), &text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(riddle("basin", &cfg, &a).status.code(), Some(0));
    assert_eq!(riddle("basin", &cfg, &b).status.code(), Some(0));
    for f in ["basin_grid.csv", "basin.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let rows = data_rows(&a.join("basin_grid.csv"));
    assert_eq!(rows.len(), 32 * 24);
    assert!(rows
        .iter()
        .all(|r| ["plus", "minus", "undecided"].contains(&&r[2])));
    // the lowest row lies below the graph everywhere
    assert!(rows[..32].iter().all(|r| &r[2] == "minus"));
    let svg = fs::read_to_string(a.join("basin.svg")).unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn missing_block_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &paper_with(""));
    assert_eq!(riddle("basin", &cfg, dir.path()).status.code(), Some(2));
}

#[test]
fn pressure_cache_is_reused() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let text = paper_with(&format!(
        "[pressure]\ns_grid = [0.0, 1.0, 2.0]\ncache_dir = {:?}\n",
        cache.display().to_string()
    ));
    let cfg = write_config(dir.path(), &text);
    assert!(stdout(&riddle("pressure", &cfg, dir.path())).contains("from cache: 0"));
    assert!(stdout(&riddle("pressure", &cfg, dir.path())).contains("from cache: 3"));
    let rows = data_rows(&dir.path().join("pressure.csv"));
    let p1: f64 = rows[1][1].parse().unwrap();
    assert!((p1 - (0.8f64).ln()).abs() < 1e-10, "{p1}");
}

#[test]
fn loynes_with_an_empty_tail_exits_4_with_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &paper_with("[loynes]\nsamples = 20000\nm_grid = [4.0, 8.0, 64.0]\n"),
    );
    let o = riddle("loynes", &cfg, dir.path());
    assert_eq!(o.status.code(), Some(4));
    let rows = data_rows(&dir.path().join("loynes_tail.csv"));
    assert_eq!(rows.len(), 3);
    let summary = data_rows(&dir.path().join("loynes_summary.csv"));
    let s: f64 = summary[0][0].parse().unwrap();
    assert!((s - 14.2067).abs() < 1e-3);
}

#[test]
fn stability_below_the_graph() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &paper_with(
            "[stability]\nsamples_per_scale = 2000\nr_schedule = [1e-2, 1e-3, 1e-4, 1e-5]\n\
             [[stability.points]]\nx = \"typical\"\noffset = -0.3\n",
        ),
    );
    let o = riddle("stability", &cfg, dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let summary = data_rows(&dir.path().join("stability_summary.csv"));
    assert_eq!(&summary[0][4], "below");
    assert_eq!(&summary[0][8], "inf");
    let scales = data_rows(&dir.path().join("stability_scales.csv"));
    assert_eq!(scales.len(), 4);
    assert!(scales.iter().all(|r| r[4] == r[7]));
}

#[test]
fn stability_inconclusive_exits_4_with_partial_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &paper_with(
            "[stability]\nsamples_per_scale = 500\nmax_iter = 1\n\
             [[stability.points]]\nx = 0.3\noffset = 0.0\n",
        ),
    );
    let o = riddle("stability", &cfg, dir.path());
    assert_eq!(o.status.code(), Some(4));
    let summary = data_rows(&dir.path().join("stability_summary.csv"));
    assert_eq!(&summary[0][11], "inconclusive");
    assert!(!data_rows(&dir.path().join("stability_scales.csv")).is_empty());
}

#[test]
fn spectrum_anchor_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &paper_with("[spectrum]\nq_grid = [-1.0, 0.0, 0.1, 0.2, 1.0]\n"),
    );
    let o = riddle("spectrum", &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let rows = data_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(rows.len(), 5);
    for r in &rows {
        let q: f64 = r[0].parse().unwrap();
        if q == 0.0 || q == 1.0 {
            let s: f64 = r[1].parse().unwrap();
            assert!((s - 1.0).abs() < 1e-8, "S({q}) = {s}");
        }
    }
    assert_eq!(&rows[4][5], "false");
    assert_eq!(&rows[1][5], "true");
    assert!(fs::read_to_string(dir.path().join("spectrum.svg"))
        .unwrap()
        .contains("<polyline"));
}

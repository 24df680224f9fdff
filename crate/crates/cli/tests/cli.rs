use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pair.cfg")
}

fn coalctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coalctl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("gains.json");
    let out = coalctl(&["synth", "--config", s(&fixture()), "--gains", s(&gains), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&gains).unwrap();
    assert!(text.contains("\"format\": \"coalctl-gains/1\""));

    let run_dir = dir.path().join("run");
    let out = coalctl(&["run", "--config", s(&fixture()), "--gains", s(&gains), "--out", s(&run_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["steps.csv", "switches.csv", "summary.json", "config.resolved.toml", "states.svg", "topology.svg"] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }
    let steps = std::fs::read_to_string(run_dir.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().next().unwrap(), "k,t_seconds,topology_index,x1,x2,u1,u2,xhat1,xhat2,stage_cost");
    assert_eq!(steps.lines().count(), 1 + 41);
    let echo = std::fs::read_to_string(run_dir.join("config.resolved.toml")).unwrap();
    assert!(echo.contains("shape = \"identity\""));

    // redraw from the csv alone
    std::fs::remove_file(run_dir.join("topology.svg")).unwrap();
    let out = coalctl(&["plot", "--config", s(&fixture()), "--out", s(&run_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir.join("topology.svg").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("gains.json");
    let mut csvs = Vec::new();
    for i in 0..2 {
        let o = dir.path().join(format!("r{i}"));
        let out = coalctl(&[
            "run", "--config", s(&fixture()), "--gains", s(&gains), "--out", s(&o), "--no-plots",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push((
            std::fs::read(o.join("steps.csv")).unwrap(),
            std::fs::read(o.join("switches.csv")).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn forced_topology_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("gains.json");
    let o = dir.path().join("forced");
    let out = coalctl(&[
        "run", "--config", s(&fixture()), "--gains", s(&gains), "--out", s(&o), "--topology", "0", "--no-plots",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let steps = std::fs::read_to_string(o.join("steps.csv")).unwrap();
    assert!(steps.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")));
    let switches = std::fs::read_to_string(o.join("switches.csv")).unwrap();
    assert_eq!(switches.lines().count(), 1);

    let c = dir.path().join("cmp");
    let out = coalctl(&["compare", "--config", s(&fixture()), "--gains", s(&gains), "--out", s(&c)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(c.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(c.join("comparison.svg").exists());
    assert!(c.join("no_links/steps.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    let text = std::fs::read_to_string(fixture()).unwrap();

    std::fs::write(&bad, text.replace("switch_interval = 0.5", "switch_interval = 0.05")).unwrap();
    let out = coalctl(&["synth", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("timing.switch_interval"));

    std::fs::write(&bad, text.replace("[cost]", "[cost]\nunknown = 3")).unwrap();
    assert_eq!(coalctl(&["synth", "--config", s(&bad), "--out", s(dir.path())]).status.code(), Some(2));

    // second agent cannot be actuated and its mode is unstable
    std::fs::write(
        &bad,
        text.replace("b = [[1.0, 0.0], [0.0, 1.0]]", "b = [[1.0, 0.0], [0.0, 0.0]]")
            .replace("[0.05, 0.97]", "[0.0, 1.2]"),
    )
    .unwrap();
    assert_eq!(coalctl(&["synth", "--config", s(&bad), "--out", s(dir.path())]).status.code(), Some(3));

    let out = coalctl(&["run", "--config", s(&dir.path().join("missing.cfg"))]);
    assert_eq!(out.status.code(), Some(1));
}

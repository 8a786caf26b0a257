//! End-to-end runs of the `geodesic` binary: exit codes, golden outputs,
//! determinism and the structure of the SVG renders.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn geodesic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodesic")).args(args).env_remove("GEODESIC_SEED").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn svg_paths(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().matches("<path").count()
}

#[test]
fn rect6_script_matches_golden() {
    let want = std::fs::read_to_string(data("rect6_ops.golden")).unwrap();
    let (poly, script) = (data("rect6.txt"), data("rect6_ops.txt"));
    let o = geodesic(&["run", "--polygon", path(&poly), "--script", path(&script), "--variant", "sqrt-dynamic"]);
    assert_eq!(stdout(&o), want);
    let o = geodesic(&["oracle", "--polygon", path(&poly), "--script", path(&script)]);
    assert_eq!(stdout(&o), want);
}

#[test]
fn offline_schedule_matches_golden() {
    let want = std::fs::read_to_string(data("rect6_offline.golden")).unwrap();
    let (poly, script, sched) = (data("rect6.txt"), data("rect6_offline.txt"), data("rect6_schedule.txt"));
    let o = geodesic(&["run", "--polygon", path(&poly), "--script", path(&script), "--variant", "offline", "--schedule", path(&sched)]);
    assert_eq!(stdout(&o), want);
    let o = geodesic(&["oracle", "--polygon", path(&poly), "--script", path(&script), "--schedule", path(&sched)]);
    assert_eq!(stdout(&o), want);
}

#[test]
fn insert_only_rejects_delete() {
    let o = geodesic(&["run", "--polygon", path(&data("rect6.txt")), "--script", path(&data("rect6_ops.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delete 1"));
}

#[test]
fn usage_errors_exit_2() {
    let (poly, script) = (data("rect6.txt"), data("rect6_ops.txt"));
    let o = geodesic(&["run", "--polygon", path(&poly), "--script", path(&script), "--variant", "offline"]);
    assert_eq!(o.status.code(), Some(2));
    let o = geodesic(&["run", "--polygon", path(&poly), "--script", path(&script), "--variant", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
    let o = geodesic(&["run", "--polygon", path(&poly)]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_geodesic"))
        .args(["run", "--polygon", path(&poly), "--script", path(&script), "--variant", "sqrt-dynamic"])
        .env("GEODESIC_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let sites = data("lshape6_sites.txt");
    let o = geodesic(&["cutting", "--polygon", path(&data("lshape6.txt")), "--sites", path(&sites), "--k", "1", "--eps", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_1() {
    let o = geodesic(&["run", "--polygon", path(&data("missing.txt")), "--script", path(&data("rect6_ops.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = geodesic(&["voronoi", "--polygon", path(&data("lshape6.txt")), "--sites", path(&data("lshape6_sites.txt")), "--node", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seeded_commands_are_deterministic() {
    let (poly, sites) = (data("lshape6.txt"), data("lshape6_sites.txt"));
    let args = ["cutting", "--polygon", path(&poly), "--sites", path(&sites), "--k", "1", "--seed", "7", "--stats"];
    assert_eq!(stdout(&geodesic(&args)), stdout(&geodesic(&args)));
    let (poly, script) = (data("rect6.txt"), data("rect6_ops.txt"));
    let args = ["run", "--polygon", path(&poly), "--script", path(&script), "--variant", "sqrt-dynamic", "--seed", "7"];
    assert_eq!(geodesic(&args).stdout, geodesic(&args).stdout);
}

#[test]
fn dist_around_the_reflex_corner() {
    let o = geodesic(&["dist", "--polygon", path(&data("lshape6.txt")), "--from", "0.5,0.5", "--to", "1.5,1.5"]);
    let text = stdout(&o);
    assert!(text.starts_with("length 1.414213562373\nvertices 3\n"), "{text}");
    assert!(text.contains("\n1 1\n"));
}

#[test]
fn bisector_svg_has_one_path_per_arc() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("b.svg");
    let o = geodesic(&["bisector", "--polygon", path(&data("lshape6.txt")), "--s", "0.2,0.2", "--t", "0.2,0.8", "--emit-svg", path(&svg)]);
    let text = stdout(&o);
    assert!(text.contains("w 1.5 0.5 lambda 0.5\nz 2 0.5\n"), "{text}");
    assert!(text.contains("arcs 1\n"));
    assert_eq!(svg_paths(&svg), 1);
}

#[test]
fn voronoi_svg_has_one_path_per_edge_arc() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("v.svg");
    let o = geodesic(&["voronoi", "--polygon", path(&data("lshape6.txt")), "--sites", path(&data("lshape6_sites.txt")), "--emit-svg", path(&svg)]);
    let text = stdout(&o);
    assert!(text.contains("regions 2\norder 1 2\n"), "{text}");
    assert!(text.contains("edge 1 2 1.5 0.5 -> 2 0.5\n"));
    assert_eq!(svg_paths(&svg), 1);
}

#[test]
fn klevel_svg_has_one_path_per_trapezoid() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("k.svg");
    for k in ["1", "2", "3"] {
        let o = geodesic(&["klevel", "--polygon", path(&data("lshape6.txt")), "--sites", path(&data("lshape6_sites.txt")), "--k", k, "--emit-svg", path(&svg)]);
        let text = stdout(&o);
        let traps: usize = text.lines().find_map(|l| l.split_once("trapezoids ")).unwrap().1.parse().unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("trapezoid ")).count(), traps);
        assert_eq!(svg_paths(&svg), traps, "k={k}");
    }
}

#[test]
fn cutting_svg_has_one_path_per_prism() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("c.svg");
    let o = geodesic(&["cutting", "--polygon", path(&data("lshape6.txt")), "--sites", path(&data("lshape6_sites.txt")), "--k", "1", "--emit-svg", path(&svg)]);
    let text = stdout(&o);
    let prisms: usize = text.lines().find_map(|l| l.strip_prefix("prisms ")).unwrap().parse().unwrap();
    assert_eq!(svg_paths(&svg), prisms);
}

#[test]
fn injected_fault_is_reported_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("repro");
    let args = ["fuzz", "--polygon-size", "12", "--sites", "24", "--ops", "150", "--cases", "4", "--seed", "3", "--inject-fault", "--out", path(&out)];
    let o = geodesic(&args);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    let repro = text.lines().find_map(|l| l.split_once("): ")).map(|(_, p)| PathBuf::from(p)).expect("reproducer path printed");
    for f in ["polygon.txt", "script.txt", "repro.txt"] {
        assert!(repro.join(f).exists(), "{f}");
    }
    let o = geodesic(&["fuzz", "--replay", path(&repro)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("mismatch at query"));
}

#[test]
fn clean_fuzz_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = geodesic(&["fuzz", "--polygon-size", "10", "--sites", "16", "--ops", "100", "--cases", "3", "--out", path(dir.path())]);
    assert!(stdout(&o).ends_with("0 mismatches\n"));
    let o = geodesic(&["fuzz", "--polygon-size", "65"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_bench_grid_is_header_only() {
    let o = geodesic(&["bench", "--ns", "", "--ms", "8"]);
    assert_eq!(stdout(&o), "n,m,op,mean_us,p99_us\n");
}

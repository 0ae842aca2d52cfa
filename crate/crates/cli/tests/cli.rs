use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggplace"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_prints_placement_cost_and_edges() {
    let o = run(&[
        "solve",
        "--topology",
        &data("binary_seven.json"),
        "--k",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("blue: m2 l6"), "{text}");
    assert!(text.contains("cost: 20\n"), "{text}");
    assert!(text.contains("  r -> d msg=4 cost=4"), "{text}");
}

#[test]
fn zero_budget_is_all_red() {
    let o = run(&[
        "solve",
        "--topology",
        &data("binary_seven.json"),
        "--k",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("blue: \n"));
    assert!(text.contains("cost: 51\n"));
}

#[test]
fn baselines_by_name() {
    for (name, cost) in [("top", 27), ("max", 24), ("level", 21), ("all-red", 51)] {
        let o = run(&[
            "solve",
            "--topology",
            &data("binary_seven.json"),
            "--k",
            "2",
            "--strategy",
            name,
        ]);
        assert!(stdout(&o).contains(&format!("cost: {cost}\n")), "{name}");
    }
}

#[test]
fn malformed_topology_names_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"root": "r", "nodes": [{"id": "r", "rate": 1}, {"id": "x", "parent": "q", "rate": 1}]}"#)
        .unwrap();
    let o = run(&["solve", "--topology", path.to_str().unwrap(), "--k", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`x`"));

    std::fs::write(
        &path,
        r#"{"root": "r", "nodes": [{"id": "r", "rate": -1}]}"#,
    )
    .unwrap();
    assert_eq!(
        run(&["solve", "--topology", path.to_str().unwrap(), "--k", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["solve", "--topology", "/nonexistent.json", "--k", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bad_arguments_are_config_errors() {
    assert_eq!(
        run(&[
            "solve",
            "--topology",
            &data("binary_seven.json"),
            "--k",
            "-1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["solve", "--topology", "btnet:100", "--k", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "solve",
            "--topology",
            "btnet:8",
            "--k",
            "1",
            "--strategy",
            "random"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn runtime_failures_exit_three() {
    let o = run(&[
        "solve",
        "--topology",
        &data("small_tree.json"),
        "--k",
        "1",
        "--strategy",
        "level",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_all_blue_on_small_tree() {
    let o = run(&[
        "simulate",
        "--topology",
        &data("small_tree.json"),
        "--placement",
        "r,A,B,C,D",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("cost: 5\n"));
    let o = run(&["simulate", "--topology", &data("small_tree.json")]);
    assert!(stdout(&o).contains("cost: 14\n"));
    let o = run(&[
        "simulate",
        "--topology",
        &data("small_tree.json"),
        "--placement",
        "Z",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_with_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "a b a c d a b\nc c a").unwrap();
    let out = dir.path().join("edges.csv");
    let o = run(&[
        "simulate",
        "--topology",
        &data("binary_seven.json"),
        "--placement",
        "r",
        "--use-case",
        "wordcount",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    // four distinct words merged at the root
    assert!(
        stdout(&o).contains("  r -> d msg=1 cost=1 bytes=32"),
        "{}",
        stdout(&o)
    );
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("child_id,parent_id,msg,cost,bytes\n"));
}

#[test]
fn experiment_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.csv");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"topology": "complete_binary", "n": 32, "load_dist": "uniform", "rate_scheme": "constant",
            "k": [{"fixed": 2}, "log_n"], "strategies": ["soar", "top", "allred"], "seed": 5, "trials": 2}"#,
    )
    .unwrap();
    let o = run(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rows = std::fs::read_to_string(&out).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 3);
    let summary = std::fs::read_to_string(dir.path().join("runs.summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("allred,2,2,1.0,0.0")));

    // deterministic apart from the runtime column
    let again = dir.path().join("again.csv");
    run(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    let strip = |s: String| -> Vec<String> {
        s.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(12);
                f.join(",")
            })
            .collect()
    };
    assert_eq!(strip(rows), strip(std::fs::read_to_string(again).unwrap()));
}

#[test]
fn experiment_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"topology": "complete_binary", "n": 30}"#).unwrap();
    assert_eq!(
        run(&["experiment", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn generate_round_trips_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let o = run(&[
        "generate",
        "--topology",
        "btnet:16",
        "--rates",
        "linear",
        "--loads",
        "powerlaw",
        "--seed",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let direct = run(&[
        "solve",
        "--topology",
        "btnet:16",
        "--rates",
        "linear",
        "--loads",
        "powerlaw",
        "--seed",
        "4",
        "--k",
        "3",
    ]);
    let from_file = run(&["solve", "--topology", path.to_str().unwrap(), "--k", "3"]);
    assert_eq!(stdout(&direct), stdout(&from_file));
}

#[test]
fn scaling_and_bench_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scaling.csv");
    let o = run(&[
        "scaling",
        "--sizes",
        "64,128",
        "--trials",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(&out).unwrap().lines().count(),
        1 + 2 * 2 * 3
    );
    assert!(dir.path().join("scaling.blue.csv").exists());
    assert_eq!(
        run(&["scaling", "--sizes", "16384", "--trials", "1"])
            .status
            .code(),
        Some(2)
    );

    let o = run(&["bench", "--sizes", "64", "--k", "2,4", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("n,k,reps,gather_ms,color_ms\n"));
}

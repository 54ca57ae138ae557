use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lplab::io::{from_json, read_csv, read_measure_csv, Artifact, FrontierCsvRow, LewisRecord, TailRow};

fn lplab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lplab"))
        .current_dir(dir)
        .env_remove("LPLAB_WORKERS")
        .args(args)
        .output()
        .expect("spawn lplab")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MATRIX: &str = "# five rows\n1,2,0\n0,1,1\n1,0,1\n2,1,1\n0,0,3\n";

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lplab(dir.path(), &["volume", "--q", "3", "--bogus"])), 64);
    assert_eq!(code(&lplab(dir.path(), &["volume", "--q", "3"])), 64, "missing --n");
    assert_eq!(code(&lplab(dir.path(), &["moments", "--n", "4"])), 64, "missing --q");
    fs::write(dir.path().join("c.txt"), "command=volume\nq=3\nn=2\ncolour=red\n").unwrap();
    let o = lplab(dir.path(), &["--config", "c.txt"]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn runtime_errors_exit_1_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = lplab(dir.path(), &["lewis", "--input", "missing.csv", "--p", "3"]);
    assert_eq!(code(&o), 1);
    fs::write(dir.path().join("bad.csv"), "1,2\n3,x\n").unwrap();
    let o = lplab(dir.path(), &["lewis", "--input", "bad.csv", "--p", "3"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn lewis_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("A.csv"), MATRIX).unwrap();
    let o = lplab(
        dir.path(),
        &[
            "lewis",
            "--input",
            "A.csv",
            "--p",
            "3",
            "--out",
            "pos.json",
            "--measure-out",
            "mu.csv",
            "--assert",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("reproduce: lplab lewis"));
    let text = fs::read_to_string(dir.path().join("pos.json")).unwrap();
    let rec: LewisRecord = from_json(&text).unwrap();
    assert!((rec.weights.iter().sum::<f64>() - 3.0).abs() <= 1e-6);
    let from_json_measure = rec.measure().unwrap();
    let from_csv = read_measure_csv(fs::File::open(dir.path().join("mu.csv")).unwrap(), true).unwrap();
    assert_eq!(from_json_measure.dim(), from_csv.dim());
    assert!(from_csv.isotropy_residual() <= 1e-8);
    // Floats survive the text round trip bit for bit.
    let again = lplab::io::to_json(&rec).unwrap();
    assert_eq!(from_json::<LewisRecord>(&again).unwrap(), rec);
}

#[test]
fn measure_file_feeds_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("A.csv"), MATRIX).unwrap();
    let o = lplab(
        dir.path(),
        &[
            "lewis",
            "--input",
            "A.csv",
            "--p",
            "4",
            "--measure-out",
            "mu.csv",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = lplab(
        dir.path(),
        &[
            "moments",
            "--measure",
            "file",
            "--input",
            "mu.csv",
            "--q",
            "2,4",
            "--samples",
            "20000",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let art: Artifact = from_json(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(art.records.iter().filter(|r| r.op == "moment").count(), 2);
    let o = lplab(
        dir.path(),
        &[
            "moments",
            "--measure",
            "lewis",
            "--input",
            "A.csv",
            "--lewis-p",
            "4",
            "--q",
            "4",
            "--samples",
            "20000",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn failed_checks_exit_2_only_under_assert() {
    let dir = tempfile::tempdir().unwrap();
    // Far too little mass: the unit ball is much larger than the l_3 ball.
    fs::write(
        dir.path().join("light.csv"),
        "theta_1,theta_2,mass\n1,0,0.05\n-1,0,0.05\n0,1,0.05\n0,-1,0.05\n",
    )
    .unwrap();
    let base = [
        "volume",
        "--measure",
        "file",
        "--input",
        "light.csv",
        "--no-isotropy-check",
        "--q",
        "3",
        "--samples",
        "20000",
    ];
    let o = lplab(dir.path(), &base);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("check failed"));
    let mut strict = base.to_vec();
    strict.push("--assert");
    assert_eq!(code(&lplab(dir.path(), &strict)), 2);
    let checked = ["volume", "--measure", "file", "--input", "light.csv", "--q", "3"];
    assert_eq!(code(&lplab(dir.path(), &checked)), 1, "isotropy check rejects the file");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "concentrate",
        "--n",
        "64",
        "--p",
        "3",
        "--samples",
        "5000",
        "--eps",
        "0.05,0.1,0.2,0.4",
        "--seed",
        "42",
        "--out",
        "t.csv",
    ];
    assert_eq!(code(&lplab(dir.path(), &args)), 0);
    let first = (
        fs::read(dir.path().join("t.csv")).unwrap(),
        fs::read(dir.path().join("t.json")).unwrap(),
    );
    assert_eq!(code(&lplab(dir.path(), &args)), 0);
    let second = (
        fs::read(dir.path().join("t.csv")).unwrap(),
        fs::read(dir.path().join("t.json")).unwrap(),
    );
    assert_eq!(first, second);
    let rows: Vec<TailRow> = read_csv(&String::from_utf8(first.0).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.seed == 42 && r.n == 64));
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let flags = [
        "volume",
        "--n",
        "2",
        "--q",
        "3",
        "--samples",
        "20000",
        "--seed",
        "5",
        "--out",
        "v.json",
    ];
    assert_eq!(code(&lplab(dir.path(), &flags)), 0);
    let from_flags = fs::read(dir.path().join("v.json")).unwrap();
    fs::write(
        dir.path().join("c.txt"),
        "# volume run\ncommand = volume\nn = 2\nq = 3\nsamples = 20000\nseed = 99\nout = v.json\n",
    )
    .unwrap();
    let o = lplab(dir.path(), &["--config", "c.txt", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("v.json")).unwrap(), from_flags);
}

#[test]
fn embed_sweep_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = lplab(
        dir.path(),
        &[
            "embed", "--n", "64", "--p", "4", "--k", "2", "--eps", "0.5", "--fresh", "2000", "--out", "e.json",
            "--assert",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let art: Artifact = from_json(&fs::read_to_string(dir.path().join("e.json")).unwrap()).unwrap();
    assert!(art.records.iter().any(|r| r.op == "verdict"));
    assert!(art.details.get("certificate").is_some());

    let o = lplab(
        dir.path(),
        &[
            "sweep", "--n", "64", "--p", "4", "--eps", "0.3,0.6", "--trials", "4", "--seed", "7", "--out", "f.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert!(text.starts_with("# lplab"));
    let rows: Vec<FrontierCsvRow> = read_csv(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].k_max <= rows[1].k_max);

    let o = lplab(dir.path(), &["plot", "--input", "f.csv"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("# x: log(eps)"));
    fs::write(dir.path().join("junk.csv"), "a,b\n1,2\n").unwrap();
    let o = lplab(dir.path(), &["plot", "--input", "junk.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let run = |w: &str| {
        let o = lplab(
            dir.path(),
            &["--workers", w, "moments", "--n", "16", "--q", "3", "--samples", "10000"],
        );
        assert_eq!(code(&o), 0);
        let art: Artifact = from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
        art.records
    };
    assert_eq!(run("1"), run("3"));
}

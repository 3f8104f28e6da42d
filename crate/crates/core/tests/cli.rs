use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msvgd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msvgd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, method: &str) {
    fs::write(
        dir.join(name),
        format!(
            r#"{{"target": "star", "method": "{method}", "n": 10, "iters": 5, "seed": 2,
                "checkpoints": [0, 5], "evaluation": {{"reference_size": 100}}}}"#
        ),
    )
    .unwrap();
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", "vanilla_svgd");
    let out = msvgd(dir.path(), &["run", "c.json", "--out", "o"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mmd_sq"), "{stdout}");
    for f in [
        "particles_iter_00000.csv",
        "particles_iter_00005.csv",
        "metrics.json",
        "timing.csv",
    ] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
}

#[test]
fn quiet_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", "svn");
    let a = msvgd(dir.path(), &["--quiet", "run", "c.json", "--out", "a"]);
    assert!(a.status.success());
    assert!(a.stdout.is_empty());
    let b = msvgd(
        dir.path(),
        &["run", "c.json", "--out", "b", "--seed", "3", "--quiet"],
    );
    assert!(b.status.success());
    let read = |d: &str| fs::read(dir.path().join(d).join("particles_iter_00005.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
    let metrics = fs::read_to_string(dir.path().join("b/metrics.json")).unwrap();
    assert!(metrics.contains("\"seed\": 3"));
}

#[test]
fn errors_are_categorized() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"target": "star", "method": "pSGLD", "n": 1, "iters": 1, "seed": 1}"#,
    )
    .unwrap();
    let out = msvgd(dir.path(), &["run", "bad.json"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error[validation]:"), "{stderr}");
    assert_eq!(stderr.lines().count(), 1);

    let out = msvgd(dir.path(), &["run", "missing.json"]);
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error[io]:"));
    assert!(!out.status.success());

    let out = msvgd(dir.path(), &["sample", "logistic", "5", "1"]);
    assert!(!out.status.success());
}

#[test]
fn sample_prints_particle_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = msvgd(dir.path(), &["sample", "double_banana", "20", "7"]);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(text.starts_with("iter,particle,coord_0,coord_1\n"));
    assert_eq!(text.lines().count(), 21);
    assert_eq!(
        msvgd(dir.path(), &["sample", "double_banana", "20", "7"]).stdout,
        a.stdout
    );

    let b = msvgd(
        dir.path(),
        &["sample", "star", "4", "1", "--out", "s", "--quiet"],
    );
    assert!(b.status.success());
    assert!(dir.path().join("s/sample_star_n4_seed1.csv").exists());
}

#[test]
fn compare_tabulates_methods() {
    let dir = tempfile::tempdir().unwrap();
    let methods = [
        "vanilla_svgd",
        "matrix_svgd_average",
        "matrix_svgd_mixture",
        "svn",
    ];
    for m in methods {
        write_config(dir.path(), &format!("{m}.json"), m);
    }
    let mut args = vec!["compare".to_string()];
    args.extend(methods.iter().map(|m| format!("{m}.json")));
    args.extend(["--out".into(), "cmp".into(), "--quiet".into()]);
    let out = msvgd(
        dir.path(),
        &args.iter().map(String::as_str).collect::<Vec<_>>(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.path().join("cmp/comparison.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], format!("iteration,{}", methods.join(",")));
    assert_eq!(lines.len(), 3);
    for m in methods {
        assert!(dir.path().join("cmp").join(m).join("metrics.json").exists());
    }

    fs::write(
        dir.path().join("other.json"),
        r#"{"target": "sine", "method": "svn", "n": 10, "iters": 5, "seed": 2, "checkpoints": [0, 5]}"#,
    )
    .unwrap();
    let out = msvgd(
        dir.path(),
        &["compare", "svn.json", "other.json", "--out", "x"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error[validation]"));
}

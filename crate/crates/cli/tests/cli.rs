use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn drot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drot"))
        .args(args)
        .current_dir(dir)
        .env("DROT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn problem(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const TRIVIAL: &str = r#"{"a": [1.0], "b": [1.0], "cost": {"dense": [[0.0]]}}"#;

fn random_problem(dir: &Path) -> String {
    let p = drot::random::seeded_simplex_instance(9, 0, 10, 10).unwrap();
    problem(dir, "random.json", &drot::io::problem_to_json(&p))
}

#[test]
fn solve_trivial_instance() {
    let dir = TempDir::new().unwrap();
    let p = problem(dir.path(), "p.json", TRIVIAL);
    let out = drot(&["solve", "--problem", &p, "--gamma", "1", "--out", "plan.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("plan.csv")).unwrap(), "i,j,value\n0,0,1\n");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("plan.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["nnz"], 1);
    assert!(dir.path().join("plan.potentials.json").exists());
}

#[test]
fn malformed_json_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let p = problem(dir.path(), "bad.json", r#"{"a": [1.0], "b": [1.0,"#);
    let out = drot(&["solve", "--problem", &p, "--gamma", "1"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("parse error at byte"), "{}", stderr(&out));
}

#[test]
fn absurd_exponential_gamma_fails_projection() {
    let dir = TempDir::new().unwrap();
    let p = problem(dir.path(), "p.json", r#"{"a": [1.0], "b": [1.0], "cost": {"dense": [[800.0]]}}"#);
    let out = drot(
        &[
            "solve", "--problem", &p, "--phi", "exponential", "--varphi", "exponential", "--gamma", "1e200", "--tol",
            "1e-300",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("projection of constraint (0, 0) failed"), "{}", stderr(&out));
}

#[test]
fn non_convergence_exits_two_with_files() {
    let dir = TempDir::new().unwrap();
    let p = random_problem(dir.path());
    let out = drot(&["solve", "--problem", &p, "--gamma", "100", "--max-sweeps", "1"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(dir.path().join("plan.csv").exists());
}

#[test]
fn verify_round_trip_and_corruption() {
    let dir = TempDir::new().unwrap();
    let p = random_problem(dir.path());
    let out = drot(&["solve", "--problem", &p, "--gamma", "100", "--tol", "1e-10"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let verify = |plan: &str, exact: bool| {
        let mut args = vec!["verify", "--problem", &p, "--plan", plan, "--potentials", "plan.potentials.json"];
        if exact {
            args.push("--exact");
        }
        drot(&args, dir.path())
    };
    let out = verify("plan.csv", false);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = verify("plan.csv", true);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["prop2"]["objective_lower"]["margin"].is_number());
    assert_eq!(report["prop2"]["passed"], true);

    let csv = fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_owned).collect();
    let fields: Vec<&str> = lines[1].split(',').collect();
    let doubled: f64 = fields[2].parse::<f64>().unwrap() * 2.0;
    lines[1] = format!("{},{},{}", fields[0], fields[1], doubled);
    fs::write(dir.path().join("bad.csv"), lines.join("\n") + "\n").unwrap();
    let out = verify("bad.csv", false);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("kkt_stationarity_f"), "{}", stderr(&out));
}

fn gradient_image(path: &Path, w: u32, h: u32, tint: [u8; 3]) {
    let img = image::RgbImage::from_fn(w, h, |x, y| {
        image::Rgb([
            ((x * 255) / w) as u8 / 2 + tint[0] / 2,
            ((y * 255) / h) as u8 / 2 + tint[1] / 2,
            (((x + y) * 127) / (w + h)) as u8 + tint[2] / 2,
        ])
    });
    img.save(path).unwrap();
}

#[test]
fn color_transfer_self_and_missing_file() {
    let dir = TempDir::new().unwrap();
    gradient_image(&dir.path().join("a.png"), 24, 16, [40, 200, 90]);
    let out = drot(
        &[
            "color-transfer", "--source", "a.png", "--target", "a.png", "--k", "8", "--gamma", "1e4", "--out", "o.png",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("o.png").exists());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["k"], 8);

    let out = drot(
        &["color-transfer", "--source", "missing.png", "--target", "a.png", "--gamma", "1", "--out", "x.png"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn experiments_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = [
        "experiment", "sparsity", "--seed", "3", "--instances", "2", "--n", "12", "--gammas", "1,100", "--regs",
        "quadratic,exponential",
    ];
    let first = drot(&args, dir.path());
    let second = drot(&args, dir.path());
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.starts_with("regularizer,gamma,instance,nnz,exact_nnz,converged\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);

    let out = drot(
        &["experiment", "mass", "--instances", "1", "--n", "8", "--regs", "exponential", "--out", "m.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let meta = fs::read_to_string(dir.path().join("m.meta.json")).unwrap();
    assert!(meta.contains("ChaCha8Rng"));
}

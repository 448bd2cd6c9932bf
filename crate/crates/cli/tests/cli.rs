use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use eaclab_cli::{run_args, RunReport};
use tempfile::TempDir;

const PRODUCT: &str = "eac v1 inputs 2
g0 = input 0
g1 = input 1
g2 = mul g0 g1
outputs g2
";

const LN_EXP_PRODUCT: &str = "eac v1 inputs 2
g0 = input 0
g1 = input 1
g2 = mul g0 g1
g3 = exp g2
g4 = ln g3
outputs g4
";

const BENIGN: &str = "eac v1 inputs 3
g0 = input 0
g1 = input 1
g2 = input 2
g3 = mul g0 g1
g4 = exp g3
g5 = add g4 g2
g6 = ln g5
g7 = div g6 g0
g8 = sub g7 g2
outputs g8
";

fn file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> RunReport {
    run_args(args.iter().copied()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn grad_of_product() {
    let dir = TempDir::new().unwrap();
    let c = file(&dir, "prod.eac", PRODUCT);
    let out = dir.path().join("grad.eac");
    let r = run(&["grad", s(&c), "-o", s(&out), "--at", "3,-5/2", "--mode", "rational"]);
    assert!(r.passed());
    assert_eq!(r.get("value"), Some("-7.5"));
    assert_eq!(r.get("grad.0"), Some("-2.5"));
    assert_eq!(r.get("grad.1"), Some("3"));
    let e = run(&["eval", s(&out), "--at", "2,7", "--mode", "rational"]);
    assert_eq!([e.get("output.0"), e.get("output.1"), e.get("output.2")], [Some("14"), Some("7"), Some("2")]);
}

#[test]
fn elim2_removes_transcendentals() {
    let dir = TempDir::new().unwrap();
    let c = file(&dir, "le.eac", LN_EXP_PRODUCT);
    let out = dir.path().join("q.eac");
    let r = run(&["elim2", s(&c), "--check", "-o", s(&out)]);
    assert!(r.passed(), "{}", r.render());
    assert_eq!(r.get("exp_ln_gates"), Some("0"));
    assert_eq!(r.check_result("quadratic"), Some(true));
    let e = run(&["eval", s(&out), "--at", "3/2,-4", "--mode", "rational"]);
    assert_eq!(e.get("output.0"), Some("-6"));
}

#[test]
fn eval_modes_agree() {
    let dir = TempDir::new().unwrap();
    let c = file(&dir, "f.eac", BENIGN);
    let at = "3/4,-2/5,5/2";
    let a = run(&["eval", s(&c), "--at", at, "--mode", "f64"]);
    let b = run(&["eval", s(&c), "--at", at, "--mode", "bigfloat:256"]);
    let x: f64 = a.get("output.0").unwrap().parse().unwrap();
    let y: f64 = b.get("output.0").unwrap().parse().unwrap();
    assert!((x - y).abs() <= 1e-12 * y.abs());
    assert!(run_args(["eval", s(&c), "--at", at, "--mode", "rational"]).is_err());
}

#[test]
fn ov3_verify_agrees() {
    let r = run(&["ov3", "verify", "--N", "16", "--d", "8", "--LH", "4", "--trials", "50", "--seed", "7"]);
    assert!(r.passed(), "{}", r.render());
    assert_eq!(r.get("agree.hardmax"), Some("50/50"));
    assert_eq!(r.get("agree.softmax"), Some("50/50"));
    assert_eq!(r.check_result("certificate_identity"), Some(true));
}

#[test]
fn ov3_full_density_is_no() {
    let dir = TempDir::new().unwrap();
    for d in [1, 5] {
        let out = dir.path().join(format!("full{d}.kov"));
        let d = d.to_string();
        let r = run(&["ov3", "gen", "--density", "1.0", "--d", &d, "-o", s(&out), "--seed", "3"]);
        assert_eq!(r.get("answer"), Some("no"));
        assert_eq!(run(&["ov3", "solve", s(&out)]).get("answer"), Some("no"));
        assert_eq!(run(&["ov3", "reduce", s(&out)]).get("answer"), Some("no"));
    }
}

#[test]
fn ov3_reduce_forced_instance() {
    let dir = TempDir::new().unwrap();
    let inst = file(&dir, "e.kov", "kov 3 2\nset 1\n10\nset 1\n01\nset 1\n10\n");
    let r = run(&["ov3", "reduce", "--path", "hardmax", s(&inst)]);
    assert_eq!(r.get("answer"), Some("yes"));
    assert_eq!(r.get("certificate"), Some("1.5"));
    let r = run(&["ov3", "reduce", "--path", "softmax", s(&inst)]);
    assert_eq!(r.get("answer"), Some("yes"));
}

#[test]
fn ov3_reduce_layers() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("i.kov");
    run(&["ov3", "gen", "--N", "6", "--LH", "4", "--seed", "11", "-o", s(&out)]);
    let truth = run(&["ov3", "solve", s(&out)]).get("answer").unwrap().to_string();
    for layers in ["1", "2", "4"] {
        let r = run(&["ov3", "reduce", "--layers", layers, s(&out)]);
        assert_eq!(r.get("answer"), Some(truth.as_str()));
    }
    assert!(run_args(["ov3", "reduce", "--layers", "3", s(&out)]).is_err());
}

#[test]
fn matmul_verify_random() {
    let r = run(&["matmul", "verify", "--LH", "4", "--N", "8", "--seed", "1"]);
    assert!(r.passed(), "{}", r.render());
    let err: f64 = r.get("max_error").unwrap().parse().unwrap();
    assert!(err <= 1e-8);
    let ratio: f64 = r.get("size_ratio").unwrap().parse().unwrap();
    assert!(ratio <= 6.0);
}

#[test]
fn matmul_verify_zeros() {
    let r = run(&["matmul", "verify", "--LH", "1", "--N", "1", "--zeros"]);
    assert!(r.passed(), "{}", r.render());
    let err: f64 = r.get("max_error").unwrap().parse().unwrap();
    assert!(err < 1e-60);
}

#[test]
fn matmul_gen_then_extract() {
    let dir = TempDir::new().unwrap();
    let b = dir.path().join("b.mm");
    let p = dir.path().join("p.txt");
    run(&["matmul", "gen", "--LH", "2", "--N", "3", "--seed", "4", "-o", s(&b)]);
    let r = run(&["matmul", "extract", s(&b), "-o", s(&p)]);
    assert!(r.passed());
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("products 2 3\n"));
    let f = run(&["matmul", "extract", s(&b), "--mode", "f64"]);
    let err: f64 = f.get("max_error").unwrap().parse().unwrap();
    assert!(err < 1e-9);
    assert!(run_args(["matmul", "extract", s(&b), "--mode", "rational"]).is_err());
}

fn strip_wall(r: &RunReport) -> String {
    r.render().lines().filter(|l| !l.contains("wall_ms")).collect::<Vec<_>>().join("\n")
}

#[test]
fn seeds_reproduce_reports() {
    let args = ["ov3", "verify", "--N", "6", "--d", "5", "--LH", "2", "--trials", "8", "--seed", "99", "--density", "0.3"];
    assert_eq!(strip_wall(&run(&args)), strip_wall(&run(&args)));
    let args = ["matmul", "verify", "--LH", "2", "--N", "2", "--seed", "5"];
    assert_eq!(strip_wall(&run(&args)), strip_wall(&run(&args)));
}

#[test]
fn report_file_written() {
    let dir = TempDir::new().unwrap();
    let c = file(&dir, "p.eac", PRODUCT);
    let rep = dir.path().join("r.txt");
    let r = run(&["--report", s(&rep), "grad", s(&c)]);
    assert_eq!(fs::read_to_string(&rep).unwrap(), r.render());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eaclab"))
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = bin().args(["matmul", "verify", "--N", "1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("status = pass"));
    let fail = bin().args(["matmul", "verify", "--N", "1", "--tol=-1"]).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("check.max_error = fail"));
    let bad = file(&dir, "bad.eac", "eac v1 inputs 1\ng0 = input 0\ng1 = frob g0\noutputs g1\n");
    let err = bin().args(["eval", s(&bad), "--at", "1"]).output().unwrap();
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("line 3"));
}

#[test]
fn precision_from_environment() {
    let dir = TempDir::new().unwrap();
    let c = file(&dir, "p.eac", PRODUCT);
    let out = bin()
        .env("EACLAB_PRECISION", "128")
        .args(["eval", s(&c), "--at", "1/3,3", "--mode", "bigfloat"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("param.precision = 128"), "{text}");
}

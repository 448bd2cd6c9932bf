//! Command implementations for the `eaclab` binary.
//!
//! Every command returns a [`RunReport`]: a flat list of `key = value` lines
//! with a fixed key set per command. The process exits nonzero iff some
//! `check.*` line reads `fail`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eaclab_core::autodiff::gradient_circuit;
use eaclab_core::bigfloat::{self, Big};
use eaclab_core::circuit::{evaluate, parse, serialize};
use eaclab_core::elim::{eliminate, CheckOptions, ElimOptions, ElimOutput};
use eaclab_core::literal::parse_rational;
use eaclab_core::matrix::write_matrix;
use eaclab_core::par;
use eaclab_core::reductions::{
    brute_force_kov, decide_ov3, extract_matmuls_with, Certificate, Layout, MatMulBatch, Ov3Decision, Ov3Path,
    OvInstance,
};
use eaclab_core::{Matrix, NumericMode, Prec, Scalar, ValidatedCircuit};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub seed: Option<u64>,
    pub params: Vec<(String, String)>,
    pub checks: Vec<(String, bool)>,
    pub measures: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport { command: command.into(), ..Default::default() }
    }

    pub fn param(&mut self, k: &str, v: impl ToString) -> &mut Self {
        self.params.push((k.into(), v.to_string()));
        self
    }

    pub fn check(&mut self, k: &str, ok: bool) -> &mut Self {
        self.checks.push((k.into(), ok));
        self
    }

    pub fn measure(&mut self, k: &str, v: impl ToString) -> &mut Self {
        self.measures.push((k.into(), v.to_string()));
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    /// Value of `measure.<k>`, if recorded.
    pub fn get(&self, k: &str) -> Option<&str> {
        self.measures.iter().find(|m| m.0 == k).map(|m| m.1.as_str())
    }

    pub fn check_result(&self, k: &str) -> Option<bool> {
        self.checks.iter().find(|c| c.0 == k).map(|c| c.1)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "command = {}", self.command).unwrap();
        if let Some(seed) = self.seed {
            writeln!(s, "seed = {seed}").unwrap();
        }
        for (k, v) in &self.params {
            writeln!(s, "param.{k} = {v}").unwrap();
        }
        for (k, v) in &self.measures {
            writeln!(s, "measure.{k} = {v}").unwrap();
        }
        for (k, ok) in &self.checks {
            writeln!(s, "check.{k} = {}", if *ok { "pass" } else { "fail" }).unwrap();
        }
        writeln!(s, "status = {}", if self.passed() { "pass" } else { "fail" }).unwrap();
        s
    }
}

#[derive(Debug, Parser)]
#[command(name = "eaclab", version, about = "Extended arithmetic circuits and transformer reductions")]
pub struct Cli {
    /// Also write the report to this file.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Worker threads for independent trials (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a circuit at a point.
    Eval(EvalArgs),
    /// Emit the gradient circuit.
    Grad(GradArgs),
    /// Remove exp, ln and division from a circuit computing quadratics.
    Elim2(Elim2Args),
    /// 3-OV instances and their transformer reduction.
    #[command(subcommand)]
    Ov3(Ov3Command),
    /// Matrix products from transformer gradients.
    #[command(subcommand)]
    Matmul(MatmulCommand),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub circuit: PathBuf,
    /// Comma-separated input literals (`3`, `-1/2`, `0.25`).
    #[arg(long, default_value = "")]
    pub at: String,
    /// `f64`, `bigfloat[:bits]` or `rational`.
    #[arg(long, default_value = "f64")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    pub circuit: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Evaluate the gradient circuit here.
    #[arg(long)]
    pub at: Option<String>,
    #[arg(long, default_value = "f64")]
    pub mode: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ElimPart {
    Quadratic,
    Linear,
    Constant,
    Full,
}

impl From<ElimPart> for ElimOutput {
    fn from(p: ElimPart) -> Self {
        match p {
            ElimPart::Quadratic => ElimOutput::Quadratic,
            ElimPart::Linear => ElimOutput::Linear,
            ElimPart::Constant => ElimOutput::Constant,
            ElimPart::Full => ElimOutput::Full,
        }
    }
}

#[derive(Debug, Args)]
pub struct Elim2Args {
    pub circuit: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "quadratic")]
    pub part: ElimPart,
    /// Compare the expansion against the source at random points.
    #[arg(long)]
    pub check: bool,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Ov3Command {
    Gen(Ov3GenArgs),
    Solve(InstanceArgs),
    Reduce(Ov3ReduceArgs),
    Verify(Ov3VerifyArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Ov3Shape {
    #[arg(long = "N", default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 6)]
    pub d: usize,
    #[arg(long = "LH", default_value_t = 2)]
    pub lh: usize,
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct Ov3GenArgs {
    #[command(flatten)]
    pub shape: Ov3Shape,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    pub instance: PathBuf,
}

#[derive(Debug, Args)]
pub struct Ov3ReduceArgs {
    pub instance: PathBuf,
    #[arg(long, default_value = "hardmax")]
    pub path: Ov3Path,
    /// Split the `LH` heads over this many layers.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
}

#[derive(Debug, Args)]
pub struct Ov3VerifyArgs {
    #[command(flatten)]
    pub shape: Ov3Shape,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Run only this path (default: both).
    #[arg(long)]
    pub path: Option<Ov3Path>,
}

#[derive(Debug, Subcommand)]
pub enum MatmulCommand {
    Gen(MatmulGenArgs),
    Extract(MatmulExtractArgs),
    Verify(MatmulVerifyArgs),
}

#[derive(Debug, Args, Clone)]
pub struct MatmulShape {
    #[arg(long = "LH", default_value_t = 1)]
    pub lh: usize,
    #[arg(long = "N", default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// All-zero matrices instead of random ones.
    #[arg(long)]
    pub zeros: bool,
}

#[derive(Debug, Args)]
pub struct MatmulGenArgs {
    #[command(flatten)]
    pub shape: MatmulShape,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatmulExtractArgs {
    pub batch: PathBuf,
    #[arg(long, default_value = "bigfloat")]
    pub mode: String,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatmulVerifyArgs {
    #[command(flatten)]
    pub shape: MatmulShape,
    #[arg(long, default_value = "bigfloat")]
    pub mode: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

pub fn run(cli: &Cli) -> Result<RunReport> {
    let report = par::with_jobs(cli.jobs, || match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Grad(a) => cmd_grad(a),
        Command::Elim2(a) => cmd_elim2(a),
        Command::Ov3(c) => cmd_ov3(c),
        Command::Matmul(c) => cmd_matmul(c),
    })?;
    if let Some(p) = &cli.report {
        fs::write(p, report.render()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(report)
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_args<I, S>(args: I) -> Result<RunReport>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(std::iter::once("eaclab".into()).chain(args.into_iter().map(Into::into)))?;
    run(&cli)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(path: &Option<PathBuf>, text: &str, report: &mut RunReport) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        report.param("output", p.display());
    }
    Ok(())
}

fn load_circuit(path: &Path) -> Result<ValidatedCircuit> {
    let text = read(path)?;
    let c = parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    c.validate().with_context(|| format!("validating {}", path.display()))
}

fn parse_mode(s: &str) -> Result<NumericMode> {
    s.parse::<NumericMode>().map_err(anyhow::Error::msg)
}

fn parse_point(s: &str) -> Result<Vec<BigRational>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_rational(t).with_context(|| format!("input literal `{t}`")))
        .collect()
}

fn record_mode(report: &mut RunReport, mode: NumericMode) {
    report.param("mode", mode);
    if let NumericMode::BigFloat(b) = mode {
        report.param("precision", b);
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<RunReport> {
    let t = Instant::now();
    let mut r = RunReport::new("eval");
    let mode = parse_mode(&a.mode)?;
    r.param("circuit", a.circuit.display());
    record_mode(&mut r, mode);
    let c = load_circuit(&a.circuit)?;
    let x = parse_point(&a.at)?;
    let trace = evaluate(&c, &x, mode)?;
    r.measure("size", c.circuit().size());
    for (i, v) in trace.outputs.iter().enumerate() {
        r.measure(&format!("output.{i}"), v);
    }
    r.measure("wall_ms", t.elapsed().as_millis());
    Ok(r)
}

pub fn cmd_grad(a: &GradArgs) -> Result<RunReport> {
    let t = Instant::now();
    let mut r = RunReport::new("grad");
    r.param("circuit", a.circuit.display());
    let c = load_circuit(&a.circuit)?;
    let g = gradient_circuit(&c)?;
    write_out(&a.output, &serialize(&g.circuit), &mut r)?;
    r.measure("source_size", g.source_size);
    r.measure("gradient_size", g.size());
    r.measure("ratio", format!("{:.4}", g.ratio()));
    r.measure("bound", g.bound());
    r.check("size_bound", g.size() <= g.bound());
    if let Some(at) = &a.at {
        let mode = parse_mode(&a.mode)?;
        record_mode(&mut r, mode);
        let gc = g.circuit.clone().validate()?;
        let out = evaluate(&gc, &parse_point(at)?, mode)?.outputs;
        r.measure("value", &out[0]);
        for (i, v) in out[1..].iter().enumerate() {
            r.measure(&format!("grad.{i}"), v);
        }
    }
    r.measure("wall_ms", t.elapsed().as_millis());
    Ok(r)
}

pub fn cmd_elim2(a: &Elim2Args) -> Result<RunReport> {
    let t = Instant::now();
    let mut r = RunReport::new("elim2");
    r.seed = a.check.then_some(a.seed);
    r.param("circuit", a.circuit.display());
    r.param("part", format!("{:?}", a.part).to_lowercase());
    r.param("precision", bigfloat::default_precision());
    let c = load_circuit(&a.circuit)?;
    let opts = ElimOptions {
        output: a.part.into(),
        check: a.check.then_some(CheckOptions { points: a.points, seed: a.seed }),
        ..ElimOptions::default()
    };
    match eliminate(&c, &opts) {
        Ok(e) => {
            write_out(&a.output, &serialize(&e.circuit), &mut r)?;
            let k = e.circuit.counts();
            r.measure("source_size", e.source_size);
            r.measure("output_size", e.circuit.size());
            r.measure("ratio", format!("{:.4}", e.ratio()));
            r.measure("exp_ln_gates", k.exp + k.ln);
            r.measure("div_gates", k.div);
            r.measure("exact", e.exact);
            r.check("transcendental_free", k.exp + k.ln + k.div == 0);
            if a.check {
                r.measure("checked_points", e.checked_points);
                r.check("quadratic", true);
            }
        }
        Err(e @ eaclab_core::elim::ElimError::QuadraticityCheckFailed(_)) => {
            r.measure("failure", e);
            r.check("quadratic", false);
        }
        Err(e) => return Err(e.into()),
    }
    r.measure("wall_ms", t.elapsed().as_millis());
    Ok(r)
}

fn ov3_instance(s: &Ov3Shape, rng: &mut ChaCha8Rng) -> OvInstance {
    OvInstance::random(&[s.n, s.n, s.lh], s.d, s.density, rng)
}

fn shape_params(r: &mut RunReport, s: &Ov3Shape) {
    r.seed = Some(s.seed);
    r.param("N", s.n).param("d", s.d).param("LH", s.lh).param("density", s.density);
}

fn check_shape(s: &Ov3Shape) -> Result<()> {
    if s.n == 0 || s.lh == 0 {
        bail!("--N and --LH must be positive");
    }
    if !(0.0..=1.0).contains(&s.density) {
        bail!("--density must lie in [0, 1]");
    }
    Ok(())
}

fn record_decision(r: &mut RunReport, prefix: &str, d: &Ov3Decision) {
    r.measure(&format!("{prefix}answer"), if d.yes { "yes" } else { "no" });
    r.measure(&format!("{prefix}certificate"), d.certificate.render());
    r.measure(&format!("{prefix}no_value"), d.no_value);
    r.measure(&format!("{prefix}threshold"), d.threshold);
    if let Some(c) = d.scale {
        r.measure(&format!("{prefix}scale"), c);
        r.measure(&format!("{prefix}big_fallback"), d.big_fallback);
    }
}

pub fn cmd_ov3(c: &Ov3Command) -> Result<RunReport> {
    let t = Instant::now();
    let mut r = match c {
        Ov3Command::Gen(a) => {
            check_shape(&a.shape)?;
            let mut r = RunReport::new("ov3 gen");
            shape_params(&mut r, &a.shape);
            let inst = ov3_instance(&a.shape, &mut ChaCha8Rng::seed_from_u64(a.shape.seed));
            let text = inst.to_text();
            match &a.output {
                Some(_) => write_out(&a.output, &text, &mut r)?,
                None => print!("{text}"),
            }
            r.measure("answer", if brute_force_kov(&inst) { "yes" } else { "no" });
            r
        }
        Ov3Command::Solve(a) => {
            let mut r = RunReport::new("ov3 solve");
            r.param("instance", a.instance.display());
            let inst = OvInstance::from_text(&read(&a.instance)?)?;
            r.measure("answer", if brute_force_kov(&inst) { "yes" } else { "no" });
            r
        }
        Ov3Command::Reduce(a) => {
            let mut r = RunReport::new("ov3 reduce");
            r.param("instance", a.instance.display()).param("path", a.path).param("layers", a.layers);
            let inst = OvInstance::from_text(&read(&a.instance)?)?;
            let lh = inst.sets.get(2).map_or(0, Vec::len);
            if a.layers == 0 || lh % a.layers != 0 {
                bail!("--layers {} does not divide |C| = {lh}", a.layers);
            }
            let layout = Layout { layers: a.layers, heads: lh / a.layers };
            let d = decide_ov3(&inst, a.path, Some(layout))?;
            record_decision(&mut r, "", &d);
            r
        }
        Ov3Command::Verify(a) => ov3_verify(a)?,
    };
    r.measure("wall_ms", t.elapsed().as_millis());
    Ok(r)
}

struct Trial {
    truth: bool,
    runs: Vec<(Ov3Path, Result<Ov3Decision, String>)>,
    text: String,
}

fn ov3_verify(a: &Ov3VerifyArgs) -> Result<RunReport> {
    check_shape(&a.shape)?;
    let mut r = RunReport::new("ov3 verify");
    shape_params(&mut r, &a.shape);
    r.param("trials", a.trials);
    let paths: Vec<Ov3Path> = match a.path {
        Some(p) => vec![p],
        None => vec![Ov3Path::HardmaxExact, Ov3Path::SoftmaxFloat],
    };
    r.param("paths", paths.iter().map(Ov3Path::to_string).collect::<Vec<_>>().join(","));
    let mut master = ChaCha8Rng::seed_from_u64(a.shape.seed);
    let seeds: Vec<u64> = (0..a.trials).map(|_| master.gen()).collect();
    let trials = par::map(&seeds, |&s| {
        let inst = ov3_instance(&a.shape, &mut ChaCha8Rng::seed_from_u64(s));
        let runs = paths.iter().map(|&p| (p, decide_ov3(&inst, p, None).map_err(|e| e.to_string()))).collect();
        Trial { truth: brute_force_kov(&inst), runs, text: inst.to_text() }
    });
    let no_value = BigRational::from_integer((2 * a.shape.n * a.shape.lh).into());
    let yes_bound = &no_value - BigRational::new(1.into(), 2.into());
    let mut yes = 0;
    let mut identity_ok = true;
    for p in &paths {
        let mut agree = 0;
        for (i, tr) in trials.iter().enumerate() {
            let (_, res) = tr.runs.iter().find(|x| x.0 == *p).expect("path ran");
            match res {
                Ok(d) if d.yes == tr.truth => agree += 1,
                Ok(d) => {
                    let key = format!("disagreement.{p}.{i}");
                    r.measure(&format!("{key}.truth"), tr.truth);
                    record_decision(&mut r, &format!("{key}."), d);
                    r.measure(&format!("{key}.instance"), tr.text.trim_end().replace('\n', ";"));
                }
                Err(e) => {
                    r.measure(&format!("error.{p}.{i}"), e);
                }
            }
            if let Ok(Ov3Decision { certificate: Certificate::Exact(q), .. }) = res {
                identity_ok &= if tr.truth { *q <= yes_bound } else { *q == no_value };
            }
        }
        r.measure(&format!("agree.{p}"), format!("{agree}/{}", trials.len()));
        r.check(&format!("agree.{p}"), agree == trials.len());
    }
    if paths.contains(&Ov3Path::HardmaxExact) {
        r.check("certificate_identity", identity_ok);
    }
    for tr in &trials {
        yes += tr.truth as usize;
    }
    r.measure("yes_instances", yes);
    Ok(r)
}

fn batch_for(s: &MatmulShape) -> Result<MatMulBatch> {
    if s.lh == 0 || s.n == 0 {
        bail!("--LH and --N must be positive");
    }
    Ok(if s.zeros { MatMulBatch::zeros(s.lh, s.n) } else { MatMulBatch::random(s.lh, s.n, &mut ChaCha8Rng::seed_from_u64(s.seed)) })
}

struct Extracted {
    products: Vec<Matrix<String>>,
    max_error: f64,
    transformer_size: usize,
    gradient_size: usize,
}

fn extract_in<T: Scalar>(batch: &MatMulBatch, ctx: T::Ctx, show: impl Fn(&T) -> String) -> Result<Extracted> {
    let ex = extract_matmuls_with::<T>(batch, ctx)?;
    let want = batch.products();
    let max_error = ex
        .products
        .iter()
        .zip(&want)
        .map(|(p, w)| p.max_abs_diff(&w.map(|q| T::from_rational(q, ctx))))
        .fold(0.0, f64::max);
    Ok(Extracted {
        products: ex.products.iter().map(|p| p.map(&show)).collect(),
        max_error,
        transformer_size: ex.transformer_size,
        gradient_size: ex.gradient_size,
    })
}

fn extract(batch: &MatMulBatch, mode: NumericMode) -> Result<Extracted> {
    match mode {
        NumericMode::Float64 => extract_in::<f64>(batch, (), |v| format!("{v:?}")),
        NumericMode::BigFloat(b) => extract_in::<Big>(batch, Prec(b), |v: &Big| v.to_decimal(30)),
        NumericMode::Rational => bail!("matrix extraction takes logarithms; use f64 or bigfloat"),
    }
}

fn record_extraction(r: &mut RunReport, batch: &MatMulBatch, e: &Extracted) {
    r.measure("max_error", format!("{:e}", e.max_error));
    r.measure("transformer_size", e.transformer_size);
    r.measure("gradient_size", e.gradient_size);
    let ratio = e.gradient_size as f64 / e.transformer_size.max(1) as f64;
    r.measure("size_ratio", format!("{ratio:.4}"));
    // two gradient circuits, each within 6 s + n + 2
    let bound = 6 * e.transformer_size + 2 * (batch.input_arity() + 2);
    r.check("size_bound", e.gradient_size <= bound);
}

fn products_text(batch: &MatMulBatch, e: &Extracted) -> String {
    let mut s = format!("products {} {}\n", batch.lh(), batch.n);
    for p in &e.products {
        write_matrix(p, &mut s);
    }
    s
}

pub fn cmd_matmul(c: &MatmulCommand) -> Result<RunReport> {
    let t = Instant::now();
    let mut r = match c {
        MatmulCommand::Gen(a) => {
            let mut r = RunReport::new("matmul gen");
            r.seed = Some(a.shape.seed);
            r.param("LH", a.shape.lh).param("N", a.shape.n).param("zeros", a.shape.zeros);
            let text = batch_for(&a.shape)?.to_text();
            match &a.output {
                Some(_) => write_out(&a.output, &text, &mut r)?,
                None => print!("{text}"),
            }
            r
        }
        MatmulCommand::Extract(a) => {
            let mut r = RunReport::new("matmul extract");
            let mode = parse_mode(&a.mode)?;
            r.param("batch", a.batch.display());
            record_mode(&mut r, mode);
            let batch = MatMulBatch::from_text(&read(&a.batch)?)?;
            r.param("LH", batch.lh()).param("N", batch.n);
            let e = extract(&batch, mode)?;
            write_out(&a.output, &products_text(&batch, &e), &mut r)?;
            record_extraction(&mut r, &batch, &e);
            r
        }
        MatmulCommand::Verify(a) => {
            let mut r = RunReport::new("matmul verify");
            let mode = parse_mode(&a.mode)?;
            r.seed = Some(a.shape.seed);
            r.param("LH", a.shape.lh).param("N", a.shape.n).param("zeros", a.shape.zeros).param("tol", a.tol);
            record_mode(&mut r, mode);
            let batch = batch_for(&a.shape)?;
            let e = extract(&batch, mode)?;
            record_extraction(&mut r, &batch, &e);
            r.check("max_error", e.max_error <= a.tol);
            r
        }
    };
    r.measure("wall_ms", t.elapsed().as_millis());
    Ok(r)
}

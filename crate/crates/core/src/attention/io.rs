//! Transformer manifests.
//!
//! ```text
//! transformer v1
//! tokens 4
//! d_in 2
//! m 3
//! d_out 3
//! aggregation sum
//! mode softmax
//! layer
//! head t.l0.h0.q.mat t.l0.h0.k.mat t.l0.h0.v.mat
//! mlp standard relu t.l0.w1.mat t.l0.w2.mat
//! output identity
//! ```
//!
//! Weight paths are relative to the manifest. MLP forms: `identity`,
//! `affine <w>`, `standard <act> <w1> <w2>`, `glu <act> <w0> <w1> <w2>`,
//! `ratio <start> <len> <denominator>`. Activations: `relu`, `sigmoid`,
//! `custom:<circuit file>`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Activation, Aggregation, AttentionMode, AttnError, HeadSpec, Layer, MlpKind, TransformerSpec};
use crate::circuit::{parse, serialize};
use crate::matrix::{content_lines, read_matrix, write_matrix, Matrix, MatrixTextError};
use crate::scalar::Scalar;

#[derive(Debug)]
pub enum ManifestError {
    Io { path: PathBuf, err: std::io::Error },
    Syntax { line: usize, msg: String },
    Matrix { path: PathBuf, err: MatrixTextError },
    Circuit { path: PathBuf, msg: String },
    Spec(AttnError),
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestError::Io { path, err } => write!(f, "{}: {err}", path.display()),
            ManifestError::Syntax { line, msg } => write!(f, "manifest line {line}: {msg}"),
            ManifestError::Matrix { path, err } => write!(f, "{}: {err}", path.display()),
            ManifestError::Circuit { path, msg } => write!(f, "{}: {msg}", path.display()),
            ManifestError::Spec(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ManifestError {}

fn read_text(path: &Path) -> Result<String, ManifestError> {
    fs::read_to_string(path).map_err(|err| ManifestError::Io { path: path.to_path_buf(), err })
}

fn write_text(path: &Path, text: &str) -> Result<(), ManifestError> {
    fs::write(path, text).map_err(|err| ManifestError::Io { path: path.to_path_buf(), err })
}

fn load_matrix(dir: &Path, name: &str) -> Result<Matrix<String>, ManifestError> {
    let path = dir.join(name);
    let text = read_text(&path)?;
    let m = read_matrix(&mut content_lines(&text)).map_err(|err| ManifestError::Matrix { path, err });
    m
}

fn load_activation(dir: &Path, tok: &str, line: usize) -> Result<Activation, ManifestError> {
    match tok {
        "relu" => Ok(Activation::Relu),
        "sigmoid" => Ok(Activation::Sigmoid),
        _ => match tok.strip_prefix("custom:") {
            Some(file) => {
                let path = dir.join(file);
                let text = read_text(&path)?;
                let c = parse(&text)
                    .map_err(|e| e.to_string())
                    .and_then(|c| c.validate().map_err(|e| e.to_string()))
                    .map_err(|msg| ManifestError::Circuit { path: path.clone(), msg })?;
                Activation::custom(c).map_err(ManifestError::Spec)
            }
            None => Err(ManifestError::Syntax { line, msg: format!("unknown activation `{tok}`") }),
        },
    }
}

fn parse_mlp(dir: &Path, args: &[&str], line: usize) -> Result<MlpKind<String>, ManifestError> {
    let syn = |msg: &str| ManifestError::Syntax { line, msg: msg.to_string() };
    let num = |s: &str| s.parse::<usize>().map_err(|_| syn("bad index"));
    match args {
        ["identity"] => Ok(MlpKind::Identity),
        ["affine", w] => Ok(MlpKind::Affine(load_matrix(dir, w)?)),
        ["standard", act, w1, w2] => Ok(MlpKind::Standard {
            w1: load_matrix(dir, w1)?,
            w2: load_matrix(dir, w2)?,
            act: load_activation(dir, act, line)?,
        }),
        ["glu", act, w0, w1, w2] => Ok(MlpKind::Glu {
            w0: load_matrix(dir, w0)?,
            w1: load_matrix(dir, w1)?,
            w2: load_matrix(dir, w2)?,
            act: load_activation(dir, act, line)?,
        }),
        ["ratio", s, l, d] => Ok(MlpKind::RatioReadout { start: num(s)?, len: num(l)?, denominator: num(d)? }),
        _ => Err(syn("bad MLP description")),
    }
}

/// Reads a manifest; weights stay as validated literal strings.
pub fn read_transformer(path: &Path) -> Result<TransformerSpec<String>, ManifestError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    let syn = |line: usize, msg: &str| ManifestError::Syntax { line, msg: msg.to_string() };
    match lines.next() {
        Some((_, "transformer v1")) => {}
        Some((l, _)) => return Err(syn(l, "expected `transformer v1`")),
        None => return Err(syn(1, "empty manifest")),
    }
    let mut dims = [None::<usize>; 4];
    let mut aggregation = None;
    let mut mode = None;
    let mut layers: Vec<Layer<String>> = Vec::new();
    let mut output_mlp = None;
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            [key @ ("tokens" | "d_in" | "m" | "d_out"), v] => {
                let i = ["tokens", "d_in", "m", "d_out"].iter().position(|k| k == key).expect("listed");
                dims[i] = Some(v.parse().map_err(|_| syn(ln, "bad dimension"))?);
            }
            ["aggregation", "sum"] => aggregation = Some(Aggregation::Sum),
            ["aggregation", "concat"] => aggregation = Some(Aggregation::Concat),
            ["mode", "softmax"] => mode = Some(AttentionMode::Softmax),
            ["mode", "hardmax"] => mode = Some(AttentionMode::Hardmax),
            ["mode", "denormalized"] => mode = Some(AttentionMode::Denormalized),
            ["layer"] => layers.push(Layer { heads: Vec::new(), mlp: MlpKind::Identity }),
            ["head", q, k, v] => {
                let layer = layers.last_mut().ok_or_else(|| syn(ln, "`head` before `layer`"))?;
                let h = HeadSpec::new(load_matrix(dir, q)?, load_matrix(dir, k)?, load_matrix(dir, v)?)
                    .map_err(ManifestError::Spec)?;
                layer.heads.push(h);
            }
            ["mlp", rest @ ..] => {
                let mlp = parse_mlp(dir, rest, ln)?;
                layers.last_mut().ok_or_else(|| syn(ln, "`mlp` before `layer`"))?.mlp = mlp;
            }
            ["output", rest @ ..] => output_mlp = Some(parse_mlp(dir, rest, ln)?),
            _ => return Err(syn(ln, &format!("unrecognized line `{l}`"))),
        }
    }
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| syn(0, &format!("missing `{name}`")));
    let spec = TransformerSpec {
        n_tokens: need(dims[0], "tokens")?,
        d_in: need(dims[1], "d_in")?,
        m: need(dims[2], "m")?,
        d_out: need(dims[3], "d_out")?,
        layers,
        output_mlp: output_mlp.unwrap_or(MlpKind::Identity),
        aggregation: aggregation.ok_or_else(|| syn(0, "missing `aggregation`"))?,
        mode: mode.ok_or_else(|| syn(0, "missing `mode`"))?,
    };
    spec.validate().map_err(ManifestError::Spec)?;
    Ok(spec)
}

/// Parses every weight literal into `T`.
pub fn spec_from_literals<T: Scalar>(spec: &TransformerSpec<String>, ctx: T::Ctx) -> TransformerSpec<T> {
    spec.map(|s| T::parse_literal(s, ctx).expect("literals validated on read"))
}

struct Writer<'a> {
    dir: &'a Path,
    stem: &'a str,
    customs: usize,
}

impl Writer<'_> {
    fn matrix(&self, name: &str, m: &Matrix<String>) -> Result<String, ManifestError> {
        let file = format!("{}.{name}.mat", self.stem);
        let mut s = String::new();
        write_matrix(m, &mut s);
        write_text(&self.dir.join(&file), &s)?;
        Ok(file)
    }

    fn activation(&mut self, a: &Activation) -> Result<String, ManifestError> {
        Ok(match a {
            Activation::Relu => "relu".into(),
            Activation::Sigmoid => "sigmoid".into(),
            Activation::Custom(c) => {
                let file = format!("{}.act{}.eac", self.stem, self.customs);
                self.customs += 1;
                write_text(&self.dir.join(&file), &serialize(c))?;
                format!("custom:{file}")
            }
        })
    }

    fn mlp(&mut self, tag: &str, m: &MlpKind<String>) -> Result<String, ManifestError> {
        Ok(match m {
            MlpKind::Identity => "identity".into(),
            MlpKind::Affine(w) => format!("affine {}", self.matrix(&format!("{tag}.w"), w)?),
            MlpKind::Standard { w1, w2, act } => format!(
                "standard {} {} {}",
                self.activation(act)?,
                self.matrix(&format!("{tag}.w1"), w1)?,
                self.matrix(&format!("{tag}.w2"), w2)?
            ),
            MlpKind::Glu { w0, w1, w2, act } => format!(
                "glu {} {} {} {}",
                self.activation(act)?,
                self.matrix(&format!("{tag}.w0"), w0)?,
                self.matrix(&format!("{tag}.w1"), w1)?,
                self.matrix(&format!("{tag}.w2"), w2)?
            ),
            MlpKind::RatioReadout { start, len, denominator } => format!("ratio {start} {len} {denominator}"),
        })
    }
}

/// Writes `<dir>/<stem>.tf` plus one file per weight matrix; returns the manifest path.
pub fn write_transformer(spec: &TransformerSpec<String>, dir: &Path, stem: &str) -> Result<PathBuf, ManifestError> {
    let mut w = Writer { dir, stem, customs: 0 };
    let mut s = String::from("transformer v1\n");
    s.push_str(&format!(
        "tokens {}\nd_in {}\nm {}\nd_out {}\n",
        spec.n_tokens, spec.d_in, spec.m, spec.d_out
    ));
    s.push_str(match spec.aggregation {
        Aggregation::Sum => "aggregation sum\n",
        Aggregation::Concat => "aggregation concat\n",
    });
    s.push_str(match spec.mode {
        AttentionMode::Softmax => "mode softmax\n",
        AttentionMode::Hardmax => "mode hardmax\n",
        AttentionMode::Denormalized => "mode denormalized\n",
    });
    for (l, layer) in spec.layers.iter().enumerate() {
        s.push_str("layer\n");
        for (h, head) in layer.heads.iter().enumerate() {
            let q = w.matrix(&format!("l{l}.h{h}.q"), &head.w_q)?;
            let k = w.matrix(&format!("l{l}.h{h}.k"), &head.w_k)?;
            let v = w.matrix(&format!("l{l}.h{h}.v"), &head.w_v)?;
            s.push_str(&format!("head {q} {k} {v}\n"));
        }
        let m = w.mlp(&format!("l{l}"), &layer.mlp)?;
        s.push_str(&format!("mlp {m}\n"));
    }
    let o = w.mlp("out", &spec.output_mlp)?;
    s.push_str(&format!("output {o}\n"));
    let path = dir.join(format!("{stem}.tf"));
    write_text(&path, &s)?;
    Ok(path)
}

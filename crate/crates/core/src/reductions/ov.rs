//! k-OV instances: generation, brute force, the `kov` text format, and the
//! unbalanced splitter.

use std::fmt::Write as _;

use rand::Rng;

use super::ReductionError;
use crate::matrix::content_lines;

/// `k` lists of 0/1 vectors of length `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OvInstance {
    pub k: usize,
    pub d: usize,
    pub sets: Vec<Vec<Vec<bool>>>,
}

impl OvInstance {
    pub fn new(d: usize, sets: Vec<Vec<Vec<bool>>>) -> Result<Self, ReductionError> {
        for (s, set) in sets.iter().enumerate() {
            for (i, v) in set.iter().enumerate() {
                if v.len() != d {
                    return Err(ReductionError::DimensionMismatch(format!(
                        "set {s} vector {i} has {} coordinates, expected {d}",
                        v.len()
                    )));
                }
            }
        }
        Ok(OvInstance { k: sets.len(), d, sets })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Each coordinate is 1 with probability `density`.
    pub fn random(sizes: &[usize], d: usize, density: f64, rng: &mut impl Rng) -> Self {
        let sets = sizes
            .iter()
            .map(|&n| (0..n).map(|_| (0..d).map(|_| rng.gen_bool(density.clamp(0.0, 1.0))).collect()).collect())
            .collect();
        OvInstance { k: sizes.len(), d, sets }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "kov {} {}", self.k, self.d).unwrap();
        for set in &self.sets {
            writeln!(s, "set {}", set.len()).unwrap();
            for v in set {
                s.extend(v.iter().map(|&b| if b { '1' } else { '0' }));
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ReductionError> {
        let syn = |line: usize, msg: &str| ReductionError::Syntax { line, msg: msg.to_string() };
        let mut lines = content_lines(text);
        let (hl, header) = lines.next().ok_or_else(|| syn(1, "empty instance"))?;
        let (k, d) = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["kov", k, d] => match (k.parse::<usize>(), d.parse::<usize>()) {
                (Ok(k), Ok(d)) => (k, d),
                _ => return Err(syn(hl, "bad `kov` header")),
            },
            _ => return Err(syn(hl, "expected `kov <k> <d>`")),
        };
        let mut sets = Vec::with_capacity(k);
        for _ in 0..k {
            let (sl, sh) = lines.next().ok_or_else(|| syn(hl, "missing `set` block"))?;
            let size = match sh.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["set", n] => n.parse::<usize>().map_err(|_| syn(sl, "bad set size"))?,
                _ => return Err(syn(sl, "expected `set <size>`")),
            };
            let mut set = Vec::with_capacity(size);
            for _ in 0..size {
                let (vl, v) = lines.next().ok_or_else(|| syn(sl, "set ends early"))?;
                if v.len() != d || !v.bytes().all(|b| b == b'0' || b == b'1') {
                    return Err(syn(vl, &format!("expected {d} characters in {{0,1}}")));
                }
                set.push(v.bytes().map(|b| b == b'1').collect());
            }
            sets.push(set);
        }
        if let Some((l, _)) = lines.next() {
            return Err(syn(l, "trailing content"));
        }
        OvInstance::new(d, sets)
    }
}

fn pack(v: &[bool]) -> Vec<u64> {
    let mut w = vec![0u64; v.len().div_ceil(64).max(1)];
    for (i, &b) in v.iter().enumerate() {
        if b {
            w[i / 64] |= 1 << (i % 64);
        }
    }
    w
}

fn search(sets: &[Vec<Vec<u64>>], depth: usize, acc: &[u64]) -> bool {
    if depth == sets.len() {
        return acc.iter().all(|&w| w == 0);
    }
    sets[depth].iter().any(|v| {
        let next: Vec<u64> = acc.iter().zip(v).map(|(a, b)| a & b).collect();
        search(sets, depth + 1, &next)
    })
}

/// True iff some tuple (one vector per set) has product 0 in every coordinate.
pub fn brute_force_kov(inst: &OvInstance) -> bool {
    if inst.sets.iter().any(Vec::is_empty) {
        return false;
    }
    let packed: Vec<Vec<Vec<u64>>> = inst.sets.iter().map(|s| s.iter().map(|v| pack(v)).collect()).collect();
    let acc = pack(&vec![true; inst.d]);
    search(&packed, 0, &acc)
}

/// Splits a balanced instance into sub-instances whose `j`-th set has
/// `round(n^{s_j})` vectors; the original answer is the OR of the parts.
pub fn split_unbalanced(inst: &OvInstance, exponents: &[f64]) -> Result<Vec<OvInstance>, ReductionError> {
    if exponents.len() != inst.k {
        return Err(ReductionError::DimensionMismatch(format!(
            "{} exponents for {} sets",
            exponents.len(),
            inst.k
        )));
    }
    if let Some(&s) = exponents.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
        return Err(ReductionError::BadExponent(s));
    }
    let n = inst.sets.first().map_or(0, Vec::len);
    if inst.sets.iter().any(|s| s.len() != n) {
        return Err(ReductionError::UnequalSetSizes);
    }
    let blocks: Vec<Vec<&[Vec<bool>]>> = inst
        .sets
        .iter()
        .zip(exponents)
        .map(|(set, &s)| {
            let size = ((n as f64).powf(s).round() as usize).clamp(1, n.max(1));
            set.chunks(size).collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; inst.k];
    if blocks.iter().any(Vec::is_empty) {
        return Ok(vec![inst.clone()]);
    }
    loop {
        let sets = idx.iter().zip(&blocks).map(|(&i, b)| b[i].to_vec()).collect();
        out.push(OvInstance { k: inst.k, d: inst.d, sets });
        let mut p = inst.k;
        loop {
            if p == 0 {
                return Ok(out);
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < blocks[p].len() {
                break;
            }
            idx[p] = 0;
        }
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use eaclab_core::attention::constructions::{
    denormalized_wrapper, glu_identity, relu_identity, sum_to_concat, unwrap_output, wrap_input,
};
use eaclab_core::attention::{
    attention_head, harden_to_softmax, mlp_apply, softmax_scale, transformer_forward, transformer_trace, Activation,
    AttentionMode, GapAssurance, HeadSpec,
};
use eaclab_core::autodiff::{default_step, finite_difference, forward_mode_eval, gradient_circuit};
use eaclab_core::bigfloat::Big;
use eaclab_core::circuit::evaluate_with;
use eaclab_core::elim::{eliminate, ElimOptions, ElimOutput};
use eaclab_core::gen::{self, TransformerShape};
use eaclab_core::literal::rational_to_f64;
use eaclab_core::par;
use eaclab_core::reductions::ov3::{softmax_target_error, Certificate};
use eaclab_core::reductions::{
    brute_force_kov, build_ov3_transformer, compile_transformer_to_eac, decide_ov3, extract_matmuls,
    rowsum_transformer, sigmoid_recover, split_unbalanced, CompileTarget, GradientEfficient, Layout, MatMulBatch,
    Ov3Path, OvInstance,
};
use eaclab_core::{Matrix, Prec, Scalar};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BITS: usize = 256;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rng(criterion: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(criterion * 1_000_003 + trial)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Random `L × H` factorization of `count`.
fn layout_for(count: usize, r: &mut impl Rng) -> Layout {
    let divisors: Vec<usize> = (1..=count).filter(|l| count % l == 0).collect();
    let layers = divisors[r.gen_range(0..divisors.len())];
    Layout { layers, heads: count / layers }
}

struct Ov3Case {
    inst: OvInstance,
    layout: Layout,
}

fn ov3_cases(criterion: u64, count: u64) -> Vec<Ov3Case> {
    (0..count)
        .map(|t| {
            let mut r = rng(criterion, t);
            let n = r.gen_range(4..=48);
            let d = r.gen_range(4..=12);
            let lh = r.gen_range(1..=16);
            let density = [0.1, 0.5, 0.9][(t % 3) as usize];
            let layout = layout_for(lh, &mut r);
            Ov3Case { inst: OvInstance::random(&[n, n, lh], d, density, &mut r), layout }
        })
        .collect()
}

/// Criteria 1 and 2 share the same 200 instances.
fn criteria_1_2() -> (Outcome, Outcome) {
    let cases = ov3_cases(1, 200);
    let start = Instant::now();
    let results = par::map(&cases, |c| {
        let truth = brute_force_kov(&c.inst);
        let hard = decide_ov3(&c.inst, Ov3Path::HardmaxExact, Some(c.layout));
        let soft = decide_ov3(&c.inst, Ov3Path::SoftmaxFloat, Some(c.layout));
        (truth, hard, soft)
    });
    let elapsed = start.elapsed();
    let mut hard_ok = 0;
    let mut soft_ok = 0;
    let mut yes = 0;
    let mut cert_ok = 0;
    let mut errors = Vec::new();
    for (truth, hard, soft) in &results {
        yes += *truth as usize;
        match hard {
            Ok(h) => {
                hard_ok += (h.yes == *truth) as usize;
                let no_value = BigRational::from_integer((h.no_value as i64).into());
                let half = BigRational::new(1.into(), 2.into());
                let ok = match &h.certificate {
                    Certificate::Exact(q) if *truth => *q <= &no_value - half,
                    Certificate::Exact(q) => *q == no_value,
                    Certificate::Float(_) => false,
                };
                cert_ok += ok as usize;
            }
            Err(e) => errors.push(e.to_string()),
        }
        match soft {
            Ok(s) => soft_ok += (s.yes == *truth) as usize,
            Err(e) => errors.push(e.to_string()),
        }
    }
    let n = results.len();
    let c1 = Outcome {
        pass: hard_ok == n && soft_ok == n && elapsed < Duration::from_secs(120),
        detail: format!(
            "3-OV decisions vs brute force: hardmax {hard_ok}/{n}, softmax {soft_ok}/{n} ({yes} yes-instances), {} (limit 120s){}",
            secs(elapsed),
            errors.first().map(|e| format!(", first error: {e}")).unwrap_or_default()
        ),
    };
    let c2 = Outcome {
        pass: cert_ok == n,
        detail: format!("exact certificates: {cert_ok}/{n} equal 2NHL on no-instances, <= 2NHL - 1/2 on yes-instances"),
    };
    (c1, c2)
}

fn criterion_3() -> Outcome {
    let cases = ov3_cases(3, 20);
    let mut worst = 0.0f64;
    let mut heads = 0;
    let mut fails = 0;
    for c in &cases {
        let (spec, x) = build_ov3_transformer(&c.inst.sets[0], &c.inst.sets[1], &c.inst.sets[2], c.inst.d, c.layout)
            .expect("valid instance");
        let n = c.inst.sets[0].len();
        let eps = softmax_target_error(n, c.layout);
        let states = transformer_trace(&x, &spec, ()).expect("hardmax trace");
        let fspec = spec.map(rational_to_f64);
        let (soft, scale) = harden_to_softmax(&fspec, eps, &GapAssurance::Certified, ()).expect("hardening");
        assert_eq!(scale, softmax_scale(n + 1, eps));
        for (l, layer) in spec.layers.iter().enumerate() {
            let xf = states[l].map(rational_to_f64);
            for (h, head) in layer.heads.iter().enumerate() {
                let hard = attention_head(&states[l], head, AttentionMode::Hardmax, ()).expect("hardmax head");
                let sm = attention_head(&xf, &soft.layers[l].heads[h], AttentionMode::Softmax, ()).expect("softmax head");
                let err = hard.map(rational_to_f64).max_abs_diff(&sm);
                worst = worst.max(err / eps);
                heads += 1;
                fails += (err > eps) as usize;
            }
        }
    }
    Outcome {
        pass: fails == 0,
        detail: format!(
            "softmax vs hardmax heads: {}/{heads} within eps = 1/(10NHL), worst error {:.3e} eps",
            heads - fails,
            worst
        ),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn criterion_4() -> Outcome {
    let p = Prec(BITS);
    let floor = Big::from_f64(1e-60, BITS);
    let trials: Vec<u64> = (0..100).collect();
    let rows = par::map(&trials, |&t| {
        let mut r = rng(4, t);
        let arity = r.gen_range(1..=6);
        let ops = r.gen_range(1..=200);
        let ge = gen::random_eac(&mut r, arity, ops);
        let g = gradient_circuit(&ge.circuit).expect("single output");
        let bound_ok = g.size() <= g.bound();
        let gc = g.circuit.clone().validate().expect("valid gradient circuit");
        let xb: Vec<Big> = ge.point.iter().map(|q| Big::from_rational(q, BITS)).collect();
        let xf: Vec<f64> = ge.point.iter().map(rational_to_f64).collect();
        let gb = evaluate_with(&gc, &xb, p).expect("big gradient").outputs;
        let gf = evaluate_with(&gc, &xf, ()).expect("f64 gradient").outputs;
        let mut dual_worst = 0.0f64;
        let mut fd_worst = 0.0f64;
        for i in 0..arity {
            let dual = forward_mode_eval(&ge.circuit, &xb, i, p).expect("dual")[0].1.clone();
            // relative, with a 1e-60 floor for derivatives that vanish exactly
            let diff = gb[1 + i].sub(&dual).abs();
            let scale = gb[1 + i].abs().max_of(&dual.abs()).max_of(&floor).clone();
            let e = diff.div(&scale).expect("positive scale").to_f64();
            dual_worst = dual_worst.max(e);
            let fd = finite_difference(&ge.circuit, &xf, i, default_step(xf[i])).expect("fd");
            fd_worst = fd_worst.max(rel(gf[1 + i], fd));
        }
        (bound_ok, dual_worst, fd_worst, g.ratio())
    });
    let dual_ok = rows.iter().filter(|r| r.1 <= 1e-12).count();
    let fd_ok = rows.iter().filter(|r| r.2 <= 1e-4).count();
    let bound_ok = rows.iter().filter(|r| r.0).count();
    let worst_dual = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst_fd = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let max_ratio = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    Outcome {
        pass: dual_ok == 100 && fd_ok == 100 && bound_ok == 100,
        detail: format!(
            "gradients of 100 random eACs: dual {dual_ok}/100 (worst {worst_dual:.1e}), finite differences {fd_ok}/100 (worst {worst_fd:.1e}), size <= 6s+n+2 {bound_ok}/100 (max ratio {max_ratio:.2})"
        ),
    }
}

fn criterion_5() -> Outcome {
    let trials: Vec<u64> = (0..32).collect();
    let rows = par::map(&trials, |&t| {
        let mut r = rng(5, t);
        let arity = r.gen_range(1..=4);
        let q = gen::detoured_quadratic(&mut r, arity);
        let opts = ElimOptions { output: ElimOutput::Full, ..ElimOptions::default() };
        let el = match eliminate(&q.circuit, &opts) {
            Ok(el) => el,
            Err(e) => return (false, false, format!("{e}")),
        };
        let k = el.circuit.counts();
        let clean = k.exp == 0 && k.ln == 0 && k.div == 0;
        let vc = el.circuit.clone().validate().expect("valid elimination");
        let exact = (0..16).all(|_| {
            let x: Vec<BigRational> = (0..arity)
                .map(|_| BigRational::new(r.gen_range(-10_000i64..=10_000).into(), r.gen_range(1i64..=997).into()))
                .collect();
            evaluate_with(&vc, &x, ()).map(|t| t.outputs[0] == q.eval(&x)).unwrap_or(false)
        });
        (clean, exact && el.exact, String::new())
    });
    let clean = rows.iter().filter(|r| r.0).count();
    let exact = rows.iter().filter(|r| r.1).count();
    let n = rows.len();
    Outcome {
        pass: clean == n && exact == n,
        detail: format!(
            "eliminated {n} detoured quadratics: exp/ln/div-free {clean}/{n}, exact at 16 rational points {exact}/{n}{}",
            rows.iter().find(|r| !r.2.is_empty()).map(|r| format!(", error: {}", r.2)).unwrap_or_default()
        ),
    }
}

fn max_abs(got: &[Matrix<Big>], want: &[Matrix<BigRational>]) -> f64 {
    let mut worst = 0.0f64;
    for (g, w) in got.iter().zip(want) {
        for (g, w) in g.data().iter().zip(w.data()) {
            worst = worst.max(g.sub(&Big::from_rational(w, BITS)).abs().to_f64());
        }
    }
    worst
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    let mut fails = Vec::new();
    let mut largest = Duration::ZERO;
    let mut ratio = 0.0;
    for (t, &lh) in [1usize, 2, 4, 6].iter().enumerate() {
        for (u, &n) in [1usize, 4, 8, 12].iter().enumerate() {
            let mut r = rng(6, (t * 4 + u) as u64);
            let batch = MatMulBatch::random(lh, n, &mut r);
            let start = Instant::now();
            match extract_matmuls(&batch) {
                Ok(ex) => {
                    let e = max_abs(&ex.products, &batch.products());
                    worst = worst.max(e);
                    if e > 1e-8 {
                        fails.push(format!("LH={lh} N={n}"));
                    }
                    if lh == 6 && n == 12 {
                        largest = start.elapsed();
                        ratio = ex.ratio();
                    }
                }
                Err(e) => fails.push(format!("LH={lh} N={n}: {e}")),
            }
        }
    }
    Outcome {
        pass: fails.is_empty() && largest < Duration::from_secs(300),
        detail: format!(
            "matmul extraction on 16 batches: max abs error {worst:.1e} (limit 1e-8), LH=6 N=12 in {} (limit 300s), gradient/transformer size ratio {ratio:.2}{}",
            secs(largest),
            if fails.is_empty() { String::new() } else { format!(", failed: {}", fails.join("; ")) }
        ),
    }
}

fn criterion_7() -> Outcome {
    let p = Prec(BITS);
    let trials: Vec<u64> = (0..50).collect();
    let errs = par::map(&trials, |&t| {
        let mut r = rng(7, t);
        let (lh, n) = (r.gen_range(1..=4), r.gen_range(1..=5));
        let mut batch = MatMulBatch::random(lh, n, &mut r);
        batch.c = (0..lh).map(|_| gen::random_matrix(&mut r, n, n)).collect();
        batch.d = (0..lh).map(|_| (0..n).map(|_| gen::grid_entry(&mut r)).collect()).collect();
        let layout = layout_for(lh, &mut r);
        let rt = rowsum_transformer(n, layout, None).expect("row-sum transformer");
        let c = compile_transformer_to_eac(&rt.spec, &rt.x, rt.input_arity, &CompileTarget::FullOutput)
            .expect("compiles");
        let ins: Vec<Big> = batch.inputs().iter().map(|q| Big::from_rational(q, BITS)).collect();
        let got = evaluate_with(&c, &ins, p).expect("circuit evaluation").outputs;
        let (spec, x) = rt.instantiate(&ins, p);
        let want = transformer_forward(&x, &spec, p).expect("forward pass");
        got.iter().zip(want.data()).map(|(g, w)| g.sub(w).abs().to_f64()).fold(0.0, f64::max)
    });
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let ok = errs.iter().filter(|&&e| e <= 1e-25).count();
    Outcome {
        pass: ok == 50,
        detail: format!("compiled eAC vs forward pass on 50 row-sum transformers: {ok}/50 within 1e-25 (worst {worst:.1e})"),
    }
}

fn criterion_8() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;

    // identity MLPs
    let mut r = rng(8, 0);
    let mut glu_ok = 0;
    let mut relu_ok = 0;
    for _ in 0..100 {
        let m = r.gen_range(1..=6);
        let x: Vec<BigRational> = (0..m).map(|_| gen::grid_entry(&mut r)).collect();
        let glu = glu_identity::<BigRational>(m, Activation::Relu, &BigRational::from_integer(1.into()), ())
            .expect("relu(1) != 0");
        let xf: Vec<f64> = x.iter().map(rational_to_f64).collect();
        let gluf = glu_identity::<f64>(m, Activation::Sigmoid, &0.0, ()).expect("sigmoid(0) != 0");
        glu_ok += (mlp_apply(&x, &glu, ()).ok() == Some(x.clone()) && mlp_apply(&xf, &gluf, ()).ok() == Some(xf.clone()))
            as usize;
        relu_ok += (mlp_apply(&x, &relu_identity(m, ()), ()).ok() == Some(x.clone())) as usize;
    }
    pass &= glu_ok == 100 && relu_ok == 100;
    parts.push(format!("GLU identity {glu_ok}/100, ReLU identity {relu_ok}/100 exact"));

    // sum to concat
    let mut worst = 0.0f64;
    let mut ok = 0;
    for t in 0..50 {
        let mut r = rng(8, 100 + t);
        let d_in = r.gen_range(1..=3);
        let shape = TransformerShape {
            n_tokens: r.gen_range(1..=5),
            d_in,
            m: d_in + r.gen_range(0..=3),
            d_out: r.gen_range(1..=3),
            layers: r.gen_range(1..=3),
            heads: r.gen_range(1..=3),
            mlps: t % 2 == 1,
        };
        let spec = gen::random_transformer(&mut r, shape).map(rational_to_f64);
        let x = gen::random_matrix(&mut r, shape.n_tokens, d_in).map(rational_to_f64);
        let e = sum_to_concat(&spec, ()).and_then(|conv| {
            let want = transformer_forward(&x, &spec, ())?;
            let got = conv.extract.apply(&transformer_forward(&x, &conv.spec, ())?, ())?;
            Ok(want.max_abs_diff(&got))
        });
        match e {
            Ok(e) => {
                worst = worst.max(e);
                ok += (e <= 1e-12) as usize;
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    pass &= ok == 50;
    parts.push(format!("sum->concat {ok}/50 within 1e-12 (worst {worst:.1e})"));

    // denormalized wrapper
    let p = Prec(BITS);
    let mut worst = 0.0f64;
    let mut ok = 0;
    for t in 0..50 {
        let mut r = rng(8, 200 + t);
        let (n, d, k, mv) = (r.gen_range(1..=5), r.gen_range(1..=4), r.gen_range(1..=3), r.gen_range(1..=4));
        let big = |m: Matrix<BigRational>| m.map(|q| Big::from_rational(q, BITS));
        let head = HeadSpec::new(
            big(gen::random_matrix(&mut r, d, k)),
            big(gen::random_matrix(&mut r, d, k)),
            big(gen::random_matrix(&mut r, d, mv)),
        )
        .expect("head shapes");
        let x = big(gen::random_matrix(&mut r, n, d));
        let (spec, _) = denormalized_wrapper(&head, n, p).expect("wrapper");
        let got = unwrap_output(&transformer_forward(&wrap_input(&x, p), &spec, p).expect("forward"), n);
        let want = attention_head(&x, &head, AttentionMode::Denormalized, p).expect("head");
        let e = got.max_abs_diff(&want);
        worst = worst.max(e);
        ok += (e <= 1e-25) as usize;
    }
    pass &= ok == 50;
    parts.push(format!("denormalized wrapper {ok}/50 within 1e-25 (worst {worst:.1e})"));

    // sigmoid recovery
    let sig = GradientEfficient::logistic();
    let mut worst = 0.0f64;
    let mut ok = 0;
    let mut total = 0;
    for (t, layout) in [(1, 1), (1, 2), (2, 1), (2, 2)].iter().map(|&(l, h)| Layout { layers: l, heads: h }).enumerate() {
        for n in 1..=4 {
            let mut r = rng(8, 300 + (t * 4 + n) as u64);
            let batch = MatMulBatch::random(layout.count(), n, &mut r);
            total += 1;
            match sigmoid_recover(&batch, layout, &sig, p) {
                Ok(got) => {
                    let e = max_abs(&got, &batch.products());
                    worst = worst.max(e);
                    ok += (e <= 1e-6) as usize;
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    pass &= ok == total;
    parts.push(format!("sigmoid recovery {ok}/{total} within 1e-6 (worst {worst:.1e})"));
    Outcome { pass, detail: parts.join("; ") }
}

fn criterion_9() -> Outcome {
    let trials: Vec<u64> = (0..100).collect();
    let rows = par::map(&trials, |&t| {
        let mut r = rng(9, t);
        let k = r.gen_range(2..=4);
        let n = r.gen_range(1..=12);
        let d = r.gen_range(2..=8);
        let density = [0.3, 0.5, 0.7][r.gen_range(0..3)];
        let inst = OvInstance::random(&vec![n; k], d, density, &mut r);
        let mut exps = vec![1.0];
        exps.extend((1..k).map(|_| [1.0, 0.5, 1.0 / 3.0, 2.0 / 3.0, r.gen_range(0.05..=1.0)][r.gen_range(0..5)]));
        let parts = split_unbalanced(&inst, &exps).expect("valid exponents");
        (parts.iter().any(brute_force_kov) == brute_force_kov(&inst), parts.len())
    });
    let ok = rows.iter().filter(|r| r.0).count();
    let subs: usize = rows.iter().map(|r| r.1).sum();
    Outcome {
        pass: ok == 100,
        detail: format!("unbalanced split OR vs brute force: {ok}/100 ({subs} sub-instances)"),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut all = true;
    let mut report = |k: usize, o: Outcome| {
        all &= o.pass;
        println!("criterion {k}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    let (c1, c2) = criteria_1_2();
    report(1, c1);
    report(2, c2);
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    report(8, criterion_8());
    report(9, criterion_9());
    println!("acceptance: {} in {}", if all { "all criteria pass" } else { "FAILURES" }, secs(start.elapsed()));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

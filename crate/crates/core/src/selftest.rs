//! The acceptance suite: twelve reproducible checks, each reported as one
//! pass/fail line.

use std::time::Instant;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::compiler::{
    compile_cpwl, compile_deep_maxout, compile_general, compile_maxout_layer_seq, compile_relu,
    decompose_rank, lift_tokenwise, max_affine_fit, CompileOptions, Compiled,
    TheoremId, REPORT_SCHEMA_VERSION,
};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::maxout_eval::{devectorize, eval_deep_maxout, eval_maxout_layer, from_fn, VectorFunction};
use crate::netspec::{random_spec, CpwlPairSpec, DeepMaxoutSpec, Dims, DomainBox, MaxoutLayerSpec};
use crate::netspec::{ReluNetSpec, SpecDocument, SpecKind};
use crate::regions::{count_regions_1d, maxout_region_lower_bound, transformer_region_lower_bound, Slice};
use crate::rng::{substream, Rng};
use crate::scalar::{rational_from_f64, Rational};
use crate::transformer::{AttentionMode, NetFunction};
use crate::verify::{
    check_exact_equivalence, check_shift_probes, check_softmax_max_bound, estimate_lipschitz,
    measure_softmax_error, DEFAULT_TOL,
};

pub const CRITERIA: [&str; 12] = [
    "exactness, shallow p<=T",
    "exactness, deep p<=T",
    "rank decomposition",
    "relu networks",
    "softmax rate",
    "softmax-max gap",
    "lipschitz",
    "budget audits",
    "convex fit",
    "cpwl",
    "region formulas",
    "region counting",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    /// `[PASS] 3 rank decomposition: ...`
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub schema_version: u32,
    pub seed: u64,
    pub results: Vec<CriterionResult>,
    pub passed: bool,
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

/// Run criterion `id` (1-based).
pub fn run_criterion(id: usize, seed: u64) -> CriterionResult {
    let start = Instant::now();
    let result = match id {
        1 => shallow_exactness(seed),
        2 => deep_exactness(seed),
        3 => rank_decomposition(seed),
        4 => relu_exactness(seed),
        5 => softmax_rate(seed),
        6 => softmax_max_gap(seed),
        7 => lipschitz(seed),
        8 => budget_audits(seed),
        9 => convex_fit(seed),
        10 => cpwl(seed),
        11 => region_formulas(),
        12 => region_counting(seed),
        _ => outcome(false, format!("no criterion {id}")),
    };
    let Outcome { passed, detail } = result.unwrap_or_else(|e| Outcome {
        passed: false,
        detail: format!("error: {e}"),
    });
    CriterionResult {
        id,
        name: CRITERIA.get(id.wrapping_sub(1)).copied().unwrap_or("unknown").into(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Run every criterion, calling `each` as results arrive.
pub fn run_all(seed: u64, mut each: impl FnMut(&CriterionResult)) -> SelftestReport {
    let results: Vec<CriterionResult> = (1..=CRITERIA.len())
        .map(|id| {
            let r = run_criterion(id, seed);
            each(&r);
            r
        })
        .collect();
    SelftestReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        passed: results.iter().all(|r| r.passed),
        results,
    }
}

fn unit_box(n: usize, t: usize) -> Result<DomainBox> {
    DomainBox::new(-1.0, 1.0, n, t)
}

/// Rescale so that `max(||W^i||_inf, ||b^i||_inf) = 1`.
fn normalized(layer: MaxoutLayerSpec<f64>) -> MaxoutLayerSpec<f64> {
    let scale = layer.weight_bound();
    if scale > 0.0 {
        layer.map(|x| x / scale)
    } else {
        layer
    }
}

fn random_layer_spec(dims: Dims, seed: u64) -> Result<MaxoutLayerSpec<f64>> {
    match random_spec(SpecKind::MaxoutLayer, dims, 1.0, seed)? {
        SpecDocument::MaxoutLayer(f) => Ok(normalized(f)),
        _ => unreachable!(),
    }
}

fn random_deep_spec(dims: Dims, seed: u64) -> Result<DeepMaxoutSpec<f64>> {
    match random_spec(SpecKind::DeepMaxout, dims, 1.0, seed)? {
        SpecDocument::DeepMaxout(f) => DeepMaxoutSpec::new(f.layers.into_iter().map(normalized).collect()),
        _ => unreachable!(),
    }
}

fn random_relu_spec(dims: Dims, seed: u64) -> Result<ReluNetSpec<f64>> {
    match random_spec(SpecKind::ReluNet, dims, 1.0, seed)? {
        SpecDocument::ReluNet(f) => Ok(f),
        _ => unreachable!(),
    }
}

fn random_pair(dims: Dims, seed: u64) -> Result<CpwlPairSpec<f64>> {
    match random_spec(SpecKind::CpwlPair, dims, 1.0, seed)? {
        SpecDocument::CpwlPair(f) => Ok(f),
        _ => unreachable!(),
    }
}

/// Random shallow dimensions with `n, m <= 3`, `T in {2, 3, 4}`, `p <= T`.
fn shallow_dims(rng: &mut Rng) -> Dims {
    let t = rng.gen_range(2..=4);
    Dims {
        n: rng.gen_range(1..=3),
        t,
        p: rng.gen_range(1..=t),
        m: rng.gen_range(1..=3),
        depth: 1,
    }
}

fn exact(compiled: &Compiled, oracle: &(dyn VectorFunction<f64> + Sync), domain: &DomainBox, samples: usize, seed: u64) -> Result<f64> {
    let report = check_exact_equivalence(&compiled.net, oracle, domain, samples, DEFAULT_TOL, seed)?;
    Ok(report.max_scaled_error)
}

fn shallow_exactness(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/1");
    let (mut worst, mut failures) = (0.0f64, 0);
    for k in 0..50 {
        let dims = shallow_dims(&mut rng);
        let f = random_layer_spec(dims, seed ^ k)?;
        let domain = unit_box(dims.n, dims.t)?;
        let compiled = compile_maxout_layer_seq(&f, &domain, &CompileOptions::default())?;
        let err = exact(&compiled, &f, &domain, 1000, seed + k)?;
        worst = worst.max(err);
        failures += usize::from(err > DEFAULT_TOL);
    }
    outcome(
        failures == 0,
        format!("50 layers, {failures} over tolerance, worst scaled error {worst:.2e}"),
    )
}

fn deep_exactness(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/2");
    let (mut worst, mut worst_probe, mut failures) = (0.0f64, 0.0f64, 0);
    for k in 0..20u64 {
        let t = rng.gen_range(2..=3);
        let dims = Dims {
            n: rng.gen_range(1..=2),
            t,
            p: rng.gen_range(1..=t),
            m: rng.gen_range(1..=2),
            depth: 2 + (k as usize % 2),
        };
        let f = random_deep_spec(dims, seed ^ (100 + k))?;
        let domain = unit_box(dims.n, t)?;
        let compiled = compile_deep_maxout(&f, &domain, &CompileOptions::default())?;
        let err = exact(&compiled, &f, &domain, 1000, seed + k)?;
        let bound = compiled.report.layer_bounds.iter().copied().fold(1.0, f64::max);
        let probes = check_shift_probes(&compiled.net, &compiled.report.probes, &domain, 200, DEFAULT_TOL * bound, seed + k)?;
        worst = worst.max(err);
        worst_probe = worst_probe.max(probes.max_abs_error);
        failures += usize::from(err > DEFAULT_TOL || !probes.passed || probes.notes[0] == "0 probe(s)");
    }
    outcome(
        failures == 0,
        format!("20 nets, {failures} failing, worst scaled error {worst:.2e}, worst box excess {worst_probe:.2e}"),
    )
}

fn rank_decomposition(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/3");
    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    for p in 3..=5usize {
        for s in 2..=3usize {
            let f = random_layer_spec(Dims { n: 3, t: 1, p, m: 2, depth: 1 }, seed ^ (p * 10 + s) as u64)?;
            let deep = decompose_rank(&f, s)?;
            let expected = (p - 1).div_ceil(s - 1);
            if deep.depth() != expected {
                problems.push(format!("p={p} s={s}: depth {} != {expected}", deep.depth()));
            }
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let (a, b) = (eval_maxout_layer(&f, &x)?, eval_deep_maxout(&deep, &x)?);
                for (u, v) in a.iter().zip(&b) {
                    worst = worst.max((u - v).abs());
                }
            }
            let exact_layer = f.map(|w| rational_from_f64(*w));
            let exact_deep = decompose_rank(&exact_layer, s)?;
            for _ in 0..50 {
                let x: Vec<Rational> = (0..3).map(|_| rational_from_f64(rng.gen_range(-1.0..=1.0))).collect();
                if eval_maxout_layer(&exact_layer, &x)? != eval_deep_maxout(&exact_deep, &x)? {
                    problems.push(format!("p={p} s={s}: rational mismatch"));
                    break;
                }
            }
        }
    }
    if worst > 1e-12 {
        problems.push(format!("float deviation {worst:.2e}"));
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("6 (p, s) pairs, depths match, float deviation {worst:.2e}, rationals exact")
        } else {
            problems.join("; ")
        },
    )
}

fn relu_exactness(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/4");
    let (mut worst, mut failures) = (0.0f64, 0);
    for k in 0..20u64 {
        let depth = 1 + (k as usize % 2);
        let dims = Dims {
            n: rng.gen_range(1..=3),
            t: rng.gen_range(2..=3),
            p: 2,
            m: rng.gen_range(1..=2),
            depth,
        };
        let f = random_relu_spec(dims, seed ^ (200 + k))?;
        let domain = unit_box(dims.n, dims.t)?;
        let compiled = compile_relu(&f, &domain, &CompileOptions::default())?;
        let err = exact(&compiled, &f, &domain, 1000, seed + k)?;
        worst = worst.max(err);
        failures += usize::from(err > DEFAULT_TOL || compiled.net.blocks.len() != 3 * depth + 1);
    }
    outcome(
        failures == 0,
        format!("20 nets with L = 3D+1, {failures} failing, worst scaled error {worst:.2e}"),
    )
}

/// `|x_1 + x_2|` on both tokens.
fn abs_layer() -> Result<MaxoutLayerSpec<f64>> {
    let w = Matrix::from_rows(vec![vec![1.0, 1.0], vec![-1.0, -1.0]])?;
    MaxoutLayerSpec::new(vec![w.clone(), w], vec![vec![0.0, 0.0]; 2])
}

fn softmax_rate(seed: u64) -> Result<Outcome> {
    let lambdas = [1e2, 1e3, 1e4, 1e5];
    let mut rng = substream(seed, "selftest/5");
    let mut slopes = Vec::new();
    let mut failures = 0;
    let mut violations = 0;
    for k in 0..10u64 {
        let (f, domain) = if k == 0 {
            (abs_layer()?, unit_box(1, 2)?)
        } else {
            let t = rng.gen_range(2..=3);
            let dims = Dims {
                n: rng.gen_range(1..=2),
                t,
                p: rng.gen_range(2..=t),
                m: 1,
                depth: 1,
            };
            (random_layer_spec(dims, seed ^ (300 + k))?, unit_box(dims.n, t)?)
        };
        let compiled = compile_maxout_layer_seq(&f, &domain, &CompileOptions::default())?;
        let sweep = measure_softmax_error(&compiled.net, &f, &domain, &lambdas, 200, seed + k)?;
        violations += sweep.monotone_violations;
        match sweep.fitted_slope {
            Some(s) if s <= -0.9 && sweep.errors.len() == lambdas.len() => slopes.push(s),
            Some(s) => {
                slopes.push(s);
                failures += 1;
            }
            None => failures += 1,
        }
    }
    let pairs = 10 * (lambdas.len() - 1);
    let ok = failures == 0 && violations as f64 <= 0.05 * pairs as f64;
    let steepest = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        ok,
        format!(
            "10 nets, {failures} with slope > -0.9, flattest slope {steepest:.3}, {violations}/{pairs} non-monotone pairs"
        ),
    )
}

fn softmax_max_gap(seed: u64) -> Result<Outcome> {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for lambda in [1.0, 10.0, 100.0] {
        for d in 1..=8 {
            let r = check_softmax_max_bound(d, lambda, 12_500, seed)?;
            violations += usize::from(!r.passed);
            worst = worst.max(r.max_scaled_error);
        }
    }
    outcome(
        violations == 0,
        format!("3 x 100000 vectors, d <= 8, {violations} failing cells, largest gap/bound {worst:.4}"),
    )
}

fn lipschitz(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/7");
    let (mut worst_ratio, mut failures) = (0.0f64, 0);
    for k in 0..50u64 {
        let dims = shallow_dims(&mut rng);
        let f = random_layer_spec(dims, seed ^ (400 + k))?;
        let domain = unit_box(dims.n, dims.t)?;
        let compiled = compile_maxout_layer_seq(&f, &domain, &CompileOptions::default())?;
        let net = NetFunction::new(&compiled.net, AttentionMode::Hardmax);
        let est = estimate_lipschitz(&net, &domain, 400, seed + k)?;
        let bound = f.p as f64 * f.weight_bound();
        worst_ratio = worst_ratio.max(est / bound);
        failures += usize::from(est > bound * (1.0 + 1e-6));
    }
    outcome(
        failures == 0,
        format!("50 nets, {failures} above p*M2, largest estimate/(p*M2) {worst_ratio:.4}"),
    )
}

fn budget_audits(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/8");
    let mut seen = std::collections::BTreeMap::<&'static str, (usize, usize)>::new();
    let mut record = |compiled: &Compiled| {
        let a = &compiled.report.audit;
        let entry = seen.entry(a.theorem_id.as_str()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(!a.within_budget);
    };
    for k in 0..4u64 {
        let s = seed ^ (500 + k);
        let dims = shallow_dims(&mut rng);
        let domain = unit_box(dims.n, dims.t)?;
        record(&compile_maxout_layer_seq(&random_layer_spec(dims, s)?, &domain, &CompileOptions::default())?);

        let deep = Dims { depth: 2, p: dims.p.min(2), n: dims.n.min(2), m: dims.m.min(2), ..dims };
        let domain = unit_box(deep.n, deep.t)?;
        record(&compile_deep_maxout(&random_deep_spec(deep, s)?, &domain, &CompileOptions::default())?);
        record(&compile_relu(&random_relu_spec(deep, s)?, &domain, &CompileOptions::default())?);

        let t = 2;
        let domain = unit_box(1, t)?;
        let high = Dims { n: 1, t, p: 4 + k as usize % 2, m: 1 + k as usize % 2, depth: 1 };
        for s_opt in [Some(2), Some(6)] {
            let opts = CompileOptions { s: s_opt, ..CompileOptions::default() };
            let f = random_layer_spec(high, s)?;
            let compiled = compile_general(&SpecDocument::MaxoutLayer(f), &domain, &opts)?;
            record(&compiled);
            let d = random_deep_spec(Dims { depth: 2, ..high }, s)?;
            record(&compile_general(&SpecDocument::DeepMaxout(d), &domain, &opts)?);
        }
        record(&compile_cpwl(&random_pair(high, s)?, &domain, &CompileOptions::default())?);
    }
    let covered = TheoremId::ALL.iter().all(|id| seen.contains_key(id.as_str()));
    let over: usize = seen.values().map(|v| v.1).sum();
    let detail = seen
        .iter()
        .map(|(id, (n, bad))| format!("{id} {}/{n}", n - bad))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(covered && over == 0, format!("within budget: {detail}"))
}

fn convex_fit(seed: u64) -> Result<Outcome> {
    let t = 2;
    let domain = unit_box(1, t)?;
    let square = |x: &[f64]| x[0] * x[0];
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    for p in [4usize, 8, 16] {
        let fit = max_affine_fit(&square, -1.0, 1.0, 1, p, seed)?;
        let mut sup = 0.0f64;
        for i in 0..=20_000 {
            let x = -1.0 + 2.0 * i as f64 / 20_000.0;
            sup = sup.max((eval_maxout_layer(&fit, &[x])?[0] - x * x).abs());
        }
        let (n, c, diam) = (1.0, 2.0, 2.0);
        let corollary = 72.0 * n * (t * t) as f64 * c * diam * (p as f64).powf(-2.0 / (n * t as f64));
        let target = 1.0 / (p * p) as f64;
        if sup > target || sup > corollary {
            problems.push(format!("p={p}: sup error {sup:.3e} vs 1/p^2 {target:.3e}"));
        }
        let lifted = lift_tokenwise(&fit, t)?;
        let compiled = compile_general(&SpecDocument::MaxoutLayer(lifted.clone()), &domain, &CompileOptions::default())?;
        let err = exact(&compiled, &lifted, &domain, 1000, seed + p as u64)?;
        if err > DEFAULT_TOL || !compiled.report.audit.within_budget {
            problems.push(format!("p={p}: compiled deviation {err:.2e}"));
        }
        summary.push(format!("p={p} sup {sup:.2e}"));
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{}; compiled fits exact", summary.join(", "))
        } else {
            problems.join("; ")
        },
    )
}

fn relu_pair() -> Result<CpwlPairSpec<f64>> {
    let unit = |k: usize, sign: f64| {
        let mut w = Matrix::zeros(2, 2);
        w.set(0, k, sign);
        w
    };
    let layer = |sign: f64| MaxoutLayerSpec::new(vec![unit(0, sign), unit(1, sign)], vec![vec![0.0; 2]; 2]);
    Ok(CpwlPairSpec { g: layer(1.0)?, h: layer(-1.0)? })
}

fn cpwl(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/10");
    let (mut worst, mut failures) = (0.0f64, 0);
    for k in 0..11u64 {
        let (pair, domain) = if k == 0 {
            (relu_pair()?, unit_box(1, 2)?)
        } else {
            let dims = Dims {
                n: rng.gen_range(1..=2),
                t: 2,
                p: rng.gen_range(1..=4),
                m: rng.gen_range(1..=2),
                depth: 1,
            };
            (random_pair(dims, seed ^ (600 + k))?, unit_box(dims.n, 2)?)
        };
        let compiled = compile_cpwl(&pair, &domain, &CompileOptions::default())?;
        let err = exact(&compiled, &pair, &domain, 1000, seed + k)?;
        worst = worst.max(err);
        failures += usize::from(err > DEFAULT_TOL);
    }
    outcome(
        failures == 0,
        format!("max(x,0) - max(-x,0) and 10 random pairs, {failures} failing, worst scaled error {worst:.2e}"),
    )
}

fn region_formulas() -> Result<Outcome> {
    let maxout: Vec<BigUint> = vec![
        maxout_region_lower_bound(1, &[1], 2, 1)?,
        maxout_region_lower_bound(1, &[2], 3, 1)?,
        maxout_region_lower_bound(1, &[2, 1], 2, 1)?,
    ];
    let transformer = vec![
        transformer_region_lower_bound(1, 1, 2, 6, 1)?,
        transformer_region_lower_bound(1, 2, 2, 9, 2)?,
    ];
    let mut monotone = true;
    for (n, m, t, q) in [(1, 1, 2, 1), (1, 2, 2, 2), (2, 2, 3, 3), (2, 4, 2, 2)] {
        let values = (3..=30)
            .map(|d| transformer_region_lower_bound(n, m, t, d, q))
            .collect::<Result<Vec<_>>>()?;
        monotone &= values.windows(2).all(|w| w[1] >= w[0]);
        monotone &= values.windows(4).all(|w| w[0] < w[3]);
    }
    let as_u64 = |v: &[BigUint]| v.iter().map(|x| x.to_u64().unwrap_or(u64::MAX)).collect::<Vec<_>>();
    let (a, b) = (as_u64(&maxout), as_u64(&transformer));
    outcome(
        a == [2, 5, 6] && b == [9, 891] && monotone,
        format!("maxout {a:?}, transformer {b:?}, monotone in D: {monotone}"),
    )
}

fn line_slice(rng: &mut Rng, domain: &DomainBox) -> Result<Slice> {
    let len = domain.n * domain.t;
    let base: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.5..=0.5)).collect();
    let mut dir: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let norm = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    dir.iter_mut().for_each(|x| *x /= norm);
    Ok(Slice::line(
        devectorize(&base, domain.n, domain.t)?,
        devectorize(&dir, domain.n, domain.t)?,
        [-0.5, 0.5],
        64,
    ))
}

fn region_counting(seed: u64) -> Result<Outcome> {
    let mut rng = substream(seed, "selftest/12");
    let mut mismatches = Vec::new();
    let mut counts = Vec::new();
    for k in 0..10u64 {
        let dims = shallow_dims(&mut rng);
        let domain = unit_box(dims.n, dims.t)?;
        let (compiled, oracle): (Compiled, Box<dyn VectorFunction<f64> + Sync>) = if k % 2 == 0 {
            let f = random_layer_spec(dims, seed ^ (700 + k))?;
            (compile_maxout_layer_seq(&f, &domain, &CompileOptions::default())?, Box::new(f))
        } else {
            let deep = Dims { depth: 2, p: dims.p.min(2), ..dims };
            let f = random_deep_spec(deep, seed ^ (700 + k))?;
            (compile_deep_maxout(&f, &domain, &CompileOptions::default())?, Box::new(f))
        };
        let slice = line_slice(&mut rng, &domain)?;
        let net = NetFunction::new(&compiled.net, AttentionMode::Hardmax);
        let a = count_regions_1d(&net, &slice)?.count;
        let b = count_regions_1d(oracle.as_ref(), &slice)?.count;
        counts.push(b);
        if a != b {
            mismatches.push(format!("net {k}: {a} vs oracle {b}"));
        }
    }
    let mut lines_ok = true;
    for k in 1..=6usize {
        // Tangents of a parabola: distinct slopes, each maximal on its own interval.
        let pts: Vec<f64> = (0..k).map(|i| -0.9 + 1.8 * (i as f64 + 0.5) / k as f64).collect();
        let f = from_fn(1, 1, move |x: &[f64]| {
            vec![pts.iter().map(|c| 2.0 * c * x[0] - c * c).fold(f64::NEG_INFINITY, f64::max)]
        });
        let one = |v| devectorize(&[v], 1, 1);
        let slice = Slice::line(one(0.0)?, one(1.0)?, [-1.0, 1.0], 64);
        lines_ok &= count_regions_1d(&f, &slice)?.count == k;
    }
    outcome(
        mismatches.is_empty() && lines_ok,
        format!(
            "net/oracle counts {counts:?}{}; max of k lines = k for k <= 6: {lines_ok}",
            if mismatches.is_empty() { String::new() } else { format!(" mismatches {}", mismatches.join(", ")) }
        ),
    )
}

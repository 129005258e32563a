//! Executable checks for compiled networks: exact agreement under hardmax,
//! the softmax convergence rate, the softmax-max gap, Lipschitz estimates,
//! architecture budgets and the intermediate token shifts.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{BudgetAudit, BudgetDims, ShiftProbe, TheoremId, REPORT_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::maxout_eval::{devectorize, VectorFunction};
use crate::netspec::DomainBox;
use crate::regions::line_breakpoints;
use crate::rng::{substream, Rng};
use crate::transformer::{attn_activation, transformer_trace, AttentionMode, NetFunction, TransformerNet};

pub const DEFAULT_TOL: f64 = 1e-9;
/// Share of samples drawn next to the faces of the box.
pub const BOUNDARY_FRACTION: f64 = 0.1;
/// Errors below this are treated as exact zeros in the log-log fit.
pub const FIT_FLOOR: f64 = 1e-12;
const LEMMA_SLACK: f64 = 1e-12;
const TIE_LINES: usize = 12;
const TIE_OFFSETS: [f64; 3] = [0.64, 1.28, 2.56];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub check: String,
    pub max_abs_error: f64,
    /// `max |net - oracle| / (1 + |oracle|)`; `passed` compares this one.
    pub max_scaled_error: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub seed: u64,
    pub per_token_errors: Vec<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn new(check: &str, tolerance: f64, samples: usize, seed: u64) -> Self {
        VerificationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            check: check.into(),
            max_abs_error: 0.0,
            max_scaled_error: 0.0,
            tolerance,
            samples,
            seed,
            per_token_errors: Vec::new(),
            passed: false,
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub schema_version: u32,
    pub lambdas: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `ln error` against `ln lambda`; `None` when fewer
    /// than two errors clear the float floor.
    pub fitted_slope: Option<f64>,
    /// Adjacent pairs whose error grows with `lambda`.
    pub monotone_violations: usize,
    /// Smallest `lambda` from which every local slope lies in `[-1.25, -0.75]`.
    pub regime_start: Option<f64>,
    pub samples: usize,
    pub tie_points: usize,
    pub seed: u64,
    pub notes: Vec<String>,
}

impl LambdaSweep {
    /// Slope at most `max_slope` over every requested `lambda`, with at most 5%
    /// of adjacent pairs out of order.
    pub fn meets_rate(&self, max_slope: f64, requested: usize) -> bool {
        let pairs = self.errors.len().saturating_sub(1).max(1);
        self.errors.len() == requested
            && self.fitted_slope.is_some_and(|s| s <= max_slope)
            && self.monotone_violations as f64 <= 0.05 * pairs as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }
}

fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return precondition(format!(
            "tolerance must be positive and finite, got {tol}; exact float equality is not attainable"
        ));
    }
    Ok(())
}

fn uniform_point(rng: &mut Rng, domain: &DomainBox) -> Vec<f64> {
    (0..domain.n * domain.t)
        .map(|_| rng.gen_range(domain.a..=domain.b))
        .collect()
}

/// Every coordinate lies within `delta/10` of a face with probability 1/2.
fn boundary_point(rng: &mut Rng, domain: &DomainBox) -> Vec<f64> {
    let band = (domain.delta / 10.0).min(domain.width());
    (0..domain.n * domain.t)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..=band);
            match rng.gen_range(0..4) {
                0 => domain.a + u,
                1 => domain.b - u,
                _ => rng.gen_range(domain.a..=domain.b),
            }
        })
        .collect()
}

/// `samples` flattened inputs: uniform, with a tenth pushed to the faces.
pub fn sample_points(domain: &DomainBox, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, "verify/samples");
    let boundary = (samples as f64 * BOUNDARY_FRACTION).round() as usize;
    (0..samples)
        .map(|i| {
            if i < samples - boundary {
                uniform_point(&mut rng, domain)
            } else {
                boundary_point(&mut rng, domain)
            }
        })
        .collect()
}

struct Deviation {
    abs: f64,
    scaled: f64,
    per_token: Vec<f64>,
}

fn deviation(got: &[f64], want: &[f64], m: usize, t: usize) -> Deviation {
    let mut d = Deviation {
        abs: 0.0,
        scaled: 0.0,
        per_token: vec![0.0; t],
    };
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        let e = (g - w).abs();
        d.abs = d.abs.max(e);
        d.scaled = d.scaled.max(e / (1.0 + w.abs()));
        d.per_token[i / m] = d.per_token[i / m].max(e);
    }
    d
}

fn check_shapes(net: &TransformerNet<f64>, oracle: &dyn VectorFunction<f64>, domain: &DomainBox) -> Result<()> {
    let meta = &net.meta;
    if (meta.n, meta.t) != (domain.n, domain.t) {
        return Err(Error::Shape(format!(
            "net takes {}x{} inputs, box is {}x{}",
            meta.n, meta.t, domain.n, domain.t
        )));
    }
    if oracle.in_dim() != meta.n * meta.t || oracle.out_dim() != meta.m * meta.t {
        return Err(Error::Shape(format!(
            "oracle maps {} -> {}, net maps {} -> {}",
            oracle.in_dim(),
            oracle.out_dim(),
            meta.n * meta.t,
            meta.m * meta.t
        )));
    }
    Ok(())
}

fn sup_deviation(
    candidate: &(dyn VectorFunction<f64> + Sync),
    oracle: &(dyn VectorFunction<f64> + Sync),
    points: &[Vec<f64>],
    m: usize,
    t: usize,
) -> Result<Deviation> {
    let all = points
        .par_iter()
        .map(|x| Ok(deviation(&candidate.eval(x)?, &oracle.eval(x)?, m, t)))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Deviation {
        abs: 0.0,
        scaled: 0.0,
        per_token: vec![0.0; t],
    };
    for d in all {
        total.abs = total.abs.max(d.abs);
        total.scaled = total.scaled.max(d.scaled);
        for (a, b) in total.per_token.iter_mut().zip(d.per_token) {
            *a = a.max(b);
        }
    }
    Ok(total)
}

/// Hardmax output against `oracle` on sampled points of the box.
pub fn check_exact_equivalence(
    net: &TransformerNet<f64>,
    oracle: &(dyn VectorFunction<f64> + Sync),
    domain: &DomainBox,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<VerificationReport> {
    check_equivalence(net, oracle, domain, samples, tol, seed, AttentionMode::Hardmax)
}

/// [`check_exact_equivalence`] under an arbitrary attention mode.
pub fn check_equivalence(
    net: &TransformerNet<f64>,
    oracle: &(dyn VectorFunction<f64> + Sync),
    domain: &DomainBox,
    samples: usize,
    tol: f64,
    seed: u64,
    mode: AttentionMode,
) -> Result<VerificationReport> {
    if samples == 0 {
        return precondition("samples must be positive");
    }
    check_tol(tol)?;
    domain.validate()?;
    check_shapes(net, oracle, domain)?;
    let points = sample_points(domain, samples, seed);
    let candidate = NetFunction::new(net, mode);
    let dev = sup_deviation(&candidate, oracle, &points, net.meta.m, net.meta.t)?;
    let check = match mode {
        AttentionMode::Hardmax => "exact_equivalence",
        AttentionMode::Softmax { .. } => "softmax_equivalence",
    };
    let mut report = VerificationReport::new(check, tol, samples, seed);
    report.max_abs_error = dev.abs;
    report.max_scaled_error = dev.scaled;
    report.per_token_errors = dev.per_token;
    report.passed = dev.scaled <= tol;
    if let AttentionMode::Softmax { lambda } = mode {
        report.notes.push(format!("softmax attention, lambda={lambda}"));
    }
    Ok(report)
}

fn random_direction(rng: &mut Rng, len: usize) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm > 1e-3 {
            return u.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Parameter range of `x0 + s u` inside the box.
fn line_span(x0: &[f64], u: &[f64], domain: &DomainBox) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&x, &d) in x0.iter().zip(u) {
        if d != 0.0 {
            let (s1, s2) = ((domain.a - x) / d, (domain.b - x) / d);
            lo = lo.max(s1.min(s2));
            hi = hi.min(s1.max(s2));
        }
    }
    (lo, hi)
}

struct Kink {
    point: Vec<f64>,
    dir: Vec<f64>,
    /// Sup-norm jump of the directional slope across the kink.
    jump: f64,
}

/// Kinks of the oracle along random lines through the box.
fn oracle_kinks(oracle: &(dyn VectorFunction<f64> + Sync), domain: &DomainBox, seed: u64) -> Result<Vec<Kink>> {
    let mut rng = substream(seed, "verify/ties");
    let mut kinks = Vec::new();
    for _ in 0..TIE_LINES {
        let x0 = uniform_point(&mut rng, domain);
        let u = random_direction(&mut rng, x0.len());
        let (lo, hi) = line_span(&x0, &u, domain);
        let at = |s: f64| -> Vec<f64> { x0.iter().zip(&u).map(|(x, d)| x + s * d).collect() };
        let g = |s: f64| oracle.eval(&at(s));
        for s in line_breakpoints(&g, lo, hi, 64)?.points {
            let eps = 1e-6 * (hi - lo);
            if s - eps < lo || s + eps > hi {
                continue;
            }
            let (l, c, r) = (g(s - eps)?, g(s)?, g(s + eps)?);
            let jump = (0..c.len())
                .map(|k| ((r[k] - c[k]) - (c[k] - l[k])).abs() / eps)
                .fold(0.0, f64::max);
            if jump > 0.0 {
                kinks.push(Kink {
                    point: at(s),
                    dir: u.clone(),
                    jump,
                });
            }
        }
    }
    Ok(kinks)
}

/// Points at distance `c / (lambda * jump)` on both sides of every kink, where
/// softmax smoothing of a tie is largest.
fn tie_points(kinks: &[Kink], lambda: f64, domain: &DomainBox) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for k in kinks {
        for c in TIE_OFFSETS {
            for sign in [-1.0, 1.0] {
                let h = sign * c / (lambda * k.jump);
                let x: Vec<f64> = k.point.iter().zip(&k.dir).map(|(x, d)| x + h * d).collect();
                if x.iter().all(|v| (domain.a..=domain.b).contains(v)) {
                    out.push(x);
                }
            }
        }
    }
    out
}

/// Least-squares slope of `ln y` on `ln x`, ignoring `y` below the float floor.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &e)| e >= FIT_FLOOR)
        .map(|(&l, &e)| (l.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn regime_start(lambdas: &[f64], errors: &[f64]) -> Option<f64> {
    let local: Vec<bool> = lambdas
        .windows(2)
        .zip(errors.windows(2))
        .map(|(l, e)| {
            if e[0] < FIT_FLOOR || e[1] < FIT_FLOOR {
                return false;
            }
            let s = (e[1] / e[0]).ln() / (l[1] / l[0]).ln();
            (-1.25..=-0.75).contains(&s)
        })
        .collect();
    let first = local.iter().rposition(|ok| !ok).map_or(0, |i| i + 1);
    (first < local.len()).then(|| lambdas[first])
}

/// Sup error of the softmax network against `oracle` for every `lambda`.
///
/// Besides `samples` box points, each `lambda` is probed next to kinks of the
/// oracle found along random lines, where the softmax error peaks.
pub fn measure_softmax_error(
    net: &TransformerNet<f64>,
    oracle: &(dyn VectorFunction<f64> + Sync),
    domain: &DomainBox,
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<LambdaSweep> {
    if lambdas.len() < 3 {
        return precondition(format!("need at least 3 lambdas, got {}", lambdas.len()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return precondition("lambdas must be positive and finite");
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return precondition("lambdas must be strictly increasing");
    }
    if lambdas[lambdas.len() - 1] < 100.0 * lambdas[0] {
        return precondition("lambdas must span at least two decades");
    }
    if samples == 0 {
        return precondition("samples must be positive");
    }
    domain.validate()?;
    check_shapes(net, oracle, domain)?;
    let base = sample_points(domain, samples, seed);
    let kinks = oracle_kinks(oracle, domain, seed)?;
    let mut sweep = LambdaSweep {
        schema_version: REPORT_SCHEMA_VERSION,
        lambdas: Vec::new(),
        errors: Vec::new(),
        fitted_slope: None,
        monotone_violations: 0,
        regime_start: None,
        samples,
        tie_points: 0,
        seed,
        notes: Vec::new(),
    };
    for &lambda in lambdas {
        let mut points = base.clone();
        let ties = tie_points(&kinks, lambda, domain);
        sweep.tie_points += ties.len();
        points.extend(ties);
        let soft = NetFunction::new(net, AttentionMode::softmax(lambda)?);
        match sup_deviation(&soft, oracle, &points, net.meta.m, net.meta.t) {
            Ok(dev) => {
                sweep.lambdas.push(lambda);
                sweep.errors.push(dev.abs);
            }
            Err(Error::NonFinite { block }) => sweep.notes.push(format!(
                "lambda={lambda}: non-finite state after block {block}; point dropped"
            )),
            Err(e) => return Err(e),
        }
    }
    sweep.monotone_violations = sweep.errors.windows(2).filter(|e| e[1] > e[0]).count();
    sweep.fitted_slope = log_log_slope(&sweep.lambdas, &sweep.errors);
    sweep.regime_start = regime_start(&sweep.lambdas, &sweep.errors);
    if sweep.fitted_slope.is_none() {
        sweep.notes.push(format!(
            "errors below {FIT_FLOOR:e} at all but at most one lambda; slope undefined"
        ));
    }
    if kinks.is_empty() {
        sweep.notes.push("oracle has no kinks on the probe lines".into());
    }
    Ok(sweep)
}

/// Monte Carlo check of `|x . softmax(lambda x) - max x| <= d / (e lambda)`.
pub fn check_softmax_max_bound(d: usize, lambda: f64, trials: usize, seed: u64) -> Result<VerificationReport> {
    if d == 0 {
        return precondition("dimension must be at least 1");
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return precondition(format!("lambda must be positive, got {lambda}"));
    }
    let bound = d as f64 / (std::f64::consts::E * lambda);
    let mode = AttentionMode::softmax(lambda)?;
    let mut rng = substream(seed, &format!("verify/softmax-max/{d}/{lambda}"));
    let mut report = VerificationReport::new("softmax_max_bound", bound, trials, seed);
    let mut violations = 0usize;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..=10.0)).collect();
        let gap = softmax_max_gap(&x, mode);
        report.max_abs_error = report.max_abs_error.max(gap);
        worst_ratio = worst_ratio.max(gap / bound);
        if gap > bound + LEMMA_SLACK {
            violations += 1;
        }
    }
    report.max_scaled_error = worst_ratio;
    report.passed = violations == 0;
    report.notes.push(format!("{violations} violation(s); largest gap/bound {worst_ratio:.6}"));
    Ok(report)
}

/// `|x . softmax(x) - max x|` under the given attention mode.
pub fn softmax_max_gap(x: &[f64], mode: AttentionMode) -> f64 {
    let weights = attn_activation(x, mode);
    let mix: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum();
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mix - max).abs()
}

/// Largest observed `|f(x1) - f(x2)|_inf / |x1 - x2|_inf` over random pairs
/// and antithetic near-pairs; a lower bound on the Lipschitz constant.
pub fn estimate_lipschitz(
    f: &(dyn VectorFunction<f64> + Sync),
    domain: &DomainBox,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return precondition("samples must be positive");
    }
    domain.validate()?;
    let len = domain.n * domain.t;
    if f.in_dim() != len {
        return Err(Error::Shape(format!(
            "function takes {} inputs, box has {len}",
            f.in_dim()
        )));
    }
    let eps = 1e-3 * domain.width();
    let mut rng = substream(seed, "verify/lipschitz");
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|i| {
            if i % 2 == 0 {
                (uniform_point(&mut rng, domain), uniform_point(&mut rng, domain))
            } else {
                let u = random_direction(&mut rng, len);
                let x: Vec<f64> = (0..len)
                    .map(|_| rng.gen_range(domain.a + eps..=domain.b - eps))
                    .collect();
                let minus = x.iter().zip(&u).map(|(x, d)| x - eps * d).collect();
                let plus = x.iter().zip(&u).map(|(x, d)| x + eps * d).collect();
                (minus, plus)
            }
        })
        .collect();
    let ratios = pairs
        .par_iter()
        .map(|(x1, x2)| {
            let dx = x1.iter().zip(x2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if dx == 0.0 {
                return Ok(0.0);
            }
            let (f1, f2) = (f.eval(x1)?, f.eval(x2)?);
            let df = f1.iter().zip(&f2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            Ok(df / dx)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Compare the measured architecture of `net` with the stated budget.
pub fn check_architecture_budget(net: &TransformerNet<f64>, theorem_id: TheoremId, dims: BudgetDims) -> BudgetAudit {
    BudgetAudit::new(theorem_id, dims, net.architecture())
}

/// Intermediate rows recorded by the compiler stay inside their shifted
/// token intervals.
pub fn check_shift_probes(
    net: &TransformerNet<f64>,
    probes: &[ShiftProbe],
    domain: &DomainBox,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<VerificationReport> {
    if samples == 0 {
        return precondition("samples must be positive");
    }
    check_tol(tol)?;
    let points = sample_points(domain, samples, seed);
    let excess = points
        .par_iter()
        .map(|v| {
            let x = devectorize(v, domain.n, domain.t)?;
            let states = transformer_trace(net, &x, AttentionMode::Hardmax)?;
            let mut worst: f64 = 0.0;
            for probe in probes {
                let state = states.get(probe.state).ok_or_else(|| {
                    Error::Shape(format!("probe refers to state {} of {}", probe.state, states.len()))
                })?;
                for &row in &probe.rows {
                    for c in 0..=domain.t {
                        let (lo, hi) = probe.geometry.interval(c);
                        let v = *state.get(row, c);
                        worst = worst.max(lo - v).max(v - hi);
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut report = VerificationReport::new("shift_probes", tol, samples, seed);
    report.max_abs_error = excess.into_iter().fold(0.0, f64::max);
    report.max_scaled_error = report.max_abs_error;
    report.passed = report.max_abs_error <= tol;
    report.notes.push(format!("{} probe(s)", probes.len()));
    Ok(report)
}

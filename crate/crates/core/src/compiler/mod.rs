//! Synthesis of Transformer weights that reproduce maxout, ReLU and CPWL
//! networks exactly under hardmax attention.
//!
//! Hidden states have width `d = d' + T + 1`: `d'` working rows followed by
//! one one-hot row per column. Column `T` is the auxiliary token.

mod budget;
mod build;
mod decompose;
mod fit;
mod plan;

use serde::{Deserialize, Serialize};

pub use budget::{theorem_budget, tournament_rounds, BudgetAudit, BudgetDims, TheoremId};
pub use build::{
    build_positional_embedding, build_region_selector_ff, Geometry, RegionSelector,
    SelectorGeometry,
};
pub use decompose::{decompose_rank, tournament_chunks};
pub use fit::{lift_tokenwise, max_affine_fit};
pub use plan::ShiftProbe;

use build::Layout;
use plan::{emit, layer_pieces, readout_matrix, Piece, Readout, Slot, Stage, Unit};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netspec::{
    CpwlPairSpec, DeepMaxoutSpec, DomainBox, MaxoutLayerSpec, ReluNetSpec, SpecDocument,
};
use crate::transformer::{AttentionMode, NetMeta, TransformerNet};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Smallest layer bound used for token shifts, so shifted intervals never collapse.
const MIN_LAYER_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    /// Tournament width for ranks above `T`; defaults to `T`.
    pub s: Option<usize>,
    pub mode: AttentionMode,
    /// Token separation per layer; defaults to `M_l / (T + 1)`.
    pub delta_schedule: Option<Vec<f64>>,
    pub alpha_margin: f64,
    /// Zero the scratch rows after the last stage instead of leaving them
    /// for the readout to ignore. Defaults to true for multi-stage compiles.
    pub cancel_scratch: Option<bool>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            s: None,
            mode: AttentionMode::Hardmax,
            delta_schedule: None,
            alpha_margin: 1.0,
            cancel_scratch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub schema_version: u32,
    pub theorem_id: TheoremId,
    pub audit: BudgetAudit,
    pub s: usize,
    pub mode: AttentionMode,
    /// `max |x|` over the box.
    pub m1: f64,
    /// Largest row-sum norm or bias magnitude over all maxout units.
    pub m2: f64,
    /// Output bound `M_l` of every layer.
    pub layer_bounds: Vec<f64>,
    /// Token separation of every shifted layer.
    pub delta_schedule: Vec<f64>,
    /// Masking offset of every max block.
    pub alphas: Vec<f64>,
    pub alpha_margin: f64,
    pub probes: Vec<ShiftProbe>,
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub net: TransformerNet<f64>,
    pub report: CompileReport,
}

/// Per-token view of one sequence layer.
struct SeqLayer<'a> {
    spec: &'a MaxoutLayerSpec<f64>,
    n: usize,
    m: usize,
    bound: f64,
    delta: f64,
}

fn per_token(total: usize, t: usize, what: &str) -> Result<usize> {
    if total == 0 || total % t != 0 {
        return Err(Error::Shape(format!(
            "{what} has {total} coordinates, not a multiple of T={t}"
        )));
    }
    Ok(total / t)
}

fn tournament_width(options: &CompileOptions, t: usize) -> Result<usize> {
    match options.s {
        Some(s) if s < 2 => Err(Error::Validation(format!(
            "tournament width s={s} must be at least 2"
        ))),
        Some(s) => Ok(s.min(t)),
        None => Ok(t),
    }
}

fn seq_layers<'a>(
    specs: &[&'a MaxoutLayerSpec<f64>],
    domain: &DomainBox,
    options: &CompileOptions,
    single_token: bool,
) -> Result<Vec<SeqLayer<'a>>> {
    let t = domain.t;
    let mut layers = Vec::new();
    let mut input_bound = domain.sup_norm();
    let mut n = domain.n;
    for (l, spec) in specs.iter().enumerate() {
        if spec.n_in != n * t {
            return Err(Error::Shape(format!(
                "layer {l} expects {} inputs, sequence provides {}x{t}",
                spec.n_in, n
            )));
        }
        let m = if single_token {
            spec.m_out
        } else {
            per_token(spec.m_out, t, &format!("layer {l} output"))?
        };
        let bound = spec.output_bound(input_bound).max(MIN_LAYER_BOUND);
        let limit = 2.0 * bound / (t as f64 + 1.0);
        let delta = match &options.delta_schedule {
            Some(schedule) => *schedule.get(l).ok_or_else(|| {
                Error::Validation(format!("delta schedule has no entry for layer {l}"))
            })?,
            None => bound / (t as f64 + 1.0),
        };
        if !(delta > 0.0 && delta < limit) {
            return Err(Error::Validation(format!(
                "delta_{l}={delta} outside (0, 2 M_l/(T+1)) = (0, {limit})"
            )));
        }
        layers.push(SeqLayer {
            spec,
            n,
            m,
            bound,
            delta,
        });
        input_bound = bound;
        n = m;
    }
    Ok(layers)
}

fn box_slots(domain: &DomainBox) -> Vec<Slot> {
    let geom = Geometry::from_box(domain);
    (0..domain.n)
        .map(|row| Slot {
            row,
            geom: geom.clone(),
        })
        .collect()
}

struct Plan {
    stages: Vec<Stage>,
    out_rows: Vec<usize>,
    out_slots: Vec<Slot>,
    d_prime: usize,
    deltas: Vec<f64>,
    lead_block: bool,
}

/// One stage per layer; scratch rows start at row 0 and reuse the rows of the
/// previous stage's input, which is cancelled in the first block.
fn plan_overlap(
    layers: &[SeqLayer],
    domain: &DomainBox,
    token: Option<usize>,
    shift_last: bool,
    cancel_last: bool,
    first_alpha: f64,
) -> Plan {
    let t = domain.t;
    let mut slots = box_slots(domain);
    let mut stages = Vec::new();
    let mut d_prime = domain.n;
    let mut deltas = Vec::new();
    let mut out_rows = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let last = l + 1 == layers.len();
        let shift = (!last || shift_last).then(|| Geometry::shifted(layer.bound, layer.delta, t));
        if shift.is_some() {
            deltas.push(layer.delta);
        }
        let tokens: Vec<usize> = match token {
            Some(k) => vec![k],
            None => (0..t).collect(),
        };
        let aux = usize::from(shift.is_some());
        let p = layer.spec.p;
        let y_count = tokens.len() * layer.m * p + aux * layer.m;
        let z0 = y_count;
        let u0 = z0 + (tokens.len() + aux) * layer.m;
        let mut units = Vec::new();
        for &k in &tokens {
            let offset = shift.as_ref().map_or(0.0, |g| g.shifts[k]);
            for i in 0..layer.m {
                let index = if token.is_some() { i } else { k * layer.m + i };
                units.push(Unit {
                    col: k,
                    out_row: u0 + i,
                    pieces: layer_pieces(layer.spec, index, layer.n, 0, 0..p, offset),
                });
            }
        }
        if let Some(g) = &shift {
            for i in 0..layer.m {
                units.push(Unit {
                    col: t,
                    out_row: u0 + i,
                    pieces: vec![Piece::constant(g.shifts[t])],
                });
            }
        }
        let stage = Stage {
            cancel_in: slots.iter().map(|s| s.row).collect(),
            slots,
            units,
            y0: 0,
            z0,
            cancel_scratch: !last || cancel_last,
            min_alpha: if l == 0 { first_alpha } else { 0.0 },
            probe: shift.clone(),
        };
        d_prime = d_prime.max(stage.rows_end());
        stages.push(stage);
        let geom = shift.unwrap_or_else(|| Geometry::shifted(layer.bound, layer.delta, t));
        out_rows = (u0..u0 + layer.m).collect();
        slots = out_rows
            .iter()
            .map(|&row| Slot {
                row,
                geom: geom.clone(),
            })
            .collect();
    }
    Plan {
        stages,
        out_rows,
        out_slots: slots,
        d_prime,
        deltas,
        lead_block: false,
    }
}

/// Tournament stages. The layer input stays in carry rows `0..c` while
/// running maxima pass through the machinery rows above; the last stage of an
/// intermediate layer writes its output back into the carry rows.
fn plan_carry(layers: &[SeqLayer], domain: &DomainBox, s: usize, cancel_last: bool) -> Plan {
    let t = domain.t;
    let depth = layers.len();
    let carry = layers[..depth - 1]
        .iter()
        .map(|l| l.m)
        .fold(domain.n, usize::max);
    let mut scratch = 0;
    for (l, layer) in layers.iter().enumerate() {
        let chunks = tournament_chunks(layer.spec.p, s);
        for (r, chunk) in chunks.iter().enumerate() {
            let fin = l + 1 == depth && r + 1 == chunks.len();
            let aux = usize::from(!fin);
            let pieces = chunk.len() + usize::from(r > 0);
            let y = t * layer.m * pieces + aux * layer.m;
            let z = (t + aux) * layer.m;
            scratch = scratch.max(y + z);
        }
    }
    let u0 = carry + scratch;
    let mut stages = Vec::new();
    let mut deltas = Vec::new();
    let mut carry_slots = box_slots(domain);
    let mut out_rows = Vec::new();
    let mut d_prime = carry;
    for (l, layer) in layers.iter().enumerate() {
        let run = Geometry::shifted(layer.bound, layer.delta, t);
        let chunks = tournament_chunks(layer.spec.p, s);
        let last_layer = l + 1 == depth;
        if !(last_layer && chunks.len() == 1) {
            deltas.push(layer.delta);
        }
        let running: Vec<Slot> = (0..layer.m)
            .map(|i| Slot {
                row: u0 + i,
                geom: run.clone(),
            })
            .collect();
        for (r, chunk) in chunks.iter().enumerate() {
            let last_sub = r + 1 == chunks.len();
            let fin = last_layer && last_sub;
            let shift = (!fin).then(|| run.clone());
            let mut slots = carry_slots.clone();
            let mut cancel_in = Vec::new();
            if r > 0 {
                slots.extend(running.iter().cloned());
                cancel_in.extend(running.iter().map(|s| s.row));
            }
            let to_carry = last_sub && !last_layer;
            if to_carry {
                cancel_in.extend(carry_slots.iter().map(|s| s.row));
            }
            let out_row = |i: usize| if to_carry { i } else { u0 + i };
            let mut units = Vec::new();
            for k in 0..t {
                let offset = shift.as_ref().map_or(0.0, |g| g.shifts[k]);
                for i in 0..layer.m {
                    let mut pieces = Vec::new();
                    if r > 0 {
                        pieces.push(Piece {
                            terms: vec![(k, carry_slots.len() + i, 1.0)],
                            bias: offset,
                        });
                    }
                    pieces.extend(layer_pieces(
                        layer.spec,
                        k * layer.m + i,
                        layer.n,
                        0,
                        chunk.clone(),
                        offset,
                    ));
                    units.push(Unit {
                        col: k,
                        out_row: out_row(i),
                        pieces,
                    });
                }
            }
            if let Some(g) = &shift {
                for i in 0..layer.m {
                    units.push(Unit {
                        col: t,
                        out_row: out_row(i),
                        pieces: vec![Piece::constant(g.shifts[t])],
                    });
                }
            }
            let y_count: usize = units.iter().map(|u| u.pieces.len()).sum();
            let stage = Stage {
                slots,
                units,
                cancel_in,
                y0: carry,
                z0: carry + y_count,
                cancel_scratch: !fin || cancel_last,
                min_alpha: 0.0,
                probe: shift,
            };
            d_prime = d_prime.max(stage.rows_end());
            stages.push(stage);
            if fin {
                out_rows = (u0..u0 + layer.m).collect();
            }
        }
        carry_slots = (0..layer.m)
            .map(|row| Slot {
                row,
                geom: run.clone(),
            })
            .collect();
    }
    Plan {
        stages,
        out_rows,
        out_slots: vec![],
        d_prime,
        deltas,
        lead_block: false,
    }
}

struct Assembly<'a> {
    domain: &'a DomainBox,
    options: &'a CompileOptions,
    plan: Plan,
    readout: Option<Readout>,
    taps: Vec<Vec<(usize, f64)>>,
    m: usize,
    theorem_id: TheoremId,
    dims: BudgetDims,
    s: usize,
    m2: f64,
    bounds: Vec<f64>,
}

fn assemble(a: Assembly) -> Result<Compiled> {
    let t = a.domain.t;
    let d = a.plan.d_prime.max(a.domain.n) + t + 1;
    let layout = Layout { d, t };
    let emitted = emit(
        &layout,
        &a.plan.stages,
        a.plan.lead_block,
        a.readout.as_ref(),
        a.options.alpha_margin,
    );
    let (embed_a, embed_b) = build_positional_embedding(a.domain, d)?;
    let net = TransformerNet {
        embed_a,
        embed_b,
        blocks: emitted.blocks,
        readout_c: readout_matrix(a.m, d, &a.taps),
        meta: NetMeta {
            n: a.domain.n,
            m: a.m,
            t,
            uses_aux_token: true,
            domain: Some(*a.domain),
        },
    };
    net.validate()?;
    if emitted.alphas.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition(
            "masking offset overflows; weight or box bounds are too large".into(),
        ));
    }
    let audit = BudgetAudit::new(a.theorem_id, a.dims, net.architecture());
    let report = CompileReport {
        schema_version: REPORT_SCHEMA_VERSION,
        theorem_id: a.theorem_id,
        audit,
        s: a.s,
        mode: a.options.mode,
        m1: a.domain.sup_norm(),
        m2: a.m2,
        layer_bounds: a.bounds,
        delta_schedule: a.plan.deltas,
        alphas: emitted.alphas,
        alpha_margin: a.options.alpha_margin,
        probes: emitted.probes,
    };
    Ok(Compiled { net, report })
}

/// Masking offset `2 (M1 + 1) M2 + 1 + margin` for a single unshifted layer.
fn shallow_alpha(domain: &DomainBox, spec: &MaxoutLayerSpec<f64>, margin: f64) -> f64 {
    2.0 * (domain.sup_norm() + 1.0) * spec.weight_bound() + 1.0 + margin
}

fn check_rank(spec: &MaxoutLayerSpec<f64>, limit: usize, what: &str) -> Result<()> {
    if spec.p > limit {
        return Err(Error::Precondition(format!(
            "{what} has rank p={} above {limit}",
            spec.p
        )));
    }
    Ok(())
}

fn identity_taps(rows: &[usize]) -> Vec<Vec<(usize, f64)>> {
    rows.iter().map(|&r| vec![(r, 1.0)]).collect()
}

fn max_weight_bound<'a>(specs: impl IntoIterator<Item = &'a MaxoutLayerSpec<f64>>) -> f64 {
    specs
        .into_iter()
        .map(MaxoutLayerSpec::weight_bound)
        .fold(0.0, f64::max)
}

/// Single-token construction: output token `k` equals `f(X)` and every other
/// output token is zero. `f` maps `R^{nT}` to `R^m`.
pub fn compile_maxout_token(
    f: &MaxoutLayerSpec<f64>,
    domain: &DomainBox,
    k: usize,
    options: &CompileOptions,
) -> Result<Compiled> {
    f.validate()?;
    domain.validate()?;
    let t = domain.t;
    if k >= t {
        return Err(Error::Validation(format!("target token {k} outside 0..{t}")));
    }
    check_rank(f, t, "maxout layer")?;
    let layers = seq_layers(&[f], domain, options, true)?;
    let alpha = shallow_alpha(domain, f, options.alpha_margin);
    let plan = plan_overlap(
        &layers,
        domain,
        Some(k),
        false,
        options.cancel_scratch.unwrap_or(false),
        alpha,
    );
    let bounds = vec![layers[0].bound];
    assemble(Assembly {
        domain,
        options,
        taps: identity_taps(&plan.out_rows),
        plan,
        readout: None,
        m: f.m_out,
        theorem_id: TheoremId::ShallowPleT,
        dims: BudgetDims {
            n: domain.n,
            m: f.m_out,
            t,
            p: f.p,
            s: t,
            depth: 1,
        },
        s: t,
        m2: f.weight_bound(),
        bounds,
    })
}

/// Sequence-to-sequence maxout layer `R^{nT} -> R^{mT}` with `p <= T`.
pub fn compile_maxout_layer_seq(
    f: &MaxoutLayerSpec<f64>,
    domain: &DomainBox,
    options: &CompileOptions,
) -> Result<Compiled> {
    f.validate()?;
    domain.validate()?;
    check_rank(f, domain.t, "maxout layer")?;
    compile_shallow(f, domain, options, domain.t, None)
}

/// `Some(m)` reads the stacked rows `i` and `m + i` as `g_i - h_i`.
fn compile_shallow(
    f: &MaxoutLayerSpec<f64>,
    domain: &DomainBox,
    options: &CompileOptions,
    s: usize,
    difference: Option<usize>,
) -> Result<Compiled> {
    let t = domain.t;
    let layers = seq_layers(&[f], domain, options, false)?;
    let m = layers[0].m;
    let bounds = vec![layers[0].bound];
    let (plan, theorem_id) = if f.p <= s {
        let alpha = shallow_alpha(domain, f, options.alpha_margin);
        let cancel = options.cancel_scratch.unwrap_or(false);
        (
            plan_overlap(&layers, domain, None, false, cancel, alpha),
            if s < t {
                TheoremId::ShallowPgtT
            } else {
                TheoremId::ShallowPleT
            },
        )
    } else {
        if s < 2 {
            return Err(Error::Precondition(format!(
                "rank p={} needs T >= 2 to compile",
                f.p
            )));
        }
        let cancel = options.cancel_scratch.unwrap_or(true);
        (plan_carry(&layers, domain, s, cancel), TheoremId::ShallowPgtT)
    };
    let (taps, m, theorem_id) = match difference {
        Some(half) => (
            (0..half)
                .map(|i| vec![(plan.out_rows[i], 1.0), (plan.out_rows[half + i], -1.0)])
                .collect(),
            half,
            TheoremId::Cpwl,
        ),
        None => (identity_taps(&plan.out_rows), m, theorem_id),
    };
    assemble(Assembly {
        domain,
        options,
        taps,
        plan,
        readout: None,
        m,
        theorem_id,
        dims: BudgetDims {
            n: domain.n,
            m,
            t,
            p: f.p,
            s,
            depth: 1,
        },
        s,
        m2: f.weight_bound(),
        bounds,
    })
}

/// Deep maxout network with every rank at most `T`.
pub fn compile_deep_maxout(
    net: &DeepMaxoutSpec<f64>,
    domain: &DomainBox,
    options: &CompileOptions,
) -> Result<Compiled> {
    net.validate()?;
    domain.validate()?;
    for (l, layer) in net.layers.iter().enumerate() {
        check_rank(layer, domain.t, &format!("layer {l}"))?;
    }
    compile_deep(net, domain, options, domain.t)
}

fn compile_deep(
    net: &DeepMaxoutSpec<f64>,
    domain: &DomainBox,
    options: &CompileOptions,
    s: usize,
) -> Result<Compiled> {
    let t = domain.t;
    let specs: Vec<&MaxoutLayerSpec<f64>> = net.layers.iter().collect();
    let layers = seq_layers(&specs, domain, options, false)?;
    let p = net.layers.iter().map(|l| l.p).max().unwrap_or(1);
    let m = layers.iter().map(|l| l.m).max().unwrap_or(1);
    let out_m = layers.last().map_or(0, |l| l.m);
    let bounds = layers.iter().map(|l| l.bound).collect();
    let multi = layers.len() > 1;
    let (plan, theorem_id) = if p <= s {
        let cancel = options.cancel_scratch.unwrap_or(multi);
        let alpha = if multi {
            0.0
        } else {
            shallow_alpha(domain, specs[0], options.alpha_margin)
        };
        (
            plan_overlap(&layers, domain, None, false, cancel, alpha),
            if s < t {
                TheoremId::DeepPgtT
            } else {
                TheoremId::DeepPleT
            },
        )
    } else {
        if s < 2 {
            return Err(Error::Precondition(format!(
                "rank p={p} needs T >= 2 to compile"
            )));
        }
        let cancel = options.cancel_scratch.unwrap_or(true);
        (plan_carry(&layers, domain, s, cancel), TheoremId::DeepPgtT)
    };
    assemble(Assembly {
        domain,
        options,
        taps: identity_taps(&plan.out_rows),
        plan,
        readout: None,
        m: out_m,
        theorem_id,
        dims: BudgetDims {
            n: domain.n,
            m,
            t,
            p,
            s,
            depth: layers.len(),
        },
        s,
        m2: max_weight_bound(specs),
        bounds,
    })
}

/// Hidden ReLU layer as rank-2 maxout units with pieces `{w.x + b, 0}`.
pub fn relu_layer_as_maxout(weight: &Matrix<f64>, bias: &[f64]) -> Result<MaxoutLayerSpec<f64>> {
    let cols = weight.cols();
    let weights = (0..weight.rows())
        .map(|u| Matrix::from_rows(vec![weight.row(u).to_vec(), vec![0.0; cols]]))
        .collect::<Result<Vec<_>>>()?;
    let biases = bias.iter().map(|&b| vec![b, 0.0]).collect();
    MaxoutLayerSpec::new(weights, biases)
}

/// ReLU network: `D` rank-2 stages and one aggregation block for the affine
/// readout, whose region selector shares the last stage's third block.
pub fn compile_relu(
    net: &ReluNetSpec<f64>,
    domain: &DomainBox,
    options: &CompileOptions,
) -> Result<Compiled> {
    net.validate()?;
    domain.validate()?;
    let t = domain.t;
    if t < 2 {
        return Err(Error::Precondition("ReLU compilation needs T >= 2".into()));
    }
    let hidden: Vec<MaxoutLayerSpec<f64>> = net
        .weights
        .iter()
        .zip(&net.biases)
        .map(|(w, b)| relu_layer_as_maxout(w, b))
        .collect::<Result<_>>()?;
    let specs: Vec<&MaxoutLayerSpec<f64>> = hidden.iter().collect();
    let layers = seq_layers(&specs, domain, options, false)?;
    let out_m = per_token(net.m_out(), t, "readout")?;
    if net.n_in() != domain.n * t {
        return Err(Error::Shape(format!(
            "network expects {} inputs, sequence provides {}x{t}",
            net.n_in(),
            domain.n
        )));
    }
    let mut bounds: Vec<f64> = layers.iter().map(|l| l.bound).collect();
    let (mut plan, slots, prev_end, mut cancel) = if layers.is_empty() {
        let slots = box_slots(domain);
        let rows: Vec<usize> = slots.iter().map(|s| s.row).collect();
        let plan = Plan {
            stages: vec![],
            out_rows: vec![],
            out_slots: vec![],
            d_prime: domain.n,
            deltas: vec![],
            lead_block: true,
        };
        (plan, slots, 0, rows)
    } else {
        let plan = plan_overlap(&layers, domain, None, true, false, 0.0);
        let slots = plan.out_slots.clone();
        let prev_end = plan.out_rows[0];
        (plan, slots, prev_end, vec![])
    };
    let needed = (t + 1) * out_m;
    let r0 = if needed <= prev_end {
        0
    } else {
        plan.d_prime.max(domain.n)
    };
    cancel.extend((r0..r0 + needed).filter(|&row| row < prev_end));
    cancel.sort_unstable();
    cancel.dedup();
    let hidden_m = slots.len();
    let mut outputs = Vec::new();
    let mut heads = Vec::new();
    for k in 0..t {
        for i in 0..out_m {
            let o = k * out_m + i;
            let terms = net
                .readout
                .weight
                .row(o)
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(h, &w)| (h / hidden_m, h % hidden_m, w))
                .collect();
            let y = r0 + o;
            outputs.push((
                y,
                Piece {
                    terms,
                    bias: net.readout.bias[o],
                },
            ));
            heads.push((y, r0 + t * out_m + i, k));
        }
    }
    plan.d_prime = plan.d_prime.max(r0 + needed);
    let z_rows: Vec<usize> = (0..out_m).map(|i| r0 + t * out_m + i).collect();
    let readout_bound = outputs
        .iter()
        .map(|(_, p)| {
            p.terms
                .iter()
                .map(|&(_, j, w)| w.abs() * slots[j].geom.abs_bound())
                .sum::<f64>()
                + p.bias.abs()
        })
        .fold(0.0, f64::max);
    bounds.push(readout_bound);
    let readout = Readout {
        slots,
        outputs,
        cancel,
        heads,
    };
    // Without hidden layers the selector needs an attention-free block to live in.
    plan.lead_block = layers.is_empty();
    let m = layers.iter().map(|l| l.m).fold(out_m, usize::max);
    assemble(Assembly {
        domain,
        options,
        taps: identity_taps(&z_rows),
        plan,
        readout: Some(readout),
        m: out_m,
        theorem_id: TheoremId::Relu,
        dims: BudgetDims {
            n: domain.n,
            m,
            t,
            p: 2,
            s: t,
            depth: layers.len(),
        },
        s: t,
        m2: max_weight_bound(specs),
        bounds,
    })
}

/// Stack `g` and `h` per token as one layer with `2m` units per token:
/// token `k` holds `g_{k,0..m}` then `h_{k,0..m}`.
pub fn stack_pair(pair: &CpwlPairSpec<f64>, t: usize) -> Result<MaxoutLayerSpec<f64>> {
    pair.validate()?;
    let m = per_token(pair.g.m_out, t, "g output")?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for k in 0..t {
        for part in [&pair.g, &pair.h] {
            for i in 0..m {
                weights.push(part.weights[k * m + i].clone());
                biases.push(part.biases[k * m + i].clone());
            }
        }
    }
    if pair.g.p != pair.h.p {
        // Pad the lower-rank side by repeating its last piece.
        let p = pair.g.p.max(pair.h.p);
        for (w, b) in weights.iter_mut().zip(biases.iter_mut()) {
            let mut rows = w.to_rows();
            while rows.len() < p {
                rows.push(rows.last().unwrap().clone());
                b.push(*b.last().unwrap());
            }
            *w = Matrix::from_rows(rows)?;
        }
    }
    MaxoutLayerSpec::new(weights, biases)
}

/// `f = g - h`: the stacked pair compiled with tournament width `T`, read out
/// as the difference of the two halves.
pub fn compile_cpwl(
    pair: &CpwlPairSpec<f64>,
    domain: &DomainBox,
    options: &CompileOptions,
) -> Result<Compiled> {
    domain.validate()?;
    let t = domain.t;
    let stacked = stack_pair(pair, t)?;
    compile_shallow(&stacked, domain, options, t, Some(pair.g.m_out / t))
}

/// Route any supported network to its construction. Ranks above
/// `min(s, T)` go through the tournament construction.
pub fn compile_general(
    spec: &SpecDocument,
    domain: &DomainBox,
    options: &CompileOptions,
) -> Result<Compiled> {
    domain.validate()?;
    let s = tournament_width(options, domain.t)?;
    match spec {
        SpecDocument::MaxoutLayer(f) => {
            f.validate()?;
            compile_shallow(f, domain, options, s, None)
        }
        SpecDocument::DeepMaxout(net) => {
            net.validate()?;
            compile_deep(net, domain, options, s)
        }
        SpecDocument::ReluNet(net) => compile_relu(net, domain, options),
        SpecDocument::CpwlPair(pair) => compile_cpwl(pair, domain, options),
        SpecDocument::DomainBox(_) => Err(Error::Validation(
            "a domain box is not a network".into(),
        )),
    }
}

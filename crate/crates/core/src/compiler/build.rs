//! Low-level weight builders: positional embedding, region selector,
//! cancellation gadget and the two attention-head patterns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netspec::DomainBox;
use crate::transformer::{AttentionHead, FeedForward};

/// Position of the one-hot rows inside a hidden state of width `d`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub d: usize,
    pub t: usize,
}

impl Layout {
    pub fn cols(&self) -> usize {
        self.t + 1
    }

    /// Row holding the one-hot indicator of column `c`.
    pub fn pos(&self, c: usize) -> usize {
        self.d - self.cols() + c
    }
}

/// Per-coordinate token geometry: at column `t` the stored value is
/// `x + shifts[t]` with `x` in `[lo, hi]`; consecutive intervals are `delta` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
    pub shifts: Vec<f64>,
}

impl Geometry {
    pub fn from_box(domain: &DomainBox) -> Self {
        Geometry {
            lo: domain.a,
            hi: domain.b,
            delta: domain.delta,
            shifts: (0..=domain.t).map(|t| domain.token_offset(t)).collect(),
        }
    }

    /// `[-M, M] + alpha_t` with `alpha_t = 2 M t + (t + 1) delta`.
    pub fn shifted(bound: f64, delta: f64, t: usize) -> Self {
        Geometry {
            lo: -bound,
            hi: bound,
            delta,
            shifts: (0..=t)
                .map(|c| 2.0 * bound * c as f64 + (c as f64 + 1.0) * delta)
                .collect(),
        }
    }

    pub fn interval(&self, t: usize) -> (f64, f64) {
        (self.lo + self.shifts[t], self.hi + self.shifts[t])
    }

    pub fn abs_bound(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// `E(X) = A X + B`: the first `n` rows carry the token coordinates shifted into
/// their token intervals, the last `T + 1` rows are one-hot positions.
pub fn build_positional_embedding(
    domain: &DomainBox,
    d: usize,
) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let (n, t) = (domain.n, domain.t);
    if d < n + t + 1 {
        return Err(Error::Precondition(format!(
            "embedding width {d} is below n + T + 1 = {}",
            n + t + 1
        )));
    }
    let layout = Layout { d, t };
    let mut a = Matrix::zeros(d, n);
    let mut b = Matrix::zeros(d, t + 1);
    for c in 0..n {
        a.set(c, c, 1.0);
        for col in 0..=t {
            b.set(c, col, domain.position_shift(col));
        }
    }
    for col in 0..=t {
        b.set(layout.pos(col), col, 1.0);
    }
    Ok((a, b))
}

/// Sparse accumulator for a one-hidden-layer ReLU map.
pub(crate) struct FfBuilder {
    d_in: usize,
    d_out: usize,
    units: Vec<(Vec<(usize, f64)>, f64)>,
    outputs: Vec<(usize, usize, f64)>,
}

impl FfBuilder {
    pub fn new(d_in: usize, d_out: usize) -> Self {
        FfBuilder {
            d_in,
            d_out,
            units: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn unit(&mut self, input: Vec<(usize, f64)>, bias: f64) -> usize {
        self.units.push((input, bias));
        self.units.len() - 1
    }

    pub fn output(&mut self, row: usize, unit: usize, coef: f64) {
        if coef != 0.0 {
            self.outputs.push((row, unit, coef));
        }
    }

    /// `ReLU(-x) - ReLU(x) = -x` on `row`, which zeroes it through the residual.
    pub fn cancel(&mut self, row: usize) {
        let up = self.unit(vec![(row, 1.0)], 0.0);
        let down = self.unit(vec![(row, -1.0)], 0.0);
        self.output(row, up, -1.0);
        self.output(row, down, 1.0);
    }

    /// Region selector: on the interval of region `t`, adds `W^t x + b^t` to the
    /// output rows, where `x` are the raw slot values.
    ///
    /// `slots[j] = (row, lo, hi, delta, offsets)` describes coordinate `j`; the
    /// indicator `psi_t` is built on slot 0. `regions[t]` lists
    /// `(out_row, weights over slots, bias)`.
    pub fn selector(&mut self, slots: &[SlotGeometry], regions: &[Vec<(usize, Vec<f64>, f64)>]) {
        for (t, outputs) in regions.iter().enumerate() {
            for (j, slot) in slots.iter().enumerate() {
                let coefs = phi_coefficients(slot, t);
                let breaks = breakpoints(slot, t);
                let units: Vec<usize> = breaks
                    .iter()
                    .map(|&e| self.unit(vec![(slot.row, 1.0)], -e))
                    .collect();
                for (row, w, _) in outputs {
                    for (&u, &c) in units.iter().zip(&coefs) {
                        self.output(*row, u, w[j] * c);
                    }
                }
            }
            let slot = &slots[0];
            let breaks = breakpoints(slot, t);
            let inv = 1.0 / slot.delta;
            let coefs = [inv, -inv, -inv, inv];
            let units: Vec<usize> = breaks
                .iter()
                .map(|&e| self.unit(vec![(slot.row, 1.0)], -e))
                .collect();
            for (row, _, bias) in outputs {
                for (&u, &c) in units.iter().zip(&coefs) {
                    self.output(*row, u, bias * c);
                }
            }
        }
    }

    pub fn finish(self) -> FeedForward<f64> {
        let r = self.units.len();
        let mut w1 = Matrix::zeros(r, self.d_in);
        let mut b1 = vec![0.0; r];
        for (u, (input, bias)) in self.units.into_iter().enumerate() {
            for (c, w) in input {
                w1.set(u, c, w1.get(u, c) + w);
            }
            b1[u] = bias;
        }
        let mut w2 = Matrix::zeros(self.d_out, r);
        for (row, u, c) in self.outputs {
            w2.set(row, u, w2.get(row, u) + c);
        }
        FeedForward {
            w1,
            b1,
            w2,
            b2: vec![0.0; self.d_out],
        }
    }
}

/// Input coordinate of a region selector together with its interval layout.
#[derive(Debug, Clone)]
pub(crate) struct SlotGeometry {
    pub row: usize,
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
    pub offsets: Vec<f64>,
}

impl SlotGeometry {
    pub fn new(row: usize, geometry: &Geometry) -> Self {
        SlotGeometry {
            row,
            lo: geometry.lo,
            hi: geometry.hi,
            delta: geometry.delta,
            offsets: geometry.shifts.clone(),
        }
    }
}

fn breakpoints(slot: &SlotGeometry, t: usize) -> [f64; 4] {
    let p = slot.lo + slot.offsets[t];
    let q = slot.hi + slot.offsets[t];
    [p - slot.delta, p, q, q + slot.delta]
}

/// Coefficients of the four ReLUs of `phi_t`: zero outside
/// `[p - delta, q + delta]`, the identity on `[p, q]`, linear ramps between.
fn phi_coefficients(slot: &SlotGeometry, t: usize) -> [f64; 4] {
    let p = slot.lo + slot.offsets[t];
    let q = slot.hi + slot.offsets[t];
    let d = slot.delta;
    [p / d, 1.0 - p / d, (-q - d) / d, q / d]
}

/// Standalone region selector `R^{n'} -> R^{k'}` (no residual).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSelector {
    #[serde(rename = "W1")]
    pub w1: Matrix<f64>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Matrix<f64>,
}

impl RegionSelector {
    pub fn width(&self) -> usize {
        self.w1.rows()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let hidden: Vec<f64> = self
            .w1
            .mul_vec(x)?
            .into_iter()
            .zip(&self.b1)
            .map(|(h, b)| (h + b).max(0.0))
            .collect();
        self.w2.mul_vec(&hidden)
    }
}

/// Box geometry of a region selector: region `t` is `[p, q]^{n'} + offsets[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorGeometry {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub offsets: Vec<f64>,
}

/// One-hidden-layer ReLU network equal to `W^t x + b^t` on the interior of
/// region `t` and to zero away from all regions. Hidden width `4 (n' + 1)` per region.
pub fn build_region_selector_ff(
    pieces: &[(Matrix<f64>, Vec<f64>)],
    geometry: &SelectorGeometry,
) -> Result<RegionSelector> {
    let (first, _) = pieces
        .first()
        .ok_or_else(|| Error::Validation("region selector needs at least one region".into()))?;
    let (k, n) = first.shape();
    if pieces.len() != geometry.offsets.len() {
        return Err(Error::Shape(format!(
            "{} piece maps for {} regions",
            pieces.len(),
            geometry.offsets.len()
        )));
    }
    if pieces.iter().any(|(w, b)| w.shape() != (k, n) || b.len() != k) || n == 0 {
        return Err(Error::Shape("region pieces differ in shape".into()));
    }
    if !(geometry.q > geometry.p) {
        return Err(Error::Validation("region selector needs q > p".into()));
    }
    let mut offsets = geometry.offsets.clone();
    offsets.sort_by(f64::total_cmp);
    let gap_ok = offsets
        .windows(2)
        .all(|w| w[1] - w[0] >= geometry.q - geometry.p + geometry.delta);
    if !(geometry.delta > 0.0 && gap_ok) {
        return Err(Error::Validation(format!(
            "delta={} is not positive or regions are closer than delta",
            geometry.delta
        )));
    }
    let slots: Vec<SlotGeometry> = (0..n)
        .map(|row| SlotGeometry {
            row,
            lo: geometry.p,
            hi: geometry.q,
            delta: geometry.delta,
            offsets: geometry.offsets.clone(),
        })
        .collect();
    let regions: Vec<Vec<(usize, Vec<f64>, f64)>> = pieces
        .iter()
        .map(|(w, b)| (0..k).map(|o| (o, w.row(o).to_vec(), b[o])).collect())
        .collect();
    let mut ff = FfBuilder::new(n, k);
    ff.selector(&slots, &regions);
    let ff = ff.finish();
    Ok(RegionSelector {
        w1: ff.w1,
        b1: ff.b1,
        w2: ff.w2,
    })
}

fn head(layout: &Layout) -> AttentionHead<f64> {
    AttentionHead {
        w_k: Matrix::zeros(2, layout.d),
        w_q: Matrix::zeros(2, layout.d),
        w_v: Matrix::zeros(2, layout.d),
        w_o: Matrix::zeros(layout.d, 2),
    }
}

/// Query `(1, 0)` at column `target` and `(0, 1)` at every other column.
fn set_query(h: &mut AttentionHead<f64>, layout: &Layout, target: usize) {
    for c in 0..layout.cols() {
        let row = usize::from(c != target);
        h.w_q.set(row, layout.pos(c), 1.0);
    }
}

/// Sums row `y` over the `T` token columns and writes the sum into column
/// `target` of row `z`; other columns attend to the auxiliary token.
pub(crate) fn aggregation_head(
    layout: &Layout,
    y: usize,
    z: usize,
    target: usize,
) -> AttentionHead<f64> {
    let mut h = head(layout);
    for c in 0..layout.t {
        h.w_k.set(0, layout.pos(c), 1.0);
    }
    h.w_k.set(1, layout.pos(layout.t), 1.0);
    set_query(&mut h, layout, target);
    h.w_v.set(0, y, layout.t as f64);
    h.w_o.set(z, 0, 1.0);
    h
}

/// Writes `max_{c < pieces} Z[z, c]` into column `target` of row `out`.
/// Columns at or past `pieces` are pushed down by `alpha` in the keys.
pub(crate) fn max_head(
    layout: &Layout,
    z: usize,
    pieces: usize,
    target: usize,
    out: usize,
    alpha: f64,
) -> AttentionHead<f64> {
    let mut h = head(layout);
    h.w_k.set(0, z, 1.0);
    for c in 0..layout.cols() {
        if c < pieces {
            h.w_k.set(1, layout.pos(c), -alpha);
        } else {
            h.w_k.set(0, layout.pos(c), -alpha);
        }
    }
    set_query(&mut h, layout, target);
    h.w_v.set(0, z, 1.0);
    h.w_o.set(out, 0, 1.0);
    h
}

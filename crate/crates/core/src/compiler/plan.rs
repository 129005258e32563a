//! Stage planning and emission.
//!
//! A maxout stage takes three blocks. Block 1 has no heads; its feedforward
//! part is a region selector writing, for every (unit, piece), the per-token
//! contribution of that piece into a scratch row `Y`. Block 2 sums each `Y`
//! row over the tokens and places piece `j` in column `j` of the unit's `Z`
//! row. Block 3 takes the max over the piece columns of every `Z` row and
//! writes it into the unit's output row at the unit's column.

use serde::{Deserialize, Serialize};

use super::build::{aggregation_head, max_head, FfBuilder, Geometry, Layout, SlotGeometry};
use crate::matrix::Matrix;
use crate::netspec::MaxoutLayerSpec;
use crate::transformer::{FeedForward, TransformerBlock};

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub row: usize,
    pub geom: Geometry,
}

/// Affine map of the true (unshifted) slot values: `terms` are
/// `(token, slot, weight)`; the bias is charged to token 0.
#[derive(Debug, Clone)]
pub(crate) struct Piece {
    pub terms: Vec<(usize, usize, f64)>,
    pub bias: f64,
}

impl Piece {
    pub fn constant(bias: f64) -> Self {
        Piece {
            terms: vec![],
            bias,
        }
    }

    fn bound(&self, slots: &[Slot]) -> f64 {
        self.terms
            .iter()
            .map(|&(_, j, w)| w.abs() * slots[j].geom.abs_bound())
            .sum::<f64>()
            + self.bias.abs()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Unit {
    pub col: usize,
    pub out_row: usize,
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone)]
pub(crate) struct Stage {
    pub slots: Vec<Slot>,
    pub units: Vec<Unit>,
    pub cancel_in: Vec<usize>,
    pub y0: usize,
    pub z0: usize,
    pub cancel_scratch: bool,
    pub min_alpha: f64,
    pub probe: Option<Geometry>,
}

impl Stage {
    pub fn y_count(&self) -> usize {
        self.units.iter().map(|u| u.pieces.len()).sum()
    }

    pub fn rows_end(&self) -> usize {
        let out = self.units.iter().map(|u| u.out_row + 1).max().unwrap_or(0);
        out.max(self.z0 + self.units.len()).max(self.y0 + self.y_count())
    }

    fn scratch_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = (self.y0..self.y0 + self.y_count()).collect();
        rows.extend(self.z0..self.z0 + self.units.len());
        rows
    }
}

/// Affine readout placed after the last stage: its selector is merged into
/// the last stage's third feedforward and one aggregation block follows.
#[derive(Debug, Clone)]
pub(crate) struct Readout {
    pub slots: Vec<Slot>,
    pub outputs: Vec<(usize, Piece)>,
    pub cancel: Vec<usize>,
    /// `(y row, z row, target column)` per aggregation head.
    pub heads: Vec<(usize, usize, usize)>,
}

/// Post-block check that the given rows stay inside their token intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProbe {
    /// State index in a forward trace (0 is the embedding).
    pub state: usize,
    pub rows: Vec<usize>,
    pub geometry: Geometry,
}

pub(crate) struct Emitted {
    pub blocks: Vec<TransformerBlock<f64>>,
    pub alphas: Vec<f64>,
    pub probes: Vec<ShiftProbe>,
}

/// Pieces of unit `unit` of a sequence layer, reading slots `offset..offset+n`
/// of every token.
pub(crate) fn layer_pieces(
    layer: &MaxoutLayerSpec<f64>,
    unit: usize,
    n: usize,
    offset: usize,
    range: std::ops::Range<usize>,
    shift: f64,
) -> Vec<Piece> {
    range
        .map(|j| {
            let (w, b) = layer.piece(unit, j);
            let terms = w
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(idx, &w)| (idx / n, offset + idx % n, w))
                .collect();
            Piece {
                terms,
                bias: *b + shift,
            }
        })
        .collect()
}

/// Per-region selector outputs: weights over slots on raw (shifted) values.
fn selector_regions(
    slots: &[Slot],
    outputs: &[(usize, &Piece)],
    t: usize,
) -> Vec<Vec<(usize, Vec<f64>, f64)>> {
    (0..t)
        .map(|tok| {
            outputs
                .iter()
                .map(|&(row, piece)| {
                    let mut w = vec![0.0; slots.len()];
                    for &(pt, j, v) in &piece.terms {
                        if pt == tok {
                            w[j] += v;
                        }
                    }
                    let mut bias = if tok == 0 { piece.bias } else { 0.0 };
                    for (j, slot) in slots.iter().enumerate() {
                        bias -= w[j] * slot.geom.shifts[tok];
                    }
                    (row, w, bias)
                })
                .collect()
        })
        .collect()
}

fn selector_ff(
    layout: &Layout,
    slots: &[Slot],
    outputs: &[(usize, &Piece)],
    cancel: &[usize],
) -> FeedForward<f64> {
    let mut ff = FfBuilder::new(layout.d, layout.d);
    let geometry: Vec<SlotGeometry> = slots
        .iter()
        .map(|s| SlotGeometry::new(s.row, &s.geom))
        .collect();
    ff.selector(&geometry, &selector_regions(slots, outputs, layout.t));
    for &row in cancel {
        ff.cancel(row);
    }
    ff.finish()
}

fn cancel_ff(layout: &Layout, rows: &[usize]) -> FeedForward<f64> {
    let mut ff = FfBuilder::new(layout.d, layout.d);
    for &row in rows {
        ff.cancel(row);
    }
    ff.finish()
}

fn emit_stage(layout: &Layout, stage: &Stage, margin: f64, out: &mut Emitted) {
    let mut outputs = Vec::new();
    let mut row = stage.y0;
    for unit in &stage.units {
        for piece in &unit.pieces {
            outputs.push((row, piece));
            row += 1;
        }
    }
    out.blocks.push(TransformerBlock {
        heads: vec![],
        ff: selector_ff(layout, &stage.slots, &outputs, &stage.cancel_in),
    });

    let mut heads = Vec::new();
    let mut y = stage.y0;
    for (u, unit) in stage.units.iter().enumerate() {
        for j in 0..unit.pieces.len() {
            heads.push(aggregation_head(layout, y, stage.z0 + u, j));
            y += 1;
        }
    }
    out.blocks.push(TransformerBlock {
        heads,
        ff: FeedForward::identity(layout.d),
    });

    let z_bound = stage
        .units
        .iter()
        .flat_map(|u| u.pieces.iter())
        .map(|p| p.bound(&stage.slots))
        .fold(0.0, f64::max);
    let alpha = (2.0 * z_bound + 1.0 + margin).max(stage.min_alpha);
    out.alphas.push(alpha);
    let heads = stage
        .units
        .iter()
        .enumerate()
        .map(|(u, unit)| {
            max_head(
                layout,
                stage.z0 + u,
                unit.pieces.len(),
                unit.col,
                unit.out_row,
                alpha,
            )
        })
        .collect();
    let ff = if stage.cancel_scratch {
        cancel_ff(layout, &stage.scratch_rows())
    } else {
        FeedForward::identity(layout.d)
    };
    out.blocks.push(TransformerBlock { heads, ff });

    if let Some(geometry) = &stage.probe {
        let mut rows: Vec<usize> = stage.units.iter().map(|u| u.out_row).collect();
        rows.sort_unstable();
        rows.dedup();
        out.probes.push(ShiftProbe {
            state: out.blocks.len(),
            rows,
            geometry: geometry.clone(),
        });
    }
}

fn emit_readout(layout: &Layout, readout: &Readout, out: &mut Emitted) {
    let outputs: Vec<(usize, &Piece)> = readout.outputs.iter().map(|(r, p)| (*r, p)).collect();
    let last = out
        .blocks
        .last_mut()
        .expect("readout follows a maxout stage");
    last.ff = selector_ff(layout, &readout.slots, &outputs, &readout.cancel);
    let heads = readout
        .heads
        .iter()
        .map(|&(y, z, col)| aggregation_head(layout, y, z, col))
        .collect();
    out.blocks.push(TransformerBlock {
        heads,
        ff: FeedForward::identity(layout.d),
    });
}

pub(crate) fn emit(
    layout: &Layout,
    stages: &[Stage],
    lead_block: bool,
    readout: Option<&Readout>,
    margin: f64,
) -> Emitted {
    let mut out = Emitted {
        blocks: Vec::new(),
        alphas: Vec::new(),
        probes: Vec::new(),
    };
    if lead_block {
        out.blocks.push(TransformerBlock {
            heads: vec![],
            ff: FeedForward::identity(layout.d),
        });
    }
    for stage in stages {
        emit_stage(layout, stage, margin, &mut out);
    }
    if let Some(readout) = readout {
        emit_readout(layout, readout, &mut out);
    }
    out
}

/// Readout matrix summing `coef * row` into each output coordinate.
pub(crate) fn readout_matrix(m: usize, d: usize, taps: &[Vec<(usize, f64)>]) -> Matrix<f64> {
    let mut c = Matrix::zeros(m, d);
    for (i, row_taps) in taps.iter().enumerate() {
        for &(row, coef) in row_taps {
            c.set(i, row, coef);
        }
    }
    c
}

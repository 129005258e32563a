//! Linear-region counting on one- and two-dimensional slices, and the
//! closed-form region lower bounds for maxout and Transformer networks.

use num_bigint::BigUint;
use num_integer::binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::REPORT_SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::maxout_eval::{vectorize, SeqMatrix, VectorFunction};

/// Bisection stops once a breakpoint is bracketed this tightly.
pub const BREAKPOINT_TOL: f64 = 1e-10;
/// Relative tolerance for comparing slopes and gradients.
pub const SLOPE_TOL: f64 = 1e-6;
const AFFINE_TOL: f64 = 1e-9;
const NOISE: f64 = 1e-13;
const MIN_RESOLUTION: usize = 16;

/// A one- or two-dimensional affine family `base + sum_i s_i dirs[i]`,
/// `s_i` ranging over `extent[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub base: SeqMatrix<f64>,
    pub dirs: Vec<SeqMatrix<f64>>,
    pub extent: Vec<[f64; 2]>,
    pub resolution: usize,
}

impl Slice {
    pub fn line(base: SeqMatrix<f64>, dir: SeqMatrix<f64>, extent: [f64; 2], resolution: usize) -> Self {
        Slice {
            base,
            dirs: vec![dir],
            extent: vec![extent],
            resolution,
        }
    }

    pub fn plane(
        base: SeqMatrix<f64>,
        dirs: [SeqMatrix<f64>; 2],
        extent: [[f64; 2]; 2],
        resolution: usize,
    ) -> Self {
        Slice {
            base,
            dirs: dirs.into(),
            extent: extent.into(),
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dirs.len();
        if !(1..=2).contains(&k) {
            return Err(Error::Validation(format!(
                "a slice needs 1 or 2 directions, got {k}"
            )));
        }
        if self.extent.len() != k {
            return Err(Error::Validation(format!(
                "{k} directions but {} extents",
                self.extent.len()
            )));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::Validation(format!(
                "resolution {} below {MIN_RESOLUTION}",
                self.resolution
            )));
        }
        let shape = (self.base.dim(), self.base.len());
        for d in &self.dirs {
            if (d.dim(), d.len()) != shape {
                return Err(Error::Shape(format!(
                    "direction is {}x{}, base is {}x{}",
                    d.dim(),
                    d.len(),
                    shape.0,
                    shape.1
                )));
            }
        }
        for [lo, hi] in &self.extent {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Validation(format!("empty extent [{lo}, {hi}]")));
            }
        }
        let dirs: Vec<Vec<f64>> = self.dirs.iter().map(vectorize).collect();
        let norms: Vec<f64> = dirs.iter().map(|d| dot(d, d)).collect();
        if norms.iter().any(|&n| n == 0.0) {
            return Err(Error::Validation("zero direction".into()));
        }
        if k == 2 {
            let cross = dot(&dirs[0], &dirs[1]);
            if norms[0] * norms[1] - cross * cross <= 1e-12 * norms[0] * norms[1] {
                return Err(Error::Validation("directions are linearly dependent".into()));
            }
        }
        Ok(())
    }

    fn point(&self, coords: &[f64]) -> Vec<f64> {
        let mut x = vectorize(&self.base);
        for (d, &s) in self.dirs.iter().zip(coords) {
            for (xi, di) in x.iter_mut().zip(vectorize(d)) {
                *xi += s * di;
            }
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    Exact1d,
    Grid2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCount {
    pub schema_version: u32,
    pub count: usize,
    pub method: CountMethod,
    pub resolution: usize,
    /// Decimal value of a closed-form lower bound, when one was evaluated.
    pub lower_bound_formula: Option<String>,
    /// Set when breakpoints sit closer than two grid steps; the count is then
    /// only a lower bound.
    pub coarse: bool,
    pub breakpoints: Vec<f64>,
    pub collisions: usize,
    pub undefined_cells: usize,
    pub notes: Vec<String>,
}

impl RegionCount {
    fn new(method: CountMethod, resolution: usize) -> Self {
        RegionCount {
            schema_version: REPORT_SCHEMA_VERSION,
            count: 1,
            method,
            resolution,
            lower_bound_formula: None,
            coarse: false,
            breakpoints: Vec::new(),
            collisions: 0,
            undefined_cells: 0,
            notes: Vec::new(),
        }
    }
}

enum Segment {
    Affine { a: f64, b: f64 },
    Kink,
}

/// Breakpoints of a piecewise linear `g` on `[lo, hi]`.
pub(crate) struct Breakpoints {
    pub points: Vec<f64>,
    pub coarse: bool,
}

struct LineSearch<'a, G> {
    g: &'a G,
    affine_tol: f64,
}

impl<G: Fn(f64) -> Result<Vec<f64>> + Sync> LineSearch<'_, G> {
    fn is_affine(&self, a: f64, b: f64, ga: &[f64], gb: &[f64]) -> Result<bool> {
        for theta in [1.0 / 3.0, 2.0 / 3.0] {
            let x = a + (b - a) * theta;
            let gx = (self.g)(x)?;
            let chord: Vec<f64> = ga
                .iter()
                .zip(gb)
                .map(|(u, v)| u + (v - u) * theta)
                .collect();
            if sup_diff(&gx, &chord) > self.affine_tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn resolve(&self, a: f64, b: f64, ga: Vec<f64>, gb: Vec<f64>, out: &mut Vec<Segment>) -> Result<()> {
        if self.is_affine(a, b, &ga, &gb)? {
            out.push(Segment::Affine { a, b });
            return Ok(());
        }
        if b - a <= BREAKPOINT_TOL {
            out.push(Segment::Kink);
            return Ok(());
        }
        let mid = 0.5 * (a + b);
        let gm = (self.g)(mid)?;
        self.resolve(a, mid, ga, gm.clone(), out)?;
        self.resolve(mid, b, gm, gb, out)
    }
}

/// Locate slope changes of `g` on `[lo, hi]`: a grid pass, bisection inside
/// every non-affine cell, then a merge of neighbouring pieces with equal slope.
pub(crate) fn line_breakpoints<G>(g: &G, lo: f64, hi: f64, cells: usize) -> Result<Breakpoints>
where
    G: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    let h = (hi - lo) / cells as f64;
    let grid: Vec<f64> = (0..=cells)
        .map(|i| if i == cells { hi } else { lo + h * i as f64 })
        .collect();
    let values = grid.par_iter().map(|&s| g(s)).collect::<Result<Vec<_>>>()?;
    let scale = 1.0 + values.iter().map(|v| sup(v)).fold(0.0, f64::max);
    let search = LineSearch {
        g,
        affine_tol: AFFINE_TOL * scale,
    };
    let per_cell = (0..cells)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            search.resolve(grid[i], grid[i + 1], values[i].clone(), values[i + 1].clone(), &mut out)?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let affine: Vec<(f64, f64)> = per_cell
        .into_iter()
        .flatten()
        .filter_map(|seg| match seg {
            Segment::Affine { a, b } => Some((a, b)),
            Segment::Kink => None,
        })
        .collect();
    // Raw pieces below the first length are rounding noise; merged runs below
    // the second are chords straddling a kink.
    let runs = merge_runs(g, &affine, 1e-7 * (hi - lo), scale)?;
    let runs = merge_runs(g, &runs, 1e-5 * (hi - lo), scale)?;
    let points: Vec<f64> = runs.windows(2).map(|w| 0.5 * (w[0].1 + w[1].0)).collect();
    let coarse = points.windows(2).any(|w| w[1] - w[0] < 2.0 * h);
    Ok(Breakpoints { points, coarse })
}

/// Join consecutive pieces of equal slope, ignoring pieces shorter than
/// `min_len`.
fn merge_runs<G>(g: &G, pieces: &[(f64, f64)], min_len: f64, scale: f64) -> Result<Vec<(f64, f64)>>
where
    G: Fn(f64) -> Result<Vec<f64>>,
{
    let slope = |a: f64, b: f64| -> Result<Vec<f64>> {
        let (ga, gb) = (g(a)?, g(b)?);
        Ok(ga.iter().zip(&gb).map(|(u, v)| (v - u) / (b - a)).collect())
    };
    let mut runs: Vec<(f64, f64)> = Vec::new();
    for &(a, b) in pieces {
        if b - a < min_len {
            continue;
        }
        if let Some(last) = runs.last_mut() {
            let (current, next) = (slope(last.0, last.1)?, slope(a, b)?);
            let size = sup(&current).max(sup(&next));
            let noise = 4.0 * NOISE * scale / (b - a).min(last.1 - last.0);
            if sup_diff(&current, &next) <= SLOPE_TOL * (1.0 + size) + noise {
                last.1 = b;
                continue;
            }
        }
        runs.push((a, b));
    }
    Ok(runs)
}

fn check_slice(f: &dyn VectorFunction<f64>, slice: &Slice, dirs: usize) -> Result<()> {
    slice.validate()?;
    if slice.dirs.len() != dirs {
        return Err(Error::Validation(format!(
            "expected a slice with {dirs} direction(s), got {}",
            slice.dirs.len()
        )));
    }
    let len = slice.base.dim() * slice.base.len();
    if len != f.in_dim() {
        return Err(Error::Shape(format!(
            "slice has {len} coordinates, function takes {}",
            f.in_dim()
        )));
    }
    Ok(())
}

/// Number of maximal intervals of constant slope of `f` along a line.
pub fn count_regions_1d(f: &(dyn VectorFunction<f64> + Sync), slice: &Slice) -> Result<RegionCount> {
    check_slice(f, slice, 1)?;
    let [lo, hi] = slice.extent[0];
    let g = |s: f64| f.eval(&slice.point(&[s]));
    let found = line_breakpoints(&g, lo, hi, slice.resolution)?;
    let mut report = RegionCount::new(CountMethod::Exact1d, slice.resolution);
    report.count = found.points.len() + 1;
    report.coarse = found.coarse;
    if found.coarse {
        report
            .notes
            .push("breakpoints closer than two grid steps; count is a lower bound".into());
    }
    report.breakpoints = found.points;
    Ok(report)
}

/// Per-cell gradient signature of a planar slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSignature {
    pub i: usize,
    pub j: usize,
    pub center: [f64; 2],
    /// `[df/ds_0, df/ds_1]` per output coordinate; `None` when the stencil
    /// straddles a kink.
    pub gradient: Option<Vec<f64>>,
    pub component: Option<usize>,
}

fn gradient_close(a: &[f64], b: &[f64]) -> bool {
    sup_diff(a, b) <= SLOPE_TOL * (1.0 + sup(a).max(sup(b)))
}

/// Gradient signatures at the cell centres of a `resolution x resolution` grid.
pub fn grid_2d_cells(f: &(dyn VectorFunction<f64> + Sync), slice: &Slice) -> Result<Vec<CellSignature>> {
    check_slice(f, slice, 2)?;
    let r = slice.resolution;
    let [[lo0, hi0], [lo1, hi1]] = [slice.extent[0], slice.extent[1]];
    let (h0, h1) = ((hi0 - lo0) / r as f64, (hi1 - lo1) / r as f64);
    let step = 1e-3 * h0.min(h1);
    (0..r * r)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / r, idx % r);
            let c = [lo0 + (i as f64 + 0.5) * h0, lo1 + (j as f64 + 0.5) * h1];
            let at = |d0: f64, d1: f64| f.eval(&slice.point(&[c[0] + d0, c[1] + d1]));
            let f0 = at(0.0, 0.0)?;
            let mut gradient = Vec::with_capacity(2 * f0.len());
            let mut defined = true;
            let mut parts = Vec::new();
            for (d0, d1) in [(step, 0.0), (0.0, step)] {
                let fwd = at(d0, d1)?;
                let bwd = at(-d0, -d1)?;
                let forward: Vec<f64> = fwd.iter().zip(&f0).map(|(a, b)| (a - b) / step).collect();
                let backward: Vec<f64> = f0.iter().zip(&bwd).map(|(a, b)| (a - b) / step).collect();
                defined &= gradient_close(&forward, &backward);
                parts.push(forward.iter().zip(&backward).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<_>>());
            }
            for k in 0..f0.len() {
                gradient.push(parts[0][k]);
                gradient.push(parts[1][k]);
            }
            Ok(CellSignature {
                i,
                j,
                center: c,
                gradient: defined.then_some(gradient),
                component: None,
            })
        })
        .collect()
}

/// Connected components of equal gradient on a grid, with an affine spot
/// check of every component.
pub fn count_regions_2d(f: &(dyn VectorFunction<f64> + Sync), slice: &Slice) -> Result<RegionCount> {
    let (report, _) = count_regions_2d_cells(f, slice)?;
    Ok(report)
}

/// [`count_regions_2d`] together with the labelled cells.
pub fn count_regions_2d_cells(
    f: &(dyn VectorFunction<f64> + Sync),
    slice: &Slice,
) -> Result<(RegionCount, Vec<CellSignature>)> {
    let mut cells = grid_2d_cells(f, slice)?;
    let r = slice.resolution;
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..cells.len() {
        if cells[start].component.is_some() || cells[start].gradient.is_none() {
            continue;
        }
        let label = components.len();
        let mut members = vec![start];
        cells[start].component = Some(label);
        let mut stack = vec![start];
        while let Some(idx) = stack.pop() {
            let (i, j) = (idx / r, idx % r);
            let mut neighbours = Vec::with_capacity(4);
            if i > 0 {
                neighbours.push(idx - r);
            }
            if i + 1 < r {
                neighbours.push(idx + r);
            }
            if j > 0 {
                neighbours.push(idx - 1);
            }
            if j + 1 < r {
                neighbours.push(idx + 1);
            }
            for nb in neighbours {
                if cells[nb].component.is_some() {
                    continue;
                }
                let close = match (&cells[nb].gradient, &cells[idx].gradient) {
                    (Some(a), Some(b)) => gradient_close(a, b),
                    _ => false,
                };
                if close {
                    cells[nb].component = Some(label);
                    members.push(nb);
                    stack.push(nb);
                }
            }
        }
        components.push(members);
    }

    let mut report = RegionCount::new(CountMethod::Grid2d, r);
    report.undefined_cells = cells.iter().filter(|c| c.gradient.is_none()).count();
    report.count = components.len().max(1);
    for members in &components {
        let anchor = &cells[members[0]];
        let grad = anchor.gradient.as_ref().unwrap();
        let f0 = f.eval(&slice.point(&anchor.center))?;
        let scale = 1.0 + sup(&f0);
        let stride = (members.len() / 8).max(1);
        for &idx in members.iter().step_by(stride) {
            let c = &cells[idx].center;
            let ds = [c[0] - anchor.center[0], c[1] - anchor.center[1]];
            let got = f.eval(&slice.point(c))?;
            let want: Vec<f64> = (0..f0.len())
                .map(|k| f0[k] + grad[2 * k] * ds[0] + grad[2 * k + 1] * ds[1])
                .collect();
            if sup_diff(&got, &want) > 1e-8 * scale * (1.0 + sup(&ds)) {
                report.collisions += 1;
                break;
            }
        }
    }
    if report.collisions > 0 {
        report.notes.push(format!(
            "{} component(s) are not affine: equal gradients joined distinct regions",
            report.collisions
        ));
    }
    if report.undefined_cells > 0 {
        report.notes.push(format!(
            "{} cell(s) straddle a kink and were left unlabelled",
            report.undefined_cells
        ));
    }
    report.notes.push("grid estimate; thin regions may be missed".into());
    Ok((report, cells))
}

/// CSV rows `i,j,s0,s1,component,gradient...` for external plotting.
pub fn cells_to_csv(cells: &[CellSignature]) -> Result<String> {
    let width = cells
        .iter()
        .find_map(|c| c.gradient.as_ref().map(Vec::len))
        .unwrap_or(0);
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    let mut header: Vec<String> = ["i", "j", "s0", "s1", "component"].map(String::from).to_vec();
    header.extend((0..width).map(|g| format!("g{g}")));
    writer.write_record(&header).map_err(io)?;
    for c in cells {
        let mut row = vec![
            c.i.to_string(),
            c.j.to_string(),
            c.center[0].to_string(),
            c.center[1].to_string(),
            c.component.map(|k| k.to_string()).unwrap_or_default(),
        ];
        match &c.gradient {
            Some(g) => row.extend(g.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), width)),
        }
        writer.write_record(&row).map_err(io)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Validation(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Validation(format!("csv: {e}")))
}

fn big(n: usize) -> BigUint {
    BigUint::from(n)
}

fn binomial_sum(n_last: usize, top: usize, base: usize) -> BigUint {
    (0..=top)
        .map(|j| binomial(big(n_last), big(j)) * big(base).pow(j as u32))
        .sum()
}

/// Region lower bound of a rank-`k` maxout network with `n0` inputs and
/// hidden widths `widths = [n_1, ..., n_L]`.
pub fn maxout_region_lower_bound(n0: usize, widths: &[usize], k: usize, n: usize) -> Result<BigUint> {
    let pre = |msg: String| Err(Error::Precondition(msg));
    let Some((&n_last, hidden)) = widths.split_last() else {
        return pre("at least one layer width is required".into());
    };
    if k == 0 {
        return pre("rank k must be positive".into());
    }
    if n == 0 {
        return pre("n must be positive".into());
    }
    if n > n0 {
        return pre(format!("n={n} exceeds n0={n0}"));
    }
    for (l, &w) in hidden.iter().enumerate() {
        if 2 * n > w {
            return pre(format!("n={n} exceeds n_{}/2 = {w}/2", l + 1));
        }
        if w % n != 0 || (w / n) % 2 != 0 {
            return pre(format!("n_{}/n = {w}/{n} is not an even integer", l + 1));
        }
    }
    let mut product = BigUint::from(1u32);
    for &w in hidden {
        product *= big(w / n * (k - 1) + 1).pow(n as u32);
    }
    Ok(product * binomial_sum(n_last, n, k - 1))
}

/// Region lower bound for Transformers of depth `d` with `n x T` inputs and
/// `m x T` outputs, evaluated at the free parameter `q`.
pub fn transformer_region_lower_bound(n: usize, m: usize, t: usize, d: usize, q: usize) -> Result<BigUint> {
    let pre = |msg: String| Err(Error::Precondition(msg));
    if n == 0 || m == 0 || t == 0 {
        return pre("n, m and T must be positive".into());
    }
    if d < 3 {
        return pre(format!("D={d} must be at least 3"));
    }
    if q == 0 {
        return pre("q must be positive".into());
    }
    if q > n * t {
        return pre(format!("q={q} exceeds nT={}", n * t));
    }
    if 2 * q > m * t {
        return pre(format!("q={q} exceeds mT/2={}/2", m * t));
    }
    if (m * t) % q != 0 || (m * t / q) % 2 != 0 {
        return pre(format!("mT/q = {}/{q} is not an even integer", m * t));
    }
    let base = big(m * t / q * (t - 1) + 1);
    let exponent = q * (d / 3 - 1);
    Ok(base.pow(exponent as u32) * binomial_sum(m * t, q, t - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxout_eval::from_fn;
    use crate::matrix::Matrix;

    fn scalar_line(resolution: usize) -> Slice {
        let one = |v| SeqMatrix(Matrix::from_rows(vec![vec![v]]).unwrap());
        Slice::line(one(0.0), one(1.0), [-1.0, 1.0], resolution)
    }

    fn plane(resolution: usize) -> Slice {
        let col = |a, b| SeqMatrix(Matrix::from_rows(vec![vec![a], vec![b]]).unwrap());
        Slice::plane(
            col(0.0, 0.0),
            [col(1.0, 0.0), col(0.0, 1.0)],
            [[-1.0, 1.0], [-1.0, 1.0]],
            resolution,
        )
    }

    #[test]
    fn one_dimensional_counts() {
        let abs = from_fn(1, 1, |x: &[f64]| vec![x[0].abs()]);
        let count = count_regions_1d(&abs, &scalar_line(64)).unwrap();
        assert_eq!(count.count, 2);
        assert!(count.breakpoints[0].abs() < 1e-9);
        let constant = from_fn(1, 1, |_: &[f64]| vec![3.0]);
        assert_eq!(count_regions_1d(&constant, &scalar_line(16)).unwrap().count, 1);
        let three = from_fn(1, 1, |x: &[f64]| {
            vec![(-x[0] - 0.5).max(0.1 * x[0]).max(2.0 * x[0] - 0.7)]
        });
        assert_eq!(count_regions_1d(&three, &scalar_line(17)).unwrap().count, 3);
    }

    #[test]
    fn kink_off_grid_and_close_pairs() {
        let f = from_fn(1, 1, |x: &[f64]| vec![(x[0] - 0.1234).abs() + (x[0] - 0.1334).abs()]);
        let count = count_regions_1d(&f, &scalar_line(16)).unwrap();
        assert_eq!(count.count, 3);
        assert!(count.coarse);
    }

    #[test]
    fn two_dimensional_counts() {
        let abs = from_fn(2, 1, |x: &[f64]| vec![x[0].abs()]);
        assert_eq!(count_regions_2d(&abs, &plane(32)).unwrap().count, 2);
        let cone = from_fn(2, 1, |x: &[f64]| vec![x[0].max(x[1]).max(0.0)]);
        assert_eq!(count_regions_2d(&cone, &plane(32)).unwrap().count, 3);
        let affine = from_fn(2, 1, |x: &[f64]| vec![2.0 * x[0] - x[1] + 1.0]);
        let count = count_regions_2d(&affine, &plane(16)).unwrap();
        assert_eq!(count.count, 1);
        assert_eq!(count.collisions, 0);
    }

    #[test]
    fn csv_dump_has_one_row_per_cell() {
        let abs = from_fn(2, 1, |x: &[f64]| vec![x[0].abs()]);
        let (_, cells) = count_regions_2d_cells(&abs, &plane(16)).unwrap();
        let text = cells_to_csv(&cells).unwrap();
        assert_eq!(text.lines().count(), 16 * 16 + 1);
        assert!(text.starts_with("i,j,s0,s1,component,g0,g1\n"));
        assert!(text.lines().all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn slice_validation() {
        let mut s = scalar_line(8);
        assert!(s.validate().is_err());
        s.resolution = 16;
        assert!(s.validate().is_ok());
        let mut p = plane(16);
        p.dirs[1] = p.dirs[0].clone();
        assert!(p.validate().is_err());
    }

    #[test]
    fn maxout_bound_values() {
        assert_eq!(maxout_region_lower_bound(1, &[1], 2, 1).unwrap(), big(2));
        assert_eq!(maxout_region_lower_bound(1, &[2], 3, 1).unwrap(), big(5));
        assert_eq!(maxout_region_lower_bound(1, &[2, 1], 2, 1).unwrap(), big(6));
        assert!(maxout_region_lower_bound(1, &[3, 1], 2, 1).is_err());
        assert!(maxout_region_lower_bound(1, &[2], 2, 2).is_err());
    }

    #[test]
    fn transformer_bound_values() {
        assert_eq!(transformer_region_lower_bound(1, 1, 2, 6, 1).unwrap(), big(9));
        assert_eq!(transformer_region_lower_bound(1, 2, 2, 9, 2).unwrap(), big(891));
        assert_eq!(transformer_region_lower_bound(1, 1, 2, 3, 1).unwrap(), big(3));
        assert!(transformer_region_lower_bound(1, 3, 2, 6, 2).is_err());
        assert!(transformer_region_lower_bound(1, 1, 2, 2, 1).is_err());
    }
}

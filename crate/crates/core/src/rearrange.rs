//! Rearrangement calculus for piecewise-constant weights on equal-measure cells.
//!
//! With equal cell measures, two weights are equimeasurable exactly when their
//! value multisets agree, so the rearrangement class of a generator is the set
//! of permutations of its cell values. Its weak* closure is the set of weights
//! majorized by the generator.

use std::cmp::Ordering;

use crate::csv::{fmt_f64, parse_rows};
use crate::error::{Error, Result};
use crate::mesh::Grid;

/// A piecewise-constant function with one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    values: Vec<f64>,
    element_measure: f64,
}

impl Weight {
    pub fn new(values: Vec<f64>, element_measure: f64) -> Result<Self> {
        if !(element_measure.is_finite() && element_measure > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "element measure {element_measure} must be positive"
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("weight value {bad} is not finite")));
        }
        Ok(Weight { values, element_measure })
    }

    pub fn constant(value: f64, cells: usize, element_measure: f64) -> Self {
        Weight { values: vec![value; cells], element_measure }
    }

    /// Weight on `grid` with the given cell values.
    pub fn on_grid(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.element_count() {
            return Err(Error::SizeMismatch { expected: grid.element_count(), found: values.len() });
        }
        Weight::new(values, grid.element_measure())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn element_measure(&self) -> f64 {
        self.element_measure
    }

    pub fn domain_measure(&self) -> f64 {
        self.element_measure * self.values.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.element_measure * self.values.iter().sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The constant weight with the same integral.
    pub fn mean_constant(&self) -> Weight {
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        Weight::constant(mean, self.values.len(), self.element_measure)
    }

    /// `(1 - t) self + t other`.
    pub fn lerp(&self, other: &Weight, t: f64) -> Weight {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        Weight { values, element_measure: self.element_measure }
    }

    pub fn scaled(&self, alpha: f64) -> Weight {
        Weight {
            values: self.values.iter().map(|v| alpha * v).collect(),
            element_measure: self.element_measure,
        }
    }

    /// `∫ |self − other| dx`.
    pub fn l1_distance(&self, other: &Weight) -> f64 {
        self.element_measure
            * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Values sorted in decreasing order.
    pub fn sorted_desc(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("element,value\n");
        for (e, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{e},{}\n", fmt_f64(*v)));
        }
        out
    }

    /// Parses the `element,value` format. Element ids must be `0..n` in order.
    pub fn from_csv(text: &str, element_measure: f64) -> Result<Self> {
        let rows = parse_rows(text, &["element", "value"])?;
        let mut values = Vec::with_capacity(rows.len());
        for (k, row) in rows.iter().enumerate() {
            if row[0] != k as f64 {
                return Err(Error::Parse(format!("expected element {k}, found {}", row[0])));
            }
            values.push(row[1]);
        }
        Weight::new(values, element_measure)
    }
}

/// Number of cells with value greater than `t`, times the cell measure.
pub fn distribution_function(w: &Weight, t: f64) -> f64 {
    w.element_measure * w.values.iter().filter(|&&v| v > t).count() as f64
}

/// Decreasing step function on `(0, |Ω|)`: value `levels[k]` on
/// `[breakpoints[k-1], breakpoints[k])`, with an implicit leading breakpoint 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRearrangement {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl StepRearrangement {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != levels.len() || breakpoints.is_empty() {
            return Err(Error::Parse("breakpoints and levels must be nonempty and equal length".into()));
        }
        let mut prev_b = 0.0;
        for (k, (&b, &l)) in breakpoints.iter().zip(&levels).enumerate() {
            if !(b > prev_b) || !l.is_finite() {
                return Err(Error::Parse(format!("breakpoint {b} not increasing at step {k}")));
            }
            if k > 0 && l > levels[k - 1] {
                return Err(Error::Parse(format!("level {l} increases at step {k}")));
            }
            prev_b = b;
        }
        Ok(StepRearrangement { breakpoints, levels })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn domain_measure(&self) -> f64 {
        *self.breakpoints.last().expect("nonempty")
    }

    /// Value at `s`, right-continuous.
    pub fn value_at(&self, s: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= s);
        self.levels[k.min(self.levels.len() - 1)]
    }

    /// `∫₀ᵗ f*(s) ds`, clamped to `[0, |Ω|]`.
    pub fn integral_to(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut left = 0.0;
        for (&b, &l) in self.breakpoints.iter().zip(&self.levels) {
            if t <= left {
                break;
            }
            acc += l * (b.min(t) - left);
            left = b;
        }
        acc
    }

    pub fn total(&self) -> f64 {
        self.integral_to(self.domain_measure())
    }

    /// `∫ |f − g| ds` between two step functions on the same interval.
    pub fn l1_distance(&self, other: &StepRearrangement) -> f64 {
        let mut cuts: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut left = 0.0;
        let mut acc = 0.0;
        for b in cuts {
            let mid = 0.5 * (left + b);
            acc += (self.value_at(mid) - other.value_at(mid)).abs() * (b - left);
            left = b;
        }
        acc
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("breakpoint,level\n");
        for (b, l) in self.breakpoints.iter().zip(&self.levels) {
            out.push_str(&format!("{},{}\n", fmt_f64(*b), fmt_f64(*l)));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_rows(text, &["breakpoint", "level"])?;
        StepRearrangement::new(rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect())
    }
}

pub fn decreasing_rearrangement(w: &Weight) -> StepRearrangement {
    let sorted = w.sorted_desc();
    let mut breakpoints = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    for (k, v) in sorted.iter().enumerate() {
        let b = w.element_measure * (k + 1) as f64;
        if levels.last() == Some(v) {
            *breakpoints.last_mut().unwrap() = b;
        } else {
            breakpoints.push(b);
            levels.push(*v);
        }
    }
    StepRearrangement { breakpoints, levels }
}

/// Relative slack used by [`majorizes`] to absorb rounding in convex combinations.
pub const MAJORIZATION_RTOL: f64 = 1e-12;

/// Tests `g ≺ f`: every partial integral of `g*` is at most that of `f*`,
/// and the totals agree. Weights of different shape never compare.
pub fn majorizes(f: &Weight, g: &Weight) -> bool {
    let scale = f.element_measure * f.values.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    majorizes_within(f, g, MAJORIZATION_RTOL * scale)
}

/// [`majorizes`] with an explicit absolute slack on the partial integrals.
pub fn majorizes_within(f: &Weight, g: &Weight, slack: f64) -> bool {
    if f.len() != g.len() || f.element_measure != g.element_measure {
        return false;
    }
    let (fs, gs) = (f.sorted_desc(), g.sorted_desc());
    let (mut sf, mut sg) = (0.0, 0.0);
    for (a, b) in fs.iter().zip(&gs) {
        sf += a;
        sg += b;
        if f.element_measure * (sg - sf) > slack {
            return false;
        }
    }
    (f.element_measure * (sg - sf)).abs() <= slack
}

/// The rearrangement class `G(m₀)` of a generator weight.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangementClass {
    generator_values: Vec<f64>,
    element_measure: f64,
}

impl RearrangementClass {
    pub fn new(generator: &Weight) -> Self {
        RearrangementClass {
            generator_values: generator.sorted_desc(),
            element_measure: generator.element_measure,
        }
    }

    /// Generator values in decreasing order.
    pub fn generator_values(&self) -> &[f64] {
        &self.generator_values
    }

    pub fn element_measure(&self) -> f64 {
        self.element_measure
    }

    pub fn element_count(&self) -> usize {
        self.generator_values.len()
    }

    pub fn integral(&self) -> f64 {
        self.element_measure * self.generator_values.iter().sum::<f64>()
    }

    pub fn max_value(&self) -> f64 {
        self.generator_values[0]
    }

    pub fn min_value(&self) -> f64 {
        *self.generator_values.last().expect("nonempty class")
    }

    /// The sorted-descending member of the class.
    pub fn sorted_member(&self) -> Weight {
        Weight { values: self.generator_values.clone(), element_measure: self.element_measure }
    }

    pub fn decreasing_rearrangement(&self) -> StepRearrangement {
        decreasing_rearrangement(&self.sorted_member())
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.element_count() {
            return Err(Error::SizeMismatch { expected: self.element_count(), found: n });
        }
        Ok(())
    }

    pub fn contains(&self, w: &Weight) -> Result<bool> {
        self.check(w.len())?;
        Ok(w.sorted_desc() == self.generator_values)
    }

    /// Membership with a value tolerance on the sorted comparison.
    pub fn contains_within(&self, w: &Weight, tol: f64) -> Result<bool> {
        self.check(w.len())?;
        Ok(w.sorted_desc().iter().zip(&self.generator_values).all(|(a, b)| (a - b).abs() <= tol))
    }

    pub fn closure_contains(&self, w: &Weight) -> Result<bool> {
        self.check(w.len())?;
        Ok(majorizes(&self.sorted_member(), w))
    }

    /// Cell order for a pairing: by `q` in the given direction, ties by index.
    fn pairing_order(&self, q: &[f64], descending: bool) -> Result<Vec<usize>> {
        self.check(q.len())?;
        if let Some((e, &v)) = q.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeWeight { element: e, value: v });
        }
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&i, &j| {
            let c = q[i].partial_cmp(&q[j]).unwrap_or(Ordering::Equal);
            if descending { c.reverse() } else { c }
        });
        Ok(order)
    }

    fn assign(&self, order: &[usize]) -> Weight {
        let mut values = vec![0.0; order.len()];
        for (&cell, &v) in order.iter().zip(&self.generator_values) {
            values[cell] = v;
        }
        Weight { values, element_measure: self.element_measure }
    }

    /// Class member maximizing `Σ m_e q_e`: largest values on largest `q`.
    pub fn hl_max_pairing(&self, q: &[f64]) -> Result<Weight> {
        Ok(self.assign(&self.pairing_order(q, true)?))
    }

    /// Class member minimizing `Σ m_e q_e`: largest values on smallest `q`.
    pub fn hl_min_pairing(&self, q: &[f64]) -> Result<Weight> {
        Ok(self.assign(&self.pairing_order(q, false)?))
    }

    /// Measure `γ` where the tail integral of `m₀*` vanishes, with the step
    /// function equal to `m₀*` before `γ` and zero after.
    ///
    /// For a nonnegative generator, `γ = |{m₀ > 0}|` and `m₀*` is returned
    /// unchanged.
    pub fn truncation_rearrangement(&self) -> Result<(f64, StepRearrangement)> {
        let total = self.integral();
        if !(total > 0.0) {
            return Err(Error::Regime(format!(
                "truncation needs a positive integral, got {total}: the supremum of the principal eigenvalue over the class is infinite"
            )));
        }
        let h = self.element_measure;
        if self.min_value() >= 0.0 {
            let positive = self.generator_values.iter().filter(|&&v| v > 0.0).count();
            return Ok((h * positive as f64, self.decreasing_rearrangement()));
        }
        let mut head = 0.0;
        let mut gamma = None;
        for (k, &v) in self.generator_values.iter().enumerate() {
            let next = head + h * v;
            if next >= total {
                gamma = Some(h * k as f64 + (total - head) / v);
                break;
            }
            head = next;
        }
        let gamma = gamma.expect("head integral crosses the total inside the positive part");

        let full = self.decreasing_rearrangement();
        let mut breakpoints = Vec::new();
        let mut levels = Vec::new();
        for (&b, &l) in full.breakpoints.iter().zip(&full.levels) {
            if b < gamma {
                breakpoints.push(b);
                levels.push(l);
            } else {
                breakpoints.push(gamma);
                levels.push(l);
                break;
            }
        }
        breakpoints.push(full.domain_measure());
        levels.push(0.0);
        Ok((gamma, StepRearrangement { breakpoints, levels }))
    }

    /// Class member alternating high and low halves over `stripes` pairs of
    /// column stripes along the first axis.
    ///
    /// The sorted-descending values are split into a high and a low half;
    /// stripe `2s` takes high values and stripe `2s + 1` low values, each filled
    /// in cell-index order with values in decreasing order.
    pub fn checkerboard_rearrangement(&self, grid: &Grid, stripes: usize) -> Result<Weight> {
        self.check(grid.element_count())?;
        let n = grid.elements_per_axis();
        if stripes == 0 || n % (2 * stripes) != 0 {
            return Err(Error::IncompatibleStripes { stripes, cells: n });
        }
        let width = n / (2 * stripes);
        let cells = self.element_count();
        let (high, low) = self.generator_values.split_at(cells / 2);
        let (mut hi, mut lo) = (high.iter(), low.iter());
        let values = (0..cells)
            .map(|cell| {
                let stripe = grid.cell_column(cell) / width;
                let v = if stripe % 2 == 0 { hi.next() } else { lo.next() };
                *v.expect("stripes split cells evenly")
            })
            .collect();
        Ok(Weight { values, element_measure: self.element_measure })
    }
}

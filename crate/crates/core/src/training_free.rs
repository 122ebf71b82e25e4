//! Training-free fusion: static weak-model weights picked by grid search.
//!
//! The anchor keeps weight 1.0 and every weak model gets a weight from the
//! grid. The search maximizes the number of correctly classified samples on a
//! labeled search set. Ties go to the lexicographically smallest weight
//! vector (model 0 most significant), so the answer does not depend on the
//! order in which grid points are visited.
//!
//! Grid points are addressed by a flat index in `[0, |grid|^m)` whose base-|grid|
//! digits select the weight of each model. Flat-index order is lexicographic
//! order, so any split of the index range into chunks can be evaluated
//! independently and merged with [`RangeBest::merge`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::matrix::{LabelVector, Matrix, ProbMatrix, ScoreMatrix};
use crate::scoring::argmax;
use crate::zero_shot::check_same_shape;

/// Largest number of grid points the exhaustive search will enumerate by default.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

// grid values are snapped to this resolution so 0.1 + 2 * 0.1 reads back as 0.3
const GRID_SNAP: f64 = 1e9;

/// Sorted, duplicate-free list of admissible weights.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    values: Vec<f64>,
}

impl Default for Grid {
    /// `{0.1, 0.2, ..., 1.0}`.
    fn default() -> Self {
        Self::range(0.1, 1.0, 0.1).expect("default grid is valid")
    }
}

impl Grid {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("weight grid"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "weight grid",
                index,
            });
        }
        values.sort_unstable_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values })
    }

    /// Evenly spaced grid from `start` to `stop` inclusive.
    ///
    /// `step` must divide `stop - start` to within 1e-9.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if step <= 0.0 || stop < start {
            return Err(Error::Config(alloc::format!(
                "grid {start}:{stop}:{step} needs step > 0 and stop >= start"
            )));
        }
        let steps = (stop - start) / step;
        let rounded = libm::round(steps);
        if (steps - rounded).abs() > 1e-9 {
            return Err(Error::Config(alloc::format!(
                "grid step {step} does not divide the range {start}..{stop}"
            )));
        }
        if rounded > 1e7 {
            return Err(Error::Config("grid has too many points".into()));
        }
        let values = (0..=rounded as usize)
            .map(|i| libm::round((start + i as f64 * step) * GRID_SNAP) / GRID_SNAP)
            .collect();
        Self::from_values(values)
    }

    /// Parses `start:stop:step`, e.g. `0.1:1.0:0.1`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let bad = || Error::Config(alloc::format!("grid must be start:stop:step, got {text:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut nums = [0.0; 3];
        for (n, p) in nums.iter_mut().zip(&parts) {
            *n = p.trim().parse().map_err(|_| bad())?;
        }
        Self::range(nums[0], nums[1], nums[2])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.values.contains(&v)
    }
}

impl core::str::FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// One weight per weak model, in ascending model-index order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StaticWeights {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SearchMode {
    Exhaustive,
    CoordinateGreedy,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Exhaustive => "exhaustive",
            SearchMode::CoordinateGreedy => "coordinate_greedy",
        })
    }
}

impl core::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "greedy" | "coordinate_greedy" | "coordinate-greedy" => Ok(Self::CoordinateGreedy),
            other => Err(Error::Config(alloc::format!("unknown search mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchResult {
    pub weights: StaticWeights,
    pub best_accuracy: f64,
    pub correct: usize,
    pub evaluated_count: u64,
    pub mode: SearchMode,
    /// Accuracy after every accepted step (greedy) or the single best (exhaustive).
    pub trace: Vec<f64>,
}

/// Best grid point found in a slice of the flat index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeBest {
    pub correct: usize,
    pub index: u64,
    pub evaluated: u64,
}

impl RangeBest {
    /// Associative and commutative: more correct wins, then the smaller index.
    pub fn merge(self, other: Self) -> Self {
        let evaluated = self.evaluated + other.evaluated;
        let winner = if other.correct > self.correct
            || (other.correct == self.correct && other.index < self.index)
        {
            other
        } else {
            self
        };
        Self {
            evaluated,
            ..winner
        }
    }
}

/// Immutable inputs of one search, shared by every worker.
#[derive(Debug, Clone)]
pub struct SearchProblem<'a> {
    weak: Vec<&'a ProbMatrix>,
    anchor: &'a ProbMatrix,
    labels: &'a LabelVector,
    grid: &'a Grid,
}

impl<'a> SearchProblem<'a> {
    pub fn new(
        weak: Vec<&'a ProbMatrix>,
        anchor: &'a ProbMatrix,
        labels: &'a LabelVector,
        grid: &'a Grid,
    ) -> Result<Self> {
        if weak.is_empty() {
            return Err(Error::TooFewModels {
                needed: 2,
                found: 1,
            });
        }
        let mut all = weak.clone();
        all.push(anchor);
        let (n, k) = check_same_shape(&all)?;
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                what: "labels vs samples",
                expected: n,
                found: labels.len(),
            });
        }
        if labels.num_classes() != k {
            return Err(Error::ShapeMismatch {
                what: "label classes vs probability columns",
                expected: k,
                found: labels.num_classes(),
            });
        }
        if grid.is_empty() {
            return Err(Error::Empty("weight grid"));
        }
        Ok(Self {
            weak,
            anchor,
            labels,
            grid,
        })
    }

    pub fn num_weak(&self) -> usize {
        self.weak.len()
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    /// `|grid|^m`, or `None` if it does not fit in a `u128`.
    pub fn total_points(&self) -> Option<u128> {
        (self.grid.len() as u128).checked_pow(self.weak.len() as u32)
    }

    /// Weight vector at a flat grid index.
    pub fn decode(&self, mut index: u64, out: &mut [f64]) {
        let g = self.grid.len() as u64;
        for slot in out.iter_mut().rev() {
            *slot = self.grid.values()[(index % g) as usize];
            index /= g;
        }
    }

    pub fn weights_at(&self, index: u64) -> StaticWeights {
        let mut values = alloc::vec![0.0; self.weak.len()];
        self.decode(index, &mut values);
        StaticWeights { values }
    }

    /// Correctly classified samples for one weight vector.
    pub fn correct_at(&self, weights: &[f64], scratch: &mut [f64]) -> usize {
        let mut correct = 0;
        for (s, &y) in self.labels.values().iter().enumerate() {
            fuse_row(weights, &self.weak, self.anchor, s, scratch);
            if argmax(scratch) == y {
                correct += 1;
            }
        }
        correct
    }

    /// Evaluates every flat index in `start..end`.
    pub fn evaluate_range(&self, start: u64, end: u64) -> RangeBest {
        let mut weights = alloc::vec![0.0; self.weak.len()];
        let mut scratch = alloc::vec![0.0; self.anchor.cols()];
        let mut best = RangeBest {
            correct: 0,
            index: start,
            evaluated: 0,
        };
        let mut first = true;
        for index in start..end {
            self.decode(index, &mut weights);
            let correct = self.correct_at(&weights, &mut scratch);
            if first || correct > best.correct {
                best.correct = correct;
                best.index = index;
                first = false;
            }
            best.evaluated += 1;
        }
        best
    }

    fn result(&self, weights: StaticWeights, correct: usize, evaluated: u64, mode: SearchMode, trace: Vec<f64>) -> SearchResult {
        SearchResult {
            weights,
            best_accuracy: correct as f64 / self.num_samples() as f64,
            correct,
            evaluated_count: evaluated,
            mode,
            trace,
        }
    }

    /// Checks the budget and returns the number of grid points.
    pub fn checked_points(&self, budget: u64) -> Result<u64> {
        match self.total_points() {
            Some(p) if p <= budget as u128 => Ok(p as u64),
            Some(p) => Err(Error::BudgetExceeded { points: p, budget }),
            None => Err(Error::BudgetExceeded {
                points: u128::MAX,
                budget,
            }),
        }
    }

    /// Turns the merged best of a full sweep into a [`SearchResult`].
    pub fn finish_exhaustive(&self, best: RangeBest) -> SearchResult {
        let acc = best.correct as f64 / self.num_samples() as f64;
        self.result(
            self.weights_at(best.index),
            best.correct,
            best.evaluated,
            SearchMode::Exhaustive,
            alloc::vec![acc],
        )
    }
}

#[inline]
fn fuse_row(weights: &[f64], weak: &[&ProbMatrix], anchor: &ProbMatrix, s: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (w, m) in weights.iter().zip(weak) {
        for (o, p) in out.iter_mut().zip(m.row(s)) {
            *o += w * p;
        }
    }
    for (o, a) in out.iter_mut().zip(anchor.row(s)) {
        *o += a;
    }
}

/// Something that can evaluate a full search problem, possibly in parallel.
///
/// Implementations must return the same [`RangeBest`] as [`Sequential`].
pub trait SearchExecutor {
    fn run(&self, problem: &SearchProblem<'_>, points: u64) -> RangeBest;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl SearchExecutor for Sequential {
    fn run(&self, problem: &SearchProblem<'_>, points: u64) -> RangeBest {
        problem.evaluate_range(0, points)
    }
}

/// Exact argmax of search-set accuracy over the full product grid.
pub fn exhaustive_search(problem: &SearchProblem<'_>, budget: u64) -> Result<SearchResult> {
    exhaustive_search_with(problem, budget, &Sequential)
}

pub fn exhaustive_search_with(
    problem: &SearchProblem<'_>,
    budget: u64,
    executor: &dyn SearchExecutor,
) -> Result<SearchResult> {
    let points = problem.checked_points(budget)?;
    Ok(problem.finish_exhaustive(executor.run(problem, points)))
}

/// Coordinate ascent over the grid, starting with every weight at the grid minimum.
///
/// Each coordinate is set to the grid value with the most correct samples,
/// smallest value on ties. Stops after a sweep that changes nothing, or after
/// `sweeps` sweeps.
pub fn coordinate_greedy(problem: &SearchProblem<'_>, sweeps: usize) -> Result<SearchResult> {
    if sweeps == 0 {
        return Err(Error::Config("coordinate greedy needs at least one sweep".into()));
    }
    let grid = problem.grid().values();
    let m = problem.num_weak();
    let n = problem.num_samples() as f64;
    let mut scratch = alloc::vec![0.0; problem.anchor.cols()];
    let mut weights = alloc::vec![grid[0]; m];
    let mut current = problem.correct_at(&weights, &mut scratch);
    let mut evaluated = 1u64;
    let mut trace = alloc::vec![current as f64 / n];

    for _ in 0..sweeps {
        let mut changed = false;
        for j in 0..m {
            let previous = weights[j];
            let mut best = (0usize, grid[0]);
            for (gi, &g) in grid.iter().enumerate() {
                weights[j] = g;
                let correct = problem.correct_at(&weights, &mut scratch);
                evaluated += 1;
                if gi == 0 || correct > best.0 {
                    best = (correct, g);
                }
            }
            weights[j] = best.1;
            debug_assert!(best.0 >= current);
            current = best.0;
            trace.push(current as f64 / n);
            if best.1 != previous {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(problem.result(
        StaticWeights { values: weights },
        current,
        evaluated,
        SearchMode::CoordinateGreedy,
        trace,
    ))
}

/// `sum_i w_i * P_i + P_anchor`, weak models in the given order.
pub fn tf_predict(
    weights: &StaticWeights,
    weak: &[&ProbMatrix],
    anchor: &ProbMatrix,
) -> Result<ScoreMatrix> {
    if weights.values.len() != weak.len() {
        return Err(Error::ShapeMismatch {
            what: "static weights vs weak models",
            expected: weak.len(),
            found: weights.values.len(),
        });
    }
    let mut all = weak.to_vec();
    all.push(anchor);
    let (n, k) = check_same_shape(&all)?;
    let mut out = Matrix::zeros(n, k);
    for s in 0..n {
        fuse_row(&weights.values, weak, anchor, s, out.row_mut(s));
    }
    Ok(ScoreMatrix::new(out))
}

/// Formats weights as `[0.1, 0.5]` for diagnostics.
pub fn format_weights(w: &StaticWeights) -> String {
    let mut s = String::from("[");
    for (i, v) in w.values.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&alloc::format!("{v}"));
    }
    s.push(']');
    s
}

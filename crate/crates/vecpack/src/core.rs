//! Domain types shared by every solver: instances, packings, fractional
//! assignments, dual multipliers, validation, and combinatorial bounds.
//!
//! Items live in `[0,1]^d` and bins are the all-ones capacity vector. All
//! types are immutable after construction and safe to share across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on capacity checks. LP solutions carry floating-point
/// noise; a load of `1 + 1e-15` must not invalidate an exact-boundary packing.
pub const EPS_CAP: f64 = 1e-9;

/// Tolerance for fractional-matrix invariants. Looser than [`EPS_CAP`]
/// because simplex residuals accumulate.
pub const EPS_NUM: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("item must have at least one coordinate")]
    EmptyItem,
    #[error("coordinate {value} at position {position} is outside [0, 1]")]
    CoordinateOutOfRange { position: usize, value: f64 },
    #[error("item {item} has {found} coordinates, instance dimension is {expected}")]
    DimensionMismatch {
        item: usize,
        expected: usize,
        found: usize,
    },
    #[error("assignment covers {found} items, instance has {expected}")]
    ItemCountMismatch { expected: usize, found: usize },
    #[error("matrix has {found} entries, expected {expected}")]
    MatrixShape { expected: usize, found: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is negative beyond tolerance")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("column {col} sums to {sum}, exceeds 1")]
    ColumnSum { col: usize, sum: f64 },
    #[error("bounds must satisfy 1 <= lower <= upper, got {lower}..{upper}")]
    InvalidBounds { lower: usize, upper: usize },
    #[error("line {line}: {message}")]
    TextParse { line: usize, message: String },
}

/// One VM's resource request: a point in `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemVector {
    coords: Vec<f64>,
}

impl ItemVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, CoreError> {
        if coords.is_empty() {
            return Err(CoreError::EmptyItem);
        }
        for (position, &c) in coords.iter().enumerate() {
            if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                return Err(CoreError::CoordinateOutOfRange { position, value: c });
            }
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coord_sum(&self) -> f64 {
        self.coords.iter().sum()
    }

    pub fn max_coord(&self) -> f64 {
        self.coords.iter().cloned().fold(0.0, f64::max)
    }
}

/// A set of `n` items sharing dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    dimension: usize,
    items: Vec<ItemVector>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    d: usize,
    items: Vec<Vec<f64>>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = CoreError;

    fn try_from(raw: RawInstance) -> Result<Self, CoreError> {
        let items = raw
            .items
            .into_iter()
            .map(ItemVector::new)
            .collect::<Result<Vec<_>, _>>()?;
        Instance::new(raw.d, items)
    }
}

impl From<Instance> for RawInstance {
    fn from(inst: Instance) -> Self {
        RawInstance {
            d: inst.dimension,
            items: inst.items.into_iter().map(|it| it.coords).collect(),
        }
    }
}

impl Instance {
    pub fn new(dimension: usize, items: Vec<ItemVector>) -> Result<Self, CoreError> {
        if dimension == 0 {
            return Err(CoreError::EmptyItem);
        }
        for (i, item) in items.iter().enumerate() {
            if item.dim() != dimension {
                return Err(CoreError::DimensionMismatch {
                    item: i,
                    expected: dimension,
                    found: item.dim(),
                });
            }
        }
        Ok(Self { dimension, items })
    }

    /// Builds an instance from rows of raw coordinates.
    pub fn from_rows(dimension: usize, rows: &[Vec<f64>]) -> Result<Self, CoreError> {
        let items = rows
            .iter()
            .map(|r| ItemVector::new(r.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dimension, items)
    }

    /// Parses the plain-text format: one item per line, `d` whitespace
    /// separated decimals. Blank lines are skipped; `d` is inferred from the
    /// first item.
    pub fn from_text(text: &str) -> Result<Self, CoreError> {
        let mut dimension = None;
        let mut items = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let coords = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| CoreError::TextParse {
                        line: lineno + 1,
                        message: format!("bad number {tok:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let d = *dimension.get_or_insert(coords.len());
            if coords.len() != d {
                return Err(CoreError::TextParse {
                    line: lineno + 1,
                    message: format!("expected {d} coordinates, found {}", coords.len()),
                });
            }
            items.push(ItemVector::new(coords).map_err(|e| CoreError::TextParse {
                line: lineno + 1,
                message: e.to_string(),
            })?);
        }
        let dimension = dimension.ok_or(CoreError::TextParse {
            line: 0,
            message: "no items found".into(),
        })?;
        Self::new(dimension, items)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let row: Vec<String> = item.coords().iter().map(|c| c.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn items(&self) -> &[ItemVector] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sub-instance over the given item indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Instance {
        let items = indices.iter().map(|&i| self.items[i].clone()).collect();
        Instance {
            dimension: self.dimension,
            items,
        }
    }
}

/// An integral assignment of items to bins.
///
/// `assignment[i]` is the bin of item `i`; `bin_count` is `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packing {
    #[serde(rename = "bins")]
    pub bin_count: usize,
    pub assignment: Vec<usize>,
}

impl Packing {
    pub fn new(bin_count: usize, assignment: Vec<usize>) -> Self {
        Self {
            bin_count,
            assignment,
        }
    }

    /// Per-bin load vectors under `inst`. Fails on structural mismatch.
    pub fn bin_loads(&self, inst: &Instance) -> Result<Vec<Vec<f64>>, CoreError> {
        if self.assignment.len() != inst.len() {
            return Err(CoreError::ItemCountMismatch {
                expected: inst.len(),
                found: self.assignment.len(),
            });
        }
        let d = inst.dimension();
        let nbins = self
            .assignment
            .iter()
            .map(|&b| b + 1)
            .max()
            .unwrap_or(0)
            .max(self.bin_count);
        let mut loads = vec![vec![0.0; d]; nbins];
        for (i, &b) in self.assignment.iter().enumerate() {
            for (k, &c) in inst.items()[i].coords().iter().enumerate() {
                loads[b][k] += c;
            }
        }
        Ok(loads)
    }
}

/// A single capacity or structure violation found by [`validate_packing`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Bin `bin` overflows dimension `dim`: total load `load` exceeds 1.
    Capacity { bin: usize, dim: usize, load: f64 },
    /// Item is assigned to a bin index at or beyond `bin_count`.
    BinIndexOutOfRange { item: usize, bin: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Capacity { bin, dim, load } => write!(
                f,
                "bin {bin} overflows dimension {dim}: load {load} (excess {})",
                load - 1.0
            ),
            Violation::BinIndexOutOfRange { item, bin } => {
                write!(f, "item {item} assigned to out-of-range bin {bin}")
            }
        }
    }
}

/// Checks a packing against an instance at the given capacity tolerance.
///
/// Returns the (possibly empty) list of violations. Structural mismatch
/// between the instance and the packing is an error, not a violation.
pub fn validate_packing_with_tolerance(
    inst: &Instance,
    pk: &Packing,
    eps: f64,
) -> Result<Vec<Violation>, CoreError> {
    if pk.assignment.len() != inst.len() {
        return Err(CoreError::ItemCountMismatch {
            expected: inst.len(),
            found: pk.assignment.len(),
        });
    }
    let mut violations = Vec::new();
    for (i, &b) in pk.assignment.iter().enumerate() {
        if b >= pk.bin_count {
            violations.push(Violation::BinIndexOutOfRange { item: i, bin: b });
        }
    }
    for (b, load) in pk.bin_loads(inst)?.iter().enumerate() {
        for (k, &l) in load.iter().enumerate() {
            if l > 1.0 + eps {
                violations.push(Violation::Capacity {
                    bin: b,
                    dim: k,
                    load: l,
                });
            }
        }
    }
    Ok(violations)
}

/// [`validate_packing_with_tolerance`] at the standard [`EPS_CAP`].
pub fn validate_packing(inst: &Instance, pk: &Packing) -> Result<Vec<Violation>, CoreError> {
    validate_packing_with_tolerance(inst, pk, EPS_CAP)
}

/// Volume lower bound: `max_k ceil(sum_i p_i^k)`. Always `<= OPT`; 0 for the
/// empty instance.
pub fn dimension_lower_bound(inst: &Instance) -> usize {
    if inst.is_empty() {
        return 0;
    }
    let d = inst.dimension();
    let mut best = 0usize;
    for k in 0..d {
        let sum: f64 = inst.items().iter().map(|it| it.coords()[k]).sum();
        // Shave EPS_CAP before ceiling so accumulated noise cannot push a
        // true integer sum over the next integer.
        let bound = (sum - EPS_CAP).ceil().max(0.0) as usize;
        best = best.max(bound);
    }
    best
}

/// Relabels bins `0..m-1` in order of first use and drops empty bins.
pub fn canonicalize(pk: &Packing) -> Packing {
    let mut relabel: Vec<Option<usize>> = vec![None; pk.bin_count.max(pk.assignment.len())];
    let mut next = 0usize;
    let mut assignment = Vec::with_capacity(pk.assignment.len());
    for &b in &pk.assignment {
        if b >= relabel.len() {
            relabel.resize(b + 1, None);
        }
        let new = *relabel[b].get_or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        assignment.push(new);
    }
    Packing {
        bin_count: next,
        assignment,
    }
}

/// Does `item` fit on top of `load` in every dimension, at tolerance `eps`?
pub fn fits(load: &[f64], item: &[f64], eps: f64) -> bool {
    load.iter().zip(item).all(|(&l, &c)| l + c <= 1.0 + eps)
}

/// The n-by-m matrix `X` of `x_ij` values from the relaxed program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalAssignment {
    n: usize,
    m: usize,
    x: Vec<f64>,
}

impl FractionalAssignment {
    /// Validates entry nonnegativity (within [`EPS_NUM`]) and unit row sums.
    pub fn new(n: usize, m: usize, x: Vec<f64>) -> Result<Self, CoreError> {
        if x.len() != n * m {
            return Err(CoreError::MatrixShape {
                expected: n * m,
                found: x.len(),
            });
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..m {
                let v = x[i * m + j];
                if v < -EPS_NUM {
                    return Err(CoreError::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > EPS_NUM * (m as f64).max(1.0) {
                return Err(CoreError::RowSum { row: i, sum });
            }
        }
        Ok(Self { n, m, x })
    }

    pub fn empty() -> Self {
        Self {
            n: 0,
            m: 0,
            x: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.m..(i + 1) * self.m]
    }

    pub fn raw(&self) -> &[f64] {
        &self.x
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.value(i, j)).sum()
    }

    /// Checks the capacity rows `sum_i p_i^k x_ij <= 1` against an instance.
    pub fn capacity_feasible(&self, inst: &Instance, eps: f64) -> bool {
        let d = inst.dimension();
        for j in 0..self.m {
            for k in 0..d {
                let load: f64 = (0..self.n)
                    .map(|i| inst.items()[i].coords()[k] * self.value(i, j))
                    .sum();
                if load > 1.0 + eps {
                    return false;
                }
            }
        }
        true
    }
}

/// The n-by-m matrix `Z` of dual multipliers with column sums at most 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMultipliers {
    n: usize,
    m: usize,
    z: Vec<f64>,
}

impl DualMultipliers {
    pub fn new(n: usize, m: usize, z: Vec<f64>) -> Result<Self, CoreError> {
        if z.len() != n * m {
            return Err(CoreError::MatrixShape {
                expected: n * m,
                found: z.len(),
            });
        }
        for (idx, &v) in z.iter().enumerate() {
            if v < 0.0 {
                return Err(CoreError::NegativeEntry {
                    row: idx / m.max(1),
                    col: idx % m.max(1),
                    value: v,
                });
            }
        }
        for j in 0..m {
            let sum: f64 = (0..n).map(|i| z[i * m + j]).sum();
            if sum > 1.0 + EPS_NUM * (n as f64).max(1.0) {
                return Err(CoreError::ColumnSum { col: j, sum });
            }
        }
        Ok(Self { n, m, z })
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.z[i * self.m + j]
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.value(i, j)).sum()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// Search window `[lower, upper]` for the bin count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub lower: usize,
    pub upper: usize,
}

impl Bounds {
    pub fn new(lower: usize, upper: usize) -> Result<Self, CoreError> {
        if lower < 1 || lower > upper {
            return Err(CoreError::InvalidBounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(d: usize, rows: &[&[f64]]) -> Instance {
        Instance::from_rows(d, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn item_rejects_out_of_range() {
        assert!(ItemVector::new(vec![1.1]).is_err());
        assert!(ItemVector::new(vec![-0.1]).is_err());
        assert!(ItemVector::new(vec![]).is_err());
        assert!(ItemVector::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn validate_exact_boundary_ok() {
        let i = inst(1, &[&[0.5], &[0.5]]);
        let pk = Packing::new(1, vec![0, 0]);
        assert!(validate_packing(&i, &pk).unwrap().is_empty());
    }

    #[test]
    fn validate_forced_overflow() {
        let i = inst(1, &[&[0.6], &[0.6]]);
        let pk = Packing::new(1, vec![0, 0]);
        let v = validate_packing(&i, &pk).unwrap();
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::Capacity { bin, dim, load } => {
                assert_eq!((*bin, *dim), (0, 0));
                assert!((load - 1.2).abs() < 1e-12);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn validate_coordinate_wise() {
        let i = inst(2, &[&[0.6, 0.2], &[0.2, 0.6]]);
        let pk = Packing::new(1, vec![0, 0]);
        assert!(validate_packing(&i, &pk).unwrap().is_empty());
    }

    #[test]
    fn validate_structural_error_distinct() {
        let i = inst(1, &[&[0.5]]);
        let pk = Packing::new(1, vec![0, 0]);
        assert!(matches!(
            validate_packing(&i, &pk),
            Err(CoreError::ItemCountMismatch { .. })
        ));
    }

    #[test]
    fn lower_bound_arithmetic() {
        let i = inst(2, &[&[0.6, 0.2], &[0.6, 0.2], &[0.2, 0.6]]);
        assert_eq!(dimension_lower_bound(&i), 2);
        let i = inst(1, &[&[0.5], &[0.5], &[0.5], &[0.5]]);
        assert_eq!(dimension_lower_bound(&i), 2);
        let empty = Instance::new(3, vec![]).unwrap();
        assert_eq!(dimension_lower_bound(&empty), 0);
    }

    #[test]
    fn canonicalize_relabels() {
        let pk = Packing::new(6, vec![5, 2]);
        let c = canonicalize(&pk);
        assert_eq!(c, Packing::new(2, vec![0, 1]));
        assert_eq!(canonicalize(&c), c);
    }

    #[test]
    fn json_round_trip() {
        let i = inst(2, &[&[0.6, 0.2], &[0.2, 0.6]]);
        let s = serde_json::to_string(&i).unwrap();
        assert!(s.contains("\"d\":2"));
        let back: Instance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, i);
        let bad = r#"{"d": 2, "items": [[0.5, 1.5]]}"#;
        assert!(serde_json::from_str::<Instance>(bad).is_err());
    }

    #[test]
    fn text_round_trip() {
        let i = inst(3, &[&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6]]);
        let t = i.to_text();
        assert_eq!(Instance::from_text(&t).unwrap(), i);
        assert!(Instance::from_text("0.5\n0.1 0.2\n").is_err());
        assert!(Instance::from_text("nope\n").is_err());
    }

    #[test]
    fn fractional_assignment_invariants() {
        assert!(FractionalAssignment::new(2, 2, vec![0.5, 0.5, 1.0, 0.0]).is_ok());
        assert!(FractionalAssignment::new(1, 2, vec![0.6, 0.6]).is_err());
        assert!(FractionalAssignment::new(1, 2, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn dual_multipliers_invariants() {
        assert!(DualMultipliers::new(2, 1, vec![0.5, 0.5]).is_ok());
        assert!(DualMultipliers::new(2, 1, vec![0.8, 0.8]).is_err());
        assert!(DualMultipliers::new(1, 1, vec![-0.1]).is_err());
    }

    #[test]
    fn bounds_window() {
        assert!(Bounds::new(1, 3).is_ok());
        assert!(Bounds::new(0, 3).is_err());
        assert!(Bounds::new(4, 3).is_err());
    }

    proptest! {
        #[test]
        fn canonicalize_idempotent_and_preserves_groups(
            assignment in proptest::collection::vec(0usize..8, 0..20)
        ) {
            let bin_count = assignment.iter().map(|&b| b + 1).max().unwrap_or(0);
            let pk = Packing::new(bin_count, assignment);
            let c1 = canonicalize(&pk);
            let c2 = canonicalize(&c1);
            prop_assert_eq!(&c1, &c2);
            // same-bin relation preserved
            for a in 0..pk.assignment.len() {
                for b in 0..pk.assignment.len() {
                    prop_assert_eq!(
                        pk.assignment[a] == pk.assignment[b],
                        c1.assignment[a] == c1.assignment[b]
                    );
                }
            }
        }

        #[test]
        fn tolerance_monotone(
            coords in proptest::collection::vec(0.0f64..=1.0, 1..12),
            eps in 0.0f64..0.5,
        ) {
            let rows: Vec<Vec<f64>> = coords.iter().map(|&c| vec![c]).collect();
            let i = Instance::from_rows(1, &rows).unwrap();
            let pk = Packing::new(2, coords.iter().enumerate().map(|(k, _)| k % 2).collect());
            let strict = validate_packing_with_tolerance(&i, &pk, 0.0).unwrap();
            if strict.is_empty() {
                let loose = validate_packing_with_tolerance(&i, &pk, eps).unwrap();
                prop_assert!(loose.is_empty());
            }
        }
    }
}

//! Logically rectangular grids with east-west wrap and a tripolar north
//! fold, halo-to-owner index maps, halo exchange and topology checks.
//!
//! Index conventions (0-based, `i` east, `j` north):
//!
//! | stagger   | position of `(i, j)` | rows        |
//! |-----------|----------------------|-------------|
//! | center    | `(i + 1/2, j + 1/2)` | `0..ny`     |
//! | eastEdge  | `(i + 1, j + 1/2)`   | `0..ny`     |
//! | northEdge | `(i + 1/2, j + 1)`   | `0..ny`     |
//! | corner    | `(i, j)`             | `0..=ny`    |
//!
//! Every stagger has `nx` columns; under wrap the `nx`-th edge or corner is
//! the 0-th. The fold reflects positions through `x = nx/2 (mod nx)`,
//! `y = ny`, which gives these owner formulas for north halo rows:
//!
//! | stagger   | column                | row           |
//! |-----------|-----------------------|---------------|
//! | center    | `nx - 1 - i`          | `2ny - 1 - j` |
//! | eastEdge  | `(2nx - 2 - i) mod nx`| `2ny - 1 - j` |
//! | northEdge | `nx - 1 - i`          | `2ny - 2 - j` |
//! | corner    | `(nx - i) mod nx`     | `2ny - j`     |
//!
//! Vector components change sign across the fold. The south edge is always
//! closed.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Topology {
    Closed,
    PeriodicX,
    Tripolar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Stagger {
    Center,
    EastEdge,
    NorthEdge,
    Corner,
}

impl Stagger {
    pub const ALL: [Stagger; 4] = [Stagger::Center, Stagger::EastEdge, Stagger::NorthEdge, Stagger::Corner];

    /// Doubled position `(2x, 2y)` of index `(i, j)`.
    fn doubled_position(self, i: i64, j: i64) -> (i64, i64) {
        match self {
            Stagger::Center => (2 * i + 1, 2 * j + 1),
            Stagger::EastEdge => (2 * i + 2, 2 * j + 1),
            Stagger::NorthEdge => (2 * i + 1, 2 * j + 2),
            Stagger::Corner => (2 * i, 2 * j),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub halo: usize,
    pub topology: Topology,
    pub stagger: Stagger,
}

/// On-disk form; a missing stagger means all four.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(alias = "haloWidth")]
    pub halo: usize,
    pub topology: Topology,
    #[serde(default)]
    pub stagger: Option<Stagger>,
}

impl GridConfig {
    pub fn specs(&self) -> Vec<GridSpec> {
        let staggers = match self.stagger {
            Some(s) => vec![s],
            None => Stagger::ALL.to_vec(),
        };
        staggers
            .into_iter()
            .map(|stagger| GridSpec {
                nx: self.nx,
                ny: self.ny,
                halo: self.halo,
                topology: self.topology,
                stagger,
            })
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("grid dimensions must be positive (nx = {nx}, ny = {ny})")]
    Empty { nx: usize, ny: usize },
    #[error("halo width must be at least 1")]
    NoHalo,
    #[error("halo width {halo} must be less than min(nx, ny) = {limit}")]
    HaloTooWide { halo: usize, limit: usize },
    #[error("tripolar grids need an even nx, got {0}")]
    OddFold(usize),
    #[error("({i}, {j}) lies outside the halo ring")]
    OutOfRange { i: i64, j: i64 },
    #[error("({i}, {j}) is a closed-boundary position")]
    Boundary { i: i64, j: i64 },
    #[error("missing interior value at ({i}, {j})")]
    MissingValue { i: i64, j: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct OwnedRef {
    pub i: i64,
    pub j: i64,
    pub sign: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Owned(OwnedRef),
    Boundary,
}

pub type OwnerMap = BTreeMap<(i64, i64), Owner>;

impl GridSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx == 0 || self.ny == 0 {
            return Err(GridError::Empty { nx: self.nx, ny: self.ny });
        }
        if self.halo == 0 {
            return Err(GridError::NoHalo);
        }
        let limit = self.nx.min(self.ny);
        if self.halo >= limit {
            return Err(GridError::HaloTooWide { halo: self.halo, limit });
        }
        if self.topology == Topology::Tripolar && self.nx % 2 == 1 {
            return Err(GridError::OddFold(self.nx));
        }
        Ok(())
    }

    pub fn rows(&self) -> i64 {
        match self.stagger {
            Stagger::Corner => self.ny as i64 + 1,
            _ => self.ny as i64,
        }
    }

    pub fn is_interior(&self, i: i64, j: i64) -> bool {
        (0..self.nx as i64).contains(&i) && (0..self.rows()).contains(&j)
    }

    pub fn in_ring(&self, i: i64, j: i64) -> bool {
        let h = self.halo as i64;
        (-h..self.nx as i64 + h).contains(&i) && (-h..self.rows() + h).contains(&j)
    }

    /// Interior and halo positions, row-major from the south-west.
    pub fn positions(&self) -> impl Iterator<Item = (i64, i64)> {
        let h = self.halo as i64;
        let (nx, rows) = (self.nx as i64, self.rows());
        (-h..rows + h).flat_map(move |j| (-h..nx + h).map(move |i| (i, j)))
    }

    pub fn interior(&self) -> impl Iterator<Item = (i64, i64)> {
        let (nx, rows) = (self.nx as i64, self.rows());
        (0..rows).flat_map(move |j| (0..nx).map(move |i| (i, j)))
    }

    fn wraps(&self) -> bool {
        self.topology != Topology::Closed
    }

    /// Column index of the fold partner of wrapped column `i`.
    pub fn fold_column(&self, i: i64) -> i64 {
        let nx = self.nx as i64;
        match self.stagger {
            Stagger::Center | Stagger::NorthEdge => nx - 1 - i,
            Stagger::EastEdge => (2 * nx - 2 - i).rem_euclid(nx),
            Stagger::Corner => (nx - i).rem_euclid(nx),
        }
    }

    /// Row index of the fold partner of row `j`.
    pub fn fold_row(&self, j: i64) -> i64 {
        let ny = self.ny as i64;
        match self.stagger {
            Stagger::Center | Stagger::EastEdge => 2 * ny - 1 - j,
            Stagger::NorthEdge => 2 * ny - 2 - j,
            Stagger::Corner => 2 * ny - j,
        }
    }

    /// True for north halo rows of a tripolar grid.
    pub fn is_fold_halo(&self, j: i64) -> bool {
        self.topology == Topology::Tripolar && j >= self.rows()
    }
}

pub fn owner_of(spec: &GridSpec, i: i64, j: i64) -> Result<OwnedRef, GridError> {
    if !spec.in_ring(i, j) {
        return Err(GridError::OutOfRange { i, j });
    }
    let nx = spec.nx as i64;
    let wi = if spec.wraps() { i.rem_euclid(nx) } else { i };
    if !(0..nx).contains(&wi) || j < 0 {
        return Err(GridError::Boundary { i, j });
    }
    if j < spec.rows() {
        return Ok(OwnedRef { i: wi, j, sign: 1 });
    }
    if spec.topology != Topology::Tripolar {
        return Err(GridError::Boundary { i, j });
    }
    Ok(OwnedRef {
        i: spec.fold_column(wi),
        j: spec.fold_row(j),
        sign: -1,
    })
}

pub fn build_owner_map(spec: &GridSpec) -> Result<OwnerMap, GridError> {
    spec.validate()?;
    spec.positions()
        .map(|(i, j)| {
            let owner = match owner_of(spec, i, j) {
                Ok(r) => Owner::Owned(r),
                Err(GridError::Boundary { .. }) => Owner::Boundary,
                Err(e) => return Err(e),
            };
            Ok(((i, j), owner))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub kind: FieldKind,
    pub values: BTreeMap<(i64, i64), f64>,
}

impl Field {
    pub fn from_fn(spec: &GridSpec, kind: FieldKind, f: impl Fn(i64, i64) -> f64) -> Self {
        Field {
            kind,
            values: spec.interior().map(|(i, j)| ((i, j), f(i, j))).collect(),
        }
    }
}

/// Fills every owned halo position with `sign * value(owner)` (vectors) or
/// `value(owner)` (scalars). Interior and boundary positions are untouched.
pub fn halo_exchange(spec: &GridSpec, field: &Field) -> Result<Field, GridError> {
    let map = build_owner_map(spec)?;
    let mut out = field.clone();
    for (&(i, j), owner) in &map {
        if spec.is_interior(i, j) {
            if !field.values.contains_key(&(i, j)) {
                return Err(GridError::MissingValue { i, j });
            }
            continue;
        }
        if let Owner::Owned(r) = owner {
            let v = field.values[&(r.i, r.j)];
            let sign = match field.kind {
                FieldKind::Scalar => 1.0,
                FieldKind::Vector => f64::from(r.sign),
            };
            out.values.insert((i, j), sign * v);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LawResult {
    pub law: &'static str,
    pub passed: bool,
    /// First failing position, if any.
    pub counterexample: Option<(i64, i64)>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TopologyReport {
    pub spec: GridSpec,
    pub positions: usize,
    pub boundary_positions: usize,
    pub laws: Vec<LawResult>,
}

impl TopologyReport {
    pub fn passed(&self) -> bool {
        self.laws.iter().all(|l| l.passed)
    }
}

fn law(name: &'static str, failure: Option<((i64, i64), String)>, ok_detail: &str) -> LawResult {
    match failure {
        None => LawResult {
            law: name,
            passed: true,
            counterexample: None,
            detail: ok_detail.to_string(),
        },
        Some((p, detail)) => LawResult {
            law: name,
            passed: false,
            counterexample: Some(p),
            detail,
        },
    }
}

/// Checks the topology laws against an arbitrary map for `spec`.
pub fn check_owner_map(spec: &GridSpec, map: &OwnerMap) -> TopologyReport {
    let nx = spec.nx as i64;
    let expected_positions: Vec<_> = spec.positions().collect();
    let owned = |p: &(i64, i64)| match map.get(p) {
        Some(Owner::Owned(r)) => Some(*r),
        _ => None,
    };
    let mut laws = Vec::new();

    let missing = expected_positions
        .iter()
        .find(|p| !map.contains_key(p))
        .map(|p| (*p, "no entry".to_string()))
        .or_else(|| {
            map.keys()
                .find(|(i, j)| !spec.in_ring(*i, *j))
                .map(|p| (*p, "entry outside the halo ring".to_string()))
        });
    laws.push(law("totality", missing, "every ring position has an entry"));

    let interior = spec.interior().find_map(|(i, j)| match map.get(&(i, j)) {
        Some(Owner::Owned(r)) if *r == (OwnedRef { i, j, sign: 1 }) => None,
        other => Some(((i, j), format!("interior maps to {other:?}"))),
    });
    laws.push(law("interior identity", interior, "interior positions own themselves"));

    let closure = expected_positions.iter().find_map(|&(i, j)| {
        let wrapped_ok = spec.wraps() || (0..nx).contains(&i);
        let north_ok = j < spec.rows() || spec.topology == Topology::Tripolar;
        let should_be_boundary = j < 0 || !wrapped_ok || !north_ok;
        let is_boundary = matches!(map.get(&(i, j)), Some(Owner::Boundary));
        (should_be_boundary != is_boundary).then(|| {
            let what = if should_be_boundary { "expected boundary" } else { "unexpected boundary" };
            ((i, j), what.to_string())
        })
    });
    laws.push(law("boundary closure", closure, "boundary positions are exactly the closed edges"));

    let owner_of_owner = map.iter().find_map(|(p, o)| {
        let Owner::Owned(r) = o else { return None };
        if !spec.is_interior(r.i, r.j) {
            return Some((*p, format!("owner ({}, {}) is not interior", r.i, r.j)));
        }
        match owned(&(r.i, r.j)) {
            Some(rr) if (rr.i, rr.j) == (r.i, r.j) => None,
            _ => Some((*p, "owner does not own itself".to_string())),
        }
    });
    laws.push(law("owner of owner", owner_of_owner, "owners are interior fixed points"));

    // Non-fold halo: translation by a multiple of nx, same row.
    let wrap = map.iter().find_map(|(&(i, j), o)| {
        let Owner::Owned(r) = o else { return None };
        if spec.is_interior(i, j) || spec.is_fold_halo(j) {
            return None;
        }
        let ok = r.j == j && (i - r.i).rem_euclid(nx) == 0 && (0..nx).contains(&r.i);
        (!ok).then(|| ((i, j), format!("wraps to ({}, {})", r.i, r.j)))
    });
    let bijection = spec
        .wraps()
        .then(|| {
            let h = spec.halo as i64;
            (1..=h).flat_map(|k| [-k, nx - 1 + k]).find_map(|col| {
                let mut seen = BTreeMap::new();
                for j in 0..spec.rows() {
                    if let Some(r) = owned(&(col, j)) {
                        *seen.entry((r.i, r.j)).or_insert(0) += 1;
                    }
                }
                let column = col.rem_euclid(nx);
                let bijective = seen.len() == spec.rows() as usize
                    && seen.iter().all(|(&(i, _), &n)| i == column && n == 1);
                (!bijective).then(|| ((col, 0), "halo column is not a bijection onto an interior column".to_string()))
            })
        })
        .flatten();
    laws.push(law(
        "wrap translation",
        wrap.or(bijection),
        "east-west halo columns copy interior columns",
    ));

    // Fold halo: owner is the geometric reflection of the position.
    let involution = map.iter().find_map(|(&(i, j), o)| {
        if !spec.is_fold_halo(j) {
            return None;
        }
        let Owner::Owned(r) = o else {
            return Some(((i, j), "fold halo is not owned".to_string()));
        };
        let (px, py) = spec.stagger.doubled_position(i, j);
        let (qx, qy) = spec.stagger.doubled_position(r.i, r.j);
        let ok = (px + qx).rem_euclid(2 * nx) == 0 && py + qy == 4 * spec.ny as i64;
        (!ok).then(|| ((i, j), format!("({}, {}) is not the reflection", r.i, r.j)))
    });
    let column_involution = (spec.topology == Topology::Tripolar)
        .then(|| {
            (0..nx).find_map(|i| {
                let f = spec.fold_column(i);
                let back = spec.fold_column(f);
                (!(0..nx).contains(&f) || back != i).then(|| ((i, spec.rows()), format!("f(f({i})) = {back}")))
            })
        })
        .flatten();
    laws.push(law(
        "fold involution",
        involution.or(column_involution),
        "fold owners are reflections and the column map is an involution",
    ));

    let coverage = (spec.topology == Topology::Tripolar)
        .then(|| {
            (spec.rows()..spec.rows() + spec.halo as i64).find_map(|j| {
                let mut count = vec![0usize; spec.nx];
                let mut row = None;
                for i in 0..nx {
                    let r = owned(&(i, j))?;
                    if *row.get_or_insert(r.j) != r.j || !(0..nx).contains(&r.i) {
                        return Some(((i, j), "fold halo row spans several owner rows".to_string()));
                    }
                    count[r.i as usize] += 1;
                }
                count
                    .iter()
                    .position(|c| *c != 1)
                    .map(|c| ((c as i64, j), format!("owner column {c} used {} times", count[c])))
            })
        })
        .flatten();
    laws.push(law(
        "fold coverage",
        coverage,
        "each fold halo row covers its owner row exactly once",
    ));

    let signs = map.iter().find_map(|(&(i, j), o)| {
        let Owner::Owned(r) = o else { return None };
        let expected = if spec.is_fold_halo(j) { -1 } else { 1 };
        (r.sign != expected).then(|| ((i, j), format!("sign {} where {expected} expected", r.sign)))
    });
    laws.push(law("sign consistency", signs, "sign is -1 exactly across the fold"));

    TopologyReport {
        spec: *spec,
        positions: map.len(),
        boundary_positions: map.values().filter(|o| **o == Owner::Boundary).count(),
        laws,
    }
}

pub fn check_topology(spec: &GridSpec) -> Result<TopologyReport, GridError> {
    Ok(check_owner_map(spec, &build_owner_map(spec)?))
}

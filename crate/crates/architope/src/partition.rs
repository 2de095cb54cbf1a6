//! Compact partitions of the input space: ordered families of
//! box-minus-box regions with null pairwise overlap, together with
//! membership queries and region masses.
//!
//! Regions are deliberately restricted to "closed box minus open box".
//! That shape admits exact membership tests and exact bounding boxes,
//! and the shell family below covers every use in the experiment suite.

use serde::{Deserialize, Serialize};

use crate::error::PartitionError;
use crate::geometry::AxisBox;
use crate::measure::{integrate, integrate_region, MeasureSpec, QuadratureScheme};

/// Mass at or below this threshold counts as null.
pub const MASS_TOL: f64 = 1e-10;

/// A compact region `outer \ interior(inner)`, closed by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionData", into = "RegionData")]
pub struct Region {
    pub index: usize,
    outer: AxisBox,
    inner: Option<AxisBox>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RegionData {
    index: usize,
    outer: AxisBox,
    #[serde(skip_serializing_if = "Option::is_none")]
    inner: Option<AxisBox>,
}

impl TryFrom<RegionData> for Region {
    type Error = PartitionError;

    fn try_from(data: RegionData) -> Result<Self, Self::Error> {
        Region::new(data.index, data.outer, data.inner)
    }
}

impl From<Region> for RegionData {
    fn from(r: Region) -> Self {
        RegionData {
            index: r.index,
            outer: r.outer,
            inner: r.inner,
        }
    }
}

impl Region {
    pub fn new(index: usize, outer: AxisBox, inner: Option<AxisBox>) -> Result<Self, PartitionError> {
        if index == 0 {
            return Err(PartitionError::InvalidRegion {
                region: index,
                message: "region indices start at 1".into(),
            });
        }
        if let Some(inner) = &inner {
            if !outer.strictly_contains_box(inner) {
                return Err(PartitionError::InvalidRegion {
                    region: index,
                    message: "inner box must lie strictly inside the outer box".into(),
                });
            }
        }
        Ok(Self { index, outer, inner })
    }

    pub fn solid(index: usize, outer: AxisBox) -> Result<Self, PartitionError> {
        Self::new(index, outer, None)
    }

    pub fn outer(&self) -> &AxisBox {
        &self.outer
    }

    pub fn inner(&self) -> Option<&AxisBox> {
        self.inner.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.outer.dimension()
    }

    /// `x` belongs to the region iff it is in the closed outer box and
    /// not in the open inner box.
    pub fn membership(&self, x: &[f64]) -> bool {
        self.outer.contains_closed(x)
            && self.inner.as_ref().map_or(true, |i| !i.contains_open(x))
    }

    pub fn bounding_box(&self) -> &AxisBox {
        &self.outer
    }

    /// Exact decomposition of the region into at most `2d` disjoint
    /// boxes (shared faces are null).  Integrating slab by slab keeps
    /// region boundaries off the interior of every quadrature grid, so
    /// functions vanishing on the region integrate to exactly zero and
    /// smooth integrands see no indicator jumps.
    pub fn slabs(&self) -> Vec<AxisBox> {
        let Some(inner) = &self.inner else {
            return vec![self.outer.clone()];
        };
        let d = self.dimension();
        let mut out = Vec::with_capacity(2 * d);
        for k in 0..d {
            // axes before k are pinned to the inner range, axes after k
            // keep the full outer range; axis k takes each side gap
            for (lo_k, hi_k) in [
                (self.outer.lo[k], inner.lo[k]),
                (inner.hi[k], self.outer.hi[k]),
            ] {
                let mut lo = Vec::with_capacity(d);
                let mut hi = Vec::with_capacity(d);
                for j in 0..d {
                    if j < k {
                        lo.push(inner.lo[j]);
                        hi.push(inner.hi[j]);
                    } else if j == k {
                        lo.push(lo_k);
                        hi.push(hi_k);
                    } else {
                        lo.push(self.outer.lo[j]);
                        hi.push(self.outer.hi[j]);
                    }
                }
                if let Ok(slab) = AxisBox::new(lo, hi) {
                    out.push(slab);
                }
            }
        }
        out
    }
}

#[derive(Clone, Serialize, Deserialize)]
struct PartitionData {
    dimension: usize,
    regions: Vec<Region>,
}

/// An ordered family of regions indexed `1..=N`.
///
/// Immutable after construction; all queries are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionData", into = "PartitionData")]
pub struct Partition {
    dimension: usize,
    regions: Vec<Region>,
}

impl TryFrom<PartitionData> for Partition {
    type Error = PartitionError;

    fn try_from(data: PartitionData) -> Result<Self, Self::Error> {
        Partition::new(data.dimension, data.regions)
    }
}

impl From<Partition> for PartitionData {
    fn from(p: Partition) -> Self {
        PartitionData {
            dimension: p.dimension,
            regions: p.regions,
        }
    }
}

impl Partition {
    pub fn new(dimension: usize, regions: Vec<Region>) -> Result<Self, PartitionError> {
        if regions.is_empty() {
            return Err(PartitionError::Empty);
        }
        for (i, region) in regions.iter().enumerate() {
            if region.index != i + 1 {
                return Err(PartitionError::BadIndexing {
                    expected: i + 1,
                    found: region.index,
                });
            }
            if region.dimension() != dimension {
                return Err(PartitionError::InvalidRegion {
                    region: region.index,
                    message: format!(
                        "region has dimension {}, partition has {dimension}",
                        region.dimension()
                    ),
                });
            }
        }
        Ok(Self { dimension, regions })
    }

    /// The shell family: region 1 is the central cube `[-w, w]^d`, and
    /// region n >= 2 is `[-nw, nw]^d` minus the open cube of half-width
    /// `(n-1)w`.  The union of regions `1..=N` is exactly `[-Nw, Nw]^d`.
    pub fn shells(dimension: usize, count: usize, width: f64) -> Result<Self, PartitionError> {
        if !(width.is_finite() && width > 0.0) {
            return Err(PartitionError::InvalidShellWidth { width });
        }
        if count == 0 {
            return Err(PartitionError::Empty);
        }
        let mut regions = Vec::with_capacity(count);
        for n in 1..=count {
            let outer = AxisBox::centered_cube(dimension, n as f64 * width)?;
            let inner = if n == 1 {
                None
            } else {
                Some(AxisBox::centered_cube(dimension, (n - 1) as f64 * width)?)
            };
            regions.push(Region::new(n, outer, inner)?);
        }
        Self::new(dimension, regions)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, index: usize) -> Result<&Region, PartitionError> {
        if index == 0 || index > self.regions.len() {
            return Err(PartitionError::IndexOutOfRange {
                region: index,
                len: self.regions.len(),
            });
        }
        Ok(&self.regions[index - 1])
    }

    /// Smallest region index containing `x`; `None` when `x` falls
    /// outside the union.  Boundary points shared by several regions go
    /// to the smallest index, so evaluation is single-valued.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.regions
            .iter()
            .find(|r| r.membership(x))
            .map(|r| r.index)
    }

    /// Hull of all region bounding boxes.
    pub fn bounding_box(&self) -> AxisBox {
        let mut acc = self.regions[0].bounding_box().clone();
        for r in &self.regions[1..] {
            acc = acc.hull(r.bounding_box());
        }
        acc
    }

    /// `mu(K_n)`; fails when the mass is null (the region cannot carry a
    /// local model) or not finite.
    pub fn region_mass(
        &self,
        index: usize,
        measure: &MeasureSpec,
        quad: &QuadratureScheme,
    ) -> Result<f64, PartitionError> {
        let region = self.region(index)?;
        let mass = integrate_region(&|_| 1.0, region, measure, quad)?;
        if mass <= MASS_TOL {
            return Err(PartitionError::AssumptionViolation {
                region: index,
                mass,
                tol: MASS_TOL,
            });
        }
        Ok(mass)
    }

    /// Checks the partition axioms numerically: null pairwise overlaps,
    /// null uncovered residual inside the bounding box, and positive
    /// finite mass per region.
    pub fn validate(
        &self,
        measure: &MeasureSpec,
        quad: &QuadratureScheme,
    ) -> Result<PartitionCheck, PartitionError> {
        let mut max_overlap = 0.0f64;
        for a in &self.regions {
            for b in &self.regions {
                if b.index <= a.index {
                    continue;
                }
                if let Some(cap) = intersect(a.bounding_box(), b.bounding_box()) {
                    let overlap = integrate(
                        &|x| {
                            if a.membership(x) && b.membership(x) {
                                1.0
                            } else {
                                0.0
                            }
                        },
                        &cap,
                        measure,
                        quad,
                    )?;
                    max_overlap = max_overlap.max(overlap);
                }
            }
        }
        let covering_residual = integrate(
            &|x| if self.locate(x).is_none() { 1.0 } else { 0.0 },
            &self.bounding_box(),
            measure,
            quad,
        )?;
        let mut region_masses = Vec::with_capacity(self.regions.len());
        let mut mass_violations = Vec::new();
        for r in &self.regions {
            let mass = integrate_region(&|_| 1.0, r, measure, quad)?;
            if mass <= MASS_TOL || !mass.is_finite() {
                mass_violations.push(r.index);
            }
            region_masses.push((r.index, mass));
        }
        Ok(PartitionCheck {
            max_overlap_mass: max_overlap,
            covering_residual,
            region_masses,
            mass_violations,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, PartitionError> {
        serde_json::from_str(s).map_err(|e| PartitionError::InvalidRegion {
            region: 0,
            message: e.to_string(),
        })
    }
}

fn intersect(a: &AxisBox, b: &AxisBox) -> Option<AxisBox> {
    let lo: Vec<f64> = a
        .lo
        .iter()
        .zip(&b.lo)
        .map(|(&x, &y)| x.max(y))
        .collect();
    let hi: Vec<f64> = a
        .hi
        .iter()
        .zip(&b.hi)
        .map(|(&x, &y)| x.min(y))
        .collect();
    AxisBox::new(lo, hi).ok()
}

/// Result of [`Partition::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct PartitionCheck {
    pub max_overlap_mass: f64,
    pub covering_residual: f64,
    pub region_masses: Vec<(usize, f64)>,
    pub mass_violations: Vec<usize>,
}

impl PartitionCheck {
    pub fn is_valid(&self) -> bool {
        self.max_overlap_mass <= MASS_TOL
            && self.covering_residual <= MASS_TOL
            && self.mass_violations.is_empty()
    }
}

//! Axis-aligned boxes, the only geometric primitive the library needs.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// A closed axis-aligned box `[lo_1, hi_1] × … × [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    /// Builds a box, rejecting mismatched or non-finite bounds and
    /// non-positive side lengths.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                lo: lo.len(),
                hi: hi.len(),
            });
        }
        for (k, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(GeometryError::NonFiniteBound { axis: k });
            }
            if a >= b {
                return Err(GeometryError::DegenerateSide { axis: k, lo: a, hi: b });
            }
        }
        Ok(Self { lo, hi })
    }

    /// The centered cube `[-half, half]^d`.
    pub fn centered_cube(dimension: usize, half: f64) -> Result<Self, GeometryError> {
        Self::new(vec![-half; dimension], vec![half; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a)
            .product()
    }

    /// Closed membership: every coordinate within `[lo_k, hi_k]`.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    /// Open membership: every coordinate strictly inside `(lo_k, hi_k)`.
    pub fn contains_open(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&a, &b))| v > a && v < b)
    }

    /// Whether `inner` lies strictly inside this box's interior.
    pub fn strictly_contains_box(&self, inner: &AxisBox) -> bool {
        inner.dimension() == self.dimension()
            && inner
                .lo
                .iter()
                .zip(&inner.hi)
                .zip(self.lo.iter().zip(&self.hi))
                .all(|((&ilo, &ihi), (&olo, &ohi))| ilo > olo && ihi < ohi)
    }

    /// Smallest box containing both operands.
    pub fn hull(&self, other: &AxisBox) -> AxisBox {
        let lo = self
            .lo
            .iter()
            .zip(&other.lo)
            .map(|(&a, &b)| a.min(b))
            .collect();
        let hi = self
            .hi
            .iter()
            .zip(&other.hi)
            .map(|(&a, &b)| a.max(b))
            .collect();
        AxisBox { lo, hi }
    }

    /// Splits the box in half along `axis`; used by integration tests.
    pub fn bisect(&self, axis: usize) -> (AxisBox, AxisBox) {
        assert!(axis < self.dimension());
        let mid = 0.5 * (self.lo[axis] + self.hi[axis]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[axis] = mid;
        right.lo[axis] = mid;
        (left, right)
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Partition of `[0, 1]` into bins `[e_m, e_{m+1})`, the last bin closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr<T>", into = "GridRepr<T>")]
#[serde(bound = "T: Scalar")]
pub struct BinGrid<T: Scalar> {
    edges: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct GridRepr<T> {
    edges: Vec<T>,
}

impl<T: Scalar> BinGrid<T> {
    pub fn equal_width(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidGrid("bin count must be positive".into()));
        }
        let m = T::from_usize_lossy(count);
        let edges = (0..=count).map(|i| T::from_usize_lossy(i) / m).collect();
        Ok(Self { edges })
    }

    pub fn from_edges(edges: Vec<T>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidGrid("need at least two edges".into()));
        }
        if edges[0] != T::zero() || edges[edges.len() - 1] != T::one() {
            return Err(Error::InvalidGrid("edges must start at 0 and end at 1".into()));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    pub fn count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn bounds(&self, m: usize) -> (T, T) {
        (self.edges[m], self.edges[m + 1])
    }

    pub fn width(&self, m: usize) -> T {
        self.edges[m + 1] - self.edges[m]
    }

    pub fn midpoint(&self, m: usize) -> T {
        (self.edges[m] + self.edges[m + 1]) * T::half()
    }

    pub fn midpoints(&self) -> Vec<T> {
        (0..self.count()).map(|m| self.midpoint(m)).collect()
    }

    /// Bin holding `s`; values outside `[0, 1]` are clamped to the end bins.
    pub fn locate(&self, s: T) -> usize {
        let last = self.count() - 1;
        if s >= T::one() {
            return last;
        }
        // number of edges <= s, minus one
        let idx = self.edges.partition_point(|&e| e <= s);
        idx.saturating_sub(1).min(last)
    }
}

impl<T: Scalar> TryFrom<GridRepr<T>> for BinGrid<T> {
    type Error = Error;
    fn try_from(r: GridRepr<T>) -> Result<Self> {
        Self::from_edges(r.edges)
    }
}

impl<T: Scalar> From<BinGrid<T>> for GridRepr<T> {
    fn from(g: BinGrid<T>) -> Self {
        Self { edges: g.edges }
    }
}

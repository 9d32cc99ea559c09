use crate::error::{Error, Result};

/// Largest supported chart dimension.
pub const MAX_DIM: usize = 4;

/// Inclusive box of node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub lo: [usize; MAX_DIM],
    pub hi: [usize; MAX_DIM],
}

impl IndexBox {
    pub fn contains(&self, idx: &[usize]) -> bool {
        idx.iter()
            .enumerate()
            .all(|(a, &i)| i >= self.lo[a] && i <= self.hi[a])
    }

    pub fn is_empty(&self, n: usize) -> bool {
        (0..n).any(|a| self.lo[a] > self.hi[a])
    }

    pub fn intersect(&self, other: &IndexBox, n: usize) -> IndexBox {
        let mut out = *self;
        for a in 0..n {
            out.lo[a] = self.lo[a].max(other.lo[a]);
            out.hi[a] = self.hi[a].min(other.hi[a]);
        }
        out
    }

    /// Shrinks the box by `k` nodes on every side.
    pub fn shrink(&self, k: usize, n: usize) -> IndexBox {
        let mut out = *self;
        for a in 0..n {
            out.lo[a] = self.lo[a] + k;
            out.hi[a] = self.hi[a].saturating_sub(k);
        }
        out
    }
}

/// Uniform grid on an axis-aligned box `[a_1,b_1] × ... × [a_n,b_n]`.
///
/// Nodes are stored with axis 0 varying fastest. The outer `margin` cells of
/// every face form the boundary collar; test objects must vanish there.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartGrid {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    m: Vec<usize>,
    h: Vec<f64>,
    margin: usize,
    strides: Vec<usize>,
    len: usize,
}

impl ChartGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, m: Vec<usize>, margin: usize) -> Result<Self> {
        let n = lo.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Grid(format!("dimension {n} outside 1..={MAX_DIM}")));
        }
        if hi.len() != n || m.len() != n {
            return Err(Error::Grid(
                "bounds and node counts disagree in length".into(),
            ));
        }
        if margin < 2 {
            return Err(Error::Grid(format!("margin {margin} must be at least 2")));
        }
        let mut h = Vec::with_capacity(n);
        for a in 0..n {
            if m[a] < 5 {
                return Err(Error::Grid(format!(
                    "axis {} has {} nodes, need at least 5",
                    a + 1,
                    m[a]
                )));
            }
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::Grid(format!(
                    "axis {} has empty interval [{}, {}]",
                    a + 1,
                    lo[a],
                    hi[a]
                )));
            }
            if 2 * margin > m[a] - 1 {
                return Err(Error::Grid(format!(
                    "margin {margin} leaves no interior on axis {} with {} nodes",
                    a + 1,
                    m[a]
                )));
            }
            h.push((hi[a] - lo[a]) / (m[a] - 1) as f64);
        }
        let mut strides = vec![1; n];
        for a in 1..n {
            strides[a] = strides[a - 1] * m[a - 1];
        }
        let len = m.iter().product();
        Ok(ChartGrid {
            n,
            lo,
            hi,
            m,
            h,
            margin,
            strides,
            len,
        })
    }

    /// Same interval and node count on every axis.
    pub fn cube(n: usize, lo: f64, hi: f64, m: usize, margin: usize) -> Result<Self> {
        ChartGrid::new(vec![lo; n], vec![hi; n], vec![m; n], margin)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nodes(&self, axis: usize) -> usize {
        self.m[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn box_volume(&self) -> f64 {
        (0..self.n).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = flat;
        for a in 0..self.n {
            idx[a] = rest % self.m[a];
            rest /= self.m[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        (0..self.n).map(|a| idx[a] * self.strides[a]).sum()
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.m[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.h[axis]
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        (0..self.n).map(|a| self.axis_coord(a, idx[a])).collect()
    }

    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let idx = self.multi_index(flat);
        for a in 0..self.n {
            out[a] = self.axis_coord(a, idx[a]);
        }
    }

    /// Number of cells between the node and the nearest face.
    pub fn face_distance(&self, flat: usize) -> usize {
        let idx = self.multi_index(flat);
        (0..self.n)
            .map(|a| idx[a].min(self.m[a] - 1 - idx[a]))
            .min()
            .unwrap_or(0)
    }

    pub fn is_interior(&self, flat: usize) -> bool {
        self.face_distance(flat) >= self.margin
    }

    pub fn full_box(&self) -> IndexBox {
        let mut b = IndexBox {
            lo: [0; MAX_DIM],
            hi: [0; MAX_DIM],
        };
        for a in 0..self.n {
            b.hi[a] = self.m[a] - 1;
        }
        b
    }

    /// Nodes at least `k` cells from every face.
    pub fn inner_box(&self, k: usize) -> IndexBox {
        self.full_box().shrink(k, self.n)
    }

    pub fn interior_box(&self) -> IndexBox {
        self.inner_box(self.margin)
    }

    /// Nodes whose coordinates lie in the closed coordinate box (with a small
    /// tolerance so that box faces on grid lines are included).
    pub fn snap_box(&self, region: &[(f64, f64)]) -> Result<IndexBox> {
        if region.len() != self.n {
            return Err(Error::Invalid(format!(
                "region has {} axes, grid has {}",
                region.len(),
                self.n
            )));
        }
        let mut b = self.full_box();
        for a in 0..self.n {
            let (r0, r1) = region[a];
            let tol = 1e-9;
            if r0 < self.lo[a] - tol * self.h[a] || r1 > self.hi[a] + tol * self.h[a] {
                return Err(Error::Invalid(format!(
                    "region [{r0}, {r1}] leaves the grid on axis {}",
                    a + 1
                )));
            }
            let i0 = ((r0 - self.lo[a]) / self.h[a] - tol).ceil().max(0.0) as usize;
            let i1 = ((r1 - self.lo[a]) / self.h[a] + tol).floor() as usize;
            b.lo[a] = i0;
            b.hi[a] = i1.min(self.m[a] - 1);
        }
        Ok(b)
    }

    pub fn box_region(&self, b: &IndexBox) -> Vec<(f64, f64)> {
        (0..self.n)
            .map(|a| (self.axis_coord(a, b.lo[a]), self.axis_coord(a, b.hi[a])))
            .collect()
    }

    /// Flat indices of every node in the box, axis 0 fastest.
    pub fn box_nodes(&self, b: &IndexBox) -> Vec<usize> {
        if b.is_empty(self.n) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut idx = b.lo;
        loop {
            out.push(self.flat_index(&idx[..self.n]));
            let mut a = 0;
            loop {
                if a == self.n {
                    return out;
                }
                if idx[a] < b.hi[a] {
                    idx[a] += 1;
                    break;
                }
                idx[a] = b.lo[a];
                a += 1;
            }
        }
    }

    /// Neighbour `offset` steps along `axis`, if it exists.
    pub fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let i = (flat / self.strides[axis]) % self.m[axis];
        let j = i as isize + offset;
        if j < 0 || j >= self.m[axis] as isize {
            None
        } else {
            Some((flat as isize + offset * self.strides[axis] as isize) as usize)
        }
    }
}

//! Partitions of subintervals of `(0, 1]` into half-open cells.

use crate::error::{Error, Result};

/// Cells `(b_i, b_{i+1}]` given by strictly increasing breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    breaks: Vec<f64>,
}

impl Mesh {
    pub fn from_breaks(breaks: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::Parameter("a mesh needs at least one cell".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("mesh breakpoints must increase strictly".into()));
        }
        Ok(Self { breaks })
    }

    /// `cells` equal cells on `(lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(hi > lo) {
            return Err(Error::Parameter(format!(
                "cannot split ({lo}, {hi}] into {cells} cells"
            )));
        }
        let h = (hi - lo) / cells as f64;
        let mut breaks: Vec<f64> = (0..=cells).map(|i| lo + h * i as f64).collect();
        breaks[cells] = hi;
        Self::from_breaks(breaks)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    #[inline]
    pub fn lo(&self, i: usize) -> f64 {
        self.breaks[i]
    }

    #[inline]
    pub fn hi(&self, i: usize) -> f64 {
        self.breaks[i + 1]
    }

    #[inline]
    pub fn width(&self, i: usize) -> f64 {
        self.breaks[i + 1] - self.breaks[i]
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        self.breaks[self.len()]
    }

    /// Index of the cell `(b_i, b_{i+1}]` containing `x`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x > self.start() && x <= self.end()) {
            return None;
        }
        Some(self.breaks.partition_point(|&b| b < x) - 1)
    }

    /// Range of cells meeting `(lo, hi]` in a set of positive length.
    pub fn cells_meeting(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let lo = lo.max(self.start());
        let hi = hi.min(self.end());
        if !(hi > lo) {
            return 0..0;
        }
        // First cell with b_{i+1} > lo, last cell with b_i < hi.
        let first = self.breaks.partition_point(|&b| b <= lo).saturating_sub(1);
        let last = self.breaks.partition_point(|&b| b < hi) - 1;
        first..last + 1
    }

    /// `(cell, overlap length)` for every cell meeting `(lo, hi]`.
    pub fn overlaps(&self, lo: f64, hi: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cells_meeting(lo, hi).filter_map(move |i| {
            let o = self.hi(i).min(hi) - self.lo(i).max(lo);
            (o > 0.0).then_some((i, o))
        })
    }
}

/// Mesh of `(0, 1]` with breakpoints `(i / M)^g`, refined toward the neutral
/// fixed point at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedMesh {
    mesh: Mesh,
    grading: f64,
}

impl GradedMesh {
    pub fn new(size: usize, grading: f64) -> Result<Self> {
        if size < 2 {
            return Err(Error::Parameter(format!("mesh size {size} is below 2")));
        }
        if !(grading >= 1.0 && grading.is_finite()) {
            return Err(Error::Parameter(format!("grading exponent {grading} must be >= 1")));
        }
        let m = size as f64;
        let mut breaks: Vec<f64> = (0..=size).map(|i| (i as f64 / m).powf(grading)).collect();
        breaks[size] = 1.0;
        // Very strong grading can underflow the first breakpoints.
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter(format!(
                "grading {grading} with {size} cells underflows near 0"
            )));
        }
        Ok(Self {
            mesh: Mesh { breaks },
            grading,
        })
    }

    /// Default grading `1 / (1 - alpha)`, which equidistributes cell masses
    /// for a density behaving like `x^-alpha`.
    pub fn for_alpha(size: usize, alpha: f64) -> Result<Self> {
        Self::new(size, 1.0 / (1.0 - alpha))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn size(&self) -> usize {
        self.mesh.len()
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Cell containing `x` in `(0, 1]`, from the closed-form inverse of the
    /// grading with a final fix-up against the stored breakpoints.
    #[inline]
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x > 0.0 && x <= 1.0) {
            return None;
        }
        let m = self.size();
        let guess = (m as f64 * x.powf(1.0 / self.grading)).ceil() as usize;
        let mut i = guess.clamp(1, m) - 1;
        let b = &self.mesh.breaks;
        while i > 0 && x <= b[i] {
            i -= 1;
        }
        while i + 1 < m && x > b[i + 1] {
            i += 1;
        }
        Some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn graded_breakpoints() {
        let g = GradedMesh::new(4, 2.0).unwrap();
        assert_eq!(g.mesh().breaks(), &[0.0, 0.0625, 0.25, 0.5625, 1.0]);
        assert!(GradedMesh::new(1, 2.0).is_err());
        assert!(GradedMesh::new(8, 0.5).is_err());
    }

    #[test]
    fn uniform_mesh() {
        let m = Mesh::uniform(0.5, 1.0, 4).unwrap();
        assert_eq!(m.breaks(), &[0.5, 0.625, 0.75, 0.875, 1.0]);
        assert_eq!(m.locate(0.625), Some(0));
        assert_eq!(m.locate(0.6250001), Some(1));
        assert_eq!(m.locate(0.5), None);
        assert_eq!(m.locate(1.0), Some(3));
    }

    #[test]
    fn overlaps_sum_to_length() {
        let m = Mesh::uniform(0.0, 1.0, 10).unwrap();
        let total: f64 = m.overlaps(0.15, 0.73).map(|(_, o)| o).sum();
        assert!((total - 0.58).abs() < 1e-15);
        assert_eq!(m.cells_meeting(0.2, 0.3), 2..3);
        assert_eq!(m.overlaps(0.2, 0.3).count(), 1);
        assert_eq!(m.cells_meeting(0.3, 0.3), 0..0);
    }

    proptest! {
        #[test]
        fn fast_locate_agrees_with_search(x in 1e-300f64..=1.0, size in 2usize..5000, g in 1.0f64..6.0) {
            if let Ok(mesh) = GradedMesh::new(size, g) {
                prop_assert_eq!(mesh.locate(x), mesh.mesh().locate(x));
            }
        }
    }
}

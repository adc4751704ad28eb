//! Invariant density by Ulam's method, with a Birkhoff-average cross-check.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::MapParams;
use crate::mesh::GradedMesh;
use crate::operator::{OperatorKind, OperatorMatrix};
use crate::rng::{orbit_rng, uniform_in_y};
use crate::sum::CompensatedSum;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Ulam matrix of `T` on `mesh`.
///
/// Each cell is split at `1/2` when needed; on each branch piece the image is
/// an interval, and the preimage of every mesh cell it meets is obtained by
/// inverting the branch at the mesh breakpoints. Consecutive preimage points
/// partition the cell, so rows telescope to 1.
pub fn build_ulam(params: &MapParams, mesh: &GradedMesh) -> Result<OperatorMatrix> {
    let m = mesh.mesh();
    let rows: Vec<Vec<(usize, f64)>> = (0..m.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let (lo, hi) = (m.lo(i), m.hi(i));
            let width = hi - lo;
            let mut row = Vec::new();
            let mut piece = |l: f64, h: f64, left: bool| {
                if left && i + 1 < m.len() && params.step(h) <= m.hi(i + 1) {
                    // Near 0 the sliver (u, h] escaping to the next cell is far
                    // below one ulp of h, so take it from h - u = u (2u)^alpha.
                    let u = params.left_inverse_unchecked(h);
                    let gap = u * (2.0 * u).powf(params.alpha());
                    if gap < h - l {
                        row.push((i, (h - l - gap) / width));
                        row.push((i + 1, gap / width));
                        return;
                    }
                }
                let (tl, th) = if left {
                    (params.step(l), params.step(h))
                } else {
                    (2.0 * l - 1.0, 2.0 * h - 1.0)
                };
                let mut prev = l;
                let cells = m.cells_meeting(tl, th);
                let last = cells.end - 1;
                for j in cells {
                    let pre = if j == last {
                        h
                    } else {
                        let b = m.hi(j);
                        if left {
                            params.left_inverse_unchecked(b)
                        } else {
                            0.5 * (1.0 + b)
                        }
                        .clamp(prev, h)
                    };
                    if pre > prev {
                        row.push((j, (pre - prev) / width));
                    }
                    prev = pre;
                }
            };
            if hi <= 0.5 {
                piece(lo, hi, true);
            } else if lo >= 0.5 {
                piece(lo, hi, false);
            } else {
                piece(lo, 0.5, true);
                piece(0.5, hi, false);
            }
            row
        })
        .collect();
    OperatorMatrix::from_rows(OperatorKind::Ulam, m.len(), rows)
}

/// Cell-average density of the invariant probability measure on a graded mesh.
#[derive(Debug, Clone)]
pub struct InvariantDensity {
    mesh: GradedMesh,
    weights: Vec<f64>,
    /// `cumulative[i]` is the mass of cells `0..i`.
    cumulative: Vec<f64>,
    iterations: usize,
    residual: f64,
}

impl InvariantDensity {
    /// Normalizes nonnegative cell masses into a density.
    pub fn from_masses(mesh: GradedMesh, masses: &[f64]) -> Result<Self> {
        if masses.len() != mesh.size() || masses.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Parameter(
                "cell masses must be nonnegative, one per cell".into(),
            ));
        }
        let total = crate::sum::sum(masses.iter().copied());
        if !(total > 0.0) {
            return Err(Error::Parameter("total mass is zero".into()));
        }
        let m = mesh.mesh();
        let weights = masses
            .iter()
            .enumerate()
            .map(|(i, &v)| v / total / m.width(i))
            .collect();
        let mut cumulative = Vec::with_capacity(masses.len() + 1);
        let mut acc = CompensatedSum::new();
        cumulative.push(0.0);
        for &v in masses {
            acc.add(v / total);
            cumulative.push(acc.value());
        }
        Ok(Self {
            mesh,
            weights,
            cumulative,
            iterations: 0,
            residual: 0.0,
        })
    }

    pub fn mesh(&self) -> &GradedMesh {
        &self.mesh
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_mass(&self, i: usize) -> f64 {
        self.weights[i] * self.mesh.mesh().width(i)
    }

    pub fn total_mass(&self) -> f64 {
        crate::sum::sum((0..self.weights.len()).map(|i| self.cell_mass(i)))
    }

    /// Iterations used by the solver that produced this density (0 if none).
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Last successive-iterate L1 distance of the solver.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Density value at `x`, i.e. the weight of its cell.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.mesh.locate(x).map(|i| self.weights[i])
    }

    /// `mu((0, t])`.
    fn cdf(&self, t: f64) -> f64 {
        match self.mesh.locate(t) {
            None => {
                if t <= 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Some(i) => self.cumulative[i] + self.weights[i] * (t - self.mesh.mesh().lo(i)),
        }
    }

    /// `mu(A)`. Intervals inside one or two cells are integrated directly,
    /// which keeps relative precision for very short intervals.
    pub fn measure_of_interval(&self, a: &Interval) -> f64 {
        self.measure_between(a.lo(), a.hi())
    }

    pub(crate) fn measure_between(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let (i, j) = match (self.mesh.locate(lo.max(f64::MIN_POSITIVE)), self.mesh.locate(hi)) {
            (Some(i), Some(j)) => (i, j),
            _ => return (self.cdf(hi) - self.cdf(lo)).max(0.0),
        };
        let m = self.mesh.mesh();
        if i == j {
            return self.weights[i] * (hi - lo);
        }
        let head = self.weights[i] * (m.hi(i) - lo);
        let tail = self.weights[j] * (hi - m.lo(j));
        let middle = if j > i + 1 {
            self.cumulative[j] - self.cumulative[i + 1]
        } else {
            0.0
        };
        head + middle + tail
    }

    /// `mu(T^{-1} A)` from the exact two-branch preimage.
    pub fn measure_of_preimage(&self, a: &Interval, params: &MapParams) -> f64 {
        a.preimage(params)
            .iter()
            .map(|p| self.measure_of_interval(p))
            .sum()
    }

    /// Writes `cell_lo,cell_hi,weight` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cell_lo,cell_hi,weight")?;
        let m = self.mesh.mesh();
        for (i, w) in self.weights.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", m.lo(i), m.hi(i), w)?;
        }
        Ok(())
    }
}

/// Fixed density of the Ulam chain.
///
/// Cells inside `(0, 1/2]` only send mass to themselves and to cells further
/// right, because `T(x) > x` there. The solver keeps an iterate on the
/// remaining cells, eliminates the left block exactly by forward substitution
/// each sweep, and pushes the result through the rest of the chain. This is
/// power iteration on the chain induced on the cells meeting `(1/2, 1]`,
/// which mixes geometrically, whereas plain power iteration on the full chain
/// inherits the polynomial mixing of the neutral fixed point.
///
/// Starts from the uniform density and stops when two successive normalized
/// full iterates differ by less than `tol` in L1.
pub fn stationary_density(
    ulam: &OperatorMatrix,
    mesh: &GradedMesh,
    tol: f64,
    max_iter: usize,
) -> Result<InvariantDensity> {
    let m = mesh.mesh();
    let n = m.len();
    if ulam.rows() != n || ulam.cols() != n {
        return Err(Error::Parameter("Ulam matrix does not match the mesh".into()));
    }
    let split = m.breaks().partition_point(|&b| b <= 0.5).saturating_sub(1);
    // Cells 0..split lie in (0, 1/2]. Their rows must be upper triangular.
    for i in 0..split {
        if ulam.row(i).any(|(j, _)| j < i) {
            return Err(Error::Parameter(format!(
                "row {i} of the Ulam matrix moves mass toward 0"
            )));
        }
    }
    // 1 - P_ii from the off-diagonal entries, avoiding cancellation near 0.
    let escape: Vec<f64> = (0..split)
        .map(|i| crate::sum::sum(ulam.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v)))
        .collect();
    if escape.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Parameter("a neutral-branch cell never escapes".into()));
    }

    let mut current: Vec<f64> = (0..n).map(|i| m.width(i)).collect();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        next.fill(0.0);
        for i in split..n {
            let mi = current[i];
            for (j, v) in ulam.row(i) {
                next[j] += mi * v;
            }
        }
        // next[0..split] now holds inflow from the right block; solve the
        // left block in increasing order.
        for i in 0..split {
            let u = next[i] / escape[i];
            next[i] = u;
            for (j, v) in ulam.row(i) {
                if j > i {
                    next[j] += u * v;
                }
            }
        }
        let total = crate::sum::sum(next.iter().copied());
        for v in next.iter_mut() {
            *v /= total;
        }
        residual = crate::sum::sum(current.iter().zip(&next).map(|(a, b)| (a - b).abs()));
        std::mem::swap(&mut current, &mut next);
        if residual < tol {
            let mut d = InvariantDensity::from_masses(mesh.clone(), &current)?;
            d.iterations = iteration;
            d.residual = residual;
            return Ok(d);
        }
    }
    Err(Error::Numeric {
        method: "stationary density iteration",
        iterations: max_iter,
        residual,
    })
}

/// Plain power iteration `m <- m P` on cell masses. Only practical on coarse
/// meshes; used as an independent check of [`stationary_density`].
pub fn power_iteration_density(
    ulam: &OperatorMatrix,
    mesh: &GradedMesh,
    tol: f64,
    max_iter: usize,
) -> Result<InvariantDensity> {
    let m = mesh.mesh();
    let mut current: Vec<f64> = (0..m.len()).map(|i| m.width(i)).collect();
    let mut next = vec![0.0; m.len()];
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        ulam.vec_mul_into(&current, &mut next);
        let total = crate::sum::sum(next.iter().copied());
        next.iter_mut().for_each(|v| *v /= total);
        residual = crate::sum::sum(current.iter().zip(&next).map(|(a, b)| (a - b).abs()));
        std::mem::swap(&mut current, &mut next);
        if residual < tol {
            let mut d = InvariantDensity::from_masses(mesh.clone(), &current)?;
            d.iterations = iteration;
            d.residual = residual;
            return Ok(d);
        }
    }
    Err(Error::Numeric {
        method: "power iteration",
        iterations: max_iter,
        residual,
    })
}

/// Occupation frequencies of `orbits` orbits of `steps` samples each, started
/// uniformly in `Y` and run for `burn_in` unrecorded steps first.
pub fn birkhoff_histogram(
    params: &MapParams,
    mesh: &GradedMesh,
    orbits: usize,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<InvariantDensity> {
    if orbits == 0 || steps == 0 {
        return Err(Error::Parameter("orbits and steps must be positive".into()));
    }
    let cells = mesh.size();
    let counts = (0..orbits as u64)
        .into_par_iter()
        .fold(
            || vec![0u64; cells],
            |mut counts, orbit| {
                let mut rng = orbit_rng(seed, orbit);
                let mut x = uniform_in_y(&mut rng);
                for _ in 0..burn_in {
                    x = params.step(x);
                }
                for _ in 0..steps {
                    x = params.step(x);
                    // x is always in (0, 1].
                    if let Some(i) = mesh.locate(x) {
                        counts[i] += 1;
                    }
                }
                counts
            },
        )
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let masses: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    InvariantDensity::from_masses(mesh.clone(), &masses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(alpha: f64, size: usize) -> (MapParams, GradedMesh, OperatorMatrix) {
        let p = MapParams::new(alpha).unwrap();
        let mesh = GradedMesh::for_alpha(size, alpha).unwrap();
        let u = build_ulam(&p, &mesh).unwrap();
        (p, mesh, u)
    }

    #[test]
    fn ulam_rows_are_stochastic() {
        for alpha in [0.3, 0.5, 0.8] {
            let (_, _, u) = setup(alpha, 1 << 12);
            for (i, s) in u.row_sums().into_iter().enumerate() {
                assert!((s - 1.0).abs() < 1e-12, "row {i}: {s}");
            }
            assert!(u.min_entry() >= 0.0);
        }
    }

    #[test]
    fn right_branch_preimage_halves() {
        // Uniform mesh so that right-branch preimages of cells are easy to name.
        let p = MapParams::new(0.5).unwrap();
        let mesh = GradedMesh::new(8, 1.0).unwrap();
        let u = build_ulam(&p, &mesh).unwrap();
        // Cell (7/8, 1] maps onto (3/4, 1] = cells 6 and 7, half each.
        assert!((u.get(7, 6) - 0.5).abs() < 1e-15);
        assert!((u.get(7, 7) - 0.5).abs() < 1e-15);
        // Cell (1/2, 5/8] maps onto (0, 1/4].
        assert!((u.get(4, 0) - 0.5).abs() < 1e-15);
        assert!((u.get(4, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn leading_eigenvalue_is_one() {
        let (_, mesh, u) = setup(0.5, 256);
        let d = stationary_density(&u, &mesh, 1e-13, 10_000).unwrap();
        let masses: Vec<f64> = (0..mesh.size()).map(|i| d.cell_mass(i)).collect();
        let pushed = u.vec_mul(&masses);
        let err: f64 = masses.iter().zip(&pushed).map(|(a, b)| (a - b).abs()).sum();
        assert!(err < 1e-11);
        assert!((pushed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn induced_solver_matches_plain_power_iteration() {
        let (_, mesh, u) = setup(0.5, 64);
        let fast = stationary_density(&u, &mesh, 1e-13, 10_000).unwrap();
        let slow = power_iteration_density(&u, &mesh, 1e-13, 5_000_000).unwrap();
        let diff: f64 = (0..mesh.size())
            .map(|i| (fast.cell_mass(i) - slow.cell_mass(i)).abs())
            .sum();
        assert!(diff < 1e-9, "L1 difference {diff}");
        assert!(fast.iterations() < slow.iterations());
    }

    #[test]
    fn nonconvergence_is_reported() {
        let (_, mesh, u) = setup(0.5, 64);
        let err = stationary_density(&u, &mesh, 0.0, 3).unwrap_err();
        assert!(matches!(err, Error::Numeric { iterations: 3, .. }));
    }

    #[test]
    fn measure_basics() {
        let (p, mesh, u) = setup(0.5, 1 << 10);
        let d = stationary_density(&u, &mesh, 1e-12, 100_000).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!(d.weights().iter().all(|&w| w >= 0.0));
        assert!((d.measure_of_interval(&Interval::UNIT) - 1.0).abs() < 1e-12);
        // Additivity on aligned and unaligned pieces.
        let b = mesh.mesh().breaks()[700];
        let whole = d.measure_of_interval(&Interval::new(0.2, 0.9).unwrap());
        let parts = d.measure_of_interval(&Interval::new(0.2, b).unwrap())
            + d.measure_of_interval(&Interval::new(b, 0.9).unwrap());
        assert!((whole - parts).abs() < 1e-14);
        let a = Interval::new(0.6, 0.9).unwrap();
        assert!((d.measure_of_preimage(&a, &p) - d.measure_of_interval(&a)).abs() < 1e-2);
    }

    #[test]
    fn density_grows_toward_zero() {
        let (_, mesh, u) = setup(0.5, 1 << 12);
        let d = stationary_density(&u, &mesh, 1e-12, 100_000).unwrap();
        let first: Vec<f64> = d.weights()[..mesh.size() / 10].to_vec();
        assert!(first.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn birkhoff_is_deterministic() {
        let p = MapParams::new(0.5).unwrap();
        let mesh = GradedMesh::for_alpha(256, 0.5).unwrap();
        let a = birkhoff_histogram(&p, &mesh, 8, 5_000, 100, 42).unwrap();
        let b = birkhoff_histogram(&p, &mesh, 8, 5_000, 100, 42).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert!((a.total_mass() - 1.0).abs() < 1e-12);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| birkhoff_histogram(&p, &mesh, 8, 5_000, 100, 42).unwrap());
        assert_eq!(a.weights(), c.weights());
    }

    #[test]
    fn csv_export() {
        let mesh = GradedMesh::new(2, 1.0).unwrap();
        let d = InvariantDensity::from_masses(mesh, &[1.0, 3.0]).unwrap();
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "cell_lo,cell_hi,weight");
        assert_eq!(lines[1], "0.0000000000000000e0,5.0000000000000000e-1,5.0000000000000000e-1");
        assert_eq!(lines.len(), 3);
    }
}

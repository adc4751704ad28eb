//! First-return transfer operators over `Y = (1/2, 1]` and the renewal
//! quantities built from them.
//!
//! `R_n f = T̂^n(1_{I_n} f)` transports what sits on `I_n` back onto `Y`
//! along the inverse branch `psi_n`; `T_n f = 1_Y T̂^n(1_Y f)` collects all
//! returns at time `n`. They are linked by the renewal equation
//!
//! ```text
//! T_n = sum over compositions k_1 + ... + k_l = n of R_{k_1} ... R_{k_l}
//! ```
//!
//! The operators act on cell averages over a uniform mesh of `Y`. The matrix
//! of `R_n` is the cell-average (Ulam) projection of the exact operator:
//!
//! ```text
//! (R_n f)_k = sum_p f_p Leb(piece_p ∩ psi_n(piece_k)) / Leb(piece_k)
//! ```
//!
//! which preserves `∫_{I_n} f` exactly. Inverse branches are handled in the
//! coordinate `z = 2x - 1`, where `psi_n(w)` becomes the backward chain
//! `T_left^{-(n-1)}(w)` and every quantity keeps full relative precision even
//! for `n` in the thousands.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::measure::InvariantDensity;
use crate::mesh::{GradedMesh, Mesh};
use crate::operator::{OperatorKind, OperatorMatrix};
use crate::returns::FirstReturnStructure;
use crate::step::StepFunction;
use crate::sum::{self, CompensatedSum};

pub const DEFAULT_Y_PIECES: usize = 1 << 12;
pub const DEFAULT_MAX_LAG: usize = 512;

/// First-return operators on a uniform mesh of `Y`.
#[derive(Debug, Clone)]
pub struct ReturnOperators {
    structure: FirstReturnStructure,
    mesh: Mesh,
}

/// `R(1)` after folding in the branches beyond `n_max`.
#[derive(Debug, Clone)]
pub struct FirstReturnSum {
    pub matrix: OperatorMatrix,
    /// `Leb` of the return-time tail `{phi > n_max}`, folded into the matrix.
    pub tail_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    /// Positive, normalized to unit integral.
    pub vector: StepFunction,
    pub iterations: usize,
    /// `||A v - value v||_1`.
    pub residual: f64,
}

impl ReturnOperators {
    pub fn new(structure: FirstReturnStructure, pieces: usize) -> Result<Self> {
        let mesh = Mesh::uniform(0.5, 1.0, pieces)?;
        Ok(Self { structure, mesh })
    }

    pub fn structure(&self) -> &FirstReturnStructure {
        &self.structure
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn pieces(&self) -> usize {
        self.mesh.len()
    }

    fn check_branch(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.structure.n_max() {
            return Err(Error::Range {
                what: "branch",
                value: n,
                lo: 1,
                hi: self.structure.n_max(),
            });
        }
        Ok(())
    }

    /// Mesh breakpoints of `Y`; `psi_1` in `z`-coordinates is the identity on them.
    fn chain_start(&self) -> Vec<f64> {
        self.mesh.breaks().to_vec()
    }

    fn advance(&self, chain: &mut [f64]) {
        let p = *self.structure.params();
        chain
            .par_iter_mut()
            .with_min_len(128)
            .for_each(|z| *z = p.left_inverse_unchecked(*z));
    }

    /// `z`-coordinates `2 psi_n(w_k) - 1` of the images of the breakpoints.
    pub fn branch_images(&self, n: usize) -> Result<Vec<f64>> {
        self.check_branch(n)?;
        let mut chain = self.chain_start();
        for _ in 1..n {
            self.advance(&mut chain);
        }
        Ok(chain)
    }

    /// Adds `Leb(piece_p ∩ psi(piece_k)) / Leb(piece_k)` for every `p`, given the
    /// image `(a, b]` of piece `k` in `z`-coordinates.
    #[inline]
    fn scatter(row: &mut Vec<(usize, f64)>, a: f64, b: f64, pieces: usize, weight: f64) {
        let m = pieces as f64;
        let first = ((a * m).floor() as usize).min(pieces - 1);
        let mut p = first;
        loop {
            let lo = p as f64 / m;
            let hi = (p + 1) as f64 / m;
            let o = b.min(hi) - a.max(lo);
            if o > 0.0 {
                // z-length o is x-length o/2; dividing by the piece width 1/(2m) gives o m.
                let v = o * m * weight;
                match row.iter_mut().rev().find(|(q, _)| *q == p) {
                    Some(e) => e.1 += v,
                    None => row.push((p, v)),
                }
            }
            if hi >= b || p + 1 >= pieces {
                break;
            }
            p += 1;
        }
    }

    fn rows_from_images(&self, images: &[f64]) -> Vec<Vec<(usize, f64)>> {
        let pieces = self.pieces();
        (0..pieces)
            .into_par_iter()
            .with_min_len(64)
            .map(|k| {
                let mut row = Vec::new();
                Self::scatter(&mut row, images[k], images[k + 1], pieces, 1.0);
                row
            })
            .collect()
    }

    /// Matrix of `R_n` acting on cell averages.
    pub fn rn_matrix(&self, n: usize) -> Result<OperatorMatrix> {
        let images = self.branch_images(n)?;
        OperatorMatrix::from_rows(
            OperatorKind::FirstReturn(n),
            self.pieces(),
            self.rows_from_images(&images),
        )
    }

    /// `R_n f`; `f` is first projected onto the operator mesh if needed.
    pub fn apply_rn(&self, n: usize, f: &StepFunction) -> Result<StepFunction> {
        let m = self.rn_matrix(n)?;
        self.apply(&m, f)
    }

    pub fn apply(&self, matrix: &OperatorMatrix, f: &StepFunction) -> Result<StepFunction> {
        let f = self.on_mesh(f);
        StepFunction::new(self.mesh.clone(), matrix.mul_vec(f.values()))
    }

    fn on_mesh(&self, f: &StepFunction) -> StepFunction {
        if f.mesh() == &self.mesh {
            f.clone()
        } else {
            f.project(&self.mesh)
        }
    }

    /// Operator norm of a discretized `R_n` for the variation norm.
    ///
    /// The unit ball of `Var` on step functions of the mesh is the convex
    /// hull of `±1_J / 2` over mesh-aligned intervals `J`, so the norm is the
    /// largest `Var(R_n 1_J) / 2`. Only intervals of pieces meeting `I_n`
    /// contribute.
    pub fn bv_operator_norm(&self, matrix: &OperatorMatrix) -> f64 {
        let pieces = self.pieces();
        let (mut first, mut last) = (usize::MAX, 0);
        for k in 0..matrix.rows() {
            for (p, _) in matrix.row(k) {
                first = first.min(p);
                last = last.max(p);
            }
        }
        if first > last {
            return 0.0;
        }
        let width = last - first + 1;
        let mut columns = vec![vec![0.0; pieces]; width];
        for k in 0..matrix.rows() {
            for (p, v) in matrix.row(k) {
                columns[p - first][k] = v;
            }
        }
        let variation = |v: &[f64]| {
            let jumps: f64 = v.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            v[0].abs() + jumps + v[v.len() - 1].abs()
        };
        (0..width)
            .into_par_iter()
            .map(|s| {
                let mut acc = vec![0.0; pieces];
                let mut best = 0.0f64;
                for col in &columns[s..] {
                    acc.iter_mut().zip(col).for_each(|(a, c)| *a += c);
                    best = best.max(variation(&acc) / 2.0);
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `R(1) = sum_n R_n` over `n <= n_max`, with the branches beyond `n_max`
    /// folded in proportionally to the row distribution of `R_{n_max}`.
    ///
    /// Column masses are then exact: every piece of `Y` is sent back onto `Y`
    /// with its full mass.
    pub fn assemble_r1(&self) -> Result<FirstReturnSum> {
        let pieces = self.pieces();
        let n_max = self.structure.n_max();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); pieces];
        let mut chain = self.chain_start();
        for n in 1..=n_max {
            if n > 1 {
                self.advance(&mut chain);
            }
            rows.par_iter_mut()
                .with_min_len(64)
                .enumerate()
                .for_each(|(k, row)| Self::scatter(row, chain[k], chain[k + 1], pieces, 1.0));
        }
        let tail_z = self.structure.cut_points()[n_max];
        let spread: Vec<f64> = chain.windows(2).map(|w| w[1] - w[0]).collect();
        let total = sum::sum(spread.iter().copied());
        rows.par_iter_mut()
            .enumerate()
            .for_each(|(k, row)| Self::scatter(row, 0.0, tail_z, pieces, spread[k] / total));
        Ok(FirstReturnSum {
            matrix: OperatorMatrix::from_rows(OperatorKind::FirstReturnSum, pieces, rows)?,
            tail_mass: 0.5 * tail_z,
        })
    }

    /// Leading eigenpair of a positive operator by power iteration from the
    /// constant function. The eigenvalue is the Rayleigh quotient
    /// `<A v, v> / <v, v>` in `L^2(Leb)`.
    pub fn leading_eigenpair(
        &self,
        matrix: &OperatorMatrix,
        tol: f64,
        max_iter: usize,
    ) -> Result<Eigenpair> {
        let widths: Vec<f64> = (0..self.pieces()).map(|k| self.mesh.width(k)).collect();
        let l1 = |v: &[f64]| sum::sum(v.iter().zip(&widths).map(|(a, w)| a.abs() * w));
        let mut v = vec![2.0; self.pieces()];
        let mut last = f64::INFINITY;
        for it in 1..=max_iter {
            let mut w = matrix.mul_vec(&v);
            let norm = l1(&w);
            if !(norm > 0.0) {
                return Err(Error::Numeric {
                    method: "power iteration",
                    iterations: it,
                    residual: norm,
                });
            }
            w.iter_mut().for_each(|x| *x /= norm);
            last = sum::sum(
                v.iter()
                    .zip(&w)
                    .zip(&widths)
                    .map(|((a, b), h)| (a - b).abs() * h),
            );
            v = w;
            if last < tol {
                let av = matrix.mul_vec(&v);
                let num = sum::sum(av.iter().zip(&v).zip(&widths).map(|((a, b), h)| a * b * h));
                let den = sum::sum(v.iter().zip(&widths).map(|(b, h)| b * b * h));
                let value = num / den;
                let residual = sum::sum(
                    av.iter()
                        .zip(&v)
                        .zip(&widths)
                        .map(|((a, b), h)| (a - value * b).abs() * h),
                );
                return Ok(Eigenpair {
                    value,
                    vector: StepFunction::new(self.mesh.clone(), v)?,
                    iterations: it,
                    residual,
                });
            }
        }
        Err(Error::Numeric {
            method: "power iteration",
            iterations: max_iter,
            residual: last,
        })
    }
}

/// Cell averages of the invariant density over the pieces of a mesh of `Y`.
/// The result integrates to `mu(Y)`.
pub fn restrict_density(density: &InvariantDensity, mesh: &Mesh) -> StepFunction {
    let values = (0..mesh.len())
        .map(|k| density.measure_between(mesh.lo(k), mesh.hi(k)) / mesh.width(k))
        .collect();
    StepFunction::new(mesh.clone(), values).expect("finite density")
}

/// `P f = (∫_Y f dLeb / mu(Y)) h_Y`.
pub fn projector_p(f: &StepFunction, h_y: &StepFunction, mu_y: f64) -> Result<StepFunction> {
    if !(mu_y > 0.0) {
        return Err(Error::Parameter(format!("mu(Y) = {mu_y} must be positive")));
    }
    Ok(h_y.scale(f.integral() / mu_y))
}

/// Matrix of `P` on cell averages: entry `(k, p) = h_k Leb(piece_p) / mu(Y)`.
pub fn projector_matrix(h_y: &StepFunction, mu_y: f64) -> Result<OperatorMatrix> {
    let mesh = h_y.mesh();
    let rows = h_y
        .values()
        .iter()
        .map(|&h| {
            (0..mesh.len())
                .map(|p| (p, h * mesh.width(p) / mu_y))
                .collect()
        })
        .collect();
    OperatorMatrix::from_rows(OperatorKind::Projector, mesh.len(), rows)
}

/// Kac partial sums `sum_{n <= N} n mu(I_n)` and `gamma = 1 / mu(Y)`.
#[derive(Debug, Clone, Serialize)]
pub struct KacDiagnostics {
    pub leb: Vec<f64>,
    pub mu: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub mu_y: f64,
    pub gamma_hat: f64,
    /// Asymptotic estimate of `sum_{n > N} n mu(I_n)`.
    pub tail_estimate: f64,
}

pub fn kac_check(
    structure: &FirstReturnStructure,
    density: &InvariantDensity,
    n: usize,
) -> Result<KacDiagnostics> {
    if n == 0 || n > structure.n_max() {
        return Err(Error::Range {
            what: "Kac horizon",
            value: n,
            lo: 1,
            hi: structure.n_max(),
        });
    }
    let mut leb = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut partial_sums = Vec::with_capacity(n);
    let mut acc = CompensatedSum::new();
    for k in 1..=n {
        let i = structure.interval(k)?;
        let m = density.measure_of_interval(&i);
        acc.add(k as f64 * m);
        leb.push(structure.length(k)?);
        mu.push(m);
        partial_sums.push(acc.value());
    }
    let mu_y = density.measure_of_interval(&Interval::Y);
    let beta = structure.params().beta();
    let h_edge = density.value_at(0.5 + 1e-300).unwrap_or(0.0);
    let tail_estimate =
        h_edge * structure.tail_constant() * (n as f64).powf(1.0 - beta) / (beta - 1.0);
    Ok(KacDiagnostics {
        leb,
        mu,
        partial_sums,
        mu_y,
        gamma_hat: 1.0 / mu_y,
        tail_estimate,
    })
}

fn check_in_y(a: &Interval, what: &str) -> Result<()> {
    if a.is_subset_of(&Interval::Y) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{what} ({}, {}] is not contained in Y = (1/2, 1]",
            a.lo(),
            a.hi()
        )))
    }
}

/// `T_n f = 1_Y T̂^n(1_Y f)` through the Ulam matrix of the full map.
pub fn apply_tn(
    n: usize,
    f: &StepFunction,
    ulam: &OperatorMatrix,
    mesh: &GradedMesh,
) -> Result<StepFunction> {
    if n == 0 {
        return Err(Error::Range {
            what: "n",
            value: 0,
            lo: 1,
            hi: usize::MAX,
        });
    }
    let fm = f.mesh();
    let full = mesh.mesh();
    let y_lo = fm.start().max(0.5);
    let mut mass = vec![0.0; full.len()];
    for (i, slot) in mass.iter_mut().enumerate().skip(full.cells_meeting(y_lo, 1.0).start) {
        *slot = sum::sum(
            fm.overlaps(full.lo(i).max(y_lo), full.hi(i))
                .map(|(p, o)| f.values()[p] * o),
        );
    }
    let mut next = vec![0.0; full.len()];
    for _ in 0..n {
        ulam.vec_mul_into(&mass, &mut next);
        std::mem::swap(&mut mass, &mut next);
    }
    let values = (0..fm.len())
        .map(|p| {
            let (lo, hi) = (fm.lo(p).max(0.5), fm.hi(p));
            sum::sum(
                full.overlaps(lo, hi)
                    .map(|(i, o)| mass[i] / full.width(i) * o),
            ) / fm.width(p)
        })
        .collect();
    StepFunction::new(fm.clone(), values)
}

/// Both sides of the measure-level renewal identity at time `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalCheck {
    /// `Leb(Y ∩ T^{-n} Y)` by backward propagation of `Y` through both branches.
    pub direct: f64,
    /// Sum over first-return words `(k_1, ..., k_l)`, `sum k_i = n`, of
    /// `Leb(psi_{k_1} ... psi_{k_l}(Y))`.
    pub via_words: f64,
    pub words: usize,
}

impl RenewalCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.direct - self.via_words).abs()
    }
}

pub const MAX_RENEWAL_N: usize = 10;

pub fn renewal_identity_check(n: usize, structure: &FirstReturnStructure) -> Result<RenewalCheck> {
    if n == 0 || n > MAX_RENEWAL_N || n > structure.n_max() {
        return Err(Error::Range {
            what: "renewal time",
            value: n,
            lo: 1,
            hi: MAX_RENEWAL_N.min(structure.n_max()),
        });
    }
    let params = structure.params();

    let mut sets = vec![(0.5f64, 1.0f64)];
    for _ in 0..n {
        sets = sets
            .iter()
            .flat_map(|&(a, b)| {
                [
                    (params.left_inverse_unchecked(a), params.left_inverse_unchecked(b)),
                    (0.5 * (1.0 + a), 0.5 * (1.0 + b)),
                ]
            })
            .collect();
    }
    let direct = sum::sum(
        sets.iter()
            .map(|&(a, b)| (b.min(1.0) - a.max(0.5)).max(0.0)),
    );

    let mut via = CompensatedSum::new();
    let mut words = 0;
    for word in compositions(n) {
        let (mut lo, mut hi) = (0.5, 1.0);
        for &k in word.iter().rev() {
            lo = structure.branch_unchecked(k, lo).point;
            hi = structure.branch_unchecked(k, hi).point;
        }
        via.add(hi - lo);
        words += 1;
    }
    Ok(RenewalCheck {
        direct,
        via_words: via.value(),
        words,
    })
}

/// All compositions of `n` into positive parts.
pub fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    // Bit i of the mask set means "cut after position i + 1".
    (0..1u32 << (n - 1))
        .map(|mask| {
            let mut parts = Vec::new();
            let mut run = 1;
            for i in 0..n - 1 {
                if mask >> i & 1 == 1 {
                    parts.push(run);
                    run = 1;
                } else {
                    run += 1;
                }
            }
            parts.push(run);
            parts
        })
        .collect()
}

/// Correlations `mu(A ∩ T^{-n} B) = ∫ T_n(1_A h_Y) 1_B dLeb` for `A, B ⊂ Y`,
/// from powers of the Ulam matrix applied to the invariant density.
pub struct Correlator<'a> {
    ulam: &'a OperatorMatrix,
    density: &'a InvariantDensity,
    max_lag: usize,
    y_series: OnceLock<Vec<f64>>,
}

impl<'a> Correlator<'a> {
    pub fn new(ulam: &'a OperatorMatrix, density: &'a InvariantDensity, max_lag: usize) -> Self {
        Self {
            ulam,
            density,
            max_lag,
            y_series: OnceLock::new(),
        }
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn density(&self) -> &InvariantDensity {
        self.density
    }

    pub fn mu(&self, a: &Interval) -> f64 {
        self.density.measure_of_interval(a)
    }

    pub fn mu_y(&self) -> f64 {
        self.mu(&Interval::Y)
    }

    /// Cell masses of `1_A h`.
    fn start_mass(&self, a: &Interval) -> Vec<f64> {
        let full = self.density.mesh().mesh();
        let mut mass = vec![0.0; full.len()];
        for (i, o) in full.overlaps(a.lo(), a.hi()) {
            mass[i] = self.density.weights()[i] * o;
        }
        mass
    }

    /// `∫ 1_B (mass / width)`.
    fn pair(&self, mass: &[f64], b: &Interval) -> f64 {
        let full = self.density.mesh().mesh();
        sum::sum(
            full.overlaps(b.lo(), b.hi())
                .map(|(i, o)| mass[i] * o / full.width(i)),
        )
    }

    /// Pushes `1_A h` forward `lags` times, handing the cell masses after each
    /// step to `visit(lag, masses)`.
    pub fn evolve<F: FnMut(usize, &[f64])>(&self, a: &Interval, lags: usize, mut visit: F) {
        let mut mass = self.start_mass(a);
        let mut next = vec![0.0; mass.len()];
        for lag in 1..=lags {
            self.ulam.vec_mul_into(&mass, &mut next);
            std::mem::swap(&mut mass, &mut next);
            visit(lag, &mass);
        }
    }

    /// Appends `mu(A ∩ T^{-d} B_d)` for `d = 1..=targets.len()`, where `B_d`
    /// is `targets[d - 1]`. Inputs are assumed to lie in `Y`.
    pub fn evolve_pairs(&self, a: &Interval, targets: &[Interval], out: &mut Vec<f64>) {
        self.evolve(a, targets.len(), |lag, mass| out.push(self.pair(mass, &targets[lag - 1])));
    }

    pub fn correlation(&self, a: &Interval, b: &Interval, n: usize) -> Result<f64> {
        Ok(self.correlation_series(a, b, &[n])?[0])
    }

    /// `mu(A ∩ T^{-n} B)` for each `n` in `lags` (any order).
    pub fn correlation_series(&self, a: &Interval, b: &Interval, lags: &[usize]) -> Result<Vec<f64>> {
        check_in_y(a, "A")?;
        check_in_y(b, "B")?;
        if lags.contains(&0) {
            return Err(Error::Range {
                what: "lag",
                value: 0,
                lo: 1,
                hi: usize::MAX,
            });
        }
        let top = lags.iter().copied().max().unwrap_or(0);
        let mut by_lag = vec![0.0; top + 1];
        self.evolve(a, top, |lag, mass| by_lag[lag] = self.pair(mass, b));
        Ok(lags.iter().map(|&n| by_lag[n]).collect())
    }

    /// `mu(Y ∩ T^{-n} Y)` for `n = 1..=max_lag`, computed once.
    pub fn y_series(&self) -> &[f64] {
        self.y_series.get_or_init(|| {
            let mut out = Vec::with_capacity(self.max_lag);
            self.evolve(&Interval::Y, self.max_lag, |_, mass| {
                out.push(self.pair(mass, &Interval::Y))
            });
            out
        })
    }

    /// `ĉ_n = mu(Y ∩ T^{-n} Y) / mu(Y)^2`.
    pub fn c_hat(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.max_lag {
            return Err(Error::Range {
                what: "lag",
                value: n,
                lo: 1,
                hi: self.max_lag,
            });
        }
        let mu_y = self.mu_y();
        Ok(self.y_series()[n - 1] / (mu_y * mu_y))
    }
}

/// Lags `round(16 * 2^(k/2))` from 16 to 512.
pub fn default_fit_lags() -> Vec<usize> {
    (0..=10)
        .map(|k| (16.0 * 2f64.powf(k as f64 / 2.0)).round() as usize)
        .collect()
}

/// Two-sided 95% Student-t quantiles for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

fn t_quantile_975(dof: usize) -> f64 {
    match dof {
        0 => f64::INFINITY,
        d if d <= 30 => T975[d - 1],
        _ => 1.96,
    }
}

/// Least-squares line through `(log n, log |ĉ_n - 1|)`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    /// 95% confidence half-width of the slope.
    pub half_width: f64,
    pub intercept: f64,
}

impl DecayFit {
    /// Decay exponent, `-slope`.
    pub fn exponent(&self) -> f64 {
        -self.slope
    }
}

pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Option<DecayFit> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (rss / (n - 2) as f64 / sxx).sqrt();
    Some(DecayFit {
        slope,
        half_width: t_quantile_975(n - 2) * se,
        intercept,
    })
}

/// Below this, `|ĉ_n - 1|` is indistinguishable from rounding.
pub const CN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct CnEstimate {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    /// `None` when some `|ĉ_n - 1|` in the window is below [`CN_FLOOR`].
    pub fit: Option<DecayFit>,
    /// `ĉ_n - 1` has one sign for every lag in the second half of `1..=max_lag`.
    pub eventually_constant_sign: bool,
    /// `|ĉ_n - 1|` decreases along `lags`.
    pub decreasing: bool,
}

pub fn estimate_cn(correlator: &Correlator<'_>, lags: &[usize]) -> Result<CnEstimate> {
    let values = lags
        .iter()
        .map(|&n| correlator.c_hat(n))
        .collect::<Result<Vec<_>>>()?;
    let dev: Vec<f64> = values.iter().map(|c| (c - 1.0).abs()).collect();
    let fit = if dev.iter().all(|&d| d > CN_FLOOR) {
        let xs: Vec<f64> = lags.iter().map(|&n| n as f64).collect();
        fit_log_log(&xs, &dev)
    } else {
        None
    };
    let max_lag = correlator.max_lag();
    let late: Vec<f64> = ((max_lag / 2).max(1)..=max_lag)
        .map(|n| correlator.c_hat(n).map(|c| c - 1.0))
        .collect::<Result<_>>()?;
    let eventually_constant_sign =
        late.iter().all(|&d| d > 0.0) || late.iter().all(|&d| d < 0.0);
    let decreasing = dev.windows(2).all(|w| w[1] < w[0]);
    Ok(CnEstimate {
        lags: lags.to_vec(),
        values,
        fit,
        eventually_constant_sign,
        decreasing,
    })
}

/// `|mu(A ∩ T^{-n} B) - ĉ_n mu(A) mu(B)| n^beta / mu(B)` for each lag.
pub fn residual_statistic(
    correlator: &Correlator<'_>,
    a: &Interval,
    b: &Interval,
    lags: &[usize],
    beta: f64,
) -> Result<Vec<f64>> {
    let corr = correlator.correlation_series(a, b, lags)?;
    let (mu_a, mu_b) = (correlator.mu(a), correlator.mu(b));
    lags.iter()
        .zip(corr)
        .map(|(&n, c)| {
            let cn = correlator.c_hat(n)?;
            Ok((c - cn * mu_a * mu_b).abs() * (n as f64).powf(beta) / mu_b)
        })
        .collect()
}

/// Ten interval pairs inside `Y` of assorted sizes and positions.
pub fn default_residual_panel() -> Vec<(Interval, Interval)> {
    [
        ((0.55, 0.6), (0.7, 0.8)),
        ((0.9, 1.0), (0.6, 0.65)),
        ((0.5, 0.75), (0.75, 1.0)),
        ((0.6, 0.62), (0.95, 0.99)),
        ((0.7, 0.9), (0.7, 0.9)),
        ((0.5, 0.55), (0.5, 0.55)),
        ((0.8, 0.85), (0.52, 0.58)),
        ((0.65, 0.95), (0.85, 0.87)),
        ((0.75, 0.8), (0.9, 1.0)),
        ((0.5, 1.0), (0.61, 0.73)),
    ]
    .into_iter()
    .map(|((a, b), (c, d))| (Interval::new(a, b).unwrap(), Interval::new(c, d).unwrap()))
    .collect()
}

/// Everything the renewal report contains.
#[derive(Debug, Clone)]
pub struct RenewalDiagnostics {
    pub kac: KacDiagnostics,
    pub cn: CnEstimate,
    /// `ĉ_n` for every `n = 1..=max_lag`.
    pub c_n_hat: Vec<f64>,
    /// Largest residual statistic over the panel, per lag `1..=max_lag`.
    pub residual_bound_stat: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewalSummary {
    pub mu_y: f64,
    pub gamma_hat: f64,
    pub kac_horizon: usize,
    pub kac_partial_sum: f64,
    pub kac_tail_estimate: f64,
    pub fitted_exponent: Option<f64>,
    pub exponent_half_width: Option<f64>,
    pub fit_window: Vec<usize>,
    pub c_n_hat_window: Vec<f64>,
    pub c_n_eventually_constant_sign: bool,
    pub c_n_deviation_decreasing: bool,
    pub residual_bound_max: f64,
}

impl RenewalDiagnostics {
    pub fn compute(
        structure: &FirstReturnStructure,
        correlator: &Correlator<'_>,
        kac_horizon: usize,
        fit_lags: &[usize],
        panel: &[(Interval, Interval)],
    ) -> Result<Self> {
        let kac = kac_check(structure, correlator.density(), kac_horizon)?;
        let cn = estimate_cn(correlator, fit_lags)?;
        let max_lag = correlator.max_lag();
        let c_n_hat = (1..=max_lag).map(|n| correlator.c_hat(n)).collect::<Result<Vec<_>>>()?;
        let lags: Vec<usize> = (1..=max_lag).collect();
        let beta = structure.params().beta();
        let per_pair = panel
            .par_iter()
            .map(|(a, b)| residual_statistic(correlator, a, b, &lags, beta))
            .collect::<Result<Vec<_>>>()?;
        let residual_bound_stat = (0..max_lag)
            .map(|i| per_pair.iter().map(|v| v[i]).fold(0.0, f64::max))
            .collect();
        Ok(Self {
            kac,
            cn,
            c_n_hat,
            residual_bound_stat,
        })
    }

    pub fn summary(&self) -> RenewalSummary {
        RenewalSummary {
            mu_y: self.kac.mu_y,
            gamma_hat: self.kac.gamma_hat,
            kac_horizon: self.kac.partial_sums.len(),
            kac_partial_sum: *self.kac.partial_sums.last().unwrap_or(&0.0),
            kac_tail_estimate: self.kac.tail_estimate,
            fitted_exponent: self.cn.fit.as_ref().map(DecayFit::exponent),
            exponent_half_width: self.cn.fit.as_ref().map(|f| f.half_width),
            fit_window: self.cn.lags.clone(),
            c_n_hat_window: self.cn.values.clone(),
            c_n_eventually_constant_sign: self.cn.eventually_constant_sign,
            c_n_deviation_decreasing: self.cn.decreasing,
            residual_bound_max: self.residual_bound_stat.iter().copied().fold(0.0, f64::max),
        }
    }

    /// `n,leb_In,mu_In,kac_partial,c_n_hat,residual_bound_stat`, one row per
    /// `n` up to the longer of the two horizons; absent values are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,leb_In,mu_In,kac_partial,c_n_hat,residual_bound_stat")?;
        let rows = self.kac.partial_sums.len().max(self.c_n_hat.len());
        let cell = |v: Option<&f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        for i in 0..rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                cell(self.kac.leb.get(i)),
                cell(self.kac.mu.get(i)),
                cell(self.kac.partial_sums.get(i)),
                cell(self.c_n_hat.get(i)),
                cell(self.residual_bound_stat.get(i)),
            )?;
        }
        Ok(())
    }
}

//! Shrinking-target schedules, Monte Carlo hit counts, and the pair-sum
//! ratio `sum_{i<j<n} mu(B_i ∩ B_j) / (sum_{j<n} mu(B_j))^2` with
//! `B_j = T^{-j} A_{j+1}`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::MapParams;
use crate::measure::InvariantDensity;
use crate::renewal::Correlator;
use crate::rng::{orbit_rng, uniform_in_y};
use crate::sum::{self, CompensatedSum};

/// Serializable description of a target sequence `A_1, A_2, ...`.
///
/// Lengths follow `s_n = min(s_max, kappa / n)` wherever a length sequence is
/// needed, so `sum s_n` diverges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `A_n` centered at `center`.
    Anchored { center: f64, kappa: f64, s_max: f64 },
    /// Centers sweep `Y` left to right, restarting every `period` steps.
    Moving { kappa: f64, s_max: f64, period: usize },
    /// `A_n = (left, left + s_n]`.
    Nested { left: f64, kappa: f64, s_max: f64 },
    /// `A_n = (0, n^{-1/(1 - alpha)}]`.
    KimType,
    /// `A_n = (0, 1]`.
    Full,
    /// `A'_n = T^{-1}(A_{n+1}) ∩ Y`.
    Pullback { of: Box<ScheduleSpec> },
}

impl ScheduleSpec {
    /// `min(0.2, 1/(2n))` centered at `0.8`.
    pub fn default_anchored() -> Self {
        ScheduleSpec::Anchored {
            center: 0.8,
            kappa: 0.5,
            s_max: 0.2,
        }
    }

    fn validate(&self) -> Result<()> {
        let lengths = |kappa: f64, s_max: f64| {
            if !(kappa > 0.0 && kappa.is_finite() && s_max > 0.0 && s_max <= 1.0) {
                return Err(Error::Parameter(format!(
                    "need kappa > 0 and 0 < s_max <= 1, got kappa = {kappa}, s_max = {s_max}"
                )));
            }
            Ok(())
        };
        match self {
            ScheduleSpec::Anchored {
                center,
                kappa,
                s_max,
            } => {
                lengths(*kappa, *s_max)?;
                if !(*center > 0.5 && *center <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "anchor {center} is not in (1/2, 1]"
                    )));
                }
                if center - s_max / 2.0 < 0.0 || center + s_max / 2.0 > 1.0 {
                    return Err(Error::Parameter(format!(
                        "targets of length {s_max} around {center} leave (0, 1]"
                    )));
                }
            }
            ScheduleSpec::Moving {
                kappa,
                s_max,
                period,
            } => {
                lengths(*kappa, *s_max)?;
                if *s_max > 0.5 || *period == 0 {
                    return Err(Error::Parameter(format!(
                        "moving targets need s_max <= 1/2 and period >= 1, got {s_max}, {period}"
                    )));
                }
            }
            ScheduleSpec::Nested { left, kappa, s_max } => {
                lengths(*kappa, *s_max)?;
                if !(*left >= 0.0 && left + s_max <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "targets ({left}, {left} + {s_max}] leave (0, 1]"
                    )));
                }
            }
            ScheduleSpec::KimType | ScheduleSpec::Full => {}
            ScheduleSpec::Pullback { of } => of.validate()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSchedule {
    spec: ScheduleSpec,
    alpha: f64,
}

pub fn make_schedule(spec: &ScheduleSpec, params: &MapParams) -> Result<IntervalSchedule> {
    spec.validate()?;
    Ok(IntervalSchedule {
        spec: spec.clone(),
        alpha: params.alpha(),
    })
}

/// `A'_n = ((1 + lo_{n+1}) / 2, (1 + hi_{n+1}) / 2]`.
pub fn pullback(schedule: &IntervalSchedule) -> IntervalSchedule {
    IntervalSchedule {
        spec: ScheduleSpec::Pullback {
            of: Box::new(schedule.spec.clone()),
        },
        alpha: schedule.alpha,
    }
}

fn bounds_of(spec: &ScheduleSpec, alpha: f64, n: usize) -> (f64, f64) {
    let s = |kappa: f64, s_max: f64| s_max.min(kappa / n as f64);
    match spec {
        ScheduleSpec::Anchored {
            center,
            kappa,
            s_max,
        } => {
            let half = 0.5 * s(*kappa, *s_max);
            (center - half, center + half)
        }
        ScheduleSpec::Moving {
            kappa,
            s_max,
            period,
        } => {
            let len = s(*kappa, *s_max);
            let phase = ((n - 1) % period) as f64 / *period as f64;
            let lo = 0.5 + phase * (0.5 - len);
            (lo, lo + len)
        }
        ScheduleSpec::Nested { left, kappa, s_max } => (*left, left + s(*kappa, *s_max)),
        ScheduleSpec::KimType => (0.0, (n as f64).powf(-1.0 / (1.0 - alpha))),
        ScheduleSpec::Full => (0.0, 1.0),
        ScheduleSpec::Pullback { of } => {
            let (lo, hi) = bounds_of(of, alpha, n + 1);
            (0.5 * (1.0 + lo), 0.5 * (1.0 + hi))
        }
    }
}

fn length_of(spec: &ScheduleSpec, alpha: f64, n: usize) -> f64 {
    match spec {
        ScheduleSpec::Anchored { kappa, s_max, .. }
        | ScheduleSpec::Moving { kappa, s_max, .. }
        | ScheduleSpec::Nested { kappa, s_max, .. } => s_max.min(kappa / n as f64),
        ScheduleSpec::KimType => (n as f64).powf(-1.0 / (1.0 - alpha)),
        ScheduleSpec::Full => 1.0,
        ScheduleSpec::Pullback { of } => 0.5 * length_of(of, alpha, n + 1),
    }
}

impl IntervalSchedule {
    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    /// `(lo, hi)` of `A_n`, `n >= 1`.
    #[inline]
    pub fn bounds(&self, n: usize) -> (f64, f64) {
        debug_assert!(n >= 1);
        bounds_of(&self.spec, self.alpha, n)
    }

    pub fn target(&self, n: usize) -> Result<Interval> {
        if n == 0 {
            return Err(Error::Range {
                what: "schedule index",
                value: 0,
                lo: 1,
                hi: usize::MAX,
            });
        }
        let (lo, hi) = self.bounds(n);
        Interval::new(lo, hi)
    }

    /// `Leb(A_n)` from the defining formula.
    pub fn length(&self, n: usize) -> f64 {
        length_of(&self.spec, self.alpha, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub orbits: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub checkpoints: Vec<usize>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn default_checkpoints(horizon: usize) -> Vec<usize> {
        [1_000, 10_000, 100_000, 1_000_000]
            .into_iter()
            .filter(|&c| c <= horizon)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.orbits == 0 || self.horizon == 0 {
            return Err(Error::Parameter("orbits and horizon must be positive".into()));
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.windows(2).any(|w| w[1] <= w[0])
            || self.checkpoints[0] == 0
            || *self.checkpoints.last().unwrap() > self.horizon
        {
            return Err(Error::Parameter(format!(
                "checkpoints {:?} must increase strictly within [1, {}]",
                self.checkpoints, self.horizon
            )));
        }
        Ok(())
    }
}

/// Per-orbit hit counts at each checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct HitReport {
    pub checkpoints: Vec<usize>,
    /// `E_N = sum_{n <= N} mu(A_n)` per checkpoint.
    pub expected: Vec<f64>,
    /// `counts[orbit][c]` is `S_N` at checkpoint `c`.
    pub counts: Vec<Vec<u64>>,
    /// Last `n <= N` with a hit, 0 when there is none.
    pub last_hit: Vec<Vec<u64>>,
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

impl HitReport {
    pub fn orbits(&self) -> usize {
        self.counts.len()
    }

    fn checkpoint_index(&self, checkpoint: usize) -> Result<usize> {
        self.checkpoints
            .iter()
            .position(|&c| c == checkpoint)
            .ok_or_else(|| Error::Parameter(format!("{checkpoint} is not a checkpoint")))
    }

    /// `S_N / E_N` for every orbit.
    pub fn ratios(&self, checkpoint: usize) -> Result<Vec<f64>> {
        let c = self.checkpoint_index(checkpoint)?;
        Ok(self
            .counts
            .iter()
            .map(|s| s[c] as f64 / self.expected[c])
            .collect())
    }

    pub fn ratio_quantile(&self, checkpoint: usize, q: f64) -> Result<f64> {
        Ok(quantile(&self.ratios(checkpoint)?, q))
    }

    /// Fraction of orbits whose last hit by `checkpoint` is after `checkpoint / 2`.
    pub fn fraction_late_hit(&self, checkpoint: usize) -> Result<f64> {
        let c = self.checkpoint_index(checkpoint)?;
        let late = self
            .last_hit
            .iter()
            .filter(|l| 2 * l[c] > checkpoint as u64)
            .count();
        Ok(late as f64 / self.orbits() as f64)
    }

    /// Hits with index in `(from, to]`, per orbit.
    pub fn new_hits(&self, from: usize, to: usize) -> Result<Vec<u64>> {
        let (a, b) = (self.checkpoint_index(from)?, self.checkpoint_index(to)?);
        Ok(self.counts.iter().map(|s| s[b] - s[a]).collect())
    }

    /// `orbit_id,checkpoint,S_N,E_N,ratio,last_hit`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "orbit_id,checkpoint,S_N,E_N,ratio,last_hit")?;
        for (k, (s, l)) in self.counts.iter().zip(&self.last_hit).enumerate() {
            for (c, &n) in self.checkpoints.iter().enumerate() {
                let e = self.expected[c];
                writeln!(
                    out,
                    "{k},{n},{},{e:.16e},{:.16e},{}",
                    s[c],
                    s[c] as f64 / e,
                    l[c]
                )?;
            }
        }
        Ok(())
    }
}

/// `sum_{n <= N} mu(A_n)` at each checkpoint.
pub fn expected_hits(
    schedule: &IntervalSchedule,
    density: &InvariantDensity,
    checkpoints: &[usize],
) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    let last = checkpoints.last().copied().unwrap_or(0);
    for n in 1..=last {
        let (lo, hi) = schedule.bounds(n);
        acc.add(density.measure_between(lo, hi));
        if next.peek() == Some(&&n) {
            out.push(acc.value());
            next.next();
        }
    }
    out
}

/// Simulates `orbits` orbits started Lebesgue-uniformly on `Y`. After
/// `burn_in` discarded steps, times are counted from 1 and a hit at time `n`
/// means `T^n x ∈ A_n`.
pub fn run_experiment(
    schedule: &IntervalSchedule,
    params: &MapParams,
    config: &ExperimentConfig,
    density: &InvariantDensity,
) -> Result<HitReport> {
    config.validate()?;
    let targets: Vec<(f64, f64)> = (1..config.horizon + 1)
        .into_par_iter()
        .with_min_len(4096)
        .map(|n| schedule.bounds(n))
        .collect();
    let expected = expected_hits(schedule, density, &config.checkpoints);
    let per_orbit: Vec<(Vec<u64>, Vec<u64>)> = (0..config.orbits)
        .into_par_iter()
        .map(|k| {
            let mut rng = orbit_rng(config.seed, k as u64);
            let mut x = uniform_in_y(&mut rng);
            for _ in 0..config.burn_in {
                x = params.step(x);
            }
            let mut counts = Vec::with_capacity(config.checkpoints.len());
            let mut lasts = Vec::with_capacity(config.checkpoints.len());
            let (mut s, mut last) = (0u64, 0u64);
            let mut start = 0;
            for &cp in &config.checkpoints {
                for (i, &(lo, hi)) in targets[start..cp].iter().enumerate() {
                    x = params.step(x);
                    if x > lo && x <= hi {
                        s += 1;
                        last = (start + i + 1) as u64;
                    }
                }
                start = cp;
                counts.push(s);
                lasts.push(last);
            }
            (counts, lasts)
        })
        .collect();
    let (counts, last_hit) = per_orbit.into_iter().unzip();
    Ok(HitReport {
        checkpoints: config.checkpoints.clone(),
        expected,
        counts,
        last_hit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionRow {
    pub n: usize,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub band: usize,
    /// `ĉ_band`, the factor applied to pairs further apart than `band`.
    pub far_factor: f64,
    pub rows: Vec<CriterionRow>,
}

impl CriterionReport {
    pub fn ratio_at(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.ratio)
    }

    /// Ratios strictly decrease along the rows.
    pub fn decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ratio < w[0].ratio)
    }

    /// `n,numerator,denominator,ratio`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,numerator,denominator,ratio")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                r.n, r.numerator, r.denominator, r.ratio
            )?;
        }
        Ok(())
    }
}

/// Numerator and denominator at horizon `n` from `mu_j = mu(B_j)` and the
/// near-diagonal table `near[i][d - 1] = mu(B_i ∩ B_{i+d})`, `d <= band`.
/// Pairs further apart count as `far_factor mu_i mu_j`.
pub fn pair_sums(mu: &[f64], near: &[Vec<f64>], band: usize, far_factor: f64, n: usize) -> (f64, f64) {
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = CompensatedSum::new();
    prefix.push(0.0);
    for &m in &mu[..n] {
        acc.add(m);
        prefix.push(acc.value());
    }
    let mut num = CompensatedSum::new();
    for i in 0..n {
        for (d, &v) in near[i].iter().enumerate().take(band) {
            if i + d + 1 < n {
                num.add(v);
            }
        }
        if i + band + 1 < n {
            num.add(far_factor * mu[i] * (prefix[n] - prefix[i + band + 1]));
        }
    }
    (num.value(), prefix[n] * prefix[n])
}

/// The pair-sum ratio at each horizon in `horizons`, for targets inside `Y`.
///
/// `mu(B_i ∩ B_j) = mu(A_{i+1} ∩ T^{-(j-i)} A_{j+1})` is evaluated through the
/// correlator for `j - i <= band`; beyond the band the pair is taken as
/// `ĉ_band mu(A_{i+1}) mu(A_{j+1})`.
pub fn criterion_ratio(
    schedule: &IntervalSchedule,
    horizons: &[usize],
    band: usize,
    correlator: &Correlator<'_>,
) -> Result<CriterionReport> {
    if band == 0 || band > correlator.max_lag() {
        return Err(Error::Range {
            what: "band",
            value: band,
            lo: 1,
            hi: correlator.max_lag(),
        });
    }
    let top = horizons.iter().copied().max().unwrap_or(0);
    if top == 0 || horizons.contains(&0) {
        return Err(Error::Parameter("horizons must be positive".into()));
    }
    let targets = (1..=top)
        .map(|k| {
            let a = schedule.target(k)?;
            if !a.is_subset_of(&Interval::Y) {
                return Err(Error::Parameter(format!(
                    "target A_{k} = ({}, {}] is not inside Y; pull the schedule back first",
                    a.lo(),
                    a.hi()
                )));
            }
            Ok(a)
        })
        .collect::<Result<Vec<_>>>()?;
    let mu: Vec<f64> = targets.iter().map(|a| correlator.mu(a)).collect();
    let near: Vec<Vec<f64>> = (0..top)
        .into_par_iter()
        .map(|i| {
            let reach = band.min(top - 1 - i);
            let mut row = Vec::with_capacity(reach);
            if reach > 0 {
                correlator.evolve_pairs(&targets[i], &targets[i + 1..=i + reach], &mut row);
            }
            row
        })
        .collect();
    let far_factor = correlator.c_hat(band)?;
    let rows = horizons
        .iter()
        .map(|&n| {
            let (numerator, denominator) = pair_sums(&mu, &near, band, far_factor, n);
            CriterionRow {
                n,
                numerator,
                denominator,
                ratio: numerator / denominator,
            }
        })
        .collect();
    Ok(CriterionReport {
        band,
        far_factor,
        rows,
    })
}

/// Sum of `mu(A_n)` up to `n`, for reporting divergence of expected counts.
pub fn expected_total(schedule: &IntervalSchedule, density: &InvariantDensity, n: usize) -> f64 {
    sum::sum((1..=n).map(|k| {
        let (lo, hi) = schedule.bounds(k);
        density.measure_between(lo, hi)
    }))
}

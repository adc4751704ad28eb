use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use intermittency_core::harness::{
    criterion_ratio, make_schedule, pullback, quantile, run_experiment, CriterionRow,
    ExperimentConfig,
};
use intermittency_core::measure::birkhoff_histogram;
use intermittency_core::renewal::{
    default_residual_panel, renewal_identity_check, restrict_density, Correlator,
    RenewalDiagnostics, RenewalSummary, ReturnOperators, MAX_RENEWAL_N,
};
use intermittency_core::rng::{orbit_rng, uniform_in_y};
use intermittency_core::{
    build_ulam, stationary_density, FirstReturnStructure, GradedMesh, Interval, InvariantDensity,
    MapParams, OperatorMatrix,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = concat!("intermittency-lab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
}

fn write_file<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

/// Creates `out` and writes the manifest for `command`.
pub fn prepare(out: &Path, command: &str, config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            version: VERSION,
            command,
            config,
        },
    )
}

struct Solved {
    params: MapParams,
    mesh: GradedMesh,
    ulam: OperatorMatrix,
    density: InvariantDensity,
}

fn solve(config: &RunConfig) -> Result<Solved, CliError> {
    let params = MapParams::new(config.alpha)?;
    let mesh = GradedMesh::for_alpha(config.mesh_size, config.alpha)?;
    let ulam = build_ulam(&params, &mesh)?;
    let density = stationary_density(&ulam, &mesh, config.density.tol, config.density.max_iter)?;
    Ok(Solved {
        params,
        mesh,
        ulam,
        density,
    })
}

pub fn orbit(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let params = MapParams::new(config.alpha)?;
    let o = &config.orbit;
    let path = out.join("orbit.csv");
    let mut rows = 0usize;
    write_file(&path, |w| {
        writeln!(w, "orbit_id,n,x")?;
        for k in 0..o.orbits {
            let mut x = match o.x0 {
                Some(x0) => x0,
                None => uniform_in_y(&mut orbit_rng(config.seed, k as u64)),
            };
            for _ in 0..o.burn_in {
                x = params.step(x);
            }
            for n in 0..=o.steps {
                if n > 0 {
                    x = params.step(x);
                }
                if n % o.stride == 0 {
                    writeln!(w, "{k},{n},{x:.16e}")?;
                    rows += 1;
                }
            }
        }
        Ok(())
    })?;
    Ok(format!(
        "orbit: {rows} samples from {} orbits -> {}",
        o.orbits,
        path.display()
    ))
}

#[derive(Debug, Serialize)]
struct DensitySummary {
    alpha: f64,
    mesh_size: usize,
    grading: f64,
    mu_y: f64,
    total_mass: f64,
    iterations: usize,
    residual: f64,
    /// max/min of the cell densities on cells inside (0.1, 1].
    density_ratio_above_0_1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    birkhoff_mu_y: Option<f64>,
}

pub fn density_ratio(density: &InvariantDensity, from: f64) -> f64 {
    let m = density.mesh().mesh();
    let (lo, hi) = (0..m.len())
        .filter(|&i| m.lo(i) >= from)
        .map(|i| density.weights()[i])
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), w| (lo.min(w), hi.max(w)));
    hi / lo
}

pub fn density(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let s = solve(config)?;
    let d = &config.density;
    let birkhoff_mu_y = if d.birkhoff_orbits > 0 {
        let b = birkhoff_histogram(
            &s.params,
            &s.mesh,
            d.birkhoff_orbits,
            d.birkhoff_steps,
            d.birkhoff_burn_in,
            config.seed,
        )?;
        Some(b.measure_of_interval(&Interval::Y))
    } else {
        None
    };
    let summary = DensitySummary {
        alpha: config.alpha,
        mesh_size: s.mesh.size(),
        grading: s.mesh.grading(),
        mu_y: s.density.measure_of_interval(&Interval::Y),
        total_mass: s.density.total_mass(),
        iterations: s.density.iterations(),
        residual: s.density.residual(),
        density_ratio_above_0_1: density_ratio(&s.density, 0.1),
        birkhoff_mu_y,
    };
    let csv = out.join("density.csv");
    write_file(&csv, |w| s.density.write_csv(w))?;
    write_json(&out.join("density.json"), &summary)?;
    Ok(format!(
        "density: mu(Y) = {:.10}, {} iterations -> {}",
        summary.mu_y,
        summary.iterations,
        csv.display()
    ))
}

#[derive(Debug, Serialize)]
struct Spectral {
    eigenvalue: f64,
    eigen_residual: f64,
    iterations: usize,
    /// Relative L1 distance to h_Y after matching integrals.
    eigenfunction_mismatch: f64,
    tail_mass: f64,
}

#[derive(Debug, Serialize)]
struct RenewalReport {
    #[serde(flatten)]
    summary: RenewalSummary,
    gamma_times_mu_y: f64,
    renewal_identity_discrepancy: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral: Option<Spectral>,
}

pub fn renewal(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let s = solve(config)?;
    let r = &config.renewal;
    let structure = FirstReturnStructure::build(s.params, config.n_max)?;
    let correlator = Correlator::new(&s.ulam, &s.density, r.max_lag);
    let diagnostics = RenewalDiagnostics::compute(
        &structure,
        &correlator,
        r.kac_horizon,
        &r.fit_lags,
        &default_residual_panel(),
    )?;
    let renewal_identity_discrepancy = (1..=MAX_RENEWAL_N.min(config.n_max))
        .map(|n| renewal_identity_check(n, &structure).map(|c| c.discrepancy()))
        .collect::<Result<Vec<_>, _>>()?;
    let spectral = if r.spectral {
        let ops = ReturnOperators::new(structure.clone(), config.mesh_y)?;
        let r1 = ops.assemble_r1()?;
        let e = ops.leading_eigenpair(&r1.matrix, r.eigen_tol, r.eigen_max_iter)?;
        let h_y = restrict_density(&s.density, ops.mesh());
        let v = e.vector.scale(h_y.integral() / e.vector.integral());
        Some(Spectral {
            eigenvalue: e.value,
            eigen_residual: e.residual,
            iterations: e.iterations,
            eigenfunction_mismatch: v.l1_distance(&h_y) / h_y.integral(),
            tail_mass: r1.tail_mass,
        })
    } else {
        None
    };
    let summary = diagnostics.summary();
    let report = RenewalReport {
        gamma_times_mu_y: summary.gamma_hat * summary.mu_y,
        summary,
        renewal_identity_discrepancy,
        spectral,
    };
    let csv = out.join("renewal.csv");
    write_file(&csv, |w| diagnostics.write_csv(w))?;
    write_json(&out.join("renewal.json"), &report)?;
    Ok(format!(
        "renewal: Kac partial sum {:.8} at N = {}, exponent {} -> {}",
        report.summary.kac_partial_sum,
        report.summary.kac_horizon,
        report
            .summary
            .fitted_exponent
            .map_or("n/a".to_string(), |x| format!("{x:.4}")),
        csv.display()
    ))
}

#[derive(Debug, Serialize)]
struct CheckpointSummary {
    checkpoint: usize,
    expected: f64,
    median_ratio: f64,
    ratio_q10: f64,
    ratio_q90: f64,
    late_hit_fraction: f64,
    median_new_hits: f64,
}

#[derive(Debug, Serialize)]
struct BcReport {
    checkpoints: Vec<CheckpointSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    criterion: Option<Vec<CriterionRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    criterion_decreasing: Option<bool>,
}

pub fn bc(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let s = solve(config)?;
    let b = &config.bc;
    let schedule = make_schedule(&b.schedule, &s.params)?;
    let experiment = ExperimentConfig {
        orbits: b.orbits,
        horizon: b.horizon,
        burn_in: b.burn_in,
        checkpoints: b.checkpoints.clone(),
        seed: config.seed,
    };
    let hits = run_experiment(&schedule, &s.params, &experiment, &s.density)?;
    let mut checkpoints = Vec::new();
    let mut previous = 0;
    for (c, &n) in hits.checkpoints.iter().enumerate() {
        let ratios = hits.ratios(n)?;
        let new: Vec<f64> = hits
            .counts
            .iter()
            .map(|s| (s[c] - if c == 0 { 0 } else { s[c - 1] }) as f64)
            .collect();
        checkpoints.push(CheckpointSummary {
            checkpoint: n,
            expected: hits.expected[c],
            median_ratio: quantile(&ratios, 0.5),
            ratio_q10: quantile(&ratios, 0.1),
            ratio_q90: quantile(&ratios, 0.9),
            late_hit_fraction: hits.fraction_late_hit(n)?,
            median_new_hits: quantile(&new, 0.5),
        });
        previous = n;
    }
    let hits_csv = out.join("hits.csv");
    write_file(&hits_csv, |w| hits.write_csv(w))?;
    let criterion = match &b.criterion {
        Some(c) => {
            let target = if c.pullback {
                pullback(&schedule)
            } else {
                schedule.clone()
            };
            let correlator = Correlator::new(&s.ulam, &s.density, c.band);
            let report = criterion_ratio(&target, &c.horizons, c.band, &correlator)?;
            write_file(&out.join("criterion.csv"), |w| report.write_csv(w))?;
            Some(report)
        }
        None => None,
    };
    let report = BcReport {
        checkpoints,
        criterion_decreasing: criterion.as_ref().map(|c| c.decreasing()),
        criterion: criterion.as_ref().map(|c| c.rows.clone()),
    };
    write_json(&out.join("bc.json"), &report)?;
    let last = report.checkpoints.last().expect("at least one checkpoint");
    let tail = criterion
        .as_ref()
        .and_then(|c| c.rows.last())
        .map_or(String::new(), |r| format!(", pair ratio {:.4} at n = {}", r.ratio, r.n));
    Ok(format!(
        "bc: median S_N/E_N {:.4} at N = {previous}{tail} -> {}",
        last.median_ratio,
        hits_csv.display()
    ))
}

/// Paths of the files a command writes, manifest first.
pub fn outputs(command: &str, out: &Path, config: &RunConfig) -> Vec<PathBuf> {
    let names: &[&str] = match command {
        "orbit" => &["orbit.csv"],
        "density" => &["density.csv", "density.json"],
        "renewal" => &["renewal.csv", "renewal.json"],
        "bc" if config.bc.criterion.is_some() => &["hits.csv", "criterion.csv", "bc.json"],
        "bc" => &["hits.csv", "bc.json"],
        _ => &[],
    };
    std::iter::once("manifest.json")
        .chain(names.iter().copied())
        .map(|n| out.join(n))
        .collect()
}

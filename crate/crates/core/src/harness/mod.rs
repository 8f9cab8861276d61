//! Experiment orchestration: sweeps, population evolution and window-length
//! scans, with deterministic shot-parallel execution, CSV output and a
//! manifest sidecar.

mod config;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::logical_error_per_cycle;
use crate::circuit::{build_cycle, repeat_window, CircuitError, Protocol, ScheduleSpec, WindowCircuit};
use crate::code::{CodeError, CssCode};
use crate::decoder::{adjudicate, DecodeError, WindowDecoder};
use crate::faultmodel::{build_models, detectors, ModelError};
use crate::sim::{estimate_steady_leak, init_state, run_shot, shot_seed, LevelCounts, NoiseError, NoiseParams};

pub use config::{
    apply_override, parse_config_text, CodeSpec, ExperimentConfig, InitialLeak, ProtocolSelection, RawConfig, SweepAxis, SweepMode,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("{protocol} shot {shot} (seed {seed}): {source}")]
    Shot {
        protocol: Protocol,
        shot: usize,
        seed: u64,
        source: DecodeError,
    },
}

impl From<io::Error> for HarnessError {
    fn from(e: io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// Parameter assignments of one sweep point, as `(param, value)`.
pub type Point = Vec<(String, f64)>;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Aggregated metrics of one (point, protocol).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub protocol: Protocol,
    pub point: Point,
    pub shots: usize,
    pub n_cycles: usize,
    pub initial_leak: f64,
    pub failures: usize,
    pub p_n: f64,
    pub ler_per_cycle: f64,
    pub ler_ci_lo: f64,
    pub ler_ci_hi: f64,
    /// Per shot, the mean of the two sector iteration counts, averaged over shots.
    pub mean_bp_iters: f64,
    /// Standard error of `mean_bp_iters`.
    pub bp_iters_sem: f64,
    /// Fraction of sector decodes where BP converged.
    pub bp_converged_frac: f64,
    /// Fraction of sector decodes that fell back to OSD.
    pub osd_frac: f64,
    pub ground_pop: f64,
    pub excited_pop: f64,
    pub leaked_pop: f64,
    /// Pre-readout ground fraction per cycle.
    pub ground_by_cycle: Vec<f64>,
    pub populations: LevelCounts,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default)]
struct ShotStats {
    failed: bool,
    iters: u64,
    converged: u64,
    osd: u64,
    by_cycle: Vec<LevelCounts>,
}

/// A code plus its schedule and worker pool, shared by all runs of a config.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub code: CssCode,
    pub schedule: ScheduleSpec,
    pool: rayon::ThreadPool,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let code = config.code.build()?;
        let schedule = config.schedule_for(&code);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            config,
            code,
            schedule,
            pool,
        })
    }

    pub fn code_hash(&self) -> String {
        let digest = Sha256::digest(self.code.to_css_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn window(&self, protocol: Protocol, n_cycles: usize) -> Result<WindowCircuit, HarnessError> {
        Ok(repeat_window(build_cycle(&self.code, &self.schedule, protocol)?, n_cycles)?)
    }

    /// Initial leaked fraction for a point under the configured mode.
    pub fn initial_leak(&self, noise: &NoiseParams, protocol: Protocol, seed: u64) -> Result<f64, HarnessError> {
        Ok(match self.config.initial_leak {
            InitialLeak::Zero => 0.0,
            InitialLeak::Fixed(f) => f,
            InitialLeak::Auto => {
                let cycles = self.config.pilot_cycles.unwrap_or_else(|| pilot_cycles(noise));
                estimate_steady_leak(
                    &self.code,
                    &self.schedule,
                    noise,
                    protocol,
                    self.config.pilot_shots,
                    cycles,
                    shot_seed(seed, u64::MAX),
                )?
            }
        })
    }

    /// Simulates and decodes `shots` windows at one point.
    pub fn run_point(&self, point: &[(String, f64)], protocol: Protocol, n_cycles: usize, seed: u64) -> Result<MetricsRow, HarnessError> {
        let start = Instant::now();
        let noise = self.config.noise_for(point, protocol)?;
        let init_leak = self.initial_leak(&noise, protocol, seed)?;
        let window = self.window(protocol, n_cycles)?;
        let models = build_models(&window, &self.code, &noise)?;
        let decoder = WindowDecoder::new(&models, self.config.decoder)?;
        let shots = self.config.shots;
        let code = &self.code;

        let run = |i: usize| -> Result<ShotStats, HarnessError> {
            let s = shot_seed(seed, i as u64);
            let rec = run_shot(&window, &noise, init_state(code, s, init_leak));
            let outcomes = decoder.decode(&detectors(&rec, code)).map_err(|source| HarnessError::Shot {
                protocol,
                shot: i,
                seed: s,
                source,
            })?;
            Ok(ShotStats {
                failed: adjudicate(&rec, &outcomes, code),
                iters: outcomes.iter().map(|o| o.iterations as u64).sum(),
                converged: outcomes.iter().filter(|o| o.converged).count() as u64,
                osd: outcomes.iter().filter(|o| o.used_osd).count() as u64,
                by_cycle: rec.populations.iter().map(|p| p.combined()).collect(),
            })
        };
        let stats: Vec<ShotStats> = self.pool.install(|| (0..shots).into_par_iter().map(run).collect::<Result<_, _>>())?;

        let mut failures = 0usize;
        let (mut iters, mut iters_sq, mut converged, mut osd) = (0u64, 0u64, 0u64, 0u64);
        let mut by_cycle = vec![LevelCounts::default(); n_cycles];
        for s in &stats {
            failures += s.failed as usize;
            iters += s.iters;
            iters_sq += s.iters * s.iters;
            converged += s.converged;
            osd += s.osd;
            for (acc, c) in by_cycle.iter_mut().zip(&s.by_cycle) {
                acc.add(c);
            }
        }
        let mut populations = LevelCounts::default();
        for c in &by_cycle {
            populations.add(c);
        }
        let n = shots as f64;
        let p_n = failures as f64 / n;
        let (lo, hi) = wilson_interval(failures, shots, Z95);
        // Per-shot value is iters/2; moments follow from the integer sums.
        let mean = iters as f64 / (2.0 * n);
        let var = if shots > 1 {
            ((iters_sq as f64 / 4.0) - n * mean * mean).max(0.0) / (n - 1.0)
        } else {
            0.0
        };
        let total = populations.total().max(1) as f64;
        let row = MetricsRow {
            protocol,
            point: point.to_vec(),
            shots,
            n_cycles,
            initial_leak: init_leak,
            failures,
            p_n,
            ler_per_cycle: logical_error_per_cycle(p_n, n_cycles),
            ler_ci_lo: logical_error_per_cycle(lo, n_cycles),
            ler_ci_hi: logical_error_per_cycle(hi, n_cycles),
            mean_bp_iters: mean,
            bp_iters_sem: (var / n).sqrt(),
            bp_converged_frac: converged as f64 / (2.0 * n),
            osd_frac: osd as f64 / (2.0 * n),
            ground_pop: populations.ground as f64 / total,
            excited_pop: populations.excited as f64 / total,
            leaked_pop: populations.leaked as f64 / total,
            ground_by_cycle: by_cycle.iter().map(|c| c.ground as f64 / c.total().max(1) as f64).collect(),
            populations,
            wall_s: if self.config.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        log::info!(
            "{} {:?} N={}: p_N={} ({}/{}) iters={:.2} osd={:.3}",
            protocol,
            point,
            n_cycles,
            row.p_n,
            failures,
            shots,
            row.mean_bp_iters,
            row.osd_frac
        );
        Ok(row)
    }

    /// One row per point per protocol, in point order; each row is handed
    /// to `sink` as soon as it is available.
    pub fn run_sweep_with(&self, mut sink: impl FnMut(&MetricsRow) -> Result<(), HarnessError>) -> Result<Vec<MetricsRow>, HarnessError> {
        let mut rows = Vec::new();
        for (pi, point) in self.config.points().iter().enumerate() {
            let n_cycles = self.config.cycles_for(point)?;
            let seed = shot_seed(self.config.seed, pi as u64);
            for protocol in self.config.protocol.protocols() {
                let row = self.run_point(point, protocol, n_cycles, seed)?;
                sink(&row)?;
                rows.push(row);
            }
        }
        Ok(rows)
    }

    /// Runs every window length at every point, with the window length in
    /// the `n_cycles` column.
    pub fn run_window_scan_with(
        &self,
        windows: &[usize],
        mut sink: impl FnMut(&MetricsRow) -> Result<(), HarnessError>,
    ) -> Result<Vec<MetricsRow>, HarnessError> {
        if let Some(&w) = windows.iter().find(|&&w| w < 2) {
            return Err(HarnessError::Config(format!("window length {w} is below 2")));
        }
        let mut rows = Vec::new();
        for (pi, point) in self.config.points().iter().enumerate() {
            let base = shot_seed(self.config.seed, pi as u64);
            for &w in windows {
                let seed = shot_seed(base, w as u64);
                for protocol in self.config.protocol.protocols() {
                    let row = self.run_point(point, protocol, w, seed)?;
                    sink(&row)?;
                    rows.push(row);
                }
            }
        }
        Ok(rows)
    }

    /// Per-cycle pre-readout populations without decoding.
    pub fn run_evolution(&self) -> Result<Vec<EvolutionRow>, HarnessError> {
        let mut rows = Vec::new();
        for (pi, point) in self.config.points().iter().enumerate() {
            let n_cycles = self.config.cycles_for(point)?;
            let seed = shot_seed(self.config.seed, pi as u64);
            for protocol in self.config.protocol.protocols() {
                let noise = self.config.noise_for(point, protocol)?;
                let init_leak = match self.config.initial_leak {
                    InitialLeak::Fixed(f) => f,
                    InitialLeak::Zero | InitialLeak::Auto => 0.0,
                };
                let window = self.window(protocol, n_cycles)?;
                let code = &self.code;
                let per_shot: Vec<Vec<(LevelCounts, LevelCounts)>> = self.pool.install(|| {
                    (0..self.config.shots)
                        .into_par_iter()
                        .map(|i| {
                            let rec = run_shot(&window, &noise, init_state(code, shot_seed(seed, i as u64), init_leak));
                            rec.populations.iter().map(|p| (p.x, p.z)).collect()
                        })
                        .collect()
                });
                let mut acc = vec![(LevelCounts::default(), LevelCounts::default()); n_cycles];
                for shot in &per_shot {
                    for (a, c) in acc.iter_mut().zip(shot) {
                        a.0.add(&c.0);
                        a.1.add(&c.1);
                    }
                }
                for (cycle, (x, z)) in acc.into_iter().enumerate() {
                    rows.push(EvolutionRow {
                        protocol,
                        point: point.clone(),
                        cycle,
                        x,
                        z,
                    });
                }
            }
        }
        Ok(rows)
    }

    /// Manifest lines: the resolved config followed by `manifest.*` keys.
    pub fn manifest(&self, command: &str) -> String {
        let mut out = String::new();
        for (k, v) in self.config.to_raw() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        out.push_str(&format!("manifest.command = {command}\n"));
        out.push_str(&format!("manifest.seed = {}\n", self.config.seed));
        out.push_str(&format!("manifest.code_sha256 = {}\n", self.code_hash()));
        out.push_str(&format!("manifest.version = {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("manifest.created_unix = {created}\n"));
        out
    }
}

/// Pilot length long enough for the leaked population to settle.
pub fn pilot_cycles(noise: &NoiseParams) -> usize {
    if noise.p_seep > 0.0 {
        (5.0 / noise.p_seep).ceil() as usize
    } else {
        100
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionRow {
    pub protocol: Protocol,
    pub point: Point,
    pub cycle: usize,
    pub x: LevelCounts,
    pub z: LevelCounts,
}

impl EvolutionRow {
    pub fn all(&self) -> LevelCounts {
        let mut c = self.x;
        c.add(&self.z);
        c
    }
}

fn frac(num: usize, c: &LevelCounts) -> f64 {
    num as f64 / c.total().max(1) as f64
}

fn axis_headers(config: &ExperimentConfig) -> Vec<String> {
    config.axes.iter().map(|a| a.column_name().unwrap_or(&a.param).to_string()).collect()
}

pub const METRICS_COLUMNS: [&str; 12] = [
    "shots",
    "n_cycles",
    "p_N",
    "ler_per_cycle",
    "ler_ci_lo",
    "ler_ci_hi",
    "mean_bp_iters",
    "bp_converged_frac",
    "osd_frac",
    "ground_pop",
    "leaked_pop",
    "wall_s",
];

/// CSV writer for [`MetricsRow`]s; flushes after every row.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W, config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let mut inner = csv::Writer::from_writer(out);
        let mut header = vec!["protocol".to_string()];
        header.extend(axis_headers(config));
        header.extend(METRICS_COLUMNS.iter().map(|s| s.to_string()));
        inner.write_record(&header)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<(), HarnessError> {
        let mut rec = vec![row.protocol.to_string()];
        rec.extend(row.point.iter().map(|(_, v)| v.to_string()));
        rec.extend([
            row.shots.to_string(),
            row.n_cycles.to_string(),
            row.p_n.to_string(),
            row.ler_per_cycle.to_string(),
            row.ler_ci_lo.to_string(),
            row.ler_ci_hi.to_string(),
            row.mean_bp_iters.to_string(),
            row.bp_converged_frac.to_string(),
            row.osd_frac.to_string(),
            row.ground_pop.to_string(),
            row.leaked_pop.to_string(),
            row.wall_s.to_string(),
        ]);
        self.inner.write_record(&rec)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, HarnessError> {
        self.inner.into_inner().map_err(|e| HarnessError::Io(e.to_string()))
    }
}

/// Writes evolution rows as CSV.
pub fn write_evolution<W: Write>(out: W, config: &ExperimentConfig, rows: &[EvolutionRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["protocol".to_string()];
    header.extend(axis_headers(config));
    header.extend(
        ["cycle", "x_ground", "x_leaked", "z_ground", "z_leaked", "ground", "excited", "leaked", "leaked_count", "readouts"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in rows {
        let all = r.all();
        let mut rec = vec![r.protocol.to_string()];
        rec.extend(r.point.iter().map(|(_, v)| v.to_string()));
        rec.extend([
            r.cycle.to_string(),
            frac(r.x.ground, &r.x).to_string(),
            frac(r.x.leaked, &r.x).to_string(),
            frac(r.z.ground, &r.z).to_string(),
            frac(r.z.leaked, &r.z).to_string(),
            frac(all.ground, &all).to_string(),
            frac(all.excited, &all).to_string(),
            frac(all.leaked, &all).to_string(),
            all.leaked.to_string(),
            all.total().to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn open_output(exp: &Experiment, command: &str) -> Result<Option<File>, HarnessError> {
    match &exp.config.output {
        Some(path) => {
            std::fs::write(manifest_path(path), exp.manifest(command))?;
            Ok(Some(File::create(path)?))
        }
        None => Ok(None),
    }
}

/// Runs a sweep, writing the manifest and then the CSV (to `output` or stdout).
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<MetricsRow>, HarnessError> {
    let exp = Experiment::new(config.clone())?;
    match open_output(&exp, "sweep")? {
        Some(f) => {
            let mut w = MetricsWriter::new(f, config)?;
            exp.run_sweep_with(|r| w.write(r))
        }
        None => {
            let mut w = MetricsWriter::new(io::stdout().lock(), config)?;
            exp.run_sweep_with(|r| w.write(r))
        }
    }
}

/// Window-length scan over `config.windows`.
pub fn run_window_scan(config: &ExperimentConfig) -> Result<Vec<MetricsRow>, HarnessError> {
    let exp = Experiment::new(config.clone())?;
    let windows = config.windows.clone();
    match open_output(&exp, "window-scan")? {
        Some(f) => {
            let mut w = MetricsWriter::new(f, config)?;
            exp.run_window_scan_with(&windows, |r| w.write(r))
        }
        None => {
            let mut w = MetricsWriter::new(io::stdout().lock(), config)?;
            exp.run_window_scan_with(&windows, |r| w.write(r))
        }
    }
}

/// Population evolution from an unleaked start.
pub fn run_evolution(config: &ExperimentConfig) -> Result<Vec<EvolutionRow>, HarnessError> {
    let exp = Experiment::new(config.clone())?;
    let rows = exp.run_evolution()?;
    match open_output(&exp, "evolution")? {
        Some(f) => write_evolution(f, config, &rows)?,
        None => write_evolution(io::stdout().lock(), config, &rows)?,
    }
    Ok(rows)
}

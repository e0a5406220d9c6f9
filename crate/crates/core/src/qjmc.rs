//! Quantum-jump unravelling of the quantum contact process with pure-state
//! TEBD under the effective non-Hermitian Hamiltonian.
//!
//! Each step uses the first-order rule: with pre-step densities `<n_k>` the
//! jump probabilities are `p_k = dt * gamma * <n_k>`. One uniform `u` is
//! drawn; if `u < sum p_k` the site whose cumulative probability interval
//! contains `u` decays, otherwise the state takes one Trotter step under
//! `H_eff`. Either way the state is renormalized afterwards.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_trotter_schedule, empty_state, jump_operators, occupied_state, GateSchedule, JumpOp, Kind, LocalOps, ModelSpec, Picture};
use crate::mps::{Mps, Truncation, TruncationReport};
use crate::scalar::{cast_matrix, from_c64, real_to_f64, to_c64, ComplexScalar};

/// All site densities below this mean the state is the vacuum.
pub const ABSORBED_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub site: usize,
}

/// Mixes `(master_seed, index)` into an independent 64-bit stream key.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Site whose cumulative-probability interval contains `u`, or `None` for
/// the no-jump branch.
pub fn draw_jump(probs: &[f64], u: f64) -> Option<usize> {
    let total: f64 = probs.iter().sum();
    if !(u < total) {
        return None;
    }
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(k);
        }
    }
    // rounding in the running sum can leave u just above the last edge
    probs.iter().rposition(|&p| p > 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QjmcConfig {
    pub spec: ModelSpec,
    pub chi_max: usize,
    pub dt: f64,
    pub t_max: f64,
    /// Steps between recorded samples.
    pub measure_every: usize,
    pub svd_cutoff: f64,
    /// Stop evolving once the vacuum is reached.
    pub freeze_absorbed: bool,
}

impl QjmcConfig {
    pub const DEFAULT_DT: f64 = 0.01;

    pub fn new(spec: ModelSpec, chi_max: usize, t_max: f64) -> Self {
        Self {
            spec,
            chi_max,
            dt: Self::DEFAULT_DT,
            t_max,
            measure_every: 10,
            svd_cutoff: Truncation::DEFAULT_CUTOFF,
            freeze_absorbed: true,
        }
    }

    pub fn truncation(&self) -> Truncation {
        Truncation { chi_max: self.chi_max, svd_cutoff: self.svd_cutoff }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.spec.kind != Kind::Quantum {
            return Err(Error::Unsupported("trajectories are only run for the quantum contact process".into()));
        }
        if self.chi_max < 1 {
            return Err(Error::InvalidChiMax);
        }
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) || self.measure_every == 0 {
            return Err(Error::InvalidArgument("need dt > 0, t_max >= 0, measure_every >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub seed: u64,
    pub chi_max: usize,
    pub times: Vec<f64>,
    /// `|<vac|psi>|^2`.
    pub survival_overlap: Vec<f64>,
    pub total_density: Vec<f64>,
    pub seed_density: Vec<f64>,
    /// Maximum entanglement entropy over bonds.
    pub entropy: Vec<f64>,
    /// Cumulative discarded weight up to each sample.
    pub discarded_weight: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    pub absorbed_at: Option<f64>,
}

/// Tensor-network trajectory stepper holding the prebuilt schedule and jumps.
pub struct Stepper<C: ComplexScalar> {
    pub schedule: GateSchedule<C>,
    pub jumps: Vec<(usize, ndarray::Array2<C>, f64)>,
    pub n_op: ndarray::Array2<C>,
    pub trunc: Truncation,
    pub dt: f64,
}

/// What one call of [`Stepper::step`] did.
#[derive(Clone, Debug)]
pub enum StepOutcome {
    Jump(usize),
    /// No jump; `vacuum` flags a state that was already the vacuum.
    Drift { report: TruncationReport, vacuum: bool },
    /// The vacuum was reached and `freeze` was set; nothing was done.
    Absorbed,
}

impl<C: ComplexScalar> Stepper<C> {
    pub fn new(cfg: &QjmcConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = build_trotter_schedule::<C>(&cfg.spec, Picture::PureStateNonhermitian, cfg.dt)?;
        let jumps = jump_operators(&cfg.spec)?
            .into_iter()
            .map(|JumpOp { site, op, rate }| (site, cast_matrix(&op), rate))
            .collect();
        Ok(Self {
            schedule,
            jumps,
            n_op: cast_matrix(&LocalOps::new().n),
            trunc: cfg.truncation(),
            dt: cfg.dt,
        })
    }

    pub fn densities(&self, state: &Mps<C>) -> Result<Vec<f64>> {
        Ok(state
            .expectation_profile(&self.n_op)?
            .into_iter()
            .map(|z| real_to_f64(z.re()))
            .collect())
    }

    /// One protocol step on a normalized state.
    pub fn step<R: Rng>(&self, state: &mut Mps<C>, rng: &mut R, freeze: bool) -> Result<StepOutcome> {
        let dens = self.densities(state)?;
        let vacuum = dens.iter().all(|&x| x < ABSORBED_THRESHOLD);
        if vacuum && freeze {
            return Ok(StepOutcome::Absorbed);
        }
        let probs: Vec<f64> = dens.iter().zip(&self.jumps).map(|(n, j)| self.dt * j.2 * n).collect();
        let outcome = match draw_jump(&probs, rng.random::<f64>()) {
            Some(site) => {
                state.apply_single_site(&self.jumps[site].1, site, false)?;
                StepOutcome::Jump(site)
            }
            None => {
                let mut report = TruncationReport::new(state.len() - 1);
                for layer in &self.schedule.layers {
                    report.merge(&state.apply_sweep(layer, &self.trunc)?);
                }
                StepOutcome::Drift { report, vacuum }
            }
        };
        let norm = state.normalize();
        if !(norm > 1e-12) {
            return Err(Error::NormCollapse { norm });
        }
        Ok(outcome)
    }
}

/// Pure product state with the middle site occupied.
pub fn seed_pure_state<C: ComplexScalar>(spec: &ModelSpec) -> Result<Mps<C>> {
    let local: Vec<Array1<C>> = (0..spec.len)
        .map(|k| if k == spec.seed_site() { occupied_state() } else { empty_state() })
        .map(|v| v.mapv(from_c64::<C>))
        .collect();
    Mps::from_product(&local)
}

struct Sample {
    survival_overlap: f64,
    total_density: f64,
    seed_density: f64,
    entropy: f64,
}

fn sample<C: ComplexScalar>(stepper: &Stepper<C>, state: &mut Mps<C>, vacuum: &[Array1<C>]) -> Result<Sample> {
    let dens = stepper.densities(state)?;
    let norm2 = state.norm_squared();
    let overlap = to_c64(state.product_overlap(vacuum)?).norm_sqr() / norm2;
    state.canonicalize()?;
    Ok(Sample {
        survival_overlap: overlap,
        total_density: dens.iter().sum(),
        seed_density: dens[state.len() / 2],
        entropy: state.max_entropy_over_bonds()?,
    })
}

/// Runs one trajectory from the seed state with the stream for `index`.
pub fn run_trajectory<C: ComplexScalar>(cfg: &QjmcConfig, master_seed: u64, index: u64) -> Result<TrajectoryRecord> {
    let stepper = Stepper::<C>::new(cfg)?;
    let state = seed_pure_state::<C>(&cfg.spec)?;
    run_trajectory_from(cfg, &stepper, state, trajectory_seed(master_seed, index), index)
}

pub fn run_trajectory_from<C: ComplexScalar>(
    cfg: &QjmcConfig,
    stepper: &Stepper<C>,
    mut state: Mps<C>,
    seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    let mut rng = rng_from_seed(seed);
    let vacuum: Vec<Array1<C>> = vec![empty_state().mapv(from_c64::<C>); cfg.spec.len];
    let mut rec = TrajectoryRecord {
        index,
        seed,
        chi_max: cfg.chi_max,
        times: Vec::new(),
        survival_overlap: Vec::new(),
        total_density: Vec::new(),
        seed_density: Vec::new(),
        entropy: Vec::new(),
        discarded_weight: Vec::new(),
        jumps: Vec::new(),
        absorbed_at: None,
    };
    state.normalize();
    let mut discarded = 0.0;
    let push = |rec: &mut TrajectoryRecord, t: f64, s: &Sample, discarded: f64| {
        rec.times.push(t);
        rec.survival_overlap.push(s.survival_overlap);
        rec.total_density.push(s.total_density);
        rec.seed_density.push(s.seed_density);
        rec.entropy.push(s.entropy);
        rec.discarded_weight.push(discarded);
    };
    let mut current = sample(stepper, &mut state, &vacuum)?;
    push(&mut rec, 0.0, &current, 0.0);
    let n_steps = cfg.n_steps();
    let mut frozen = false;
    for step in 1..=n_steps {
        let t = step as f64 * cfg.dt;
        if !frozen {
            match stepper.step(&mut state, &mut rng, cfg.freeze_absorbed)? {
                StepOutcome::Jump(site) => rec.jumps.push(JumpEvent { time: t, site }),
                StepOutcome::Drift { report, vacuum } => {
                    discarded += report.total_discarded_weight();
                    if vacuum && rec.absorbed_at.is_none() {
                        rec.absorbed_at = Some(t - cfg.dt);
                    }
                }
                StepOutcome::Absorbed => {
                    rec.absorbed_at = Some(t - cfg.dt);
                    current = sample(stepper, &mut state, &vacuum)?;
                    frozen = true;
                }
            }
        }
        if step % cfg.measure_every == 0 || step == n_steps {
            if !frozen {
                current = sample(stepper, &mut state, &vacuum)?;
            }
            push(&mut rec, t, &current, discarded);
        }
    }
    Ok(rec)
}

/// Runs trajectories `first .. first + count` in parallel; results are in
/// index order whatever the scheduling.
pub fn run_trajectories<C: ComplexScalar>(
    cfg: &QjmcConfig,
    master_seed: u64,
    first: u64,
    count: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let stepper = Stepper::<C>::new(cfg)?;
    let initial = seed_pure_state::<C>(&cfg.spec)?;
    (first..first + count)
        .into_par_iter()
        .map(|i| run_trajectory_from(cfg, &stepper, initial.clone(), trajectory_seed(master_seed, i), i))
        .collect()
}

pub fn run_ensemble<C: ComplexScalar>(
    cfg: &QjmcConfig,
    n_traj: u64,
    master_seed: u64,
) -> Result<(Vec<TrajectoryRecord>, EnsembleStats)> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    let records = run_trajectories::<C>(cfg, master_seed, 0, n_traj)?;
    let stats = EnsembleStats::from_records(&records)?;
    Ok((records, stats))
}

/// Per-trajectory observable usable in ensemble means and resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryObservable {
    Survival,
    TotalDensity,
    SeedDensity,
}

impl TrajectoryObservable {
    pub fn values(self, rec: &TrajectoryRecord) -> Vec<f64> {
        match self {
            Self::Survival => rec.survival_overlap.iter().map(|o| 1.0 - o).collect(),
            Self::TotalDensity => rec.total_density.clone(),
            Self::SeedDensity => rec.seed_density.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSeries {
    pub mean: Vec<f64>,
    /// Sample standard deviation over `sqrt(n)`; absent for a single trajectory.
    pub standard_error: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub chi_max: usize,
    pub times: Vec<f64>,
    pub survival: MeanSeries,
    pub total_density: MeanSeries,
    pub seed_density: MeanSeries,
    /// `S_traj` of every trajectory at every sample time.
    pub entropy_snapshots: Vec<Vec<f64>>,
    /// Largest `S_traj` over all times and trajectories.
    pub s_bar: f64,
}

pub fn mean_series(columns: &[Vec<f64>]) -> MeanSeries {
    let n = columns.len();
    let width = columns.first().map(|c| c.len()).unwrap_or(0);
    let mean: Vec<f64> = (0..width)
        .map(|i| columns.iter().map(|c| c[i]).sum::<f64>() / n as f64)
        .collect();
    let standard_error = (n > 1).then(|| {
        (0..width)
            .map(|i| {
                let var = columns.iter().map(|c| (c[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            })
            .collect()
    });
    MeanSeries { mean, standard_error }
}

impl EnsembleStats {
    pub fn from_records(records: &[TrajectoryRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
        if records.iter().any(|r| r.times != first.times) {
            return Err(Error::InvalidArgument("trajectories sampled at different times".into()));
        }
        let column = |o: TrajectoryObservable| -> Vec<Vec<f64>> { records.iter().map(|r| o.values(r)).collect() };
        let entropy_snapshots: Vec<Vec<f64>> = (0..first.times.len())
            .map(|i| records.iter().map(|r| r.entropy[i]).collect())
            .collect();
        let s_bar = entropy_snapshots.iter().flatten().copied().fold(0.0, f64::max);
        Ok(Self {
            n_traj: records.len(),
            chi_max: first.chi_max,
            times: first.times.clone(),
            survival: mean_series(&column(TrajectoryObservable::Survival)),
            total_density: mean_series(&column(TrajectoryObservable::TotalDensity)),
            seed_density: mean_series(&column(TrajectoryObservable::SeedDensity)),
            entropy_snapshots,
            s_bar,
        })
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::InvalidArgument(format!("no sample at t = {t}")))
    }

    /// Ensemble means as an observable series (entropy column is the mean
    /// `S_traj`, error column the mean cumulative discarded weight is not
    /// tracked here and stays `NaN`).
    pub fn to_series(&self) -> crate::doublespace::ObservableSeries {
        let n = self.times.len();
        crate::doublespace::ObservableSeries {
            times: self.times.clone(),
            survival: self.survival.mean.clone(),
            total_density: self.total_density.mean.clone(),
            seed_density: self.seed_density.mean.clone(),
            op_entropy: self
                .entropy_snapshots
                .iter()
                .map(|s| s.iter().sum::<f64>() / s.len() as f64)
                .collect(),
            error_estimate: vec![f64::NAN; n],
            ..Default::default()
        }
    }

    /// CSV with means and standard errors of the three observables.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        use crate::doublespace::fmt_value;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "P_sur", "P_sur_se", "N_a", "N_a_se", "n_seed", "n_seed_se", "S_mean"])?;
        let se = |m: &MeanSeries, i: usize| m.standard_error.as_ref().map(|s| s[i]).unwrap_or(f64::NAN);
        for (i, t) in self.times.iter().enumerate() {
            let s = &self.entropy_snapshots[i];
            let row = [
                *t,
                self.survival.mean[i],
                se(&self.survival, i),
                self.total_density.mean[i],
                se(&self.total_density, i),
                self.seed_density.mean[i],
                se(&self.seed_density, i),
                s.iter().sum::<f64>() / s.len() as f64,
            ];
            out.write_record(row.iter().map(|&x| fmt_value(x)))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Jump log of many trajectories as CSV (`trajectory, t, site`).
pub fn write_jump_log<W: std::io::Write>(records: &[TrajectoryRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trajectory", "t", "site"])?;
    for r in records {
        for j in &r.jumps {
            out.write_record([r.index.to_string(), crate::doublespace::fmt_value(j.time), j.site.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub const HISTOGRAM_BINS: usize = 50;
pub const FIRST_BIN_DISPLAY_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub t: f64,
    pub chi_max: usize,
    pub edges: Vec<f64>,
    /// Fraction of trajectories per bin; sums to one.
    pub heights: Vec<f64>,
    pub mean: f64,
    pub s_bar: f64,
}

impl Histogram {
    /// CSV rows `bin_left, bin_right, height, display_height` after `#`
    /// metadata lines. `display_height` equals `height` except in the first
    /// bin, which is scaled by 0.1 for plotting.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        use crate::doublespace::fmt_value;
        writeln!(w, "# t={}", fmt_value(self.t))?;
        writeln!(w, "# chi={}", self.chi_max)?;
        writeln!(w, "# mean_S={}", fmt_value(self.mean))?;
        writeln!(w, "# S_bar={}", fmt_value(self.s_bar))?;
        writeln!(w, "bin_left,bin_right,height,display_height")?;
        for (i, &h) in self.heights.iter().enumerate() {
            let shown = if i == 0 { h * FIRST_BIN_DISPLAY_SCALE } else { h };
            writeln!(
                w,
                "{},{},{},{}",
                fmt_value(self.edges[i]),
                fmt_value(self.edges[i + 1]),
                fmt_value(h),
                fmt_value(shown)
            )?;
        }
        Ok(())
    }
}

/// Bins the `S_traj` values of `stats` at `t` on 50 equal-width bins that
/// span the reference ensemble's values at its last sample time. Values
/// outside that span are counted in the nearest edge bin.
pub fn entanglement_histogram(stats: &EnsembleStats, t: f64, reference: &EnsembleStats) -> Result<Histogram> {
    let values = &stats.entropy_snapshots[stats.time_index(t)?];
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty snapshot".into()));
    }
    let ref_values = reference
        .entropy_snapshots
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty reference ensemble".into()))?;
    let lo = ref_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ref_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 / HISTOGRAM_BINS as f64 };
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| lo + i as f64 * width).collect();
    let mut heights = vec![0.0; HISTOGRAM_BINS];
    for &v in values {
        let bin = ((v - lo) / width).floor();
        let bin = if bin.is_nan() || bin < 0.0 { 0 } else { (bin as usize).min(HISTOGRAM_BINS - 1) };
        heights[bin] += 1.0;
    }
    let n = values.len() as f64;
    heights.iter_mut().for_each(|h| *h /= n);
    Ok(Histogram {
        t,
        chi_max: stats.chi_max,
        edges,
        heights,
        mean: values.iter().sum::<f64>() / n,
        s_bar: stats.s_bar,
    })
}

/// Manifest of an on-disk trajectory store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub config: QjmcConfig,
    pub master_seed: u64,
    pub n_traj: u64,
}

/// Directory of per-trajectory JSON records plus `manifest.json`; new
/// trajectories continue the index sequence so ensembles can be extended.
pub struct EnsembleStore {
    dir: PathBuf,
    manifest: StoreManifest,
}

impl EnsembleStore {
    pub fn create(dir: &Path, config: QjmcConfig, master_seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let store = Self { dir: dir.to_path_buf(), manifest: StoreManifest { config, master_seed, n_traj: 0 } };
        store.write_manifest()?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        Ok(Self { dir: dir.to_path_buf(), manifest: serde_json::from_str(&text)? })
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_manifest(&self) -> Result<()> {
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }

    pub fn record_path(&self, index: u64) -> PathBuf {
        self.dir.join(format!("traj_{index:06}.json"))
    }

    /// Runs and stores `count` more trajectories.
    pub fn extend<C: ComplexScalar>(&mut self, count: u64) -> Result<Vec<TrajectoryRecord>> {
        let records = run_trajectories::<C>(&self.manifest.config, self.manifest.master_seed, self.manifest.n_traj, count)?;
        self.append(&records)?;
        Ok(records)
    }

    pub fn append(&mut self, records: &[TrajectoryRecord]) -> Result<()> {
        for r in records {
            if r.index != self.manifest.n_traj {
                return Err(Error::InvalidArgument(format!(
                    "expected trajectory {}, got {}",
                    self.manifest.n_traj, r.index
                )));
            }
            fs::write(self.record_path(r.index), serde_json::to_string(r)? + "\n")?;
            self.manifest.n_traj += 1;
        }
        self.write_manifest()
    }

    pub fn load(&self) -> Result<Vec<TrajectoryRecord>> {
        (0..self.manifest.n_traj)
            .map(|i| Ok(serde_json::from_str(&fs::read_to_string(self.record_path(i))?)?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;

    #[test]
    fn draw_jump_intervals() {
        let p = [0.1, 0.0, 0.2];
        assert_eq!(draw_jump(&p, 0.05), Some(0));
        assert_eq!(draw_jump(&p, 0.15), Some(2));
        assert_eq!(draw_jump(&p, 0.35), None);
        assert_eq!(draw_jump(&[0.0, 0.0], 0.0), None);
    }

    #[test]
    fn seeds_differ_per_index() {
        let a = trajectory_seed(1, 0);
        let b = trajectory_seed(1, 1);
        let c = trajectory_seed(2, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, trajectory_seed(1, 0));
    }

    #[test]
    fn vacuum_stays_frozen() {
        let spec = ModelSpec::quantum(4, 6.0);
        let cfg = QjmcConfig { measure_every: 1, ..QjmcConfig::new(spec, 8, 0.5) };
        let stepper = Stepper::<c64>::new(&cfg).unwrap();
        let vac = Mps::from_product(&vec![empty_state(); 4]).unwrap();
        let rec = run_trajectory_from(&cfg, &stepper, vac, 3, 0).unwrap();
        assert!(rec.jumps.is_empty());
        assert_eq!(rec.absorbed_at, Some(0.0));
        assert!(rec.total_density.iter().all(|&n| n == 0.0));
        assert!(rec.survival_overlap.iter().all(|&o| (o - 1.0).abs() < 1e-15));
    }

    #[test]
    fn samples_after_absorption_read_the_vacuum() {
        let cfg = QjmcConfig::new(ModelSpec::quantum(2, 0.0), 4, 3.0);
        let stepper = Stepper::<c64>::new(&cfg).unwrap();
        let initial = seed_pure_state::<c64>(&cfg.spec).unwrap();
        let rec = (0..20)
            .map(|i| run_trajectory_from(&cfg, &stepper, initial.clone(), trajectory_seed(5, i), i).unwrap())
            .find(|r| !r.jumps.is_empty())
            .expect("some trajectory decays");
        let jump = rec.jumps[0].time;
        for (&t, &n) in rec.times.iter().zip(&rec.seed_density) {
            assert_eq!(n, if t < jump { 1.0 } else { 0.0 }, "t = {t}");
        }
    }

    #[test]
    fn classical_trajectories_rejected() {
        let cfg = QjmcConfig::new(ModelSpec::classical(4, 6.75), 8, 1.0);
        assert!(matches!(Stepper::<c64>::new(&cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn histogram_normalization_and_clamping() {
        let rec = |idx: u64, s: f64| TrajectoryRecord {
            index: idx,
            seed: 0,
            chi_max: 4,
            times: vec![0.0, 1.0],
            survival_overlap: vec![0.0, 0.0],
            total_density: vec![1.0, 1.0],
            seed_density: vec![1.0, 1.0],
            entropy: vec![0.0, s],
            discarded_weight: vec![0.0, 0.0],
            jumps: Vec::new(),
            absorbed_at: None,
        };
        let reference = EnsembleStats::from_records(&[rec(0, 0.0), rec(1, 1.0)]).unwrap();
        let stats = EnsembleStats::from_records(&[rec(0, 0.0), rec(1, 0.5), rec(2, 2.0), rec(3, 1.0)]).unwrap();
        let h = entanglement_histogram(&stats, 1.0, &reference).unwrap();
        assert_eq!(h.heights.len(), 50);
        assert!((h.heights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(h.heights[0], 0.25);
        assert_eq!(h.heights[25], 0.25);
        assert_eq!(h.heights[49], 0.5);
        assert_eq!(h.s_bar, 2.0);
        let all_empty = entanglement_histogram(&stats, 0.0, &reference).unwrap();
        assert_eq!(all_empty.heights[0], 1.0);
    }

    #[test]
    fn single_trajectory_has_no_standard_error() {
        let m = mean_series(&[vec![1.0, 2.0]]);
        assert_eq!(m.mean, vec![1.0, 2.0]);
        assert!(m.standard_error.is_none());
    }
}

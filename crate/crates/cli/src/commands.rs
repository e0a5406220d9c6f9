use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use contact_tebd::analysis::{
    bootstrap_exponent, bootstrap_z, chi_difference_error, compare_to_reference, powerlaw_fit, propagate_z, FitResult,
    Significance,
};
use contact_tebd::c64;
use contact_tebd::doublespace::{fmt_value, run_heisenberg_survival, run_schrodinger, ObservableSeries};
use contact_tebd::oracle::fixtures;
use contact_tebd::qjmc::{entanglement_histogram, write_jump_log, EnsembleStats, EnsembleStore, TrajectoryObservable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Engine, RunConfig};

pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult = Result<(), CliError>;

trait OrExit<T> {
    fn usage(self) -> Result<T, CliError>;
    fn runtime(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn usage(self) -> Result<T, CliError> {
        self.map_err(|e| CliError { code: 2, error: e.into() })
    }
    fn runtime(self) -> Result<T, CliError> {
        self.map_err(|e| CliError { code: 1, error: e.into() })
    }
}

const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub artifacts: Vec<Artifact>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join(MANIFEST) {
            out.push(path);
        }
    }
    Ok(())
}

fn hash_artifacts(root: &Path) -> anyhow::Result<Vec<Artifact>> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p)?;
            let rel = p.strip_prefix(root)?.to_string_lossy().replace('\\', "/");
            Ok(Artifact { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
        })
        .collect()
}

fn write_manifest(root: &Path, manifest: &Manifest) -> anyhow::Result<()> {
    fs::write(root.join(MANIFEST), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

pub fn read_manifest(run_dir: &Path) -> anyhow::Result<Manifest> {
    let path = run_dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rehashes every file under the run directory after analyze or plotdata
/// added outputs.
fn refresh_manifest(run_dir: &Path) -> anyhow::Result<()> {
    let mut manifest = read_manifest(run_dir)?;
    manifest.artifacts = hash_artifacts(run_dir)?;
    write_manifest(run_dir, &manifest)
}

fn write_with<F>(path: &Path, f: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> contact_tebd::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn series_file(chi: usize) -> String {
    format!("series_chi{chi}.csv")
}

fn store_dir(chi: usize) -> String {
    format!("ensemble_chi{chi}")
}

fn write_barrier(path: &Path, s: &ObservableSeries) -> anyhow::Result<()> {
    let mut text = String::from("t,S_tilde,err_est,step_error\n");
    for i in 0..s.times.len() {
        let step = s.step_error.get(i).copied().unwrap_or(f64::NAN);
        text += &format!(
            "{},{},{},{}\n",
            fmt_value(s.times[i]),
            fmt_value(s.op_entropy[i]),
            fmt_value(s.error_estimate[i]),
            fmt_value(step)
        );
    }
    fs::write(path, text)?;
    Ok(())
}

/// Opens the store for `chi` and tops it up to `n_traj` trajectories. A store
/// written with a different config or seed is replaced.
fn fill_store(dir: &Path, cfg: &RunConfig, chi: usize) -> anyhow::Result<EnsembleStore> {
    let qcfg = cfg.qjmc(chi);
    let mut store = match EnsembleStore::open(dir) {
        Ok(s) if s.manifest().config == qcfg && s.manifest().master_seed == cfg.master_seed => s,
        _ => {
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
            EnsembleStore::create(dir, qcfg, cfg.master_seed)?
        }
    };
    let have = store.manifest().n_traj;
    if have < cfg.n_traj {
        store.extend::<c64>(cfg.n_traj - have)?;
    }
    Ok(store)
}

fn load_records(store: &EnsembleStore, n: u64) -> anyhow::Result<Vec<contact_tebd::qjmc::TrajectoryRecord>> {
    let mut records = store.load()?;
    records.truncate(n as usize);
    Ok(records)
}

pub fn run(config_path: &Path) -> CmdResult {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))
        .usage()?;
    let cfg = RunConfig::parse(&text).map_err(|e| anyhow!("invalid config: {e}")).usage()?;
    let out = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display())).runtime()?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);

    for &chi in &cfg.chi_list {
        match cfg.engine {
            Engine::DoubleSchrodinger | Engine::DoubleHeisenberg => {
                let dcfg = cfg.double_space(chi);
                let series = if cfg.engine == Engine::DoubleSchrodinger {
                    run_schrodinger::<c64>(&dcfg)
                } else {
                    run_heisenberg_survival::<c64>(&dcfg)
                }
                .runtime()?;
                write_with(&out.join(series_file(chi)), |w| series.write_csv(w)).runtime()?;
                write_barrier(&out.join(format!("barrier_chi{chi}.csv")), &series).runtime()?;
                if series.density_profile.is_some() {
                    write_with(&out.join(format!("profile_chi{chi}.csv")), |w| series.write_profile_csv(w)).runtime()?;
                }
            }
            Engine::Qjmc => {
                let store = fill_store(&out.join(store_dir(chi)), &cfg, chi).runtime()?;
                let records = load_records(&store, cfg.n_traj).runtime()?;
                let stats = EnsembleStats::from_records(&records).runtime()?;
                write_with(&out.join(series_file(chi)), |w| stats.to_series().write_csv(w)).runtime()?;
                write_with(&out.join(format!("ensemble_chi{chi}.csv")), |w| stats.write_csv(w)).runtime()?;
                write_with(&out.join(format!("jumps_chi{chi}.csv")), |w| write_jump_log(&records, w)).runtime()?;
            }
        }
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        config_sha256: sha256_hex(text.as_bytes()),
        started_unix,
        wall_time_s: started.elapsed().as_secs_f64(),
        artifacts: hash_artifacts(&out).runtime()?,
    };
    write_manifest(&out, &manifest).runtime()?;
    println!("wrote {} artifacts to {}", manifest.artifacts.len(), out.display());
    Ok(())
}

fn read_series(run_dir: &Path, chi: usize) -> anyhow::Result<ObservableSeries> {
    let path = run_dir.join(series_file(chi));
    let file = fs::File::open(&path).with_context(|| format!("missing series {}", path.display()))?;
    Ok(ObservableSeries::read_csv(file)?)
}

fn open_store(run_dir: &Path, chi: usize) -> anyhow::Result<EnsembleStore> {
    let dir = run_dir.join(store_dir(chi));
    EnsembleStore::open(&dir).with_context(|| format!("missing trajectory store {}", dir.display()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChiFits {
    pub chi: usize,
    pub delta: FitResult,
    pub theta: Option<FitResult>,
    pub seed_slope: Option<FitResult>,
    pub z: Option<FitResult>,
    pub comparisons: Vec<Significance>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub engine: Engine,
    pub kind: contact_tebd::model::Kind,
    #[serde(rename = "L")]
    pub len: usize,
    pub window: (f64, f64),
    pub seed_window: (f64, f64),
    pub fits: Vec<ChiFits>,
}

/// `(label, delta, z, Theta)` reference exponents of directed percolation.
pub const DP_REFERENCES: [(&str, f64, f64, f64); 2] = [("1d DP", 0.16, 1.58, 0.31), ("2d DP", 0.45, 1.77, 0.23)];

fn fit_in(t: &[f64], y: &[f64], window: (f64, f64), what: &str) -> anyhow::Result<FitResult> {
    powerlaw_fit(t, y, window).with_context(|| format!("fitting {what} over window [{}, {}]", window.0, window.1))
}

fn series_fits(s: &ObservableSeries, window: (f64, f64), seed_window: (f64, f64), densities: bool) -> anyhow::Result<[Option<FitResult>; 4]> {
    let delta = fit_in(&s.times, &s.survival, window, "P_sur")?.negated();
    if !densities {
        return Ok([Some(delta), None, None, None]);
    }
    let theta = fit_in(&s.times, &s.total_density, window, "N_a")?;
    let seed = fit_in(&s.times, &s.seed_density, seed_window, "n_seed")?;
    Ok([Some(delta), Some(theta), Some(seed), None])
}

fn comparisons(fits: &ChiFits) -> Vec<Significance> {
    let mut out = Vec::new();
    for (label, d, z, th) in DP_REFERENCES {
        out.push(compare_to_reference(&fits.delta, d, &format!("delta vs {label}")));
        if let Some(f) = &fits.z {
            out.push(compare_to_reference(f, z, &format!("z vs {label}")));
        }
        if let Some(f) = &fits.theta {
            out.push(compare_to_reference(f, th, &format!("Theta vs {label}")));
        }
    }
    out
}

fn analyze_report(run_dir: &Path, window: Option<(f64, f64)>, resamples: usize) -> anyhow::Result<FitReport> {
    let manifest = read_manifest(run_dir)?;
    let cfg = &manifest.config;
    let window = window.unwrap_or((cfg.fit_window[0], cfg.fit_window[1]));
    let seed_window = match window {
        w if Some(w) != Some((cfg.fit_window[0], cfg.fit_window[1])) => w,
        _ => (cfg.seed_window()[0], cfg.seed_window()[1]),
    };
    let mut fits = Vec::new();
    match cfg.engine {
        Engine::DoubleSchrodinger | Engine::DoubleHeisenberg => {
            let densities = cfg.engine == Engine::DoubleSchrodinger;
            let mut raw = Vec::new();
            for &chi in &cfg.chi_list {
                raw.push((chi, series_fits(&read_series(run_dir, chi)?, window, seed_window, densities)?));
            }
            for (chi, f) in &raw {
                let half = raw.iter().find(|(c, _)| 2 * c == *chi).map(|(_, h)| h);
                let with_err = |i: usize| -> anyhow::Result<Option<FitResult>> {
                    Ok(match (&f[i], half.and_then(|h| h[i].as_ref())) {
                        (Some(a), Some(b)) => Some(chi_difference_error(a, b)?),
                        (a, _) => a.clone(),
                    })
                };
                let theta = with_err(1)?;
                let seed = with_err(2)?;
                let z = match (&theta, &seed) {
                    (Some(t), Some(s)) => propagate_z(t, s).ok(),
                    _ => None,
                };
                fits.push(ChiFits {
                    chi: *chi,
                    delta: with_err(0)?.expect("delta is always fitted"),
                    theta,
                    seed_slope: seed,
                    z,
                    comparisons: Vec::new(),
                });
            }
        }
        Engine::Qjmc => {
            for &chi in &cfg.chi_list {
                let records = load_records(&open_store(run_dir, chi)?, cfg.n_traj)?;
                let boot = |obs, w: (f64, f64), what: &str| {
                    bootstrap_exponent(&records, obs, w, resamples, cfg.master_seed)
                        .with_context(|| format!("fitting {what} over window [{}, {}]", w.0, w.1))
                };
                let delta = boot(TrajectoryObservable::Survival, window, "P_sur")?.negated();
                let theta = boot(TrajectoryObservable::TotalDensity, window, "N_a")?;
                let seed = boot(TrajectoryObservable::SeedDensity, seed_window, "n_seed")?;
                let z = if seed_window == window {
                    bootstrap_z(&records, window, resamples, cfg.master_seed).ok()
                } else {
                    propagate_z(&theta, &seed).ok()
                };
                fits.push(ChiFits { chi, delta, theta: Some(theta), seed_slope: Some(seed), z, comparisons: Vec::new() });
            }
        }
    }
    for f in &mut fits {
        f.comparisons = comparisons(f);
    }
    Ok(FitReport { engine: cfg.engine, kind: cfg.kind, len: cfg.len, window, seed_window, fits })
}

fn cell(f: Option<&FitResult>) -> String {
    match f {
        Some(f) if f.error.is_finite() && f.error > 0.0 => format!("{:.3} ± {:.3}", f.exponent, f.error),
        Some(f) => format!("{:.3}", f.exponent),
        None => "-".into(),
    }
}

pub fn summary_table(report: &FitReport) -> String {
    let mut header = vec!["".to_string()];
    header.extend(report.fits.iter().map(|f| format!("{:?} L={} chi={}", report.kind, report.len, f.chi)));
    header.extend(DP_REFERENCES.iter().map(|r| r.0.to_string()));
    let mut rows = vec![header];
    let pick: [(&str, fn(&ChiFits) -> Option<&FitResult>, usize); 3] = [
        ("delta", |f| Some(&f.delta), 1),
        ("z", |f| f.z.as_ref(), 2),
        ("Theta", |f| f.theta.as_ref(), 3),
    ];
    for (name, get, col) in pick {
        let mut row = vec![name.to_string()];
        row.extend(report.fits.iter().map(|f| cell(get(f))));
        row.extend(DP_REFERENCES.iter().map(|r| format!("{:.2}", [r.1, r.2, r.3][col - 1])));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!(
        "window [{}, {}], n_seed window [{}, {}], engine {:?}\n",
        report.window.0, report.window.1, report.seed_window.0, report.seed_window.1, report.engine
    );
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out += line.join("  ").trim_end();
        out.push('\n');
    }
    out
}

pub fn analyze(run_dir: &Path, window: Option<(f64, f64)>, resamples: usize) -> CmdResult {
    let report = analyze_report(run_dir, window, resamples).runtime()?;
    let table = summary_table(&report);
    fs::write(run_dir.join("fits.json"), serde_json::to_string_pretty(&report).runtime()? + "\n").runtime()?;
    fs::write(run_dir.join("summary.txt"), &table).runtime()?;
    refresh_manifest(run_dir).runtime()?;
    print!("{table}");
    Ok(())
}

struct Columns {
    names: Vec<String>,
    times: Vec<f64>,
    cols: Vec<Vec<f64>>,
}

impl Columns {
    fn new(times: Vec<f64>) -> Self {
        Self { names: vec!["t".into()], times, cols: Vec::new() }
    }

    fn push(&mut self, name: String, values: Vec<f64>) -> anyhow::Result<()> {
        if values.len() != self.times.len() {
            bail!("column {name} has {} rows, expected {}", values.len(), self.times.len());
        }
        self.names.push(name);
        self.cols.push(values);
        Ok(())
    }

    fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = self.names.join(",") + "\n";
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_value(*t)];
            row.extend(self.cols.iter().map(|c| fmt_value(c[i])));
            text += &(row.join(",") + "\n");
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn overlay(times: &[f64], fit: Option<FitResult>) -> Vec<f64> {
    times
        .iter()
        .map(|&t| match &fit {
            Some(f) if t >= f.window.0 && t <= f.window.1 => f.amplitude * t.powf(f.exponent),
            _ => f64::NAN,
        })
        .collect()
}

fn plot_observables(run_dir: &Path, cfg: &RunConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let window = (cfg.fit_window[0], cfg.fit_window[1]);
    let seed_window = (cfg.seed_window()[0], cfg.seed_window()[1]);
    let mut written = Vec::new();
    for &chi in &cfg.chi_list {
        let s = read_series(run_dir, chi)?;
        let mut c = Columns::new(s.times.clone());
        let curves = [("P_sur", &s.survival, window), ("N_a", &s.total_density, window), ("n_seed", &s.seed_density, seed_window)];
        for (name, y, w) in curves {
            c.push(name.into(), y.clone())?;
            c.push(format!("fit_{name}"), overlay(&s.times, powerlaw_fit(&s.times, y, w).ok()))?;
        }
        if cfg.engine == Engine::Qjmc {
            let records = load_records(&open_store(run_dir, chi)?, cfg.n_traj)?;
            let stats = EnsembleStats::from_records(&records)?;
            for (name, m) in [("P_sur", &stats.survival), ("N_a", &stats.total_density), ("n_seed", &stats.seed_density)] {
                let se = m.standard_error.clone().unwrap_or_else(|| vec![f64::NAN; stats.times.len()]);
                c.push(format!("{name}_se"), se)?;
            }
        }
        let path = out.join(format!("observables_chi{chi}.csv"));
        c.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn engine_label(e: Engine) -> &'static str {
    match e {
        Engine::DoubleSchrodinger => "schrodinger",
        Engine::DoubleHeisenberg => "heisenberg",
        Engine::Qjmc => "qjmc",
    }
}

fn barrier_columns(runs: &[(PathBuf, RunConfig)], with_error: bool, with_survival: bool) -> anyhow::Result<Columns> {
    let mut c: Option<Columns> = None;
    for (dir, cfg) in runs {
        let label = engine_label(cfg.engine);
        for &chi in &cfg.chi_list {
            let s = read_series(dir, chi)?;
            let c = c.get_or_insert_with(|| Columns::new(s.times.clone()));
            if s.times != c.times {
                bail!("{} and the first run are sampled at different times", dir.display());
            }
            if with_survival {
                c.push(format!("{label}_P_sur_chi{chi}"), s.survival.clone())?;
            }
            c.push(format!("{label}_S_tilde_chi{chi}"), s.op_entropy.clone())?;
            if with_error {
                c.push(format!("{label}_err_est_chi{chi}"), s.error_estimate.clone())?;
            }
        }
    }
    c.ok_or_else(|| anyhow!("no series to plot"))
}

fn plot_ent_hist(run_dir: &Path, cfg: &RunConfig, times: &[f64], out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if cfg.engine != Engine::Qjmc {
        bail!("ent_hist needs a qjmc run, found {:?}", cfg.engine);
    }
    let mut all = Vec::new();
    for &chi in &cfg.chi_list {
        let records = load_records(&open_store(run_dir, chi)?, cfg.n_traj)?;
        all.push(EnsembleStats::from_records(&records)?);
    }
    let reference = all.iter().max_by_key(|s| s.chi_max).expect("chi_list is not empty");
    let mut written = Vec::new();
    for stats in &all {
        for &t in times {
            let h = entanglement_histogram(stats, t, reference)?;
            let path = out.join(format!("ent_hist_chi{}_t{}.csv", stats.chi_max, t));
            write_with(&path, |w| h.write_csv(w))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn plot_figure(run_dir: &Path, figure: &str, pair: Option<&Path>, times: &[f64]) -> anyhow::Result<Vec<PathBuf>> {
    let cfg = read_manifest(run_dir)?.config;
    let out = run_dir.join("plotdata");
    fs::create_dir_all(&out)?;
    let mut runs = vec![(run_dir.to_path_buf(), cfg.clone())];
    if let Some(p) = pair {
        runs.push((p.to_path_buf(), read_manifest(p)?.config));
    }
    match figure {
        "observables" => plot_observables(run_dir, &cfg, &out),
        "entropy_barrier" => {
            let path = out.join("entropy_barrier.csv");
            barrier_columns(&runs, true, false)?.write(&path)?;
            Ok(vec![path])
        }
        "hpic" => {
            let has = |e| runs.iter().any(|(_, c)| c.engine == e);
            if !has(Engine::DoubleHeisenberg) {
                bail!("figure hpic needs a double_heisenberg series; pass one with --pair");
            }
            if !has(Engine::DoubleSchrodinger) {
                bail!("figure hpic needs a double_schrodinger series; pass one with --pair");
            }
            let path = out.join("hpic.csv");
            barrier_columns(&runs, false, true)?.write(&path)?;
            Ok(vec![path])
        }
        "ent_hist" => plot_ent_hist(run_dir, &cfg, times, &out),
        _ => unreachable!(),
    }
}

pub const FIGURES: [&str; 4] = ["observables", "entropy_barrier", "ent_hist", "hpic"];

pub fn plotdata(run_dir: &Path, figure: &str, pair: Option<&Path>, times: &[f64]) -> CmdResult {
    if !FIGURES.contains(&figure) {
        return Err(anyhow!("unknown figure {figure:?}; expected one of {}", FIGURES.join(", "))).usage();
    }
    let written = plot_figure(run_dir, figure, pair, times).runtime()?;
    refresh_manifest(run_dir).runtime()?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

/// Frozen values must regenerate to this precision.
pub const FIXTURE_TOLERANCE: f64 = 1e-12;

pub fn fixtures(path: &Path, write: bool) -> CmdResult {
    let fresh = fixtures::generate().runtime()?;
    if write {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).runtime()?;
        }
        fs::write(path, fixtures::to_json(&fresh).runtime()?).runtime()?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {} (use --write to create it)", path.display()))
        .runtime()?;
    let frozen = fixtures::from_json(&text).runtime()?;
    let diff = fresh.max_difference(&frozen).runtime()?;
    if diff > FIXTURE_TOLERANCE {
        return Err(anyhow!("fixtures drifted by {diff:e} (tolerance {FIXTURE_TOLERANCE:e})")).runtime();
    }
    println!("fixtures match ({diff:e})");
    Ok(())
}

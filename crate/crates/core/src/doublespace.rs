//! Second-order TEBD of vectorized density matrices (Schrödinger picture)
//! and vectorized observables (Heisenberg picture).

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_trotter_schedule, vectors, GateSchedule, ModelSpec, Picture};
use crate::mps::{Mps, Truncation, TruncationReport};
use crate::scalar::{from_c64, to_c64, ComplexScalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleSpaceConfig {
    pub spec: ModelSpec,
    pub chi_max: usize,
    pub dt: f64,
    pub t_max: f64,
    /// Steps between measurements.
    pub measure_every: usize,
    pub svd_cutoff: f64,
    /// Keep the full `n(t, k)` matrix in the output.
    pub record_profile: bool,
}

impl DoubleSpaceConfig {
    pub const DEFAULT_DT: f64 = 0.1;

    pub fn new(spec: ModelSpec, chi_max: usize, t_max: f64) -> Self {
        Self {
            spec,
            chi_max,
            dt: Self::DEFAULT_DT,
            t_max,
            measure_every: 1,
            svd_cutoff: Truncation::DEFAULT_CUTOFF,
            record_profile: false,
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
        if self.chi_max < 1 {
            return Err(Error::InvalidChiMax);
        }
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) || self.measure_every == 0 {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0, t_max >= 0, measure_every >= 1 (got {}, {}, {})",
                self.dt, self.t_max, self.measure_every
            )));
        }
        Ok(())
    }
}

/// Measured observables; times are in units of `1/gamma`. Quantities an
/// engine does not produce are `NaN`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub total_density: Vec<f64>,
    pub seed_density: Vec<f64>,
    pub density_profile: Option<Vec<Vec<f64>>>,
    /// Maximum operator-space entanglement entropy over all bonds.
    pub op_entropy: Vec<f64>,
    /// Running sum of the per-step truncation error estimates.
    pub error_estimate: Vec<f64>,
    /// Truncation error estimate of the step that ended at each time.
    pub step_error: Vec<f64>,
    /// `<1|rho>` before renormalization, one entry per step (Schrödinger only).
    pub trace_log: Vec<f64>,
    /// Largest `|Im n(t, k)|` seen at each measurement.
    pub max_imag_density: Vec<f64>,
}

impl ObservableSeries {
    /// Index of the largest entropy and its `(t, S)`.
    pub fn entropy_peak(&self) -> Option<(f64, f64)> {
        self.op_entropy
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &s)| (self.times[i], s))
    }

    pub fn entropy_barrier_series(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.op_entropy.iter().copied()).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "P_sur", "N_a", "n_seed", "S_tilde", "err_est"])?;
        for i in 0..self.times.len() {
            let row = [
                self.times[i],
                self.survival[i],
                self.total_density[i],
                self.seed_density[i],
                self.op_entropy[i],
                self.error_estimate[i],
            ];
            out.write_record(row.iter().map(|&x| fmt_value(x)))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_profile_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let profile = self
            .density_profile
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("no density profile recorded".into()))?;
        let mut out = csv::Writer::from_writer(w);
        let width = profile.first().map(|r| r.len()).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        header.extend((0..width).map(|k| format!("n{k}")));
        out.write_record(&header)?;
        for (t, row) in self.times.iter().zip(profile) {
            let mut rec = vec![fmt_value(*t)];
            rec.extend(row.iter().map(|&x| fmt_value(x)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut s = ObservableSeries::default();
        for rec in rdr.records() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|x| x.trim().parse::<f64>().unwrap_or(f64::NAN))
                .collect();
            if v.len() < 6 {
                return Err(Error::InvalidArgument("observable CSV needs 6 columns".into()));
            }
            s.times.push(v[0]);
            s.survival.push(v[1]);
            s.total_density.push(v[2]);
            s.seed_density.push(v[3]);
            s.op_entropy.push(v[4]);
            s.error_estimate.push(v[5]);
        }
        Ok(s)
    }
}

/// Twelve significant digits; `NaN` for missing values.
pub fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.11e}")
    }
}

fn cast_vec<C: ComplexScalar>(v: &Array1<num_complex::Complex64>) -> Array1<C> {
    v.mapv(from_c64::<C>)
}

/// Vectorized `|occ><occ|` at `site`, empty elsewhere.
pub fn seed_state<C: ComplexScalar>(spec: &ModelSpec) -> Result<Mps<C>> {
    let local: Vec<Array1<C>> = (0..spec.len)
        .map(|k| if k == spec.seed_site() { vectors::occupied() } else { vectors::empty() })
        .map(|v| cast_vec(&v))
        .collect();
    Mps::from_product(&local)
}

/// Vectorized absorbing state (all sites empty).
pub fn absorbing_state<C: ComplexScalar>(len: usize) -> Result<Mps<C>> {
    Mps::from_product(&vec![cast_vec(&vectors::empty()); len])
}

/// Vectorized identity operator.
pub fn identity_state<C: ComplexScalar>(len: usize) -> Result<Mps<C>> {
    Mps::from_product(&vec![cast_vec(&vectors::identity()); len])
}

/// Vectorized `n^{(site)}`.
pub fn density_operator<C: ComplexScalar>(len: usize, site: usize) -> Result<Mps<C>> {
    let local: Vec<Array1<C>> = (0..len)
        .map(|k| if k == site { vectors::density() } else { vectors::identity() })
        .map(|v| cast_vec(&v))
        .collect();
    Mps::from_product(&local)
}

fn identity_bra<C: ComplexScalar>(len: usize) -> Vec<Array1<C>> {
    vec![cast_vec(&vectors::identity()); len]
}

fn apply_step<C: ComplexScalar>(state: &mut Mps<C>, schedule: &GateSchedule<C>, trunc: &Truncation) -> Result<TruncationReport> {
    let mut report = TruncationReport::new(state.len() - 1);
    for layer in &schedule.layers {
        report.merge(&state.apply_sweep(layer, trunc)?);
    }
    Ok(report)
}

/// Schrödinger-picture run from the seed state.
pub fn run_schrodinger<C: ComplexScalar>(cfg: &DoubleSpaceConfig) -> Result<ObservableSeries> {
    cfg.validate()?;
    let state = seed_state::<C>(&cfg.spec)?;
    run_schrodinger_from(cfg, state)
}

/// Schrödinger-picture run from an arbitrary trace-one vectorized state.
pub fn run_schrodinger_from<C: ComplexScalar>(cfg: &DoubleSpaceConfig, mut state: Mps<C>) -> Result<ObservableSeries> {
    cfg.validate()?;
    let spec = &cfg.spec;
    if state.len() != spec.len || state.local_dim() != 4 {
        return Err(Error::DimensionMismatch("initial state must be a vectorized operator on L sites".into()));
    }
    let schedule = build_trotter_schedule::<C>(spec, Picture::SchrodingerDouble, cfg.dt)?;
    let trunc = cfg.truncation();
    let ident = identity_bra::<C>(spec.len);
    let empty: Vec<Array1<C>> = vec![cast_vec(&vectors::empty()); spec.len];
    let density = cast_vec::<C>(&vectors::density());

    let mut series = ObservableSeries::default();
    if cfg.record_profile {
        series.density_profile = Some(Vec::new());
    }
    let mut cumulative = 0.0;
    let measure = |state: &mut Mps<C>, t: f64, cumulative: f64, step_error: f64, series: &mut ObservableSeries| -> Result<()> {
        let trace = to_c64(state.product_overlap(&ident)?);
        let profile = state.product_overlap_profile(&ident, &density)?;
        let profile: Vec<num_complex::Complex64> = profile.into_iter().map(|z| to_c64(z) / trace).collect();
        let n: Vec<f64> = profile.iter().map(|z| z.re).collect();
        let vacuum = to_c64(state.product_overlap(&empty)?) / trace;
        state.canonicalize()?;
        series.times.push(t);
        series.survival.push(1.0 - vacuum.re);
        series.total_density.push(n.iter().sum());
        series.seed_density.push(n[spec.seed_site()]);
        series.op_entropy.push(state.max_entropy_over_bonds()?);
        series.error_estimate.push(cumulative);
        series.step_error.push(step_error);
        series.max_imag_density.push(profile.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
        if let Some(p) = series.density_profile.as_mut() {
            p.push(n);
        }
        Ok(())
    };

    measure(&mut state, 0.0, 0.0, 0.0, &mut series)?;
    let n_steps = cfg.n_steps();
    for step in 1..=n_steps {
        let report = apply_step(&mut state, &schedule, &trunc)?;
        let trace = to_c64(state.product_overlap(&ident)?);
        if !(trace.norm() > 0.0) || !trace.re.is_finite() {
            return Err(Error::NormCollapse { norm: trace.norm() });
        }
        state.scale(from_c64::<C>(num_complex::Complex64::new(1.0, 0.0) / trace));
        series.trace_log.push(trace.re);
        cumulative += report.global_error_estimate;
        if step % cfg.measure_every == 0 || step == n_steps {
            measure(&mut state, step as f64 * cfg.dt, cumulative, report.global_error_estimate, &mut series)?;
        }
    }
    Ok(series)
}

/// Heisenberg-picture output for one observable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergSeries {
    pub times: Vec<f64>,
    /// `<O(t)|rho(0)>`.
    pub values: Vec<f64>,
    pub imag: Vec<f64>,
    pub op_entropy: Vec<f64>,
    pub error_estimate: Vec<f64>,
    pub step_error: Vec<f64>,
    /// `|value(t) - value(0)|`; for `O = 1` this is the defect of the
    /// identity fixed point.
    pub value_drift: Vec<f64>,
}

/// Evolves `observable` under the adjoint schedule and contracts with the
/// seed state at every measurement. No renormalization is applied.
pub fn run_heisenberg<C: ComplexScalar>(cfg: &DoubleSpaceConfig, observable: Mps<C>) -> Result<HeisenbergSeries> {
    let rho0 = seed_state::<C>(&cfg.spec)?;
    run_heisenberg_against(cfg, observable, &rho0)
}

fn product_factors<C: ComplexScalar>(rho0: &Mps<C>) -> Result<Vec<Array1<C>>> {
    if rho0.max_bond_dim() != 1 {
        return Err(Error::InvalidArgument("Heisenberg runs need a product initial state".into()));
    }
    Ok((0..rho0.len())
        .map(|k| rho0.tensor(k).index_axis(ndarray::Axis(0), 0).index_axis(ndarray::Axis(1), 0).to_owned())
        .collect())
}

pub fn run_heisenberg_against<C: ComplexScalar>(
    cfg: &DoubleSpaceConfig,
    mut observable: Mps<C>,
    rho0: &Mps<C>,
) -> Result<HeisenbergSeries> {
    cfg.validate()?;
    let spec = &cfg.spec;
    if observable.len() != spec.len || observable.local_dim() != 4 {
        return Err(Error::DimensionMismatch("observable must be a vectorized operator on L sites".into()));
    }
    let schedule = build_trotter_schedule::<C>(spec, Picture::HeisenbergDouble, cfg.dt)?;
    let trunc = cfg.truncation();
    // <rho0|O(t)> = conj(<O(t)|rho0>)
    let bra = product_factors(rho0)?;
    let mut series = HeisenbergSeries::default();
    let mut initial = None;
    let mut measure = |o: &mut Mps<C>, t: f64, cum: f64, step: f64, series: &mut HeisenbergSeries| -> Result<()> {
        let value = to_c64(o.product_overlap(&bra)?).conj();
        let first = *initial.get_or_insert(value.re);
        o.canonicalize()?;
        series.times.push(t);
        series.values.push(value.re);
        series.imag.push(value.im);
        series.op_entropy.push(o.max_entropy_over_bonds()?);
        series.error_estimate.push(cum);
        series.step_error.push(step);
        series.value_drift.push((value.re - first).abs());
        Ok(())
    };
    measure(&mut observable, 0.0, 0.0, 0.0, &mut series)?;
    let n_steps = cfg.n_steps();
    let mut cumulative = 0.0;
    for step in 1..=n_steps {
        let report = apply_step(&mut observable, &schedule, &trunc)?;
        cumulative += report.global_error_estimate;
        if step % cfg.measure_every == 0 || step == n_steps {
            measure(&mut observable, step as f64 * cfg.dt, cumulative, report.global_error_estimate, &mut series)?;
        }
    }
    Ok(series)
}

/// Survival probability in the Heisenberg picture, packaged like a
/// Schrödinger run (densities are not computed and stay `NaN`).
pub fn run_heisenberg_survival<C: ComplexScalar>(cfg: &DoubleSpaceConfig) -> Result<ObservableSeries> {
    let h = run_heisenberg(cfg, absorbing_state::<C>(cfg.spec.len)?)?;
    let n = h.times.len();
    Ok(ObservableSeries {
        survival: h.values.iter().map(|v| 1.0 - v).collect(),
        total_density: vec![f64::NAN; n],
        seed_density: vec![f64::NAN; n],
        density_profile: None,
        op_entropy: h.op_entropy,
        error_estimate: h.error_estimate,
        step_error: h.step_error,
        trace_log: Vec::new(),
        max_imag_density: Vec::new(),
        times: h.times,
    })
}

//! Brute-force dense evolution for small chains.
//!
//! The Lindbladian here is assembled straight from its definition with
//! global `2^L`-dimensional operators, independently of the per-bond terms
//! in [`crate::model`], and then reordered into the site-paired double-space
//! basis used everywhere else. Vectorized states are limited to `L <= 6`,
//! pure states to `L <= 12`.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64 as c64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dagger, expm_multiply, kron_all};
use crate::model::{GateSchedule, Kind, LocalOps, ModelSpec, Picture};
use crate::qjmc::{draw_jump, rng_from_seed, JumpEvent, ABSORBED_THRESHOLD};

pub const MAX_VECTORIZED_LEN: usize = 6;
pub const MAX_PURE_LEN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenseKind {
    Pure,
    Vectorized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub vector: Array1<c64>,
    pub kind: DenseKind,
    pub len: usize,
}

fn guard(len: usize, kind: DenseKind) -> Result<()> {
    let limit = match kind {
        DenseKind::Pure => MAX_PURE_LEN,
        DenseKind::Vectorized => MAX_VECTORIZED_LEN,
    };
    if len > limit {
        return Err(Error::TooLarge { len, limit });
    }
    Ok(())
}

fn local_dim(kind: DenseKind) -> usize {
    match kind {
        DenseKind::Pure => 2,
        DenseKind::Vectorized => 4,
    }
}

impl DenseState {
    /// Product of per-site local vectors (dimension 2 or 4), site 0 most significant.
    pub fn product(local: &[Array1<c64>]) -> Result<Self> {
        let d = local.first().map(|v| v.len()).unwrap_or(0);
        let kind = match d {
            2 => DenseKind::Pure,
            4 => DenseKind::Vectorized,
            _ => return Err(Error::DimensionMismatch(format!("local dimension {d}"))),
        };
        guard(local.len(), kind)?;
        let mats: Vec<Array2<c64>> = local.iter().map(|v| v.clone().insert_axis(Axis(1))).collect();
        let vector = kron_all(&mats).index_axis_move(Axis(1), 0);
        Ok(Self { vector, kind, len: local.len() })
    }

    /// Vectorized `|psi><psi|` of a pure state.
    pub fn from_pure(psi: &DenseState) -> Result<Self> {
        if psi.kind != DenseKind::Pure {
            return Err(Error::InvalidArgument("expected a pure state".into()));
        }
        guard(psi.len, DenseKind::Vectorized)?;
        let dim = psi.vector.len();
        let mut v = Array1::zeros(dim * dim);
        for m in 0..dim {
            for n in 0..dim {
                v[paired_index(m, n, psi.len)] = psi.vector[m] * psi.vector[n].conj();
            }
        }
        Ok(Self { vector: v, kind: DenseKind::Vectorized, len: psi.len })
    }

    /// `<1|rho>` for vectorized states, `<psi|psi>` for pure ones.
    pub fn trace(&self) -> c64 {
        match self.kind {
            DenseKind::Vectorized => {
                let dim = 1usize << self.len;
                (0..dim).map(|m| self.vector[paired_index(m, m, self.len)]).sum()
            }
            DenseKind::Pure => c64::new(self.vector.iter().map(|z| z.norm_sqr()).sum(), 0.0),
        }
    }

    /// `tr(n_k rho) / tr(rho)` or `<psi|n_k|psi> / <psi|psi>` for every site.
    pub fn density_profile(&self) -> Vec<f64> {
        let dim = 1usize << self.len;
        let mut out = vec![0.0; self.len];
        for m in 0..dim {
            let weight = match self.kind {
                DenseKind::Vectorized => self.vector[paired_index(m, m, self.len)].re,
                DenseKind::Pure => self.vector[m].norm_sqr(),
            };
            for (k, o) in out.iter_mut().enumerate() {
                if occupied(m, k, self.len) {
                    *o += weight;
                }
            }
        }
        let norm = self.trace().re;
        out.iter().map(|x| x / norm).collect()
    }

    /// Weight of the all-empty configuration, normalized.
    pub fn vacuum_weight(&self) -> f64 {
        let raw = match self.kind {
            DenseKind::Vectorized => self.vector[0].re,
            DenseKind::Pure => self.vector[0].norm_sqr(),
        };
        raw / self.trace().re
    }

    /// Reshapes a vectorized state back to the `2^L x 2^L` matrix.
    pub fn to_matrix(&self) -> Result<Array2<c64>> {
        if self.kind != DenseKind::Vectorized {
            return Err(Error::InvalidArgument("expected a vectorized state".into()));
        }
        let dim = 1usize << self.len;
        Ok(Array2::from_shape_fn((dim, dim), |(m, n)| self.vector[paired_index(m, n, self.len)]))
    }
}

fn occupied(config: usize, site: usize, len: usize) -> bool {
    (config >> (len - 1 - site)) & 1 == 1
}

/// Position of `|m><n|` in the site-paired double-space basis.
pub fn paired_index(m: usize, n: usize, len: usize) -> usize {
    let mut idx = 0;
    for k in 0..len {
        let shift = len - 1 - k;
        let mk = (m >> shift) & 1;
        let nk = (n >> shift) & 1;
        idx = idx * 4 + 2 * mk + nk;
    }
    idx
}

fn site_op(op: &Array2<c64>, site: usize, len: usize) -> Array2<c64> {
    let id = LocalOps::new().identity;
    let factors: Vec<&Array2<c64>> = (0..len).map(|k| if k == site { op } else { &id }).collect();
    kron_all(factors)
}

/// Global Hamiltonian and jump operators of the chain.
pub fn global_operators(spec: &ModelSpec) -> Result<(Array2<c64>, Vec<Array2<c64>>)> {
    spec.validate()?;
    guard(spec.len, DenseKind::Pure)?;
    let ops = LocalOps::new();
    let l = spec.len;
    let dim = 1usize << l;
    let n: Vec<Array2<c64>> = (0..l).map(|k| site_op(&ops.n, k, l)).collect();
    let x: Vec<Array2<c64>> = (0..l).map(|k| site_op(&ops.sigma_1, k, l)).collect();
    let mut h = Array2::<c64>::zeros((dim, dim));
    let mut jumps: Vec<Array2<c64>> = (0..l)
        .map(|k| site_op(&ops.sigma_minus, k, l).mapv(|z| z * spec.gamma.sqrt()))
        .collect();
    for k in 0..l - 1 {
        let right = x[k].dot(&n[k + 1]);
        let left = n[k].dot(&x[k + 1]);
        match spec.kind {
            Kind::Quantum => h = h + (&right + &left).mapv(|z| z * spec.omega),
            Kind::Classical => {
                let r = spec.branching.sqrt();
                jumps.push(right.mapv(|z| z * r));
                jumps.push(left.mapv(|z| z * r));
            }
        }
    }
    Ok((h, jumps))
}

/// Dense `4^L x 4^L` Lindbladian in the site-paired basis, one column per
/// basis operator `|i><j|`.
pub fn dense_lindbladian(spec: &ModelSpec) -> Result<Array2<c64>> {
    guard(spec.len, DenseKind::Vectorized)?;
    let (h, jumps) = global_operators(spec)?;
    let l = spec.len;
    let dim = 1usize << l;
    let minus_i = c64::new(0.0, -1.0);
    let jdj: Array2<c64> = jumps
        .iter()
        .fold(Array2::zeros((dim, dim)), |acc, j| acc + dagger(j).dot(j));
    // L(X) = -i (H_eff X - X H_eff^dagger) + sum_J J X J^dagger
    let heff = &h + &jdj.mapv(|z| z * c64::new(0.0, -0.5));
    let heff_dag = dagger(&heff);
    let jump_cols: Vec<Array2<c64>> = jumps.iter().map(|j| j.to_owned()).collect();
    let mut out = Array2::<c64>::zeros((dim * dim, dim * dim));
    for i in 0..dim {
        for j in 0..dim {
            let col = paired_index(i, j, l);
            // H_eff |i><j| and |i><j| H_eff^dagger
            for m in 0..dim {
                let a = heff[[m, i]];
                if a != c64::new(0.0, 0.0) {
                    out[[paired_index(m, j, l), col]] += minus_i * a;
                }
                let b = heff_dag[[j, m]];
                if b != c64::new(0.0, 0.0) {
                    out[[paired_index(i, m, l), col]] -= minus_i * b;
                }
            }
            for jm in &jump_cols {
                for m in 0..dim {
                    let a = jm[[m, i]];
                    if a == c64::new(0.0, 0.0) {
                        continue;
                    }
                    for n in 0..dim {
                        let b = jm[[n, j]].conj();
                        if b != c64::new(0.0, 0.0) {
                            out[[paired_index(m, n, l), col]] += a * b;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Applies a `d^2 x d^2` operator to sites `(bond, bond + 1)` of a dense vector.
pub fn apply_bond_operator(v: &Array1<c64>, op: &Array2<c64>, bond: usize, d: usize, len: usize) -> Array1<c64> {
    let left = d.pow(bond as u32);
    let right = d.pow((len - bond - 2) as u32);
    let t = v
        .view()
        .into_shape_with_order((left, d * d, right))
        .expect("standard layout");
    let mut out = ndarray::Array3::<c64>::zeros((left, d * d, right));
    for a in 0..left {
        let block = t.index_axis(Axis(0), a);
        out.index_axis_mut(Axis(0), a).assign(&op.dot(&block));
    }
    out.into_shape_with_order(v.len()).expect("reshape")
}

/// Dense matrix of the sum of per-bond terms (e.g. the model's generator
/// terms), built by acting on basis vectors.
pub fn assemble_bond_terms(terms: &[Array2<c64>], d: usize, len: usize) -> Array2<c64> {
    let dim = d.pow(len as u32);
    let mut out = Array2::<c64>::zeros((dim, dim));
    for col in 0..dim {
        let mut e = Array1::<c64>::zeros(dim);
        e[col] = c64::new(1.0, 0.0);
        let mut acc = Array1::<c64>::zeros(dim);
        for (bond, t) in terms.iter().enumerate() {
            acc = acc + apply_bond_operator(&e, t, bond, d, len);
        }
        out.column_mut(col).assign(&acc);
    }
    out
}

/// `e^{t L} |rho0>` by Taylor stepping over at least `substeps` sub-intervals.
pub fn dense_lindblad_evolve(spec: &ModelSpec, rho0: &DenseState, t: f64, substeps: usize) -> Result<DenseState> {
    Ok(dense_lindblad_series(spec, rho0, &[t], substeps)?.remove(0))
}

/// States at each of the non-decreasing `times`, reusing one Lindbladian.
pub fn dense_lindblad_series(
    spec: &ModelSpec,
    rho0: &DenseState,
    times: &[f64],
    substeps: usize,
) -> Result<Vec<DenseState>> {
    if rho0.kind != DenseKind::Vectorized || rho0.len != spec.len {
        return Err(Error::DimensionMismatch("expected a vectorized state of the model's length".into()));
    }
    let lind = dense_lindbladian(spec)?;
    let mut out = Vec::with_capacity(times.len());
    let mut current = rho0.vector.clone();
    let mut now = 0.0;
    for &t in times {
        if t < now {
            return Err(Error::InvalidArgument("times must be non-decreasing and non-negative".into()));
        }
        current = expm_multiply(&lind, &current, t - now, substeps);
        now = t;
        out.push(DenseState { vector: current.clone(), kind: DenseKind::Vectorized, len: spec.len });
    }
    Ok(out)
}

/// Applies one schedule step `n_steps` times with exactly the engine's gates.
pub fn dense_trotter_evolve(state: &DenseState, schedule: &GateSchedule<c64>, n_steps: usize) -> Result<DenseState> {
    guard(state.len, state.kind)?;
    let d = local_dim(state.kind);
    if schedule.local_dim() != d {
        return Err(Error::DimensionMismatch("schedule and state local dimensions differ".into()));
    }
    let mut v = state.vector.clone();
    for _ in 0..n_steps {
        for g in schedule.gates() {
            v = apply_bond_operator(&v, &g.matrix, g.bond, d, state.len);
        }
    }
    Ok(DenseState { vector: v, kind: state.kind, len: state.len })
}

/// Dense trajectory output, sampled after every step.
#[derive(Clone, Debug)]
pub struct DenseTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DenseState>,
    pub jumps: Vec<JumpEvent>,
    pub absorbed_at: Option<f64>,
}

/// First-order jump unravelling on dense vectors with the same random
/// stream and decision rule as the tensor-network engine.
pub fn dense_qjmc_trajectory(
    spec: &ModelSpec,
    psi0: &DenseState,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<DenseTrajectory> {
    if psi0.kind != DenseKind::Pure || psi0.len != spec.len {
        return Err(Error::DimensionMismatch("expected a pure state of the model's length".into()));
    }
    guard(spec.len, DenseKind::Pure)?;
    let schedule = crate::model::build_trotter_schedule_c64(spec, Picture::PureStateNonhermitian, dt)?;
    let jumps = crate::model::jump_operators(spec)?;
    let mut rng = rng_from_seed(seed);
    let steps = (t_max / dt).round() as usize;
    let mut psi = psi0.clone();
    normalize(&mut psi.vector)?;
    let mut out = DenseTrajectory {
        times: vec![0.0],
        states: vec![psi.clone()],
        jumps: Vec::new(),
        absorbed_at: None,
    };
    for step in 1..=steps {
        let t = step as f64 * dt;
        if out.absorbed_at.is_none() {
            let dens = psi.density_profile();
            if dens.iter().all(|&x| x < ABSORBED_THRESHOLD) {
                out.absorbed_at = Some(t - dt);
            } else {
                let probs: Vec<f64> = dens.iter().zip(&jumps).map(|(n, j)| dt * j.rate * n).collect();
                match draw_jump(&probs, rng.random::<f64>()) {
                    Some(site) => {
                        let op = site_op(&jumps[site].op, site, spec.len);
                        psi.vector = op.dot(&psi.vector);
                        out.jumps.push(JumpEvent { time: t, site });
                    }
                    None => {
                        for g in schedule.gates() {
                            psi.vector = apply_bond_operator(&psi.vector, &g.matrix, g.bond, 2, spec.len);
                        }
                    }
                }
                normalize(&mut psi.vector)?;
            }
        }
        out.times.push(t);
        out.states.push(psi.clone());
    }
    Ok(out)
}

fn normalize(v: &mut Array1<c64>) -> Result<()> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(Error::NormCollapse { norm });
    }
    v.mapv_inplace(|z| z / norm);
    Ok(())
}

/// Vectorized seed state `|occ><occ|` at the middle site, empty elsewhere.
pub fn seed_density(spec: &ModelSpec) -> Result<DenseState> {
    use crate::model::vectors;
    let local: Vec<Array1<c64>> = (0..spec.len)
        .map(|k| if k == spec.seed_site() { vectors::occupied() } else { vectors::empty() })
        .collect();
    DenseState::product(&local)
}

pub fn seed_pure(spec: &ModelSpec) -> Result<DenseState> {
    use crate::model::{empty_state, occupied_state};
    let local: Vec<Array1<c64>> = (0..spec.len)
        .map(|k| if k == spec.seed_site() { occupied_state() } else { empty_state() })
        .collect();
    DenseState::product(&local)
}

pub mod fixtures {
    //! Frozen reference values for the engine tests.

    use super::*;
    use std::collections::BTreeMap;

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct ProfileCase {
        pub spec: ModelSpec,
        pub times: Vec<f64>,
        /// `n(t, k)` per requested time.
        pub density: Vec<Vec<f64>>,
        pub survival: Vec<f64>,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct Fixtures {
        pub profiles: BTreeMap<String, ProfileCase>,
        /// Entropy of `exp(-i pi/4 (sigma_1 n + n sigma_1)) |occ, occ>`.
        pub branching_gate_entropy: f64,
    }

    pub const SUBSTEPS: usize = 64;

    fn profile_case(spec: ModelSpec, times: &[f64]) -> Result<ProfileCase> {
        let rho0 = seed_density(&spec)?;
        let states = dense_lindblad_series(&spec, &rho0, times, SUBSTEPS)?;
        Ok(ProfileCase {
            spec,
            times: times.to_vec(),
            density: states.iter().map(|s| s.density_profile()).collect(),
            survival: states.iter().map(|s| 1.0 - s.vacuum_weight()).collect(),
        })
    }

    /// Two-site state after the branching gate, reduced to one site and
    /// diagonalized in closed form (2x2 Hermitian).
    fn branching_gate_entropy() -> Result<f64> {
        let ops = LocalOps::new();
        let h = crate::linalg::kron(&ops.sigma_1, &ops.n) + crate::linalg::kron(&ops.n, &ops.sigma_1);
        let g = crate::linalg::expm(&h.mapv(|z| z * c64::new(0.0, -std::f64::consts::FRAC_PI_4)))?;
        let psi = g.column(3).to_owned();
        // rho_A[a, a'] = sum_b psi[a b] conj(psi[a' b])
        let r = |a: usize, ap: usize| (0..2).map(|b| psi[2 * a + b] * psi[2 * ap + b].conj()).sum::<c64>();
        let (p, q, off) = (r(0, 0).re, r(1, 1).re, r(0, 1).norm());
        let mean = 0.5 * (p + q);
        let rad = (0.25 * (p - q) * (p - q) + off * off).sqrt();
        Ok([mean + rad, mean - rad]
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -x * x.ln())
            .sum())
    }

    pub fn generate() -> Result<Fixtures> {
        let mut profiles = BTreeMap::new();
        profiles.insert(
            "qcp_L4_omega6".into(),
            profile_case(ModelSpec::quantum(4, 6.0), &[0.5, 1.0, 2.0])?,
        );
        profiles.insert(
            "qcp_L4_omega0".into(),
            profile_case(ModelSpec::quantum(4, 0.0), &[0.5, 1.0, 2.0])?,
        );
        profiles.insert(
            "ccp_L4_branching6.75".into(),
            profile_case(ModelSpec::classical(4, 6.75), &[0.5, 1.0, 2.0])?,
        );
        profiles.insert(
            "qcp_L5_omega2".into(),
            profile_case(ModelSpec::quantum(5, 2.0), &[1.0])?,
        );
        Ok(Fixtures { profiles, branching_gate_entropy: branching_gate_entropy()? })
    }

    impl Fixtures {
        /// Largest absolute difference over all frozen numbers; errors when
        /// the two sets do not cover the same cases and times.
        pub fn max_difference(&self, other: &Fixtures) -> Result<f64> {
            if self.profiles.keys().ne(other.profiles.keys()) {
                return Err(Error::InvalidArgument("fixture case names differ".into()));
            }
            let mut worst = (self.branching_gate_entropy - other.branching_gate_entropy).abs();
            for (name, a) in &self.profiles {
                let b = &other.profiles[name];
                if a.spec != b.spec || a.times != b.times || a.density.len() != b.density.len() {
                    return Err(Error::InvalidArgument(format!("fixture case {name} differs in shape")));
                }
                for (ra, rb) in a.density.iter().zip(&b.density) {
                    if ra.len() != rb.len() {
                        return Err(Error::InvalidArgument(format!("fixture case {name} differs in shape")));
                    }
                    worst = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
                }
                worst = a.survival.iter().zip(&b.survival).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
            }
            Ok(worst)
        }
    }

    pub fn to_json(f: &Fixtures) -> Result<String> {
        Ok(serde_json::to_string_pretty(f)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Fixtures> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vectors;

    #[test]
    fn paired_index_layout() {
        // L = 2: |m1 m2><n1 n2| -> (m1 n1 m2 n2)
        assert_eq!(paired_index(0b10, 0b00, 2), 0b1000);
        assert_eq!(paired_index(0b01, 0b11, 2), 0b0111);
    }

    #[test]
    fn absorbing_state_is_stationary() {
        for spec in [ModelSpec::quantum(3, 6.0), ModelSpec::classical(3, 6.75)] {
            let lind = dense_lindbladian(&spec).unwrap();
            let rho_a = DenseState::product(&vec![vectors::empty(); 3]).unwrap();
            let out = lind.dot(&rho_a.vector);
            assert!(out.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn guards_reject_large_chains() {
        assert!(matches!(
            dense_lindbladian(&ModelSpec::quantum(7, 1.0)),
            Err(Error::TooLarge { len: 7, limit: 6 })
        ));
    }

    #[test]
    fn pure_decay_of_single_excitation() {
        let spec = ModelSpec::quantum(3, 0.0);
        let rho = dense_lindblad_evolve(&spec, &seed_density(&spec).unwrap(), 1.0, 8).unwrap();
        let n = rho.density_profile();
        assert!((n[1] - (-1.0f64).exp()).abs() < 1e-12);
        assert!(n[0].abs() < 1e-14 && n[2].abs() < 1e-14);
    }

    #[test]
    fn zero_steps_is_identity() {
        let spec = ModelSpec::quantum(3, 6.0);
        let s = crate::model::build_trotter_schedule_c64(&spec, Picture::SchrodingerDouble, 0.1).unwrap();
        let rho = seed_density(&spec).unwrap();
        assert_eq!(dense_trotter_evolve(&rho, &s, 0).unwrap(), rho);
    }

    #[test]
    fn vacuum_trajectory_never_jumps() {
        let spec = ModelSpec::quantum(3, 6.0);
        let vac = DenseState::product(&vec![crate::model::empty_state(); 3]).unwrap();
        let traj = dense_qjmc_trajectory(&spec, &vac, 1.0, 0.01, 7).unwrap();
        assert!(traj.jumps.is_empty());
        assert_eq!(traj.absorbed_at, Some(0.0));
        assert!(traj.states.iter().all(|s| s == &traj.states[0]));
    }
}

//! Contact-process operators and the gates the engines consume.
//!
//! Local basis: index 0 is the empty site, index 1 the occupied one.
//! Vectorized operators use the site-paired double-space index
//! `s = 2 m + n` for the matrix element `|m><n|`, so a two-site double-space
//! index runs over `(m1 n1 m2 n2)`, first site most significant. With this
//! convention `X -> A X B` acts on one site as `A (x) B^T`.

use ndarray::{array, Array1, Array2};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dagger, expm, identity, kron, max_abs_diff};
use crate::mps::TwoSiteGate;
use crate::scalar::{cast_matrix, ComplexScalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Classical,
    Quantum,
}

/// Rates are absolute; the CLI fixes `gamma = 1` so that everything else is
/// measured in units of the decay rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: Kind,
    #[serde(rename = "L")]
    pub len: usize,
    pub gamma: f64,
    /// Coherent branching rate; only read for [`Kind::Quantum`].
    pub omega: f64,
    /// Classical branching rate; only read for [`Kind::Classical`].
    pub branching: f64,
}

impl ModelSpec {
    pub fn quantum(len: usize, omega: f64) -> Self {
        Self { kind: Kind::Quantum, len, gamma: 1.0, omega, branching: 0.0 }
    }

    pub fn classical(len: usize, branching: f64) -> Self {
        Self { kind: Kind::Classical, len, gamma: 1.0, omega: 0.0, branching }
    }

    pub fn validate(&self) -> Result<()> {
        if self.len < 2 {
            return Err(Error::InvalidModel(format!("need at least 2 sites, got {}", self.len)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidModel(format!("gamma must be positive, got {}", self.gamma)));
        }
        let rate = match self.kind {
            Kind::Quantum => self.omega,
            Kind::Classical => self.branching,
        };
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidModel(format!("branching rate must be non-negative, got {rate}")));
        }
        Ok(())
    }

    /// Middle site, 0-based (`L / 2`).
    pub fn seed_site(&self) -> usize {
        self.len / 2
    }

    pub fn bonds(&self) -> usize {
        self.len - 1
    }
}

/// Single-site operators in the `{empty, occupied}` basis.
pub struct LocalOps {
    pub sigma_minus: Array2<c64>,
    pub sigma_plus: Array2<c64>,
    pub n: Array2<c64>,
    pub sigma_1: Array2<c64>,
    pub identity: Array2<c64>,
}

fn c(re: f64) -> c64 {
    c64::new(re, 0.0)
}

impl LocalOps {
    pub fn new() -> Self {
        let sigma_minus = array![[c(0.), c(1.)], [c(0.), c(0.)]];
        Self {
            sigma_plus: dagger(&sigma_minus),
            sigma_minus,
            n: array![[c(0.), c(0.)], [c(0.), c(1.)]],
            sigma_1: array![[c(0.), c(1.)], [c(1.), c(0.)]],
            identity: identity(2),
        }
    }
}

impl Default for LocalOps {
    fn default() -> Self {
        Self::new()
    }
}

pub fn empty_state() -> Array1<c64> {
    array![c(1.), c(0.)]
}

pub fn occupied_state() -> Array1<c64> {
    array![c(0.), c(1.)]
}

/// Vectorized single-site operators.
pub mod vectors {
    use super::*;

    /// `|1>` (the identity operator).
    pub fn identity() -> Array1<c64> {
        array![c(1.), c(0.), c(0.), c(1.)]
    }

    /// `|empty><empty|`, the local factor of the absorbing state.
    pub fn empty() -> Array1<c64> {
        array![c(1.), c(0.), c(0.), c(0.)]
    }

    /// `|occ><occ|`.
    pub fn occupied() -> Array1<c64> {
        array![c(0.), c(0.), c(0.), c(1.)]
    }

    /// Vectorized density operator `n`; `<n|X>` is `tr(n X)`.
    pub fn density() -> Array1<c64> {
        occupied()
    }
}

/// `X -> A X B` on one site.
pub fn superop(a: &Array2<c64>, b: &Array2<c64>) -> Array2<c64> {
    kron(a, &b.t().to_owned())
}

/// `X -> A X B` for two-site `A`, `B` (index `s1 * d + s2`), in the paired
/// ordering `(m1 n1 m2 n2)`.
pub fn superop_two(a: &Array2<c64>, b: &Array2<c64>) -> Array2<c64> {
    let mut out = Array2::zeros((16, 16));
    for m1 in 0..2 {
        for n1 in 0..2 {
            for m2 in 0..2 {
                for n2 in 0..2 {
                    let row = 8 * m1 + 4 * n1 + 2 * m2 + n2;
                    for p1 in 0..2 {
                        for q1 in 0..2 {
                            for p2 in 0..2 {
                                for q2 in 0..2 {
                                    let col = 8 * p1 + 4 * q1 + 2 * p2 + q2;
                                    out[[row, col]] =
                                        a[[2 * m1 + m2, 2 * p1 + p2]] * b[[2 * q1 + q2, 2 * n1 + n2]];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `h_k = omega (sigma_1 (x) n + n (x) sigma_1)` for every bond; empty for the
/// classical process.
pub fn build_hamiltonian_terms(spec: &ModelSpec) -> Vec<Array2<c64>> {
    if spec.kind == Kind::Classical {
        return Vec::new();
    }
    let ops = LocalOps::new();
    let h = (kron(&ops.sigma_1, &ops.n) + kron(&ops.n, &ops.sigma_1)).mapv(|z| z * spec.omega);
    vec![h; spec.bonds()]
}

/// Share of site `site`'s on-site terms carried by each adjacent bond.
fn onsite_weight(spec: &ModelSpec, site: usize) -> f64 {
    if site == 0 || site + 1 == spec.len {
        1.0
    } else {
        0.5
    }
}

/// Weights `(left site, right site)` of the on-site terms folded into `bond`.
pub fn bond_weights(spec: &ModelSpec, bond: usize) -> (f64, f64) {
    (onsite_weight(spec, bond), onsite_weight(spec, bond + 1))
}

/// Single-site decay dissipator as a 4x4 superoperator.
pub fn decay_superop(gamma: f64) -> Array2<c64> {
    let ops = LocalOps::new();
    let id = &ops.identity;
    let d = superop(&ops.sigma_minus, &ops.sigma_plus)
        - superop(&ops.n, id).mapv(|z| z * 0.5)
        - superop(id, &ops.n).mapv(|z| z * 0.5);
    d.mapv(|z| z * gamma)
}

/// Two-site part of the double-space generator on one bond, without decay.
fn bond_interaction(spec: &ModelSpec) -> Array2<c64> {
    let ops = LocalOps::new();
    let id2 = identity(4);
    match spec.kind {
        Kind::Quantum => {
            let h = &build_hamiltonian_terms(spec)[0];
            (superop_two(h, &id2) - superop_two(&id2, h)).mapv(|z| z * c64::new(0.0, -1.0))
        }
        Kind::Classical => {
            let jumps = [kron(&ops.sigma_1, &ops.n), kron(&ops.n, &ops.sigma_1)];
            let mut total = Array2::<c64>::zeros((16, 16));
            for j in &jumps {
                let jd = dagger(j);
                let jdj = jd.dot(j);
                total = total + superop_two(j, &jd)
                    - superop_two(&jdj, &id2).mapv(|z| z * 0.5)
                    - superop_two(&id2, &jdj).mapv(|z| z * 0.5);
            }
            total.mapv(|z| z * spec.branching)
        }
    }
}

/// Per-bond 16x16 generator terms summing to the full Lindbladian. On-site
/// decay is split evenly between the two bonds touching a site; the end
/// sites give their whole weight to their only bond.
pub fn build_double_space_generator_terms(spec: &ModelSpec) -> Result<Vec<Array2<c64>>> {
    spec.validate()?;
    let inter = bond_interaction(spec);
    let decay = decay_superop(spec.gamma);
    let id4 = identity(4);
    Ok((0..spec.bonds())
        .map(|b| {
            let (wl, wr) = bond_weights(spec, b);
            &inter + &kron(&decay, &id4).mapv(|z| z * wl) + &kron(&id4, &decay).mapv(|z| z * wr)
        })
        .collect())
}

/// Per-bond `h_k - (i/2) gamma (w_l n (x) 1 + w_r 1 (x) n)`.
pub fn build_effective_hamiltonian_terms(spec: &ModelSpec) -> Result<Vec<Array2<c64>>> {
    spec.validate()?;
    if spec.kind == Kind::Classical {
        return Err(Error::Unsupported(
            "trajectories are only defined for the quantum contact process".into(),
        ));
    }
    let ops = LocalOps::new();
    let id = &ops.identity;
    let h = build_hamiltonian_terms(spec);
    Ok(h.into_iter()
        .enumerate()
        .map(|(b, hk)| {
            let (wl, wr) = bond_weights(spec, b);
            let loss = kron(&ops.n, id).mapv(|z| z * wl) + kron(id, &ops.n).mapv(|z| z * wr);
            hk - loss.mapv(|z| z * c64::new(0.0, 0.5 * spec.gamma))
        })
        .collect())
}

/// A quantum jump channel.
#[derive(Clone, Debug)]
pub struct JumpOp {
    pub site: usize,
    /// Includes the rate: `op^dagger op = rate * n`.
    pub op: Array2<c64>,
    pub rate: f64,
}

pub fn jump_operators(spec: &ModelSpec) -> Result<Vec<JumpOp>> {
    spec.validate()?;
    if spec.kind == Kind::Classical {
        return Err(Error::Unsupported(
            "trajectories are only defined for the quantum contact process".into(),
        ));
    }
    let sm = LocalOps::new().sigma_minus;
    Ok((0..spec.len)
        .map(|site| JumpOp { site, op: sm.mapv(|z| z * spec.gamma.sqrt()), rate: spec.gamma })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Picture {
    SchrodingerDouble,
    HeisenbergDouble,
    PureStateNonhermitian,
}

/// One second-order Trotter step: three layers of mutually commuting gates,
/// `A(dt/2) B(dt) A(dt/2)` with `A` the even bonds and `B` the odd ones.
#[derive(Clone, Debug)]
pub struct GateSchedule<C: ComplexScalar> {
    pub picture: Picture,
    pub dt: f64,
    pub layers: Vec<Vec<TwoSiteGate<C>>>,
}

impl<C: ComplexScalar> GateSchedule<C> {
    pub fn local_dim(&self) -> usize {
        match self.picture {
            Picture::PureStateNonhermitian => 2,
            _ => 4,
        }
    }

    /// All gates in application order.
    pub fn gates(&self) -> impl Iterator<Item = &TwoSiteGate<C>> {
        self.layers.iter().flatten()
    }
}

struct GateCache {
    entries: Vec<(Array2<c64>, Array2<c64>)>,
}

impl GateCache {
    fn exp(&mut self, generator: Array2<c64>) -> Result<Array2<c64>> {
        if let Some((_, g)) = self.entries.iter().find(|(k, _)| max_abs_diff(k, &generator) == 0.0) {
            return Ok(g.clone());
        }
        let g = expm(&generator)?;
        self.entries.push((generator, g.clone()));
        Ok(g)
    }
}

/// Builds one full Trotter step of length `dt` in double precision.
pub fn build_trotter_schedule_c64(spec: &ModelSpec, picture: Picture, dt: f64) -> Result<GateSchedule<c64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    // exp(tau * G_k) for each bond, as a function of tau
    let (generators, scale): (Vec<Array2<c64>>, c64) = match picture {
        Picture::SchrodingerDouble | Picture::HeisenbergDouble => {
            (build_double_space_generator_terms(spec)?, c(1.0))
        }
        Picture::PureStateNonhermitian => {
            (build_effective_hamiltonian_terms(spec)?, c64::new(0.0, -1.0))
        }
    };
    let mut cache = GateCache { entries: Vec::new() };
    let mut layer = |parity: usize, tau: f64| -> Result<Vec<TwoSiteGate<c64>>> {
        let mut gates = Vec::new();
        for (bond, g) in generators.iter().enumerate().filter(|(b, _)| b % 2 == parity) {
            let m = cache.exp(g.mapv(|z| z * scale * tau))?;
            let m = if picture == Picture::HeisenbergDouble { dagger(&m) } else { m };
            gates.push(TwoSiteGate { bond, matrix: m, is_unitary: false });
        }
        Ok(gates)
    };
    let a = layer(0, dt / 2.0)?;
    let b = layer(1, dt)?;
    // The step is palindromic, so reversing the gate order of the adjoint
    // step leaves the layer sequence unchanged.
    let layers = vec![a.clone(), b, a].into_iter().filter(|l| !l.is_empty()).collect();
    Ok(GateSchedule { picture, dt, layers })
}

pub fn build_trotter_schedule<C: ComplexScalar>(
    spec: &ModelSpec,
    picture: Picture,
    dt: f64,
) -> Result<GateSchedule<C>> {
    let s = build_trotter_schedule_c64(spec, picture, dt)?;
    Ok(GateSchedule {
        picture: s.picture,
        dt: s.dt,
        layers: s
            .layers
            .into_iter()
            .map(|l| {
                l.into_iter()
                    .map(|g| TwoSiteGate { bond: g.bond, matrix: cast_matrix(&g.matrix), is_unitary: g.is_unitary })
                    .collect()
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn local_operator_identities() {
        let ops = LocalOps::new();
        let occ = occupied_state();
        let emp = empty_state();
        assert_eq!(ops.sigma_minus.dot(&occ), emp);
        assert_eq!(ops.sigma_minus.dot(&emp), Array1::zeros(2));
        assert_eq!(ops.n.dot(&occ), occ);
        assert_eq!(ops.n.dot(&emp), Array1::zeros(2));
        assert_eq!(ops.sigma_1.dot(&occ), emp);
        assert_eq!(ops.sigma_plus, dagger(&ops.sigma_minus));
    }

    #[test]
    fn hamiltonian_terms() {
        let spec = ModelSpec::quantum(4, 1.0);
        let h = build_hamiltonian_terms(&spec);
        assert_eq!(h.len(), 3);
        let vac = kron(&empty_state().insert_axis(ndarray::Axis(1)), &empty_state().insert_axis(ndarray::Axis(1)));
        assert!(max_abs(&h[0].dot(&vac)) == 0.0);
        // |occ, empty> = index 2 branches into |occ, occ> = index 3
        assert_eq!(h[0][[3, 2]], c(1.0));
        assert!(max_abs_diff(&h[0], &dagger(&h[0])) == 0.0);
        assert!(build_hamiltonian_terms(&ModelSpec::classical(4, 1.0)).is_empty());
    }

    #[test]
    fn superop_two_matches_single_site_products() {
        let ops = LocalOps::new();
        let a = kron(&ops.sigma_minus, &ops.n);
        let b = kron(&ops.sigma_1, &ops.identity);
        let paired = kron(&superop(&ops.sigma_minus, &ops.sigma_1), &superop(&ops.n, &ops.identity));
        assert!(max_abs_diff(&superop_two(&a, &b), &paired) < 1e-15);
    }

    #[test]
    fn trace_dual_annihilates_identity() {
        for spec in [ModelSpec::quantum(3, 6.0), ModelSpec::classical(3, 6.75)] {
            let one = kron(&vectors::identity().insert_axis(ndarray::Axis(0)), &vectors::identity().insert_axis(ndarray::Axis(0)));
            for term in build_double_space_generator_terms(&spec).unwrap() {
                assert!(max_abs(&one.dot(&term)) < 1e-12);
            }
        }
    }

    #[test]
    fn effective_hamiltonian_loss_sums_to_density() {
        let spec = ModelSpec::quantum(4, 0.0);
        let terms = build_effective_hamiltonian_terms(&spec).unwrap();
        let mut per_site = vec![0.0; 4];
        for (b, t) in terms.iter().enumerate() {
            // -Im of the diagonal of |occ, empty> and |empty, occ>
            per_site[b] += -2.0 * t[[2, 2]].im;
            per_site[b + 1] += -2.0 * t[[1, 1]].im;
        }
        for w in per_site {
            assert!((w - 1.0).abs() < 1e-15);
        }
        assert!(matches!(
            build_effective_hamiltonian_terms(&ModelSpec::classical(4, 1.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn jumps_fold_in_rate() {
        let spec = ModelSpec { gamma: 2.5, ..ModelSpec::quantum(5, 1.0) };
        let jumps = jump_operators(&spec).unwrap();
        assert_eq!(jumps.len(), 5);
        let ops = LocalOps::new();
        for j in &jumps {
            let jdj = dagger(&j.op).dot(&j.op);
            assert!(max_abs_diff(&jdj, &ops.n.mapv(|z| z * 2.5)) < 1e-14);
        }
    }

    #[test]
    fn schedule_layout() {
        let spec = ModelSpec::quantum(5, 6.0);
        let s = build_trotter_schedule_c64(&spec, Picture::SchrodingerDouble, 0.1).unwrap();
        let bonds: Vec<Vec<usize>> = s.layers.iter().map(|l| l.iter().map(|g| g.bond).collect()).collect();
        assert_eq!(bonds, vec![vec![0, 2], vec![1, 3], vec![0, 2]]);
        let two = build_trotter_schedule_c64(&ModelSpec::quantum(2, 6.0), Picture::SchrodingerDouble, 0.1).unwrap();
        assert_eq!(two.layers.len(), 2);
        assert!(build_trotter_schedule_c64(&spec, Picture::SchrodingerDouble, 0.0).is_err());
    }

    #[test]
    fn small_dt_gates_approach_identity() {
        let spec = ModelSpec::quantum(3, 6.0);
        let s = build_trotter_schedule_c64(&spec, Picture::SchrodingerDouble, 1e-9).unwrap();
        for g in s.gates() {
            assert!(max_abs_diff(&g.matrix, &identity(16)) < 1e-7);
        }
    }
}

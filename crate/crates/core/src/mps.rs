//! Open-boundary matrix product states.
//!
//! A state on `L` sites of local dimension `d` is stored as a chain of rank-3
//! tensors with axis signature `[left bond, physical, right bond]`; the outer
//! bonds have dimension 1. Sites and bonds are 0-based: bond `k` joins sites
//! `k` and `k + 1`.
//!
//! The chain is kept in mixed-canonical form around an explicit
//! orthogonality center whenever one is known: every tensor left of the
//! center is a left isometry and every tensor right of it a right isometry,
//! so the whole norm lives in the center tensor. Schmidt spectra are stored
//! per bond together with a validity flag. A spectrum is refreshed each time
//! the bond is split by an SVD and goes stale when a non-unitary update or a
//! truncation elsewhere changes the state across it; [`Mps::canonicalize`]
//! refreshes all of them at once.
//!
//! Two-site gates act on the combined index `s_k * d + s_{k+1}`.

use ndarray::{s, Array1, Array2, Array3, Axis};
use ndarray_linalg::{JobSvd, QRInto, SVDDCInto, SVDInto};
use num_traits::{Float, One, ToPrimitive};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{real_to_f64, ComplexScalar, RealOf};

/// Bond-dimension and singular-value cutoff used when re-splitting bonds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub chi_max: usize,
    /// Singular values at or below `svd_cutoff` times the largest are dropped.
    pub svd_cutoff: f64,
}

impl Truncation {
    pub const DEFAULT_CUTOFF: f64 = 1e-12;

    pub fn new(chi_max: usize) -> Self {
        Self { chi_max, svd_cutoff: Self::DEFAULT_CUTOFF }
    }

    /// No bond-dimension limit and no cutoff; the SVD only removes exact zeros.
    pub fn exact() -> Self {
        Self { chi_max: usize::MAX, svd_cutoff: 0.0 }
    }

    pub fn with_cutoff(self, svd_cutoff: f64) -> Self {
        Self { svd_cutoff, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.chi_max < 1 {
            return Err(Error::InvalidChiMax);
        }
        if !(self.svd_cutoff >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "svd_cutoff must be non-negative, got {}",
                self.svd_cutoff
            )));
        }
        Ok(())
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self::new(usize::MAX)
    }
}

/// Where the orthogonality center ends up after a two-site update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    /// Center moves to the right site of the bond.
    Right,
    /// Center stays on the left site of the bond.
    Left,
}

/// Dense `d^2 x d^2` operator acting on sites `bond` and `bond + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSiteGate<C> {
    pub bond: usize,
    pub matrix: Array2<C>,
    pub is_unitary: bool,
}

impl<C: ComplexScalar> TwoSiteGate<C> {
    pub fn new(bond: usize, matrix: Array2<C>, is_unitary: bool) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        let d = (rows as f64).sqrt().round() as usize;
        if rows != cols || d * d != rows || d < 1 {
            return Err(Error::MalformedGate(format!(
                "expected a square d^2 x d^2 matrix, got {rows} x {cols}"
            )));
        }
        if is_unitary {
            let defect = unitarity_defect(&matrix);
            let tol = 1e-12_f64.max(64.0 * crate::scalar::epsilon::<C>());
            if defect > tol {
                return Err(Error::MalformedGate(format!(
                    "gate flagged unitary but |G^dagger G - 1| = {defect:e}"
                )));
            }
        }
        Ok(Self { bond, matrix, is_unitary })
    }

    pub fn local_dim(&self) -> usize {
        (self.matrix.nrows() as f64).sqrt().round() as usize
    }

    /// Hermitian adjoint acting on the same bond.
    pub fn adjoint(&self) -> Self {
        Self {
            bond: self.bond,
            matrix: self.matrix.t().mapv(|z| z.conj()),
            is_unitary: self.is_unitary,
        }
    }
}

fn unitarity_defect<C: ComplexScalar>(m: &Array2<C>) -> f64 {
    let prod = m.t().mapv(|z| z.conj()).dot(m);
    let mut worst = 0.0f64;
    for ((i, j), z) in prod.indexed_iter() {
        let target = if i == j { C::one() } else { C::zero() };
        worst = worst.max(real_to_f64((*z - target).abs()));
    }
    worst
}

/// Result of splitting one bond.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BondUpdate {
    pub bond: usize,
    /// Sum of squared normalized Schmidt coefficients dropped at this bond.
    pub discarded_weight: f64,
    pub kept: usize,
    pub entropy: f64,
}

/// Accumulated truncation record for a sweep or a full time step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationReport {
    pub per_bond_discarded_weight: Vec<f64>,
    pub max_bond_entropy: f64,
    pub global_error_estimate: f64,
}

impl TruncationReport {
    pub fn new(bonds: usize) -> Self {
        Self {
            per_bond_discarded_weight: vec![0.0; bonds],
            max_bond_entropy: 0.0,
            global_error_estimate: 0.0,
        }
    }

    pub fn record(&mut self, update: &BondUpdate) {
        self.per_bond_discarded_weight[update.bond] += update.discarded_weight;
        self.max_bond_entropy = self.max_bond_entropy.max(update.entropy);
        self.refresh();
    }

    pub fn merge(&mut self, other: &TruncationReport) {
        for (a, b) in self
            .per_bond_discarded_weight
            .iter_mut()
            .zip(&other.per_bond_discarded_weight)
        {
            *a += b;
        }
        self.max_bond_entropy = self.max_bond_entropy.max(other.max_bond_entropy);
        self.refresh();
    }

    pub fn total_discarded_weight(&self) -> f64 {
        self.per_bond_discarded_weight.iter().sum()
    }

    fn refresh(&mut self) {
        self.global_error_estimate = self.total_discarded_weight().sqrt();
    }
}

/// Entanglement entropy `-sum p ln p` of normalized Schmidt coefficients.
pub fn entropy_from_spectrum<R: Float>(spectrum: &[R]) -> f64 {
    let norm: f64 = spectrum.iter().map(|&l| real_to_f64(l * l)).sum();
    if norm <= 0.0 {
        return 0.0;
    }
    spectrum
        .iter()
        .map(|&l| real_to_f64(l * l) / norm)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// JSON-friendly snapshot of an [`Mps`] for debugging.
#[derive(Clone, Debug, Serialize)]
pub struct MpsSummary {
    pub len: usize,
    pub local_dim: usize,
    pub bond_dims: Vec<usize>,
    pub ortho_center: Option<usize>,
    pub spectra: Vec<Option<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct Mps<C: ComplexScalar> {
    tensors: Vec<Array3<C>>,
    local_dim: usize,
    spectra: Vec<Vec<RealOf<C>>>,
    spectra_valid: Vec<bool>,
    center: Option<usize>,
}

struct Split<C: ComplexScalar> {
    u: Array2<C>,
    s: Vec<RealOf<C>>,
    vt: Array2<C>,
    discarded_weight: f64,
}

/// Thin SVD followed by truncation; the kept singular values are not rescaled.
fn split_truncated<C: ComplexScalar>(theta: Array2<C>, trunc: &Truncation) -> Result<Split<C>> {
    let (u, s, vt) = match theta.clone().svddc_into(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => (u, s, vt),
        // divide-and-conquer occasionally fails to converge; QR iteration is slower but robust
        _ => match theta.svd_into(true, true)? {
            (Some(u), s, Some(vt)) => {
                let k = s.len();
                (u.slice(s![.., ..k]).to_owned(), s, vt.slice(s![..k, ..]).to_owned())
            }
            _ => unreachable!("requested both singular-vector sets"),
        },
    };
    let s: Vec<RealOf<C>> = s.to_vec();
    let total: f64 = s.iter().map(|&x| real_to_f64(x * x)).sum();
    let floor = trunc.svd_cutoff * s.first().map_or(0.0, |&x| real_to_f64(x));
    let above = s.iter().take_while(|&&x| real_to_f64(x) > floor).count();
    let keep = above.min(trunc.chi_max).max(1);
    let dropped: f64 = s[keep..].iter().map(|&x| real_to_f64(x * x)).sum();
    let discarded_weight = if total > 0.0 { (dropped / total).clamp(0.0, 1.0) } else { 0.0 };
    Ok(Split {
        u: u.slice(s![.., ..keep]).to_owned(),
        s: s[..keep].to_vec(),
        vt: vt.slice(s![..keep, ..]).to_owned(),
        discarded_weight,
    })
}

fn normalized<R: Float>(values: &[R]) -> Vec<R> {
    let norm = values.iter().fold(R::zero(), |acc, &x| acc + x * x);
    let norm = Float::sqrt(norm);
    if norm > R::zero() {
        values.iter().map(|&x| x / norm).collect()
    } else {
        values.to_vec()
    }
}

fn scale_rows<C: ComplexScalar>(m: &mut Array2<C>, s: &[RealOf<C>]) {
    for (mut row, &x) in m.axis_iter_mut(Axis(0)).zip(s) {
        row.mapv_inplace(|z| z.mul_real(x));
    }
}

fn scale_cols<C: ComplexScalar>(m: &mut Array2<C>, s: &[RealOf<C>]) {
    for (mut col, &x) in m.axis_iter_mut(Axis(1)).zip(s) {
        col.mapv_inplace(|z| z.mul_real(x));
    }
}

fn conj_t<C: ComplexScalar>(m: &Array2<C>) -> Array2<C> {
    m.t().mapv(|z| z.conj())
}

fn into_matrix<C: ComplexScalar>(t: Array3<C>, rows: usize, cols: usize) -> Array2<C> {
    let t = if t.is_standard_layout() { t } else { t.as_standard_layout().to_owned() };
    t.into_shape_with_order((rows, cols)).expect("contiguous reshape")
}

fn into_tensor<C: ComplexScalar>(m: Array2<C>, shape: (usize, usize, usize)) -> Array3<C> {
    let m = if m.is_standard_layout() { m } else { m.as_standard_layout().to_owned() };
    m.into_shape_with_order(shape).expect("contiguous reshape")
}

impl<C: ComplexScalar> Mps<C> {
    /// Product state from one local vector per site, norms included.
    pub fn from_product(local_states: &[Array1<C>]) -> Result<Self> {
        let first = local_states
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty product state".into()))?;
        let d = first.len();
        if d == 0 {
            return Err(Error::DimensionMismatch("local dimension 0".into()));
        }
        let mut tensors = Vec::with_capacity(local_states.len());
        let mut total = 1.0;
        for (site, v) in local_states.iter().enumerate() {
            if v.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "site {site} has dimension {} but site 0 has {d}",
                    v.len()
                )));
            }
            let norm: f64 = v.iter().map(|z| real_to_f64(z.square())).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::ZeroNorm { site });
            }
            total *= norm;
            let inv = C::real(1.0 / norm);
            let t = Array3::from_shape_fn((1, d, 1), |(_, s, _)| v[s].mul_real(inv));
            tensors.push(t);
        }
        // isometries everywhere, the overall scale on the center
        let scale = C::real(total);
        tensors[0].mapv_inplace(|z| z.mul_real(scale));
        let bonds = tensors.len().saturating_sub(1);
        Ok(Self {
            tensors,
            local_dim: d,
            spectra: vec![vec![RealOf::<C>::one()]; bonds],
            spectra_valid: vec![true; bonds],
            center: Some(0),
        })
    }

    /// Chain from explicit tensors; no canonical form is assumed.
    pub fn from_tensors(tensors: Vec<Array3<C>>) -> Result<Self> {
        let (first, last) = match (tensors.first(), tensors.last()) {
            (Some(f), Some(l)) => (f.dim(), l.dim()),
            _ => return Err(Error::InvalidArgument("empty tensor list".into())),
        };
        let d = first.1;
        if first.0 != 1 || last.2 != 1 {
            return Err(Error::DimensionMismatch("outer bonds must have dimension 1".into()));
        }
        for (k, pair) in tensors.windows(2).enumerate() {
            if pair[0].dim().2 != pair[1].dim().0 || pair[1].dim().1 != d {
                return Err(Error::DimensionMismatch(format!("tensors {k} and {} do not chain", k + 1)));
            }
        }
        let bonds = tensors.len() - 1;
        let tensors = tensors
            .into_iter()
            .map(|t| if t.is_standard_layout() { t } else { t.as_standard_layout().to_owned() })
            .collect();
        Ok(Self {
            tensors,
            local_dim: d,
            spectra: vec![Vec::new(); bonds],
            spectra_valid: vec![false; bonds],
            center: None,
        })
    }

    /// Exact (up to `trunc`) decomposition of a dense state vector whose
    /// index has site 0 most significant. The center ends on the last site.
    pub fn from_dense(v: &Array1<C>, local_dim: usize, len: usize, trunc: Truncation) -> Result<Self> {
        trunc.validate()?;
        let total = local_dim
            .checked_pow(len as u32)
            .ok_or_else(|| Error::InvalidArgument("state too large".into()))?;
        if v.len() != total || len == 0 {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} != {local_dim}^{len}",
                v.len()
            )));
        }
        let mut tensors = Vec::with_capacity(len);
        let mut spectra = Vec::with_capacity(len.saturating_sub(1));
        let mut rest = v.clone().into_shape_with_order((1, total)).expect("reshape");
        let mut chi_left = 1;
        for _site in 0..len - 1 {
            let cols = rest.ncols() / local_dim;
            let m = rest
                .into_shape_with_order((chi_left * local_dim, cols))
                .expect("reshape");
            let split = split_truncated(m, &trunc)?;
            let kept = split.s.len();
            tensors.push(into_tensor(split.u, (chi_left, local_dim, kept)));
            let mut r = split.vt;
            scale_rows(&mut r, &split.s);
            spectra.push(normalized(&split.s));
            rest = r;
            chi_left = kept;
        }
        tensors.push(into_tensor(rest, (chi_left, local_dim, 1)));
        let bonds = len - 1;
        Ok(Self {
            tensors,
            local_dim,
            spectra,
            spectra_valid: vec![true; bonds],
            center: Some(len - 1),
        })
    }

    /// Full state vector, site 0 most significant. Exponential in `L`.
    pub fn to_dense(&self) -> Array1<C> {
        let mut acc = Array2::<C>::ones((1, 1));
        for t in &self.tensors {
            let (l, d, r) = t.dim();
            let rows = acc.nrows();
            let m = t.view().into_shape_with_order((l, d * r)).expect("standard layout");
            let next = acc.dot(&m);
            acc = next.into_shape_with_order((rows * d, r)).expect("reshape");
        }
        acc.into_shape_with_order(self.tensors.iter().map(|t| t.dim().1).product::<usize>())
            .expect("reshape")
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn tensor(&self, site: usize) -> &Array3<C> {
        &self.tensors[site]
    }

    /// Bond dimensions `chi_1 .. chi_{L-1}`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len() - 1].iter().map(|t| t.dim().2).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Stored normalized Schmidt coefficients of a bond, if fresh.
    pub fn spectrum(&self, bond: usize) -> Option<&[RealOf<C>]> {
        if bond < self.spectra.len() && self.spectra_valid[bond] {
            Some(&self.spectra[bond])
        } else {
            None
        }
    }

    pub fn summary(&self) -> MpsSummary {
        MpsSummary {
            len: self.len(),
            local_dim: self.local_dim,
            bond_dims: self.bond_dims(),
            ortho_center: self.center,
            spectra: (0..self.spectra.len())
                .map(|b| {
                    self.spectrum(b)
                        .map(|s| s.iter().map(|&x| real_to_f64(x)).collect())
                })
                .collect(),
        }
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.len() {
            return Err(Error::OutOfRange { index: site, limit: self.len() });
        }
        Ok(())
    }

    fn check_op(&self, op: &Array2<C>) -> Result<()> {
        if op.dim() != (self.local_dim, self.local_dim) {
            return Err(Error::DimensionMismatch(format!(
                "operator is {:?}, local dimension is {}",
                op.dim(),
                self.local_dim
            )));
        }
        Ok(())
    }

    fn invalidate_spectra_except(&mut self, keep: Option<usize>) {
        for (b, flag) in self.spectra_valid.iter_mut().enumerate() {
            if Some(b) != keep {
                *flag = false;
            }
        }
    }

    /// `<psi|psi>`.
    pub fn norm_squared(&self) -> f64 {
        match self.center {
            Some(c) => self.tensors[c].iter().map(|z| real_to_f64(z.square())).sum(),
            None => real_to_f64(overlap(self, self).expect("same shape").re()),
        }
    }

    /// Multiplies the state by `factor` (absorbed into the center tensor).
    pub fn scale(&mut self, factor: C) {
        let site = self.center.unwrap_or(0);
        self.tensors[site].mapv_inplace(|z| z * factor);
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_squared().sqrt();
        if norm > 0.0 {
            self.scale(C::from_real(C::real(1.0 / norm)));
        }
        norm
    }

    fn shift_center_right(&mut self, c: usize) -> Result<()> {
        let (l, d, r) = self.tensors[c].dim();
        let m = into_matrix(take(&mut self.tensors[c]), l * d, r);
        let (q, rr) = m.qr_into()?;
        let k = q.ncols();
        self.tensors[c] = into_tensor(q, (l, d, k));
        let (_, d2, r2) = self.tensors[c + 1].dim();
        let next = into_matrix(take(&mut self.tensors[c + 1]), r, d2 * r2);
        self.tensors[c + 1] = into_tensor(rr.dot(&next), (k, d2, r2));
        Ok(())
    }

    fn shift_center_left(&mut self, c: usize) -> Result<()> {
        let (l, d, r) = self.tensors[c].dim();
        let m = into_matrix(take(&mut self.tensors[c]), l, d * r);
        // M^dagger = Q R  =>  M = R^dagger Q^dagger
        let (q, rr) = conj_t(&m).qr_into()?;
        let k = q.ncols();
        self.tensors[c] = into_tensor(conj_t(&q), (k, d, r));
        let (l0, d0, _) = self.tensors[c - 1].dim();
        let prev = into_matrix(take(&mut self.tensors[c - 1]), l0 * d0, l);
        self.tensors[c - 1] = into_tensor(prev.dot(&conj_t(&rr)), (l0, d0, k));
        Ok(())
    }

    /// Moves the orthogonality center to `site` with QR steps. Establishes
    /// mixed-canonical form from scratch if no center is known.
    pub fn move_center(&mut self, site: usize) -> Result<()> {
        self.check_site(site)?;
        match self.center {
            Some(c) if c <= site => {
                for k in c..site {
                    self.shift_center_right(k)?;
                }
            }
            Some(c) => {
                for k in (site + 1..=c).rev() {
                    self.shift_center_left(k)?;
                }
            }
            None => {
                for k in 0..site {
                    self.shift_center_right(k)?;
                }
                for k in (site + 1..self.len()).rev() {
                    self.shift_center_left(k)?;
                }
            }
        }
        self.center = Some(site);
        Ok(())
    }

    /// Refreshes every bond spectrum by an SVD sweep. The center ends on site 0.
    pub fn canonicalize(&mut self) -> Result<()> {
        let last = self.len() - 1;
        self.move_center(last)?;
        for c in (1..=last).rev() {
            let (l, d, r) = self.tensors[c].dim();
            let m = into_matrix(take(&mut self.tensors[c]), l, d * r);
            let split = split_truncated(m, &Truncation::exact())?;
            let k = split.s.len();
            self.tensors[c] = into_tensor(split.vt, (k, d, r));
            let mut us = split.u;
            scale_cols(&mut us, &split.s);
            let (l0, d0, _) = self.tensors[c - 1].dim();
            let prev = into_matrix(take(&mut self.tensors[c - 1]), l0 * d0, l);
            self.tensors[c - 1] = into_tensor(prev.dot(&us), (l0, d0, k));
            self.spectra[c - 1] = normalized(&split.s);
            self.spectra_valid[c - 1] = true;
        }
        self.center = Some(0);
        Ok(())
    }

    /// Contracts `gate` into its bond, re-splits by SVD keeping at most
    /// `trunc.chi_max` values (none below the relative cutoff), and leaves the
    /// center on the side given by `sweep`.
    pub fn apply_two_site_gate(
        &mut self,
        gate: &TwoSiteGate<C>,
        trunc: &Truncation,
        sweep: Sweep,
    ) -> Result<BondUpdate> {
        trunc.validate()?;
        let k = gate.bond;
        if self.len() < 2 || k + 1 >= self.len() {
            return Err(Error::OutOfRange { index: k, limit: self.len().saturating_sub(1) });
        }
        let d = self.local_dim;
        if gate.matrix.dim() != (d * d, d * d) {
            return Err(Error::MalformedGate(format!(
                "gate is {:?}, expected {}x{}",
                gate.matrix.dim(),
                d * d,
                d * d
            )));
        }
        match self.center {
            Some(c) if c == k || c == k + 1 => {}
            Some(c) if c > k + 1 => self.move_center(k + 1)?,
            _ => self.move_center(k)?,
        }

        let (l, _, m) = self.tensors[k].dim();
        let (_, _, r) = self.tensors[k + 1].dim();
        let a = into_matrix(take(&mut self.tensors[k]), l * d, m);
        let b = into_matrix(take(&mut self.tensors[k + 1]), m, d * r);
        // theta[(a s1), (s2 b)] -> [s1 s2, a b]
        let theta = a
            .dot(&b)
            .into_shape_with_order((l, d, d, r))
            .expect("reshape")
            .permuted_axes([1, 2, 0, 3]);
        let theta = theta
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((d * d, l * r))
            .expect("reshape");
        let theta = gate.matrix.dot(&theta);
        let theta = theta
            .into_shape_with_order((d, d, l, r))
            .expect("reshape")
            .permuted_axes([2, 0, 1, 3]);
        let theta = theta
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((l * d, d * r))
            .expect("reshape");

        let split = split_truncated(theta, trunc)?;
        let kept = split.s.len();
        let (left, right) = match sweep {
            Sweep::Right => {
                let mut sv = split.vt;
                scale_rows(&mut sv, &split.s);
                self.center = Some(k + 1);
                (split.u, sv)
            }
            Sweep::Left => {
                let mut us = split.u;
                scale_cols(&mut us, &split.s);
                self.center = Some(k);
                (us, split.vt)
            }
        };
        self.tensors[k] = into_tensor(left, (l, d, kept));
        self.tensors[k + 1] = into_tensor(right, (kept, d, r));
        let spectrum = normalized(&split.s);
        let entropy = entropy_from_spectrum(&spectrum);
        self.spectra[k] = spectrum;
        self.spectra_valid[k] = true;
        if !gate.is_unitary || split.discarded_weight > 0.0 {
            self.invalidate_spectra_except(Some(k));
        }
        Ok(BondUpdate { bond: k, discarded_weight: split.discarded_weight, kept, entropy })
    }

    /// Applies gates on distinct bonds in one sweep, choosing the sweep
    /// direction that starts closest to the current center.
    pub fn apply_sweep(&mut self, gates: &[TwoSiteGate<C>], trunc: &Truncation) -> Result<TruncationReport> {
        let mut report = TruncationReport::new(self.len().saturating_sub(1));
        if gates.is_empty() {
            return Ok(report);
        }
        let mut order: Vec<&TwoSiteGate<C>> = gates.iter().collect();
        order.sort_by_key(|g| g.bond);
        let lo = order[0].bond;
        let hi = order[order.len() - 1].bond + 1;
        let center = self.center.unwrap_or(0);
        let left_to_right = center.abs_diff(lo) <= center.abs_diff(hi);
        if left_to_right {
            for g in order {
                report.record(&self.apply_two_site_gate(g, trunc, Sweep::Right)?);
            }
        } else {
            for g in order.into_iter().rev() {
                report.record(&self.apply_two_site_gate(g, trunc, Sweep::Left)?);
            }
        }
        Ok(report)
    }

    /// Applies a single-site operator. The center is moved onto the site
    /// first, so mixed-canonical form survives non-unitary operators.
    pub fn apply_single_site(&mut self, op: &Array2<C>, site: usize, is_unitary: bool) -> Result<()> {
        self.check_site(site)?;
        self.check_op(op)?;
        self.move_center(site)?;
        let (l, d, r) = self.tensors[site].dim();
        let t = take(&mut self.tensors[site]);
        let mut out = Array3::<C>::zeros((l, d, r));
        for a in 0..l {
            let block = t.slice(s![a, .., ..]);
            out.slice_mut(s![a, .., ..]).assign(&op.dot(&block));
        }
        self.tensors[site] = out;
        if !is_unitary {
            self.invalidate_spectra_except(None);
        }
        Ok(())
    }

    /// Von Neumann entropy (natural log) across `bond`.
    pub fn schmidt_entropy(&self, bond: usize) -> Result<f64> {
        if bond >= self.spectra.len() {
            return Err(Error::OutOfRange { index: bond, limit: self.spectra.len() });
        }
        if !self.spectra_valid[bond] {
            return Err(Error::StaleSpectra { bond });
        }
        Ok(entropy_from_spectrum(&self.spectra[bond]))
    }

    pub fn entropies(&self) -> Result<Vec<f64>> {
        (0..self.spectra.len()).map(|b| self.schmidt_entropy(b)).collect()
    }

    pub fn max_entropy_over_bonds(&self) -> Result<f64> {
        Ok(self.entropies()?.into_iter().fold(0.0, f64::max))
    }

    /// `<psi|op_site|psi> / <psi|psi>` via the orthogonality center.
    pub fn local_expectation(&mut self, op: &Array2<C>, site: usize) -> Result<C> {
        self.check_site(site)?;
        self.check_op(op)?;
        self.move_center(site)?;
        let t = &self.tensors[site];
        let (l, d, r) = t.dim();
        let mut num = C::zero();
        let mut den = C::zero();
        for a in 0..l {
            for b in 0..r {
                for s in 0..d {
                    let bra = t[[a, s, b]].conj();
                    den += bra * t[[a, s, b]];
                    let mut acc = C::zero();
                    for s2 in 0..d {
                        acc += op[[s, s2]] * t[[a, s2, b]];
                    }
                    num += bra * acc;
                }
            }
        }
        Ok(num / den)
    }

    /// `<psi|op_k|psi> / <psi|psi>` for every site `k`, from left and right
    /// environments; does not need or change the canonical form.
    pub fn expectation_profile(&self, op: &Array2<C>) -> Result<Vec<C>> {
        self.check_op(op)?;
        let n = self.len();
        let mut lefts = Vec::with_capacity(n + 1);
        lefts.push(Array2::<C>::ones((1, 1)));
        for t in &self.tensors {
            let next = transfer_left(lefts.last().unwrap(), t, t, None);
            lefts.push(next);
        }
        let mut rights = vec![Array2::<C>::ones((1, 1)); n + 1];
        for k in (0..n).rev() {
            rights[k] = transfer_right(&rights[k + 1], &self.tensors[k], &self.tensors[k], None);
        }
        let norm = lefts[n][[0, 0]];
        Ok((0..n)
            .map(|k| {
                let e = transfer_left(&lefts[k], &self.tensors[k], &self.tensors[k], Some(op));
                let v = (&e * &rights[k + 1]).sum();
                v / norm
            })
            .collect())
    }

    /// `<b_1 ... b_L | psi>` for a product bra given by ket vectors.
    pub fn product_overlap(&self, bra: &[Array1<C>]) -> Result<C> {
        self.check_product(bra)?;
        let mut env = Array1::<C>::ones(1);
        for (t, b) in self.tensors.iter().zip(bra) {
            env = env.dot(&contract_physical(t, b));
        }
        Ok(env[0])
    }

    /// For every site `k`, the overlap with the product bra whose `k`-th
    /// factor is replaced by `replacement`.
    pub fn product_overlap_profile(&self, bra: &[Array1<C>], replacement: &Array1<C>) -> Result<Vec<C>> {
        self.check_product(bra)?;
        if replacement.len() != self.local_dim {
            return Err(Error::DimensionMismatch("replacement vector".into()));
        }
        let n = self.len();
        let mats: Vec<Array2<C>> = self
            .tensors
            .iter()
            .zip(bra)
            .map(|(t, b)| contract_physical(t, b))
            .collect();
        let mut lefts = Vec::with_capacity(n + 1);
        lefts.push(Array1::<C>::ones(1));
        for m in &mats {
            let next = lefts.last().unwrap().dot(m);
            lefts.push(next);
        }
        let mut rights = vec![Array1::<C>::ones(1); n + 1];
        for k in (0..n).rev() {
            rights[k] = mats[k].dot(&rights[k + 1]);
        }
        Ok((0..n)
            .map(|k| {
                let m = contract_physical(&self.tensors[k], replacement);
                lefts[k].dot(&m).dot(&rights[k + 1])
            })
            .collect())
    }

    fn check_product(&self, bra: &[Array1<C>]) -> Result<()> {
        if bra.len() != self.len() || bra.iter().any(|b| b.len() != self.local_dim) {
            return Err(Error::DimensionMismatch("product bra shape".into()));
        }
        Ok(())
    }
}

/// `sum_s conj(b_s) T[:, s, :]`
fn contract_physical<C: ComplexScalar>(t: &Array3<C>, b: &Array1<C>) -> Array2<C> {
    let (l, d, r) = t.dim();
    let mut out = Array2::<C>::zeros((l, r));
    for s in 0..d {
        let w = b[s].conj();
        if w.is_zero() {
            continue;
        }
        out.scaled_add(w, &t.slice(s![.., s, ..]));
    }
    out
}

/// `E'[b, b'] = sum conj(A[a, s, b]) E[a, a'] op[s, s'] B[a', s', b']`
fn transfer_left<C: ComplexScalar>(
    env: &Array2<C>,
    a: &Array3<C>,
    b: &Array3<C>,
    op: Option<&Array2<C>>,
) -> Array2<C> {
    let (la, d, ra) = a.dim();
    let (lb, _, rb) = b.dim();
    let bm = b.view().into_shape_with_order((lb, d * rb)).expect("standard layout");
    // env . B : [a, (s' b')]
    let eb = env.dot(&bm).into_shape_with_order((la, d, rb)).expect("reshape");
    let eb = match op {
        None => eb,
        Some(op) => {
            let mut out = Array3::<C>::zeros((la, d, rb));
            for s in 0..d {
                for s2 in 0..d {
                    let w = op[[s, s2]];
                    if w.is_zero() {
                        continue;
                    }
                    let src = eb.slice(s![.., s2, ..]).to_owned();
                    out.slice_mut(s![.., s, ..]).scaled_add(w, &src);
                }
            }
            out
        }
    };
    let am = a.view().into_shape_with_order((la * d, ra)).expect("standard layout");
    let ebm = eb.into_shape_with_order((la * d, rb)).expect("reshape");
    conj_t(&am.to_owned()).dot(&ebm)
}

/// `F[a, a'] = sum conj(A[a, s, b]) F_next[b, b'] B[a', s, b']`
fn transfer_right<C: ComplexScalar>(
    env: &Array2<C>,
    a: &Array3<C>,
    b: &Array3<C>,
    op: Option<&Array2<C>>,
) -> Array2<C> {
    let (la, d, ra) = a.dim();
    let (lb, _, rb) = b.dim();
    debug_assert!(op.is_none());
    let bm = b.view().into_shape_with_order((lb * d, rb)).expect("standard layout");
    // B . env^T : [(a' s), b]  with env[b, b']
    let be = bm.dot(&env.t()).into_shape_with_order((lb, d * ra)).expect("reshape");
    let am = a.view().into_shape_with_order((la, d * ra)).expect("standard layout");
    // F[a, a'] = sum_{s,b} conj(A[a,(s b)]) * BE[a', (s b)]
    am.mapv(|z| z.conj()).dot(&be.t())
}

/// `<a|b>`, conjugating `a`.
pub fn overlap<C: ComplexScalar>(a: &Mps<C>, b: &Mps<C>) -> Result<C> {
    if a.len() != b.len() || a.local_dim != b.local_dim {
        return Err(Error::DimensionMismatch(format!(
            "overlap of L={} d={} with L={} d={}",
            a.len(),
            a.local_dim,
            b.len(),
            b.local_dim
        )));
    }
    let mut env = Array2::<C>::ones((1, 1));
    for (ta, tb) in a.tensors.iter().zip(&b.tensors) {
        env = transfer_left(&env, ta, tb, None);
    }
    Ok(env[[0, 0]])
}

/// Convenience: `to_f64` of a real part, for reporting.
pub fn re_f64<C: ComplexScalar>(z: C) -> f64 {
    z.re().to_f64().unwrap_or(f64::NAN)
}

fn take<C: ComplexScalar>(t: &mut Array3<C>) -> Array3<C> {
    std::mem::replace(t, Array3::zeros((0, 0, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::linalg::{expm, kron};
    use crate::model::{empty_state, occupied_state, LocalOps};
    use ndarray::array;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn swap() -> Array2<c64> {
        let mut m = Array2::zeros((4, 4));
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            m[[i, j]] = c(1.0);
        }
        m
    }

    fn branching_gate() -> Array2<c64> {
        let ops = LocalOps::new();
        let h = kron(&ops.sigma_1, &ops.n) + kron(&ops.n, &ops.sigma_1);
        expm(&h.mapv(|z| z * c64::new(0.0, -std::f64::consts::FRAC_PI_4))).unwrap()
    }

    #[test]
    fn swap_moves_excitation() {
        let mut psi = Mps::from_product(&[empty_state(), occupied_state()]).unwrap();
        let gate = TwoSiteGate::new(0, swap(), true).unwrap();
        let up = psi.apply_two_site_gate(&gate, &Truncation::new(4), Sweep::Right).unwrap();
        assert_eq!(up.kept, 1);
        assert_eq!(up.discarded_weight, 0.0);
        let v = psi.to_dense();
        assert!((v[2] - c(1.0)).norm() < 1e-14);
        assert_eq!(psi.max_bond_dim(), 1);
    }

    #[test]
    fn branching_gate_entangles() {
        let mut psi = Mps::from_product(&[occupied_state(), occupied_state()]).unwrap();
        let gate = TwoSiteGate::new(0, branching_gate(), true).unwrap();
        let up = psi.apply_two_site_gate(&gate, &Truncation::new(4), Sweep::Left).unwrap();
        assert_eq!(up.kept, 2);
        assert_eq!(up.discarded_weight, 0.0);
        assert!(psi.schmidt_entropy(0).unwrap() > 0.1);
        assert_eq!(psi.center(), Some(0));
    }

    #[test]
    fn entropy_of_known_spectra() {
        let product = Mps::from_product(&vec![occupied_state(); 3]).unwrap();
        assert_eq!(product.max_entropy_over_bonds().unwrap(), 0.0);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert!((entropy_from_spectrum(&[half, half]) - 2f64.ln()).abs() < 1e-15);
        // Bell pair on sites 0, 1 of three
        let mut v = Array1::<c64>::zeros(8);
        v[0] = c(half);
        v[6] = c(half);
        let psi = Mps::from_dense(&v, 2, 3, Truncation::exact()).unwrap();
        assert!((psi.schmidt_entropy(0).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(psi.schmidt_entropy(1).unwrap().abs() < 1e-12);
        assert!((psi.max_entropy_over_bonds().unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn overlaps_and_expectations() {
        let a = Mps::from_product(&vec![empty_state(); 3]).unwrap();
        let b = Mps::from_product(&[empty_state(), occupied_state(), empty_state()]).unwrap();
        assert_eq!(overlap(&a, &b).unwrap(), c(0.0));
        assert!((overlap(&b, &b).unwrap() - c(1.0)).norm() < 1e-15);
        let n = LocalOps::new().n;
        let mut b2 = b.clone();
        assert!((b2.local_expectation(&n, 1).unwrap() - c(1.0)).norm() < 1e-15);
        assert!(b2.local_expectation(&n, 0).unwrap().norm() < 1e-15);
        let prof = b.expectation_profile(&n).unwrap();
        assert!((prof[1] - c(1.0)).norm() < 1e-15 && prof[0].norm() < 1e-15);
        assert!(overlap(&a, &Mps::from_product(&vec![empty_state(); 2]).unwrap()).is_err());
    }

    #[test]
    fn stale_spectra_are_reported() {
        let mut psi = Mps::from_product(&vec![occupied_state(); 4]).unwrap();
        let g = TwoSiteGate::new(0, branching_gate(), true).unwrap();
        psi.apply_two_site_gate(&g, &Truncation::new(4), Sweep::Right).unwrap();
        let decay = array![[c(1.0), c(0.3)], [c(0.0), c(0.5)]];
        psi.apply_single_site(&decay, 2, false).unwrap();
        assert!(matches!(psi.schmidt_entropy(0), Err(Error::StaleSpectra { bond: 0 })));
        psi.canonicalize().unwrap();
        assert!(psi.schmidt_entropy(0).is_ok());
    }

    #[test]
    fn malformed_inputs() {
        let mut psi = Mps::from_product(&vec![occupied_state(); 3]).unwrap();
        let bad = TwoSiteGate { bond: 0, matrix: Array2::<c64>::eye(3), is_unitary: false };
        assert!(matches!(
            psi.apply_two_site_gate(&bad, &Truncation::new(4), Sweep::Right),
            Err(Error::MalformedGate(_))
        ));
        let g = TwoSiteGate::new(0, swap(), true).unwrap();
        assert!(matches!(
            psi.apply_two_site_gate(&g, &Truncation { chi_max: 0, svd_cutoff: 0.0 }, Sweep::Right),
            Err(Error::InvalidChiMax)
        ));
        assert!(TwoSiteGate::new(0, Array2::<c64>::ones((4, 4)), true).is_err());
        assert!(matches!(
            Mps::<c64>::from_product(&[empty_state(), Array1::zeros(2)]),
            Err(Error::ZeroNorm { site: 1 })
        ));
    }

    #[test]
    fn single_precision_chain() {
        use crate::c32;
        let one = c32::new(1.0, 0.0);
        let zero = c32::new(0.0, 0.0);
        let mut psi = Mps::<c32>::from_product(&[array![one, zero], array![zero, one]]).unwrap();
        let g = TwoSiteGate::new(0, crate::scalar::cast_matrix::<c32>(&branching_gate()), true).unwrap();
        psi.apply_two_site_gate(&g, &Truncation::new(4), Sweep::Right).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-6);
    }
}

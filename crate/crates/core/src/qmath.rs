//! Dense complex linear algebra on small labeled tensor-product spaces.
//!
//! Every state and operator carries an ordered list of `(SystemLabel, dim)`
//! pairs. Amplitudes are stored row-major in that declared order, so the last
//! system varies fastest. Operations that compare two objects (inner products,
//! operator application) permute tensor factors as needed, so callers never
//! have to agree on an ordering up front.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Complex amplitude type used throughout the crate.
pub type C64 = Complex64;

/// Tolerance on `U†U = I`, per entry.
pub const UNITARY_TOL: f64 = 1e-10;
/// Tolerance on pairwise inner products of basis vectors.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Tolerance on the norm of physical states.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QmathError {
    #[error("system `{0}` appears more than once")]
    DuplicateSystem(SystemLabel),
    #[error("system `{0}` is not part of the space")]
    UnknownSystem(SystemLabel),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("spaces differ: {0} vs {1}")]
    SpaceMismatch(String, String),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("basis vectors are not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("basis labels are not distinct: `{0}`")]
    DuplicateLabel(String),
    #[error("basis has {vectors} vectors but {labels} labels")]
    LabelCount { vectors: usize, labels: usize },
    #[error("partial trace needs at least one kept system")]
    EmptyKeep,
    #[error("apparatus dimension {got} too small, need at least {need}")]
    ApparatusTooSmall { need: usize, got: usize },
    #[error("basis on `{system}` has {vectors} vectors but the system has dimension {dim}")]
    BasisNotSpanning { system: SystemLabel, vectors: usize, dim: usize },
    #[error("ready index {index} out of range for dimension {dim}")]
    ReadyIndex { index: usize, dim: usize },
    #[error("non-finite amplitude")]
    NonFinite,
    #[error("vector has zero norm")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, QmathError>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemLabel(String);

impl SystemLabel {
    pub fn new(id: impl Into<String>) -> Self {
        SystemLabel(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for SystemLabel {
    fn from(s: &str) -> Self {
        SystemLabel(s.to_string())
    }
}

impl fmt::Display for SystemLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered list of subsystems with their dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Space {
    systems: Vec<(SystemLabel, usize)>,
}

impl Space {
    pub fn new(systems: Vec<(SystemLabel, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (label, _) in &systems {
            if !seen.insert(label.clone()) {
                return Err(QmathError::DuplicateSystem(label.clone()));
            }
        }
        Ok(Space { systems })
    }

    pub fn single(label: impl Into<SystemLabel>, dim: usize) -> Self {
        Space { systems: vec![(label.into(), dim)] }
    }

    pub fn systems(&self) -> &[(SystemLabel, usize)] {
        &self.systems
    }

    pub fn labels(&self) -> impl Iterator<Item = &SystemLabel> {
        self.systems.iter().map(|(l, _)| l)
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.systems.iter().map(|(_, d)| *d).product()
    }

    pub fn position(&self, label: &SystemLabel) -> Option<usize> {
        self.systems.iter().position(|(l, _)| l == label)
    }

    pub fn dim_of(&self, label: &SystemLabel) -> Option<usize> {
        self.position(label).map(|p| self.systems[p].1)
    }

    pub fn contains(&self, label: &SystemLabel) -> bool {
        self.position(label).is_some()
    }

    /// Row-major strides, last system fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.systems.len()];
        for k in (0..self.systems.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.systems[k + 1].1;
        }
        strides
    }

    pub fn concat(&self, other: &Space) -> Result<Space> {
        let mut systems = self.systems.clone();
        systems.extend(other.systems.iter().cloned());
        Space::new(systems)
    }

    /// Same space with systems sorted by label.
    pub fn canonical(&self) -> Space {
        let mut systems = self.systems.clone();
        systems.sort_by(|a, b| a.0.cmp(&b.0));
        Space { systems }
    }

    fn same_members(&self, other: &Space) -> bool {
        self.canonical() == other.canonical()
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.systems.iter().map(|(l, d)| format!("{l}:{d}")).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Index permutation taking amplitudes in `from` order to `to` order.
/// `map[i_to] = i_from`.
fn permutation_map(from: &Space, to: &Space) -> Result<Vec<usize>> {
    if !from.same_members(to) {
        return Err(QmathError::SpaceMismatch(from.to_string(), to.to_string()));
    }
    let from_strides = from.strides();
    let to_dims: Vec<usize> = to.systems.iter().map(|(_, d)| *d).collect();
    let src_stride: Vec<usize> =
        to.systems.iter().map(|(l, _)| from_strides[from.position(l).expect("same members")]).collect();
    let n = to.dim();
    let mut map = vec![0usize; n];
    let mut digits = vec![0usize; to_dims.len()];
    for slot in map.iter_mut() {
        *slot = digits.iter().zip(&src_stride).map(|(d, s)| d * s).sum();
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < to_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    space: Space,
    amps: Vec<C64>,
}

impl Ket {
    pub fn new(space: Space, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(QmathError::DimensionMismatch { expected: space.dim(), got: amps.len() });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QmathError::NonFinite);
        }
        Ok(Ket { space, amps })
    }

    pub fn from_real(space: Space, amps: &[f64]) -> Result<Self> {
        Ket::new(space, amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Single-system ket.
    pub fn on(label: impl Into<SystemLabel>, amps: Vec<C64>) -> Result<Self> {
        let dim = amps.len();
        Ket::new(Space::single(label, dim), amps)
    }

    pub fn basis_state(label: impl Into<SystemLabel>, dim: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ket { space: Space::single(label, dim), amps }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub fn normalized(&self) -> Result<Ket> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(QmathError::ZeroNorm);
        }
        Ok(Ket { space: self.space.clone(), amps: self.amps.iter().map(|a| a / n).collect() })
    }

    pub fn scaled(&self, factor: C64) -> Ket {
        Ket { space: self.space.clone(), amps: self.amps.iter().map(|a| a * factor).collect() }
    }

    /// Reorder tensor factors to match `order`.
    pub fn permuted(&self, order: &Space) -> Result<Ket> {
        if &self.space == order {
            return Ok(self.clone());
        }
        let map = permutation_map(&self.space, order)?;
        Ok(Ket { space: order.clone(), amps: map.iter().map(|&i| self.amps[i]).collect() })
    }

    pub fn canonical(&self) -> Ket {
        self.permuted(&self.space.canonical()).expect("canonical order has same members")
    }

    /// Amplitude at a multi-index given in declared system order.
    pub fn amplitude(&self, digits: &[usize]) -> C64 {
        let idx: usize = digits.iter().zip(self.space.strides()).map(|(d, s)| d * s).sum();
        self.amps[idx]
    }

    pub fn distance(&self, other: &Ket) -> Result<f64> {
        let other = other.permuted(&self.space)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }

    /// Contract system `sys` against `outcome` (a single-system ket), leaving
    /// an unnormalized ket on the remaining systems.
    pub fn project_out(&self, sys: &SystemLabel, outcome: &Ket) -> Result<Ket> {
        let pos = self.space.position(sys).ok_or_else(|| QmathError::UnknownSystem(sys.clone()))?;
        let dim = self.space.systems[pos].1;
        if outcome.space.len() != 1 || outcome.space.systems[0].1 != dim {
            return Err(QmathError::DimensionMismatch { expected: dim, got: outcome.amps.len() });
        }
        let mut rest = self.space.systems.clone();
        rest.remove(pos);
        let rest = Space { systems: rest };
        let ordered = {
            let mut order = vec![self.space.systems[pos].clone()];
            order.extend(rest.systems.iter().cloned());
            self.permuted(&Space { systems: order })?
        };
        let r = rest.dim();
        let mut amps = vec![C64::new(0.0, 0.0); r];
        for (i, o) in outcome.amps.iter().enumerate() {
            let c = o.conj();
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for (j, a) in amps.iter_mut().enumerate() {
                *a += c * ordered.amps[i * r + j];
            }
        }
        Ok(Ket { space: rest, amps })
    }
}

/// Tensor product of kets in the given order.
pub fn tensor(kets: &[Ket]) -> Result<Ket> {
    let mut acc = Ket { space: Space::default(), amps: vec![C64::new(1.0, 0.0)] };
    for k in kets {
        let space = acc.space.concat(&k.space)?;
        let mut amps = Vec::with_capacity(acc.amps.len() * k.amps.len());
        for a in &acc.amps {
            for b in &k.amps {
                amps.push(a * b);
            }
        }
        acc = Ket { space, amps };
    }
    Ok(acc)
}

/// `⟨a|b⟩`, conjugating `a`. The two kets must cover the same systems.
pub fn inner(a: &Ket, b: &Ket) -> Result<C64> {
    let b = b.permuted(&a.space)?;
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// Dense square operator on a labeled space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: Space,
    matrix: Vec<C64>,
}

impl Operator {
    pub fn new(space: Space, matrix: Vec<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.len() != d * d {
            return Err(QmathError::DimensionMismatch { expected: d * d, got: matrix.len() });
        }
        if matrix.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QmathError::NonFinite);
        }
        Ok(Operator { space, matrix })
    }

    pub fn identity(space: Space) -> Self {
        let d = space.dim();
        let mut matrix = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            matrix[i * d + i] = C64::new(1.0, 0.0);
        }
        Operator { space, matrix }
    }

    /// `σ_z = |0⟩⟨0| − |1⟩⟨1|` on a qubit.
    pub fn sigma_z(label: impl Into<SystemLabel>) -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Operator { space: Space::single(label, 2), matrix: vec![one, zero, zero, -one] }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[row * self.dim() + col]
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn dagger(&self) -> Operator {
        let d = self.dim();
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                m[j * d + i] = self.matrix[i * d + j].conj();
            }
        }
        Operator { space: self.space.clone(), matrix: m }
    }

    /// Matrix product `self · rhs` on the same space.
    pub fn compose(&self, rhs: &Operator) -> Result<Operator> {
        if self.space != rhs.space {
            return Err(QmathError::SpaceMismatch(self.space.to_string(), rhs.space.to_string()));
        }
        let d = self.dim();
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.matrix[i * d + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    m[i * d + j] += a * rhs.matrix[k * d + j];
                }
            }
        }
        Ok(Operator { space: self.space.clone(), matrix: m })
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.matrix.iter().zip(&other.matrix).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.dagger()) <= tol
    }

    /// Apply `self ⊗ I` to `k`; `self.space` must be a subset of `k.space`.
    pub fn apply(&self, k: &Ket) -> Result<Ket> {
        let full = &k.space;
        let strides = full.strides();
        let mut positions = Vec::with_capacity(self.space.len());
        for (label, dim) in &self.space.systems {
            let p = full.position(label).ok_or_else(|| QmathError::UnknownSystem(label.clone()))?;
            if full.systems[p].1 != *dim {
                return Err(QmathError::DimensionMismatch { expected: full.systems[p].1, got: *dim });
            }
            positions.push(p);
        }
        let d = self.dim();
        let sub_dims: Vec<usize> = self.space.systems.iter().map(|(_, d)| *d).collect();
        let offsets: Vec<usize> = (0..d)
            .map(|mut j| {
                let mut off = 0;
                for k in (0..sub_dims.len()).rev() {
                    off += (j % sub_dims[k]) * strides[positions[k]];
                    j /= sub_dims[k];
                }
                off
            })
            .collect();
        let mut out = k.amps.clone();
        let mut buf = vec![C64::new(0.0, 0.0); d];
        'base: for base in 0..full.dim() {
            for &p in &positions {
                if (base / strides[p]) % full.systems[p].1 != 0 {
                    continue 'base;
                }
            }
            for (j, off) in offsets.iter().enumerate() {
                buf[j] = k.amps[base + off];
            }
            for (i, off) in offsets.iter().enumerate() {
                let row = &self.matrix[i * d..(i + 1) * d];
                out[base + off] = row.iter().zip(&buf).map(|(m, v)| m * v).sum();
            }
        }
        Ok(Ket { space: k.space.clone(), amps: out })
    }

    /// `⟨a|self|b⟩`.
    pub fn sandwich(&self, a: &Ket, b: &Ket) -> Result<C64> {
        inner(a, &self.apply(b)?)
    }
}

/// Operator checked to satisfy `U†U = I` within [`UNITARY_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary(Operator);

impl Unitary {
    pub fn new(space: Space, matrix: Vec<C64>) -> Result<Self> {
        Unitary::from_operator(Operator::new(space, matrix)?)
    }

    pub fn from_operator(op: Operator) -> Result<Self> {
        let dev = op.dagger().compose(&op)?.max_abs_diff(&Operator::identity(op.space.clone()));
        if dev > UNITARY_TOL {
            return Err(QmathError::NotUnitary(dev));
        }
        Ok(Unitary(op))
    }

    pub fn identity(space: Space) -> Self {
        Unitary(Operator::identity(space))
    }

    pub fn hadamard(label: impl Into<SystemLabel>) -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Unitary(Operator { space: Space::single(label, 2), matrix: vec![h, h, h, -h] })
    }

    pub fn space(&self) -> &Space {
        &self.0.space
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn apply(&self, k: &Ket) -> Result<Ket> {
        self.0.apply(k)
    }

    pub fn dagger(&self) -> Unitary {
        Unitary(self.0.dagger())
    }

    pub fn approx_eq(&self, other: &Unitary, tol: f64) -> bool {
        self.0.space == other.0.space && self.0.max_abs_diff(&other.0) <= tol
    }
}

/// Orthonormal set of labeled vectors on one system.
///
/// A basis may be incomplete (fewer vectors than the dimension); pointer
/// bases of measurement apparatus are the common case.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    system: SystemLabel,
    dim: usize,
    vectors: Vec<Vec<C64>>,
    labels: Vec<String>,
}

impl Basis {
    pub fn new(
        system: impl Into<SystemLabel>,
        dim: usize,
        vectors: Vec<Vec<C64>>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let system = system.into();
        if vectors.len() != labels.len() {
            return Err(QmathError::LabelCount { vectors: vectors.len(), labels: labels.len() });
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(QmathError::DuplicateLabel(l.clone()));
            }
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(QmathError::DimensionMismatch { expected: dim, got: v.len() });
            }
        }
        let mut dev: f64 = 0.0;
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((ip - C64::new(target, 0.0)).norm());
            }
        }
        if dev > ORTHONORMAL_TOL {
            return Err(QmathError::NotOrthonormal(dev));
        }
        Ok(Basis { system, dim, vectors, labels })
    }

    /// `{|0⟩, …, |d−1⟩}` labeled `"0"`, `"1"`, ….
    pub fn computational(system: impl Into<SystemLabel>, dim: usize) -> Self {
        let labels = (0..dim).map(|i| i.to_string()).collect();
        Basis::computational_with_labels(system, dim, labels)
    }

    pub fn computational_with_labels(system: impl Into<SystemLabel>, dim: usize, labels: Vec<String>) -> Self {
        let vectors = (0..dim)
            .map(|i| {
                let mut v = vec![C64::new(0.0, 0.0); dim];
                v[i] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        Basis::new(system, dim, vectors, labels).expect("computational basis is orthonormal")
    }

    /// `{|+⟩, |−⟩}` on a qubit.
    pub fn plus_minus(system: impl Into<SystemLabel>) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Basis::real(system, &[&[h, h], &[h, -h]], &["+", "-"]).expect("± basis is orthonormal")
    }

    /// Measurement along the axis at angle `theta` in the XZ-plane:
    /// `{cos(θ/2)|0⟩ + sin(θ/2)|1⟩, sin(θ/2)|0⟩ − cos(θ/2)|1⟩}` labeled `"+"`, `"-"`.
    pub fn angle(system: impl Into<SystemLabel>, theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Basis::real(system, &[&[c, s], &[s, -c]], &["+", "-"]).expect("angle basis is orthonormal")
    }

    pub fn real(system: impl Into<SystemLabel>, vectors: &[&[f64]], labels: &[&str]) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.len());
        Basis::new(
            system,
            dim,
            vectors.iter().map(|v| v.iter().map(|&x| C64::new(x, 0.0)).collect()).collect(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn system(&self) -> &SystemLabel {
        &self.system
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.vectors.len() == self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn vector(&self, i: usize) -> &[C64] {
        &self.vectors[i]
    }

    pub fn ket(&self, i: usize) -> Ket {
        Ket { space: Space::single(self.system.clone(), self.dim), amps: self.vectors[i].clone() }
    }

    /// Same vectors and labels attached to another system of equal dimension.
    pub fn relabeled(&self, system: impl Into<SystemLabel>) -> Basis {
        Basis { system: system.into(), ..self.clone() }
    }

    pub fn approx_eq(&self, other: &Basis, tol: f64) -> bool {
        self.system == other.system
            && self.dim == other.dim
            && self.labels == other.labels
            && self.vectors.iter().zip(&other.vectors).all(|(a, b)| a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol))
    }
}

/// Measurement along `theta` in the XZ-plane; see [`Basis::angle`].
pub fn angle_basis(system: impl Into<SystemLabel>, theta: f64) -> Basis {
    Basis::angle(system, theta)
}

/// Von Neumann pre-measurement coupling `|s_i⟩|R⟩ → |s_i⟩|M_i⟩`.
///
/// The apparatus carries a dedicated ready state at `ready_index`; indicator
/// `M_i` is the computational state `(ready_index + i + 1) mod dim`. The
/// unitary is `Σ_i |s_i⟩⟨s_i| ⊗ Shift^(i+1)`, a controlled cyclic shift of
/// the apparatus register, so its action off the ready sector is fixed too.
pub fn measurement_coupling(
    basis: &Basis,
    apparatus: impl Into<SystemLabel>,
    apparatus_dim: usize,
    ready_index: usize,
) -> Result<Unitary> {
    let apparatus = apparatus.into();
    if !basis.is_complete() {
        return Err(QmathError::BasisNotSpanning {
            system: basis.system.clone(),
            vectors: basis.len(),
            dim: basis.dim,
        });
    }
    let n = basis.len();
    if apparatus_dim < n + 1 {
        return Err(QmathError::ApparatusTooSmall { need: n + 1, got: apparatus_dim });
    }
    if ready_index >= apparatus_dim {
        return Err(QmathError::ReadyIndex { index: ready_index, dim: apparatus_dim });
    }
    let space = Space::new(vec![(basis.system.clone(), basis.dim), (apparatus, apparatus_dim)])?;
    let (d, m) = (basis.dim, apparatus_dim);
    let dim = d * m;
    let mut matrix = vec![C64::new(0.0, 0.0); dim * dim];
    for (i, s) in basis.vectors.iter().enumerate() {
        let shift = i + 1;
        // |s_i⟩⟨s_i| ⊗ |a + shift⟩⟨a|
        for a in 0..m {
            let b = (a + shift) % m;
            for (x, sx) in s.iter().enumerate() {
                for (y, sy) in s.iter().enumerate() {
                    matrix[(x * m + b) * dim + (y * m + a)] += sx * sy.conj();
                }
            }
        }
    }
    Unitary::new(space, matrix)
}

/// Apparatus indicator index for outcome `i`; see [`measurement_coupling`].
pub fn indicator_index(i: usize, ready_index: usize, apparatus_dim: usize) -> usize {
    (ready_index + i + 1) % apparatus_dim
}

/// Pointer basis `{|M_i⟩}` of an apparatus, labeled like the measured basis.
pub fn pointer_basis(
    measured: &Basis,
    apparatus: impl Into<SystemLabel>,
    apparatus_dim: usize,
    ready_index: usize,
) -> Basis {
    let vectors = (0..measured.len())
        .map(|i| {
            let mut v = vec![C64::new(0.0, 0.0); apparatus_dim];
            v[indicator_index(i, ready_index, apparatus_dim)] = C64::new(1.0, 0.0);
            v
        })
        .collect();
    Basis::new(apparatus, apparatus_dim, vectors, measured.labels.clone()).expect("distinct indicator states")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: Space,
    matrix: Vec<C64>,
}

impl DensityMatrix {
    pub fn new(space: Space, matrix: Vec<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.len() != d * d {
            return Err(QmathError::DimensionMismatch { expected: d * d, got: matrix.len() });
        }
        Ok(DensityMatrix { space, matrix })
    }

    pub fn from_ket(k: &Ket) -> Self {
        let d = k.amps.len();
        let mut matrix = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                matrix[i * d + j] = k.amps[i] * k.amps[j].conj();
            }
        }
        DensityMatrix { space: k.space.clone(), matrix }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[row * self.dim() + col]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entry(i, i)).sum()
    }

    pub fn purity(&self) -> f64 {
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += self.entry(i, j) * self.entry(j, i);
            }
        }
        acc.re
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i).re).collect()
    }

    /// `⟨u|ρ|u⟩` for a ket on this space.
    pub fn expectation(&self, u: &Ket) -> Result<f64> {
        let u = u.permuted(&self.space)?;
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            if u.amps[i] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                acc += u.amps[i].conj() * self.matrix[i * d + j] * u.amps[j];
            }
        }
        Ok(acc.re)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| {
            let a = self.entry(i, j);
            let b = self.entry(j, i).conj();
            (a + b) * 0.5
        });
        let eig = nalgebra::SymmetricEigen::new(m);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity and unit trace within 1e-10, and positivity within
    /// 1e-9 when the dimension is small enough for an eigen-solve.
    pub fn is_valid(&self) -> bool {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                if (self.entry(i, j) - self.entry(j, i).conj()).norm() > 1e-10 {
                    return false;
                }
            }
        }
        if (self.trace() - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return false;
        }
        d > 256 || self.min_eigenvalue() >= -1e-9
    }

    /// Trace out every system not in `keep`; kept systems retain their order.
    pub fn partial_trace(&self, keep: &[SystemLabel]) -> Result<DensityMatrix> {
        let (kept, ki, ri) = split_indices(&self.space, keep)?;
        let d = self.dim();
        let kd = kept.dim();
        let mut out = vec![C64::new(0.0, 0.0); kd * kd];
        for a in 0..d {
            for b in 0..d {
                if ri[a] == ri[b] {
                    out[ki[a] * kd + ki[b]] += self.matrix[a * d + b];
                }
            }
        }
        Ok(DensityMatrix { space: kept, matrix: out })
    }
}

/// For each full index: its index in the kept subspace and in the rest.
fn split_indices(space: &Space, keep: &[SystemLabel]) -> Result<(Space, Vec<usize>, Vec<usize>)> {
    if keep.is_empty() {
        return Err(QmathError::EmptyKeep);
    }
    for k in keep {
        if !space.contains(k) {
            return Err(QmathError::UnknownSystem(k.clone()));
        }
    }
    let kept_systems: Vec<(SystemLabel, usize)> =
        space.systems.iter().filter(|(l, _)| keep.contains(l)).cloned().collect();
    let kept = Space::new(kept_systems)?;
    let strides = space.strides();
    let n = space.dim();
    let mut ki = vec![0usize; n];
    let mut ri = vec![0usize; n];
    for idx in 0..n {
        let (mut k, mut r) = (0usize, 0usize);
        for (p, (label, dim)) in space.systems.iter().enumerate() {
            let digit = (idx / strides[p]) % dim;
            if keep.contains(label) {
                k = k * dim + digit;
            } else {
                r = r * dim + digit;
            }
        }
        ki[idx] = k;
        ri[idx] = r;
    }
    Ok((kept, ki, ri))
}

/// Reduced density matrix of a pure state on the `keep` systems.
pub fn partial_trace(k: &Ket, keep: &[SystemLabel]) -> Result<DensityMatrix> {
    let (kept, ki, ri) = split_indices(&k.space, keep)?;
    let kd = kept.dim();
    let rd = k.space.dim() / kd;
    let mut grid = vec![C64::new(0.0, 0.0); kd * rd];
    for (idx, a) in k.amps.iter().enumerate() {
        grid[ki[idx] * rd + ri[idx]] = *a;
    }
    let mut out = vec![C64::new(0.0, 0.0); kd * kd];
    for i in 0..kd {
        for j in 0..kd {
            let row_i = &grid[i * rd..(i + 1) * rd];
            let row_j = &grid[j * rd..(j + 1) * rd];
            out[i * kd + j] = row_i.iter().zip(row_j).map(|(a, b)| a * b.conj()).sum();
        }
    }
    Ok(DensityMatrix { space: kept, matrix: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn eq1_state() -> Ket {
        let space = Space::new(vec![("q1".into(), 2), ("q2".into(), 2)]).unwrap();
        Ket::from_real(space, &[0.8, 0.0, 0.0, 0.6]).unwrap()
    }

    #[test]
    fn tensor_of_basis_states() {
        let k = tensor(&[Ket::basis_state("a", 2, 0), Ket::basis_state("b", 2, 1)]).unwrap();
        assert_eq!(k.amplitudes()[1], c(1.0));
        assert!(k.is_normalized());
    }

    #[test]
    fn tensor_is_linear() {
        let q = Ket::on("q", vec![c(0.8), c(0.6)]).unwrap();
        let r = Ket::basis_state("R", 3, 0);
        let k = tensor(&[q, r]).unwrap();
        assert!((k.amplitude(&[0, 0]) - c(0.8)).norm() < 1e-15);
        assert!((k.amplitude(&[1, 0]) - c(0.6)).norm() < 1e-15);
    }

    #[test]
    fn tensor_rejects_duplicate_labels() {
        let err = tensor(&[Ket::basis_state("a", 2, 0), Ket::basis_state("a", 2, 1)]).unwrap_err();
        assert_eq!(err, QmathError::DuplicateSystem("a".into()));
    }

    #[test]
    fn hadamard_on_zero() {
        let k = Unitary::hadamard("q").apply(&Ket::basis_state("q", 2, 0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((k.amplitudes()[0] - c(h)).norm() < 1e-15);
        assert!((k.amplitudes()[1] - c(h)).norm() < 1e-15);
    }

    #[test]
    fn von_neumann_coupling_entangles() {
        let basis = Basis::computational("q1", 2);
        let u = measurement_coupling(&basis, "A", 3, 0).unwrap();
        let start = tensor(&[Ket::on("q1", vec![c(0.8), c(0.6)]).unwrap(), Ket::basis_state("A", 3, 0)]).unwrap();
        let out = u.apply(&start).unwrap();
        let m0 = indicator_index(0, 0, 3);
        let m1 = indicator_index(1, 0, 3);
        assert!((out.amplitude(&[0, m0]) - c(0.8)).norm() < 1e-12);
        assert!((out.amplitude(&[1, m1]) - c(0.6)).norm() < 1e-12);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_embeds_identity_on_other_systems() {
        let psi = tensor(&[eq1_state(), Ket::basis_state("A", 3, 0)]).unwrap();
        let u = measurement_coupling(&Basis::computational("q1", 2), "A", 3, 0).unwrap();
        let out = u.apply(&psi).unwrap();
        // 4/5|0⟩¹|0⟩²|M0⟩ + 3/5|1⟩¹|1⟩²|M1⟩
        assert!((out.amplitude(&[0, 0, 1]) - c(0.8)).norm() < 1e-12);
        assert!((out.amplitude(&[1, 1, 2]) - c(0.6)).norm() < 1e-12);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let u = Unitary::hadamard("q");
        let err = u.apply(&Ket::basis_state("q", 3, 0)).unwrap_err();
        assert!(matches!(err, QmathError::DimensionMismatch { .. }));
    }

    #[test]
    fn identity_leaves_input_unchanged() {
        let psi = eq1_state();
        let out = Unitary::identity(psi.space().clone()).apply(&psi).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn inner_against_product_states() {
        let psi = eq1_state();
        let zz = tensor(&[Ket::basis_state("q1", 2, 0), Ket::basis_state("q2", 2, 0)]).unwrap();
        assert!((inner(&psi, &zz).unwrap() - c(0.8)).norm() < 1e-15);
        // ⟨+¹ x²|ψ⟩ with |x⟩ = (3|0⟩ + 4|1⟩)/5
        let plus = Basis::plus_minus("q1").ket(0);
        let x = Ket::on("q2", vec![c(0.6), c(0.8)]).unwrap();
        let bra = tensor(&[x, plus]).unwrap();
        let expected = 24.0 / (25.0 * 2f64.sqrt());
        assert!((inner(&bra, &psi).unwrap() - c(expected)).norm() < 1e-15);
    }

    #[test]
    fn inner_rejects_different_spaces() {
        let err = inner(&Ket::basis_state("a", 2, 0), &Ket::basis_state("b", 2, 0)).unwrap_err();
        assert!(matches!(err, QmathError::SpaceMismatch(..)));
    }

    #[test]
    fn reduced_state_of_eq1() {
        let rho = partial_trace(&eq1_state(), &["q1".into()]).unwrap();
        assert!((rho.entry(0, 0).re - 16.0 / 25.0).abs() < 1e-12);
        assert!((rho.entry(1, 1).re - 9.0 / 25.0).abs() < 1e-12);
        assert!(rho.entry(0, 1).norm() < 1e-12);
        assert!(rho.is_valid());
    }

    #[test]
    fn product_state_reduces_to_pure() {
        let k = tensor(&[Ket::on("a", vec![c(0.6), c(0.8)]).unwrap(), Ket::basis_state("b", 2, 1)]).unwrap();
        let rho = partial_trace(&k, &["a".into()]).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn singlet_reduces_to_maximally_mixed() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let space = Space::new(vec![("q1".into(), 2), ("q2".into(), 2)]).unwrap();
        let singlet = Ket::from_real(space, &[0.0, h, -h, 0.0]).unwrap();
        for keep in ["q1", "q2"] {
            let rho = partial_trace(&singlet, &[keep.into()]).unwrap();
            assert!((rho.entry(0, 0).re - 0.5).abs() < 1e-12);
            assert!((rho.entry(1, 1).re - 0.5).abs() < 1e-12);
            assert!(rho.entry(0, 1).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_needs_a_kept_system() {
        assert_eq!(partial_trace(&eq1_state(), &[]).unwrap_err(), QmathError::EmptyKeep);
    }

    #[test]
    fn density_partial_trace_matches_ket_route() {
        let psi = tensor(&[eq1_state(), Ket::on("c", vec![c(0.6), c(0.8)]).unwrap()]).unwrap();
        let rho = DensityMatrix::from_ket(&psi);
        let a = rho.partial_trace(&["q2".into(), "c".into()]).unwrap();
        let b = partial_trace(&psi, &["q2".into(), "c".into()]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((a.entry(i, j) - b.entry(i, j)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn angle_basis_values() {
        let b0 = angle_basis("q", 0.0);
        assert!((b0.vector(0)[0] - c(1.0)).norm() < 1e-15);
        assert!((b0.vector(1)[1] - c(-1.0)).norm() < 1e-15);
        let b = angle_basis("q", 2.0 * std::f64::consts::PI / 3.0);
        let s3 = 3f64.sqrt() / 2.0;
        // {1/2|0⟩ + √3/2|1⟩, √3/2|0⟩ − 1/2|1⟩}
        assert!((b.vector(0)[0] - c(0.5)).norm() < 1e-12);
        assert!((b.vector(0)[1] - c(s3)).norm() < 1e-12);
        assert!((b.vector(1)[0] - c(s3)).norm() < 1e-12);
        assert!((b.vector(1)[1] - c(-0.5)).norm() < 1e-12);
    }

    #[test]
    fn basis_validation() {
        assert!(matches!(
            Basis::real("q", &[&[1.0, 0.0], &[0.6, 0.8]], &["a", "b"]),
            Err(QmathError::NotOrthonormal(_))
        ));
        assert!(matches!(
            Basis::real("q", &[&[1.0, 0.0], &[0.0, 1.0]], &["a", "a"]),
            Err(QmathError::DuplicateLabel(_))
        ));
    }

    #[test]
    fn coupling_rejects_small_apparatus_and_partial_basis() {
        let b = Basis::computational("q", 2);
        assert!(matches!(measurement_coupling(&b, "A", 2, 0), Err(QmathError::ApparatusTooSmall { .. })));
        let partial = Basis::real("q", &[&[1.0, 0.0, 0.0]], &["a"]).unwrap();
        assert!(matches!(measurement_coupling(&partial, "A", 4, 0), Err(QmathError::BasisNotSpanning { .. })));
    }

    #[test]
    fn repeated_coupling_keeps_branches_orthogonal() {
        // Two applications in the same basis: the system's reduced state stays
        // diagonal with unchanged weights, so no branch is created or merged.
        for theta in [0.0, 0.7, 2.1] {
            let basis = angle_basis("q", theta);
            let u = measurement_coupling(&basis, "A", 3, 0).unwrap();
            let start = tensor(&[Ket::on("q", vec![c(0.8), C64::new(0.0, 0.6)]).unwrap(), Ket::basis_state("A", 3, 0)])
                .unwrap();
            let once = u.apply(&start).unwrap();
            let twice = u.apply(&once).unwrap();
            for state in [&once, &twice] {
                let rho = partial_trace(state, &["q".into()]).unwrap();
                let off = basis.ket(0);
                let on = basis.ket(1);
                let coherence =
                    inner(&off, &Operator::new(rho.space().clone(), rho.matrix.clone()).unwrap().apply(&on).unwrap())
                        .unwrap();
                assert!(coherence.norm() < 1e-12);
            }
            let w = |k: &Ket| partial_trace(k, &["q".into()]).unwrap().expectation(&basis.ket(0)).unwrap();
            assert!((w(&once) - w(&twice)).abs() < 1e-12);
        }
    }

    #[test]
    fn coupling_is_isometric_on_ready_sector() {
        let basis = angle_basis("q", 1.1);
        let u = measurement_coupling(&basis, "A", 3, 1).unwrap();
        let r = Ket::basis_state("A", 3, 1);
        for i in 0..2 {
            for j in 0..2 {
                let a = u.apply(&tensor(&[basis.ket(i), r.clone()]).unwrap()).unwrap();
                let b = u.apply(&tensor(&[basis.ket(j), r.clone()]).unwrap()).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((inner(&a, &b).unwrap() - c(expected)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn project_out_contracts_one_system() {
        let psi = eq1_state();
        let rest = psi.project_out(&"q1".into(), &Ket::basis_state("q1", 2, 1)).unwrap();
        assert_eq!(rest.space().len(), 1);
        assert!((rest.amplitudes()[1] - c(0.6)).norm() < 1e-15);
    }
}

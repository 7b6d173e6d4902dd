//! Two-qubit density matrices over the joint spin basis of the two nodes.
//!
//! Basis ordering is fixed everywhere as `(↑↑, ↑↓, ↓↑, ↓↓)`, node A being the
//! most significant qubit, with `↑ ≡ m_s = 0` and `↓ ≡ m_s = -1`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt;

use nalgebra::{Matrix2, Matrix4, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::QStateError;

pub type C64 = Complex64;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;
/// Trace deviation tolerated by [`TwoQubitState::fidelity_to_bell`].
pub const FIDELITY_TRACE_TOL: f64 = 1e-9;

/// Coherence time of the N = 64 dynamical-decoupling sequence, in seconds.
pub const T_COH_N64_S: f64 = 14.3e-3;

pub const UU: usize = 0;
pub const UD: usize = 1;
pub const DU: usize = 2;
pub const DD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    A,
    B,
}

/// Which of the two odd-parity Bell states a herald announced.
///
/// `Plus` is heralded by the same detector clicking in both rounds, `Minus`
/// by different detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellSign {
    Plus,
    Minus,
}

impl BellSign {
    pub const ALL: [BellSign; 2] = [BellSign::Minus, BellSign::Plus];

    pub fn from_same_detector(same: bool) -> Self {
        if same {
            BellSign::Plus
        } else {
            BellSign::Minus
        }
    }

    /// +1 for plus, -1 for minus.
    pub fn signum(self) -> f64 {
        match self {
            BellSign::Plus => 1.0,
            BellSign::Minus => -1.0,
        }
    }
}

impl fmt::Display for BellSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BellSign::Plus => write!(f, "psi+"),
            BellSign::Minus => write!(f, "psi-"),
        }
    }
}

/// Single-node readout basis. `X` and `MinusX` are a `+π/2` and `-π/2`
/// rotation about the y axis followed by a Z measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementBasis {
    Z,
    X,
    #[serde(rename = "-X")]
    MinusX,
}

impl MeasurementBasis {
    fn pre_rotation_angle(self) -> f64 {
        match self {
            MeasurementBasis::Z => 0.0,
            MeasurementBasis::X => FRAC_PI_2,
            MeasurementBasis::MinusX => -FRAC_PI_2,
        }
    }
}

impl fmt::Display for MeasurementBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementBasis::Z => write!(f, "Z"),
            MeasurementBasis::X => write!(f, "X"),
            MeasurementBasis::MinusX => write!(f, "-X"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorChannel {
    BitFlip,
    /// `(1 − p/2)ρ + (p/2) ZρZ`: full dephasing at `p = 1`.
    Dephasing,
    Depolarizing,
}

/// Joint Z⊗Z outcome probabilities, ordered like the basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    pub uu: f64,
    pub ud: f64,
    pub du: f64,
    pub dd: f64,
}

impl OutcomeProbabilities {
    pub fn from_array(p: [f64; 4]) -> Self {
        Self { uu: p[UU], ud: p[UD], du: p[DU], dd: p[DD] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.uu, self.ud, self.du, self.dd]
    }

    pub fn odd(&self) -> f64 {
        self.ud + self.du
    }

    pub fn even(&self) -> f64 {
        self.uu + self.dd
    }

    pub fn sum(&self) -> f64 {
        self.uu + self.ud + self.du + self.dd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    matrix: Matrix4<C64>,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pauli(axis: usize) -> Matrix2<C64> {
    let o = C64::new(0.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        0 => Matrix2::new(o, c(1.0), c(1.0), o),
        1 => Matrix2::new(o, -i, i, o),
        _ => Matrix2::new(c(1.0), o, o, c(-1.0)),
    }
}

fn embed(op: &Matrix2<C64>, node: Node) -> Matrix4<C64> {
    let id = Matrix2::<C64>::identity();
    match node {
        Node::A => op.kronecker(&id).fixed_view::<4, 4>(0, 0).into_owned(),
        Node::B => id.kronecker(op).fixed_view::<4, 4>(0, 0).into_owned(),
    }
}

/// `exp(-i θ n·σ / 2)`.
fn rotation(axis: &Vector3<f64>, angle: f64) -> Matrix2<C64> {
    let (s, co) = (angle / 2.0).sin_cos();
    let mut u = Matrix2::<C64>::identity() * c(co);
    for k in 0..3 {
        u -= pauli(k) * C64::new(0.0, s * axis[k]);
    }
    u
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: Matrix4<C64>) -> Result<Self, QStateError> {
        let dev = (matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > HERMITIAN_TOL {
            return Err(QStateError::NotHermitian(dev));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QStateError::NotNormalized(tr.re));
        }
        let state = Self { matrix };
        let min = state.min_eigenvalue();
        if min < PSD_TOL {
            return Err(QStateError::NotPositive(min));
        }
        Ok(state)
    }

    /// Builds a state without validation; the matrix is symmetrized.
    pub(crate) fn from_matrix_unchecked(matrix: Matrix4<C64>) -> Self {
        Self { matrix: (matrix + matrix.adjoint()) * c(0.5) }
    }

    pub fn from_pure(amplitudes: [C64; 4]) -> Self {
        let v = nalgebra::Vector4::from(amplitudes);
        let norm = v.norm();
        let v = v / c(norm);
        Self::from_matrix_unchecked(v * v.adjoint())
    }

    /// Diagonal state with the given populations (normalized).
    pub fn diagonal(populations: [f64; 4]) -> Self {
        let total: f64 = populations.iter().sum();
        let mut m = Matrix4::<C64>::zeros();
        for (k, p) in populations.iter().enumerate() {
            m[(k, k)] = c(p / total);
        }
        Self { matrix: m }
    }

    pub fn basis_state(index: usize) -> Self {
        let mut pops = [0.0; 4];
        pops[index] = 1.0;
        Self::diagonal(pops)
    }

    pub fn maximally_mixed() -> Self {
        Self::diagonal([0.25; 4])
    }

    pub fn bell(sign: BellSign) -> Self {
        let h = c(FRAC_1_SQRT_2);
        let zero = c(0.0);
        Self::from_pure([zero, h, h * sign.signum(), zero])
    }

    /// Odd-parity mixture of `|↑↓⟩` and `|↓↑⟩` with the Bell coherence scaled
    /// by `coherence`; `coherence = 1` is the pure Bell state.
    pub fn odd_parity(sign: BellSign, coherence: f64) -> Self {
        let mut m = Matrix4::<C64>::zeros();
        m[(UD, UD)] = c(0.5);
        m[(DU, DU)] = c(0.5);
        m[(UD, DU)] = c(0.5 * sign.signum() * coherence);
        m[(DU, UD)] = m[(UD, DU)];
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.matrix[(k, k)].re)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let ev = self.matrix.symmetric_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2], ev[3]];
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `⟨ψ^sign|ρ|ψ^sign⟩`.
    pub fn fidelity_to_bell(&self, sign: BellSign) -> Result<f64, QStateError> {
        let tr = self.trace();
        if (tr - 1.0).abs() > FIDELITY_TRACE_TOL {
            return Err(QStateError::NotNormalized(tr));
        }
        let m = &self.matrix;
        let f = 0.5 * (m[(UD, UD)].re + m[(DU, DU)].re) + sign.signum() * m[(UD, DU)].re;
        Ok(f.clamp(0.0, 1.0))
    }

    pub fn apply_unitary(&self, u: &Matrix4<C64>) -> Self {
        Self::from_matrix_unchecked(u * self.matrix * u.adjoint())
    }

    /// Rotates one node by `angle` about the unit vector `axis`.
    pub fn apply_local_unitary(&self, node: Node, axis: [f64; 3], angle: f64) -> Result<Self, QStateError> {
        let axis = Vector3::from(axis);
        let n = axis.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(QStateError::AxisNotUnit(n));
        }
        Ok(self.apply_unitary(&embed(&rotation(&axis, angle), node)))
    }

    /// π rotation about x on both nodes, the mid-sequence spin flip.
    pub fn flip_both(&self) -> Self {
        let x = Vector3::new(1.0, 0.0, 0.0);
        let r = rotation(&x, std::f64::consts::PI);
        self.apply_unitary(&r.kronecker(&r).fixed_view::<4, 4>(0, 0).into_owned())
    }

    pub fn apply_error_channel(&self, node: Node, kind: ErrorChannel, p: f64) -> Result<Self, QStateError> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(QStateError::ProbabilityOutOfRange(p));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let kraus_terms: Vec<(f64, usize)> = match kind {
            ErrorChannel::BitFlip => vec![(p, 0)],
            ErrorChannel::Dephasing => vec![(p / 2.0, 2)],
            ErrorChannel::Depolarizing => vec![(p / 4.0, 0), (p / 4.0, 1), (p / 4.0, 2)],
        };
        let keep: f64 = 1.0 - kraus_terms.iter().map(|(w, _)| w).sum::<f64>();
        let mut out = self.matrix * c(keep);
        for (w, axis) in kraus_terms {
            let k = embed(&pauli(axis), node);
            out += k * self.matrix * k.adjoint() * c(w);
        }
        Ok(Self::from_matrix_unchecked(out))
    }

    /// Mixes `self` and `other` as `(1-w)·self + w·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Self {
        Self::from_matrix_unchecked(self.matrix * c(1.0 - w) + other.matrix * c(w))
    }

    /// Weighted mixture; weights need not be normalized.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (f64, &'a TwoQubitState)>) -> Option<Self> {
        let mut total = 0.0;
        let mut m = Matrix4::<C64>::zeros();
        for (w, s) in parts {
            if w > 0.0 {
                total += w;
                m += s.matrix * c(w);
            }
        }
        (total > 0.0).then(|| Self::from_matrix_unchecked(m / c(total)))
    }

    pub fn measurement_probabilities(
        &self,
        basis_a: MeasurementBasis,
        basis_b: MeasurementBasis,
    ) -> OutcomeProbabilities {
        let y = Vector3::new(0.0, 1.0, 0.0);
        let ua = rotation(&y, basis_a.pre_rotation_angle());
        let ub = rotation(&y, basis_b.pre_rotation_angle());
        let u: Matrix4<C64> = ua.kronecker(&ub).fixed_view::<4, 4>(0, 0).into_owned();
        let rotated = u * self.matrix * u.adjoint();
        let mut p = [0, 1, 2, 3].map(|k| rotated[(k, k)].re.max(0.0));
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        OutcomeProbabilities::from_array(p)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.matrix - other.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `A·exp[-(t/T_coh)³] + 0.5`.
pub fn coherence_envelope(t_fe: f64, t_coh: f64, amplitude: f64) -> Result<f64, QStateError> {
    if !(t_coh > 0.0) {
        return Err(QStateError::NonPositiveCoherenceTime(t_coh));
    }
    if t_fe < 0.0 {
        return Err(QStateError::NegativeTime(t_fe));
    }
    Ok(amplitude * (-(t_fe / t_coh).powi(3)).exp() + 0.5)
}

/// Random density matrix `G G† / tr(G G†)` from a 4×`rank` complex Ginibre matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> TwoQubitState {
    let rank = rank.clamp(1, 4);
    let mut m = Matrix4::<C64>::zeros();
    for _ in 0..rank {
        let v = nalgebra::Vector4::from_fn(|_, _| {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        m += v * v.adjoint();
    }
    let tr = m.trace();
    TwoQubitState::from_matrix_unchecked(m / tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-12;

    #[test]
    fn bell_minus_entries() {
        let m = TwoQubitState::bell(BellSign::Minus);
        let m = m.matrix();
        assert_abs_diff_eq!(m[(UD, UD)].re, 0.5, epsilon = EPS);
        assert_abs_diff_eq!(m[(DU, DU)].re, 0.5, epsilon = EPS);
        assert_abs_diff_eq!(m[(UD, DU)].re, -0.5, epsilon = EPS);
        assert_abs_diff_eq!(m[(DU, UD)].re, -0.5, epsilon = EPS);
        assert_abs_diff_eq!(m[(UU, UU)].re, 0.0, epsilon = EPS);
        let plus = TwoQubitState::bell(BellSign::Plus);
        assert_abs_diff_eq!(plus.matrix()[(UD, DU)].re, 0.5, epsilon = EPS);
        assert!(TwoQubitState::new(*plus.matrix()).is_ok());
    }

    #[test]
    fn fidelity_examples() {
        let minus = TwoQubitState::bell(BellSign::Minus);
        assert_abs_diff_eq!(minus.fidelity_to_bell(BellSign::Minus).unwrap(), 1.0, epsilon = EPS);
        let mixed = TwoQubitState::maximally_mixed();
        assert_abs_diff_eq!(mixed.fidelity_to_bell(BellSign::Minus).unwrap(), 0.25, epsilon = EPS);
        let ud = TwoQubitState::basis_state(UD);
        assert_abs_diff_eq!(ud.fidelity_to_bell(BellSign::Minus).unwrap(), 0.5, epsilon = EPS);
        let plus = TwoQubitState::bell(BellSign::Plus);
        assert_abs_diff_eq!(plus.fidelity_to_bell(BellSign::Minus).unwrap(), 0.0, epsilon = EPS);
    }

    #[test]
    fn fidelity_rejects_unnormalized() {
        let s = TwoQubitState::from_matrix_unchecked(Matrix4::identity() * c(0.3));
        assert!(matches!(s.fidelity_to_bell(BellSign::Plus), Err(QStateError::NotNormalized(_))));
        assert!(TwoQubitState::new(Matrix4::identity() * c(0.3)).is_err());
    }

    #[test]
    fn local_unitaries() {
        let ud = TwoQubitState::basis_state(UD);
        let same = ud.apply_local_unitary(Node::A, [0.0, 0.0, 1.0], 0.0).unwrap();
        assert!(same.max_abs_diff(&ud) < EPS);

        let flipped = ud.apply_local_unitary(Node::A, [1.0, 0.0, 0.0], std::f64::consts::PI).unwrap();
        assert!(flipped.max_abs_diff(&TwoQubitState::basis_state(DD)) < EPS);

        let minus = TwoQubitState::bell(BellSign::Minus);
        let both = minus
            .apply_local_unitary(Node::A, [1.0, 0.0, 0.0], std::f64::consts::PI)
            .unwrap()
            .apply_local_unitary(Node::B, [1.0, 0.0, 0.0], std::f64::consts::PI)
            .unwrap();
        assert_abs_diff_eq!(both.fidelity_to_bell(BellSign::Minus).unwrap(), 1.0, epsilon = EPS);
        assert!(both.max_abs_diff(&minus.flip_both()) < EPS);

        assert!(matches!(ud.apply_local_unitary(Node::B, [1.0, 1.0, 0.0], 1.0), Err(QStateError::AxisNotUnit(_))));
    }

    #[test]
    fn error_channel_examples() {
        let minus = TwoQubitState::bell(BellSign::Minus);
        for kind in [ErrorChannel::BitFlip, ErrorChannel::Dephasing, ErrorChannel::Depolarizing] {
            let same = minus.apply_error_channel(Node::B, kind, 0.0).unwrap();
            assert!(same.max_abs_diff(&minus) < EPS);
        }
        let dephased = minus.apply_error_channel(Node::A, ErrorChannel::Dephasing, 1.0).unwrap();
        assert!(dephased.max_abs_diff(&TwoQubitState::diagonal([0.0, 0.5, 0.5, 0.0])) < EPS);
        assert_abs_diff_eq!(dephased.fidelity_to_bell(BellSign::Minus).unwrap(), 0.5, epsilon = EPS);

        let flipped = minus.apply_error_channel(Node::A, ErrorChannel::BitFlip, 1.0).unwrap();
        assert_abs_diff_eq!(flipped.fidelity_to_bell(BellSign::Minus).unwrap(), 0.0, epsilon = EPS);

        let depol = minus.apply_error_channel(Node::A, ErrorChannel::Depolarizing, 1.0).unwrap();
        assert!(depol.max_abs_diff(&TwoQubitState::maximally_mixed()) < EPS);

        assert!(minus.apply_error_channel(Node::A, ErrorChannel::BitFlip, 1.5).is_err());
        assert!(minus.apply_error_channel(Node::A, ErrorChannel::BitFlip, -0.1).is_err());
    }

    #[test]
    fn measurement_examples() {
        use MeasurementBasis::*;
        let minus = TwoQubitState::bell(BellSign::Minus);
        let plus = TwoQubitState::bell(BellSign::Plus);
        let close = |p: OutcomeProbabilities, want: [f64; 4]| {
            for (a, b) in p.to_array().iter().zip(want) {
                assert_abs_diff_eq!(*a, b, epsilon = EPS);
            }
        };
        close(minus.measurement_probabilities(Z, Z), [0.0, 0.5, 0.5, 0.0]);
        close(plus.measurement_probabilities(X, X), [0.5, 0.0, 0.0, 0.5]);
        close(minus.measurement_probabilities(X, X), [0.0, 0.5, 0.5, 0.0]);
        close(plus.measurement_probabilities(MinusX, X), [0.0, 0.5, 0.5, 0.0]);
        close(minus.measurement_probabilities(MinusX, X), [0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn coherence_envelope_values() {
        assert_abs_diff_eq!(coherence_envelope(0.0, T_COH_N64_S, 0.5).unwrap(), 1.0, epsilon = EPS);
        let at_tcoh = coherence_envelope(T_COH_N64_S, T_COH_N64_S, 0.5).unwrap();
        assert_abs_diff_eq!(at_tcoh, 0.5 / std::f64::consts::E + 0.5, epsilon = EPS);
        assert_abs_diff_eq!(at_tcoh, 0.6839, epsilon = 1e-4);
        assert_eq!(T_COH_N64_S, 14.3e-3);
        assert!(coherence_envelope(1.0, 0.0, 0.5).is_err());
        assert!(coherence_envelope(1.0, -1.0, 0.5).is_err());
    }

    #[test]
    fn random_states_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for rank in 1..=4 {
            let s = random_density_matrix(&mut rng, rank);
            assert!(TwoQubitState::new(*s.matrix()).is_ok());
        }
    }
}

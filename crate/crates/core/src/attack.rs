//! Explicit i.i.d. server attacks and the exact entropy oracle.
//!
//! An attack is the server's state preparation (real amplitudes `alpha`,
//! `beta`, `gamma` over the toward-Alice / toward-Bob / vacuum branches)
//! plus an isometry that maps each returned branch to a classical message
//! ("0", "1" or "vac") and a private ancilla in `C^d`. The nine ancilla
//! output vectors are grouped in columns: `e*` for the toward-Alice input,
//! `f*` for toward-Bob, `g*` for vacuum.
//!
//! From a spec this module derives the conditional states of every
//! key-generating branch, the induced [`Observables`], and — via
//! Gram-matrix eigenvalues — the *exact* conditional entropy `H(A|E)` of
//! the accepted-round state, which serves as the oracle validating the
//! entropy lower bounds of [`crate::keyrate`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::Observables;
use crate::keyrate::{
    bound_mr0_rm0, bound_mr1_rm1, entropy_lower_bound_3term, entropy_lower_bound_6term,
    InnerProductBounds, OverlapBoundVariant,
};
use crate::{Error, Result};

const ISOMETRY_TOL: f64 = 1e-10;
const AMPLITUDE_TOL: f64 = 1e-10;
/// Normalized eigenvalues at or below this are treated as exact zeros.
const EIGENVALUE_CUTOFF: f64 = 1e-14;
const GRAM_SCHMIDT_TOL: f64 = 1e-8;
const GRAM_SCHMIDT_RETRIES: usize = 32;

mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Complex64>, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect())
    }
}

/// An explicit i.i.d. attack: source amplitudes and the nine ancilla
/// output vectors of the message isometry.
///
/// The wire format is JSON with each vector as a list of `[re, im]` pairs
/// of length `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Ancilla dimension.
    pub d: usize,
    #[serde(with = "complex_pairs")]
    pub e0: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub e1: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub ev: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub f0: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub f1: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub fv: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub g0: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub g1: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub gv: Vec<Complex64>,
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

impl AttackSpec {
    /// The three isometry columns as message-indexed triples.
    fn columns(&self) -> [[&Vec<Complex64>; 3]; 3] {
        [
            [&self.e0, &self.e1, &self.ev],
            [&self.f0, &self.f1, &self.fv],
            [&self.g0, &self.g1, &self.gv],
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attack spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One violated attack-spec constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub residual: f64,
}

/// Checks every structural invariant of a spec; an empty list means the
/// spec is a valid attack (its isometry dilates to a unitary).
pub fn validate_attack(spec: &AttackSpec) -> Vec<Violation> {
    let mut violations = Vec::new();
    if spec.d == 0 {
        violations.push(Violation { constraint: "d >= 1".into(), residual: 1.0 });
        return violations;
    }
    let names = [
        ("e0", &spec.e0),
        ("e1", &spec.e1),
        ("ev", &spec.ev),
        ("f0", &spec.f0),
        ("f1", &spec.f1),
        ("fv", &spec.fv),
        ("g0", &spec.g0),
        ("g1", &spec.g1),
        ("gv", &spec.gv),
    ];
    for (name, v) in names {
        if v.len() != spec.d {
            violations.push(Violation {
                constraint: format!("{name} has length {} != d = {}", v.len(), spec.d),
                residual: (v.len() as f64 - spec.d as f64).abs(),
            });
        }
    }
    if !violations.is_empty() {
        return violations;
    }

    let amp = spec.alpha * spec.alpha + spec.beta * spec.beta + spec.gamma * spec.gamma;
    if (amp - 1.0).abs() > AMPLITUDE_TOL {
        violations.push(Violation {
            constraint: "alpha^2 + beta^2 + gamma^2 = 1".into(),
            residual: (amp - 1.0).abs(),
        });
    }

    let cols = spec.columns();
    let col_names = ["e", "f", "g"];
    for (c, name) in cols.iter().zip(col_names) {
        let total: f64 = c.iter().map(|v| norm_sq(v)).sum();
        if (total - 1.0).abs() > ISOMETRY_TOL {
            violations.push(Violation {
                constraint: format!("{name}-column normalization"),
                residual: (total - 1.0).abs(),
            });
        }
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let dot: Complex64 = (0..3).map(|m| inner(cols[i][m], cols[j][m])).sum();
        if dot.norm() > ISOMETRY_TOL {
            violations.push(Violation {
                constraint: format!("{}-{} column orthogonality", col_names[i], col_names[j]),
                residual: dot.norm(),
            });
        }
    }
    violations
}

/// The calibrated honest server: a balanced source, message "0" on a full
/// reflection, message "1" on a single returning arm (up to sign), "vac"
/// on a vacuum return. Only the lossless case is representable here; lossy
/// honest behavior is handled by the Monte Carlo simulator.
pub fn honest_attack(p_l: f64) -> Result<AttackSpec> {
    if p_l != 0.0 {
        return Err(Error::UnsupportedParameter(format!(
            "honest attack supports p_l = 0 only (got {p_l}); use the simulator for lossy channels"
        )));
    }
    Ok(phase_noisy_attack(0.0))
}

/// The honest interferometer with a relative phase `theta` on the
/// toward-Bob arm; its statistics match the symmetric channel with phase
/// error `sin^2(theta / 2)` and no loss or dark counts.
pub fn phase_noisy_attack(theta: f64) -> AttackSpec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let zero = Complex64::new(0.0, 0.0);
    let phase = Complex64::from_polar(1.0, theta);
    AttackSpec {
        alpha: s,
        beta: s,
        gamma: 0.0,
        d: 1,
        e0: vec![Complex64::new(s, 0.0)],
        e1: vec![Complex64::new(s, 0.0)],
        ev: vec![zero],
        f0: vec![phase * s],
        f1: vec![-phase * s],
        fv: vec![zero],
        g0: vec![zero],
        g1: vec![zero],
        gv: vec![Complex64::new(1.0, 0.0)],
    }
}

fn sample_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect()
}

/// The honest isometry columns embedded in ancilla dimension `d`
/// (occupying the first ancilla coordinate), as vectors over the
/// message (x) ancilla space `C^{3d}`.
fn honest_columns(d: usize) -> [Vec<Complex64>; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols = [vec![Complex64::default(); 3 * d], vec![Complex64::default(); 3 * d], vec![
        Complex64::default();
        3 * d
    ]];
    // column layout: [msg0 ancilla..., msg1 ancilla..., msgv ancilla...]
    cols[0][0] = Complex64::new(s, 0.0);
    cols[0][d] = Complex64::new(s, 0.0);
    cols[1][0] = Complex64::new(s, 0.0);
    cols[1][d] = Complex64::new(-s, 0.0);
    cols[2][2 * d] = Complex64::new(1.0, 0.0);
    cols
}

/// Samples a deterministic random attack with ancilla dimension `d`.
///
/// Three orthonormal columns in the message (x) ancilla space are built by
/// Gram-Schmidt on seeded Gaussian complex vectors. With `bias = Some(b)`
/// each raw vector is mixed as `(1 - b) * random + b * honest` before
/// orthonormalization and the source amplitudes are pinned to the honest
/// ones, so `b = 1` reproduces the honest attack embedded in dimension
/// `d`. Without a bias the amplitudes are drawn uniformly from the
/// positive octant of the unit sphere.
pub fn random_attack(d: usize, seed: u64, bias: Option<f64>) -> Result<AttackSpec> {
    if d == 0 {
        return Err(Error::InvalidParameter("ancilla dimension d must be >= 1".into()));
    }
    if let Some(b) = bias {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidParameter(format!("bias = {b} not in [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (alpha, beta, gamma) = match bias {
        Some(_) => (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0),
        None => {
            let raw: [f64; 3] = [
                rng.sample::<f64, _>(StandardNormal).abs(),
                rng.sample::<f64, _>(StandardNormal).abs(),
                rng.sample::<f64, _>(StandardNormal).abs(),
            ];
            let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
            (raw[0] / norm, raw[1] / norm, raw[2] / norm)
        }
    };

    let honest = honest_columns(d);
    let mut columns: Vec<Vec<Complex64>> = Vec::with_capacity(3);
    for honest_col in &honest {
        let mut retries = 0;
        loop {
            let mut v = sample_vector(&mut rng, 3 * d);
            if let Some(b) = bias {
                for (vi, hi) in v.iter_mut().zip(honest_col) {
                    *vi = (1.0 - b) * *vi + b * hi;
                }
            }
            for col in &columns {
                let proj = inner(col, &v);
                for (vi, ci) in v.iter_mut().zip(col) {
                    *vi -= proj * ci;
                }
            }
            let norm = norm_sq(&v).sqrt();
            if norm > GRAM_SCHMIDT_TOL {
                for vi in v.iter_mut() {
                    *vi /= norm;
                }
                columns.push(v);
                break;
            }
            retries += 1;
            if retries >= GRAM_SCHMIDT_RETRIES {
                return Err(Error::DegenerateSample(retries));
            }
        }
    }

    let split = |col: &Vec<Complex64>| -> [Vec<Complex64>; 3] {
        [col[..d].to_vec(), col[d..2 * d].to_vec(), col[2 * d..].to_vec()]
    };
    let [e0, e1, ev] = split(&columns[0]);
    let [f0, f1, fv] = split(&columns[1]);
    let [g0, g1, gv] = split(&columns[2]);
    let spec = AttackSpec { alpha, beta, gamma, d, e0, e1, ev, f0, f1, fv, g0, g1, gv };
    debug_assert!(validate_attack(&spec).is_empty());
    Ok(spec)
}

/// The conditional state of one (action pair, message) branch, labelled by
/// the pair in effect and the announced message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionalState {
    /// Both reflect, message 0: `alpha e0 + beta f0 + gamma g0`.
    Rr0,
    /// Both reflect, message 1.
    Rr1,
    /// Alice measures (no detection), message 0: `beta f0 + gamma g0`.
    Mr0,
    /// Alice measures, message 1.
    Mr1,
    /// Bob measures (no detection), message 0: `alpha e0 + gamma g0`.
    Rm0,
    /// Bob measures, message 1.
    Rm1,
    /// Both measure (no detection), message 0: the bare `g0`.
    Mm0,
    /// Both measure, message 1.
    Mm1,
}

impl ConditionalState {
    pub const ALL: [Self; 8] = [
        Self::Rr0,
        Self::Rr1,
        Self::Mr0,
        Self::Mr1,
        Self::Rm0,
        Self::Rm1,
        Self::Mm0,
        Self::Mm1,
    ];

    fn index(self) -> usize {
        match self {
            Self::Rr0 => 0,
            Self::Rr1 => 1,
            Self::Mr0 => 2,
            Self::Mr1 => 3,
            Self::Rm0 => 4,
            Self::Rm1 => 5,
            Self::Mm0 => 6,
            Self::Mm1 => 7,
        }
    }
}

/// The eight conditional-state vectors of an attack, with their norms and
/// pairwise overlaps.
#[derive(Clone, Debug)]
pub struct DerivedVectors {
    vectors: [Vec<Complex64>; 8],
}

impl DerivedVectors {
    pub fn vector(&self, s: ConditionalState) -> &[Complex64] {
        &self.vectors[s.index()]
    }

    /// `<x|x>` of a conditional state.
    pub fn norm(&self, s: ConditionalState) -> f64 {
        norm_sq(self.vector(s))
    }

    /// Complex overlap `<a|b>`.
    pub fn overlap(&self, a: ConditionalState, b: ConditionalState) -> Complex64 {
        inner(self.vector(a), self.vector(b))
    }
}

/// Forms the conditional-state vectors from an attack spec.
pub fn derived_vectors(spec: &AttackSpec) -> DerivedVectors {
    let combine = |parts: &[(f64, &Vec<Complex64>)]| -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); spec.d];
        for (coeff, v) in parts {
            for (o, x) in out.iter_mut().zip(v.iter()) {
                *o += *coeff * x;
            }
        }
        out
    };
    let (a, b, c) = (spec.alpha, spec.beta, spec.gamma);
    DerivedVectors {
        vectors: [
            combine(&[(a, &spec.e0), (b, &spec.f0), (c, &spec.g0)]),
            combine(&[(a, &spec.e1), (b, &spec.f1), (c, &spec.g1)]),
            combine(&[(b, &spec.f0), (c, &spec.g0)]),
            combine(&[(b, &spec.f1), (c, &spec.g1)]),
            combine(&[(a, &spec.e0), (c, &spec.g0)]),
            combine(&[(a, &spec.e1), (c, &spec.g1)]),
            spec.g0.clone(),
            spec.g1.clone(),
        ],
    }
}

/// Maps conditional-state norms to the observable record.
pub fn observables_from_attack(spec: &AttackSpec) -> Observables {
    let dv = derived_vectors(spec);
    Observables {
        p1_rr: dv.norm(ConditionalState::Rr1),
        p0_rr: dv.norm(ConditionalState::Rr0),
        p1_mr: dv.norm(ConditionalState::Mr1),
        p0_mr: dv.norm(ConditionalState::Mr0),
        p1_rm: dv.norm(ConditionalState::Rm1),
        p0_rm: dv.norm(ConditionalState::Rm0),
        p1_mm: dv.norm(ConditionalState::Mm1),
        p0_mm: dv.norm(ConditionalState::Mm0),
        alpha2: spec.alpha * spec.alpha,
        beta2: spec.beta * spec.beta,
        gamma2: spec.gamma * spec.gamma,
    }
}

/// Exact overlap magnitudes of an attack, in the shape the entropy bounds
/// consume.
pub fn exact_inner_product_bounds(dv: &DerivedVectors) -> InnerProductBounds {
    use ConditionalState::*;
    InnerProductBounds {
        mr1_rm1: dv.overlap(Mr1, Rm1).norm(),
        mr0_rm0: dv.overlap(Mr0, Rm0).norm(),
        rr0_mm0: Some(dv.overlap(Rr0, Mm0).norm()),
        rr1_mm1: Some(dv.overlap(Rr1, Mm1).norm()),
    }
}

/// The state occupying the second-sub-round register (classical message
/// plus ancilla) when only one sub-round is used. The adversary controls
/// it; components are indexed by the classical message.
#[derive(Clone, Debug, PartialEq)]
pub struct IdleRegister {
    pub msg0: Vec<Complex64>,
    pub msg1: Vec<Complex64>,
    pub msgv: Vec<Complex64>,
}

impl IdleRegister {
    /// The default: a vacuum-message state with a blank ancilla, orthogonal
    /// to every "0"/"1"-message branch — the adversary's
    /// information-maximizing choice, so entropies computed with it are
    /// adversary-pessimal.
    pub fn orthogonal(d: usize) -> Self {
        let mut msgv = vec![Complex64::default(); d];
        msgv[0] = Complex64::new(1.0, 0.0);
        Self {
            msg0: vec![Complex64::default(); d],
            msg1: vec![Complex64::default(); d],
            msgv,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, v) in [("msg0", &self.msg0), ("msg1", &self.msg1), ("msgv", &self.msgv)] {
            if v.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "idle register component {name} has length {} != d = {d}",
                    v.len()
                )));
            }
        }
        let norm = norm_sq(&self.msg0) + norm_sq(&self.msg1) + norm_sq(&self.msgv);
        if (norm - 1.0).abs() > ISOMETRY_TOL {
            return Err(Error::InvalidParameter(format!(
                "idle register norm {norm} != 1"
            )));
        }
        Ok(())
    }

    fn component(&self, msg: usize) -> &[Complex64] {
        match msg {
            0 => &self.msg0,
            1 => &self.msg1,
            _ => &self.msgv,
        }
    }

    fn self_overlap(&self) -> f64 {
        norm_sq(&self.msg0) + norm_sq(&self.msg1) + norm_sq(&self.msgv)
    }
}

/// One unnormalized pure branch of the accepted-round state: sub-round-1
/// message and conditional state, plus either the idle register or the
/// sub-round-2 message and conditional state. Product states are handled
/// through overlap multiplication; no tensor-product vectors are formed.
struct Branch<'a> {
    msg1: u8,
    first: &'a [Complex64],
    tail: Tail<'a>,
}

enum Tail<'a> {
    Idle,
    Msg(u8, &'a [Complex64]),
}

fn branch_overlap(a: &Branch, b: &Branch, idle: &IdleRegister) -> Complex64 {
    if a.msg1 != b.msg1 {
        return Complex64::default();
    }
    let first = inner(a.first, b.first);
    let tail = match (&a.tail, &b.tail) {
        (Tail::Idle, Tail::Idle) => Complex64::new(idle.self_overlap(), 0.0),
        (Tail::Idle, Tail::Msg(m, v)) => inner(idle.component(*m as usize), v),
        (Tail::Msg(m, v), Tail::Idle) => inner(v, idle.component(*m as usize)),
        (Tail::Msg(m, v), Tail::Msg(m2, v2)) => {
            if m == m2 {
                inner(v, v2)
            } else {
                Complex64::default()
            }
        }
    };
    first * tail
}

/// The six key-bit branches for one raw-key value. `swap = false` yields
/// the A = 0 family; `swap = true` exchanges the single-measure states and
/// the reflect/measure pair states, yielding A = 1.
fn branches(dv: &DerivedVectors, swap: bool) -> [Branch<'_>; 6] {
    use ConditionalState::*;
    let (one_msg1, one_msg0, other_msg0, other_msg1) = if swap {
        (Mr1, Mr0, Rm0, Rm1)
    } else {
        (Rm1, Rm0, Mr0, Mr1)
    };
    let (pair_msg1, pair_msg0, mate_msg0, mate_msg1) = if swap {
        (Mm1, Mm0, Rr0, Rr1)
    } else {
        (Rr1, Rr0, Mm0, Mm1)
    };
    [
        Branch { msg1: 1, first: dv.vector(one_msg1), tail: Tail::Idle },
        Branch { msg1: 0, first: dv.vector(one_msg0), tail: Tail::Msg(0, dv.vector(other_msg0)) },
        Branch { msg1: 0, first: dv.vector(one_msg0), tail: Tail::Msg(1, dv.vector(other_msg1)) },
        Branch { msg1: 1, first: dv.vector(pair_msg1), tail: Tail::Idle },
        Branch { msg1: 0, first: dv.vector(pair_msg0), tail: Tail::Msg(0, dv.vector(mate_msg0)) },
        Branch { msg1: 0, first: dv.vector(pair_msg0), tail: Tail::Msg(1, dv.vector(mate_msg1)) },
    ]
}

fn gram_matrix(rows: &[&Branch], cols: &[&Branch], idle: &IdleRegister) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| branch_overlap(rows[i], cols[j], idle))
}

/// Eigenvalues of a Hermitian Gram matrix.
fn hermitian_eigenvalues(g: DMatrix<Complex64>) -> Vec<f64> {
    if g.is_empty() {
        return Vec::new();
    }
    g.symmetric_eigen().eigenvalues.iter().cloned().collect()
}

fn spectrum_entropy(eigenvalues: &[f64], n: f64) -> f64 {
    eigenvalues
        .iter()
        .map(|&lambda| lambda / n)
        .filter(|&p| p > EIGENVALUE_CUTOFF)
        .map(|p| -p * p.log2())
        .sum()
}

/// Exact `H(A|E)` of the accepted-round state, with the default
/// (orthogonal) idle register.
pub fn exact_conditional_entropy(spec: &AttackSpec) -> Result<f64> {
    exact_conditional_entropy_with(spec, &IdleRegister::orthogonal(spec.d))
}

/// Exact `H(A|E) = H(AE) - H(E)` in bits.
///
/// The twelve branch states are never materialized in the product space:
/// the eigenvalues of each mixture equal those of the Gram matrix of
/// pairwise overlaps, which the classical-message registers keep block
/// sparse for the default idle register.
pub fn exact_conditional_entropy_with(spec: &AttackSpec, idle: &IdleRegister) -> Result<f64> {
    idle.validate(spec.d)?;
    let dv = derived_vectors(spec);
    let a0 = branches(&dv, false);
    let a1 = branches(&dv, true);
    let a0_refs: Vec<&Branch> = a0.iter().collect();
    let a1_refs: Vec<&Branch> = a1.iter().collect();
    let all_refs: Vec<&Branch> = a0.iter().chain(a1.iter()).collect();

    let g_full = gram_matrix(&all_refs, &all_refs, idle);
    let n: f64 = g_full.diagonal().iter().map(|c| c.re).sum();
    if n <= 0.0 {
        return Err(Error::NoAcceptedRounds);
    }

    let mut joint_eigs = hermitian_eigenvalues(gram_matrix(&a0_refs, &a0_refs, idle));
    joint_eigs.extend(hermitian_eigenvalues(gram_matrix(&a1_refs, &a1_refs, idle)));
    let marginal_eigs = hermitian_eigenvalues(g_full);

    Ok(spectrum_entropy(&joint_eigs, n) - spectrum_entropy(&marginal_eigs, n))
}

/// Side-by-side comparison of the exact entropy with the bounds evaluated
/// from the same attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundnessReport {
    /// Exact `H(A|E)` from the Gram-eigenvalue computation.
    pub exact: f64,
    /// 6-term bound evaluated with the exact overlap magnitudes.
    pub bound_6term_exact: f64,
    /// 3-term bound with exact overlaps.
    pub bound_3term_exact: f64,
    /// 3-term bound with observable-estimated overlaps (the deployable
    /// pipeline).
    pub bound_3term_estimated: f64,
    pub sound_6term_exact: bool,
    pub sound_3term_exact: bool,
    pub sound_3term_estimated: bool,
    /// Whether the observable-estimated overlap bounds stay at or below
    /// the exact overlap magnitudes.
    pub printed_overlap_bounds_valid: bool,
}

/// Soundness margin used by the report flags.
pub const SOUNDNESS_TOL: f64 = 1e-9;

/// Evaluates the exact entropy and every bound variant for one attack.
pub fn soundness_report(spec: &AttackSpec) -> Result<SoundnessReport> {
    let exact = exact_conditional_entropy(spec)?;
    let dv = derived_vectors(spec);
    let obs = observables_from_attack(spec);
    let exact_ipb = exact_inner_product_bounds(&dv);
    let bound6 = entropy_lower_bound_6term(&obs, &exact_ipb)?.value;
    let bound3 = entropy_lower_bound_3term(&obs, &exact_ipb)?.value;
    let estimated_ipb = InnerProductBounds::from_observables(&obs, OverlapBoundVariant::Printed);
    let bound3_est = entropy_lower_bound_3term(&obs, &estimated_ipb)?.value;
    Ok(SoundnessReport {
        exact,
        bound_6term_exact: bound6,
        bound_3term_exact: bound3,
        bound_3term_estimated: bound3_est,
        sound_6term_exact: bound6 <= exact + SOUNDNESS_TOL,
        sound_3term_exact: bound3 <= exact + SOUNDNESS_TOL,
        sound_3term_estimated: bound3_est <= exact + SOUNDNESS_TOL,
        printed_overlap_bounds_valid: bound_mr1_rm1(&obs) <= exact_ipb.mr1_rm1 + SOUNDNESS_TOL
            && bound_mr0_rm0(&obs, OverlapBoundVariant::Printed)
                <= exact_ipb.mr0_rm0 + SOUNDNESS_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{observables_from_channel, ChannelParams};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn honest_attack_is_valid_and_calibrated() {
        let spec = honest_attack(0.0).unwrap();
        assert!(validate_attack(&spec).is_empty());
        let dv = derived_vectors(&spec);
        assert!(close(dv.norm(ConditionalState::Rr1), 0.0, 1e-15));
        assert!(close(dv.norm(ConditionalState::Rr0), 1.0, 1e-15));
        assert!(close(dv.norm(ConditionalState::Mr1), 0.25, 1e-15));
        assert!(close(dv.norm(ConditionalState::Rm1), 0.25, 1e-15));
        assert_eq!(dv.norm(ConditionalState::Mm1), 0.0);
        assert!(close(
            dv.overlap(ConditionalState::Mr1, ConditionalState::Rm1).norm(),
            0.25,
            1e-15
        ));
        assert!(honest_attack(0.1).is_err());
    }

    #[test]
    fn honest_observables_match_ideal_channel() {
        let from_attack = observables_from_attack(&honest_attack(0.0).unwrap());
        let from_channel =
            observables_from_channel(&ChannelParams { phi: 0.0, p_l: 0.0, p_d: 0.0 }).unwrap();
        for (a, c) in [
            (from_attack.p1_rr, from_channel.p1_rr),
            (from_attack.p0_rr, from_channel.p0_rr),
            (from_attack.p1_mr, from_channel.p1_mr),
            (from_attack.p0_mr, from_channel.p0_mr),
            (from_attack.p1_rm, from_channel.p1_rm),
            (from_attack.p0_rm, from_channel.p0_rm),
            (from_attack.p1_mm, from_channel.p1_mm),
            (from_attack.p0_mm, from_channel.p0_mm),
            (from_attack.alpha2, from_channel.alpha2),
            (from_attack.beta2, from_channel.beta2),
            (from_attack.gamma2, from_channel.gamma2),
        ] {
            assert!(close(a, c, 1e-12));
        }
    }

    #[test]
    fn phase_noisy_matches_symmetric_channel() {
        for phi in [0.01f64, 0.05, 0.2] {
            let theta = 2.0 * phi.sqrt().asin();
            let spec = phase_noisy_attack(theta);
            assert!(validate_attack(&spec).is_empty());
            let obs = observables_from_attack(&spec);
            let expected =
                observables_from_channel(&ChannelParams { phi, p_l: 0.0, p_d: 0.0 }).unwrap();
            assert!(close(obs.p1_rr, expected.p1_rr, 1e-12));
            assert!(close(obs.p0_rr, expected.p0_rr, 1e-12));
            assert!(close(obs.p1_mr, expected.p1_mr, 1e-12));
            assert!(close(obs.p0_rm, expected.p0_rm, 1e-12));
            assert!(obs.validate().is_ok());
        }
    }

    #[test]
    fn broken_column_is_reported() {
        let mut spec = honest_attack(0.0).unwrap();
        let scale = 0.9f64.sqrt();
        for v in [&mut spec.e0, &mut spec.e1, &mut spec.ev] {
            for x in v.iter_mut() {
                *x *= scale;
            }
        }
        let violations = validate_attack(&spec);
        // Scaling preserves orthogonality, so only the norm constraint fires.
        assert_eq!(violations.len(), 1);
        assert!(violations[0].constraint.contains("e-column normalization"));
        assert!(close(violations[0].residual, 0.1, 1e-12));
    }

    #[test]
    fn random_attacks_are_valid_and_deterministic() {
        for d in 1..=4 {
            for seed in 0..8 {
                let spec = random_attack(d, seed, None).unwrap();
                assert!(validate_attack(&spec).is_empty(), "d={d} seed={seed}");
                assert!(observables_from_attack(&spec).validate().is_ok());
            }
        }
        let a = random_attack(3, 7, None).unwrap();
        let b = random_attack(3, 7, None).unwrap();
        assert_eq!(a, b);
        let c = random_attack(3, 8, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_bias_reproduces_the_honest_attack() {
        let spec = random_attack(3, 1, Some(1.0)).unwrap();
        assert!(validate_attack(&spec).is_empty());
        let obs = observables_from_attack(&spec);
        let ideal =
            observables_from_channel(&ChannelParams { phi: 0.0, p_l: 0.0, p_d: 0.0 }).unwrap();
        assert!(close(obs.p1_rr, ideal.p1_rr, 1e-12));
        assert!(close(obs.p0_rr, ideal.p0_rr, 1e-12));
        assert!(close(obs.p1_mr, ideal.p1_mr, 1e-12));
        assert!(close(obs.gamma2, 0.0, 1e-12));
        assert!(close(exact_conditional_entropy(&spec).unwrap(), 1.0, 1e-9));
    }

    #[test]
    fn json_round_trip() {
        let spec = random_attack(2, 11, None).unwrap();
        let text = spec.to_json();
        let back = AttackSpec::from_json(&text).unwrap();
        assert_eq!(spec, back);
        assert!(AttackSpec::from_json("{not json").is_err());
    }

    #[test]
    fn exact_entropy_honest_is_one() {
        let spec = honest_attack(0.0).unwrap();
        assert!(close(exact_conditional_entropy(&spec).unwrap(), 1.0, 1e-9));
    }

    #[test]
    fn exact_entropy_uninformative_attack_is_one() {
        // Source always sends vacuum; the isometry maps the vacuum branch
        // to message "0" with a fixed ancilla. Both raw-key values produce
        // identical branch families, so the ancilla carries no key
        // information.
        let zero = Complex64::default();
        let one = Complex64::new(1.0, 0.0);
        let spec = AttackSpec {
            alpha: 0.0,
            beta: 0.0,
            gamma: 1.0,
            d: 1,
            e0: vec![zero],
            e1: vec![one],
            ev: vec![zero],
            f0: vec![zero],
            f1: vec![zero],
            fv: vec![one],
            g0: vec![one],
            g1: vec![zero],
            gv: vec![zero],
        };
        assert!(validate_attack(&spec).is_empty());
        assert!(close(exact_conditional_entropy(&spec).unwrap(), 1.0, 1e-9));
    }

    #[test]
    fn exact_entropy_distinguishable_families_is_zero() {
        // alpha = 1 with the honest isometry: only the A = 0 family
        // survives, so the key value is determined.
        let mut spec = honest_attack(0.0).unwrap();
        spec.alpha = 1.0;
        spec.beta = 0.0;
        assert!(close(exact_conditional_entropy(&spec).unwrap(), 0.0, 1e-9));
    }

    #[test]
    fn exact_entropy_errors_without_accepted_rounds() {
        // Vacuum source with the honest isometry: every branch is the
        // "vac" message, nothing is ever accepted.
        let mut spec = honest_attack(0.0).unwrap();
        spec.alpha = 0.0;
        spec.beta = 0.0;
        spec.gamma = 1.0;
        assert!(matches!(exact_conditional_entropy(&spec), Err(Error::NoAcceptedRounds)));
    }

    #[test]
    fn gram_spectra_are_nonnegative_and_sum_to_the_trace() {
        for seed in 0..12 {
            let spec = random_attack(1 + (seed as usize % 4), seed, None).unwrap();
            let dv = derived_vectors(&spec);
            let idle = IdleRegister::orthogonal(spec.d);
            let a0 = branches(&dv, false);
            let a1 = branches(&dv, true);
            let all: Vec<&Branch> = a0.iter().chain(a1.iter()).collect();
            let g = gram_matrix(&all, &all, &idle);
            let trace: f64 = g.diagonal().iter().map(|c| c.re).sum();
            let eigs = hermitian_eigenvalues(g);
            let sum: f64 = eigs.iter().sum();
            assert!(close(sum, trace, 1e-10));
            for lambda in eigs {
                assert!(lambda >= -1e-10);
            }
        }
    }

    #[test]
    fn soundness_report_honest_point() {
        let report = soundness_report(&honest_attack(0.0).unwrap()).unwrap();
        assert!(close(report.exact, 1.0, 1e-9));
        assert!(close(report.bound_6term_exact, 1.0, 1e-9));
        assert!(close(report.bound_3term_exact, 1.0, 1e-9));
        assert!(report.sound_6term_exact);
        assert!(report.sound_3term_exact);
        assert!(report.sound_3term_estimated);
        assert!(report.printed_overlap_bounds_valid);
    }

    /// Independent oracle: materialize the full product-space density
    /// operator and compare its entropy against the Gram shortcut.
    mod full_space {
        use super::*;

        fn full_space_entropy(spec: &AttackSpec, idle: &IdleRegister) -> f64 {
            let d = spec.d;
            let dim1 = 3 * d;
            let dim2 = 3 * d;
            let dv = derived_vectors(spec);

            let idle_vec = |out: &mut Vec<Complex64>| {
                for (m, comp) in
                    [(0usize, &idle.msg0), (1, &idle.msg1), (2, &idle.msgv)]
                {
                    for (l, x) in comp.iter().enumerate() {
                        out[m * d + l] = *x;
                    }
                }
            };

            let ket = |msg1: u8, first: &[Complex64], tail: &Tail| -> Vec<Complex64> {
                let mut second = vec![Complex64::default(); dim2];
                match tail {
                    Tail::Idle => idle_vec(&mut second),
                    Tail::Msg(m, v) => {
                        for (l, x) in v.iter().enumerate() {
                            second[*m as usize * d + l] = *x;
                        }
                    }
                }
                let mut out = vec![Complex64::default(); dim1 * dim2];
                for (k, a) in first.iter().enumerate() {
                    for (j, b) in second.iter().enumerate() {
                        out[(msg1 as usize * d + k) * dim2 + j] = a * b;
                    }
                }
                out
            };

            let mixture = |swap: bool| -> DMatrix<Complex64> {
                let mut rho = DMatrix::from_element(dim1 * dim2, dim1 * dim2, Complex64::default());
                for b in branches(&dv, swap) {
                    let v = ket(b.msg1, b.first, &b.tail);
                    for i in 0..v.len() {
                        for j in 0..v.len() {
                            rho[(i, j)] += v[i] * v[j].conj();
                        }
                    }
                }
                rho
            };

            let rho0 = mixture(false);
            let rho1 = mixture(true);
            let n = (rho0.diagonal().iter().map(|c| c.re).sum::<f64>())
                + (rho1.diagonal().iter().map(|c| c.re).sum::<f64>());
            let ent = |m: DMatrix<Complex64>| -> f64 {
                spectrum_entropy(&hermitian_eigenvalues(m), n)
            };
            let h_joint = ent(rho0.clone()) + ent(rho1.clone());
            let h_marginal = ent(rho0 + rho1);
            h_joint - h_marginal
        }

        #[test]
        fn gram_route_matches_full_space_route() {
            for (d, seed) in [(1usize, 3u64), (1, 4), (2, 5), (2, 6)] {
                let spec = random_attack(d, seed, None).unwrap();
                let idle = IdleRegister::orthogonal(d);
                let via_gram = exact_conditional_entropy_with(&spec, &idle).unwrap();
                let via_full = full_space_entropy(&spec, &idle);
                assert!(
                    close(via_gram, via_full, 1e-9),
                    "d={d} seed={seed}: {via_gram} vs {via_full}"
                );
            }
        }

        #[test]
        fn custom_idle_register_agrees_across_routes() {
            let spec = random_attack(2, 9, None).unwrap();
            // Idle state leaking into the message-0 branch subspace.
            let mut idle = IdleRegister::orthogonal(2);
            idle.msg0 = vec![Complex64::new(0.6, 0.0), Complex64::default()];
            idle.msgv = vec![Complex64::new(0.8, 0.0), Complex64::default()];
            idle.validate(2).unwrap();
            let via_gram = exact_conditional_entropy_with(&spec, &idle).unwrap();
            let via_full = full_space_entropy(&spec, &idle);
            assert!(close(via_gram, via_full, 1e-9), "{via_gram} vs {via_full}");
            assert!(idle.validate(1).is_err());
        }
    }
}

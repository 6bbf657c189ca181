//! The key-rate pipeline.
//!
//! From an [`Observables`] record this module derives observable lower
//! bounds on the inner products between conditional states, assembles the
//! 3-term (default) or 6-term entropy lower bound, computes `H(A|B)` from
//! the joint raw-key distribution, and reports the Devetak-Winter rate
//! `r = H(A|E) - H(A|B)` together with the effective per-photon rate
//! `r' = N / (4 (1 + p0)) * r` and baselines (the one-sub-round protocol
//! and BB84).
//!
//! Naming ties overlaps to the action pairs of [`Observables`]: `mr1_rm1`
//! is a lower bound on the overlap magnitude between the message-1
//! conditional states of the (Measure, Reflect) and (Reflect, Measure)
//! branches — the quantities written `|<s_1|t_1>|` in the usual
//! derivation.

use serde::{Deserialize, Serialize};

use crate::channel::{normalization, observables_from_channel, subround2_probability, ChannelParams, Observables};
use crate::entropy::{binary_entropy, term_contribution, EntropyTerm};
use crate::{Error, Result};

/// Which entropy bound to report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundMode {
    /// Three terms: the same-message and crossed sub-round-2 pairs of the
    /// opposite-action blocks. The terms whose overlaps admit no
    /// non-trivial observable bound are dropped.
    #[default]
    ThreeTerm,
    /// All six terms; the overlaps of terms 4-6 default to zero (the
    /// adversary-optimal choice) unless supplied.
    SixTerm,
}

/// Which form of the message-0 overlap bound to use.
///
/// The derivation of the message-0 bound mixes message-1 observables into
/// the correction terms; that printed form is the default. The
/// index-consistent alternative substitutes the message-0 observables (and
/// takes the absolute value of the leading difference, without which the
/// expression is vacuous at the ideal point). The two coincide on
/// lossless, dark-count-free channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapBoundVariant {
    #[default]
    Printed,
    IndexConsistent,
}

/// Lower bounds on the overlap magnitudes between conditional states,
/// estimated from observables (or exact, when derived from an explicit
/// attack).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductBounds {
    /// Bound on `|<mr1|rm1>|` (message-1 single-measure states).
    pub mr1_rm1: f64,
    /// Bound on `|<mr0|rm0>|` (message-0 single-measure states).
    pub mr0_rm0: f64,
    /// Bound on `|<rr0|mm0>|`; no observable bound exists, absent by
    /// default (treated as zero, the adversary-optimal value).
    pub rr0_mm0: Option<f64>,
    /// Bound on `|<rr1|mm1>|`; absent by default.
    pub rr1_mm1: Option<f64>,
}

impl InnerProductBounds {
    /// Observable-estimated bounds for the given variant; the unbounded
    /// overlaps are left absent.
    pub fn from_observables(obs: &Observables, variant: OverlapBoundVariant) -> Self {
        Self {
            mr1_rm1: bound_mr1_rm1(obs),
            mr0_rm0: bound_mr0_rm0(obs, variant),
            rr0_mm0: None,
            rr1_mm1: None,
        }
    }
}

fn clamp_to_cap(value: f64, norm_a: f64, norm_b: f64) -> f64 {
    value.clamp(0.0, (norm_a * norm_b).sqrt())
}

/// Lower bound on `|<mr1|rm1>|` from observables:
///
/// ```text
/// (p1_rm + p1_mr - p1_rr)/2 - 3/2 p1_mm - (alpha + beta) gamma sqrt(p1_mm)
/// ```
///
/// clamped into `[0, sqrt(p1_mr * p1_rm)]`.
pub fn bound_mr1_rm1(obs: &Observables) -> f64 {
    let (alpha, beta, gamma) = (obs.alpha2.sqrt(), obs.beta2.sqrt(), obs.gamma2.sqrt());
    let raw = (obs.p1_rm + obs.p1_mr - obs.p1_rr) / 2.0
        - 1.5 * obs.p1_mm
        - (alpha + beta) * gamma * obs.p1_mm.sqrt();
    clamp_to_cap(raw, obs.p1_mr, obs.p1_rm)
}

/// Lower bound on `|<mr0|rm0>|` from observables, clamped into
/// `[0, sqrt(p0_mr * p0_rm)]`. See [`OverlapBoundVariant`] for the two
/// forms of the correction terms.
pub fn bound_mr0_rm0(obs: &Observables, variant: OverlapBoundVariant) -> f64 {
    let (alpha, beta, gamma) = (obs.alpha2.sqrt(), obs.beta2.sqrt(), obs.gamma2.sqrt());
    let raw = match variant {
        OverlapBoundVariant::Printed => {
            (obs.p0_rm + obs.p0_mr - obs.p1_rr) / 2.0
                - 1.5 * obs.p1_mm
                - (alpha + beta) * gamma * obs.p1_mm.sqrt()
        }
        OverlapBoundVariant::IndexConsistent => {
            (obs.p0_rm + obs.p0_mr - obs.p0_rr).abs() / 2.0
                - 1.5 * obs.p0_mm
                - (alpha + beta) * gamma * obs.p0_mm.sqrt()
        }
    };
    clamp_to_cap(raw, obs.p0_mr, obs.p0_rm)
}

/// Joint raw-key distribution `p(a, b)` over accepted rounds, read off the
/// four action-pair blocks (rows: a = 0, 1; columns: b = 0, 1).
pub fn joint_distribution(obs: &Observables) -> Result<[[f64; 2]; 2]> {
    let n = normalization(obs);
    if n <= 0.0 {
        return Err(Error::NoAcceptedRounds);
    }
    // (Reflect, Measure): keys (0, 0); (Measure, Reflect): (1, 1);
    // (Reflect, Reflect): (0, 1); (Measure, Measure): (1, 0).
    let p00 = (obs.p1_rm + obs.p0_rm * obs.p0_mr + obs.p0_rm * obs.p1_mr) / n;
    let p11 = (obs.p1_mr + obs.p0_mr * obs.p0_rm + obs.p0_mr * obs.p1_rm) / n;
    let p01 = (obs.p1_rr + obs.p0_rr * obs.p0_mm + obs.p0_rr * obs.p1_mm) / n;
    let p10 = (obs.p1_mm + obs.p0_mm * obs.p0_rr + obs.p0_mm * obs.p1_rr) / n;
    Ok([[p00, p01], [p10, p11]])
}

fn shannon<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// `H(A|B) = H(AB) - H(B)` in bits, over the joint raw-key distribution.
pub fn conditional_entropy_ab(obs: &Observables) -> Result<f64> {
    let p = joint_distribution(obs)?;
    let h_ab = shannon([p[0][0], p[0][1], p[1][0], p[1][1]]);
    let h_b = shannon([p[0][0] + p[1][0], p[0][1] + p[1][1]]);
    Ok(h_ab - h_b)
}

/// One labelled summand of the entropy bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub label: String,
    /// `(norm0 + norm1) / N`.
    pub weight: f64,
    /// Floored summand, in bits.
    pub contribution: f64,
}

/// An entropy lower bound together with its per-term breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBound {
    pub value: f64,
    pub terms: Vec<TermContribution>,
}

fn labelled_terms(
    obs: &Observables,
    ipb: &InnerProductBounds,
    mode: BoundMode,
) -> Vec<(&'static str, EntropyTerm)> {
    let mut terms = vec![
        // Opposite-action blocks: (R,M) paired with (M,R).
        (
            "agree_sub1_msg1",
            EntropyTerm::clamped(obs.p1_rm, obs.p1_mr, ipb.mr1_rm1),
        ),
        (
            "agree_sub2_msg0",
            EntropyTerm::clamped(
                obs.p0_rm * obs.p0_mr,
                obs.p0_mr * obs.p0_rm,
                ipb.mr0_rm0 * ipb.mr0_rm0,
            ),
        ),
        (
            "agree_sub2_msg1",
            EntropyTerm::clamped(
                obs.p0_rm * obs.p1_mr,
                obs.p0_mr * obs.p1_rm,
                ipb.mr0_rm0 * ipb.mr1_rm1,
            ),
        ),
    ];
    if mode == BoundMode::SixTerm {
        let rr0_mm0 = ipb.rr0_mm0.unwrap_or(0.0);
        let rr1_mm1 = ipb.rr1_mm1.unwrap_or(0.0);
        // Same-action (error) blocks: (R,R) paired with (M,M).
        terms.push((
            "error_sub1_msg1",
            EntropyTerm::clamped(obs.p1_rr, obs.p1_mm, rr1_mm1),
        ));
        terms.push((
            "error_sub2_msg0",
            EntropyTerm::clamped(
                obs.p0_rr * obs.p0_mm,
                obs.p0_mm * obs.p0_rr,
                rr0_mm0 * rr0_mm0,
            ),
        ));
        terms.push((
            "error_sub2_msg1",
            EntropyTerm::clamped(
                obs.p0_rr * obs.p1_mm,
                obs.p0_mm * obs.p1_rr,
                rr0_mm0 * rr1_mm1,
            ),
        ));
    }
    terms
}

fn entropy_lower_bound(
    obs: &Observables,
    ipb: &InnerProductBounds,
    mode: BoundMode,
) -> Result<EntropyBound> {
    let n = normalization(obs);
    if n <= 0.0 {
        return Err(Error::InvalidNormalization(n));
    }
    let mut value = 0.0;
    let mut terms = Vec::new();
    for (label, term) in labelled_terms(obs, ipb, mode) {
        let contribution = term_contribution(&term, n);
        value += contribution;
        terms.push(TermContribution {
            label: label.to_string(),
            weight: term.total() / n,
            contribution,
        });
    }
    Ok(EntropyBound { value, terms })
}

/// The 3-term entropy lower bound (default reporting mode).
pub fn entropy_lower_bound_3term(
    obs: &Observables,
    ipb: &InnerProductBounds,
) -> Result<EntropyBound> {
    entropy_lower_bound(obs, ipb, BoundMode::ThreeTerm)
}

/// The full 6-term entropy lower bound. Absent same-action overlaps
/// default to zero, in which case terms 4-6 contribute nothing and the
/// result equals the 3-term bound.
pub fn entropy_lower_bound_6term(
    obs: &Observables,
    ipb: &InnerProductBounds,
) -> Result<EntropyBound> {
    entropy_lower_bound(obs, ipb, BoundMode::SixTerm)
}

/// Baseline rates for comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// One-sub-round protocol rate, when its acceptance is nonzero.
    pub r_old: Option<f64>,
    /// One-sub-round protocol effective rate.
    pub r_eff_old: Option<f64>,
    /// BB84 rate `1 - 2 h(phi)`, when a phase error rate applies.
    pub bb84: Option<f64>,
}

/// Complete output of one key-rate evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Acceptance normalization `N`.
    pub n: f64,
    /// Round acceptance probability `N / 4`.
    pub p_acc: f64,
    /// Probability that sub-round 2 is triggered.
    pub p0: f64,
    /// Entropy lower bound `H(A|E)` in bits.
    pub h_ae_lower: f64,
    /// `H(A|B)` in bits.
    pub h_ab: f64,
    /// Key rate `r = H(A|E) - H(A|B)` in secret bits per raw-key bit
    /// (reported as computed; may be negative).
    pub r: f64,
    /// Effective rate `r' = N / (4 (1 + p0)) r` in secret bits per photon.
    pub r_eff: f64,
    pub term_breakdown: Vec<TermContribution>,
    pub baselines: Baselines,
}

/// Runs the full pipeline on arbitrary observables.
///
/// `p0` must be supplied by the caller (the closed form exists only for
/// the symmetric model; attack analysis and simulation export their own).
/// `bb84_phi` optionally provides the phase error rate for the BB84
/// baseline.
pub fn keyrate(
    obs: &Observables,
    ipb: &InnerProductBounds,
    mode: BoundMode,
    p0: f64,
    bb84_phi: Option<f64>,
) -> Result<KeyRateReport> {
    obs.validate()?;
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidParameter(format!("p0 = {p0} not in [0, 1]")));
    }
    let n = normalization(obs);
    if n <= 0.0 {
        return Err(Error::NoAcceptedRounds);
    }
    let bound = entropy_lower_bound(obs, ipb, mode)?;
    let h_ab = conditional_entropy_ab(obs)?;
    let r = bound.value - h_ab;
    let r_eff = n / (4.0 * (1.0 + p0)) * r;
    let old = original_protocol_keyrate(obs).ok();
    let bb84 = match bb84_phi {
        Some(phi) => Some(bb84_keyrate(phi)?),
        None => None,
    };
    Ok(KeyRateReport {
        n,
        p_acc: n / 4.0,
        p0,
        h_ae_lower: bound.value,
        h_ab,
        r,
        r_eff,
        term_breakdown: bound.terms,
        baselines: Baselines {
            r_old: old.map(|(r_old, _)| r_old),
            r_eff_old: old.map(|(_, r_eff_old)| r_eff_old),
            bb84,
        },
    })
}

/// Convenience wrapper: evaluates the symmetric channel end to end.
pub fn keyrate_from_channel(
    params: &ChannelParams,
    mode: BoundMode,
    variant: OverlapBoundVariant,
) -> Result<KeyRateReport> {
    let obs = observables_from_channel(params)?;
    let ipb = InnerProductBounds::from_observables(&obs, variant);
    keyrate(&obs, &ipb, mode, subround2_probability(params), Some(params.phi))
}

/// Key rate of the one-sub-round protocol: raw key kept only on message
/// "1". Returns `(r_old, r_eff_old)`.
pub fn original_protocol_keyrate(obs: &Observables) -> Result<(f64, f64)> {
    obs.validate()?;
    let n_old = obs.p1_rm + obs.p1_mr + obs.p1_rr + obs.p1_mm;
    if n_old <= 0.0 {
        return Err(Error::NoAcceptedRounds);
    }
    let term = EntropyTerm::clamped(obs.p1_rm, obs.p1_mr, bound_mr1_rm1(obs));
    let h_ae = term_contribution(&term, n_old);
    let p = [
        [obs.p1_rm / n_old, obs.p1_rr / n_old],
        [obs.p1_mm / n_old, obs.p1_mr / n_old],
    ];
    let h_ab = shannon([p[0][0], p[0][1], p[1][0], p[1][1]])
        - shannon([p[0][0] + p[1][0], p[0][1] + p[1][1]]);
    let r_old = h_ae - h_ab;
    Ok((r_old, n_old / 4.0 * r_old))
}

/// BB84 key rate `1 - 2 h(phi)`; not clamped.
pub fn bb84_keyrate(phi: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&phi) {
        return Err(Error::InvalidParameter(format!("phi = {phi} not in [0, 1/2]")));
    }
    Ok(1.0 - 2.0 * binary_entropy(phi)?)
}

/// Bracket width at which bisection stops.
pub const BISECTION_WIDTH: f64 = 1e-4;

/// Finds the zero crossing of a monotone non-increasing function by
/// bisection, to within [`BISECTION_WIDTH`]. Returns `None` when the
/// endpoints do not bracket a sign change.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo.is_nan() || f_hi.is_nan() || f_lo <= 0.0 || f_hi >= 0.0 {
        return None;
    }
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

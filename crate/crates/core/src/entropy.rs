//! Conditional von Neumann entropy lower bound over pairs of conditional
//! states.
//!
//! For a classical-quantum state whose `A = 0` block is a mixture of
//! unnormalized pure states `E_i` and whose `A = 1` block is a mixture of
//! `F_i` (total weight `N`), the conditional entropy obeys
//!
//! ```text
//! H(A|E) >= sum_i (nE_i + nF_i)/N * ( h(nE_i / (nE_i + nF_i)) - h(lambda_i) )
//! lambda_i = 1/2 (1 + sqrt((nE_i - nF_i)^2 + 4 |<E_i|F_i>|^2) / (nE_i + nF_i))
//! ```
//!
//! where `nE_i = <E_i|E_i>`, `nF_i = <F_i|F_i>` and `h` is the base-2
//! binary entropy. Terms may be dropped freely: any subset of the sum is
//! still a valid lower bound, which is what lets each summand be floored
//! at zero.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const DOMAIN_TOL: f64 = 1e-12;

/// Base-2 binary entropy `h(x) = -x log x - (1-x) log(1-x)`, with
/// `h(0) = h(1) = 0` by continuity.
///
/// Inputs outside `[0, 1]` by more than 1e-12 are a domain error.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !x.is_finite() || !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&x) {
        return Err(Error::InvalidParameter(format!("h({x}): argument not in [0, 1]")));
    }
    let x = x.clamp(0.0, 1.0);
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-(x * x.log2() + (1.0 - x) * (1.0 - x).log2()))
}

/// One pair of conditional states feeding the entropy bound: the two
/// squared norms and a lower bound on the overlap magnitude between them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyTerm {
    /// `<E|E>` of the `A = 0` conditional state.
    pub norm0: f64,
    /// `<F|F>` of the `A = 1` conditional state.
    pub norm1: f64,
    /// Lower bound on `|<E|F>|`; capped by Cauchy-Schwarz.
    pub overlap: f64,
}

impl EntropyTerm {
    /// Builds a term, rejecting negative norms and overlaps that violate
    /// Cauchy-Schwarz beyond 1e-12.
    pub fn new(norm0: f64, norm1: f64, overlap: f64) -> Result<Self> {
        if norm0 < 0.0 || norm1 < 0.0 || overlap < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "entropy term ({norm0}, {norm1}, {overlap}) has a negative field"
            )));
        }
        let cap = (norm0 * norm1).sqrt();
        if overlap > cap + DOMAIN_TOL {
            return Err(Error::InvalidParameter(format!(
                "overlap {overlap} exceeds Cauchy-Schwarz cap {cap}"
            )));
        }
        Ok(Self { norm0, norm1, overlap })
    }

    /// Builds a term clamping the overlap into `[0, sqrt(norm0 * norm1)]`.
    pub fn clamped(norm0: f64, norm1: f64, overlap: f64) -> Self {
        let cap = (norm0.max(0.0) * norm1.max(0.0)).sqrt();
        Self {
            norm0: norm0.max(0.0),
            norm1: norm1.max(0.0),
            overlap: overlap.clamp(0.0, cap),
        }
    }

    pub fn total(&self) -> f64 {
        self.norm0 + self.norm1
    }
}

/// The `lambda` of one term, clamped into `[1/2, 1]` after floating-point
/// evaluation. Errors on a zero-total term (the caller must skip it).
pub fn lambda_of(term: &EntropyTerm) -> Result<f64> {
    let total = term.total();
    if total <= 0.0 {
        return Err(Error::DegenerateTerm);
    }
    let delta = term.norm0 - term.norm1;
    let lambda = 0.5 * (1.0 + (delta * delta + 4.0 * term.overlap * term.overlap).sqrt() / total);
    Ok(lambda.clamp(0.5, 1.0))
}

/// Contribution of a single term to the bound: weight times entropy
/// difference, floored at zero. Zero-total terms contribute nothing.
pub fn term_contribution(term: &EntropyTerm, n: f64) -> f64 {
    let total = term.total();
    if total <= 0.0 {
        return 0.0;
    }
    let lambda = lambda_of(term).expect("nonzero total");
    let h_ratio = binary_entropy((term.norm0 / total).clamp(0.0, 1.0)).expect("ratio in range");
    let h_lambda = binary_entropy(lambda).expect("lambda in range");
    (total / n * (h_ratio - h_lambda)).max(0.0)
}

/// Evaluates the entropy lower bound over the supplied terms.
///
/// Terms with zero total norm are skipped; every summand is floored at
/// zero (dropping a term keeps the bound valid, so a negative summand —
/// possible only through floating-point dust after clamping — is replaced
/// by the bound with that term dropped).
pub fn pairwise_entropy_bound(terms: &[EntropyTerm], n: f64) -> Result<f64> {
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::InvalidNormalization(n));
    }
    Ok(terms.iter().map(|t| term_contribution(t, n)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // frozen: independent numeric evaluation of h(0.11)
        assert!((binary_entropy(0.11).unwrap() - 0.499915958164528).abs() < 1e-12);
        assert!(binary_entropy(-1e-3).is_err());
        assert!(binary_entropy(1.0 + 1e-3).is_err());
        // inside tolerance: treated as the boundary
        assert_eq!(binary_entropy(-1e-13).unwrap(), 0.0);
    }

    #[test]
    fn lambda_examples() {
        let a = 0.37;
        let parallel = EntropyTerm::new(a, a, a).unwrap();
        assert!((lambda_of(&parallel).unwrap() - 1.0).abs() < 1e-15);

        let orthogonal = EntropyTerm::new(a, a, 0.0).unwrap();
        assert_eq!(lambda_of(&orthogonal).unwrap(), 0.5);

        let worked = EntropyTerm::new(0.25, 0.25, 0.225).unwrap();
        assert!((lambda_of(&worked).unwrap() - 0.95).abs() < 1e-15);

        assert!(matches!(
            lambda_of(&EntropyTerm::new(0.0, 0.0, 0.0).unwrap()),
            Err(Error::DegenerateTerm)
        ));
    }

    #[test]
    fn term_rejects_cauchy_schwarz_violation() {
        assert!(EntropyTerm::new(0.25, 0.25, 0.26).is_err());
        assert!(EntropyTerm::new(-0.1, 0.25, 0.0).is_err());
        let clamped = EntropyTerm::clamped(0.25, 0.25, 0.4);
        assert_eq!(clamped.overlap, 0.25);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(pairwise_entropy_bound(&[], 0.5).unwrap(), 0.0);

        let term = EntropyTerm::new(0.25, 0.25, 0.25).unwrap();
        assert!((pairwise_entropy_bound(&[term], 0.5).unwrap() - 1.0).abs() < 1e-12);

        assert!(matches!(
            pairwise_entropy_bound(&[term], 0.0),
            Err(Error::InvalidNormalization(_))
        ));
        assert!(matches!(
            pairwise_entropy_bound(&[term], -1.0),
            Err(Error::InvalidNormalization(_))
        ));
    }

    #[test]
    fn three_term_worked_case() {
        // The phi = 0.05 lossless pipeline, with observable-estimated
        // overlaps 0.225. Frozen from an independent evaluation:
        // 0.4460019018025274 + 2 * 0.085477726845737 = 0.6169573554940014.
        let n = 0.8;
        let terms = [
            EntropyTerm::new(0.25, 0.25, 0.225).unwrap(),
            EntropyTerm::new(0.0625, 0.0625, 0.050625).unwrap(),
            EntropyTerm::new(0.0625, 0.0625, 0.050625).unwrap(),
        ];
        assert!((term_contribution(&terms[0], n) - 0.4460019018025274).abs() < 1e-12);
        assert!((term_contribution(&terms[1], n) - 0.085477726845737).abs() < 1e-12);
        let total = pairwise_entropy_bound(&terms, n).unwrap();
        assert!((total - 0.617).abs() < 1e-3);
        assert!((total - 0.6169573554940014).abs() < 1e-12);
    }

    #[test]
    fn zero_overlap_equal_norms_contributes_nothing() {
        // lambda = 1/2 gives h(lambda) = 1 = h(1/2): the summand is zero
        // before flooring even kicks in.
        let term = EntropyTerm::new(0.0625, 0.0625, 0.0).unwrap();
        assert_eq!(term_contribution(&term, 0.8), 0.0);
    }

    proptest! {
        #[test]
        fn adding_a_term_never_decreases_the_bound(
            norms in proptest::collection::vec((0.0..=0.3f64, 0.0..=0.3f64, 0.0..=1.0f64), 1..6),
        ) {
            let terms: Vec<EntropyTerm> = norms
                .iter()
                .map(|&(n0, n1, f)| EntropyTerm::clamped(n0, n1, f * (n0 * n1).sqrt()))
                .collect();
            let n = 2.0;
            let all = pairwise_entropy_bound(&terms, n).unwrap();
            let fewer = pairwise_entropy_bound(&terms[..terms.len() - 1], n).unwrap();
            prop_assert!(all + 1e-12 >= fewer);
        }

        #[test]
        fn summand_monotone_in_overlap(
            n0 in 1e-6..=0.5f64,
            n1 in 1e-6..=0.5f64,
            f_lo in 0.0..=1.0f64,
            f_hi in 0.0..=1.0f64,
        ) {
            let cap = (n0 * n1).sqrt();
            let (lo, hi) = if f_lo <= f_hi { (f_lo, f_hi) } else { (f_hi, f_lo) };
            let t_lo = EntropyTerm::new(n0, n1, lo * cap).unwrap();
            let t_hi = EntropyTerm::new(n0, n1, hi * cap).unwrap();
            prop_assert!(term_contribution(&t_hi, 1.0) + 1e-12 >= term_contribution(&t_lo, 1.0));
        }

        #[test]
        fn bound_stays_in_unit_interval(
            norms in proptest::collection::vec((0.0..=0.15f64, 0.0..=0.15f64, 0.0..=1.0f64), 0..6),
        ) {
            let terms: Vec<EntropyTerm> = norms
                .iter()
                .map(|&(n0, n1, f)| EntropyTerm::clamped(n0, n1, f * (n0 * n1).sqrt()))
                .collect();
            let mass: f64 = terms.iter().map(EntropyTerm::total).sum();
            let n = mass.max(1e-9) + 0.1;
            let bound = pairwise_entropy_bound(&terms, n).unwrap();
            prop_assert!(bound >= 0.0);
            prop_assert!(bound <= 1.0 + 1e-12);
        }
    }
}

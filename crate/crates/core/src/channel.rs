//! Symmetric-channel statistics.
//!
//! The evaluation family is parameterized by a phase error rate `phi`, a
//! one-directional loss probability `p_l` and a server dark-count rate
//! `p_d`. This module maps those parameters to the protocol's observable
//! statistics: the probability of each server message ("0"/"1") per user
//! action pair, taken jointly with the measuring party *not* detecting the
//! photon, plus the source amplitude magnitudes squared.
//!
//! Actions are written as an ordered pair (Alice, Bob), so `p1_mr` is the
//! probability that the server announces "1" and Alice (the measuring
//! party) does not detect, given Alice chose Measure and Bob Reflect.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const RANGE_TOL: f64 = 1e-12;

/// Parameters of the symmetric noise model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Phase error rate of the both-reflect interference, in [0, 1/2].
    pub phi: f64,
    /// Probability of losing the photon in one direction, in [0, 1].
    pub p_l: f64,
    /// Dark-count rate of the server's detectors, in [0, 1].
    pub p_d: f64,
}

impl ChannelParams {
    pub fn new(phi: f64, p_l: f64, p_d: f64) -> Result<Self> {
        let params = Self { phi, p_l, p_d };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.phi) || !self.phi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "phi = {} not in [0, 1/2]",
                self.phi
            )));
        }
        for (name, v) in [("p_l", self.p_l), ("p_d", self.p_d)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The sufficient statistics for the key-rate bound.
///
/// Eight conditional server-message probabilities (joint with the measuring
/// party not detecting, conditioned on the action pair) plus the source
/// amplitude magnitudes squared. Any channel — symmetric or not — is fed to
/// the key-rate engine through this record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub p1_rr: f64,
    pub p0_rr: f64,
    pub p1_mr: f64,
    pub p0_mr: f64,
    pub p1_rm: f64,
    pub p0_rm: f64,
    pub p1_mm: f64,
    pub p0_mm: f64,
    /// Probability that Alice detects, given both users choose Measure.
    pub alpha2: f64,
    /// Probability that Bob detects, given both users choose Measure.
    pub beta2: f64,
    /// Probability that neither detects, given both users choose Measure.
    pub gamma2: f64,
}

impl Observables {
    /// Checks ranges, `alpha2 + beta2 + gamma2 = 1` and `p1 + p0 <= 1` per
    /// action pair.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.iter_named() {
            if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} not in [0, 1]")));
            }
        }
        let amp_sum = self.alpha2 + self.beta2 + self.gamma2;
        if (amp_sum - 1.0).abs() > RANGE_TOL {
            return Err(Error::InvalidParameter(format!(
                "alpha2 + beta2 + gamma2 = {amp_sum}, expected 1"
            )));
        }
        for (pair, one, zero) in [
            ("rr", self.p1_rr, self.p0_rr),
            ("mr", self.p1_mr, self.p0_mr),
            ("rm", self.p1_rm, self.p0_rm),
            ("mm", self.p1_mm, self.p0_mm),
        ] {
            if one + zero > 1.0 + RANGE_TOL {
                return Err(Error::InvalidParameter(format!(
                    "p1_{pair} + p0_{pair} = {} exceeds 1",
                    one + zero
                )));
            }
        }
        Ok(())
    }

    fn iter_named(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [
            ("p1_rr", self.p1_rr),
            ("p0_rr", self.p0_rr),
            ("p1_mr", self.p1_mr),
            ("p0_mr", self.p0_mr),
            ("p1_rm", self.p1_rm),
            ("p0_rm", self.p0_rm),
            ("p1_mm", self.p1_mm),
            ("p0_mm", self.p0_mm),
            ("alpha2", self.alpha2),
            ("beta2", self.beta2),
            ("gamma2", self.gamma2),
        ]
        .into_iter()
    }
}

/// Evaluates the closed-form observables of the symmetric channel.
///
/// With `dk = p_l * p_d / 2` (a lost signal followed by a dark count split
/// evenly over the two messages):
///
/// ```text
/// p1_rr = dk + (1 - p_l) (dk + (1 - p_l) phi)
/// p0_rr = dk + (1 - p_l) (dk + (1 - p_l) (1 - phi))
/// p1_mr = p0_mr = p1_rm = p0_rm = dk + (1 - p_l)/2 (dk + (1 - p_l)/2)
/// p1_mm = p0_mm = dk
/// alpha2 = beta2 = (1 - p_l)/2,   gamma2 = p_l
/// ```
pub fn observables_from_channel(params: &ChannelParams) -> Result<Observables> {
    params.validate()?;
    let ChannelParams { phi, p_l, p_d } = *params;
    let dk = p_l * p_d / 2.0;
    let survive = 1.0 - p_l;

    let p1_rr = dk + survive * (dk + survive * phi);
    let p0_rr = dk + survive * (dk + survive * (1.0 - phi));
    // One party measures and does not detect: the remaining single arm
    // either is lost on return (dark-count chance) or splits 50/50.
    let single = dk + survive / 2.0 * (dk + survive / 2.0);
    // Both measure: non-detection requires forward loss, after which only a
    // dark count can produce a message.
    let both = dk;

    let obs = Observables {
        p1_rr,
        p0_rr,
        p1_mr: single,
        p0_mr: single,
        p1_rm: single,
        p0_rm: single,
        p1_mm: both,
        p0_mm: both,
        alpha2: survive / 2.0,
        beta2: survive / 2.0,
        gamma2: p_l,
    };
    debug_assert!(obs.validate().is_ok());
    Ok(obs)
}

/// The acceptance normalization `N`: the total weight of the twelve
/// branches that contribute a raw key bit, summed over the four action
/// pairs.
///
/// Per pair the three branches are: message "1" in sub-round 1, and
/// messages "0"/"1" in sub-round 2 after a "0" in sub-round 1 (sub-round 2
/// runs with inverted actions, hence the cross products).
pub fn normalization(obs: &Observables) -> f64 {
    obs.p1_rm + obs.p0_rm * obs.p0_mr + obs.p0_rm * obs.p1_mr
        + obs.p1_mr + obs.p0_mr * obs.p0_rm + obs.p0_mr * obs.p1_rm
        + obs.p1_rr + obs.p0_rr * obs.p0_mm + obs.p0_rr * obs.p1_mm
        + obs.p1_mm + obs.p0_mm * obs.p0_rr + obs.p0_mm * obs.p1_rr
}

/// Probability that a round is accepted (yields a raw key bit): `N / 4`,
/// the 1/4 being the probability of each action pair.
pub fn acceptance_probability(obs: &Observables) -> f64 {
    normalization(obs) / 4.0
}

/// Probability that the server announces "0" in sub-round 1 (i.e. that a
/// second sub-round is triggered), in the symmetric model:
///
/// ```text
/// p0 = 1/4 (2 p_l p_d + (1 - p_l)(p_l p_d + (1 - p_l)/2 + (1 - p_l)(1 - phi)))
/// ```
pub fn subround2_probability(params: &ChannelParams) -> f64 {
    let ChannelParams { phi, p_l, p_d } = *params;
    let survive = 1.0 - p_l;
    0.25 * (2.0 * p_l * p_d + survive * (p_l * p_d + survive / 2.0 + survive * (1.0 - phi)))
}

/// Sub-round-2 trigger probability read off an observable record:
/// `(p0_rr + p0_mr + p0_rm + p0_mm) / 4`, the message-"0" probability
/// jointly with non-detection, averaged over action pairs. This is how
/// attack analysis exports a `p0` for arbitrary channels; it ignores the
/// rare message-"0" announcements that follow a user detection (those
/// rounds are discarded regardless).
pub fn subround2_probability_from_observables(obs: &Observables) -> f64 {
    0.25 * (obs.p0_rr + obs.p0_mr + obs.p0_rm + obs.p0_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IDEAL: ChannelParams = ChannelParams { phi: 0.0, p_l: 0.0, p_d: 0.0 };

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ideal_observables() {
        let obs = observables_from_channel(&IDEAL).unwrap();
        assert_eq!(obs.p1_rr, 0.0);
        assert_eq!(obs.p0_rr, 1.0);
        for v in [obs.p1_mr, obs.p0_mr, obs.p1_rm, obs.p0_rm] {
            assert_eq!(v, 0.25);
        }
        assert_eq!(obs.p1_mm, 0.0);
        assert_eq!(obs.p0_mm, 0.0);
        assert_eq!(obs.alpha2, 0.5);
        assert_eq!(obs.beta2, 0.5);
        assert_eq!(obs.gamma2, 0.0);
    }

    #[test]
    fn total_loss_forces_vacuum() {
        let params = ChannelParams::new(0.3, 1.0, 0.0).unwrap();
        let obs = observables_from_channel(&params).unwrap();
        for (_, v) in obs.iter_named().take(8) {
            assert_eq!(v, 0.0);
        }
        assert_eq!(obs.gamma2, 1.0);
        assert_eq!(normalization(&obs), 0.0);
        assert_eq!(acceptance_probability(&obs), 0.0);
    }

    #[test]
    fn phase_noise_only_shifts_both_reflect() {
        let params = ChannelParams::new(0.05, 0.0, 0.0).unwrap();
        let obs = observables_from_channel(&params).unwrap();
        assert!(close(obs.p1_rr, 0.05, 1e-15));
        assert!(close(obs.p0_rr, 0.95, 1e-15));
        assert_eq!(obs.p1_mr, 0.25);
        assert_eq!(obs.p0_rm, 0.25);
        assert_eq!(obs.p1_mm, 0.0);
    }

    #[test]
    fn normalization_ideal_and_noisy() {
        let ideal = observables_from_channel(&IDEAL).unwrap();
        assert!(close(normalization(&ideal), 0.75, 1e-15));
        assert!(close(acceptance_probability(&ideal), 3.0 / 16.0, 1e-15));

        let noisy = observables_from_channel(&ChannelParams::new(0.05, 0.0, 0.0).unwrap()).unwrap();
        assert!(close(normalization(&noisy), 0.8, 1e-15));
        assert!(close(acceptance_probability(&noisy), 0.2, 1e-15));
    }

    #[test]
    fn subround2_probability_examples() {
        assert!(close(subround2_probability(&IDEAL), 0.375, 1e-15));
        let total_loss = ChannelParams::new(0.1, 1.0, 0.0).unwrap();
        assert_eq!(subround2_probability(&total_loss), 0.0);
        let noisy = ChannelParams::new(0.05, 0.0, 0.0).unwrap();
        assert!(close(subround2_probability(&noisy), 0.3625, 1e-15));
    }

    #[test]
    fn observable_p0_matches_closed_form_on_symmetric_family() {
        for phi in [0.0, 0.05, 0.3] {
            for p_l in [0.0, 0.4, 0.9] {
                for p_d in [0.0, 1e-3, 0.2] {
                    let params = ChannelParams { phi, p_l, p_d };
                    let obs = observables_from_channel(&params).unwrap();
                    assert!(close(
                        subround2_probability_from_observables(&obs),
                        subround2_probability(&params),
                        1e-15
                    ));
                }
            }
        }
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(ChannelParams::new(0.6, 0.0, 0.0).is_err());
        assert!(ChannelParams::new(-0.1, 0.0, 0.0).is_err());
        assert!(ChannelParams::new(0.1, 1.5, 0.0).is_err());
        assert!(ChannelParams::new(0.1, 0.0, -1e-9).is_err());
        assert!(observables_from_channel(&ChannelParams { phi: 0.7, p_l: 0.0, p_d: 0.0 }).is_err());
    }

    #[test]
    fn no_dark_counts_means_no_both_measure_messages() {
        for p_l in [0.0, 0.3, 0.9] {
            let obs =
                observables_from_channel(&ChannelParams::new(0.1, p_l, 0.0).unwrap()).unwrap();
            assert_eq!(obs.p1_mm, 0.0);
            assert_eq!(obs.p0_mm, 0.0);
        }
    }

    proptest! {
        #[test]
        fn observables_satisfy_invariants(
            phi in 0.0..=0.5f64,
            p_l in 0.0..=1.0f64,
            p_d in 0.0..=1.0f64,
        ) {
            let obs = observables_from_channel(&ChannelParams { phi, p_l, p_d }).unwrap();
            prop_assert!(obs.validate().is_ok());
        }

        #[test]
        fn normalization_monotone_in_each_observable(
            phi in 0.0..=0.5f64,
            p_l in 0.0..=0.99f64,
            p_d in 0.0..=1.0f64,
            which in 0usize..8,
            bump in 0.0..=0.2f64,
        ) {
            let obs = observables_from_channel(&ChannelParams { phi, p_l, p_d }).unwrap();
            let mut bumped = obs;
            let field: &mut f64 = match which {
                0 => &mut bumped.p1_rr,
                1 => &mut bumped.p0_rr,
                2 => &mut bumped.p1_mr,
                3 => &mut bumped.p0_mr,
                4 => &mut bumped.p1_rm,
                5 => &mut bumped.p0_rm,
                6 => &mut bumped.p1_mm,
                _ => &mut bumped.p0_mm,
            };
            *field = (*field + bump).min(1.0);
            prop_assert!(normalization(&bumped) >= normalization(&obs) - 1e-12);
        }
    }
}

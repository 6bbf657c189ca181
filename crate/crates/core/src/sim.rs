//! Event-level Monte Carlo of the protocol under an honest server.
//!
//! Each round draws independent uniform Reflect/Measure actions for Alice
//! and Bob and walks the sub-round event tree; when the server announces
//! "0" in sub-round 1 a second sub-round runs with both actions inverted.
//! A round is accepted (contributes a raw key bit, encoded from the
//! sub-round-1 actions) when no measuring party detected the photon in any
//! used sub-round and the decisive message was not "vac".
//!
//! The per-sub-round event tree mirrors the closed forms of
//! [`crate::channel::observables_from_channel`] branch by branch:
//!
//! - forward loss (prob `p_l`): vacuum reaches the server, a dark count
//!   (prob `p_d`) announces "0"/"1" with equal odds, otherwise "vac" —
//!   the `p_l p_d / 2` term;
//! - a photon that survives transit is detected by a measuring party with
//!   probability 1/2 per measuring arm; a detection returns vacuum to the
//!   server (dark-count logic again), and flags the round for discard;
//! - an undetected signal suffers return loss `p_l` (dark-count logic) —
//!   the `(1 - p_l)/2 * p_l p_d / 2` style terms — or reaches the
//!   interferometer: a full reflection announces "1" with probability
//!   `phi` ("0" otherwise), a single returning arm announces "0"/"1" with
//!   equal odds.
//!
//! Dark counts fire only when vacuum reaches the server; user detectors
//! are ideal. Rounds use independently derived RNG streams, so statistics
//! do not depend on how rounds would be sharded across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{
    acceptance_probability, observables_from_channel, subround2_probability, ChannelParams,
    Observables,
};
use crate::{Error, Result};

/// Monte Carlo configuration. Runs are deterministic in `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub rounds: u64,
    pub seed: u64,
    pub channel: ChannelParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    Reflect,
    Measure,
}

impl Action {
    fn invert(self) -> Self {
        match self {
            Self::Reflect => Self::Measure,
            Self::Measure => Self::Reflect,
        }
    }
}

/// Action pair in effect during one sub-round (Alice first).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionPair {
    Rr,
    Rm,
    Mr,
    Mm,
}

impl ActionPair {
    pub const ALL: [Self; 4] = [Self::Rr, Self::Rm, Self::Mr, Self::Mm];

    fn from_actions(alice: Action, bob: Action) -> Self {
        match (alice, bob) {
            (Action::Reflect, Action::Reflect) => Self::Rr,
            (Action::Reflect, Action::Measure) => Self::Rm,
            (Action::Measure, Action::Reflect) => Self::Mr,
            (Action::Measure, Action::Measure) => Self::Mm,
        }
    }

    fn index(self) -> usize {
        match self {
            Self::Rr => 0,
            Self::Rm => 1,
            Self::Mr => 2,
            Self::Mm => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Rr => "RR",
            Self::Rm => "RM",
            Self::Mr => "MR",
            Self::Mm => "MM",
        }
    }
}

/// Server announcement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Message {
    Zero,
    One,
    Vac,
}

impl Message {
    pub const ALL: [Self; 3] = [Self::Zero, Self::One, Self::Vac];

    fn index(self) -> usize {
        match self {
            Self::Zero => 0,
            Self::One => 1,
            Self::Vac => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Zero => "0",
            Self::One => "1",
            Self::Vac => "vac",
        }
    }
}

/// Which user, if any, detected the photon in a sub-round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detection {
    None,
    Alice,
    Bob,
}

impl Detection {
    pub const ALL: [Self; 3] = [Self::None, Self::Alice, Self::Bob];

    fn index(self) -> usize {
        match self {
            Self::None => 0,
            Self::Alice => 1,
            Self::Bob => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Alice => "alice",
            Self::Bob => "bob",
        }
    }
}

/// Sub-round outcome counts indexed by `[pair][subround][message][detection]`.
pub type CountTable = [[[[u64; 3]; 3]; 2]; 4];

/// Aggregated simulation output. Identical seeds produce bit-identical
/// stats.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimStats {
    pub config: SimConfig,
    pub counts: CountTable,
    pub accepted: u64,
    pub subround2_used: u64,
    /// Accepted-round raw-key joint counts, indexed `[alice_bit][bob_bit]`.
    pub joint_ab: [[u64; 2]; 2],
    /// Alice's raw key bits over accepted rounds, in round order.
    #[serde(skip)]
    pub alice_key: Vec<u8>,
    /// Bob's raw key bits over accepted rounds, in round order.
    #[serde(skip)]
    pub bob_key: Vec<u8>,
}

impl SimStats {
    pub fn p_acc_hat(&self) -> f64 {
        self.accepted as f64 / self.config.rounds as f64
    }

    /// Fraction of rounds in which a second photon was requested.
    pub fn p0_hat(&self) -> f64 {
        self.subround2_used as f64 / self.config.rounds as f64
    }

    /// Sub-rounds run with the given effective action pair.
    pub fn pair_subrounds(&self, pair: ActionPair) -> u64 {
        self.counts[pair.index()].iter().flatten().flatten().sum()
    }

    /// Accepted-round raw-key mismatch fraction, if any round was accepted.
    pub fn qber(&self) -> Option<f64> {
        if self.accepted == 0 {
            return None;
        }
        Some((self.joint_ab[0][1] + self.joint_ab[1][0]) as f64 / self.accepted as f64)
    }

    /// Accepted-round joint raw-key distribution.
    pub fn joint_ab_hat(&self) -> Option<[[f64; 2]; 2]> {
        if self.accepted == 0 {
            return None;
        }
        let n = self.accepted as f64;
        Some(self.joint_ab.map(|row| row.map(|c| c as f64 / n)))
    }
}

fn dark_message(p_d: f64, rng: &mut ChaCha8Rng) -> Message {
    if rng.gen_bool(p_d) {
        if rng.gen_bool(0.5) {
            Message::One
        } else {
            Message::Zero
        }
    } else {
        Message::Vac
    }
}

fn simulate_subround(
    alice: Action,
    bob: Action,
    ch: &ChannelParams,
    rng: &mut ChaCha8Rng,
) -> (Message, Detection) {
    // Forward transit.
    if rng.gen_bool(ch.p_l) {
        return (dark_message(ch.p_d, rng), Detection::None);
    }
    // Photon reaches the users; each measuring arm captures it with
    // probability 1/2.
    let detection = match (alice, bob) {
        (Action::Measure, Action::Measure) => {
            if rng.gen_bool(0.5) {
                Detection::Alice
            } else {
                Detection::Bob
            }
        }
        (Action::Measure, Action::Reflect) => {
            if rng.gen_bool(0.5) {
                Detection::Alice
            } else {
                Detection::None
            }
        }
        (Action::Reflect, Action::Measure) => {
            if rng.gen_bool(0.5) {
                Detection::Bob
            } else {
                Detection::None
            }
        }
        (Action::Reflect, Action::Reflect) => Detection::None,
    };
    if detection != Detection::None {
        // Vacuum returns to the server.
        return (dark_message(ch.p_d, rng), detection);
    }
    // Return transit.
    if rng.gen_bool(ch.p_l) {
        return (dark_message(ch.p_d, rng), Detection::None);
    }
    let message = if alice == Action::Reflect && bob == Action::Reflect {
        // Full reflection interferes; a phase error flips the calibrated
        // "0" outcome.
        if rng.gen_bool(ch.phi) {
            Message::One
        } else {
            Message::Zero
        }
    } else if rng.gen_bool(0.5) {
        // Single returning arm: both server detectors equally likely.
        Message::One
    } else {
        Message::Zero
    };
    (message, Detection::None)
}

/// Runs the full protocol. Deterministic in the seed; every round uses its
/// own derived RNG stream.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimStats> {
    cfg.channel.validate()?;
    if cfg.rounds == 0 {
        return Err(Error::InvalidParameter("rounds must be >= 1".into()));
    }
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = SimStats {
        config: *cfg,
        counts: [[[[0; 3]; 3]; 2]; 4],
        accepted: 0,
        subround2_used: 0,
        joint_ab: [[0; 2]; 2],
        alice_key: Vec::new(),
        bob_key: Vec::new(),
    };

    for round in 0..cfg.rounds {
        let mut rng = base.clone();
        rng.set_stream(round);

        let alice = if rng.gen_bool(0.5) { Action::Measure } else { Action::Reflect };
        let bob = if rng.gen_bool(0.5) { Action::Measure } else { Action::Reflect };

        let pair1 = ActionPair::from_actions(alice, bob);
        let (msg1, det1) = simulate_subround(alice, bob, &cfg.channel, &mut rng);
        stats.counts[pair1.index()][0][msg1.index()][det1.index()] += 1;

        let accepted = match msg1 {
            Message::One => det1 == Detection::None,
            Message::Vac => false,
            Message::Zero => {
                stats.subround2_used += 1;
                let (alice2, bob2) = (alice.invert(), bob.invert());
                let pair2 = ActionPair::from_actions(alice2, bob2);
                let (msg2, det2) = simulate_subround(alice2, bob2, &cfg.channel, &mut rng);
                stats.counts[pair2.index()][1][msg2.index()][det2.index()] += 1;
                det1 == Detection::None && det2 == Detection::None && msg2 != Message::Vac
            }
        };

        if accepted {
            let a_bit = u8::from(alice == Action::Measure);
            let b_bit = u8::from(bob == Action::Reflect);
            stats.joint_ab[a_bit as usize][b_bit as usize] += 1;
            stats.alice_key.push(a_bit);
            stats.bob_key.push(b_bit);
            stats.accepted += 1;
        }
    }
    Ok(stats)
}

/// A frequency estimate with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalValue {
    pub value: f64,
    pub std_err: f64,
    /// Size of the conditioning cell.
    pub n: u64,
}

fn estimate(hits: u64, n: u64) -> EmpiricalValue {
    let p = hits as f64 / n as f64;
    EmpiricalValue { value: p, std_err: (p * (1.0 - p) / n as f64).sqrt(), n }
}

/// Frequency estimates of the observables, in the layout the key-rate
/// engine consumes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalObservables {
    pub p1_rr: EmpiricalValue,
    pub p0_rr: EmpiricalValue,
    pub p1_mr: EmpiricalValue,
    pub p0_mr: EmpiricalValue,
    pub p1_rm: EmpiricalValue,
    pub p0_rm: EmpiricalValue,
    pub p1_mm: EmpiricalValue,
    pub p0_mm: EmpiricalValue,
    pub alpha2: EmpiricalValue,
    pub beta2: EmpiricalValue,
    pub gamma2: EmpiricalValue,
}

impl EmpiricalObservables {
    pub fn to_observables(&self) -> Observables {
        Observables {
            p1_rr: self.p1_rr.value,
            p0_rr: self.p0_rr.value,
            p1_mr: self.p1_mr.value,
            p0_mr: self.p0_mr.value,
            p1_rm: self.p1_rm.value,
            p0_rm: self.p0_rm.value,
            p1_mm: self.p1_mm.value,
            p0_mm: self.p0_mm.value,
            alpha2: self.alpha2.value,
            beta2: self.beta2.value,
            gamma2: self.gamma2.value,
        }
    }

    pub fn iter_named(&self) -> impl Iterator<Item = (&'static str, EmpiricalValue)> {
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

/// Estimates the observables from the counts, pooling both sub-rounds
/// (sub-round outcomes are independent of the trigger, conditioned on the
/// pair in effect). Message probabilities are joint with non-detection,
/// matching the closed-form convention.
pub fn empirical_observables(stats: &SimStats) -> Result<EmpiricalObservables> {
    let pair_total = |pair: ActionPair| stats.pair_subrounds(pair);
    for pair in ActionPair::ALL {
        if pair_total(pair) == 0 {
            return Err(Error::InsufficientData(format!(
                "no sub-rounds with action pair {}",
                pair.label()
            )));
        }
    }
    let message_joint = |pair: ActionPair, msg: Message| -> u64 {
        (0..2).map(|sub| stats.counts[pair.index()][sub][msg.index()][0]).sum()
    };
    let detections = |pair: ActionPair, det: Detection| -> u64 {
        (0..2)
            .map(|sub| {
                (0..3).map(|msg| stats.counts[pair.index()][sub][msg][det.index()]).sum::<u64>()
            })
            .sum()
    };

    let n_mm = pair_total(ActionPair::Mm);
    Ok(EmpiricalObservables {
        p1_rr: estimate(message_joint(ActionPair::Rr, Message::One), pair_total(ActionPair::Rr)),
        p0_rr: estimate(message_joint(ActionPair::Rr, Message::Zero), pair_total(ActionPair::Rr)),
        p1_mr: estimate(message_joint(ActionPair::Mr, Message::One), pair_total(ActionPair::Mr)),
        p0_mr: estimate(message_joint(ActionPair::Mr, Message::Zero), pair_total(ActionPair::Mr)),
        p1_rm: estimate(message_joint(ActionPair::Rm, Message::One), pair_total(ActionPair::Rm)),
        p0_rm: estimate(message_joint(ActionPair::Rm, Message::Zero), pair_total(ActionPair::Rm)),
        p1_mm: estimate(message_joint(ActionPair::Mm, Message::One), n_mm),
        p0_mm: estimate(message_joint(ActionPair::Mm, Message::Zero), n_mm),
        alpha2: estimate(detections(ActionPair::Mm, Detection::Alice), n_mm),
        beta2: estimate(detections(ActionPair::Mm, Detection::Bob), n_mm),
        gamma2: estimate(detections(ActionPair::Mm, Detection::None), n_mm),
    })
}

/// One empirical-vs-analytic comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZScore {
    pub name: String,
    pub empirical: f64,
    pub expected: f64,
    pub std_err: f64,
    pub z: f64,
    /// `|z| > 4`.
    pub flagged: bool,
}

fn z_score(name: &str, empirical: f64, expected: f64, n: u64) -> ZScore {
    let std_err = (expected * (1.0 - expected) / n as f64).sqrt();
    let z = if std_err == 0.0 {
        if empirical == expected {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (empirical - expected) / std_err
    };
    ZScore {
        name: name.to_string(),
        empirical,
        expected,
        std_err,
        z,
        flagged: z.abs() > 4.0,
    }
}

/// z-scores of every empirical observable plus `p_acc` and `p0` against
/// the symmetric-channel closed forms. Standard errors use the analytic
/// probabilities.
pub fn compare_to_analytic(stats: &SimStats, params: &ChannelParams) -> Result<Vec<ZScore>> {
    let expected = observables_from_channel(params)?;
    let empirical = empirical_observables(stats)?;
    let mut scores = Vec::new();
    let expected_named = [
        ("p1_rr", expected.p1_rr),
        ("p0_rr", expected.p0_rr),
        ("p1_mr", expected.p1_mr),
        ("p0_mr", expected.p0_mr),
        ("p1_rm", expected.p1_rm),
        ("p0_rm", expected.p0_rm),
        ("p1_mm", expected.p1_mm),
        ("p0_mm", expected.p0_mm),
        ("alpha2", expected.alpha2),
        ("beta2", expected.beta2),
        ("gamma2", expected.gamma2),
    ];
    for ((name, emp), (_, exp)) in empirical.iter_named().zip(expected_named) {
        scores.push(z_score(name, emp.value, exp, emp.n));
    }
    scores.push(z_score(
        "p_acc",
        stats.p_acc_hat(),
        acceptance_probability(&expected),
        stats.config.rounds,
    ));
    scores.push(z_score(
        "p0",
        stats.p0_hat(),
        subround2_probability(params),
        stats.config.rounds,
    ));
    Ok(scores)
}

/// Count table as CSV, in a fixed row and column order.
pub fn counts_csv(stats: &SimStats) -> String {
    let mut out = String::from("actions,subround,message,detection,count\n");
    for pair in ActionPair::ALL {
        for sub in 0..2 {
            for msg in Message::ALL {
                for det in Detection::ALL {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        pair.label(),
                        sub + 1,
                        msg.label(),
                        det.label(),
                        stats.counts[pair.index()][sub][msg.index()][det.index()]
                    ));
                }
            }
        }
    }
    out
}

/// Human-readable run summary.
pub fn text_report(stats: &SimStats) -> String {
    let cfg = stats.config;
    let mut out = String::new();
    out.push_str(&format!(
        "simulation: rounds={} seed={} phi={} p_l={} p_d={}\n",
        cfg.rounds, cfg.seed, cfg.channel.phi, cfg.channel.p_l, cfg.channel.p_d
    ));
    out.push_str(&format!(
        "accepted rounds: {} (p_acc = {:.6})\n",
        stats.accepted,
        stats.p_acc_hat()
    ));
    out.push_str(&format!(
        "sub-round 2 used: {} (p0 = {:.6})\n",
        stats.subround2_used,
        stats.p0_hat()
    ));
    match stats.qber() {
        Some(q) => {
            let mismatches = stats.joint_ab[0][1] + stats.joint_ab[1][0];
            out.push_str(&format!("raw-key mismatches: {mismatches} (QBER = {q:.6})\n"));
            let p = stats.joint_ab_hat().expect("accepted > 0");
            out.push_str(&format!(
                "joint p(A,B): p00={:.6} p01={:.6} p10={:.6} p11={:.6}\n",
                p[0][0], p[0][1], p[1][0], p[1][1]
            ));
        }
        None => out.push_str("raw keys are empty\n"),
    }
    match empirical_observables(stats) {
        Ok(emp) => {
            out.push_str("observables (value +/- std err, n):\n");
            for (name, v) in emp.iter_named() {
                out.push_str(&format!(
                    "  {name:<7} = {:.6} +/- {:.6}  (n = {})\n",
                    v.value, v.std_err, v.n
                ));
            }
            // Both readings of the both-measure message probabilities: the
            // closed forms use the joint-with-non-detection convention;
            // the conditional reading is shown for comparison.
            let mm_nodetect: u64 = (0..2)
                .map(|sub| {
                    (0..3)
                        .map(|msg| stats.counts[ActionPair::Mm.index()][sub][msg][0])
                        .sum::<u64>()
                })
                .sum();
            if mm_nodetect > 0 {
                let joint1 = emp.p1_mm.value;
                let joint0 = emp.p0_mm.value;
                let n_mm = emp.p1_mm.n as f64;
                out.push_str(&format!(
                    "  p1_mm | no detection = {:.6}; p0_mm | no detection = {:.6}\n",
                    joint1 * n_mm / mm_nodetect as f64,
                    joint0 * n_mm / mm_nodetect as f64,
                ));
            }
        }
        Err(e) => out.push_str(&format!("observables unavailable: {e}\n")),
    }
    out
}

//! Observational checklist that turns behaviour annotations into engagement labels.
//!
//! The cascade runs in three stages:
//!
//! 1. acceptance: `writing` or `raised_hand` marks the student interested,
//!    regardless of anything else in the record;
//! 2. rejection: any of the weak rules (cellphone, head on desk, yawning,
//!    talking, side-leaning posture, far/up/below-desk head pose) marks the
//!    student not interested;
//! 3. default: a record that survives every rejection rule is interested.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Multi-label classroom actions. Any subset may be set at once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionFlags {
    pub writing: bool,
    pub cellphone: bool,
    pub laptop: bool,
    pub talking: bool,
    pub raised_hand: bool,
    pub yawning: bool,
    pub head_on_desk: bool,
}

impl ActionFlags {
    pub const COUNT: usize = 7;

    /// Builds flags from the low seven bits, in field declaration order.
    pub fn from_bits(bits: u8) -> Self {
        let bit = |i: u8| bits & (1 << i) != 0;
        ActionFlags {
            writing: bit(0),
            cellphone: bit(1),
            laptop: bit(2),
            talking: bit(3),
            raised_hand: bit(4),
            yawning: bit(5),
            head_on_desk: bit(6),
        }
    }

    pub fn to_bits(self) -> u8 {
        [
            self.writing,
            self.cellphone,
            self.laptop,
            self.talking,
            self.raised_hand,
            self.yawning,
            self.head_on_desk,
        ]
        .iter()
        .enumerate()
        .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i))
    }
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::UnknownEnum {
                        kind: stringify!($name),
                        value: other.to_string(),
                    }),
                }
            }
        }
    };
}

label_enum!(
    /// Upper-body posture; exactly one per record.
    Posture {
        LeaningLeft => "leaning_left",
        LeaningRight => "leaning_right",
        LeaningBack => "leaning_back",
        LeaningForward => "leaning_forward",
        Upright => "upright",
    }
);

label_enum!(
    /// Head pose, read as the student's focus of attention.
    HeadPose {
        FarLeft => "far_left",
        FarRight => "far_right",
        ModerateLeft => "moderate_left",
        ModerateRight => "moderate_right",
        BelowDesk => "below_desk",
        OnDesk => "on_desk",
        Up => "up",
        Forward => "forward",
    }
);

label_enum!(
    /// Binary engagement outcome.
    EngagementLabel {
        NotInterested => "not_interested",
        Interested => "interested",
    }
);

impl EngagementLabel {
    /// Class index used by the classifiers: 0 = not interested, 1 = interested.
    pub fn index(self) -> usize {
        match self {
            EngagementLabel::NotInterested => 0,
            EngagementLabel::Interested => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            EngagementLabel::NotInterested
        } else {
            EngagementLabel::Interested
        }
    }
}

/// The rule that decided a record's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Writing,
    RaisedHand,
    Cellphone,
    HeadOnDesk,
    Yawning,
    Talking,
    LeaningLeft,
    LeaningRight,
    HeadFarLeft,
    HeadFarRight,
    HeadUp,
    HeadBelowDesk,
    /// No rule fired; the record defaulted to interested.
    Default,
}

impl Rule {
    pub const ALL: &'static [Rule] = &[
        Rule::Writing,
        Rule::RaisedHand,
        Rule::Cellphone,
        Rule::HeadOnDesk,
        Rule::Yawning,
        Rule::Talking,
        Rule::LeaningLeft,
        Rule::LeaningRight,
        Rule::HeadFarLeft,
        Rule::HeadFarRight,
        Rule::HeadUp,
        Rule::HeadBelowDesk,
        Rule::Default,
    ];

    pub fn outcome(self) -> EngagementLabel {
        match self {
            Rule::Writing | Rule::RaisedHand | Rule::Default => EngagementLabel::Interested,
            _ => EngagementLabel::NotInterested,
        }
    }
}

/// Returns the first rule that fires, in cascade order.
///
/// Rejection triggers are checked actions first, then posture, then head
/// pose; when several fire at once only the first is attributed.
pub fn deciding_rule(actions: &ActionFlags, posture: Posture, head: HeadPose) -> Rule {
    if actions.writing {
        return Rule::Writing;
    }
    if actions.raised_hand {
        return Rule::RaisedHand;
    }
    let action_rejects = [
        (actions.cellphone, Rule::Cellphone),
        (actions.head_on_desk, Rule::HeadOnDesk),
        (actions.yawning, Rule::Yawning),
        (actions.talking, Rule::Talking),
    ];
    if let Some(&(_, rule)) = action_rejects.iter().find(|(fired, _)| *fired) {
        return rule;
    }
    match posture {
        Posture::LeaningLeft => return Rule::LeaningLeft,
        Posture::LeaningRight => return Rule::LeaningRight,
        Posture::LeaningBack | Posture::LeaningForward | Posture::Upright => {}
    }
    match head {
        HeadPose::FarLeft => Rule::HeadFarLeft,
        HeadPose::FarRight => Rule::HeadFarRight,
        HeadPose::Up => Rule::HeadUp,
        HeadPose::BelowDesk => Rule::HeadBelowDesk,
        HeadPose::ModerateLeft | HeadPose::ModerateRight | HeadPose::OnDesk | HeadPose::Forward => {
            Rule::Default
        }
    }
}

/// Maps one annotated student-frame to its engagement label.
pub fn cascade_classify(actions: &ActionFlags, posture: Posture, head: HeadPose) -> EngagementLabel {
    deciding_rule(actions, posture, head).outcome()
}

/// Every (actions, posture, head pose) input with its label: 2^7 × 5 × 8 rows.
pub fn cascade_truth_table() -> Vec<((ActionFlags, Posture, HeadPose), EngagementLabel)> {
    let mut table = Vec::with_capacity((1 << ActionFlags::COUNT) * Posture::ALL.len() * HeadPose::ALL.len());
    for bits in 0..(1u8 << ActionFlags::COUNT) {
        let actions = ActionFlags::from_bits(bits);
        for &posture in Posture::ALL {
            for &head in HeadPose::ALL {
                table.push(((actions, posture, head), cascade_classify(&actions, posture, head)));
            }
        }
    }
    table
}

/// Counts of deciding rules over a set of records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStats {
    pub total: usize,
    pub interested: usize,
    pub not_interested: usize,
    /// (rule, count) in cascade order; every rule appears, possibly with 0.
    pub by_rule: Vec<(Rule, usize)>,
}

impl RuleStats {
    pub fn from_rules<I: IntoIterator<Item = Rule>>(rules: I) -> Self {
        let mut counts = vec![0usize; Rule::ALL.len()];
        for rule in rules {
            let slot = Rule::ALL.iter().position(|r| *r == rule).expect("rule listed");
            counts[slot] += 1;
        }
        let by_rule: Vec<(Rule, usize)> = Rule::ALL.iter().copied().zip(counts).collect();
        let interested = by_rule
            .iter()
            .filter(|(r, _)| r.outcome() == EngagementLabel::Interested)
            .map(|(_, c)| c)
            .sum();
        let total: usize = by_rule.iter().map(|(_, c)| c).sum();
        RuleStats { total, interested, not_interested: total - interested, by_rule }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive restatement of the checklist as one boolean expression.
    fn oracle(a: &ActionFlags, p: Posture, h: HeadPose) -> EngagementLabel {
        let accept = a.writing || a.raised_hand;
        let reject = a.cellphone
            || a.head_on_desk
            || a.yawning
            || a.talking
            || p == Posture::LeaningLeft
            || p == Posture::LeaningRight
            || h == HeadPose::FarLeft
            || h == HeadPose::FarRight
            || h == HeadPose::Up
            || h == HeadPose::BelowDesk;
        if accept || !reject {
            EngagementLabel::Interested
        } else {
            EngagementLabel::NotInterested
        }
    }

    fn flags() -> ActionFlags {
        ActionFlags::default()
    }

    #[test]
    fn acceptance_precedes_rejection() {
        let a = ActionFlags { writing: true, cellphone: true, ..flags() };
        assert_eq!(cascade_classify(&a, Posture::Upright, HeadPose::Forward), EngagementLabel::Interested);
    }

    #[test]
    fn unrejected_defaults_to_interested() {
        assert_eq!(cascade_classify(&flags(), Posture::Upright, HeadPose::Forward), EngagementLabel::Interested);
    }

    #[test]
    fn leaning_left_rejects() {
        assert_eq!(
            cascade_classify(&flags(), Posture::LeaningLeft, HeadPose::Forward),
            EngagementLabel::NotInterested
        );
    }

    #[test]
    fn talking_rejects() {
        let a = ActionFlags { talking: true, ..flags() };
        assert_eq!(cascade_classify(&a, Posture::Upright, HeadPose::Forward), EngagementLabel::NotInterested);
    }

    #[test]
    fn truth_table_is_complete_and_matches_oracle() {
        let table = cascade_truth_table();
        assert_eq!(table.len(), 5120);
        let mut oracle_interested = 0;
        for ((a, p, h), label) in &table {
            assert_eq!(*label, oracle(a, *p, *h), "{a:?} {p:?} {h:?}");
            if a.writing {
                assert_eq!(*label, EngagementLabel::Interested);
            }
            if oracle(a, *p, *h) == EngagementLabel::Interested {
                oracle_interested += 1;
            }
        }
        let interested = table.iter().filter(|(_, l)| *l == EngagementLabel::Interested).count();
        assert_eq!(interested, oracle_interested);
    }

    #[test]
    fn monotone_rejection() {
        for ((a, p, h), label) in cascade_truth_table() {
            if a.writing || a.raised_hand || label == EngagementLabel::Interested {
                continue;
            }
            for flip in [
                ActionFlags { cellphone: true, ..a },
                ActionFlags { head_on_desk: true, ..a },
                ActionFlags { yawning: true, ..a },
                ActionFlags { talking: true, ..a },
            ] {
                assert_eq!(cascade_classify(&flip, p, h), EngagementLabel::NotInterested);
            }
        }
    }

    #[test]
    fn neutral_cues_never_reject_alone() {
        for &p in &[Posture::LeaningBack, Posture::LeaningForward, Posture::Upright] {
            for &h in &[HeadPose::ModerateLeft, HeadPose::ModerateRight, HeadPose::OnDesk, HeadPose::Forward] {
                for laptop in [false, true] {
                    let a = ActionFlags { laptop, ..flags() };
                    assert_eq!(cascade_classify(&a, p, h), EngagementLabel::Interested);
                }
            }
        }
    }

    #[test]
    fn bits_round_trip() {
        for bits in 0..128u8 {
            assert_eq!(ActionFlags::from_bits(bits).to_bits(), bits);
        }
    }

    #[test]
    fn enum_strings() {
        assert_eq!("leaning_left".parse::<Posture>().unwrap(), Posture::LeaningLeft);
        assert_eq!("below_desk".parse::<HeadPose>().unwrap(), HeadPose::BelowDesk);
        assert!(matches!("sideways".parse::<Posture>(), Err(Error::UnknownEnum { .. })));
        for p in Posture::ALL {
            assert_eq!(serde_json::to_string(p).unwrap(), format!("\"{}\"", p.as_str()));
        }
    }

    #[test]
    fn rule_stats_sum_to_total() {
        let rules: Vec<Rule> = cascade_truth_table()
            .iter()
            .map(|((a, p, h), _)| deciding_rule(a, *p, *h))
            .collect();
        let stats = RuleStats::from_rules(rules);
        assert_eq!(stats.total, 5120);
        assert_eq!(stats.by_rule.iter().map(|(_, c)| c).sum::<usize>(), 5120);
        assert_eq!(stats.interested + stats.not_interested, 5120);
    }
}

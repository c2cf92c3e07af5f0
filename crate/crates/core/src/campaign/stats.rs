use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bot::{ActionLabel, EngagementEvent, EventPayload};

/// Aggregate outcome of a campaign, folded from its event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub targeted_count: usize,
    pub responders_count: usize,
    pub responses_count: usize,
    /// Replies per responder -> number of responders with that many replies.
    pub responses_per_responder: BTreeMap<usize, usize>,
    pub median_responses_per_responder: f64,
    /// Keyed by label; every label is present.
    pub classification_counts: BTreeMap<ActionLabel, usize>,
}

/// Median of a sample; 0 for an empty one.
pub fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    }
}

pub fn compute_stats(events: &[EngagementEvent]) -> CampaignStats {
    let mut targeted = BTreeSet::new();
    let mut replies: BTreeMap<&str, usize> = BTreeMap::new();
    let mut responses_count = 0;
    let mut classification_counts: BTreeMap<ActionLabel, usize> =
        [ActionLabel::Evangelist, ActionLabel::Defender, ActionLabel::Other]
            .into_iter()
            .map(|l| (l, 0))
            .collect();
    for ev in events {
        match &ev.payload {
            EventPayload::Targeted { .. } => {
                targeted.insert(ev.user_id.as_str());
            }
            EventPayload::ReplyReceived { .. } => {
                responses_count += 1;
                *replies.entry(ev.user_id.as_str()).or_default() += 1;
            }
            EventPayload::Classified { classification } => {
                *classification_counts.entry(classification.label).or_default() += 1;
            }
            _ => {}
        }
    }
    let per_user: Vec<usize> = replies.values().copied().collect();
    let mut histogram = BTreeMap::new();
    for n in &per_user {
        *histogram.entry(*n).or_default() += 1;
    }
    CampaignStats {
        targeted_count: targeted.len(),
        responders_count: replies.len(),
        responses_count,
        responses_per_responder: histogram,
        median_responses_per_responder: median(&per_user),
        classification_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_is_all_zero() {
        let s = compute_stats(&[]);
        assert_eq!(s.targeted_count, 0);
        assert_eq!(s.responders_count, 0);
        assert_eq!(s.responses_count, 0);
        assert!(s.responses_per_responder.is_empty());
        assert_eq!(s.median_responses_per_responder, 0.0);
        assert!(s.classification_counts.values().all(|c| *c == 0));
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3, 1, 2]), 2.0);
        assert_eq!(median(&[1, 2, 3, 4]), 2.5);
        assert_eq!(median(&[7]), 7.0);
    }

    #[test]
    fn json_keys() {
        let s = compute_stats(&[]);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["classification_counts"]["evangelist"], 0);
        let back: CampaignStats = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }
}

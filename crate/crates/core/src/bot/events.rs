use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{ActionClassification, BotError, ConversationState, Phase, TargetUser};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Sender {
    Bot,
    Activist { activist_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    Timeout,
    OptOut,
    Activist,
    /// The next automated message would exceed the per-user cap.
    CapReached,
}

/// Kind-specific part of an event. Serialized as `"kind"` + `"payload"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    Targeted {
        target: TargetUser,
    },
    ExposurePosted {
        message_id: String,
        macro_url: String,
        text: String,
    },
    ReplyReceived {
        reply_id: String,
        text: String,
    },
    BotReplySent {
        message_id: String,
        text: String,
        sender: Sender,
    },
    Classified {
        classification: ActionClassification,
    },
    HandedOff {},
    OptedOut {
        reply_id: String,
    },
    Closed {
        reason: CloseReason,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Targeted,
    ExposurePosted,
    ReplyReceived,
    BotReplySent,
    Classified,
    HandedOff,
    OptedOut,
    Closed,
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Targeted { .. } => EventKind::Targeted,
            EventPayload::ExposurePosted { .. } => EventKind::ExposurePosted,
            EventPayload::ReplyReceived { .. } => EventKind::ReplyReceived,
            EventPayload::BotReplySent { .. } => EventKind::BotReplySent,
            EventPayload::Classified { .. } => EventKind::Classified,
            EventPayload::HandedOff {} => EventKind::HandedOff,
            EventPayload::OptedOut { .. } => EventKind::OptedOut,
            EventPayload::Closed { .. } => EventKind::Closed,
        }
    }
}

/// One line of a campaign's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub event_id: u64,
    pub campaign_id: String,
    pub user_id: String,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl EngagementEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

/// Campaign state folded from its event log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignLedger {
    campaign_id: String,
    last_event_id: u64,
    conversations: BTreeMap<String, ConversationState>,
    /// Users in the order they were targeted.
    target_order: Vec<String>,
    seen_replies: BTreeSet<String>,
    exposure_times: Vec<DateTime<Utc>>,
}

impl CampaignLedger {
    pub fn new(campaign_id: impl Into<String>) -> Self {
        Self {
            campaign_id: campaign_id.into(),
            ..Self::default()
        }
    }

    /// Rebuild state from a complete log.
    pub fn replay<'a>(
        campaign_id: &str,
        events: impl IntoIterator<Item = &'a EngagementEvent>,
    ) -> Result<Self, BotError> {
        let mut ledger = Self::new(campaign_id);
        for ev in events {
            ledger.apply(ev)?;
        }
        Ok(ledger)
    }

    pub fn campaign_id(&self) -> &str {
        &self.campaign_id
    }

    pub fn last_event_id(&self) -> u64 {
        self.last_event_id
    }

    pub fn conversation(&self, user_id: &str) -> Option<&ConversationState> {
        self.conversations.get(user_id)
    }

    pub fn conversations(&self) -> impl Iterator<Item = &ConversationState> {
        self.target_order.iter().map(|u| &self.conversations[u])
    }

    pub fn target_count(&self) -> usize {
        self.target_order.len()
    }

    pub fn has_seen_reply(&self, reply_id: &str) -> bool {
        self.seen_replies.contains(reply_id)
    }

    /// Exposures posted in the hour ending at `now` (inclusive).
    pub fn exposures_in_last_hour(&self, now: DateTime<Utc>) -> usize {
        let start = now - Duration::hours(1);
        self.exposure_times
            .iter()
            .filter(|t| **t > start && **t <= now)
            .count()
    }

    fn conv_mut(&mut self, user_id: &str) -> Result<&mut ConversationState, BotError> {
        self.conversations
            .get_mut(user_id)
            .ok_or_else(|| BotError::UnknownUser(user_id.to_string()))
    }

    /// Fold one event into the state. Out-of-order ids and transitions
    /// outside the legal table are rejected and leave the ledger untouched.
    pub fn apply(&mut self, ev: &EngagementEvent) -> Result<(), BotError> {
        if ev.campaign_id != self.campaign_id {
            return Err(BotError::StaleState(format!(
                "event {} belongs to campaign {}, not {}",
                ev.event_id, ev.campaign_id, self.campaign_id
            )));
        }
        if ev.event_id <= self.last_event_id {
            return Err(BotError::StaleState(format!(
                "event id {} does not follow {}",
                ev.event_id, self.last_event_id
            )));
        }

        // Work on a copy of the one conversation touched so a rejected event
        // changes nothing.
        let user = ev.user_id.as_str();
        let mut conv = match &ev.payload {
            EventPayload::Targeted { target } => {
                if self.conversations.contains_key(user) || target.user_id != user {
                    return Err(BotError::StaleState(format!("user {user} targeted twice")));
                }
                ConversationState::new(target.clone())
            }
            _ => self.conv_mut(user)?.clone(),
        };

        match &ev.payload {
            EventPayload::Targeted { .. } => {}
            EventPayload::ExposurePosted { .. } => {
                if conv.opted_out {
                    return Err(BotError::Precondition(format!("{user} opted out")));
                }
                conv.transition(Phase::Exposed)?;
                conv.transition(Phase::AwaitingOpinion)?;
                conv.messages_sent += 1;
                conv.last_activity = ev.at;
            }
            EventPayload::ReplyReceived { reply_id, .. } => {
                if !conv.phase.accepts_replies() {
                    return Err(BotError::StaleState(format!(
                        "reply {reply_id} for {user} in phase {:?}",
                        conv.phase
                    )));
                }
                if self.seen_replies.contains(reply_id) {
                    return Err(BotError::StaleState(format!("reply {reply_id} recorded twice")));
                }
                if conv.phase == Phase::HandedToActivist {
                    conv.awaiting_activist = true;
                }
                conv.last_activity = ev.at;
            }
            EventPayload::BotReplySent { sender, .. } => {
                if conv.opted_out {
                    return Err(BotError::Precondition(format!("{user} opted out")));
                }
                match sender {
                    Sender::Bot => conv.transition(Phase::AwaitingActionIdeas)?,
                    Sender::Activist { .. } => {
                        if conv.phase != Phase::HandedToActivist {
                            return Err(BotError::StaleState(format!(
                                "activist reply to {user} in phase {:?}",
                                conv.phase
                            )));
                        }
                        conv.awaiting_activist = false;
                    }
                }
                // Only automated messages count toward the per-user cap.
                if *sender == Sender::Bot {
                    conv.messages_sent += 1;
                }
                conv.last_activity = ev.at;
            }
            EventPayload::Classified { classification } => {
                if conv.phase != Phase::AwaitingActionIdeas {
                    return Err(BotError::StaleState(format!(
                        "classification for {user} in phase {:?}",
                        conv.phase
                    )));
                }
                conv.classification = Some(classification.clone());
            }
            EventPayload::HandedOff {} => {
                conv.transition(Phase::HandedToActivist)?;
                conv.awaiting_activist = true;
            }
            EventPayload::OptedOut { .. } => {
                conv.opted_out = true;
            }
            EventPayload::Closed { .. } => {
                conv.transition(Phase::Closed)?;
                conv.awaiting_activist = false;
            }
        }

        match &ev.payload {
            EventPayload::Targeted { .. } => self.target_order.push(user.to_string()),
            EventPayload::ExposurePosted { .. } => self.exposure_times.push(ev.at),
            EventPayload::ReplyReceived { reply_id, .. } => {
                self.seen_replies.insert(reply_id.clone());
            }
            _ => {}
        }
        self.conversations.insert(user.to_string(), conv);
        self.last_event_id = ev.event_id;
        Ok(())
    }

    /// Build the next event and fold it in.
    pub(crate) fn emit(
        &mut self,
        user_id: &str,
        at: DateTime<Utc>,
        payload: EventPayload,
    ) -> Result<EngagementEvent, BotError> {
        let ev = EngagementEvent {
            event_id: self.last_event_id + 1,
            campaign_id: self.campaign_id.clone(),
            user_id: user_id.to_string(),
            at,
            payload,
        };
        self.apply(&ev)?;
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2017, 1, 10, h, 0, 0).unwrap()
    }

    fn target(u: &str) -> TargetUser {
        TargetUser {
            user_id: u.into(),
            handle: format!("h_{u}"),
            matched_terms: vec!["#PEMEX".into()],
            matched_post_id: format!("p_{u}"),
            discovered_at: t(0),
        }
    }

    #[test]
    fn json_shape() {
        let ev = EngagementEvent {
            event_id: 7,
            campaign_id: "c1".into(),
            user_id: "u1".into(),
            at: t(1),
            payload: EventPayload::ReplyReceived {
                reply_id: "r1".into(),
                text: "hola".into(),
            },
        };
        let v: serde_json::Value = serde_json::to_value(&ev).unwrap();
        assert_eq!(v["kind"], "reply_received");
        assert_eq!(v["payload"]["reply_id"], "r1");
        assert_eq!(v["event_id"], 7);
        let back: EngagementEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, ev);
        let handed = EngagementEvent {
            payload: EventPayload::HandedOff {},
            ..ev
        };
        let line = serde_json::to_string(&handed).unwrap();
        assert_eq!(serde_json::from_str::<EngagementEvent>(&line).unwrap(), handed);
    }

    #[test]
    fn rejects_out_of_order_ids_and_illegal_transitions() {
        let mut l = CampaignLedger::new("c1");
        l.emit("u1", t(0), EventPayload::Targeted { target: target("u1") })
            .unwrap();
        let before = l.clone();
        // Handing off straight from Created is not a legal transition.
        assert!(matches!(
            l.emit("u1", t(1), EventPayload::HandedOff {}),
            Err(BotError::IllegalTransition { .. })
        ));
        assert_eq!(l, before);
        let dup = EngagementEvent {
            event_id: 1,
            campaign_id: "c1".into(),
            user_id: "u2".into(),
            at: t(1),
            payload: EventPayload::Targeted { target: target("u2") },
        };
        assert!(matches!(l.apply(&dup), Err(BotError::StaleState(_))));
    }

    #[test]
    fn hourly_window() {
        let mut l = CampaignLedger::new("c1");
        for (i, u) in ["a", "b", "c"].iter().enumerate() {
            l.emit(u, t(0), EventPayload::Targeted { target: target(u) })
                .unwrap();
            l.emit(
                u,
                t(i as u32),
                EventPayload::ExposurePosted {
                    message_id: format!("m{i}"),
                    macro_url: "u".into(),
                    text: "x".into(),
                },
            )
            .unwrap();
        }
        assert_eq!(l.exposures_in_last_hour(t(2)), 1);
        assert_eq!(l.exposures_in_last_hour(t(1)), 1);
        assert_eq!(l.exposures_in_last_hour(t(0)), 1);
        assert_eq!(l.conversation("a").unwrap().phase, Phase::AwaitingOpinion);
        assert_eq!(l.conversation("a").unwrap().messages_sent, 1);
    }
}

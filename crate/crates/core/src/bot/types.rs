use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{BotError, CueLexicon, TemplateSet};

/// Someone found posting about the story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetUser {
    pub user_id: String,
    pub handle: String,
    pub matched_terms: Vec<String>,
    pub matched_post_id: String,
    pub discovered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Exposed,
    AwaitingOpinion,
    AwaitingActionIdeas,
    HandedToActivist,
    Closed,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Created,
        Phase::Exposed,
        Phase::AwaitingOpinion,
        Phase::AwaitingActionIdeas,
        Phase::HandedToActivist,
        Phase::Closed,
    ];

    /// The complete transition table.
    pub fn can_transition(self, to: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, to),
            (Created, Exposed)
                | (Exposed, AwaitingOpinion)
                | (AwaitingOpinion, AwaitingActionIdeas)
                | (AwaitingOpinion, Closed)
                | (AwaitingActionIdeas, HandedToActivist)
                | (AwaitingActionIdeas, Closed)
                | (HandedToActivist, Closed)
        )
    }

    /// Phases in which an incoming reply is part of the conversation.
    pub fn accepts_replies(self) -> bool {
        matches!(
            self,
            Phase::AwaitingOpinion | Phase::AwaitingActionIdeas | Phase::HandedToActivist
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub target: TargetUser,
    pub phase: Phase,
    pub messages_sent: u32,
    pub last_activity: DateTime<Utc>,
    #[serde(default)]
    pub opted_out: bool,
    #[serde(default)]
    pub classification: Option<ActionClassification>,
    /// A handed-off conversation has a reply the activist has not answered.
    #[serde(default)]
    pub awaiting_activist: bool,
}

impl ConversationState {
    pub fn new(target: TargetUser) -> Self {
        Self {
            last_activity: target.discovered_at,
            target,
            phase: Phase::Created,
            messages_sent: 0,
            opted_out: false,
            classification: None,
            awaiting_activist: false,
        }
    }

    pub fn transition(&mut self, to: Phase) -> Result<(), BotError> {
        if !self.phase.can_transition(to) {
            return Err(BotError::IllegalTransition {
                user: self.target.user_id.clone(),
                from: self.phase,
                to,
            });
        }
        self.phase = to;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLabel {
    Evangelist,
    Defender,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionClassification {
    pub label: ActionLabel,
    pub matched_cues: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateCaps {
    pub exposures_per_hour: u32,
    /// Automated messages one user may receive; activist replies are not counted.
    pub messages_per_user: u32,
    pub idle_timeout_hours: i64,
}

impl Default for RateCaps {
    fn default() -> Self {
        Self {
            exposures_per_hour: 10,
            messages_per_user: 3,
            idle_timeout_hours: 72,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: Duration::from_secs(2),
        }
    }
}

/// Everything a conversation step needs besides the state itself.
#[derive(Debug, Clone)]
pub struct ConversationPolicy {
    pub templates: TemplateSet,
    pub lexicon: CueLexicon,
    pub retry: RetryPolicy,
}

impl ConversationPolicy {
    /// Shipped Spanish templates and lexicon.
    pub fn spanish_defaults() -> Self {
        Self {
            templates: TemplateSet::spanish_default(),
            lexicon: CueLexicon::spanish_default(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Draft,
    Active,
    Paused,
    Finished,
}

impl CampaignStatus {
    pub fn can_transition(self, to: CampaignStatus) -> bool {
        use CampaignStatus::*;
        matches!(
            (self, to),
            (Draft, Active) | (Active, Paused) | (Paused, Active) | (Active, Finished)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: String,
    pub story_id: String,
    pub macro_id: String,
    pub terms: Vec<String>,
    pub status: CampaignStatus,
    #[serde(default)]
    pub caps: RateCaps,
    pub created_by: String,
    /// Link shared in exposure posts: the story's public exploration page.
    pub macro_url: String,
    #[serde(default = "default_target_limit")]
    pub target_limit: usize,
    #[serde(default = "default_template")]
    pub template_id: String,
    /// Scheduler passes completed so far.
    #[serde(default)]
    pub ticks_run: u64,
}

fn default_target_limit() -> usize {
    30
}

fn default_template() -> String {
    "exposure".to_string()
}

impl Campaign {
    pub fn set_status(&mut self, to: CampaignStatus) -> Result<(), BotError> {
        if !self.status.can_transition(to) {
            return Err(BotError::Precondition(format!(
                "campaign status {:?} -> {:?} is not allowed",
                self.status, to
            )));
        }
        self.status = to;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_table_is_exactly_the_legal_list() {
        use Phase::*;
        let legal = [
            (Created, Exposed),
            (Exposed, AwaitingOpinion),
            (AwaitingOpinion, AwaitingActionIdeas),
            (AwaitingActionIdeas, HandedToActivist),
            (AwaitingActionIdeas, Closed),
            (AwaitingOpinion, Closed),
            (HandedToActivist, Closed),
        ];
        for from in Phase::ALL {
            for to in Phase::ALL {
                assert_eq!(
                    from.can_transition(to),
                    legal.contains(&(from, to)),
                    "{from:?} -> {to:?}"
                );
            }
        }
    }

    #[test]
    fn campaign_status_transitions() {
        use CampaignStatus::*;
        assert!(Draft.can_transition(Active));
        assert!(Active.can_transition(Paused));
        assert!(Paused.can_transition(Active));
        assert!(Active.can_transition(Finished));
        assert!(!Draft.can_transition(Finished));
        assert!(!Paused.can_transition(Finished));
        assert!(!Finished.can_transition(Active));
        assert!(!Active.can_transition(Draft));
    }
}

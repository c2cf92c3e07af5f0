//! Campaign bots: find people talking about the story, show them the macro,
//! ask what can be done, and hand the conversation to an activist.
//!
//! Every effect is recorded as an [`EngagementEvent`]; a [`CampaignLedger`]
//! is the fold of those events and is the only place conversation state
//! lives. The tick scheduler produces events by applying them to a copy of
//! the ledger, so live state and replayed state cannot drift apart.

mod engine;
mod events;
mod lexicon;
mod platform;
mod types;

pub use engine::{
    activist_close, activist_reply, advance_conversation, discover_targets, post_exposure, run_campaign_tick,
    Advance,
};
pub use events::{CampaignLedger, CloseReason, EngagementEvent, EventKind, EventPayload, Sender};
pub use lexicon::{classify_response, fold_text, CueLexicon, TemplateSet, ACTION_QUESTION};
pub use platform::{
    HttpPlatform, IncomingReply, MockFixture, MockPlatform, MockPost, MockReply, MockUser, OutgoingMessage,
    PlatformClient, PlatformError, Post,
};
pub use types::{
    ActionClassification, ActionLabel, Campaign, CampaignStatus, ConversationPolicy, ConversationState,
    Phase, RateCaps, RetryPolicy, TargetUser,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BotError {
    #[error("platform unavailable: {0}")]
    PlatformUnavailable(String),
    #[error("platform rate limit hit, retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: u64 },
    #[error("sending to {user} failed: {reason}")]
    SendFailure { user: String, reason: String },
    #[error("cap exceeded: {0}")]
    CapExceeded(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("illegal transition {from:?} -> {to:?} for {user}")]
    IllegalTransition { user: String, from: Phase, to: Phase },
    #[error("stale state: {0}")]
    StaleState(String),
    #[error("campaign {0} is not active")]
    CampaignInactive(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pipeline::explore_url;
use super::{compute_stats, CampaignStats, DataStore, ServiceError};
use crate::bot::{
    activist_close, activist_reply, run_campaign_tick, ActionClassification, Campaign, CampaignLedger,
    CampaignStatus, ConversationPolicy, EngagementEvent, EventPayload, Phase, PlatformClient, RateCaps,
    RetryPolicy, Sender,
};
use crate::ingest::is_safe_id;

/// Body of a campaign-creation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewCampaign {
    #[serde(default)]
    pub campaign_id: Option<String>,
    pub story_id: String,
    pub macro_id: String,
    pub terms: Vec<String>,
    #[serde(default)]
    pub caps: Option<RateCaps>,
    #[serde(default)]
    pub created_by: String,
    #[serde(default)]
    pub target_limit: Option<usize>,
    #[serde(default)]
    pub template_id: Option<String>,
}

/// Create a draft campaign. The macro must belong to the campaign's story;
/// exposure posts link to that story's exploration page.
pub fn create_campaign(
    store: &DataStore,
    req: &NewCampaign,
    default_caps: RateCaps,
    public_base_url: &str,
) -> Result<Campaign, ServiceError> {
    let terms: Vec<String> = req
        .terms
        .iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if terms.is_empty() {
        return Err(ServiceError::Invalid(
            "at least one targeting term is required".into(),
        ));
    }
    let m = store.load_macro(&req.story_id, &req.macro_id)?;
    if m.story_id != req.story_id {
        return Err(ServiceError::Invalid(format!(
            "macro {} belongs to story {}",
            m.macro_id, m.story_id
        )));
    }
    let caps = req.caps.unwrap_or(default_caps);
    if caps.exposures_per_hour == 0 || caps.messages_per_user == 0 || caps.idle_timeout_hours <= 0 {
        return Err(ServiceError::Invalid("rate caps must be positive".into()));
    }
    let target_limit = req.target_limit.unwrap_or(30);
    if target_limit == 0 {
        return Err(ServiceError::Invalid("target_limit must be positive".into()));
    }
    let campaign_id = match &req.campaign_id {
        Some(id) if is_safe_id(id) => id.clone(),
        Some(id) => return Err(ServiceError::Invalid(format!("bad campaign id {id:?}"))),
        None => {
            let n = store.list_campaigns()?.len();
            let mut h = Sha256::new();
            for part in [
                &req.story_id,
                &req.macro_id,
                &req.created_by,
                &terms.join("\u{1f}"),
            ] {
                h.update(part.as_bytes());
                h.update([0]);
            }
            h.update(n.to_le_bytes());
            format!("c-{}", &hex::encode(h.finalize())[..10])
        }
    };
    let campaign = Campaign {
        campaign_id,
        story_id: req.story_id.clone(),
        macro_id: req.macro_id.clone(),
        terms,
        status: CampaignStatus::Draft,
        caps,
        created_by: req.created_by.clone(),
        macro_url: explore_url(public_base_url, &req.story_id)?,
        target_limit,
        template_id: req.template_id.clone().unwrap_or_else(|| "exposure".into()),
        ticks_run: 0,
    };
    store.create_campaign_record(&campaign)?;
    Ok(campaign)
}

pub fn set_campaign_status(
    store: &DataStore,
    campaign_id: &str,
    status: CampaignStatus,
) -> Result<Campaign, ServiceError> {
    let mut c = store.load_campaign(campaign_id)?;
    c.set_status(status)?;
    store.save_campaign(&c)?;
    Ok(c)
}

fn load_ledger(store: &DataStore, campaign_id: &str) -> Result<CampaignLedger, ServiceError> {
    let events = store.load_events(campaign_id)?;
    Ok(CampaignLedger::replay(campaign_id, &events)?)
}

/// One scheduler pass, persisted. Callers must serialize calls per campaign.
pub fn tick_campaign(
    store: &DataStore,
    campaign_id: &str,
    platform: &dyn PlatformClient,
    policy: &ConversationPolicy,
    now: DateTime<Utc>,
) -> Result<Vec<EngagementEvent>, ServiceError> {
    let mut campaign = store.load_campaign(campaign_id)?;
    let mut ledger = load_ledger(store, campaign_id)?;
    platform.sync_tick(campaign.ticks_run);
    let events = run_campaign_tick(&campaign, &mut ledger, platform, policy, now)?;
    store.append_events(campaign_id, &events)?;
    campaign.ticks_run += 1;
    store.save_campaign(&campaign)?;
    Ok(events)
}

pub fn campaign_stats(store: &DataStore, campaign_id: &str) -> Result<CampaignStats, ServiceError> {
    Ok(compute_stats(&store.load_events(campaign_id)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageAuthor {
    Bot,
    User,
    Activist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueMessage {
    pub at: DateTime<Utc>,
    pub from: MessageAuthor,
    pub text: String,
}

/// A handed-off conversation waiting for activist attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    /// The targeted user's id; used in queue URLs.
    pub conversation_id: String,
    pub handle: String,
    pub phase: Phase,
    pub classification: Option<ActionClassification>,
    /// The user wrote after the last activist reply.
    pub awaiting_activist: bool,
    pub messages_sent: u32,
    pub last_activity: DateTime<Utc>,
    pub history: Vec<QueueMessage>,
}

/// Conversations in the supervision queue, in targeting order, each with its
/// full message history.
pub fn supervision_queue(store: &DataStore, campaign_id: &str) -> Result<Vec<QueueItem>, ServiceError> {
    let events = store.load_events(campaign_id)?;
    let ledger = CampaignLedger::replay(campaign_id, &events)?;
    let mut items = Vec::new();
    for conv in ledger
        .conversations()
        .filter(|c| c.phase == Phase::HandedToActivist)
    {
        let user = conv.target.user_id.as_str();
        let history = events
            .iter()
            .filter(|e| e.user_id == user)
            .filter_map(|e| {
                let (from, text) = match &e.payload {
                    EventPayload::ExposurePosted { text, .. } => (MessageAuthor::Bot, text),
                    EventPayload::ReplyReceived { text, .. } => (MessageAuthor::User, text),
                    EventPayload::BotReplySent { text, sender, .. } => match sender {
                        Sender::Bot => (MessageAuthor::Bot, text),
                        Sender::Activist { .. } => (MessageAuthor::Activist, text),
                    },
                    _ => return None,
                };
                Some(QueueMessage {
                    at: e.at,
                    from,
                    text: text.clone(),
                })
            })
            .collect();
        items.push(QueueItem {
            conversation_id: user.to_string(),
            handle: conv.target.handle.clone(),
            phase: conv.phase,
            classification: conv.classification.clone(),
            awaiting_activist: conv.awaiting_activist,
            messages_sent: conv.messages_sent,
            last_activity: conv.last_activity,
            history,
        });
    }
    Ok(items)
}

/// Send an activist's manual reply. Callers must serialize per campaign.
#[allow(clippy::too_many_arguments)]
pub fn handoff_reply(
    store: &DataStore,
    campaign_id: &str,
    conversation_id: &str,
    activist_id: &str,
    text: &str,
    platform: &dyn PlatformClient,
    retry: &RetryPolicy,
    now: DateTime<Utc>,
) -> Result<EngagementEvent, ServiceError> {
    let campaign = store.load_campaign(campaign_id)?;
    let mut ledger = load_ledger(store, campaign_id)?;
    let ev = activist_reply(
        platform,
        &campaign,
        &mut ledger,
        conversation_id,
        activist_id,
        text,
        retry,
        now,
    )?;
    store.append_events(campaign_id, std::slice::from_ref(&ev))?;
    Ok(ev)
}

pub fn close_conversation(
    store: &DataStore,
    campaign_id: &str,
    conversation_id: &str,
    now: DateTime<Utc>,
) -> Result<EngagementEvent, ServiceError> {
    let campaign = store.load_campaign(campaign_id)?;
    let mut ledger = load_ledger(store, campaign_id)?;
    let ev = activist_close(&campaign, &mut ledger, conversation_id, now)?;
    store.append_events(campaign_id, std::slice::from_ref(&ev))?;
    Ok(ev)
}

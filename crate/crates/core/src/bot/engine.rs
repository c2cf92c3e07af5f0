use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use log::{info, warn};

use super::{
    classify_response, ActionClassification, BotError, Campaign, CampaignLedger, CampaignStatus, CloseReason,
    ConversationPolicy, ConversationState, EngagementEvent, EventPayload, OutgoingMessage, Phase,
    PlatformClient, PlatformError, RetryPolicy, Sender, TargetUser, ACTION_QUESTION,
};

fn platform_err(user: &str, e: PlatformError) -> BotError {
    match e {
        PlatformError::Unavailable(m) => BotError::PlatformUnavailable(m),
        PlatformError::RateLimited { retry_after_ms } => BotError::RateLimited { retry_after_ms },
        PlatformError::Rejected(reason) => BotError::SendFailure {
            user: user.to_string(),
            reason,
        },
    }
}

/// Rate limits are always waited out; other errors are retried only when
/// `retry_all` is set (sends), with linear backoff.
fn with_retry<T>(
    policy: &RetryPolicy,
    retry_all: bool,
    what: &str,
    mut call: impl FnMut() -> Result<T, PlatformError>,
) -> Result<T, PlatformError> {
    let attempts = policy.attempts.max(1);
    let mut attempt = 1;
    loop {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) if attempt < attempts => {
                let wait = match &e {
                    PlatformError::RateLimited { retry_after_ms } => {
                        std::time::Duration::from_millis(*retry_after_ms)
                    }
                    _ if retry_all => policy.backoff * attempt,
                    _ => return Err(e),
                };
                warn!("{what}: {e}; attempt {attempt}/{attempts}, waiting {wait:?}");
                std::thread::sleep(wait);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Users whose posts match any term, most recent matching post first, then by
/// user id. A user appears once with every term they matched.
pub fn discover_targets(
    platform: &dyn PlatformClient,
    terms: &[String],
    limit: usize,
    now: DateTime<Utc>,
    retry: &RetryPolicy,
) -> Result<Vec<TargetUser>, BotError> {
    let terms: Vec<String> = terms
        .iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if terms.is_empty() {
        return Err(BotError::Precondition(
            "at least one search term is required".into(),
        ));
    }
    if limit == 0 {
        return Err(BotError::Precondition("limit must be positive".into()));
    }
    let posts = with_retry(retry, false, "search", || platform.search_posts(&terms))
        .map_err(|e| platform_err("", e))?;

    struct Hit {
        handle: String,
        latest: DateTime<Utc>,
        post_id: String,
        matched: Vec<bool>,
    }
    let mut by_user: BTreeMap<String, Hit> = BTreeMap::new();
    for post in &posts {
        let text = post.text.to_lowercase();
        let tags: Vec<String> = post
            .hashtags
            .iter()
            .map(|h| h.trim_start_matches('#').to_lowercase())
            .collect();
        let matched: Vec<bool> = terms
            .iter()
            .map(|t| {
                let lt = t.to_lowercase();
                tags.iter().any(|h| *h == lt.trim_start_matches('#')) || text.contains(&lt)
            })
            .collect();
        if !matched.iter().any(|m| *m) {
            continue;
        }
        let hit = by_user.entry(post.user_id.clone()).or_insert_with(|| Hit {
            handle: post.handle.clone(),
            latest: post.posted_at,
            post_id: post.post_id.clone(),
            matched: vec![false; terms.len()],
        });
        if (post.posted_at, &post.post_id) > (hit.latest, &hit.post_id) {
            hit.latest = post.posted_at;
            hit.post_id = post.post_id.clone();
        }
        for (acc, m) in hit.matched.iter_mut().zip(matched) {
            *acc |= m;
        }
    }

    let mut users: Vec<(String, Hit)> = by_user.into_iter().collect();
    users.sort_by(|(ua, a), (ub, b)| b.latest.cmp(&a.latest).then_with(|| ua.cmp(ub)));
    Ok(users
        .into_iter()
        .take(limit)
        .map(|(user_id, hit)| TargetUser {
            user_id,
            handle: hit.handle,
            matched_terms: terms
                .iter()
                .zip(&hit.matched)
                .filter(|(_, m)| **m)
                .map(|(t, _)| t.clone())
                .collect(),
            matched_post_id: hit.post_id,
            discovered_at: now,
        })
        .collect())
}

fn send(
    platform: &dyn PlatformClient,
    retry: &RetryPolicy,
    target: &TargetUser,
    text: &str,
) -> Result<String, BotError> {
    let msg = OutgoingMessage {
        to_user_id: target.user_id.clone(),
        to_handle: target.handle.clone(),
        text: text.to_string(),
    };
    with_retry(retry, true, "send", || platform.send_message(&msg))
        .map_err(|e| platform_err(&target.user_id, e))
}

/// Mention a targeted user with the macro link. Caps are checked before any
/// platform call; a failed send leaves the ledger unchanged.
pub fn post_exposure(
    platform: &dyn PlatformClient,
    campaign: &Campaign,
    ledger: &mut CampaignLedger,
    user_id: &str,
    policy: &ConversationPolicy,
    now: DateTime<Utc>,
) -> Result<EngagementEvent, BotError> {
    if campaign.status != CampaignStatus::Active {
        return Err(BotError::CampaignInactive(campaign.campaign_id.clone()));
    }
    let conv = ledger
        .conversation(user_id)
        .ok_or_else(|| BotError::UnknownUser(user_id.to_string()))?;
    if conv.opted_out {
        return Err(BotError::Precondition(format!("{user_id} opted out")));
    }
    if conv.phase != Phase::Created {
        return Err(BotError::Precondition(format!(
            "{user_id} is in phase {:?}, exposure needs Created",
            conv.phase
        )));
    }
    if conv.messages_sent >= campaign.caps.messages_per_user {
        return Err(BotError::CapExceeded(format!(
            "per-user cap reached for {user_id}"
        )));
    }
    let hourly = ledger.exposures_in_last_hour(now);
    if hourly >= campaign.caps.exposures_per_hour as usize {
        return Err(BotError::CapExceeded(format!(
            "{hourly} exposures in the last hour (cap {})",
            campaign.caps.exposures_per_hour
        )));
    }
    let target = conv.target.clone();
    let text = policy.templates.render(
        &campaign.template_id,
        &[("handle", &target.handle), ("macro_url", &campaign.macro_url)],
    )?;
    let message_id = send(platform, &policy.retry, &target, &text)?;
    ledger.emit(
        user_id,
        now,
        EventPayload::ExposurePosted {
            message_id,
            macro_url: campaign.macro_url.clone(),
            text,
        },
    )
}

/// Outcome of feeding one reply to a conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub next: ConversationState,
    pub outgoing: Option<String>,
    pub classification: Option<ActionClassification>,
    pub opted_out: bool,
}

/// Pure conversation step. Opt-out words close the conversation before
/// anything else is considered.
pub fn advance_conversation(
    state: &ConversationState,
    incoming: &str,
    policy: &ConversationPolicy,
) -> Result<Advance, BotError> {
    if !matches!(state.phase, Phase::AwaitingOpinion | Phase::AwaitingActionIdeas) {
        return Err(BotError::StaleState(format!(
            "reply for {} in phase {:?}",
            state.target.user_id, state.phase
        )));
    }
    let mut next = state.clone();
    if policy.lexicon.is_opt_out(incoming) {
        next.opted_out = true;
        next.transition(Phase::Closed)?;
        return Ok(Advance {
            next,
            outgoing: None,
            classification: None,
            opted_out: true,
        });
    }
    match state.phase {
        Phase::AwaitingOpinion => {
            let text = policy
                .templates
                .render(ACTION_QUESTION, &[("handle", &state.target.handle)])?;
            next.transition(Phase::AwaitingActionIdeas)?;
            next.messages_sent += 1;
            Ok(Advance {
                next,
                outgoing: Some(text),
                classification: None,
                opted_out: false,
            })
        }
        _ => {
            let c = classify_response(incoming, &policy.lexicon);
            next.classification = Some(c.clone());
            next.transition(Phase::HandedToActivist)?;
            next.awaiting_activist = true;
            Ok(Advance {
                next,
                outgoing: None,
                classification: Some(c),
                opted_out: false,
            })
        }
    }
}

/// Record one reply and its consequences. On error the ledger is untouched
/// and the reply stays unseen, so the next tick retries it.
fn handle_reply(
    platform: &dyn PlatformClient,
    campaign: &Campaign,
    ledger: &mut CampaignLedger,
    policy: &ConversationPolicy,
    reply: &super::IncomingReply,
    now: DateTime<Utc>,
) -> Result<Vec<EngagementEvent>, BotError> {
    let conv = ledger
        .conversation(&reply.user_id)
        .cloned()
        .ok_or_else(|| BotError::UnknownUser(reply.user_id.clone()))?;
    let mut work = ledger.clone();
    let mut out = Vec::new();
    let user = reply.user_id.as_str();
    out.push(work.emit(
        user,
        now,
        EventPayload::ReplyReceived {
            reply_id: reply.reply_id.clone(),
            text: reply.text.clone(),
        },
    )?);

    if conv.phase == Phase::HandedToActivist {
        if policy.lexicon.is_opt_out(&reply.text) {
            out.push(work.emit(
                user,
                now,
                EventPayload::OptedOut {
                    reply_id: reply.reply_id.clone(),
                },
            )?);
            out.push(work.emit(
                user,
                now,
                EventPayload::Closed {
                    reason: CloseReason::OptOut,
                },
            )?);
        }
        *ledger = work;
        return Ok(out);
    }

    let adv = advance_conversation(&conv, &reply.text, policy)?;
    if adv.opted_out {
        out.push(work.emit(
            user,
            now,
            EventPayload::OptedOut {
                reply_id: reply.reply_id.clone(),
            },
        )?);
        out.push(work.emit(
            user,
            now,
            EventPayload::Closed {
                reason: CloseReason::OptOut,
            },
        )?);
    } else if let Some(text) = adv.outgoing {
        if conv.messages_sent >= campaign.caps.messages_per_user {
            out.push(work.emit(
                user,
                now,
                EventPayload::Closed {
                    reason: CloseReason::CapReached,
                },
            )?);
        } else {
            let message_id = send(platform, &policy.retry, &conv.target, &text)?;
            out.push(work.emit(
                user,
                now,
                EventPayload::BotReplySent {
                    message_id,
                    text,
                    sender: Sender::Bot,
                },
            )?);
        }
    } else if let Some(classification) = adv.classification {
        out.push(work.emit(user, now, EventPayload::Classified { classification })?);
        out.push(work.emit(user, now, EventPayload::HandedOff {})?);
    }
    *ledger = work;
    Ok(out)
}

/// One scheduler pass: poll replies, top up targets, advance conversations,
/// close idle ones, then send exposures under the caps. If polling or search
/// fails the ledger is left exactly as it was.
pub fn run_campaign_tick(
    campaign: &Campaign,
    ledger: &mut CampaignLedger,
    platform: &dyn PlatformClient,
    policy: &ConversationPolicy,
    now: DateTime<Utc>,
) -> Result<Vec<EngagementEvent>, BotError> {
    if campaign.status != CampaignStatus::Active {
        return Err(BotError::CampaignInactive(campaign.campaign_id.clone()));
    }
    let mut work = ledger.clone();
    let mut events = Vec::new();

    let replies = with_retry(&policy.retry, false, "poll", || platform.poll_replies())
        .map_err(|e| platform_err("", e))?;

    if work.target_count() < campaign.target_limit {
        let found = discover_targets(platform, &campaign.terms, usize::MAX, now, &policy.retry)?;
        let need = campaign.target_limit - work.target_count();
        let fresh: Vec<TargetUser> = found
            .into_iter()
            .filter(|t| work.conversation(&t.user_id).is_none())
            .take(need)
            .collect();
        for target in fresh {
            let user = target.user_id.clone();
            events.push(work.emit(&user, now, EventPayload::Targeted { target })?);
        }
    }

    for reply in &replies {
        if work.has_seen_reply(&reply.reply_id) {
            continue;
        }
        // Replies from strangers, unexposed users, or closed conversations
        // are not part of the campaign.
        match work.conversation(&reply.user_id) {
            Some(c) if c.phase.accepts_replies() => {}
            _ => continue,
        }
        match handle_reply(platform, campaign, &mut work, policy, reply, now) {
            Ok(evs) => events.extend(evs),
            Err(e) => warn!("reply {} from {} deferred: {e}", reply.reply_id, reply.user_id),
        }
    }

    let idle = Duration::hours(campaign.caps.idle_timeout_hours);
    let idle_users: Vec<String> = work
        .conversations()
        .filter(|c| matches!(c.phase, Phase::AwaitingOpinion | Phase::AwaitingActionIdeas))
        .filter(|c| now - c.last_activity >= idle)
        .map(|c| c.target.user_id.clone())
        .collect();
    for user in idle_users {
        events.push(work.emit(
            &user,
            now,
            EventPayload::Closed {
                reason: CloseReason::Timeout,
            },
        )?);
    }

    let pending: Vec<String> = work
        .conversations()
        .filter(|c| c.phase == Phase::Created && !c.opted_out)
        .map(|c| c.target.user_id.clone())
        .collect();
    for user in pending {
        if work.exposures_in_last_hour(now) >= campaign.caps.exposures_per_hour as usize {
            break;
        }
        match post_exposure(platform, campaign, &mut work, &user, policy, now) {
            Ok(ev) => events.push(ev),
            Err(e) => warn!("exposure to {user} skipped: {e}"),
        }
    }

    info!(
        "campaign {} tick at {now}: {} events",
        campaign.campaign_id,
        events.len()
    );
    *ledger = work;
    Ok(events)
}

fn supervised<'a>(
    campaign: &Campaign,
    ledger: &'a CampaignLedger,
    user_id: &str,
) -> Result<&'a ConversationState, BotError> {
    if !matches!(campaign.status, CampaignStatus::Active | CampaignStatus::Paused) {
        return Err(BotError::CampaignInactive(campaign.campaign_id.clone()));
    }
    let conv = ledger
        .conversation(user_id)
        .ok_or_else(|| BotError::UnknownUser(user_id.to_string()))?;
    if conv.phase != Phase::HandedToActivist {
        return Err(BotError::Precondition(format!(
            "{user_id} is not in the supervision queue (phase {:?})",
            conv.phase
        )));
    }
    Ok(conv)
}

/// Manual reply from an activist to a handed-off conversation.
#[allow(clippy::too_many_arguments)]
pub fn activist_reply(
    platform: &dyn PlatformClient,
    campaign: &Campaign,
    ledger: &mut CampaignLedger,
    user_id: &str,
    activist_id: &str,
    text: &str,
    retry: &RetryPolicy,
    now: DateTime<Utc>,
) -> Result<EngagementEvent, BotError> {
    let conv = supervised(campaign, ledger, user_id)?;
    if conv.opted_out {
        return Err(BotError::Precondition(format!("{user_id} opted out")));
    }
    if text.trim().is_empty() {
        return Err(BotError::Precondition("reply text is empty".into()));
    }
    let target = conv.target.clone();
    let message_id = send(platform, retry, &target, text)?;
    ledger.emit(
        user_id,
        now,
        EventPayload::BotReplySent {
            message_id,
            text: text.to_string(),
            sender: Sender::Activist {
                activist_id: activist_id.to_string(),
            },
        },
    )
}

/// An activist ends a handed-off conversation.
pub fn activist_close(
    campaign: &Campaign,
    ledger: &mut CampaignLedger,
    user_id: &str,
    now: DateTime<Utc>,
) -> Result<EngagementEvent, BotError> {
    supervised(campaign, ledger, user_id)?;
    ledger.emit(
        user_id,
        now,
        EventPayload::Closed {
            reason: CloseReason::Activist,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bot::{MockFixture, MockPlatform, MockPost, MockReply, MockUser, RateCaps};
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2017, 1, 10, 12, 0, 0).unwrap()
    }

    fn policy() -> ConversationPolicy {
        let mut p = ConversationPolicy::spanish_defaults();
        p.retry.backoff = std::time::Duration::ZERO;
        p
    }

    fn campaign() -> Campaign {
        Campaign {
            campaign_id: "c1".into(),
            story_id: "energy-reform".into(),
            macro_id: "m-1".into(),
            terms: vec!["#Gasolinazo".into()],
            status: CampaignStatus::Active,
            caps: RateCaps::default(),
            created_by: "ana".into(),
            macro_url: "https://example.org/s/energy-reform".into(),
            target_limit: 30,
            template_id: "exposure".into(),
            ticks_run: 0,
        }
    }

    fn fixture(users: usize, matching: usize) -> MockFixture {
        let mut f = MockFixture::default();
        for i in 0..users {
            let id = format!("u{i:02}");
            f.users.push(MockUser {
                user_id: id.clone(),
                handle: format!("h{i:02}"),
            });
            let tags = if i < matching {
                vec!["#Gasolinazo".to_string()]
            } else {
                vec![]
            };
            f.posts.push(MockPost {
                post_id: format!("p{i:02}"),
                user_id: id,
                text: "precio".into(),
                hashtags: tags,
                posted_at: t0() - Duration::minutes(i as i64),
            });
        }
        f
    }

    #[test]
    fn discovery_limit_order_and_merge() {
        let mut f = fixture(40, 35);
        let p = MockPlatform::new(f.clone());
        let got = discover_targets(&p, &["#Gasolinazo".into()], 30, t0(), &RetryPolicy::default()).unwrap();
        assert_eq!(got.len(), 30);
        assert_eq!(got[0].user_id, "u00");
        assert!(got.windows(2).all(|w| w[0].user_id < w[1].user_id));

        f.posts.push(MockPost {
            post_id: "extra".into(),
            user_id: "u05".into(),
            text: "#PEMEX quiebra".into(),
            hashtags: vec![],
            posted_at: t0() + Duration::minutes(1),
        });
        let p = MockPlatform::new(f);
        let terms = vec!["#Gasolinazo".to_string(), "#PEMEX".to_string()];
        let got = discover_targets(&p, &terms, 100, t0(), &RetryPolicy::default()).unwrap();
        assert_eq!(got.len(), 35);
        assert_eq!(got.iter().filter(|t| t.user_id == "u05").count(), 1);
        assert_eq!(got[0].user_id, "u05");
        assert_eq!(got[0].matched_terms, terms);
        assert_eq!(got[0].matched_post_id, "extra");

        let none = discover_targets(&p, &["#nada".into()], 5, t0(), &RetryPolicy::default()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn discovery_waits_out_rate_limits() {
        let p = MockPlatform::new(fixture(3, 3));
        p.rate_limit_next(2);
        let got = discover_targets(&p, &["#Gasolinazo".into()], 30, t0(), &RetryPolicy::default()).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(p.search_calls(), 3);
    }

    fn targeted(ledger: &mut CampaignLedger, p: &MockPlatform, n: usize) {
        for t in discover_targets(p, &["#Gasolinazo".into()], n, t0(), &RetryPolicy::default()).unwrap() {
            let u = t.user_id.clone();
            ledger
                .emit(&u, t0(), EventPayload::Targeted { target: t })
                .unwrap();
        }
    }

    #[test]
    fn exposure_transitions_and_guards() {
        let p = MockPlatform::new(fixture(2, 2));
        let mut l = CampaignLedger::new("c1");
        targeted(&mut l, &p, 2);
        let ev = post_exposure(&p, &campaign(), &mut l, "u00", &policy(), t0()).unwrap();
        assert!(matches!(ev.payload, EventPayload::ExposurePosted { .. }));
        let c = l.conversation("u00").unwrap();
        assert_eq!((c.phase, c.messages_sent), (Phase::AwaitingOpinion, 1));
        assert!(p.sent()[0].1.text.contains("https://example.org/s/energy-reform"));

        let before = l.clone();
        assert!(matches!(
            post_exposure(&p, &campaign(), &mut l, "u00", &policy(), t0()),
            Err(BotError::Precondition(_))
        ));
        assert_eq!(p.sent_count(), 1);

        p.fail_sends_to("u01", true);
        assert!(matches!(
            post_exposure(&p, &campaign(), &mut l, "u01", &policy(), t0()),
            Err(BotError::SendFailure { .. })
        ));
        assert_eq!(l, before);

        let mut paused = campaign();
        paused.status = CampaignStatus::Paused;
        assert!(matches!(
            post_exposure(&p, &paused, &mut l, "u01", &policy(), t0()),
            Err(BotError::CampaignInactive(_))
        ));
    }

    #[test]
    fn hourly_cap_blocks_the_eleventh_send() {
        let p = MockPlatform::new(fixture(11, 11));
        let mut l = CampaignLedger::new("c1");
        targeted(&mut l, &p, 11);
        let users: Vec<String> = l.conversations().map(|c| c.target.user_id.clone()).collect();
        for (i, u) in users.iter().enumerate() {
            let at = t0() + Duration::minutes(i as i64);
            let r = post_exposure(&p, &campaign(), &mut l, u, &policy(), at);
            if i < 10 {
                r.unwrap();
            } else {
                assert!(matches!(r, Err(BotError::CapExceeded(_))));
            }
        }
        assert_eq!(p.sent_count(), 10);
    }

    #[test]
    fn advance_examples() {
        let pol = policy();
        let target = TargetUser {
            user_id: "u".into(),
            handle: "pepe".into(),
            matched_terms: vec!["#PEMEX".into()],
            matched_post_id: "p".into(),
            discovered_at: t0(),
        };
        let mut s = ConversationState::new(target);
        s.phase = Phase::AwaitingOpinion;
        s.messages_sent = 1;

        let a = advance_conversation(&s, "sí, se ve raro", &pol).unwrap();
        assert_eq!(a.next.phase, Phase::AwaitingActionIdeas);
        assert_eq!(
            a.outgoing.as_deref(),
            Some(
                pol.templates
                    .render(ACTION_QUESTION, &[("handle", "pepe")])
                    .unwrap()
                    .as_str()
            )
        );

        let b = advance_conversation(&a.next, "voy a compartir esto con mis amigos", &pol).unwrap();
        assert_eq!(b.next.phase, Phase::HandedToActivist);
        assert_eq!(
            b.classification.unwrap().label,
            crate::bot::ActionLabel::Evangelist
        );
        assert!(b.outgoing.is_none());

        let c = advance_conversation(&s, "no me escribas", &pol).unwrap();
        assert!(c.opted_out && c.outgoing.is_none());
        assert_eq!(c.next.phase, Phase::Closed);

        assert!(matches!(
            advance_conversation(&b.next, "hola", &pol),
            Err(BotError::StaleState(_))
        ));
    }

    fn replies(f: &mut MockFixture, items: &[(u64, &str, &str)]) {
        for (tick, user, text) in items {
            f.reply_schedule.push(MockReply {
                tick: *tick,
                reply_id: None,
                user_id: user.to_string(),
                text: text.to_string(),
            });
        }
    }

    #[test]
    fn tick_flow_idempotence_and_atomic_abort() {
        let mut f = fixture(3, 3);
        replies(
            &mut f,
            &[(1, "u00", "qué raro"), (1, "u01", "no lo había notado")],
        );
        let p = MockPlatform::new(f);
        let c = campaign();
        let pol = policy();
        let mut l = CampaignLedger::new("c1");

        let first = run_campaign_tick(&c, &mut l, &p, &pol, t0()).unwrap();
        assert_eq!(first.len(), 6);
        assert!(run_campaign_tick(&c, &mut l, &p, &pol, t0()).unwrap().is_empty());

        p.advance_tick();
        let second = run_campaign_tick(&c, &mut l, &p, &pol, t0() + Duration::hours(1)).unwrap();
        let received = second
            .iter()
            .filter(|e| matches!(e.payload, EventPayload::ReplyReceived { .. }))
            .count();
        assert_eq!(received, 2);
        assert_eq!(second.len(), 4);
        assert!(run_campaign_tick(&c, &mut l, &p, &pol, t0() + Duration::hours(1))
            .unwrap()
            .is_empty());

        let before = l.clone();
        p.set_unavailable(true);
        assert!(matches!(
            run_campaign_tick(&c, &mut l, &p, &pol, t0() + Duration::hours(2)),
            Err(BotError::PlatformUnavailable(_))
        ));
        assert_eq!(l, before);
    }

    #[test]
    fn timeouts_and_handoff_queue() {
        let mut f = fixture(2, 2);
        replies(
            &mut f,
            &[
                (1, "u00", "sí"),
                (2, "u00", "tienen razón"),
                (3, "u00", "gracias"),
            ],
        );
        let p = MockPlatform::new(f);
        let c = campaign();
        let pol = policy();
        let mut l = CampaignLedger::new("c1");
        run_campaign_tick(&c, &mut l, &p, &pol, t0()).unwrap();
        for h in 1..=3 {
            p.advance_tick();
            run_campaign_tick(&c, &mut l, &p, &pol, t0() + Duration::hours(h)).unwrap();
        }
        let u0 = l.conversation("u00").unwrap();
        assert_eq!(u0.phase, Phase::HandedToActivist);
        assert!(u0.awaiting_activist);
        assert_eq!(
            u0.classification.as_ref().unwrap().label,
            crate::bot::ActionLabel::Defender
        );

        activist_reply(
            &p,
            &c,
            &mut l,
            "u00",
            "ana",
            "¡Gracias!",
            &pol.retry,
            t0() + Duration::hours(4),
        )
        .unwrap();
        assert!(!l.conversation("u00").unwrap().awaiting_activist);
        assert_eq!(l.conversation("u00").unwrap().messages_sent, 2);

        let evs = run_campaign_tick(&c, &mut l, &p, &pol, t0() + Duration::hours(72)).unwrap();
        assert_eq!(evs.len(), 1);
        assert!(matches!(
            evs[0].payload,
            EventPayload::Closed {
                reason: CloseReason::Timeout
            }
        ));
        assert_eq!(l.conversation("u01").unwrap().phase, Phase::Closed);

        activist_close(&c, &mut l, "u00", t0() + Duration::hours(73)).unwrap();
        assert!(activist_close(&c, &mut l, "u00", t0() + Duration::hours(73)).is_err());
    }

    #[test]
    fn opted_out_users_hear_nothing_more() {
        let mut f = fixture(1, 1);
        replies(&mut f, &[(1, "u00", "STOP"), (2, "u00", "hola?")]);
        let p = MockPlatform::new(f);
        let (c, pol) = (campaign(), policy());
        let mut l = CampaignLedger::new("c1");
        for h in 0..3 {
            p.set_tick(h as u64);
            run_campaign_tick(&c, &mut l, &p, &pol, t0() + Duration::hours(h)).unwrap();
        }
        assert_eq!(p.sent_count(), 1);
        let s = l.conversation("u00").unwrap();
        assert!(s.opted_out);
        assert_eq!(s.phase, Phase::Closed);
    }
}

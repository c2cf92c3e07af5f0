use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::BotError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlatformError {
    #[error("platform unavailable: {0}")]
    Unavailable(String),
    #[error("rate limited, retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: u64 },
    #[error("message rejected: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    pub handle: String,
    pub text: String,
    pub hashtags: Vec<String>,
    pub posted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutgoingMessage {
    pub to_user_id: String,
    pub to_handle: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncomingReply {
    pub reply_id: String,
    pub user_id: String,
    pub text: String,
}

/// What the bots need from a social network. Implementations must tolerate
/// concurrent use by ticks of different campaigns.
pub trait PlatformClient: Send + Sync {
    /// Recent posts matching any term (hashtag or keyword).
    fn search_posts(&self, terms: &[String]) -> Result<Vec<Post>, PlatformError>;
    /// Returns the platform's id for the sent message.
    fn send_message(&self, msg: &OutgoingMessage) -> Result<String, PlatformError>;
    /// Every reply currently visible to the campaign account, oldest first.
    fn poll_replies(&self) -> Result<Vec<IncomingReply>, PlatformError>;
    /// Called before scheduler pass number `tick` (0-based). Live platforms
    /// ignore it; the mock uses it to reveal scripted replies.
    fn sync_tick(&self, _tick: u64) {}
}

impl<T: PlatformClient + ?Sized> PlatformClient for &T {
    fn search_posts(&self, terms: &[String]) -> Result<Vec<Post>, PlatformError> {
        (**self).search_posts(terms)
    }
    fn send_message(&self, msg: &OutgoingMessage) -> Result<String, PlatformError> {
        (**self).send_message(msg)
    }
    fn poll_replies(&self) -> Result<Vec<IncomingReply>, PlatformError> {
        (**self).poll_replies()
    }
    fn sync_tick(&self, tick: u64) {
        (**self).sync_tick(tick)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockUser {
    pub user_id: String,
    pub handle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockPost {
    pub post_id: String,
    pub user_id: String,
    pub text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    pub posted_at: DateTime<Utc>,
}

/// A reply that becomes visible once the mock reaches `tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockReply {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_id: Option<String>,
    pub user_id: String,
    pub text: String,
}

/// On-disk mock platform: users, their posts, and a scripted reply schedule.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockFixture {
    pub users: Vec<MockUser>,
    pub posts: Vec<MockPost>,
    #[serde(default)]
    pub reply_schedule: Vec<MockReply>,
}

impl MockFixture {
    pub fn load(path: &Path) -> Result<Self, BotError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| BotError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| BotError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Default)]
struct MockState {
    tick: u64,
    sent: Vec<(String, OutgoingMessage)>,
    unavailable: bool,
    rate_limit_next: u32,
    failing_users: BTreeSet<String>,
    search_calls: u64,
}

/// Deterministic in-memory platform driven by a [`MockFixture`].
#[derive(Debug)]
pub struct MockPlatform {
    fixture: MockFixture,
    replies: Vec<IncomingReply>,
    reply_ticks: Vec<u64>,
    state: Mutex<MockState>,
}

fn term_matches(term: &str, post: &MockPost) -> bool {
    let needle = term.trim().to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let bare = needle.trim_start_matches('#');
    post.hashtags
        .iter()
        .any(|h| h.trim_start_matches('#').to_lowercase() == bare)
        || post.text.to_lowercase().contains(&needle)
}

impl MockPlatform {
    pub fn new(fixture: MockFixture) -> Self {
        let mut replies = Vec::with_capacity(fixture.reply_schedule.len());
        let mut reply_ticks = Vec::with_capacity(fixture.reply_schedule.len());
        let mut order: Vec<usize> = (0..fixture.reply_schedule.len()).collect();
        order.sort_by_key(|&i| fixture.reply_schedule[i].tick);
        for i in order {
            let r = &fixture.reply_schedule[i];
            replies.push(IncomingReply {
                reply_id: r
                    .reply_id
                    .clone()
                    .unwrap_or_else(|| format!("r-{}-{}", r.tick, i)),
                user_id: r.user_id.clone(),
                text: r.text.clone(),
            });
            reply_ticks.push(r.tick);
        }
        Self {
            fixture,
            replies,
            reply_ticks,
            state: Mutex::new(MockState::default()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, BotError> {
        MockFixture::load(path).map(Self::new)
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    fn state(&self) -> std::sync::MutexGuard<'_, MockState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn tick(&self) -> u64 {
        self.state().tick
    }

    pub fn set_tick(&self, tick: u64) {
        self.state().tick = tick;
    }

    pub fn advance_tick(&self) -> u64 {
        let mut s = self.state();
        s.tick += 1;
        s.tick
    }

    /// Messages accepted so far, with the ids handed back to the caller.
    pub fn sent(&self) -> Vec<(String, OutgoingMessage)> {
        self.state().sent.clone()
    }

    pub fn sent_count(&self) -> usize {
        self.state().sent.len()
    }

    pub fn search_calls(&self) -> u64 {
        self.state().search_calls
    }

    pub fn set_unavailable(&self, down: bool) {
        self.state().unavailable = down;
    }

    /// The next `n` calls of any kind answer with a rate-limit error.
    pub fn rate_limit_next(&self, n: u32) {
        self.state().rate_limit_next = n;
    }

    /// Sends to this user fail until cleared.
    pub fn fail_sends_to(&self, user_id: &str, failing: bool) {
        let mut s = self.state();
        if failing {
            s.failing_users.insert(user_id.to_string());
        } else {
            s.failing_users.remove(user_id);
        }
    }

    fn gate(s: &mut MockState) -> Result<(), PlatformError> {
        if s.unavailable {
            return Err(PlatformError::Unavailable("mock platform is down".into()));
        }
        if s.rate_limit_next > 0 {
            s.rate_limit_next -= 1;
            return Err(PlatformError::RateLimited { retry_after_ms: 0 });
        }
        Ok(())
    }

    fn handle_of(&self, user_id: &str) -> String {
        self.fixture
            .users
            .iter()
            .find(|u| u.user_id == user_id)
            .map(|u| u.handle.clone())
            .unwrap_or_else(|| user_id.to_string())
    }
}

impl PlatformClient for MockPlatform {
    fn search_posts(&self, terms: &[String]) -> Result<Vec<Post>, PlatformError> {
        {
            let mut s = self.state();
            s.search_calls += 1;
            Self::gate(&mut s)?;
        }
        Ok(self
            .fixture
            .posts
            .iter()
            .filter(|p| terms.iter().any(|t| term_matches(t, p)))
            .map(|p| Post {
                post_id: p.post_id.clone(),
                user_id: p.user_id.clone(),
                handle: self.handle_of(&p.user_id),
                text: p.text.clone(),
                hashtags: p.hashtags.clone(),
                posted_at: p.posted_at,
            })
            .collect())
    }

    fn send_message(&self, msg: &OutgoingMessage) -> Result<String, PlatformError> {
        let mut s = self.state();
        Self::gate(&mut s)?;
        if s.failing_users.contains(&msg.to_user_id) {
            return Err(PlatformError::Rejected(format!(
                "cannot reach {}",
                msg.to_user_id
            )));
        }
        let id = format!("msg-{}", s.sent.len() + 1);
        s.sent.push((id.clone(), msg.clone()));
        Ok(id)
    }

    fn poll_replies(&self) -> Result<Vec<IncomingReply>, PlatformError> {
        let tick = {
            let mut s = self.state();
            Self::gate(&mut s)?;
            s.tick
        };
        Ok(self
            .replies
            .iter()
            .zip(&self.reply_ticks)
            .filter(|(_, t)| **t <= tick)
            .map(|(r, _)| r.clone())
            .collect())
    }

    fn sync_tick(&self, tick: u64) {
        self.set_tick(tick);
    }
}

/// Live adapter for a JSON relay in front of a real network. It only forwards
/// calls; construction fails unless explicitly enabled.
#[derive(Debug)]
pub struct HttpPlatform {
    base: url::Url,
    token: String,
    client: reqwest::blocking::Client,
}

impl HttpPlatform {
    pub fn new(enabled: bool, base_url: &str, token: &str, timeout: Duration) -> Result<Self, BotError> {
        if !enabled {
            return Err(BotError::Config("live platform adapter is disabled".into()));
        }
        let base = url::Url::parse(base_url).map_err(|e| BotError::Config(format!("{base_url}: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BotError::Config(e.to_string()))?;
        Ok(Self {
            base,
            token: token.to_string(),
            client,
        })
    }

    fn endpoint(&self, path: &str) -> Result<url::Url, PlatformError> {
        self.base
            .join(path)
            .map_err(|e| PlatformError::Unavailable(e.to_string()))
    }

    fn check(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, PlatformError> {
        let status = resp.status();
        if status.as_u16() == 429 {
            let retry_after_ms = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map_or(60_000, |s| s * 1000);
            return Err(PlatformError::RateLimited { retry_after_ms });
        }
        if status.is_server_error() {
            return Err(PlatformError::Unavailable(status.to_string()));
        }
        if !status.is_success() {
            return Err(PlatformError::Rejected(status.to_string()));
        }
        Ok(resp)
    }

    fn transport(e: reqwest::Error) -> PlatformError {
        PlatformError::Unavailable(e.to_string())
    }
}

#[derive(Deserialize)]
struct SentAck {
    message_id: String,
}

impl PlatformClient for HttpPlatform {
    fn search_posts(&self, terms: &[String]) -> Result<Vec<Post>, PlatformError> {
        let mut url = self.endpoint("search")?;
        url.query_pairs_mut().append_pair("q", &terms.join(" OR "));
        let resp = self
            .client
            .get(url)
            .bearer_auth(&self.token)
            .send()
            .map_err(Self::transport)?;
        Self::check(resp)?.json().map_err(Self::transport)
    }

    fn send_message(&self, msg: &OutgoingMessage) -> Result<String, PlatformError> {
        let resp = self
            .client
            .post(self.endpoint("messages")?)
            .bearer_auth(&self.token)
            .json(msg)
            .send()
            .map_err(Self::transport)?;
        let ack: SentAck = Self::check(resp)?.json().map_err(Self::transport)?;
        Ok(ack.message_id)
    }

    fn poll_replies(&self) -> Result<Vec<IncomingReply>, PlatformError> {
        let resp = self
            .client
            .get(self.endpoint("replies")?)
            .bearer_auth(&self.token)
            .send()
            .map_err(Self::transport)?;
        Self::check(resp)?.json().map_err(Self::transport)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn fixture() -> MockFixture {
        let at = |h| Utc.with_ymd_and_hms(2017, 1, 9, h, 0, 0).unwrap();
        MockFixture {
            users: vec![
                MockUser {
                    user_id: "u1".into(),
                    handle: "ana".into(),
                },
                MockUser {
                    user_id: "u2".into(),
                    handle: "beto".into(),
                },
            ],
            posts: vec![
                MockPost {
                    post_id: "p1".into(),
                    user_id: "u1".into(),
                    text: "otra vez sube la gasolina".into(),
                    hashtags: vec!["#Gasolinazo".into()],
                    posted_at: at(1),
                },
                MockPost {
                    post_id: "p2".into(),
                    user_id: "u2".into(),
                    text: "hoy hay futbol".into(),
                    hashtags: vec![],
                    posted_at: at(2),
                },
            ],
            reply_schedule: vec![
                MockReply {
                    tick: 2,
                    reply_id: None,
                    user_id: "u1".into(),
                    text: "b".into(),
                },
                MockReply {
                    tick: 1,
                    reply_id: Some("x".into()),
                    user_id: "u1".into(),
                    text: "a".into(),
                },
            ],
        }
    }

    #[test]
    fn search_is_case_insensitive_on_hashtags_and_text() {
        let p = MockPlatform::new(fixture());
        let hits = p.search_posts(&["#gasolinazo".into()]).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].handle, "ana");
        assert_eq!(p.search_posts(&["FUTBOL".into()]).unwrap().len(), 1);
        assert!(p.search_posts(&["#PEMEX".into()]).unwrap().is_empty());
    }

    #[test]
    fn replies_appear_by_tick() {
        let p = MockPlatform::new(fixture());
        assert!(p.poll_replies().unwrap().is_empty());
        p.advance_tick();
        assert_eq!(p.poll_replies().unwrap()[0].reply_id, "x");
        p.advance_tick();
        let all = p.poll_replies().unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].reply_id, "r-2-0");
    }

    #[test]
    fn failure_switches() {
        let p = MockPlatform::new(fixture());
        let msg = OutgoingMessage {
            to_user_id: "u1".into(),
            to_handle: "ana".into(),
            text: "hola".into(),
        };
        p.set_unavailable(true);
        assert!(matches!(p.send_message(&msg), Err(PlatformError::Unavailable(_))));
        p.set_unavailable(false);
        p.rate_limit_next(1);
        assert!(matches!(
            p.send_message(&msg),
            Err(PlatformError::RateLimited { .. })
        ));
        p.fail_sends_to("u1", true);
        assert!(matches!(p.send_message(&msg), Err(PlatformError::Rejected(_))));
        p.fail_sends_to("u1", false);
        assert_eq!(p.send_message(&msg).unwrap(), "msg-1");
        assert_eq!(p.sent_count(), 1);
    }

    #[test]
    fn live_adapter_is_off_by_default() {
        assert!(HttpPlatform::new(false, "http://localhost:1/", "t", Duration::from_secs(1)).is_err());
    }
}

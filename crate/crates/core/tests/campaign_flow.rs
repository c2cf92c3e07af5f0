use std::fs;
use std::path::PathBuf;

use chrono::{Duration, TimeZone, Utc};
use scraper::{Html, Selector};

use visbias_core::bot::{CampaignStatus, ConversationPolicy, MockPlatform, Phase, RateCaps};
use visbias_core::campaign::{
    campaign_stats, close_conversation, compose_story_macro, compute_stats, create_campaign, handoff_reply,
    ingest_and_cluster, recluster, render_exploration, set_campaign_status, supervision_queue, tick_campaign,
    ComposeRequest, DataStore, KChoice, NewCampaign, PipelineConfig, ServiceError, EXPLORE_IMAGE_CLASS,
};
use visbias_core::ingest::{FixtureSource, IngestError, StoryQuery};

const BASE: &str = "https://visbias.example.org";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn query(name: &str) -> StoryQuery {
    let raw = fs::read_to_string(fixtures().join(format!("queries/{name}.json"))).unwrap();
    serde_json::from_str(&raw).unwrap()
}

fn ingested() -> (tempfile::TempDir, DataStore) {
    let dir = tempfile::tempdir().unwrap();
    let store = DataStore::open(dir.path()).unwrap();
    let source = FixtureSource::new(fixtures().join("stories"));
    ingest_and_cluster(
        &store,
        &query("energy-reform"),
        &source,
        &PipelineConfig::default(),
        false,
    )
    .unwrap();
    (dir, store)
}

fn compose(store: &DataStore) -> visbias_core::compose::ImageMacro {
    let req = ComposeRequest {
        image_ids: vec![
            "dn-01-i00".into(),
            "vi-02-i00".into(),
            "nv-01-i00".into(),
            "rc-01-i00".into(),
        ],
        layout: "2x2".into(),
        caption: "Misma protesta, distintas fotos".into(),
        created_by: "ana".into(),
        label_mode: Default::default(),
    };
    let now = Utc.with_ymd_and_hms(2017, 1, 9, 12, 0, 0).unwrap();
    compose_story_macro(store, "energy-reform", &req, BASE, now).unwrap()
}

#[test]
fn fixture_story_ingests_dedupes_and_clusters() {
    let (_dir, store) = ingested();
    let report = store.load_report("energy-reform").unwrap();
    assert_eq!(report.article_count, 8);
    assert_eq!(report.publishers.len(), 4);
    // 18 qualifying photos referenced, two of them byte-identical repeats.
    assert_eq!(report.extracted_image_count, 18);
    assert_eq!(report.image_count, 16);
    let clusters = store.load_clusters("energy-reform").unwrap();
    assert!(
        clusters.clusters.len() >= 2,
        "{} clusters",
        clusters.clusters.len()
    );
    assert_eq!(clusters.image_count(), 16);

    let source = FixtureSource::new(fixtures().join("stories"));
    let again = ingest_and_cluster(
        &store,
        &query("energy-reform"),
        &source,
        &PipelineConfig::default(),
        false,
    );
    assert!(matches!(again, Err(ServiceError::Conflict(_))));
}

#[test]
fn empty_story_persists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = DataStore::open(dir.path()).unwrap();
    let source = FixtureSource::new(fixtures().join("stories"));
    let r = ingest_and_cluster(
        &store,
        &query("quiet-story"),
        &source,
        &PipelineConfig::default(),
        false,
    );
    assert!(matches!(
        r,
        Err(ServiceError::Ingest(IngestError::EmptyResult(_)))
    ));
    assert_eq!(fs::read_dir(dir.path().join("artifacts")).unwrap().count(), 0);
}

#[test]
fn recluster_with_fixed_k_and_unknown_story() {
    let (_dir, store) = ingested();
    let r = recluster(&store, "energy-reform", KChoice::Fixed(3), None).unwrap();
    assert_eq!(r.params.k, 3);
    assert_eq!(store.load_clusters("energy-reform").unwrap(), r);
    assert!(matches!(
        recluster(&store, "missing-story", KChoice::Auto, None),
        Err(ServiceError::NotFound(_))
    ));
}

#[test]
fn macro_files_and_exploration_page() {
    let (_dir, store) = ingested();
    let m = compose(&store);
    for ext in ["png", "json", "meta.html"] {
        assert!(store
            .macro_path("energy-reform", &m.macro_id, ext)
            .unwrap()
            .is_file());
    }
    let again = compose(&store);
    assert_eq!(again.png_digest, m.png_digest);

    let html = render_exploration(&store, "energy-reform", BASE).unwrap();
    let doc = Html::parse_document(&html);
    let figures = Selector::parse(&format!(".{EXPLORE_IMAGE_CLASS}")).unwrap();
    assert_eq!(doc.select(&figures).count(), 16);
    let card = Selector::parse(r#"head meta[name="twitter:card"]"#).unwrap();
    assert_eq!(doc.select(&card).count(), 1);
    let card_html = fs::read_to_string(
        store
            .macro_path("energy-reform", &m.macro_id, "meta.html")
            .unwrap(),
    )
    .unwrap();
    assert!(html.contains(&card_html));

    assert!(matches!(
        render_exploration(&store, "nope", BASE),
        Err(ServiceError::NotFound(_))
    ));
}

#[test]
fn campaign_lifecycle_with_supervision() {
    let (_dir, store) = ingested();
    let m = compose(&store);
    let req = NewCampaign {
        campaign_id: None,
        story_id: "energy-reform".into(),
        macro_id: m.macro_id.clone(),
        terms: vec!["#Gasolinazo".into()],
        caps: None,
        created_by: "ana".into(),
        target_limit: None,
        template_id: None,
    };
    let c = create_campaign(&store, &req, RateCaps::default(), BASE).unwrap();
    assert_eq!(c.status, CampaignStatus::Draft);
    assert_eq!(c.macro_url, format!("{BASE}/s/energy-reform"));

    let platform = MockPlatform::load(&fixtures().join("pilot/platform.json")).unwrap();
    let policy = ConversationPolicy::spanish_defaults();
    let start = Utc.with_ymd_and_hms(2017, 1, 10, 15, 0, 0).unwrap();
    assert!(tick_campaign(&store, &c.campaign_id, &platform, &policy, start).is_err());
    set_campaign_status(&store, &c.campaign_id, CampaignStatus::Active).unwrap();

    let mut all = Vec::new();
    for t in 0..7 {
        let evs = tick_campaign(
            &store,
            &c.campaign_id,
            &platform,
            &policy,
            start + Duration::hours(t),
        )
        .unwrap();
        all.extend(evs);
    }
    let stats = campaign_stats(&store, &c.campaign_id).unwrap();
    assert_eq!(stats, compute_stats(&all));
    assert_eq!((stats.targeted_count, stats.responses_count), (30, 53));

    let queue = supervision_queue(&store, &c.campaign_id).unwrap();
    assert_eq!(queue.len(), 22);
    let item = &queue[0];
    assert_eq!(item.phase, Phase::HandedToActivist);
    assert!(item.history.len() >= 4);
    handoff_reply(
        &store,
        &c.campaign_id,
        &item.conversation_id,
        "ana",
        "¡Gracias! Te mando más información.",
        &platform,
        &policy.retry,
        start + Duration::hours(8),
    )
    .unwrap();
    close_conversation(
        &store,
        &c.campaign_id,
        &item.conversation_id,
        start + Duration::hours(8),
    )
    .unwrap();
    assert_eq!(supervision_queue(&store, &c.campaign_id).unwrap().len(), 21);

    // Paused campaigns do not tick.
    set_campaign_status(&store, &c.campaign_id, CampaignStatus::Paused).unwrap();
    assert!(tick_campaign(
        &store,
        &c.campaign_id,
        &platform,
        &policy,
        start + Duration::hours(9)
    )
    .is_err());
}

#[test]
fn torn_last_line_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let good = fs::read_to_string(fixtures().join("pilot/events.jsonl")).unwrap();
    let first_two: String = good.lines().take(2).map(|l| format!("{l}\n")).collect();
    fs::write(&path, format!("{first_two}{{\"event_id\":3,\"campa")).unwrap();
    assert_eq!(visbias_core::campaign::read_event_log(&path).unwrap().len(), 2);
    fs::write(&path, format!("{{broken}}\n{first_two}")).unwrap();
    assert!(visbias_core::campaign::read_event_log(&path).is_err());
}

#[derive(serde::Deserialize)]
struct PilotRun {
    start: chrono::DateTime<Utc>,
    interval_minutes: i64,
    ticks: u64,
}

#[test]
fn pilot_log_regenerates_from_its_inputs() {
    use visbias_core::bot::{run_campaign_tick, Campaign, CampaignLedger};
    let dir = fixtures().join("pilot");
    let campaign: Campaign =
        serde_json::from_str(&fs::read_to_string(dir.join("campaign.json")).unwrap()).unwrap();
    let run: PilotRun = serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    let platform = MockPlatform::load(&dir.join("platform.json")).unwrap();
    let policy = ConversationPolicy::spanish_defaults();
    let mut ledger = CampaignLedger::new(&campaign.campaign_id);
    let mut events = Vec::new();
    for t in 0..run.ticks {
        platform.set_tick(t);
        let now = run.start + Duration::minutes(run.interval_minutes * t as i64);
        events.extend(run_campaign_tick(&campaign, &mut ledger, &platform, &policy, now).unwrap());
    }
    let shipped = visbias_core::campaign::read_event_log(&dir.join("events.jsonl")).unwrap();
    assert_eq!(events, shipped);
}

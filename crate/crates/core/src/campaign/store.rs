use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{io_err, ServiceError, StoryReport};
use crate::bot::{Campaign, EngagementEvent};
use crate::cluster::ClusterReport;
use crate::compose::ImageMacro;
use crate::features::{FeatureArtifact, FeatureModels};
use crate::ingest::{is_safe_id, ArticleImage, ArticleRecord};
use crate::synth::encode_png;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn tmp_suffix() -> String {
    format!(
        "{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    )
}

fn check_id(kind: &str, id: &str) -> Result<(), ServiceError> {
    if is_safe_id(id) {
        Ok(())
    } else {
        Err(ServiceError::Invalid(format!("bad {kind} id {id:?}")))
    }
}

/// Write through a temporary sibling and rename into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let dir = path.parent().expect("artifact paths have a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().unwrap_or_default().to_string_lossy(),
        tmp_suffix()
    ));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("records serialize");
    v.push(b'\n');
    v
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let raw = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&raw).map_err(|e| ServiceError::Corrupt {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Everything produced by one ingestion run, written as a unit.
#[derive(Debug, Clone)]
pub struct StoryBundle {
    pub report: StoryReport,
    pub articles: Vec<ArticleRecord>,
    pub images: Vec<ArticleImage>,
    pub features: FeatureArtifact,
    pub models: FeatureModels,
    pub clusters: ClusterReport,
}

/// The data directory.
#[derive(Debug, Clone)]
pub struct DataStore {
    root: PathBuf,
}

impl DataStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        for sub in ["artifacts", "campaigns"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn story_dir(&self, story_id: &str) -> PathBuf {
        self.root.join("artifacts").join(story_id)
    }

    pub fn campaign_dir(&self, campaign_id: &str) -> PathBuf {
        self.root.join("campaigns").join(campaign_id)
    }

    pub fn story_exists(&self, story_id: &str) -> bool {
        is_safe_id(story_id) && self.story_dir(story_id).join("story.json").is_file()
    }

    fn require_story(&self, story_id: &str) -> Result<PathBuf, ServiceError> {
        check_id("story", story_id)?;
        if !self.story_exists(story_id) {
            return Err(ServiceError::NotFound(format!("unknown story {story_id}")));
        }
        Ok(self.story_dir(story_id))
    }

    /// Stories with a complete artifact directory, sorted by id.
    pub fn list_stories(&self) -> Result<Vec<String>, ServiceError> {
        let dir = self.root.join("artifacts");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name();
            let name = name.to_string_lossy();
            if !name.starts_with('.') && self.story_exists(&name) {
                out.push(name.into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    /// Persist a whole story. The directory is built under a temporary name
    /// and renamed into place, so readers never see half a story and a
    /// failure leaves nothing behind.
    pub fn save_story(&self, bundle: &StoryBundle, replace: bool) -> Result<(), ServiceError> {
        let story_id = &bundle.report.query.story_id;
        check_id("story", story_id)?;
        let final_dir = self.story_dir(story_id);
        if final_dir.exists() && !replace {
            return Err(ServiceError::Conflict(format!(
                "story {story_id} is already ingested"
            )));
        }
        let artifacts = self.root.join("artifacts");
        let tmp = artifacts.join(format!(".ingest-{story_id}-{}", tmp_suffix()));
        let written = self.write_story_dir(&tmp, bundle);
        if let Err(e) = written {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        let old = artifacts.join(format!(".replaced-{story_id}-{}", tmp_suffix()));
        let had_old = final_dir.exists();
        if had_old {
            // Macros survive a re-ingest; they only reference image ids.
            let macros = final_dir.join("macros");
            if macros.is_dir() {
                let _ = fs::rename(&macros, tmp.join("macros"));
            }
            fs::rename(&final_dir, &old).map_err(io_err(&final_dir))?;
        }
        if let Err(e) = fs::rename(&tmp, &final_dir) {
            if had_old {
                let _ = fs::rename(&old, &final_dir);
            }
            let _ = fs::remove_dir_all(&tmp);
            return Err(io_err(&final_dir)(e));
        }
        if had_old {
            let _ = fs::remove_dir_all(&old);
        }
        Ok(())
    }

    fn write_story_dir(&self, dir: &Path, b: &StoryBundle) -> Result<(), ServiceError> {
        for sub in ["images", "features", "macros"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        for img in &b.images {
            check_id("image", &img.image_id)?;
            let p = dir.join("images").join(format!("{}.png", img.image_id));
            fs::write(&p, encode_png(&img.raster)).map_err(io_err(&p))?;
        }
        let files: [(&str, Vec<u8>); 6] = [
            ("articles.json", to_json(&b.articles)),
            ("images.json", to_json(&b.images)),
            ("features/fisher.json", to_json(&b.features)),
            ("features/models.json", to_json(&b.models)),
            ("clusters.json", to_json(&b.clusters)),
            // Written last: its presence marks a complete story.
            ("story.json", to_json(&b.report)),
        ];
        for (name, bytes) in files {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(io_err(&p))?;
        }
        Ok(())
    }

    pub fn load_report(&self, story_id: &str) -> Result<StoryReport, ServiceError> {
        read_json(&self.require_story(story_id)?.join("story.json"))
    }

    pub fn load_articles(&self, story_id: &str) -> Result<Vec<ArticleRecord>, ServiceError> {
        read_json(&self.require_story(story_id)?.join("articles.json"))
    }

    /// Image records without pixel data.
    pub fn load_image_records(&self, story_id: &str) -> Result<Vec<ArticleImage>, ServiceError> {
        read_json(&self.require_story(story_id)?.join("images.json"))
    }

    /// Image records with their rasters decoded from the stored PNGs.
    pub fn load_images(&self, story_id: &str) -> Result<Vec<ArticleImage>, ServiceError> {
        let dir = self.require_story(story_id)?;
        let mut images: Vec<ArticleImage> = read_json(&dir.join("images.json"))?;
        for img in &mut images {
            let p = self.image_path(story_id, &img.image_id)?;
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            img.raster = image::load_from_memory(&bytes)
                .map_err(|e| ServiceError::Corrupt {
                    path: p.display().to_string(),
                    reason: e.to_string(),
                })?
                .to_rgb8();
        }
        Ok(images)
    }

    pub fn image_path(&self, story_id: &str, image_id: &str) -> Result<PathBuf, ServiceError> {
        check_id("image", image_id)?;
        Ok(self
            .require_story(story_id)?
            .join("images")
            .join(format!("{image_id}.png")))
    }

    pub fn load_features(&self, story_id: &str) -> Result<FeatureArtifact, ServiceError> {
        read_json(&self.require_story(story_id)?.join("features/fisher.json"))
    }

    pub fn clusters_path(&self, story_id: &str) -> PathBuf {
        self.story_dir(story_id).join("clusters.json")
    }

    pub fn load_clusters(&self, story_id: &str) -> Result<ClusterReport, ServiceError> {
        self.require_story(story_id)?;
        read_json(&self.clusters_path(story_id))
    }

    pub fn save_clusters(&self, report: &ClusterReport) -> Result<(), ServiceError> {
        self.require_story(&report.story_id)?;
        write_atomic(&self.clusters_path(&report.story_id), &to_json(report))
    }

    pub fn macro_path(&self, story_id: &str, macro_id: &str, ext: &str) -> Result<PathBuf, ServiceError> {
        check_id("macro", macro_id)?;
        Ok(self
            .require_story(story_id)?
            .join("macros")
            .join(format!("{macro_id}.{ext}")))
    }

    /// PNG first and JSON last, so a listed macro always has its image.
    pub fn save_macro(&self, m: &ImageMacro, card_html: &str) -> Result<(), ServiceError> {
        write_atomic(
            &self.macro_path(&m.story_id, &m.macro_id, "png")?,
            &m.encode_png(),
        )?;
        write_atomic(
            &self.macro_path(&m.story_id, &m.macro_id, "meta.html")?,
            card_html.as_bytes(),
        )?;
        write_atomic(&self.macro_path(&m.story_id, &m.macro_id, "json")?, &to_json(m))
    }

    /// Macro record; the raster is not loaded.
    pub fn load_macro(&self, story_id: &str, macro_id: &str) -> Result<ImageMacro, ServiceError> {
        let p = self.macro_path(story_id, macro_id, "json")?;
        if !p.is_file() {
            return Err(ServiceError::NotFound(format!(
                "unknown macro {macro_id} in story {story_id}"
            )));
        }
        read_json(&p)
    }

    /// Macros of a story, oldest first (ties by id).
    pub fn list_macros(&self, story_id: &str) -> Result<Vec<ImageMacro>, ServiceError> {
        let dir = self.require_story(story_id)?.join("macros");
        let mut out: Vec<ImageMacro> = Vec::new();
        if !dir.is_dir() {
            return Ok(out);
        }
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            let name = path.file_name().unwrap_or_default().to_string_lossy();
            if !name.starts_with('.') && name.ends_with(".json") {
                out.push(read_json(&path)?);
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.macro_id.cmp(&b.macro_id)));
        Ok(out)
    }

    pub fn campaign_exists(&self, campaign_id: &str) -> bool {
        is_safe_id(campaign_id) && self.campaign_dir(campaign_id).join("campaign.json").is_file()
    }

    pub fn list_campaigns(&self) -> Result<Vec<String>, ServiceError> {
        let dir = self.root.join("campaigns");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry
                .map_err(io_err(&dir))?
                .file_name()
                .to_string_lossy()
                .into_owned();
            if self.campaign_exists(&name) {
                out.push(name);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn create_campaign_record(&self, c: &Campaign) -> Result<(), ServiceError> {
        check_id("campaign", &c.campaign_id)?;
        let dir = self.campaign_dir(&c.campaign_id);
        if dir.exists() {
            return Err(ServiceError::Conflict(format!(
                "campaign {} already exists",
                c.campaign_id
            )));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let events = dir.join("events.jsonl");
        let done = File::create(&events)
            .map_err(io_err(&events))
            .and_then(|_| write_atomic(&dir.join("campaign.json"), &to_json(c)));
        if done.is_err() {
            let _ = fs::remove_dir_all(&dir);
        }
        done
    }

    pub fn load_campaign(&self, campaign_id: &str) -> Result<Campaign, ServiceError> {
        check_id("campaign", campaign_id)?;
        if !self.campaign_exists(campaign_id) {
            return Err(ServiceError::NotFound(format!("unknown campaign {campaign_id}")));
        }
        read_json(&self.campaign_dir(campaign_id).join("campaign.json"))
    }

    pub fn save_campaign(&self, c: &Campaign) -> Result<(), ServiceError> {
        self.load_campaign(&c.campaign_id)?;
        write_atomic(
            &self.campaign_dir(&c.campaign_id).join("campaign.json"),
            &to_json(c),
        )
    }

    pub fn events_path(&self, campaign_id: &str) -> PathBuf {
        self.campaign_dir(campaign_id).join("events.jsonl")
    }

    /// The campaign's event log. A torn final line (no trailing newline) is
    /// an interrupted append and is skipped.
    pub fn load_events(&self, campaign_id: &str) -> Result<Vec<EngagementEvent>, ServiceError> {
        self.load_campaign(campaign_id)?;
        read_event_log(&self.events_path(campaign_id))
    }

    /// Append events, one JSON line each. Each line goes out in a single
    /// write, and the file is synced before returning.
    pub fn append_events(&self, campaign_id: &str, events: &[EngagementEvent]) -> Result<(), ServiceError> {
        if events.is_empty() {
            return Ok(());
        }
        let path = self.events_path(campaign_id);
        let mut f = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        for ev in events {
            let mut line = serde_json::to_vec(ev).expect("events serialize");
            line.push(b'\n');
            f.write_all(&line).map_err(io_err(&path))?;
        }
        f.sync_all().map_err(io_err(&path))
    }
}

/// Parse an events.jsonl file.
pub fn read_event_log(path: &Path) -> Result<Vec<EngagementEvent>, ServiceError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(f);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str(text) {
            Ok(ev) => out.push(ev),
            Err(e) if !complete => {
                warn!("{}: ignoring torn final line {lineno}: {e}", path.display());
            }
            Err(e) => {
                return Err(ServiceError::Corrupt {
                    path: path.display().to_string(),
                    reason: format!("line {lineno}: {e}"),
                })
            }
        }
    }
    Ok(out)
}

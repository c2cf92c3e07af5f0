//! `visbias`: ingest stories, cluster and compose macros, run mock
//! campaigns, replay event logs, and serve the HTTP API.
//!
//! Exit status is 0 on success, 1 when an operation fails, and 2 for usage
//! errors. Diagnostics and logs go to standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use visbias_core::bot::{CampaignLedger, CampaignStatus, RateCaps};
use visbias_core::campaign::{
    self as ops, compute_stats, read_event_log, AppConfig, CampaignStats, ComposeRequest, DataStore, KChoice,
    NewCampaign, ServiceError,
};
use visbias_core::ingest::StoryQuery;

#[derive(Debug, Parser)]
#[command(
    name = "visbias",
    version,
    about = "Visual news-bias detection and exposure campaigns"
)]
struct Cli {
    /// Print machine-readable JSON on standard output.
    #[arg(long, global = true)]
    json: bool,
    /// TOML configuration file.
    #[arg(long, global = true, env = "VISBIAS_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch a story's articles, extract and cluster its images.
    Ingest {
        /// StoryQuery JSON file.
        story: PathBuf,
        /// Replace an already ingested story.
        #[arg(long)]
        force: bool,
    },
    /// Re-cluster a stored story.
    Cluster {
        story_id: String,
        #[arg(long, conflicts_with = "auto_k")]
        k: Option<usize>,
        /// Choose K by silhouette score (the default).
        #[arg(long)]
        auto_k: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compose an image macro from selected images.
    Compose {
        story_id: String,
        /// Comma-separated image ids, in panel order.
        #[arg(long, value_delimiter = ',', required = true)]
        images: Vec<String>,
        /// Grid as ROWSxCOLS, e.g. 2x2.
        #[arg(long)]
        layout: String,
        #[arg(long, default_value = "")]
        caption: String,
        #[arg(long, default_value = "")]
        created_by: String,
        /// Creation timestamp (RFC 3339); defaults to now.
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    #[command(subcommand)]
    Campaign(CampaignCommand),
    /// Serve the HTTP API and public exploration pages.
    Serve {
        /// Overrides `listen` from the configuration.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Validate an event log and print its statistics.
    Replay { events: PathBuf },
}

#[derive(Debug, Subcommand)]
enum CampaignCommand {
    /// Create a draft campaign.
    Create(CreateArgs),
    Start {
        campaign_id: String,
    },
    Pause {
        campaign_id: String,
    },
    Finish {
        campaign_id: String,
    },
    /// Run scheduler passes against the configured platform.
    RunTicks {
        campaign_id: String,
        #[arg(long, default_value_t = 1)]
        ticks: u32,
        /// Clock of the first pass (RFC 3339); defaults to now.
        #[arg(long)]
        start: Option<DateTime<Utc>>,
        #[arg(long, default_value_t = 60)]
        interval_minutes: i64,
    },
    Stats {
        campaign_id: String,
    },
    /// Conversations waiting for an activist.
    Queue {
        campaign_id: String,
    },
}

#[derive(Debug, Args)]
struct CreateArgs {
    #[arg(long)]
    story: String,
    #[arg(long = "macro")]
    macro_id: String,
    /// Comma-separated hashtags or keywords.
    #[arg(long, value_delimiter = ',', required = true)]
    terms: Vec<String>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value = "")]
    created_by: String,
    #[arg(long)]
    target_limit: Option<usize>,
    #[arg(long)]
    exposures_per_hour: Option<u32>,
    #[arg(long)]
    messages_per_user: Option<u32>,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

struct Ctx {
    json: bool,
    config: AppConfig,
}

impl Ctx {
    fn store(&self) -> Result<DataStore, ServiceError> {
        DataStore::open(&self.config.data_dir)
    }

    /// JSON when asked for, else the human rendering.
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce(&T) -> String) -> CliResult {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value)?);
        } else {
            println!("{}", human(value));
        }
        Ok(())
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig, ServiceError> {
    let mut config = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(d) = &cli.data_dir {
        config.data_dir = d.clone();
    }
    Ok(config)
}

fn read_query(path: &Path) -> Result<StoryQuery, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ServiceError::Invalid(format!("{}: {e}", path.display())))
}

fn render_stats(s: &CampaignStats) -> String {
    let mut out = format!(
        "targeted {}\nresponders {}\nresponses {}\nmedian responses per responder {}\n",
        s.targeted_count, s.responders_count, s.responses_count, s.median_responses_per_responder
    );
    for (n, users) in &s.responses_per_responder {
        out.push_str(&format!("  {users} replied {n} time(s)\n"));
    }
    for (label, n) in &s.classification_counts {
        out.push_str(&format!("  {label:?}: {n}\n"));
    }
    out.trim_end().to_string()
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        json: cli.json,
        config: load_config(&cli)?,
    };
    match cli.command {
        Command::Ingest { story, force } => {
            let query = read_query(&story)?;
            let source = ctx.config.article_source()?;
            let report = ops::ingest_and_cluster(
                &ctx.store()?,
                &query,
                &*source,
                &ctx.config.pipeline_config(),
                force,
            )?;
            ctx.emit(&report, |r| {
                format!(
                    "{}: {} articles from {} publishers, {} images ({} before dedupe), k={}",
                    r.query.story_id,
                    r.article_count,
                    r.publishers.len(),
                    r.image_count,
                    r.extracted_image_count,
                    r.k
                )
            })
        }
        Command::Cluster {
            story_id, k, seed, ..
        } => {
            let choice = k.map_or(KChoice::Auto, KChoice::Fixed);
            let report = ops::recluster(&ctx.store()?, &story_id, choice, seed)?;
            ctx.emit(&report, |r| {
                r.clusters
                    .iter()
                    .map(|c| {
                        format!(
                            "cluster {}: {} images: {}",
                            c.cluster_id,
                            c.members.len(),
                            c.members.join(", ")
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Compose {
            story_id,
            images,
            layout,
            caption,
            created_by,
            at,
        } => {
            let store = ctx.store()?;
            let req = ComposeRequest {
                image_ids: images,
                layout,
                caption,
                created_by,
                label_mode: Default::default(),
            };
            let now = at.unwrap_or_else(Utc::now);
            let m = ops::compose_story_macro(&store, &story_id, &req, &ctx.config.public_base_url, now)?;
            let path = store.macro_path(&story_id, &m.macro_id, "png")?;
            ctx.emit(&m, |m| {
                format!("macro {} sha256 {}\n{}", m.macro_id, m.png_digest, path.display())
            })
        }
        Command::Campaign(cmd) => run_campaign(&ctx, cmd),
        Command::Serve { listen } => {
            let mut config = ctx.config;
            if let Some(l) = listen {
                config.listen = l;
            }
            let state = visbias_service::AppState::new(config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(visbias_service::serve(state))?;
            Ok(())
        }
        Command::Replay { events } => {
            let log = read_event_log(&events)?;
            if let Some(first) = log.first() {
                CampaignLedger::replay(&first.campaign_id, &log)?;
            }
            ctx.emit(&compute_stats(&log), render_stats)
        }
    }
}

fn set_status(ctx: &Ctx, campaign_id: &str, status: CampaignStatus) -> CliResult {
    let c = ops::set_campaign_status(&ctx.store()?, campaign_id, status)?;
    ctx.emit(&c, |c| {
        format!("{}: {:?}", c.campaign_id, c.status).to_lowercase()
    })
}

fn run_campaign(ctx: &Ctx, cmd: CampaignCommand) -> CliResult {
    match cmd {
        CampaignCommand::Create(a) => {
            let defaults = ctx.config.caps;
            let caps = RateCaps {
                exposures_per_hour: a.exposures_per_hour.unwrap_or(defaults.exposures_per_hour),
                messages_per_user: a.messages_per_user.unwrap_or(defaults.messages_per_user),
                ..defaults
            };
            let req = NewCampaign {
                campaign_id: a.id,
                story_id: a.story,
                macro_id: a.macro_id,
                terms: a.terms,
                caps: Some(caps),
                created_by: a.created_by,
                target_limit: a.target_limit,
                template_id: None,
            };
            let c = ops::create_campaign(&ctx.store()?, &req, defaults, &ctx.config.public_base_url)?;
            ctx.emit(&c, |c| format!("created campaign {} (draft)", c.campaign_id))
        }
        CampaignCommand::Start { campaign_id } => set_status(ctx, &campaign_id, CampaignStatus::Active),
        CampaignCommand::Pause { campaign_id } => set_status(ctx, &campaign_id, CampaignStatus::Paused),
        CampaignCommand::Finish { campaign_id } => set_status(ctx, &campaign_id, CampaignStatus::Finished),
        CampaignCommand::RunTicks {
            campaign_id,
            ticks,
            start,
            interval_minutes,
        } => {
            let store = ctx.store()?;
            let platform = ctx.config.platform()?;
            let policy = ctx.config.conversation_policy()?;
            let start = start.unwrap_or_else(Utc::now);
            let mut all = Vec::new();
            for t in 0..ticks {
                let now = start + Duration::minutes(interval_minutes * i64::from(t));
                let events = ops::tick_campaign(&store, &campaign_id, &*platform, &policy, now)?;
                if !ctx.json {
                    println!("{now}: {} events", events.len());
                }
                all.extend(events);
            }
            if ctx.json {
                println!("{}", serde_json::to_string_pretty(&all)?);
            }
            Ok(())
        }
        CampaignCommand::Stats { campaign_id } => {
            ctx.emit(&ops::campaign_stats(&ctx.store()?, &campaign_id)?, render_stats)
        }
        CampaignCommand::Queue { campaign_id } => {
            let queue = ops::supervision_queue(&ctx.store()?, &campaign_id)?;
            ctx.emit(&queue, |q| {
                q.iter()
                    .map(|i| {
                        let label = i
                            .classification
                            .as_ref()
                            .map(|c| format!("{:?}", c.label))
                            .unwrap_or_default();
                        let waiting = if i.awaiting_activist {
                            " (awaiting reply)"
                        } else {
                            ""
                        };
                        format!("{} {} {label}{waiting}", i.conversation_id, i.handle)
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("visbias: {e}");
            ExitCode::from(1)
        }
    }
}

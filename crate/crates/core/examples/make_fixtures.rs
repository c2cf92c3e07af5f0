//! Regenerates the shipped fixture tree.
//!
//! ```text
//! cargo run -p visbias-core --example make_fixtures -- fixtures
//! ```
//!
//! Everything is seeded, so rerunning produces identical files.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde_json::json;

use visbias_core::bot::{
    run_campaign_tick, Campaign, CampaignLedger, CampaignStatus, ConversationPolicy, MockFixture,
    MockPlatform, MockPost, MockReply, MockUser, RateCaps,
};
use visbias_core::ingest::StoryQuery;
use visbias_core::synth::{crowd_scene, empty_street, encode_png, icon};

struct Article {
    id: &'static str,
    source: &'static str,
    url: &'static str,
    title: &'static str,
    body: &'static str,
    /// `<img>` snippets, written as-is.
    imgs: &'static [&'static str],
    og_image: Option<&'static str>,
}

const ARTICLES: &[Article] = &[
    Article {
        id: "dn-01",
        source: "El Diario Nacional",
        url: "https://www.diarionacional.mx/2017/01/06/gasolinazo-jornada-tranquila.html",
        title: "Jornada tranquila pese al aumento de la gasolina",
        body: "Las calles del centro lucieron casi vacías durante la mañana.",
        imgs: &[
            r#"<img src="/fotos/street-01.png" alt="Avenida">"#,
            r#"<img src="/fotos/street-02.png" alt="Glorieta">"#,
            r#"<img src="/static/logo-dn.png" alt="logo">"#,
        ],
        og_image: Some("https://www.diarionacional.mx/fotos/street-01.png"),
    },
    Article {
        id: "dn-02",
        source: "El Diario Nacional",
        url: "https://www.diarionacional.mx/2017/01/07/precios-combustible.html",
        title: "Nuevos precios del combustible entran en vigor",
        body: "Las gasolineras operaron con normalidad.",
        imgs: &[
            r#"<img src="/fotos/street-03.png">"#,
            r#"<img src="/fotos/street-04.png">"#,
            r#"<img src="data:image/gif;base64,R0lGODlhAQABAAAAACw=" alt="pixel">"#,
        ],
        og_image: None,
    },
    Article {
        id: "dn-03",
        source: "El Diario Nacional",
        url: "https://www.diarionacional.mx/2017/01/08/reforma-energetica-balance.html",
        title: "Balance de la reforma energética",
        body: "Analistas coinciden en que la medida era necesaria.",
        imgs: &[
            r#"<img src="/fotos/street-05.png">"#,
            r#"<img src="/fotos/street-06.png">"#,
        ],
        og_image: None,
    },
    Article {
        id: "nv-01",
        source: "Noticias del Valle",
        url: "https://noticiasdelvalle.com.mx/nacional/gasolinazo-sin-incidentes",
        title: "Gasolinazo: día sin incidentes en la capital",
        body: "El tránsito fluyó sin contratiempos.",
        imgs: &[
            r#"<img src="https://cdn.noticiasdelvalle.com.mx/img/street-07.png">"#,
            r#"<img src="https://cdn.noticiasdelvalle.com.mx/img/street-08.png">"#,
            r#"<img src="https://cdn.noticiasdelvalle.com.mx/img/street-01.png">"#,
        ],
        og_image: None,
    },
    Article {
        id: "vi-01",
        source: "La Voz Independiente",
        url: "https://lavozindependiente.org/2017/01/06/marchas-gasolinazo",
        title: "Miles marchan contra el gasolinazo",
        body: "Contingentes llenaron la avenida principal desde temprano.",
        imgs: &[
            r#"<img src="/media/crowd-01.png" alt="Marcha">"#,
            r#"<img src="/media/crowd-02.png" alt="Contingente">"#,
            r#"<img src="/media/logo-vi.png" alt="logo">"#,
        ],
        og_image: Some("https://lavozindependiente.org/media/crowd-01.png"),
    },
    Article {
        id: "vi-02",
        source: "La Voz Independiente",
        url: "https://lavozindependiente.org/2017/01/07/bloqueos-y-protestas",
        title: "Protestas se extienden a otras ciudades",
        body: "Organizaciones civiles convocaron a nuevas movilizaciones.",
        imgs: &[
            r#"<img src="/media/crowd-03.png">"#,
            r#"<img data-src="/media/crowd-04.png" class="lazy">"#,
        ],
        og_image: None,
    },
    Article {
        id: "vi-03",
        source: "La Voz Independiente",
        url: "https://lavozindependiente.org/2017/01/08/plazas-llenas",
        title: "Plazas llenas en la tercera jornada de protesta",
        body: "Las asambleas vecinales se sumaron a la convocatoria.",
        imgs: &[
            r#"<img src="/media/crowd-05.png">"#,
            r#"<img src="/media/crowd-06.png">"#,
        ],
        og_image: None,
    },
    Article {
        id: "rc-01",
        source: "Radio Comunitaria del Sur",
        url: "https://radiocomunitariasur.org/noticias/gasolinazo-marcha-sur",
        title: "La marcha del sur en imágenes",
        body: "Vecinos del sur de la ciudad se unieron a la protesta.",
        imgs: &[
            r#"<img src="https://radiocomunitariasur.org/fotos/crowd-07.png">"#,
            r#"<img src="https://radiocomunitariasur.org/fotos/crowd-08.png">"#,
            r#"<img src="https://radiocomunitariasur.org/fotos/crowd-01.png">"#,
        ],
        og_image: None,
    },
];

fn write(path: &Path, bytes: impl AsRef<[u8]>) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, bytes).unwrap();
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    let mut v = serde_json::to_vec_pretty(value).unwrap();
    v.push(b'\n');
    write(path, v);
}

fn story(root: &Path) {
    let dir = root.join("stories/energy-reform");
    let _ = fs::remove_dir_all(&dir);
    let day = |d: u32, h: u32| Utc.with_ymd_and_hms(2017, 1, d, h, 0, 0).unwrap();
    for (i, a) in ARTICLES.iter().enumerate() {
        let og = a
            .og_image
            .map(|u| format!("<meta property=\"og:image\" content=\"{u}\">\n"))
            .unwrap_or_default();
        let html = format!(
            "<!DOCTYPE html>\n<html lang=\"es\">\n<head>\n<meta charset=\"utf-8\">\n<title>{t}</title>\n<meta property=\"og:title\" content=\"{t}\">\n{og}</head>\n<body>\n<article>\n<h1>{t}</h1>\n<p>{b}</p>\n{imgs}\n</article>\n</body>\n</html>\n",
            t = a.title,
            b = a.body,
            imgs = a.imgs.join("\n"),
        );
        write(&dir.join(format!("articles/{}.html", a.id)), html);
        write_json(
            &dir.join(format!("articles/{}.meta.json", a.id)),
            &json!({
                "url": a.url,
                "source_name": a.source,
                "fetched_at": day(6 + (i as u32 % 3), 18),
            }),
        );
    }
    for i in 1..=8u64 {
        let (w, h) = (200 + 8 * i as u32, 150 + 4 * (i as u32 % 3));
        write(
            &dir.join(format!("images/crowd-{i:02}.png")),
            encode_png(&crowd_scene(100 + i, w, h)),
        );
        write(
            &dir.join(format!("images/street-{i:02}.png")),
            encode_png(&empty_street(200 + i, w + 40, h)),
        );
    }
    write(&dir.join("images/logo-dn.png"), encode_png(&icon(1, 48)));
    write(&dir.join("images/logo-vi.png"), encode_png(&icon(2, 64)));

    let quiet = root.join("stories/quiet-story/articles");
    let _ = fs::remove_dir_all(root.join("stories/quiet-story"));
    write(&quiet.join(".gitkeep"), "");

    let mut q = StoryQuery::new(
        "energy-reform",
        "Protestas por el gasolinazo y la reforma energética",
    );
    q.language = "es".into();
    write_json(&root.join("queries/energy-reform.json"), &q);
    write_json(
        &root.join("queries/quiet-story.json"),
        &StoryQuery::new("quiet-story", "Una historia sin cobertura"),
    );
}

const OPINIONS: &[&str] = &[
    "Sí, es raro que casi no salga gente en esas fotos",
    "No me había fijado, parece que esconden las marchas",
    "Claro que hay sesgo, yo estuve en la marcha y éramos muchísimos",
    "Puede ser, los periódicos grandes siempre hacen eso",
    "Mmm no sé, a lo mejor las tomaron temprano",
    "Qué fuerte, ni una foto de la gente en la calle",
    "Se nota la diferencia entre un medio y otro",
];

const EVANGELIST: &[&str] = &[
    "Voy a compartir esto con mis amigos",
    "Hay que difundir estas fotos para que todos vean",
    "Lo voy a publicar en mi muro",
    "Hay que mostrar las dos versiones, lo paso a mis contactos",
];

const DEFENDER: &[&str] = &[
    "Los medios tienen razón, esas fotos son correctas",
    "Yo creo que exageran, no había tanta gente",
    "No veo sesgo, es su trabajo elegir fotos",
];

const OTHER: &[&str] = &[
    "No sé qué se pueda hacer la verdad",
    "Ojalá bajen el precio de la gasolina",
    "Hablar con los diputados tal vez",
];

const THANKS: &[&str] = &[
    "Gracias a ustedes por avisar",
    "Cuenten conmigo para lo que sigue",
    "Buen trabajo con la página de fotos",
];

pub fn pilot_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2017, 1, 10, 15, 0, 0).unwrap()
}

const PILOT_TICKS: u64 = 7;

fn pilot(root: &Path) {
    let dir = root.join("pilot");
    let start = pilot_start();
    let mut f = MockFixture::default();
    for i in 1..=40u32 {
        let user_id = format!("u{i:03}");
        f.users.push(MockUser {
            user_id: user_id.clone(),
            handle: format!("ciudadano_{i:02}"),
        });
        // Users 1..=35 talk about the story; earlier ids posted more recently.
        let posted_at = start - Duration::minutes(5 * i as i64);
        let (text, hashtags) = if i <= 35 {
            let extra = if i % 4 == 0 {
                vec!["#PEMEX".to_string()]
            } else {
                vec![]
            };
            let mut tags = vec!["#Gasolinazo".to_string()];
            tags.extend(extra);
            (
                format!("Otra vez sube la gasolina, ya basta #Gasolinazo ({i})"),
                tags,
            )
        } else {
            (
                format!("Hoy juega mi equipo, nos vemos en el estadio ({i})"),
                vec!["#Futbol".to_string()],
            )
        };
        f.posts.push(MockPost {
            post_id: format!("p{i:03}"),
            user_id: user_id.clone(),
            text,
            hashtags,
            posted_at,
        });
    }
    // One user posted twice about the story; they must still be targeted once.
    f.posts.push(MockPost {
        post_id: "p003b".into(),
        user_id: "u003".into(),
        text: "Marcha hoy a las 5 #ReformaEnergetica #Gasolinazo".into(),
        hashtags: vec!["#ReformaEnergetica".into(), "#Gasolinazo".into()],
        posted_at: start - Duration::minutes(200),
    });

    // Exposure order is targeting order (u001..u030), ten per hourly tick.
    // Responders: every user except five silent ones. Reply counts follow a
    // fixed plan: 3 users reply once, 16 twice, 6 three times.
    let silent = [5u32, 11, 17, 23, 29];
    let responders: Vec<u32> = (1..=30).filter(|u| !silent.contains(u)).collect();
    assert_eq!(responders.len(), 25);
    let mut n_ev = 0;
    let mut n_def = 0;
    let mut n_oth = 0;
    for (k, &u) in responders.iter().enumerate() {
        let replies = match k {
            0..=2 => 1,
            3..=18 => 2,
            _ => 3,
        };
        let exposed_tick = ((u - 1) / 10) as u64;
        let user_id = format!("u{u:03}");
        let mut push = |offset: u64, text: &str| {
            f.reply_schedule.push(MockReply {
                tick: exposed_tick + offset,
                reply_id: Some(format!("r-{user_id}-{offset}")),
                user_id: user_id.clone(),
                text: text.to_string(),
            });
        };
        push(1, OPINIONS[k % OPINIONS.len()]);
        if replies >= 2 {
            let text = match k % 5 {
                0 | 2 => {
                    n_ev += 1;
                    EVANGELIST[n_ev % EVANGELIST.len()]
                }
                1 | 3 => {
                    n_def += 1;
                    DEFENDER[n_def % DEFENDER.len()]
                }
                _ => {
                    n_oth += 1;
                    OTHER[n_oth % OTHER.len()]
                }
            };
            push(2, text);
        }
        if replies >= 3 {
            push(3, THANKS[k % THANKS.len()]);
        }
    }
    write_json(&dir.join("platform.json"), &f);

    let campaign = Campaign {
        campaign_id: "pilot-2017-01".into(),
        story_id: "energy-reform".into(),
        macro_id: "m-pilot".into(),
        terms: vec!["#Gasolinazo".into(), "#ReformaEnergetica".into(), "#PEMEX".into()],
        status: CampaignStatus::Active,
        caps: RateCaps::default(),
        created_by: "activista".into(),
        macro_url: "http://127.0.0.1:8080/s/energy-reform".into(),
        target_limit: 30,
        template_id: "exposure".into(),
        ticks_run: 0,
    };
    write_json(&dir.join("campaign.json"), &campaign);
    write_json(
        &dir.join("run.json"),
        &json!({ "start": start, "interval_minutes": 60, "ticks": PILOT_TICKS }),
    );

    let platform = MockPlatform::new(f);
    let policy = ConversationPolicy::spanish_defaults();
    let mut ledger = CampaignLedger::new(&campaign.campaign_id);
    let mut lines = String::new();
    for t in 0..PILOT_TICKS {
        platform.set_tick(t);
        let now = start + Duration::minutes(60 * t as i64);
        for ev in run_campaign_tick(&campaign, &mut ledger, &platform, &policy, now).unwrap() {
            lines.push_str(&serde_json::to_string(&ev).unwrap());
            lines.push('\n');
        }
    }
    write(&dir.join("events.jsonl"), lines);
}

fn main() {
    let root: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "fixtures".into())
        .into();
    story(&root);
    pilot(&root);
    println!("fixtures written to {}", root.display());
}

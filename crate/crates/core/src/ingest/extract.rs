use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::warn;
use scraper::{Html, Selector};
use url::Url;

use super::{ArticleImage, ArticleRecord, ArticleSource, IngestError};

/// One image reference found in an article's markup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    /// Position among the article's references; used to build the image id.
    pub index: usize,
    pub src_url: Url,
}

/// Every `<img>` and social-preview image in document order, resolved against
/// the article URL. Repeated URLs and inline `data:` images are skipped.
pub fn image_references(article: &ArticleRecord) -> Vec<ImageRef> {
    let doc = Html::parse_document(&article.html);
    let img = Selector::parse("img").expect("static selector");
    let meta = Selector::parse(
        r#"meta[property="og:image"], meta[name="og:image"], meta[name="twitter:image"], meta[property="twitter:image"]"#,
    )
    .expect("static selector");

    let candidates = doc
        .select(&img)
        .filter_map(|e| {
            e.value()
                .attr("src")
                .filter(|s| !s.trim().is_empty())
                .or_else(|| e.value().attr("data-src"))
        })
        .chain(doc.select(&meta).filter_map(|e| e.value().attr("content")));

    let mut seen = HashSet::new();
    let mut refs = Vec::new();
    for raw in candidates {
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with("data:") {
            continue;
        }
        let Ok(resolved) = article.url.join(raw) else {
            warn!("{}: unresolvable image reference {raw:?}", article.article_id);
            continue;
        };
        if !matches!(resolved.scheme(), "http" | "https" | "file") {
            continue;
        }
        if seen.insert(resolved.to_string()) {
            refs.push(ImageRef {
                index: refs.len(),
                src_url: resolved,
            });
        }
    }
    refs
}

fn load_one(
    article: &ArticleRecord,
    story_id: &str,
    r: &ImageRef,
    source: &dyn ArticleSource,
    min_width: u32,
    min_height: u32,
) -> Option<ArticleImage> {
    let bytes = match source.fetch_image(story_id, &r.src_url) {
        Ok(b) => b,
        Err(e) => {
            warn!("{}: skipping image: {e}", article.article_id);
            return None;
        }
    };
    let decoded = match image::load_from_memory(&bytes) {
        Ok(img) => img.to_rgb8(),
        Err(e) => {
            let e = IngestError::UndecodableImage {
                url: r.src_url.to_string(),
                reason: e.to_string(),
            };
            warn!("{}: skipping image: {e}", article.article_id);
            return None;
        }
    };
    if decoded.width() < min_width || decoded.height() < min_height {
        return None;
    }
    Some(ArticleImage::new(
        format!("{}-i{:02}", article.article_id, r.index),
        article.article_id.clone(),
        r.src_url.to_string(),
        decoded,
    ))
}

/// Fetch and decode every qualifying image of one article, sequentially.
pub fn extract_images(
    article: &ArticleRecord,
    story_id: &str,
    source: &dyn ArticleSource,
    min_width: u32,
    min_height: u32,
) -> Vec<ArticleImage> {
    image_references(article)
        .iter()
        .filter_map(|r| load_one(article, story_id, r, source, min_width, min_height))
        .collect()
}

/// Same result as calling [`extract_images`] on each article in turn, with at
/// most `concurrency` fetches in flight. Output follows article order, then
/// reference order.
pub fn extract_images_concurrent(
    articles: &[ArticleRecord],
    story_id: &str,
    source: &dyn ArticleSource,
    min_width: u32,
    min_height: u32,
    concurrency: usize,
) -> Vec<ArticleImage> {
    let jobs: Vec<(&ArticleRecord, ImageRef)> = articles
        .iter()
        .flat_map(|a| image_references(a).into_iter().map(move |r| (a, r)))
        .collect();
    let slots: Vec<Mutex<Option<ArticleImage>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = concurrency.clamp(1, jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((article, r)) = jobs.get(i) else { break };
                let img = load_one(article, story_id, r, source, min_width, min_height);
                *slots[i].lock().expect("slot poisoned") = img;
            });
        }
    });

    slots
        .into_iter()
        .filter_map(|m| m.into_inner().expect("slot poisoned"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StoryQuery;
    use chrono::TimeZone;
    use image::{ImageFormat, Rgb, RgbImage};
    use std::collections::HashMap;
    use std::io::Cursor;

    /// Serves images from memory, keyed by absolute URL.
    struct MemSource(HashMap<String, Vec<u8>>);

    impl ArticleSource for MemSource {
        fn fetch_articles(&self, _q: &StoryQuery) -> Result<Vec<ArticleRecord>, IngestError> {
            Ok(vec![])
        }
        fn fetch_image(&self, _story: &str, url: &Url) -> Result<Vec<u8>, IngestError> {
            self.0
                .get(url.as_str())
                .cloned()
                .ok_or_else(|| IngestError::ImageUnavailable {
                    url: url.to_string(),
                    reason: "missing".into(),
                })
        }
    }

    fn png(w: u32, h: u32, shade: u8) -> Vec<u8> {
        let img = RgbImage::from_pixel(w, h, Rgb([shade, shade / 2, 255 - shade]));
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        buf.into_inner()
    }

    fn article(html: &str) -> ArticleRecord {
        ArticleRecord {
            article_id: "a1".into(),
            url: Url::parse("https://x.example/news/1").unwrap(),
            source_name: "x.example".into(),
            fetched_at: chrono::Utc.with_ymd_and_hms(2017, 1, 5, 12, 0, 0).unwrap(),
            html: html.into(),
            title: String::new(),
        }
    }

    #[test]
    fn relative_src_resolves_against_article_url() {
        let refs = image_references(&article(r#"<img src="/a.jpg">"#));
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].src_url.as_str(), "https://x.example/a.jpg");
    }

    #[test]
    fn icons_are_dropped_by_size_filter() {
        let html = r#"<html><body>
            <img src="/big1.png"><img src="/icon.png"><img src="big2.png">
            </body></html>"#;
        let src = MemSource(HashMap::from([
            ("https://x.example/big1.png".to_string(), png(200, 150, 10)),
            ("https://x.example/icon.png".to_string(), png(16, 16, 20)),
            ("https://x.example/news/big2.png".to_string(), png(300, 120, 30)),
        ]));
        let imgs = extract_images(&article(html), "s", &src, 100, 100);
        assert_eq!(imgs.len(), 2);
        assert!(imgs.iter().all(|i| i.width >= 100 && i.height >= 100));
        assert_eq!(imgs[0].image_id, "a1-i00");
        assert_eq!(imgs[1].image_id, "a1-i02");
    }

    #[test]
    fn meta_images_and_duplicates() {
        let html = r#"<head><meta property="og:image" content="https://cdn.example/p.png">
            <meta name="twitter:image" content="https://cdn.example/p.png"></head>
            <body><img src="https://cdn.example/p.png"><img src="data:image/png;base64,AAAA"></body>"#;
        let refs = image_references(&article(html));
        assert_eq!(refs.len(), 1);
    }

    #[test]
    fn empty_body_and_garbage() {
        assert!(image_references(&article("<html><body></body></html>")).is_empty());
        assert!(image_references(&article("<<<img src=>>> <p")).is_empty());
    }

    #[test]
    fn undecodable_images_are_skipped() {
        let src = MemSource(HashMap::from([(
            "https://x.example/bad.png".to_string(),
            b"not an image".to_vec(),
        )]));
        let imgs = extract_images(&article(r#"<img src="/bad.png">"#), "s", &src, 1, 1);
        assert!(imgs.is_empty());
    }

    #[test]
    fn concurrent_matches_sequential() {
        let mut map = HashMap::new();
        let mut html = String::new();
        for i in 0..9u8 {
            let url = format!("https://x.example/p{i}.png");
            map.insert(url.clone(), png(130 + i as u32, 130, i * 20));
            html.push_str(&format!(r#"<img src="{url}">"#));
        }
        let src = MemSource(map);
        let mut a2 = article(&html);
        a2.article_id = "a2".into();
        let arts = vec![article(&html), a2];
        let seq: Vec<_> = arts
            .iter()
            .flat_map(|a| extract_images(a, "s", &src, 120, 120))
            .collect();
        let par = extract_images_concurrent(&arts, "s", &src, 120, 120, 4);
        assert_eq!(seq, par);
        assert_eq!(par.len(), 18);
    }
}

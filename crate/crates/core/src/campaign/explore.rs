use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::pipeline::{explore_url, story_title};
use super::{DataStore, ServiceError};
use crate::compose::render_card_metadata;

/// CSS class carried by exactly one element per story image.
pub const EXPLORE_IMAGE_CLASS: &str = "story-image";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Public page for a story: the newest macro with its card tags in the head,
/// followed by every stored image grouped by cluster, each with its outlet
/// and article link. The image list comes from the stored image records,
/// not from any selection.
pub fn render_exploration(
    store: &DataStore,
    story_id: &str,
    public_base_url: &str,
) -> Result<String, ServiceError> {
    let report = store.load_report(story_id)?;
    let images = store.load_image_records(story_id)?;
    let articles = store.load_articles(story_id)?;
    let clusters = store.load_clusters(story_id)?;
    let latest = store.list_macros(story_id)?.pop();
    let title = story_title(&report);
    let canonical = explore_url(public_base_url, story_id)?;

    let article_of: HashMap<&str, _> = articles.iter().map(|a| (a.article_id.as_str(), a)).collect();
    let mut cluster_of: HashMap<&str, usize> = HashMap::new();
    for c in &clusters.clusters {
        for m in &c.members {
            cluster_of.insert(m.as_str(), c.cluster_id);
        }
    }
    // Cluster order from the report; images the report does not mention are
    // still shown, in their own group.
    let mut groups: BTreeMap<(usize, usize), Vec<_>> = BTreeMap::new();
    let rank: HashMap<usize, usize> = clusters
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| (c.cluster_id, i))
        .collect();
    for img in &images {
        let key = match cluster_of.get(img.image_id.as_str()) {
            Some(cid) => (rank[cid], *cid),
            None => (usize::MAX, usize::MAX),
        };
        groups.entry(key).or_default().push(img);
    }

    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"");
    html.push_str(&esc(&report.query.language));
    html.push_str("\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(html, "<title>{}</title>", esc(&title));
    match &latest {
        Some(m) => {
            let card = render_card_metadata(m, &canonical, &title, &m.caption)?;
            html.push_str(&card.html);
        }
        None => {
            let _ = writeln!(html, "<link rel=\"canonical\" href=\"{}\">", esc(&canonical));
        }
    }
    html.push_str("</head>\n<body>\n");
    let _ = writeln!(html, "<h1>{}</h1>", esc(&title));

    if let Some(m) = &latest {
        let _ = writeln!(
            html,
            "<section class=\"macro\">\n<img src=\"/media/{}/macros/{}.png\" alt=\"{}\" width=\"{}\" height=\"{}\">\n</section>",
            esc(story_id),
            esc(&m.macro_id),
            esc(&m.caption),
            m.layout.width(),
            m.layout.height()
        );
    }

    let _ = writeln!(
        html,
        "<section class=\"collection\" data-image-count=\"{}\">\n<h2>Every photo collected for this story ({})</h2>",
        images.len(),
        images.len()
    );
    for ((_, cid), members) in &groups {
        if *cid == usize::MAX {
            html.push_str("<div class=\"cluster\">\n<h3>Unclustered</h3>\n");
        } else {
            let _ = writeln!(
                html,
                "<div class=\"cluster\" data-cluster-id=\"{cid}\">\n<h3>Group {} ({} photos)</h3>",
                cid + 1,
                members.len()
            );
        }
        for img in members {
            let article = article_of.get(img.article_id.as_str());
            let source = article.map_or("unknown source", |a| a.source_name.as_str());
            let link = article.map_or(String::new(), |a| a.url.to_string());
            let _ = writeln!(
                html,
                concat!(
                    "<figure class=\"{cls}\" data-image-id=\"{id}\" data-source=\"{src}\">",
                    "<img src=\"/media/{story}/images/{id}.png\" alt=\"{src}\" width=\"{w}\" height=\"{h}\">",
                    "<figcaption>{src}: <a href=\"{link}\">{link}</a></figcaption></figure>"
                ),
                cls = EXPLORE_IMAGE_CLASS,
                id = esc(&img.image_id),
                src = esc(source),
                story = esc(story_id),
                w = img.width,
                h = img.height,
                link = esc(&link),
            );
        }
        html.push_str("</div>\n");
    }
    html.push_str("</section>\n</body>\n</html>\n");
    Ok(html)
}

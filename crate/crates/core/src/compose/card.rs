use url::Url;

use super::{ImageMacro, MacroError};

/// HTML `<head>` fragment with summary-card and Open Graph tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardMetadata {
    pub html: String,
    pub image_url: String,
}

fn escape_attr(s: &str) -> String {
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

fn absolute_http(raw: &str) -> Result<Url, MacroError> {
    let url = Url::parse(raw).map_err(|e| MacroError::InvalidUrl(format!("{raw}: {e}")))?;
    if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
        return Err(MacroError::InvalidUrl(format!(
            "{raw}: not an absolute http(s) url"
        )));
    }
    Ok(url)
}

/// Public URL of a macro's PNG, served next to the exploration page.
pub fn media_url(explore_url: &str, story_id: &str, macro_id: &str) -> Result<String, MacroError> {
    let base = absolute_http(explore_url)?;
    base.join(&format!("/media/{story_id}/macros/{macro_id}.png"))
        .map(|u| u.to_string())
        .map_err(|e| MacroError::InvalidUrl(e.to_string()))
}

/// Card tags for the exploration page that a shared macro links to. An empty
/// description falls back to the title.
pub fn render_card_metadata(
    image_macro: &ImageMacro,
    explore_url: &str,
    title: &str,
    description: &str,
) -> Result<CardMetadata, MacroError> {
    let canonical = absolute_http(explore_url)?.to_string();
    let image_url = media_url(explore_url, &image_macro.story_id, &image_macro.macro_id)?;
    let description = if description.trim().is_empty() {
        title
    } else {
        description
    };
    let (t, d, i, u) = (
        escape_attr(title),
        escape_attr(description),
        escape_attr(&image_url),
        escape_attr(&canonical),
    );
    let html = format!(
        concat!(
            "<meta name=\"twitter:card\" content=\"summary_large_image\">\n",
            "<meta name=\"twitter:title\" content=\"{t}\">\n",
            "<meta name=\"twitter:description\" content=\"{d}\">\n",
            "<meta name=\"twitter:image\" content=\"{i}\">\n",
            "<meta property=\"og:type\" content=\"website\">\n",
            "<meta property=\"og:title\" content=\"{t}\">\n",
            "<meta property=\"og:description\" content=\"{d}\">\n",
            "<meta property=\"og:image\" content=\"{i}\">\n",
            "<meta property=\"og:url\" content=\"{u}\">\n",
            "<link rel=\"canonical\" href=\"{u}\">\n",
        ),
        t = t,
        d = d,
        i = i,
        u = u
    );
    Ok(CardMetadata { html, image_url })
}

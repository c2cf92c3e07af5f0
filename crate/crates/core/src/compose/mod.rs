//! Image macros: a grid collage of selected story photos with a caption band,
//! plus the link-preview metadata that makes a shared link show it.

mod card;
mod text;

pub use card::{media_url, render_card_metadata, CardMetadata};
pub use text::{draw_text, wrap};

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::ArticleImage;

pub const MAX_CAPTION_CHARS: usize = 280;
const NEUTRAL_GRAY: Rgb<u8> = Rgb([128, 128, 128]);
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);
const CAPTION_SCALE: u32 = 2;
const CAPTION_LINE: u32 = text::GLYPH * CAPTION_SCALE + 4;
const CAPTION_PAD: u32 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum MacroError {
    #[error("no images selected")]
    EmptySelection,
    #[error("caption has {0} characters, the limit is {MAX_CAPTION_CHARS}")]
    CaptionTooLong(usize),
    #[error("{selected} images do not fit a {rows}x{cols} layout")]
    LayoutTooSmall { selected: usize, rows: u32, cols: u32 },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid url: {0}")]
    InvalidUrl(String),
    #[error("image {0} is not part of the story")]
    UnknownImage(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    #[default]
    None,
    PerSourceLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroLayout {
    pub rows: u32,
    pub cols: u32,
    #[serde(default = "default_cell")]
    pub cell: u32,
    #[serde(default = "default_gutter")]
    pub gutter: u32,
    #[serde(default)]
    pub label_mode: LabelMode,
    #[serde(default = "default_band")]
    pub caption_band_height: u32,
}

fn default_cell() -> u32 {
    320
}
fn default_gutter() -> u32 {
    8
}
fn default_band() -> u32 {
    60
}

impl MacroLayout {
    pub fn grid(rows: u32, cols: u32) -> Self {
        Self {
            rows,
            cols,
            cell: default_cell(),
            gutter: default_gutter(),
            label_mode: LabelMode::None,
            caption_band_height: default_band(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn width(&self) -> u32 {
        self.cols * self.cell + (self.cols + 1) * self.gutter
    }

    pub fn height(&self) -> u32 {
        self.rows * self.cell + (self.rows + 1) * self.gutter + self.caption_band_height
    }

    pub fn validate(&self) -> Result<(), MacroError> {
        if self.rows == 0 || self.cols == 0 || self.cell == 0 {
            return Err(MacroError::InvalidLayout(
                "rows, cols and cell must be positive".into(),
            ));
        }
        let too_big = |v: u64| v > 16_384;
        if too_big(self.cols as u64 * self.cell as u64 + (self.cols as u64 + 1) * self.gutter as u64)
            || too_big(
                self.rows as u64 * self.cell as u64
                    + (self.rows as u64 + 1) * self.gutter as u64
                    + self.caption_band_height as u64,
            )
        {
            return Err(MacroError::InvalidLayout("raster larger than 16384 px".into()));
        }
        Ok(())
    }
}

/// `RxC`, e.g. `2x3`.
impl FromStr for MacroLayout {
    type Err = MacroError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| MacroError::InvalidLayout(format!("expected RxC, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| MacroError::InvalidLayout(format!("expected RxC, got {s:?}")))
        };
        let layout = MacroLayout::grid(parse(r)?, parse(c)?);
        layout.validate()?;
        Ok(layout)
    }
}

impl fmt::Display for MacroLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Who made the macro and for which story; the raster does not depend on it.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroInfo {
    pub macro_id: String,
    pub story_id: String,
    pub created_by: String,
    pub created_at: DateTime<Utc>,
    /// Panel captions used with [`LabelMode::PerSourceLabel`], one per image.
    pub panel_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMacro {
    pub macro_id: String,
    pub story_id: String,
    pub image_ids: Vec<String>,
    pub caption: String,
    pub layout: MacroLayout,
    pub created_by: String,
    pub created_at: DateTime<Utc>,
    /// SHA-256 of the encoded PNG.
    pub png_digest: String,
    #[serde(skip)]
    pub raster: RgbImage,
}

impl ImageMacro {
    pub fn encode_png(&self) -> Vec<u8> {
        crate::synth::encode_png(&self.raster)
    }
}

/// Content-derived macro id: identical selections render identical macros.
pub fn macro_id_for(story_id: &str, image_ids: &[String], layout: &MacroLayout, caption: &str) -> String {
    let mut h = Sha256::new();
    h.update(story_id.as_bytes());
    for id in image_ids {
        h.update([0]);
        h.update(id.as_bytes());
    }
    h.update([1]);
    h.update(serde_json::to_vec(layout).expect("layout serializes"));
    h.update([2]);
    h.update(caption.as_bytes());
    format!("m-{}", &hex::encode(h.finalize())[..12])
}

pub fn check_caption(caption: &str) -> Result<(), MacroError> {
    let n = caption.chars().count();
    if n > MAX_CAPTION_CHARS {
        return Err(MacroError::CaptionTooLong(n));
    }
    Ok(())
}

fn square_cell(raster: &RgbImage, cell: u32) -> RgbImage {
    let side = raster.width().min(raster.height()).max(1);
    let x0 = (raster.width() - side.min(raster.width())) / 2;
    let y0 = (raster.height() - side.min(raster.height())) / 2;
    let square = imageops::crop_imm(raster, x0, y0, side, side).to_image();
    if side == cell {
        square
    } else {
        imageops::resize(&square, cell, cell, FilterType::Triangle)
    }
}

/// Render the collage: each image center-cropped to a square, scaled to the
/// cell size and placed row-major; unused cells are neutral gray and the
/// caption goes in the bottom band.
pub fn compose_macro(
    images: &[ArticleImage],
    layout: &MacroLayout,
    caption: &str,
    info: MacroInfo,
) -> Result<ImageMacro, MacroError> {
    check_caption(caption)?;
    layout.validate()?;
    if images.is_empty() {
        return Err(MacroError::EmptySelection);
    }
    if images.len() > layout.capacity() {
        return Err(MacroError::LayoutTooSmall {
            selected: images.len(),
            rows: layout.rows,
            cols: layout.cols,
        });
    }

    let mut canvas = RgbImage::from_pixel(layout.width(), layout.height(), BACKGROUND);
    for slot in 0..layout.capacity() {
        let (r, c) = (slot as u32 / layout.cols, slot as u32 % layout.cols);
        let x = layout.gutter + c * (layout.cell + layout.gutter);
        let y = layout.gutter + r * (layout.cell + layout.gutter);
        match images.get(slot) {
            Some(img) => {
                let tile = square_cell(&img.raster, layout.cell);
                imageops::replace(&mut canvas, &tile, x as i64, y as i64);
                if layout.label_mode == LabelMode::PerSourceLabel {
                    if let Some(label) = info.panel_labels.get(slot) {
                        let strip_h = (text::GLYPH + 4).min(layout.cell);
                        for yy in y..y + strip_h {
                            for xx in x..x + layout.cell {
                                canvas.put_pixel(xx, yy, INK);
                            }
                        }
                        let max_chars = (layout.cell.saturating_sub(4) / text::GLYPH) as usize;
                        let label: String = label.chars().take(max_chars).collect();
                        draw_text(&mut canvas, &label, x + 2, y + 2, 1, BACKGROUND);
                    }
                }
            }
            None => {
                for yy in y..y + layout.cell {
                    for xx in x..x + layout.cell {
                        canvas.put_pixel(xx, yy, NEUTRAL_GRAY);
                    }
                }
            }
        }
    }

    let band_top = layout.height() - layout.caption_band_height;
    let chars_per_line =
        (layout.width().saturating_sub(2 * CAPTION_PAD) / (text::GLYPH * CAPTION_SCALE)) as usize;
    let max_lines = (layout.caption_band_height.saturating_sub(CAPTION_PAD) / CAPTION_LINE) as usize;
    for (i, line) in wrap(caption, chars_per_line, max_lines).iter().enumerate() {
        draw_text(
            &mut canvas,
            line,
            CAPTION_PAD,
            band_top + CAPTION_PAD / 2 + i as u32 * CAPTION_LINE,
            CAPTION_SCALE,
            INK,
        );
    }

    let png_digest = hex::encode(Sha256::digest(crate::synth::encode_png(&canvas)));
    Ok(ImageMacro {
        macro_id: info.macro_id,
        story_id: info.story_id,
        image_ids: images.iter().map(|i| i.image_id.clone()).collect(),
        caption: caption.to_string(),
        layout: *layout,
        created_by: info.created_by,
        created_at: info.created_at,
        png_digest,
        raster: canvas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn info() -> MacroInfo {
        MacroInfo {
            macro_id: "m1".into(),
            story_id: "s".into(),
            created_by: "ana".into(),
            created_at: Utc.with_ymd_and_hms(2017, 1, 8, 10, 0, 0).unwrap(),
            panel_labels: vec![],
        }
    }

    fn photo(i: u64) -> ArticleImage {
        let raster = if i.is_multiple_of(2) {
            synth::crowd_scene(i, 200, 150)
        } else {
            synth::empty_street(i, 150, 200)
        };
        ArticleImage::new(format!("img{i}"), "a1".into(), String::new(), raster)
    }

    #[test]
    fn two_by_two_dimensions() {
        let imgs: Vec<_> = (0..4).map(photo).collect();
        let m = compose_macro(&imgs, &MacroLayout::grid(2, 2), "Calles vacías", info()).unwrap();
        assert_eq!(m.raster.dimensions(), (664, 724));
        assert_eq!(m.image_ids, vec!["img0", "img1", "img2", "img3"]);
    }

    #[test]
    fn single_image_is_the_cropped_photo() {
        let img = photo(1);
        let mut layout = MacroLayout::grid(1, 1);
        layout.cell = 150;
        let m = compose_macro(std::slice::from_ref(&img), &layout, "", info()).unwrap();
        // 150x200 portrait, cropped to the central 150x150 square: no resize.
        let expected = imageops::crop_imm(&img.raster, 0, 25, 150, 150).to_image();
        let tile = imageops::crop_imm(&m.raster, 8, 8, 150, 150).to_image();
        assert_eq!(tile, expected);
        // Empty caption leaves the band blank.
        let band_top = m.raster.height() - 60;
        assert!((band_top..m.raster.height()).all(|y| m.raster.get_pixel(20, y) == &BACKGROUND));
    }

    #[test]
    fn unused_cells_are_gray() {
        let imgs = vec![photo(0)];
        let m = compose_macro(&imgs, &MacroLayout::grid(1, 2), "x", info()).unwrap();
        assert_eq!(m.raster.get_pixel(8 + 320 + 8 + 100, 100), &NEUTRAL_GRAY);
    }

    #[test]
    fn rendering_is_deterministic() {
        let imgs: Vec<_> = (0..3).map(photo).collect();
        let mut layout = MacroLayout::grid(2, 2);
        layout.label_mode = LabelMode::PerSourceLabel;
        let mut i = info();
        i.panel_labels = vec!["diario.example".into(), "otro.example".into(), "x".into()];
        let a = compose_macro(&imgs, &layout, "¿Dónde está la gente?", i.clone()).unwrap();
        let b = compose_macro(&imgs, &layout, "¿Dónde está la gente?", i).unwrap();
        assert_eq!(a.png_digest, b.png_digest);
        assert_eq!(a.encode_png(), b.encode_png());
    }

    #[test]
    fn errors() {
        let imgs: Vec<_> = (0..5).map(photo).collect();
        assert_eq!(
            compose_macro(&[], &MacroLayout::grid(1, 1), "", info()).unwrap_err(),
            MacroError::EmptySelection
        );
        assert!(matches!(
            compose_macro(&imgs, &MacroLayout::grid(2, 2), "", info()),
            Err(MacroError::LayoutTooSmall { selected: 5, .. })
        ));
        let long = "a".repeat(281);
        assert_eq!(
            compose_macro(&imgs[..1], &MacroLayout::grid(1, 1), &long, info()).unwrap_err(),
            MacroError::CaptionTooLong(281)
        );
        assert!(check_caption(&"ñ".repeat(280)).is_ok());
    }

    #[test]
    fn layout_parsing() {
        let l: MacroLayout = "2x3".parse().unwrap();
        assert_eq!((l.rows, l.cols), (2, 3));
        assert_eq!(l.to_string(), "2x3");
        assert!("0x2".parse::<MacroLayout>().is_err());
        assert!("two".parse::<MacroLayout>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn raster_dimension_formula(rows in 1u32..4, cols in 1u32..4, cell in 16u32..96, gutter in 0u32..12, band in 0u32..70) {
            let layout = MacroLayout { rows, cols, cell, gutter, label_mode: LabelMode::None, caption_band_height: band };
            let m = compose_macro(&[photo(2)], &layout, "caption", info()).unwrap();
            prop_assert_eq!(m.raster.width(), cols * cell + (cols + 1) * gutter);
            prop_assert_eq!(m.raster.height(), rows * cell + (rows + 1) * gutter + band);
        }
    }
}

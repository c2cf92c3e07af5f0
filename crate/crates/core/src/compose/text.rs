//! Bitmap text drawing with the bundled 8x8 font.

use font8x8::{UnicodeFonts, BASIC_FONTS, LATIN_FONTS};
use image::{Rgb, RgbImage};

pub const GLYPH: u32 = 8;

fn glyph(c: char) -> [u8; 8] {
    BASIC_FONTS
        .get(c)
        .or_else(|| LATIN_FONTS.get(c))
        .or_else(|| BASIC_FONTS.get('?'))
        .expect("'?' is in the basic set")
}

/// Draw `text` with its top-left corner at `(x, y)`, each font pixel blown up
/// to `scale x scale`. Pixels outside the image are clipped.
pub fn draw_text(img: &mut RgbImage, text: &str, x: u32, y: u32, scale: u32, color: Rgb<u8>) {
    let advance = GLYPH * scale;
    for (i, c) in text.chars().enumerate() {
        let gx = x + i as u32 * advance;
        if gx >= img.width() {
            break;
        }
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..8u32 {
                if bits & (1 << col) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let px = gx + col * scale + sx;
                        let py = y + row as u32 * scale + sy;
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, color);
                        }
                    }
                }
            }
        }
    }
}

/// Greedy word wrap to at most `max_lines` lines of `width` characters. If
/// the text does not fit, the last line ends in `...`.
pub fn wrap(text: &str, width: usize, max_lines: usize) -> Vec<String> {
    if width == 0 || max_lines == 0 {
        return Vec::new();
    }
    let mut lines: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut overflow = false;
    let words = text.split_whitespace().flat_map(|w| {
        // Words longer than a line are hard-split.
        let chars: Vec<char> = w.chars().collect();
        chars
            .chunks(width)
            .map(|c| c.iter().collect::<String>())
            .collect::<Vec<_>>()
    });
    for word in words {
        let needed = if cur.is_empty() {
            word.chars().count()
        } else {
            cur.chars().count() + 1 + word.chars().count()
        };
        if needed <= width {
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(&word);
            continue;
        }
        lines.push(std::mem::take(&mut cur));
        if lines.len() == max_lines {
            overflow = true;
            break;
        }
        cur = word;
    }
    if !overflow && !cur.is_empty() {
        lines.push(cur);
    }
    if overflow {
        let last = lines.last_mut().expect("max_lines >= 1");
        let keep = width.saturating_sub(3);
        let mut trimmed: String = last.chars().take(keep).collect();
        trimmed.truncate(trimmed.trim_end().len());
        trimmed.push_str("...");
        *last = trimmed.chars().take(width).collect();
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_and_truncates() {
        assert_eq!(wrap("hola mundo", 20, 2), vec!["hola mundo"]);
        assert_eq!(wrap("uno dos tres", 7, 2), vec!["uno dos", "tres"]);
        let out = wrap("uno dos tres cuatro cinco", 7, 2);
        assert_eq!(out.len(), 2);
        assert!(out[1].ends_with("..."));
        assert!(out.iter().all(|l| l.chars().count() <= 7));
        assert!(wrap("", 5, 2).is_empty());
        assert_eq!(wrap("abcdefghij", 4, 3), vec!["abcd", "efgh", "ij"]);
    }

    #[test]
    fn draws_inside_bounds_only() {
        let mut img = RgbImage::new(20, 10);
        draw_text(&mut img, "ñA", 15, 5, 2, Rgb([255, 255, 255]));
        assert!(img.pixels().any(|p| p.0 == [255, 255, 255]));
    }
}

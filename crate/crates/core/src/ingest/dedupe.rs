use std::collections::HashMap;

use super::ArticleImage;

/// Keep one image per pixel digest: the one with the smallest
/// `(article_id, image_id)`. Survivors keep their input order.
pub fn dedupe_images(images: Vec<ArticleImage>) -> Vec<ArticleImage> {
    let mut keeper: HashMap<&str, (&str, &str, usize)> = HashMap::new();
    for (idx, img) in images.iter().enumerate() {
        let key = (img.article_id.as_str(), img.image_id.as_str(), idx);
        keeper
            .entry(img.bytes_hash.as_str())
            .and_modify(|cur| {
                if (key.0, key.1) < (cur.0, cur.1) {
                    *cur = key;
                }
            })
            .or_insert(key);
    }
    let keep: Vec<bool> = images
        .iter()
        .enumerate()
        .map(|(idx, img)| keeper[img.bytes_hash.as_str()].2 == idx)
        .collect();
    images
        .into_iter()
        .zip(keep)
        .filter_map(|(img, k)| k.then_some(img))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};
    use proptest::prelude::*;

    fn img(article: &str, id: &str, shade: u8) -> ArticleImage {
        ArticleImage::new(
            id.into(),
            article.into(),
            format!("https://x.example/{id}.png"),
            RgbImage::from_pixel(3, 3, Rgb([shade, 0, 0])),
        )
    }

    #[test]
    fn duplicate_keeps_lower_article() {
        let out = dedupe_images(vec![img("a2", "a2-i00", 7), img("a1", "a1-i03", 7)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].article_id, "a1");
    }

    #[test]
    fn distinct_set_is_unchanged() {
        let input: Vec<_> = (0..4).map(|i| img("a1", &format!("a1-i0{i}"), i)).collect();
        assert_eq!(dedupe_images(input.clone()), input);
    }

    #[test]
    fn idempotent_on_ten_with_three_duplicates() {
        let shades = [1u8, 2, 3, 1, 4, 5, 2, 6, 7, 3];
        let input: Vec<_> = shades
            .iter()
            .enumerate()
            .map(|(i, s)| img(&format!("a{}", i % 4), &format!("x{i:02}"), *s))
            .collect();
        let once = dedupe_images(input);
        assert_eq!(once.len(), 7);
        let twice = dedupe_images(once.clone());
        assert_eq!(once, twice);
    }

    proptest! {
        #[test]
        fn never_grows_and_is_idempotent(shades in prop::collection::vec(0u8..6, 0..24)) {
            let input: Vec<_> = shades
                .iter()
                .enumerate()
                .map(|(i, s)| img(&format!("a{}", (i * 7) % 5), &format!("x{i:02}"), *s))
                .collect();
            let once = dedupe_images(input.clone());
            prop_assert!(once.len() <= input.len());
            let distinct: std::collections::HashSet<_> = input.iter().map(|i| i.bytes_hash.clone()).collect();
            prop_assert_eq!(once.len(), distinct.len());
            prop_assert_eq!(dedupe_images(once.clone()), once);
        }
    }
}

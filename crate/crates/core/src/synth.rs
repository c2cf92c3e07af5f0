//! Seeded generators for synthetic news photos.
//!
//! Two visual families stand in for the two ways a protest can be shown: a
//! dark, busy "crowd" frame and a bright, smooth "empty street" frame. They
//! back the shipped fixture corpus and the end-to-end tests.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Dark background packed with small bright blobs (heads, banners, shirts).
pub fn crowd_scene(seed: u64, width: u32, height: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let base: f64 = rng.random_range(25.0..60.0);
    let mut img = RgbImage::from_fn(width, height, |_, y| {
        let shade = base + 20.0 * (y as f64 / height as f64);
        Rgb([clamp_u8(shade), clamp_u8(shade * 0.9), clamp_u8(shade * 1.1)])
    });
    let blobs = (width * height / 90) as usize;
    for _ in 0..blobs {
        let cx = rng.random_range(0..width) as i64;
        let cy = rng.random_range(0..height) as i64;
        let r = rng.random_range(2..6) as i64;
        let color = Rgb([
            rng.random_range(90..255u8),
            rng.random_range(50..220u8),
            rng.random_range(30..200u8),
        ]);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as u32) < width && (y as u32) < height {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    for p in img.pixels_mut() {
        let n: f64 = rng.random_range(-18.0..18.0);
        for c in p.0.iter_mut() {
            *c = clamp_u8(*c as f64 + n);
        }
    }
    img
}

/// Bright sky over a smooth grey road with a few flat building blocks.
pub fn empty_street(seed: u64, width: u32, height: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57EE7);
    let horizon = (height as f64 * rng.random_range(0.35..0.5)) as u32;
    let sky_top: f64 = rng.random_range(200.0..225.0);
    let road: f64 = rng.random_range(165.0..190.0);
    let mut img = RgbImage::from_fn(width, height, |x, y| {
        if y < horizon {
            let t = y as f64 / horizon.max(1) as f64;
            let v = sky_top + 25.0 * t;
            Rgb([clamp_u8(v * 0.92), clamp_u8(v * 0.97), clamp_u8(v)])
        } else {
            let t = (y - horizon) as f64 / (height - horizon).max(1) as f64;
            let center = width as f64 / 2.0;
            let half = 20.0 + t * width as f64 * 0.45;
            let v = if (x as f64 - center).abs() < half {
                road
            } else {
                road + 25.0
            };
            Rgb([clamp_u8(v), clamp_u8(v), clamp_u8(v * 0.98)])
        }
    });
    let buildings = rng.random_range(2..4);
    for _ in 0..buildings {
        let w = rng.random_range(width / 8..width / 4);
        let h = rng.random_range(height / 8..horizon.max(height / 8 + 1));
        let x0 = rng.random_range(0..width - w);
        let shade: f64 = rng.random_range(185.0..230.0);
        for y in horizon.saturating_sub(h)..horizon {
            for x in x0..x0 + w {
                img.put_pixel(
                    x,
                    y,
                    Rgb([clamp_u8(shade), clamp_u8(shade * 0.96), clamp_u8(shade * 0.9)]),
                );
            }
        }
    }
    for p in img.pixels_mut() {
        let n: f64 = rng.random_range(-2.0..2.0);
        for c in p.0.iter_mut() {
            *c = clamp_u8(*c as f64 + n);
        }
    }
    img
}

/// Tiny flat square, the kind of logo or tracker the size filter drops.
pub fn icon(seed: u64, side: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_pixel(side, side, Rgb([rng.random(), rng.random(), rng.random()]))
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    buf.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_luma(img: &RgbImage) -> f64 {
        img.pixels()
            .map(|p| p.0.iter().map(|&c| c as f64).sum::<f64>() / 3.0)
            .sum::<f64>()
            / (img.width() * img.height()) as f64
    }

    #[test]
    fn families_differ_in_brightness() {
        for seed in 0..4 {
            assert!(mean_luma(&crowd_scene(seed, 160, 120)) < 110.0);
            assert!(mean_luma(&empty_street(seed, 160, 120)) > 160.0);
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(crowd_scene(3, 64, 64), crowd_scene(3, 64, 64));
        assert_ne!(crowd_scene(3, 64, 64), crowd_scene(4, 64, 64));
    }
}

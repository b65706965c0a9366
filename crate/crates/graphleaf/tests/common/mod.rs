//! Synthetic inputs shared by the integration tests: natural-style
//! images (smooth color fields plus patches) and an on-disk corpus whose
//! class is the dominant patch hue.

// not every test target uses every helper
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use std::path::Path;

use graphleaf::dataset::NormalizedImage;
use graphleaf::rng::Rng;
use image::{Rgb, RgbImage};

const SIDE: usize = 128;

fn clamp_unit(v: f64) -> f32 {
    v.clamp(-1.0, 1.0) as f32
}

/// Smooth bilinear color field with a handful of soft elliptical patches
/// and mild noise. Deterministic in the seed.
pub fn natural_image(seed: u64) -> NormalizedImage {
    let mut rng = Rng::seed_from_u64(seed);
    let mut corners = [[0.0f64; 3]; 4];
    for corner in corners.iter_mut() {
        for c in corner.iter_mut() {
            *c = rng.uniform_in(-0.8, 0.8);
        }
    }

    struct Patch {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        color: [f64; 3],
    }
    let n_patches = 4 + rng.range_usize(4);
    let patches: Vec<Patch> = (0..n_patches)
        .map(|_| Patch {
            cx: rng.uniform_in(10.0, SIDE as f64 - 10.0),
            cy: rng.uniform_in(10.0, SIDE as f64 - 10.0),
            rx: rng.uniform_in(10.0, 34.0),
            ry: rng.uniform_in(10.0, 34.0),
            color: [
                rng.uniform_in(-0.9, 0.9),
                rng.uniform_in(-0.9, 0.9),
                rng.uniform_in(-0.9, 0.9),
            ],
        })
        .collect();

    let mut pixels = Vec::with_capacity(SIDE * SIDE * 3);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let fx = x as f64 / (SIDE - 1) as f64;
            let fy = y as f64 / (SIDE - 1) as f64;
            let mut color = [0.0f64; 3];
            for c in 0..3 {
                let top = corners[0][c] * (1.0 - fx) + corners[1][c] * fx;
                let bottom = corners[2][c] * (1.0 - fx) + corners[3][c] * fx;
                color[c] = top * (1.0 - fy) + bottom * fy;
            }
            for p in &patches {
                let dx = (x as f64 - p.cx) / p.rx;
                let dy = (y as f64 - p.cy) / p.ry;
                let d2 = dx * dx + dy * dy;
                if d2 < 1.0 {
                    // soft edge: full patch color in the core, blended rim
                    let w = ((1.0 - d2) * 3.0).min(1.0);
                    for c in 0..3 {
                        color[c] = color[c] * (1.0 - w) + p.color[c] * w;
                    }
                }
            }
            let noise = rng.uniform_in(-0.02, 0.02);
            for c in color {
                pixels.push(clamp_unit(c + noise));
            }
        }
    }
    NormalizedImage::from_pixels(pixels).expect("synthetic image in range")
}

pub const HUE_CLASSES: [&str; 4] = ["blue", "green", "red", "yellow"];

fn hue_color(class: usize) -> [u8; 3] {
    match class {
        0 => [45, 70, 205],
        1 => [45, 190, 55],
        2 => [205, 45, 45],
        _ => [210, 200, 45],
    }
}

/// Write `per_class` images for each of the four hue classes under
/// `root/<class>/img_*.png`. The class signal is a dominant central
/// patch of the class hue over a muted background.
pub fn write_hue_corpus(root: &Path, per_class: usize, seed: u64) {
    let mut rng = Rng::seed_from_u64(seed);
    for (class, name) in HUE_CLASSES.iter().enumerate() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).expect("mkdir class");
        for i in 0..per_class {
            let side = 64u32;
            let bg = [
                90 + rng.range(40) as u8,
                95 + rng.range(40) as u8,
                85 + rng.range(40) as u8,
            ];
            let mut img = RgbImage::from_pixel(side, side, Rgb(bg));
            let hue = hue_color(class);
            let cx = 24.0 + rng.uniform_f64() * 16.0;
            let cy = 24.0 + rng.uniform_f64() * 16.0;
            let radius = 18.0 + rng.uniform_f64() * 8.0;
            for y in 0..side {
                for x in 0..side {
                    let dx = x as f64 - cx;
                    let dy = y as f64 - cy;
                    if dx * dx + dy * dy < radius * radius {
                        let jitter = rng.range(24) as i16 - 12;
                        let px = [
                            (hue[0] as i16 + jitter).clamp(0, 255) as u8,
                            (hue[1] as i16 + jitter).clamp(0, 255) as u8,
                            (hue[2] as i16 + jitter).clamp(0, 255) as u8,
                        ];
                        img.put_pixel(x, y, Rgb(px));
                    }
                }
            }
            img.save(dir.join(format!("img_{:03}.png", i)))
                .expect("save corpus image");
        }
    }
}

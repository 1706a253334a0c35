//! Robustness augmentations: box blur and salt noise.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Frame, IngestError, Raster};

pub const DEFAULT_BLUR_KERNEL: u32 = 10;
pub const DEFAULT_NOISE_FRACTION: f64 = 0.10;
pub const DEFAULT_NOISE_VALUE: u8 = 1;

/// Normalized `k`×`k` box filter with edge replication.
///
/// The window of output pixel `x` spans source columns `x - k/2 ..= x + (k-1)/2`
/// (same for rows), so for even `k` the anchor sits right of center.
pub fn apply_blur(frame: &Frame, k: u32) -> Result<Frame, IngestError> {
    if k == 0 || k > frame.width.min(frame.height) {
        return Err(IngestError::InvalidParameter(format!(
            "blur kernel {k} outside 1..={}",
            frame.width.min(frame.height)
        )));
    }
    match &frame.raster {
        Some(r) if k > 1 => Ok(frame.with_raster(box_blur(r, k))),
        _ => Ok(frame.clone()),
    }
}

fn box_blur(src: &Raster, k: u32) -> Raster {
    let w = src.width() as usize;
    let h = src.height() as usize;
    let c = src.channels() as usize;
    let before = (k / 2) as isize;
    let after = ((k - 1) / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    // padded summed-area table, one plane per channel, (w + k) x (h + k)
    let pw = w + k as usize;
    let ph = h + k as usize;
    let mut out = vec![0u8; w * h * c];
    let area = (k * k) as u64;
    let mut table = vec![0u64; (pw + 1) * (ph + 1)];
    for ch in 0..c {
        for py in 0..ph {
            let sy = clamp(py as isize - before, h);
            let mut row_sum = 0u64;
            for px in 0..pw {
                let sx = clamp(px as isize - before, w);
                row_sum += src.pixels()[(sy * w + sx) * c + ch] as u64;
                table[(py + 1) * (pw + 1) + px + 1] = table[py * (pw + 1) + px + 1] + row_sum;
            }
        }
        let span = (before + after + 1) as usize;
        for y in 0..h {
            for x in 0..w {
                // window in padded coords starts at (x, y)
                let (x0, y0, x1, y1) = (x, y, x + span, y + span);
                let sum = table[y1 * (pw + 1) + x1] + table[y0 * (pw + 1) + x0]
                    - table[y0 * (pw + 1) + x1]
                    - table[y1 * (pw + 1) + x0];
                out[(y * w + x) * c + ch] = ((sum + area / 2) / area) as u8;
            }
        }
    }
    Raster::new(src.width(), src.height(), src.channels(), out).expect("blur preserves layout")
}

/// Number of pixels salt noise replaces for a given frame size.
pub fn salt_noise_count(pixel_count: usize, fraction: f64) -> usize {
    (fraction * pixel_count as f64).round() as usize
}

/// Replace `round(fraction * width * height)` distinct pixels, drawn without
/// replacement from a ChaCha8 stream seeded with `seed`, with `value` on every
/// channel.
pub fn apply_salt_noise(
    frame: &Frame,
    fraction: f64,
    value: u8,
    seed: u64,
) -> Result<Frame, IngestError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(IngestError::InvalidParameter(format!(
            "noise fraction {fraction} outside [0, 1]"
        )));
    }
    let Some(raster) = &frame.raster else {
        return Ok(frame.clone());
    };
    let n = raster.pixel_count();
    let count = salt_noise_count(n, fraction);
    if count == 0 {
        return Ok(frame.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = raster.channels() as usize;
    let mut noisy = raster.clone();
    let pixels = noisy.pixels_mut();
    for pos in index::sample(&mut rng, n, count) {
        pixels[pos * c..(pos + 1) * c].fill(value);
    }
    Ok(frame.with_raster(noisy))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;

    fn gray(w: u32, h: u32, pixels: Vec<u8>) -> Frame {
        Frame::from_raster(0, 0.0, Raster::new(w, h, 1, pixels).unwrap(), Arc::from("t"))
    }

    /// Direct convolution at one coordinate, independent of the summed-area table.
    fn direct_blur_at(r: &Raster, k: i64, x: i64, y: i64) -> u8 {
        let (w, h) = (r.width() as i64, r.height() as i64);
        let mut sum = 0i64;
        for dy in -(k / 2)..=((k - 1) / 2) {
            for dx in -(k / 2)..=((k - 1) / 2) {
                let sx = (x + dx).clamp(0, w - 1);
                let sy = (y + dy).clamp(0, h - 1);
                sum += r.pixels()[(sy * w + sx) as usize] as i64;
            }
        }
        ((sum as f64) / (k * k) as f64).round() as u8
    }

    #[test]
    fn constant_frame_is_unchanged() {
        let f = gray(20, 15, vec![77; 300]);
        let out = apply_blur(&f, 10).unwrap();
        assert_eq!(out.raster, f.raster);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let f = gray(5, 5, (0..25).map(|i| i * 10).collect());
        assert_eq!(apply_blur(&f, 1).unwrap().raster, f.raster);
    }

    #[test]
    fn kernel_out_of_range() {
        let f = gray(5, 8, vec![0; 40]);
        assert!(matches!(apply_blur(&f, 0), Err(IngestError::InvalidParameter(_))));
        assert!(matches!(apply_blur(&f, 6), Err(IngestError::InvalidParameter(_))));
    }

    #[test]
    fn single_white_pixel_spreads_into_plateau() {
        let mut pixels = vec![0u8; 40 * 40];
        pixels[20 * 40 + 20] = 255;
        let f = gray(40, 40, pixels);
        let out = apply_blur(&f, 10).unwrap();
        let r = out.raster.as_ref().unwrap();
        let src = f.raster.as_ref().unwrap();
        // round(255 / 100) = 3
        let plateau = (255.0f64 / 100.0).round() as u8;
        let mut hits = 0;
        for y in 0..40 {
            for x in 0..40 {
                let v = r.pixel(x, y)[0];
                assert_eq!(v, direct_blur_at(src, 10, x as i64, y as i64));
                if v == plateau {
                    hits += 1;
                    assert!((16..=25).contains(&x) && (16..=25).contains(&y));
                } else {
                    assert_eq!(v, 0);
                }
            }
        }
        assert_eq!(hits, 100);
    }

    #[test]
    fn rgb_channels_blur_independently() {
        let pixels: Vec<u8> = (0..12 * 12).flat_map(|i| [i as u8, 255 - i as u8, 9]).collect();
        let f = Frame::from_raster(0, 0.0, Raster::new(12, 12, 3, pixels).unwrap(), Arc::from("t"));
        let out = apply_blur(&f, 4).unwrap();
        let r = out.raster.unwrap();
        assert!(r.pixels().chunks(3).all(|px| px[2] == 9));
    }

    #[test]
    fn zero_noise_is_identity() {
        let f = gray(10, 10, vec![50; 100]);
        assert_eq!(apply_salt_noise(&f, 0.0, 1, 3).unwrap().raster, f.raster);
    }

    #[test]
    fn ten_percent_noise_hits_exactly_one_thousand_pixels() {
        let f = gray(100, 100, vec![200; 10_000]);
        let out = apply_salt_noise(&f, 0.10, 1, 42).unwrap();
        let changed = out.raster.unwrap().pixels().iter().filter(|&&p| p == 1).count();
        assert_eq!(changed, 1000);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let f = gray(64, 48, (0..64 * 48).map(|i| (i % 250) as u8 + 2).collect());
        let a = apply_salt_noise(&f, 0.1, 1, 9).unwrap();
        let b = apply_salt_noise(&f, 0.1, 1, 9).unwrap();
        let c = apply_salt_noise(&f, 0.1, 1, 10).unwrap();
        assert_eq!(a.raster, b.raster);
        assert_ne!(a.raster, c.raster);
    }

    #[test]
    fn noise_fraction_validated() {
        let f = gray(4, 4, vec![0; 16]);
        assert!(apply_salt_noise(&f, 1.5, 1, 0).is_err());
        assert!(apply_salt_noise(&f, -0.1, 1, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        // Edge replication over-weights border pixels, so small frames of
        // white noise can drift past one level; keep the border band thin.
        #[test]
        fn blur_preserves_mean_on_textured_frames(w in 200u32..400, h in 200u32..400, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pixels: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
            let f = gray(w, h, pixels);
            let out = apply_blur(&f, 10).unwrap();
            let before = f.raster.unwrap().mean_intensity();
            let after = out.raster.unwrap().mean_intensity();
            prop_assert!((before - after).abs() <= 1.0, "{before} vs {after}");
        }

        #[test]
        fn noise_changes_only_the_forced_count(w in 1u32..60, h in 1u32..60, frac in 0.0f64..=1.0, seed in any::<u64>()) {
            let f = gray(w, h, vec![128; (w * h) as usize]);
            let out = apply_salt_noise(&f, frac, 1, seed).unwrap();
            let r = out.raster.unwrap();
            let changed = r.pixels().iter().filter(|&&p| p != 128).count();
            prop_assert_eq!(changed, salt_noise_count((w * h) as usize, frac));
            prop_assert!(r.pixels().iter().all(|&p| p == 128 || p == 1));
        }
    }
}

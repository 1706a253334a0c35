use super::{Frame, Raster};

/// Output dimensions after fitting `width`×`height` inside the caps with one
/// common factor. Dimensions that already fit are returned unchanged.
pub fn fitted_dimensions(width: u32, height: u32, max_w: u32, max_h: u32) -> (u32, u32) {
    if width <= max_w && height <= max_h {
        return (width, height);
    }
    let factor = (max_w as f64 / width as f64).min(max_h as f64 / height as f64);
    let w = ((width as f64 * factor).round() as u32).clamp(1, max_w);
    let h = ((height as f64 * factor).round() as u32).clamp(1, max_h);
    (w, h)
}

/// Shrink a frame to fit within `max_w`×`max_h`, preserving aspect ratio.
///
/// Frames that already fit are returned unchanged. Otherwise every output
/// pixel is the area-weighted mean of the source pixels its footprint covers.
pub fn downsample(frame: Frame, max_w: u32, max_h: u32) -> Frame {
    let (w, h) = fitted_dimensions(frame.width, frame.height, max_w, max_h);
    if (w, h) == (frame.width, frame.height) {
        return frame;
    }
    match &frame.raster {
        Some(raster) => {
            let scaled = area_resample(raster, w, h);
            frame.with_raster(scaled)
        }
        None => Frame {
            width: w,
            height: h,
            ..frame
        },
    }
}

/// Contribution of source samples to one output sample along an axis.
struct Footprint {
    start: usize,
    weights: Vec<f32>,
}

fn axis_footprints(n_in: u32, n_out: u32) -> Vec<Footprint> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let lo = o as f64 * ratio;
            let hi = ((o + 1) as f64 * ratio).min(n_in as f64);
            let start = lo.floor() as usize;
            let end = (hi.ceil() as usize).min(n_in as usize);
            let weights = (start..end)
                .map(|s| {
                    let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                    (overlap / (hi - lo)) as f32
                })
                .collect();
            Footprint { start, weights }
        })
        .collect()
}

fn area_resample(src: &Raster, out_w: u32, out_h: u32) -> Raster {
    let c = src.channels() as usize;
    let in_w = src.width() as usize;
    let in_h = src.height() as usize;
    let cols = axis_footprints(src.width(), out_w);
    let rows = axis_footprints(src.height(), out_h);

    // horizontal pass into f32 rows
    let mut horiz = vec![0f32; in_h * out_w as usize * c];
    for y in 0..in_h {
        let src_row = &src.pixels()[y * in_w * c..(y + 1) * in_w * c];
        let dst_row = &mut horiz[y * out_w as usize * c..(y + 1) * out_w as usize * c];
        for (ox, fp) in cols.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0f32;
                for (k, wgt) in fp.weights.iter().enumerate() {
                    acc += wgt * src_row[(fp.start + k) * c + ch] as f32;
                }
                dst_row[ox * c + ch] = acc;
            }
        }
    }

    let row_len = out_w as usize * c;
    let mut out = vec![0u8; out_h as usize * row_len];
    for (oy, fp) in rows.iter().enumerate() {
        let dst_row = &mut out[oy * row_len..(oy + 1) * row_len];
        for (i, dst) in dst_row.iter_mut().enumerate() {
            let mut acc = 0f32;
            for (k, wgt) in fp.weights.iter().enumerate() {
                acc += wgt * horiz[(fp.start + k) * row_len + i];
            }
            *dst = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    Raster::new(out_w, out_h, src.channels(), out).expect("resample preserves layout")
}

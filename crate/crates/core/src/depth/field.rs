use super::DepthError;

/// Anything that can report relative depth (range along the pixel ray) at a
/// sub-pixel image position.
pub trait DepthSampler: Send + Sync {
    fn depth_at(&self, u: f64, v: f64) -> Result<f64, DepthError>;
}

/// Dense per-pixel relative depth, row-major, sample `(i, j)` at `u = i, v = j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthField {
    width: u32,
    height: u32,
    values: Vec<f32>,
    pub frames_averaged: usize,
    pub epoch: u64,
}

impl DepthField {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, DepthError> {
        if width == 0 || height == 0 || values.len() != width as usize * height as usize {
            return Err(DepthError::ShapeMismatch {
                expected: (width, height),
                found: values.len(),
            });
        }
        Ok(Self { width, height, values, frames_averaged: 1, epoch: 0 })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, i: u32, j: u32) -> f32 {
        self.values[j as usize * self.width as usize + i as usize]
    }

    fn is_valid_sample(v: f32) -> bool {
        v.is_finite() && v > 0.0
    }

    pub fn all_valid(&self) -> bool {
        self.values.iter().all(|&v| Self::is_valid_sample(v))
    }

    /// Multiply every sample by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Replace invalid (non-finite or non-positive) samples by the median of
    /// the valid samples in their 3×3 neighbourhood, sweeping until nothing
    /// changes. Regions with no valid neighbour at all take the global median.
    /// Fails only if the field holds no valid sample.
    pub fn repair_invalid(&mut self) -> Result<usize, DepthError> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut repaired = 0;
        loop {
            let bad: Vec<usize> = (0..self.values.len())
                .filter(|&i| !Self::is_valid_sample(self.values[i]))
                .collect();
            if bad.is_empty() {
                return Ok(repaired);
            }
            let mut updates = Vec::new();
            for &idx in &bad {
                let (x, y) = (idx % w, idx / w);
                let mut neighbours: Vec<f32> = Vec::with_capacity(8);
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let v = self.values[ny * w + nx];
                        if Self::is_valid_sample(v) {
                            neighbours.push(v);
                        }
                    }
                }
                if !neighbours.is_empty() {
                    updates.push((idx, median_f32(&mut neighbours)));
                }
            }
            if updates.is_empty() {
                let mut valid: Vec<f32> =
                    self.values.iter().copied().filter(|&v| Self::is_valid_sample(v)).collect();
                if valid.is_empty() {
                    return Err(DepthError::CalibrationFailed("depth field has no valid samples".into()));
                }
                let fill = median_f32(&mut valid);
                for &idx in &bad {
                    self.values[idx] = fill;
                }
                return Ok(repaired + bad.len());
            }
            repaired += updates.len();
            for (idx, v) in updates {
                self.values[idx] = v;
            }
        }
    }
}

/// Median with the two middle values averaged for even lengths.
pub(crate) fn median_f32(values: &mut [f32]) -> f32 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

impl DepthSampler for DepthField {
    /// Bilinear interpolation between the four surrounding samples. Positions
    /// outside `[0, w-1] x [0, h-1]` or touching an invalid sample fail.
    fn depth_at(&self, u: f64, v: f64) -> Result<f64, DepthError> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(u >= 0.0 && v >= 0.0 && u <= w - 1.0 && v <= h - 1.0) {
            return Err(DepthError::BadDepthSample { u, v });
        }
        let (x0, y0) = (u.floor() as u32, v.floor() as u32);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let corners = [self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1)];
        if !corners.iter().all(|&c| Self::is_valid_sample(c)) {
            return Err(DepthError::BadDepthSample { u, v });
        }
        let [a, b, c, d] = corners.map(f64::from);
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        Ok(top + (bottom - top) * fy)
    }
}

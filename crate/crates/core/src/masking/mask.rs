use super::MaskError;

/// Per-frame binary mask, row-major; `true` marks dynamic pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicMask {
    pub frame_index: u32,
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl DynamicMask {
    pub fn empty(frame_index: u32, width: u32, height: u32) -> Self {
        Self { frame_index, width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn full(frame_index: u32, width: u32, height: u32) -> Self {
        Self { frame_index, width, height, bits: vec![true; width as usize * height as usize] }
    }

    pub fn from_bits(frame_index: u32, width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        if bits.len() != width as usize * height as usize {
            return Err(MaskError::DimensionMismatch { expected: (width, height), got: (bits.len() as u32, 1) });
        }
        Ok(Self { frame_index, width, height, bits })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    /// Mask value at the pixel nearest to a sub-pixel position; outside the frame is static.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let (xi, yi) = (x.round(), y.round());
        if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
            return false;
        }
        self.get(xi as u32, yi as u32)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Fraction of the frame that is dynamic.
    pub fn fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.bits.len() as f64
    }

    /// Marks every pixel within `radius` of `(cx, cy)`.
    pub fn fill_disk(&mut self, cx: f64, cy: f64, radius: f64) {
        let r2 = radius * radius;
        let x0 = (cx - radius).floor().max(0.0) as i64;
        let x1 = ((cx + radius).ceil() as i64).min(self.width as i64 - 1);
        let y0 = (cy - radius).floor().max(0.0) as i64;
        let y1 = ((cy + radius).ceil() as i64).min(self.height as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r2 {
                    self.set(x as u32, y as u32, true);
                }
            }
        }
    }

    pub fn check_dims(&self, width: u32, height: u32) -> Result<(), MaskError> {
        if (self.width, self.height) != (width, height) {
            return Err(MaskError::DimensionMismatch { expected: (width, height), got: (self.width, self.height) });
        }
        Ok(())
    }
}

/// Pixelwise OR of masks for one frame. The frame index of the first part is kept.
pub fn union_masks(parts: &[DynamicMask]) -> Result<DynamicMask, MaskError> {
    let first = parts.first().expect("union of zero masks");
    let mut out = first.clone();
    for m in &parts[1..] {
        m.check_dims(first.width, first.height)?;
        for (o, &b) in out.bits.iter_mut().zip(&m.bits) {
            *o |= b;
        }
    }
    Ok(out)
}

/// Copies a keyframe mask onto the following `horizon` frames.
pub fn hold_propagate(keyframe: &DynamicMask, horizon: u32) -> Vec<DynamicMask> {
    (1..=horizon)
        .map(|k| DynamicMask { frame_index: keyframe.frame_index + k, ..keyframe.clone() })
        .collect()
}

/// Masks for every frame of a video: segment at keyframes every `stride`
/// frames and hold each keyframe mask for up to `horizon` frames. Frames no
/// keyframe reaches get an empty mask.
pub fn propagate_keyframes<F>(num_frames: u32, width: u32, height: u32, stride: u32, horizon: u32, mut segment: F) -> Vec<DynamicMask>
where
    F: FnMut(u32) -> DynamicMask,
{
    assert!(stride >= 1, "keyframe stride must be positive");
    let mut out: Vec<DynamicMask> = (0..num_frames).map(|f| DynamicMask::empty(f, width, height)).collect();
    for key in (0..num_frames).step_by(stride as usize) {
        let m = segment(key);
        for held in hold_propagate(&m, horizon) {
            let f = held.frame_index;
            if f < num_frames && f % stride != 0 {
                out[f as usize] = held;
            }
        }
        out[key as usize] = m;
    }
    out
}

/// Per-pixel 2D displacement field from `frame` to the next one, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub frame: u32,
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn zeros(frame: u32, width: u32, height: u32) -> Self {
        Self { frame, width, height, data: vec![[0.0; 2]; width as usize * height as usize] }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> [f32; 2] {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: [f32; 2]) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    /// Mean displacement magnitude as a fraction of the frame diagonal.
    pub fn mean_magnitude_fraction(&self) -> f64 {
        let diag = (self.width as f64).hypot(self.height as f64);
        let sum: f64 = self.data.iter().map(|v| (v[0] as f64).hypot(v[1] as f64)).sum();
        sum / self.data.len() as f64 / diag
    }
}

/// Per-pixel integer class ids (e.g. COCO categories), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub ids: Vec<u16>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_mask(w: u32, h: u32) -> impl Strategy<Value = DynamicMask> {
        proptest::collection::vec(any::<bool>(), (w * h) as usize).prop_map(move |bits| DynamicMask { frame_index: 0, width: w, height: h, bits })
    }

    #[test]
    fn union_identities() {
        let e = DynamicMask::empty(3, 4, 3);
        assert_eq!(union_masks(&[e.clone(), e.clone()]).unwrap(), e);
        let mut a = e.clone();
        a.set(1, 2, true);
        assert_eq!(union_masks(&[a.clone(), e.clone()]).unwrap(), a);
        assert!(union_masks(&[a, DynamicMask::empty(3, 5, 3)]).is_err());
    }

    proptest! {
        #[test]
        fn union_laws(a in arb_mask(7, 5), b in arb_mask(7, 5), c in arb_mask(7, 5)) {
            let ab = union_masks(&[a.clone(), b.clone()]).unwrap();
            prop_assert_eq!(&ab, &union_masks(&[b.clone(), a.clone()]).unwrap());
            prop_assert_eq!(&union_masks(&[a.clone(), a.clone()]).unwrap(), &a);
            let left = union_masks(&[ab.clone(), c.clone()]).unwrap();
            let right = union_masks(&[a.clone(), union_masks(&[b.clone(), c.clone()]).unwrap()]).unwrap();
            prop_assert_eq!(&left, &right);
            // pixel-loop oracle
            let mut count = 0;
            for i in 0..a.bits.len() {
                if a.bits[i] || b.bits[i] { count += 1; }
                prop_assert!(ab.bits[i] >= a.bits[i] && ab.bits[i] >= b.bits[i]);
            }
            prop_assert_eq!(ab.count(), count);
        }
    }

    #[test]
    fn hold_propagate_copies_forward() {
        let mut m = DynamicMask::empty(10, 4, 4);
        m.set(2, 2, true);
        let held = hold_propagate(&m, 5);
        assert_eq!(held.len(), 5);
        for (k, h) in held.iter().enumerate() {
            assert_eq!(h.frame_index, 11 + k as u32);
            assert_eq!(h.bits, m.bits);
        }
        assert!(hold_propagate(&m, 0).is_empty());
    }

    #[test]
    fn keyframe_cadence_every_six() {
        let mut calls = Vec::new();
        let masks = propagate_keyframes(20, 4, 4, 6, 6, |f| {
            calls.push(f);
            let mut m = DynamicMask::empty(f, 4, 4);
            m.set((f / 6) as u32 % 4, 0, true);
            m
        });
        assert_eq!(calls, vec![0, 6, 12, 18]);
        assert_eq!(masks.len(), 20);
        for (f, m) in masks.iter().enumerate() {
            assert_eq!(m.frame_index, f as u32);
            let key = (f / 6) as u32;
            assert!(m.get(key % 4, 0), "frame {f} should hold keyframe {key}");
            assert_eq!(m.count(), 1);
        }
    }

    #[test]
    fn disk_rasterization() {
        let mut m = DynamicMask::empty(0, 20, 20);
        m.fill_disk(10.0, 10.0, 2.0);
        // lattice points with dx^2 + dy^2 <= 4
        assert_eq!(m.count(), 13);
        assert!(m.contains_point(10.4, 11.6));
        assert!(!m.contains_point(-3.0, 5.0));
    }
}

//! Interactive session state machine.
//!
//! Each click runs: click maps, Target Crop, coarse segmentation, Focus Crop,
//! local refinement and fusion, paste-back, and finally the merge into the
//! current mask. Sessions start non-progressive (the new prediction replaces
//! the mask inside the Target Crop) and switch to Progressive Merge once an
//! external mask is involved or after ten clicks.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{fuse, Backend, RefinerInput, SegmentorInput};
use crate::crop::{
    crop_image, crop_mask, focus_crop, focus_fallback, paste_mask, paste_mask_within, roi_align, target_crop, BoxF,
    CropAreaStats, CropSpec, ModelSeries, FOCUS_CROP_RATIO, TARGET_CROP_RATIO,
};
use crate::error::SessionError;
use crate::raster::{
    component_bbox, component_containing, component_mask, connected_components, stamp_disk, xor_diff, BBox,
    BinaryMask, Click, Connectivity, ImagePlanes, LabelMap, ScalarMap,
};

/// Radius of the rendered click disks, in model-input pixels.
pub const CLICK_RADIUS: f64 = 2.0;
/// Clicks after which a from-scratch session turns progressive.
pub const PROGRESSIVE_AFTER: usize = 10;
/// Undo depth.
pub const HISTORY_DEPTH: usize = 32;

/// Wall time per pipeline stage, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub target_ms: f64,
    pub segment_ms: f64,
    pub focus_ms: f64,
    pub refine_ms: f64,
    pub merge_ms: f64,
    pub total_ms: f64,
}

/// One audit-log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub click: Click,
    pub progressive: bool,
    pub target_crop: CropSpec,
    pub focus_crop: CropSpec,
    pub focus_fallback: bool,
    pub updated_region: Option<[usize; 4]>,
    pub target_area_ratio: f64,
    pub focus_area_ratio: f64,
    pub timings: StageTimings,
    pub undone: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClickResult {
    pub click: Click,
    /// Bounding box of every pixel the merge changed; `None` when nothing changed.
    pub updated_region: Option<BBox>,
    pub progressive: bool,
    pub target_crop: CropSpec,
    pub focus_crop: CropSpec,
    pub timings: StageTimings,
}

#[derive(Clone, Debug)]
struct HistoryEntry {
    mask: BinaryMask,
    clicks: usize,
    had_initial_mask: bool,
    audit_index: Option<usize>,
}

/// Merges a new full-frame prediction into the previous mask.
///
/// Without progressive mode the prediction is taken as is. With it, only the
/// 8-connected component of `xor(prev, new_pred)` containing the click is
/// copied; when the click touches no difference pixel the component nearest
/// to it (Euclidean distance to its pixels, ties to the lower label) is used.
/// Returns the merged mask and the bounding box of changed pixels.
pub fn merge_masks(
    prev: &BinaryMask,
    new_pred: &BinaryMask,
    click: &Click,
    progressive: bool,
) -> Result<(BinaryMask, Option<BBox>), SessionError> {
    let diff = xor_diff(prev, new_pred)?;
    if !progressive {
        return Ok((new_pred.clone(), diff.bbox()));
    }
    let labels = connected_components(&diff, Connectivity::Eight);
    let Some(label) = component_containing(&labels, click.x, click.y).or_else(|| nearest_component(&labels, click))
    else {
        return Ok((prev.clone(), None));
    };
    let region = component_mask(&labels, label);
    let mut merged = prev.clone();
    for (i, (m, &r)) in merged.as_mut_slice().iter_mut().zip(region.as_slice()).enumerate() {
        if r {
            *m = new_pred.as_slice()[i];
        }
    }
    Ok((merged, component_bbox(&labels, label)))
}

fn nearest_component(labels: &LabelMap, click: &Click) -> Option<u32> {
    let w = labels.width();
    let mut best: Option<(usize, u32)> = None;
    for (i, &l) in labels.as_slice().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let dx = (i % w).abs_diff(click.x);
        let dy = (i / w).abs_diff(click.y);
        let d = dx * dx + dy * dy;
        if best.is_none_or(|(bd, bl)| d < bd || (d == bd && l < bl)) {
            best = Some((d, l));
        }
    }
    best.map(|(_, l)| l)
}

/// Positive and negative disk maps for `clicks` in the frame of `crop`.
fn click_maps(clicks: &[Click], crop: &CropSpec) -> (ScalarMap, ScalarMap) {
    let (w, h) = crop.out_dims();
    let mut pos = ScalarMap::new(w, h);
    let mut neg = ScalarMap::new(w, h);
    for c in clicks {
        let (lx, ly) = crop.to_local(c.x as f64 + 0.5, c.y as f64 + 0.5);
        if lx < 0.0 || ly < 0.0 || lx >= w as f64 || ly >= h as f64 {
            continue;
        }
        let target = if c.polarity.is_positive() { &mut pos } else { &mut neg };
        stamp_disk(target, lx as usize, ly as usize, CLICK_RADIUS, 1.0);
    }
    (pos, neg)
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub struct Session {
    image: ImagePlanes,
    mask: BinaryMask,
    clicks: Vec<Click>,
    had_initial_mask: bool,
    series: ModelSeries,
    backend: Arc<dyn Backend>,
    audit: Vec<ClickRecord>,
    history: VecDeque<HistoryEntry>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("dims", &self.dims())
            .field("clicks", &self.clicks.len())
            .field("progressive", &self.progressive_active())
            .field("backend", &self.backend.name())
            .finish()
    }
}

impl Session {
    pub fn new(
        image: ImagePlanes,
        initial_mask: Option<BinaryMask>,
        series: ModelSeries,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, SessionError> {
        let dims = image.dims();
        let had_initial_mask = initial_mask.is_some();
        let mask = match initial_mask {
            Some(m) if m.dims() != dims => {
                return Err(SessionError::DimensionMismatch { expected: dims, got: m.dims() })
            }
            Some(m) => m,
            None => BinaryMask::new(dims.0, dims.1),
        };
        Ok(Self {
            image,
            mask,
            clicks: Vec::new(),
            had_initial_mask,
            series,
            backend,
            audit: Vec::new(),
            history: VecDeque::new(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn clicks(&self) -> &[Click] {
        &self.clicks
    }

    pub fn series(&self) -> ModelSeries {
        self.series
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn had_initial_mask(&self) -> bool {
        self.had_initial_mask
    }

    pub fn progressive_active(&self) -> bool {
        self.had_initial_mask || self.clicks.len() > PROGRESSIVE_AFTER
    }

    pub fn audit(&self) -> &[ClickRecord] {
        &self.audit
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    fn push_history(&mut self, audit_index: Option<usize>) {
        if self.history.len() == HISTORY_DEPTH {
            self.history.pop_front();
        }
        self.history.push_back(HistoryEntry {
            mask: self.mask.clone(),
            clicks: self.clicks.len(),
            had_initial_mask: self.had_initial_mask,
            audit_index,
        });
    }

    /// Runs the full pipeline for one click and merges the result.
    pub fn add_click(&mut self, click: Click) -> Result<ClickResult, SessionError> {
        let (w, h) = self.dims();
        if click.x >= w || click.y >= h {
            return Err(SessionError::OutOfBounds { x: click.x, y: click.y, width: w, height: h });
        }
        let start = Instant::now();
        let click = Click { ordinal: self.clicks.len() as u32 + 1, ..click };
        let mut clicks = self.clicks.clone();
        clicks.push(click);
        let progressive = self.had_initial_mask || clicks.len() > PROGRESSIVE_AFTER;
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let target = target_crop(&self.mask, &click, TARGET_CROP_RATIO, self.series);
        let (pos, neg) = click_maps(&clicks, &target);
        let seg_input = SegmentorInput {
            image: crop_image(&self.image, &target),
            prev_mask: crop_mask(&self.mask, &target),
            pos_clicks: pos,
            neg_clicks: neg,
            crop: target,
        };
        timings.target_ms = ms_since(t);

        let t = Instant::now();
        let coarse = self.backend.segment(&seg_input)?;
        coarse.validate(&target)?;
        let mut pred = self.mask.clone();
        paste_mask(&mut pred, &coarse.logits.threshold(0.0), &target)?;
        timings.segment_ms = ms_since(t);

        let t = Instant::now();
        let (focus, fallback) = match focus_crop(&pred, &self.mask, &click, FOCUS_CROP_RATIO, self.series)? {
            Some(f) => (f, false),
            None => (focus_fallback(&click, (w, h), self.series), true),
        };
        timings.focus_ms = ms_since(t);

        let t = Instant::now();
        let (rw, rh) = focus.out_dims();
        let local = target.local_box(BoxF::from(focus.bbox));
        let stride = coarse.feature_stride.max(1);
        let s = stride as f64;
        let feature_roi = BoxF::new(local.x0 / s, local.y0 / s, local.x1 / s, local.y1 / s);
        let (pos, neg) = click_maps(&clicks, &focus);
        let refine_input = RefinerInput {
            image: crop_image(&self.image, &focus),
            pos_clicks: pos,
            neg_clicks: neg,
            roi_feature: roi_align(&coarse.feature, feature_roi, (rw / stride).max(1), (rh / stride).max(1)),
            roi_logits: roi_align(std::slice::from_ref(&coarse.logits), local, rw, rh).remove(0),
            crop: focus,
        };
        let refined = self.backend.refine(&refine_input)?;
        refined.validate(&focus)?;
        let fused = fuse(&refined.boundary, &refined.detail, &refine_input.roi_logits)?;
        paste_mask_within(&mut pred, &fused.threshold(0.0), &focus, target.bbox)?;
        timings.refine_ms = ms_since(t);

        let t = Instant::now();
        let (merged, updated_region) = merge_masks(&self.mask, &pred, &click, progressive)?;
        timings.merge_ms = ms_since(t);
        timings.total_ms = ms_since(start);

        self.push_history(Some(self.audit.len()));
        self.mask = merged;
        self.clicks = clicks;
        self.audit.push(ClickRecord {
            click,
            progressive,
            target_crop: target,
            focus_crop: focus,
            focus_fallback: fallback,
            updated_region: updated_region.map(|b| b.to_array()),
            target_area_ratio: target.area_ratio((w, h)),
            focus_area_ratio: focus.area_ratio((w, h)),
            timings,
            undone: false,
        });
        log::debug!("click {} at ({}, {}) updated {:?}", click.ordinal, click.x, click.y, updated_region);
        Ok(ClickResult { click, updated_region, progressive, target_crop: target, focus_crop: focus, timings })
    }

    /// Reverts the last click or mask replacement.
    pub fn undo(&mut self) -> Result<(), SessionError> {
        let entry = self.history.pop_back().ok_or(SessionError::NothingToUndo)?;
        self.mask = entry.mask;
        self.clicks.truncate(entry.clicks);
        self.had_initial_mask = entry.had_initial_mask;
        if let Some(i) = entry.audit_index {
            self.audit[i].undone = true;
        }
        Ok(())
    }

    /// Replaces the mask with one edited elsewhere; the session turns progressive.
    pub fn set_mask(&mut self, mask: BinaryMask) -> Result<(), SessionError> {
        if mask.dims() != self.dims() {
            return Err(SessionError::DimensionMismatch { expected: self.dims(), got: mask.dims() });
        }
        self.push_history(None);
        self.mask = mask;
        self.had_initial_mask = true;
        Ok(())
    }

    /// Mean crop-area ratios over the clicks that were not undone.
    pub fn crop_area_stats(&self) -> Option<CropAreaStats> {
        crate::crop::crop_area_stats(
            self.audit.iter().filter(|r| !r.undone).map(|r| (r.target_area_ratio, r.focus_area_ratio)),
        )
    }

    /// Writes the audit log as JSON lines.
    pub fn write_audit_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for record in &self.audit {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ConstantBackend, NoiseConfig, NoisyOracleBackend, OracleBackend};
    use crate::raster::iou;

    fn blank_image(w: usize, h: usize) -> ImagePlanes {
        let c = ScalarMap::filled(w, h, 0.5);
        ImagePlanes { channels: [c.clone(), c.clone(), c] }
    }

    fn ellipse(w: usize, h: usize, cx: f64, cy: f64, rx: f64, ry: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
            dx * dx + dy * dy <= 1.0
        })
    }

    fn oracle_session(gt: &BinaryMask, init: Option<BinaryMask>) -> Session {
        let (w, h) = gt.dims();
        Session::new(blank_image(w, h), init, ModelSeries::S2, Arc::new(OracleBackend::new(gt.clone()))).unwrap()
    }

    #[test]
    fn fresh_session_defaults() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let mut s = oracle_session(&gt, None);
        assert!(s.mask().is_empty());
        assert!(!s.progressive_active());
        assert!(matches!(s.undo(), Err(SessionError::NothingToUndo)));
        let s = oracle_session(&gt, Some(BinaryMask::new(64, 48)));
        assert!(s.progressive_active());
    }

    #[test]
    fn initial_mask_dims_checked() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let err = Session::new(
            blank_image(64, 48),
            Some(BinaryMask::new(10, 10)),
            ModelSeries::S2,
            Arc::new(OracleBackend::new(gt)),
        )
        .unwrap_err();
        assert!(matches!(err, SessionError::DimensionMismatch { .. }));
    }

    #[test]
    fn first_oracle_click_recovers_object() {
        let gt = ellipse(200, 150, 90.0, 70.0, 40.0, 30.0);
        let mut s = oracle_session(&gt, None);
        s.add_click(Click::positive(90, 70)).unwrap();
        assert!(iou(s.mask(), &gt).unwrap() >= 0.99);
    }

    #[test]
    fn out_of_bounds_click() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let mut s = oracle_session(&gt, None);
        assert!(matches!(s.add_click(Click::positive(64, 0)), Err(SessionError::OutOfBounds { .. })));
    }

    #[test]
    fn progressive_turns_on_at_eleventh_click() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let mut s = oracle_session(&gt, None);
        for i in 1..=12 {
            let r = s.add_click(Click::positive(32, 24)).unwrap();
            assert_eq!(r.click.ordinal, i);
            assert_eq!(r.progressive, i > 10, "click {i}");
        }
    }

    #[test]
    fn undo_round_trip() {
        let gt = ellipse(120, 90, 60.0, 45.0, 20.0, 15.0);
        let mut s = oracle_session(&gt, None);
        s.add_click(Click::positive(60, 45)).unwrap();
        let after_one = s.mask().clone();
        s.add_click(Click::negative(61, 46)).unwrap();
        s.undo().unwrap();
        assert_eq!(s.mask(), &after_one);
        assert_eq!(s.clicks().len(), 1);
        s.undo().unwrap();
        assert!(s.mask().is_empty());
        assert!(s.audit().iter().all(|r| r.undone));
        assert!(s.undo().is_err());
        assert!(s.crop_area_stats().is_none());
    }

    #[test]
    fn set_mask_turns_progressive_and_undo_restores() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let mut s = oracle_session(&gt, None);
        s.set_mask(BinaryMask::new(64, 48)).unwrap();
        assert!(s.progressive_active());
        s.undo().unwrap();
        assert!(!s.progressive_active());
        assert!(s.set_mask(BinaryMask::new(3, 3)).is_err());
    }

    #[test]
    fn history_is_bounded() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let mut s = oracle_session(&gt, None);
        for _ in 0..HISTORY_DEPTH + 5 {
            s.set_mask(gt.clone()).unwrap();
        }
        assert_eq!(s.history_len(), HISTORY_DEPTH);
    }

    #[test]
    fn merge_identical_is_noop() {
        let m = ellipse(32, 32, 16.0, 16.0, 6.0, 6.0);
        for progressive in [false, true] {
            let (out, region) = merge_masks(&m, &m, &Click::positive(16, 16), progressive).unwrap();
            assert_eq!(out, m);
            assert_eq!(region, None);
        }
    }

    #[test]
    fn merge_picks_clicked_component() {
        let prev = BinaryMask::new(32, 32);
        let a = BinaryMask::from_box(32, 32, BBox::new(2, 2, 6, 6));
        let new_pred = a.or(&BinaryMask::from_box(32, 32, BBox::new(20, 20, 25, 25))).unwrap();
        let (out, region) = merge_masks(&prev, &new_pred, &Click::positive(3, 3), true).unwrap();
        assert_eq!(out, a);
        assert_eq!(region, Some(BBox::new(2, 2, 6, 6)));
        let (out, _) = merge_masks(&prev, &new_pred, &Click::positive(3, 3), false).unwrap();
        assert_eq!(out, new_pred);
    }

    #[test]
    fn merge_falls_back_to_nearest_component() {
        let prev = BinaryMask::new(32, 32);
        let near = BinaryMask::from_box(32, 32, BBox::new(10, 0, 12, 2));
        let new_pred = near.or(&BinaryMask::from_box(32, 32, BBox::new(0, 20, 4, 24))).unwrap();
        // Click at (5, 5): squared distance 34 to (10, 1)... vs 226 to (4, 20).
        let (out, region) = merge_masks(&prev, &new_pred, &Click::negative(5, 5), true).unwrap();
        assert_eq!(out, near);
        assert_eq!(region, Some(BBox::new(10, 0, 12, 2)));
    }

    #[test]
    fn negative_click_removes_blob_only() {
        let gt = ellipse(160, 120, 60.0, 60.0, 25.0, 25.0);
        let blob = ellipse(160, 120, 130.0, 30.0, 6.0, 6.0);
        let mut init = gt.or(&blob).unwrap();
        init.set(60, 35, false);
        let mut s = oracle_session(&gt, Some(init.clone()));
        let r = s.add_click(Click::negative(130, 30)).unwrap();
        assert_eq!(s.mask(), &init.and_not(&blob).unwrap());
        let region = r.updated_region.unwrap();
        assert!(BBox::new(124, 24, 136, 36).contains_box(&region));
    }

    #[test]
    fn constant_backend_clears_crop_only_when_not_progressive() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let mut s = Session::new(blank_image(64, 48), None, ModelSeries::S1, Arc::new(ConstantBackend::empty()))
            .unwrap();
        let r = s.add_click(Click::positive(32, 24)).unwrap();
        assert!(s.mask().is_empty());
        assert_eq!(r.updated_region, None);
        assert!(r.timings.total_ms >= r.timings.segment_ms);
        let _ = gt;
    }

    #[test]
    fn deterministic_under_noise() {
        let gt = ellipse(160, 120, 80.0, 60.0, 30.0, 20.0);
        let run = || {
            let backend = Arc::new(NoisyOracleBackend::new(gt.clone(), NoiseConfig { seed: 5, ..Default::default() }));
            let mut s = Session::new(blank_image(160, 120), None, ModelSeries::S2, backend).unwrap();
            for c in [Click::positive(80, 60), Click::negative(10, 10), Click::positive(55, 60)] {
                s.add_click(c).unwrap();
            }
            s.mask().clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn audit_log_is_json_lines() {
        let gt = ellipse(64, 48, 32.0, 24.0, 10.0, 8.0);
        let mut s = oracle_session(&gt, None);
        s.add_click(Click::positive(32, 24)).unwrap();
        s.add_click(Click::positive(30, 24)).unwrap();
        let mut buf = Vec::new();
        s.write_audit_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["target_crop"]["box"], serde_json::json!([0, 0, 64, 48]));
        assert_eq!(v["click"]["ordinal"], 1);
        let stats = s.crop_area_stats().unwrap();
        assert_eq!(stats.clicks, 2);
        assert!(stats.target_mean <= 1.0);
    }
}

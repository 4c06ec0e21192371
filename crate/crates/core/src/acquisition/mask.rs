//! Cartesian sampling-mask generators.
//!
//! Masks live in centered k-space coordinates: the DC sample sits at
//! `(height / 2, width / 2)`. Columns (the second index) are the
//! phase-encode direction for the 1-D patterns.

use std::f64::consts::PI;
use std::fmt;

use ndarray::{s, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskPattern {
    Radial,
    Vds,
    Equispaced,
    VistaLike,
    Full,
}

impl MaskPattern {
    pub const NAMES: &'static [&'static str] = &["radial", "vds", "equispaced", "vista-like", "full"];

    pub fn name(self) -> &'static str {
        match self {
            MaskPattern::Radial => "radial",
            MaskPattern::Vds => "vds",
            MaskPattern::Equispaced => "equispaced",
            MaskPattern::VistaLike => "vista-like",
            MaskPattern::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "radial" => Some(MaskPattern::Radial),
            "vds" => Some(MaskPattern::Vds),
            "equispaced" => Some(MaskPattern::Equispaced),
            "vista-like" | "vista" => Some(MaskPattern::VistaLike),
            "full" => Some(MaskPattern::Full),
            _ => None,
        }
    }
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary H×W×T sampling mask with the metadata of its generator.
///
/// `nominal_accel` is grid size over the number of samples the construction
/// rule asks for before duplicates between its parts are merged (radial
/// lines crossing at the center, ACS columns coinciding with the
/// equispaced lattice). The measured rate is [`SamplingMask::measured_accel`].
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    bits: Array3<bool>,
    pub pattern: MaskPattern,
    pub seed: u64,
    pub nominal_accel: f64,
}

impl SamplingMask {
    /// Wraps raw bits. Every frame must contain at least one sample.
    pub fn from_bits(bits: Array3<bool>, pattern: MaskPattern, seed: u64, nominal_accel: f64) -> Result<Self> {
        let (h, w, t) = bits.dim();
        if h == 0 || w == 0 || t == 0 {
            return Err(Error::dims("positive mask dimensions", format!("{h}x{w}x{t}")));
        }
        for frame in 0..t {
            if !bits.slice(s![.., .., frame]).iter().any(|&b| b) {
                return Err(Error::param("mask", format!("frame {frame} has no sampled location")));
            }
        }
        let bits = bits.as_standard_layout().into_owned();
        Ok(Self {
            bits,
            pattern,
            seed,
            nominal_accel,
        })
    }

    pub fn full(height: usize, width: usize, frames: usize) -> Self {
        Self::from_bits(Array3::from_elem((height, width, frames), true), MaskPattern::Full, 0, 1.0)
            .expect("full mask is valid")
    }

    pub fn bits(&self) -> &Array3<bool> {
        &self.bits
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.bits.dim()
    }

    pub fn height(&self) -> usize {
        self.bits.dim().0
    }

    pub fn width(&self) -> usize {
        self.bits.dim().1
    }

    pub fn frames(&self) -> usize {
        self.bits.dim().2
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, t: usize) -> bool {
        self.bits[[h, w, t]]
    }

    pub fn sampled_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn frame_count(&self, frame: usize) -> usize {
        self.bits.slice(s![.., .., frame]).iter().filter(|&&b| b).count()
    }

    pub fn frame_fraction(&self, frame: usize) -> f64 {
        self.frame_count(frame) as f64 / (self.height() * self.width()) as f64
    }

    /// Grid size over sampled count.
    pub fn measured_accel(&self) -> f64 {
        self.bits.len() as f64 / self.sampled_count() as f64
    }

    /// Columns sampled in `frame` (for the column patterns every row of a
    /// sampled column is set).
    pub fn frame_columns(&self, frame: usize) -> Vec<usize> {
        (0..self.width())
            .filter(|&c| (0..self.height()).any(|r| self.bits[[r, c, frame]]))
            .collect()
    }

    /// Values in {0, 1}, for persistence.
    pub fn to_real(&self) -> Array3<f64> {
        self.bits.mapv(|b| if b { 1.0 } else { 0.0 })
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_dims(height: usize, width: usize, frames: usize) -> Result<()> {
    if height == 0 || width == 0 || frames == 0 {
        return Err(Error::dims("positive mask dimensions", format!("{height}x{width}x{frames}")));
    }
    Ok(())
}

/// Pseudo-radial mask: `lines` spokes through DC rasterized onto the grid,
/// evenly spaced in angle, with a per-frame offset drawn uniformly from
/// `[0, π/lines)`.
pub fn make_radial_mask(height: usize, width: usize, frames: usize, lines: usize, seed: u64) -> Result<SamplingMask> {
    check_dims(height, width, frames)?;
    check_lines(height, width, lines)?;
    let mut rng = rng_for(seed);
    let spacing = PI / lines as f64;
    let offsets: Vec<f64> = (0..frames).map(|_| rng.random::<f64>() * spacing).collect();
    let mut mask = radial_mask_with_offsets(height, width, lines, &offsets)?;
    mask.seed = seed;
    Ok(mask)
}

/// Radial mask with explicit per-frame angular offsets (radians).
pub fn radial_mask_with_offsets(height: usize, width: usize, lines: usize, offsets: &[f64]) -> Result<SamplingMask> {
    check_dims(height, width, offsets.len())?;
    check_lines(height, width, lines)?;
    let mut bits = Array3::from_elem((height, width, offsets.len()), false);
    let spacing = PI / lines as f64;
    for (frame, &offset) in offsets.iter().enumerate() {
        for l in 0..lines {
            rasterize_spoke(&mut bits, frame, offset + l as f64 * spacing);
        }
    }
    let nominal = (height * width) as f64 / (lines * height.max(width)) as f64;
    SamplingMask::from_bits(bits, MaskPattern::Radial, 0, nominal)
}

fn check_lines(height: usize, width: usize, lines: usize) -> Result<()> {
    if lines == 0 {
        return Err(Error::param("lines", "must be at least 1"));
    }
    if lines > height.max(width) {
        return Err(Error::param(
            "lines",
            format!("{lines} exceeds grid capacity {}", height.max(width)),
        ));
    }
    Ok(())
}

/// Marks one line through the center, stepping one pixel at a time along
/// its major axis.
fn rasterize_spoke(bits: &mut Array3<bool>, frame: usize, angle: f64) {
    let (h, w, _) = bits.dim();
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let (dy, dx) = angle.sin_cos();
    if dx.abs() >= dy.abs() {
        let slope = dy / dx;
        for col in 0..w {
            let row = (cy + (col as f64 - cx) * slope).round();
            if row >= 0.0 && (row as usize) < h {
                bits[[row as usize, col, frame]] = true;
            }
        }
    } else {
        let slope = dx / dy;
        for row in 0..h {
            let col = (cx + (row as f64 - cy) * slope).round();
            if col >= 0.0 && (col as usize) < w {
                bits[[row, col as usize, frame]] = true;
            }
        }
    }
}

pub(crate) const VDS_EXPONENT: i32 = 4;
pub(crate) const VDS_FLOOR: f64 = 0.02;

/// Polynomial sampling density over phase-encode columns, peaking at DC.
pub fn vds_density(width: usize) -> Vec<f64> {
    let center = width / 2;
    let max_dist = center.max(width - 1 - center) as f64;
    (0..width)
        .map(|c| {
            if max_dist == 0.0 {
                return 1.0;
            }
            let d = (c as f64 - center as f64).abs() / max_dist;
            (1.0 - d).powi(VDS_EXPONENT) + VDS_FLOOR
        })
        .collect()
}

fn columns_per_frame(width: usize, accel: f64) -> Result<usize> {
    if !(accel >= 1.0) {
        return Err(Error::param("accel", format!("{accel} is below 1")));
    }
    if accel > width as f64 {
        return Err(Error::param("accel", format!("{accel} exceeds width {width}")));
    }
    Ok(((width as f64 / accel).round() as usize).clamp(1, width))
}

fn fill_columns(bits: &mut Array3<bool>, frame: usize, columns: impl IntoIterator<Item = usize>) {
    for c in columns {
        bits.slice_mut(s![.., c, frame]).fill(true);
    }
}

/// Variable-density random column mask. Each frame samples
/// `round(width / accel)` distinct columns: DC first, the rest drawn one at
/// a time in proportion to [`vds_density`] among the columns left.
pub fn make_vds_mask(height: usize, width: usize, frames: usize, accel: f64, seed: u64) -> Result<SamplingMask> {
    check_dims(height, width, frames)?;
    let count = columns_per_frame(width, accel)?;
    let density = vds_density(width);
    let mut rng = rng_for(seed);
    let mut bits = Array3::from_elem((height, width, frames), false);
    for frame in 0..frames {
        let mut weights = density.clone();
        let mut chosen = vec![width / 2];
        weights[width / 2] = 0.0;
        while chosen.len() < count {
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (c, &wgt) in weights.iter().enumerate() {
                if wgt <= 0.0 {
                    continue;
                }
                pick = Some(c);
                if u < wgt {
                    break;
                }
                u -= wgt;
            }
            let c = pick.expect("a column with positive weight remains");
            weights[c] = 0.0;
            chosen.push(c);
        }
        fill_columns(&mut bits, frame, chosen);
    }
    SamplingMask::from_bits(bits, MaskPattern::Vds, seed, width as f64 / count as f64)
}

/// Pseudo-equispaced column mask: every `accel`-th column with the lattice
/// offset cycling through `0..accel` over frames, plus `acs` fully sampled
/// central columns in every frame.
pub fn make_equispaced_mask(height: usize, width: usize, frames: usize, accel: usize, acs: usize) -> Result<SamplingMask> {
    check_dims(height, width, frames)?;
    if accel == 0 {
        return Err(Error::param("accel", "must be at least 1"));
    }
    if acs > width {
        return Err(Error::param("acs", format!("{acs} exceeds width {width}")));
    }
    let (acs_lo, acs_hi) = acs_band(width, acs);
    let mut bits = Array3::from_elem((height, width, frames), false);
    for frame in 0..frames {
        let offset = frame % accel;
        fill_columns(&mut bits, frame, (0..width).filter(|c| c % accel == offset));
        fill_columns(&mut bits, frame, acs_lo..acs_hi);
    }
    // Lattice columns cover residues ≥ width % accel one fewer time, so the
    // rule's per-frame count is width/accel rounded up in the worst frame.
    let requested = width.div_ceil(accel) + acs;
    let nominal = width as f64 / requested.min(width) as f64;
    SamplingMask::from_bits(bits, MaskPattern::Equispaced, 0, nominal)
}

/// Central `[lo, hi)` column band of width `acs`.
pub fn acs_band(width: usize, acs: usize) -> (usize, usize) {
    let lo = (width / 2).saturating_sub(acs / 2);
    let hi = (lo + acs).min(width);
    (hi - acs.min(hi), hi)
}

/// Temporal spacing (in columns per frame) used by the vista-like pattern's
/// distance metric.
const VISTA_FRAME_SCALE: f64 = 1.0;
/// Exponent flattening the vds density before it weights the spacing score.
const VISTA_DENSITY_POWER: f64 = 0.25;

/// Vista-like spatiotemporal column pattern. Each frame takes
/// `round(width / accel)` columns, chosen greedily to maximize
/// `density(c)^p · (distance to the nearest earlier sample in the
/// (column, frame) plane)`. The seed drives a tiny jitter that breaks ties.
pub fn make_vista_like_mask(height: usize, width: usize, frames: usize, accel: f64, seed: u64) -> Result<SamplingMask> {
    check_dims(height, width, frames)?;
    let count = columns_per_frame(width, accel)?;
    let weight: Vec<f64> = vds_density(width)
        .into_iter()
        .map(|d| d.powf(VISTA_DENSITY_POWER))
        .collect();
    let mut rng = rng_for(seed);
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(count * frames);
    let mut bits = Array3::from_elem((height, width, frames), false);
    // Only recent frames influence spacing; beyond this horizon the temporal
    // term dominates every candidate equally.
    let horizon = (accel.ceil() as usize).max(1) * 2;
    for frame in 0..frames {
        let jitter: Vec<f64> = (0..width).map(|_| rng.random::<f64>() * 1e-9).collect();
        let mut taken = vec![false; width];
        let tf = frame as f64;
        let first_recent = samples.partition_point(|&(_, f)| f + (horizon as f64) < tf);
        let mut min_dist: Vec<f64> = (0..width)
            .map(|c| {
                samples[first_recent..]
                    .iter()
                    .map(|&(sc, sf)| spacing(c as f64, tf, sc, sf))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        for _ in 0..count {
            let best = (0..width)
                .filter(|&c| !taken[c])
                .max_by(|&a, &b| {
                    let sa = score(weight[a], min_dist[a]) + jitter[a];
                    let sb = score(weight[b], min_dist[b]) + jitter[b];
                    sa.total_cmp(&sb).then(b.cmp(&a))
                })
                .expect("count never exceeds width");
            taken[best] = true;
            samples.push((best as f64, tf));
            for (c, md) in min_dist.iter_mut().enumerate() {
                *md = md.min(spacing(c as f64, tf, best as f64, tf));
            }
        }
        fill_columns(&mut bits, frame, (0..width).filter(|&c| taken[c]));
    }
    SamplingMask::from_bits(bits, MaskPattern::VistaLike, seed, width as f64 / count as f64)
}

fn spacing(c: f64, f: f64, sc: f64, sf: f64) -> f64 {
    let dc = c - sc;
    let df = (f - sf) * VISTA_FRAME_SCALE;
    (dc * dc + df * df).sqrt()
}

fn score(weight: f64, dist: f64) -> f64 {
    if dist.is_infinite() {
        // Empty neighbourhood: the density alone decides.
        1e12 * weight
    } else {
        weight * dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_single_line_without_offset_is_the_center_row() {
        let m = radial_mask_with_offsets(9, 12, 1, &[0.0]).unwrap();
        for r in 0..9 {
            for c in 0..12 {
                assert_eq!(m.get(r, c, 0), r == 4, "({r},{c})");
            }
        }
    }

    #[test]
    fn radial_vertical_line_is_the_center_column() {
        let m = radial_mask_with_offsets(8, 8, 1, &[PI / 2.0]).unwrap();
        assert_eq!(m.frame_columns(0), vec![4]);
        assert_eq!(m.frame_count(0), 8);
    }

    #[test]
    fn radial_lines_pass_through_dc() {
        let m = make_radial_mask(32, 48, 5, 7, 3).unwrap();
        for t in 0..5 {
            assert!(m.get(16, 24, t));
        }
    }

    #[test]
    fn radial_rejects_too_many_lines() {
        assert!(make_radial_mask(16, 16, 2, 17, 0).is_err());
        assert!(make_radial_mask(16, 16, 2, 0, 0).is_err());
        assert!(make_radial_mask(16, 16, 2, 16, 0).is_ok());
    }

    #[test]
    fn radial_16_lines_sampling_fraction() {
        let m = make_radial_mask(128, 128, 16, 16, 42).unwrap();
        for t in 0..16 {
            let f = m.frame_fraction(t);
            assert!((0.08..=0.20).contains(&f), "frame {t}: {f}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(make_radial_mask(64, 64, 4, 10, 9).unwrap(), make_radial_mask(64, 64, 4, 10, 9).unwrap());
        assert_eq!(make_vds_mask(64, 64, 4, 4.0, 9).unwrap(), make_vds_mask(64, 64, 4, 4.0, 9).unwrap());
        assert_eq!(
            make_vista_like_mask(64, 64, 4, 4.0, 9).unwrap(),
            make_vista_like_mask(64, 64, 4, 4.0, 9).unwrap()
        );
        assert_ne!(make_vds_mask(64, 64, 4, 4.0, 9).unwrap(), make_vds_mask(64, 64, 4, 4.0, 10).unwrap());
    }

    #[test]
    fn vds_accel_one_is_full() {
        let m = make_vds_mask(8, 16, 3, 1.0, 5).unwrap();
        assert_eq!(m.sampled_count(), 8 * 16 * 3);
    }

    #[test]
    fn vds_exact_column_count_with_dc() {
        let m = make_vds_mask(128, 128, 16, 8.0, 1).unwrap();
        for t in 0..16 {
            let cols = m.frame_columns(t);
            assert_eq!(cols.len(), 16);
            assert!(cols.contains(&64));
            assert_eq!(m.frame_count(t), 16 * 128);
        }
    }

    #[test]
    fn vds_rejects_bad_accel() {
        assert!(make_vds_mask(8, 16, 2, 17.0, 0).is_err());
        assert!(make_vds_mask(8, 16, 2, 0.5, 0).is_err());
    }

    #[test]
    fn equispaced_counts_match_construction_rule() {
        let (w, accel, acs) = (128, 4, 24);
        let m = make_equispaced_mask(16, w, 8, accel, acs).unwrap();
        let (lo, hi) = acs_band(w, acs);
        assert_eq!(hi - lo, 24);
        for t in 0..8 {
            let overlap = (lo..hi).filter(|c| c % accel == t % accel).count();
            assert_eq!(overlap, 6);
            assert_eq!(m.frame_columns(t).len(), 32 + (24 - overlap));
            for c in lo..hi {
                assert!(m.get(0, c, t));
            }
        }
    }

    #[test]
    fn equispaced_degenerate_cases_are_full() {
        assert_eq!(make_equispaced_mask(4, 10, 3, 1, 2).unwrap().sampled_count(), 120);
        assert_eq!(make_equispaced_mask(4, 10, 3, 5, 10).unwrap().sampled_count(), 120);
        assert!(make_equispaced_mask(4, 10, 3, 2, 11).is_err());
    }

    #[test]
    fn equispaced_offsets_cycle() {
        let m = make_equispaced_mask(2, 12, 4, 3, 0).unwrap();
        assert_eq!(m.frame_columns(0), vec![0, 3, 6, 9]);
        assert_eq!(m.frame_columns(1), vec![1, 4, 7, 10]);
        assert_eq!(m.frame_columns(2), vec![2, 5, 8, 11]);
        assert_eq!(m.frame_columns(3), vec![0, 3, 6, 9]);
    }

    #[test]
    fn vista_like_accel_one_is_full() {
        assert_eq!(make_vista_like_mask(4, 16, 3, 1.0, 0).unwrap().sampled_count(), 4 * 16 * 3);
    }

    #[test]
    fn vista_like_covers_most_columns_across_frames() {
        let m = make_vista_like_mask(128, 128, 16, 8.0, 0).unwrap();
        let mut union = [false; 128];
        for t in 0..16 {
            let cols = m.frame_columns(t);
            assert_eq!(cols.len(), 16);
            cols.into_iter().for_each(|c| union[c] = true);
        }
        let covered = union.iter().filter(|&&u| u).count();
        assert!(covered as f64 >= 0.6 * 128.0, "covered {covered}");
    }

    #[test]
    fn density_peaks_at_dc() {
        let d = vds_density(128);
        assert_eq!(d[64], 1.0 + VDS_FLOOR);
        assert!((d[0] - VDS_FLOOR).abs() < 1e-15);
        for k in 1..64 {
            assert!(d[64 + k] <= d[64 + k - 1]);
            assert!(d[64 - k] <= d[64 - k + 1]);
        }
    }

    #[test]
    fn empty_frame_is_rejected() {
        let mut bits = Array3::from_elem((2, 2, 2), true);
        bits.slice_mut(s![.., .., 1]).fill(false);
        assert!(SamplingMask::from_bits(bits, MaskPattern::Full, 0, 1.0).is_err());
    }
}

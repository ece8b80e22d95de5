//! Min-max normalization, the 256-bin intensity histogram and tri-modal
//! tissue peak extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume_io::Volume;

pub const HISTOGRAM_BINS: usize = 256;
pub const BIN_WIDTH: f64 = 1.0 / HISTOGRAM_BINS as f64;

/// Voxels below this normalized intensity are background and excluded from
/// histogram statistics. Equals the upper edge of bin 0.
pub const BACKGROUND_THRESHOLD: f32 = 1.0 / HISTOGRAM_BINS as f32;

/// Moving-average window (bins) and number of passes applied before peak search.
pub const SMOOTHING_WIDTH: usize = 3;
pub const SMOOTHING_PASSES: usize = 2;
/// Minimum distance in bins between two selected peaks.
pub const MIN_PEAK_SEPARATION: usize = 3;

/// Target windows per tissue class: CSF `[0.05, 0.12)`, GM `[0.12, 0.18)`,
/// WM `[0.18, 1.0]`.
pub const CSF_TARGET: Interval = Interval::half_open(0.05, 0.12);
pub const GM_TARGET: Interval = Interval::half_open(0.12, 0.18);
pub const WM_TARGET: Interval = Interval::closed(0.18, 1.0);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RadiometryError {
    #[error("intensity range is degenerate (min = max = {0}); a constant volume has no structure")]
    DegenerateRange(f32),
    #[error("found {found} separated histogram modes, need 3")]
    InsufficientModes { found: usize },
    #[error("normalized value {value} at voxel {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },
    #[error("{values} values do not fill dims {dims:?}")]
    ShapeMismatch { dims: [usize; 3], values: usize },
}

pub type Result<T> = std::result::Result<T, RadiometryError>;

/// Intensities mapped to `[0, 1]`.
///
/// When produced by [`normalize`], both 0.0 and 1.0 are attained.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedVolume {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    pub values: Vec<f32>,
}

impl NormalizedVolume {
    /// Wraps values that are already in `[0, 1]`.
    pub fn new(dims: [usize; 3], spacing: [f32; 3], values: Vec<f32>) -> Result<Self> {
        if values.len() != dims.iter().product::<usize>() {
            return Err(RadiometryError::ShapeMismatch {
                dims,
                values: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(RadiometryError::OutOfRange { index, value });
        }
        Ok(NormalizedVolume { dims, spacing, values })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.index(x, y, z)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn extent_mm(&self) -> [f32; 3] {
        [
            self.dims[0] as f32 * self.spacing[0],
            self.dims[1] as f32 * self.spacing[1],
            self.dims[2] as f32 * self.spacing[2],
        ]
    }
}

/// Global min-max normalization: `(raw - i_min) / (i_max - i_min)`.
pub fn normalize(volume: &Volume) -> Result<NormalizedVolume> {
    let (lo, hi) = (volume.i_min, volume.i_max);
    if !(hi > lo) {
        return Err(RadiometryError::DegenerateRange(lo));
    }
    let lo64 = lo as f64;
    let range = hi as f64 - lo64;
    let values = volume
        .voxels
        .par_iter()
        .map(|&v| (((v as f64 - lo64) / range) as f32).clamp(0.0, 1.0))
        .collect();
    Ok(NormalizedVolume {
        dims: volume.dims(),
        spacing: volume.spacing(),
        values,
    })
}

#[inline]
pub fn bin_index(v: f32) -> usize {
    ((v as f64 * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

#[inline]
pub fn is_foreground(v: f32) -> bool {
    v >= BACKGROUND_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<u64>,
    pub total_voxels: u64,
    pub used_voxels: u64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        BIN_WIDTH
    }

    pub fn excluded_voxels(&self) -> u64 {
        self.total_voxels - self.used_voxels
    }

    /// Builds a histogram directly from counts; `total_voxels` defaults to the
    /// count sum.
    pub fn from_counts(bins: Vec<u64>) -> Self {
        assert_eq!(bins.len(), HISTOGRAM_BINS);
        let used: u64 = bins.iter().sum();
        Histogram {
            bins,
            total_voxels: used,
            used_voxels: used,
        }
    }
}

/// 256-bin histogram of the foreground voxels.
///
/// Partial histograms are accumulated per chunk and summed, so the result does
/// not depend on how the work is split.
pub fn build_histogram(nv: &NormalizedVolume) -> Histogram {
    const CHUNK: usize = 1 << 16;
    let bins = nv
        .values
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut local = vec![0u64; HISTOGRAM_BINS];
            for &v in chunk {
                if is_foreground(v) {
                    local[bin_index(v)] += 1;
                }
            }
            local
        })
        .reduce(
            || vec![0u64; HISTOGRAM_BINS],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let used_voxels = bins.iter().sum();
    Histogram {
        bins,
        total_voxels: nv.values.len() as u64,
        used_voxels,
    }
}

/// Centered moving average; windows are truncated at the ends.
fn moving_average(src: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..src.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(src.len() - 1);
            src[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

pub fn smooth_histogram(h: &Histogram) -> Vec<f64> {
    let mut s: Vec<f64> = h.bins.iter().map(|&c| c as f64).collect();
    for _ in 0..SMOOTHING_PASSES {
        s = moving_average(&s, SMOOTHING_WIDTH);
    }
    s
}

/// Local maxima of a curve as `(index, height)`. A plateau counts once, at its
/// lowest index, and only if both sides fall away from it.
pub fn local_maxima(curve: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let n = curve.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && curve[j + 1] == curve[i] {
            j += 1;
        }
        let rises = i == 0 || curve[i - 1] < curve[i];
        let falls = j == n - 1 || curve[j + 1] < curve[i];
        if rises && falls && curve[i] > 0.0 {
            out.push((i, curve[i]));
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissuePeaks {
    pub csf: f64,
    pub gm: f64,
    pub wm: f64,
}

impl TissuePeaks {
    pub fn as_array(&self) -> [f64; 3] {
        [self.csf, self.gm, self.wm]
    }
}

#[inline]
pub fn bin_center(index: usize) -> f64 {
    (index as f64 + 0.5) * BIN_WIDTH
}

/// The three tallest, mutually separated modes of the smoothed histogram,
/// reported as bin centers in ascending order.
pub fn extract_tissue_peaks(h: &Histogram) -> Result<TissuePeaks> {
    let smoothed = smooth_histogram(h);
    let mut chosen = select_separated(local_maxima(&smoothed), 3);
    if chosen.len() < 3 {
        return Err(RadiometryError::InsufficientModes { found: chosen.len() });
    }
    chosen.sort_unstable();
    Ok(TissuePeaks {
        csf: bin_center(chosen[0]),
        gm: bin_center(chosen[1]),
        wm: bin_center(chosen[2]),
    })
}

/// Greedily keeps up to `count` maxima, tallest first (lower bin on ties),
/// skipping any closer than [`MIN_PEAK_SEPARATION`] bins to one already kept.
pub fn select_separated(mut maxima: Vec<(usize, f64)>, count: usize) -> Vec<usize> {
    maxima.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    for (idx, _) in maxima {
        if chosen.len() == count {
            break;
        }
        if chosen.iter().all(|&c| c.abs_diff(idx) >= MIN_PEAK_SEPARATION) {
            chosen.push(idx);
        }
    }
    chosen
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub closed_above: bool,
}

impl Interval {
    pub const fn half_open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            closed_above: false,
        }
    }

    pub const fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            closed_above: true,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && (v < self.hi || (self.closed_above && v == self.hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InWindow {
    pub csf: bool,
    pub gm: bool,
    pub wm: bool,
}

impl InWindow {
    pub fn all(&self) -> bool {
        self.csf && self.gm && self.wm
    }
}

/// Checks each peak against its target window.
pub fn validate_peaks(p: &TissuePeaks) -> InWindow {
    InWindow {
        csf: CSF_TARGET.contains(p.csf),
        gm: GM_TARGET.contains(p.gm),
        wm: WM_TARGET.contains(p.wm),
    }
}

/// One analyzed volume, shaped like a row of the cohort table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub total_voxels: u64,
    pub used_voxels: u64,
    pub i_max_raw: f64,
    pub peaks: TissuePeaks,
    pub in_window: InWindow,
}

impl AnalysisReport {
    pub fn window_targets() -> [Interval; 3] {
        [CSF_TARGET, GM_TARGET, WM_TARGET]
    }
}

/// Everything up to the peaks, returning the histogram alongside so the
/// caller can still report voxel counts when peak extraction fails.
pub fn analyze(volume: &Volume) -> std::result::Result<AnalysisReport, (Option<Histogram>, RadiometryError)> {
    let nv = normalize(volume).map_err(|e| (None, e))?;
    let hist = build_histogram(&nv);
    let peaks = match extract_tissue_peaks(&hist) {
        Ok(p) => p,
        Err(e) => return Err((Some(hist), e)),
    };
    Ok(AnalysisReport {
        total_voxels: hist.total_voxels,
        used_voxels: hist.used_voxels,
        i_max_raw: volume.i_max as f64,
        in_window: validate_peaks(&peaks),
        peaks,
    })
}

/// Mean and sample standard deviation of one tissue class across reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPeaks {
    pub csf: PeakStats,
    pub gm: PeakStats,
    pub wm: PeakStats,
}

fn stats(values: &[f64]) -> PeakStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    PeakStats { mean, sd }
}

/// Aggregates peaks across volumes. Panics on an empty slice.
pub fn aggregate_peaks(peaks: &[TissuePeaks]) -> AggregatedPeaks {
    assert!(!peaks.is_empty(), "cannot aggregate zero peak sets");
    let col = |f: fn(&TissuePeaks) -> f64| peaks.iter().map(f).collect::<Vec<_>>();
    AggregatedPeaks {
        csf: stats(&col(|p| p.csf)),
        gm: stats(&col(|p| p.gm)),
        wm: stats(&col(|p| p.wm)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nv(values: Vec<f32>) -> NormalizedVolume {
        let n = values.len();
        NormalizedVolume::new([n, 1, 1], [1.0; 3], values).unwrap()
    }

    #[test]
    fn normalize_three_points() {
        let v = Volume::from_voxels([3, 1, 1], [1.0; 3], vec![0.0, 577.0, 1154.0]).unwrap();
        assert_eq!(normalize(&v).unwrap().values, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_volume_is_degenerate() {
        let v = Volume::from_voxels([2, 2, 1], [1.0; 3], vec![3.0; 4]).unwrap();
        assert_eq!(normalize(&v), Err(RadiometryError::DegenerateRange(3.0)));
    }

    #[test]
    fn normalized_volume_rejects_out_of_range() {
        assert!(matches!(
            NormalizedVolume::new([2, 1, 1], [1.0; 3], vec![0.2, 1.5]),
            Err(RadiometryError::OutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn constant_half_lands_in_bin_128() {
        let h = build_histogram(&nv(vec![0.5; 40]));
        assert_eq!(h.bins[128], 40);
        assert_eq!(h.used_voxels, 40);
        assert_eq!(h.bins.iter().filter(|&&c| c > 0).count(), 1);
    }

    #[test]
    fn one_goes_to_last_bin() {
        let h = build_histogram(&nv(vec![1.0]));
        assert_eq!(h.bins[255], 1);
    }

    #[test]
    fn background_excluded_from_used() {
        let mut values = vec![0.0; 50];
        values.extend(std::iter::repeat_n(0.5, 50));
        let h = build_histogram(&nv(values));
        assert_eq!(h.total_voxels, 100);
        assert_eq!(h.used_voxels, 50);
        assert_eq!(h.bins[0], 0);
    }

    #[test]
    fn background_threshold_edge() {
        let h = build_histogram(&nv(vec![BACKGROUND_THRESHOLD, BACKGROUND_THRESHOLD * 0.999]));
        assert_eq!(h.used_voxels, 1);
        assert_eq!(h.bins[1], 1);
    }

    #[test]
    fn plateau_counted_once_at_lowest_index() {
        let curve = [0.0, 1.0, 3.0, 3.0, 3.0, 1.0, 0.0];
        assert_eq!(local_maxima(&curve), vec![(2, 3.0)]);
        // A shelf that keeps rising is not a maximum.
        let shelf = [0.0, 2.0, 2.0, 4.0, 1.0];
        assert_eq!(local_maxima(&shelf), vec![(3, 4.0)]);
    }

    #[test]
    fn single_mode_is_insufficient() {
        let mut bins = vec![0u64; 256];
        bins[100] = 1000;
        bins[99] = 400;
        bins[101] = 400;
        let err = extract_tissue_peaks(&Histogram::from_counts(bins)).unwrap_err();
        assert!(matches!(err, RadiometryError::InsufficientModes { found: 1 }));
    }

    #[test]
    fn separation_guard_rejects_close_maxima() {
        let maxima = vec![(60, 9.0), (62, 8.5), (30, 5.0), (120, 7.0), (121, 7.0)];
        assert_eq!(select_separated(maxima, 3), vec![60, 120, 30]);
    }

    #[test]
    fn equal_heights_prefer_lower_bin() {
        let maxima = vec![(90, 4.0), (40, 4.0), (10, 4.0), (200, 4.0)];
        assert_eq!(select_separated(maxima, 3), vec![10, 40, 90]);
    }

    #[test]
    fn three_spikes_recovered() {
        let mut bins = vec![0u64; 256];
        bins[30] = 500;
        bins[60] = 900;
        bins[120] = 700;
        let p = extract_tissue_peaks(&Histogram::from_counts(bins)).unwrap();
        assert_eq!(p.as_array(), [bin_center(30), bin_center(60), bin_center(120)]);
    }

    #[test]
    fn validate_peaks_flags() {
        let ok = validate_peaks(&TissuePeaks {
            csf: 0.110,
            gm: 0.167,
            wm: 0.183,
        });
        assert_eq!(
            ok,
            InWindow {
                csf: true,
                gm: true,
                wm: true
            }
        );
        let low = validate_peaks(&TissuePeaks {
            csf: 0.03,
            gm: 0.167,
            wm: 0.183,
        });
        assert_eq!(
            low,
            InWindow {
                csf: false,
                gm: true,
                wm: true
            }
        );
    }

    #[test]
    fn window_edges() {
        assert!(CSF_TARGET.contains(0.05));
        assert!(!CSF_TARGET.contains(0.12));
        assert!(GM_TARGET.contains(0.12));
        assert!(!GM_TARGET.contains(0.18));
        assert!(WM_TARGET.contains(0.18));
        assert!(WM_TARGET.contains(1.0));
    }

    #[test]
    fn cohort_table_aggregates() {
        let rows = [
            TissuePeaks {
                csf: 0.110,
                gm: 0.167,
                wm: 0.183,
            },
            TissuePeaks {
                csf: 0.054,
                gm: 0.128,
                wm: 0.310,
            },
            TissuePeaks {
                csf: 0.063,
                gm: 0.128,
                wm: 0.181,
            },
        ];
        let agg = aggregate_peaks(&rows);
        assert!((agg.csf.mean - 0.076).abs() <= 0.001);
        assert!((agg.gm.mean - 0.141).abs() <= 0.001);
        assert!((agg.wm.mean - 0.224).abs() <= 0.001);
        // Published spreads use the sample (n - 1) standard deviation.
        assert!((agg.csf.sd - 0.030).abs() <= 0.0005);
        assert!((agg.gm.sd - 0.023).abs() <= 0.0005);
        assert!((agg.wm.sd - 0.074).abs() <= 0.0005);
    }

    #[test]
    fn report_json_shape() {
        let report = AnalysisReport {
            total_voxels: 10,
            used_voxels: 8,
            i_max_raw: 1154.0,
            peaks: TissuePeaks {
                csf: 0.1,
                gm: 0.15,
                wm: 0.2,
            },
            in_window: InWindow {
                csf: true,
                gm: true,
                wm: true,
            },
        };
        let v: serde_json::Value = serde_json::to_value(&report).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["i_max_raw", "in_window", "peaks", "total_voxels", "used_voxels"]);
        assert_eq!(v["peaks"]["gm"], 0.15);
        assert_eq!(v["in_window"]["wm"], true);
    }
}

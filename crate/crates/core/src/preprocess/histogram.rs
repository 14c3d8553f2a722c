use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeKind};

pub const DEFAULT_BINS: usize = 256;

/// A fixed-width histogram with its cumulative distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    cdf: Vec<f64>,
}

impl Histogram {
    /// Histogram of `values` over `[lo, hi]` with `bins` equal bins.
    pub fn from_values(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let width = (hi - lo) / bins as f64;
        let mut bin_edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        bin_edges[bins] = hi;
        let mut counts = vec![0u64; bins];
        for v in values {
            counts[Self::bin_of(v, lo, width, bins)] += 1;
        }
        Ok(Self::from_counts(bin_edges, counts))
    }

    fn bin_of(v: f64, lo: f64, width: f64, bins: usize) -> usize {
        (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1)
    }

    fn from_counts(bin_edges: Vec<f64>, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let mut acc = 0u64;
        let cdf = counts
            .iter()
            .map(|&c| {
                acc += c;
                if total == 0 { 0.0 } else { acc as f64 / total as f64 }
            })
            .collect();
        Histogram { bin_edges, counts, cdf }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        (self.bin_edges[self.bins()] - self.bin_edges[0]) / self.bins() as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        0.5 * (self.bin_edges[k] + self.bin_edges[k + 1])
    }

    pub fn bin_index(&self, v: f64) -> usize {
        Self::bin_of(v, self.bin_edges[0], self.bin_width(), self.bins())
    }

    /// Centre of the first bin whose cumulative mass reaches `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).min(self.bins() - 1);
        self.center(k)
    }

    /// Serialises edges, counts as one `edge_lo,edge_hi,count` line per bin.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,count\n");
        for k in 0..self.bins() {
            s.push_str(&format!("{},{},{}\n", self.bin_edges[k], self.bin_edges[k + 1], self.counts[k]));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("histogram line {}: {line:?}", i + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            let lo: f64 = f[0].parse().map_err(|_| bad())?;
            let hi: f64 = f[1].parse().map_err(|_| bad())?;
            if edges.is_empty() {
                edges.push(lo);
            }
            edges.push(hi);
            counts.push(f[2].parse().map_err(|_| bad())?);
        }
        if counts.is_empty() {
            return Err(Error::Parse("empty histogram".into()));
        }
        Ok(Self::from_counts(edges, counts))
    }
}

fn foreground(v: &Volume, threshold: f32) -> impl Iterator<Item = f64> + '_ {
    v.data().iter().filter(move |&&x| x > threshold).map(|&x| x as f64)
}

/// Pooled foreground histogram over several volumes of one modality.
pub fn build_reference_histogram(volumes: &[&Volume], bins: usize, threshold: f32) -> Result<Histogram> {
    if volumes.is_empty() {
        return Err(Error::EmptyInput("no volumes for the reference histogram".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in volumes {
        for x in foreground(v, threshold) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if lo > hi {
        return Err(Error::EmptyForeground);
    }
    Histogram::from_values(volumes.iter().flat_map(|v| foreground(v, threshold)), lo, hi, bins)
}

/// Result of histogram matching.
#[derive(Clone, Debug, PartialEq)]
pub struct Matched {
    pub volume: Volume,
    /// Foreground was constant, so the volume is returned unchanged.
    pub constant_input: bool,
}

/// Maps foreground intensities through `ref.cdf⁻¹ ∘ source.cdf`; voxels at
/// or below `threshold` map to the reference minimum.
///
/// The source CDF is rank based (`(#less + #equal / 2) / n`), so the map is
/// monotone and ties stay tied.
pub fn histogram_match(v: &Volume, reference: &Histogram, threshold: f32) -> Result<Matched> {
    if v.kind() != VolumeKind::Intensity {
        return Err(Error::InvalidParameter("histogram matching needs an intensity volume".into()));
    }
    let mut fg: Vec<f32> = v.data().iter().copied().filter(|&x| x > threshold).collect();
    fg.sort_by(f32::total_cmp);
    if fg.first() == fg.last() {
        return Ok(Matched { volume: v.clone(), constant_input: true });
    }
    let n = fg.len() as f64;
    let bg = reference.bin_edges()[0] as f32;
    let out = v
        .data()
        .iter()
        .map(|&x| {
            if x <= threshold {
                return bg;
            }
            let less = fg.partition_point(|&y| y < x);
            let upto = fg.partition_point(|&y| y <= x);
            let u = (less as f64 + 0.5 * (upto - less) as f64) / n;
            reference.quantile(u) as f32
        })
        .collect();
    Ok(Matched { volume: v.with_data(out, VolumeKind::Intensity)?, constant_input: false })
}

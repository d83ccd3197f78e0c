//! Accumulated cross-attention maps and the two abnormality metrics:
//! attention amplitude (spatial mean) and the second central moment about
//! the intensity centroid.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::denoiser::AttentionRecord;
use crate::error::{Error, Result};
use crate::numerics::{bicubic_upscale, Grid2D};

/// Which maps to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    /// Post-softmax maps before amplification.
    #[default]
    Raw,
    /// Maps after amplification (equal to raw where none was applied).
    Effective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatedMap {
    pub token: usize,
    pub window: Range<usize>,
    pub grid: Grid2D,
}

/// Sums `token`'s maps over every layer and every step in `window`, each
/// map bicubically upscaled to `image_h x image_w` first.
///
/// Upscaling is linear, so maps are summed per layer at native resolution
/// and upscaled once per layer.
pub fn accumulate(
    records: &[AttentionRecord],
    token: usize,
    window: Range<usize>,
    image_h: usize,
    image_w: usize,
    source: MapSource,
) -> Result<AccumulatedMap> {
    let selected: Vec<&AttentionRecord> = records.iter().filter(|r| window.contains(&r.step)).collect();
    if window.is_empty() || selected.len() != window.len() {
        return Err(Error::InvalidWindow {
            start: window.start,
            end: window.end,
            available: records.len(),
        });
    }
    let layer_count = selected[0].layers.len();
    let mut sums: Vec<Option<(usize, usize, Vec<f64>)>> = vec![None; layer_count];
    for rec in &selected {
        if token >= rec.token_count {
            return Err(Error::InvalidToken {
                token,
                count: rec.token_count,
            });
        }
        if rec.layers.len() != layer_count {
            return Err(Error::InvalidInput("records have differing layer counts".into()));
        }
        for (slot, layer) in sums.iter_mut().zip(&rec.layers) {
            let map = match source {
                MapSource::Raw => layer.token_map(token),
                MapSource::Effective => layer.effective_map(token),
            };
            match slot {
                None => *slot = Some((layer.height, layer.width, map.to_vec())),
                Some((h, w, acc)) => {
                    if (*h, *w) != (layer.height, layer.width) {
                        return Err(Error::InvalidInput("layer resolution changed between steps".into()));
                    }
                    acc.iter_mut().zip(map).for_each(|(a, m)| *a += m);
                }
            }
        }
    }
    let mut total = Grid2D::zeros(image_h, image_w)?;
    for (h, w, acc) in sums.into_iter().flatten() {
        let up = bicubic_upscale(&Grid2D::new(h, w, acc)?, image_h, image_w)?;
        total.add_assign(&up)?;
    }
    Ok(AccumulatedMap {
        token,
        window,
        grid: total,
    })
}

/// [`accumulate`], except an empty window yields the zero map. Used for
/// stage splits where one stage may contain no steps.
pub fn accumulate_stage(
    records: &[AttentionRecord],
    token: usize,
    window: Range<usize>,
    image_h: usize,
    image_w: usize,
    source: MapSource,
) -> Result<AccumulatedMap> {
    if window.is_empty() {
        return Ok(AccumulatedMap {
            token,
            window,
            grid: Grid2D::zeros(image_h, image_w)?,
        });
    }
    accumulate(records, token, window, image_h, image_w, source)
}

/// Expected attention amplitude: the mean over all cells, summed in sorted
/// order so that any permutation of the cells gives the same bits.
pub fn amplitude(grid: &Grid2D) -> f64 {
    let mut v = grid.values().to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// `sum [(x - xbar)^2 + (y - ybar)^2] * M~(x, y)` with `M~ = M / sum M` and
/// integer cell coordinates (`x` = column, `y` = row).
pub fn central_moment(grid: &Grid2D) -> Result<f64> {
    let total = grid.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateMap(format!("map mass is {total}")));
    }
    let w = grid.width();
    let (mut xbar, mut ybar) = (0.0, 0.0);
    for (i, v) in grid.values().iter().enumerate() {
        let p = v / total;
        xbar += (i % w) as f64 * p;
        ybar += (i / w) as f64 * p;
    }
    let mut mu = 0.0;
    for (i, v) in grid.values().iter().enumerate() {
        let dx = (i % w) as f64 - xbar;
        let dy = (i / w) as f64 - ybar;
        mu += (dx * dx + dy * dy) * (v / total);
    }
    Ok(mu)
}

/// `M / sum M`.
pub fn normalize(grid: &Grid2D) -> Result<Grid2D> {
    let total = grid.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMap(format!("map mass is {total}")));
    }
    Grid2D::new(grid.height(), grid.width(), grid.values().iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricHistogram {
    pub metric: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl MetricHistogram {
    /// Counts `values` into the bins `[e_i, e_{i+1})`, the last bin closed.
    /// Values outside the edges land in the first or last bin.
    pub fn with_edges(metric: impl Into<String>, edges: Vec<f64>, values: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|e| !(e[0] < e[1])) {
            return Err(Error::InvalidInput("histogram edges must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("histogram values must be finite".into()));
        }
        let bins = edges.len() - 1;
        let mut counts = vec![0u64; bins];
        for v in values {
            let i = edges.partition_point(|e| e <= v);
            counts[i.clamp(1, bins) - 1] += 1;
        }
        Ok(Self {
            metric: metric.into(),
            edges,
            counts,
            n: values.len() as u64,
        })
    }

    pub fn merge(&mut self, other: &MetricHistogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::InvalidInput("cannot merge histograms with different edges".into()));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.n += other.n;
        Ok(())
    }
}

/// Equal-width histogram spanning the observed range of `values`.
pub fn metric_histogram(metric: impl Into<String>, values: &[f64], bins: usize) -> Result<MetricHistogram> {
    if bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("histogram values must be finite".into()));
    }
    let (lo, hi) = match values.iter().copied().fold(None, |acc: Option<(f64, f64)>, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    }) {
        None => (0.0, 1.0),
        Some((lo, hi)) if lo == hi => (lo - 0.5, hi + 0.5),
        Some(range) => range,
    };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    MetricHistogram::with_edges(metric, edges, values)
}

pub const CENTRAL_MOMENT: &str = "central_moment";
pub const AMPLITUDE: &str = "amplitude";

/// One row of the abnormality CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub sample_id: String,
    pub token_label: String,
    pub stage: String,
    pub metric_name: &'static str,
    pub value: f64,
}

/// A token to analyse and its role.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSpec {
    pub index: usize,
    pub label: String,
    /// Attribute tokens get the central moment; others get the amplitude.
    pub attribute: bool,
}

pub struct ReportOptions {
    pub image_h: usize,
    pub image_w: usize,
    pub source: MapSource,
    pub bins: usize,
}

/// Metric rows for one sample over one stage window.
pub fn sample_metrics(
    sample_id: &str,
    records: &[AttentionRecord],
    tokens: &[TokenSpec],
    window: Range<usize>,
    stage: &str,
    opts: &ReportOptions,
) -> Result<Vec<MetricRow>> {
    tokens
        .iter()
        .map(|tok| {
            let acc = accumulate(records, tok.index, window.clone(), opts.image_h, opts.image_w, opts.source)?;
            let (metric_name, value) = if tok.attribute {
                (CENTRAL_MOMENT, central_moment(&acc.grid)?)
            } else {
                (AMPLITUDE, amplitude(&acc.grid))
            };
            Ok(MetricRow {
                sample_id: sample_id.to_string(),
                token_label: tok.label.clone(),
                stage: stage.to_string(),
                metric_name,
                value,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AbnormalityReport {
    pub rows: Vec<MetricRow>,
    pub histograms: Vec<MetricHistogram>,
}

pub const CSV_HEADER: &str = "sample_id,token_label,stage,metric_name,value";

impl AbnormalityReport {
    /// Builds per-metric histograms over `rows`.
    pub fn from_rows(rows: Vec<MetricRow>, bins: usize) -> Result<Self> {
        let mut histograms = Vec::new();
        for metric in [CENTRAL_MOMENT, AMPLITUDE] {
            let values: Vec<f64> = rows.iter().filter(|r| r.metric_name == metric).map(|r| r.value).collect();
            if !values.is_empty() {
                histograms.push(metric_histogram(metric, &values, bins)?);
            }
        }
        Ok(Self { rows, histograms })
    }

    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.metric_name == metric).map(|r| r.value).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.sample_id, r.token_label, r.stage, r.metric_name, r.value
            ));
        }
        out
    }
}

/// Per-sample metrics over one stage window, with histograms.
pub fn abnormality_report(
    samples: &[(String, Vec<AttentionRecord>)],
    tokens: &[TokenSpec],
    window: Range<usize>,
    stage: &str,
    opts: &ReportOptions,
) -> Result<AbnormalityReport> {
    let mut rows = Vec::new();
    for (id, records) in samples {
        rows.extend(sample_metrics(id, records, tokens, window.clone(), stage, opts)?);
    }
    AbnormalityReport::from_rows(rows, opts.bins)
}

/// Synthetic map generators with known spatial spread.
pub mod synthetic {
    use crate::denoiser::{AttentionRecord, LayerMaps};
    use crate::numerics::{Grid2D, SeededRng};

    /// Unnormalised isotropic Gaussian centred at `(cy, cx)`.
    pub fn gaussian_blob(h: usize, w: usize, cy: f64, cx: f64, sigma: f64) -> Grid2D {
        let values = (0..h * w)
            .map(|i| {
                let dy = (i / w) as f64 - cy;
                let dx = (i % w) as f64 - cx;
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Grid2D::new(h, w, values).expect("valid blob")
    }

    /// One tight blob (sigma in [0.8, 1.6]) at a random interior position.
    pub fn concentrated_map(rng: &mut SeededRng, h: usize, w: usize) -> Grid2D {
        let cy = h as f64 * (0.25 + 0.5 * rng.uniform());
        let cx = w as f64 * (0.25 + 0.5 * rng.uniform());
        let sigma = 0.8 + 0.8 * rng.uniform();
        gaussian_blob(h, w, cy, cx, sigma)
    }

    /// Several small blobs spread over the grid on a positive floor.
    pub fn scattered_map(rng: &mut SeededRng, h: usize, w: usize) -> Grid2D {
        let mut values = vec![0.05; h * w];
        for _ in 0..6 {
            let blob = gaussian_blob(h, w, h as f64 * rng.uniform(), w as f64 * rng.uniform(), 0.8 + 0.8 * rng.uniform());
            values.iter_mut().zip(blob.values()).for_each(|(v, b)| *v += b);
        }
        Grid2D::new(h, w, values).expect("valid map")
    }

    /// A single-layer record whose token maps are `maps` (all the same size).
    pub fn record_from_maps(step: usize, maps: &[Grid2D]) -> AttentionRecord {
        let (h, w) = (maps[0].height(), maps[0].width());
        let raw = maps.iter().flat_map(|m| m.values().iter().copied()).collect();
        AttentionRecord {
            step,
            token_count: maps.len(),
            layers: vec![LayerMaps {
                layer_id: 0,
                height: h,
                width: w,
                raw,
                amplified: None,
            }],
        }
    }
}

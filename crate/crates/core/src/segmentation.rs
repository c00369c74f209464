//! Target-space segmentation and per-segment knowledge tables.
//!
//! Each output dimension is split independently into `S` half-open intervals
//! `(-inf, b1), [b1, b2), ..., [b_{S-1}, +inf)`. Segment indices are 0-based.
//! Clients accumulate their predictions per (dimension, segment), keyed by the
//! segment of the *label*; the server turns the per-client averages into
//! leave-one-out teacher tables.

use std::io::{Read, Write};

use crate::error::{check_dim, config, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitStrategy {
    #[default]
    Uniform,
    Density,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentScheme<T> {
    boundaries: Vec<Vec<T>>,
    segment_count: usize,
    strategy: SplitStrategy,
}

/// Number of segments for a target resolution `eps`: `ceil((max - min) / eps)`,
/// taking the widest dimension.
pub fn segments_for_resolution<T: Scalar>(y_min: &[T], y_max: &[T], eps: T) -> Result<usize> {
    check_dim("bounds", y_min.len(), y_max.len())?;
    if !(eps > T::zero()) {
        return Err(config("resolution must be positive"));
    }
    let mut s = 1usize;
    for (lo, hi) in y_min.iter().zip(y_max) {
        if !(lo < hi) {
            return Err(config(format!("inverted bounds: {lo} >= {hi}")));
        }
        let n = ((*hi - *lo) / eps).ceil().to_usize().unwrap_or(usize::MAX);
        s = s.max(n);
    }
    Ok(s)
}

impl<T: Scalar> SegmentScheme<T> {
    /// Equal-width split: boundaries at `y_min + s * eps`, `eps = (y_max - y_min) / S`.
    pub fn uniform(y_min: &[T], y_max: &[T], segments: usize) -> Result<Self> {
        check_dim("bounds", y_min.len(), y_max.len())?;
        if y_min.is_empty() {
            return Err(config("at least one target dimension is required"));
        }
        if segments < 1 {
            return Err(config("segment count must be at least 1"));
        }
        let mut boundaries = Vec::with_capacity(y_min.len());
        for (&lo, &hi) in y_min.iter().zip(y_max) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(config(format!("need finite y_min < y_max, got {lo} and {hi}")));
            }
            let eps = (hi - lo) / T::of_usize(segments);
            let b: Vec<T> = (1..segments).map(|s| lo + T::of_usize(s) * eps).collect();
            if b.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(config("segment width underflows the scalar precision"));
            }
            boundaries.push(b);
        }
        Ok(Self {
            boundaries,
            segment_count: segments,
            strategy: SplitStrategy::Uniform,
        })
    }

    /// Equal-frequency split. Boundary `s` sits halfway between the two sorted
    /// samples that straddle position `floor(s * n / S)`, so segment
    /// populations on `targets` differ by at most one.
    pub fn density<'a, I>(targets: I, segments: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        if segments < 1 {
            return Err(config("segment count must be at least 1"));
        }
        let rows: Vec<&[T]> = targets.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(config("density split needs samples"));
        };
        let dims = first.len();
        if dims == 0 {
            return Err(config("at least one target dimension is required"));
        }
        let n = rows.len();
        if n < segments {
            return Err(config(format!(
                "density split needs at least {segments} samples, got {n}"
            )));
        }
        let mut boundaries = Vec::with_capacity(dims);
        for d in 0..dims {
            let mut col = Vec::with_capacity(n);
            for r in &rows {
                check_dim("target row", dims, r.len())?;
                let v = r[d];
                if !v.is_finite() {
                    return Err(config("density split needs finite targets"));
                }
                col.push(v);
            }
            col.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let mut b = Vec::with_capacity(segments - 1);
            for s in 1..segments {
                let k = s * n / segments;
                let (lo, hi) = (col[k - 1], col[k]);
                if !(lo < hi) {
                    return Err(config(format!(
                        "tied targets at quantile {s}/{segments} in dimension {d}; \
                         an equal-count split is impossible"
                    )));
                }
                let mut mid = (lo + hi) / T::of(2.0);
                if mid <= lo {
                    mid = hi;
                }
                b.push(mid);
            }
            boundaries.push(b);
        }
        Ok(Self {
            boundaries,
            segment_count: segments,
            strategy: SplitStrategy::Density,
        })
    }

    pub fn dimensions(&self) -> usize {
        self.boundaries.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn strategy(&self) -> SplitStrategy {
        self.strategy
    }

    pub fn boundaries(&self, dim: usize) -> &[T] {
        &self.boundaries[dim]
    }

    /// Segment of `value` in dimension `dim`. Total: NaN lands in segment 0.
    #[inline]
    pub fn segment_of(&self, dim: usize, value: T) -> usize {
        self.boundaries[dim].partition_point(|b| *b <= value)
    }

    pub fn assign(&self, y: &[T]) -> Result<Vec<usize>> {
        check_dim("target", self.dimensions(), y.len())?;
        Ok(y.iter()
            .enumerate()
            .map(|(d, v)| self.segment_of(d, *v))
            .collect())
    }
}

/// Dense `[dimension][segment]` table of optional values.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTable<T> {
    dims: usize,
    segments: usize,
    values: Vec<Option<T>>,
}

impl<T: Scalar> SegmentTable<T> {
    pub fn empty(dims: usize, segments: usize) -> Self {
        Self {
            dims,
            segments,
            values: vec![None; dims * segments],
        }
    }

    pub fn dimensions(&self) -> usize {
        self.dims
    }

    pub fn segment_count(&self) -> usize {
        self.segments
    }

    #[inline]
    pub fn value(&self, dim: usize, segment: usize) -> Option<T> {
        self.values[dim * self.segments + segment]
    }

    pub fn set(&mut self, dim: usize, segment: usize, v: Option<T>) {
        self.values[dim * self.segments + segment] = v;
    }

    /// Number of values a client transmits for this table (absent cells included).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Finalized per-segment mean predictions of one client.
pub type SegmentAverages<T> = SegmentTable<T>;

/// Running sums and counts of predictions per (dimension, segment).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats<T> {
    dims: usize,
    segments: usize,
    sums: Vec<T>,
    counts: Vec<u64>,
}

impl<T: Scalar> SegmentStats<T> {
    pub fn new(dims: usize, segments: usize) -> Self {
        Self {
            dims,
            segments,
            sums: vec![T::zero(); dims * segments],
            counts: vec![0; dims * segments],
        }
    }

    pub fn for_scheme(scheme: &SegmentScheme<T>) -> Self {
        Self::new(scheme.dimensions(), scheme.segment_count())
    }

    pub fn reset(&mut self) {
        self.sums.fill(T::zero());
        self.counts.fill(0);
    }

    pub fn sum(&self, dim: usize, segment: usize) -> T {
        self.sums[dim * self.segments + segment]
    }

    pub fn count(&self, dim: usize, segment: usize) -> u64 {
        self.counts[dim * self.segments + segment]
    }

    pub fn total_count(&self, dim: usize) -> u64 {
        self.counts[dim * self.segments..(dim + 1) * self.segments]
            .iter()
            .sum()
    }

    /// Adds `y_pred[d]` into the cell of `y_true[d]`'s segment, per dimension.
    pub fn accumulate(&mut self, y_true: &[T], y_pred: &[T], scheme: &SegmentScheme<T>) -> Result<()> {
        check_dim("scheme dimensions", self.dims, scheme.dimensions())?;
        check_dim("scheme segments", self.segments, scheme.segment_count())?;
        check_dim("label", self.dims, y_true.len())?;
        check_dim("prediction", self.dims, y_pred.len())?;
        for d in 0..self.dims {
            let i = d * self.segments + scheme.segment_of(d, y_true[d]);
            self.sums[i] += y_pred[d];
            self.counts[i] += 1;
        }
        Ok(())
    }

    /// Per-cell mean; cells with no samples are absent.
    pub fn finalize(&self) -> SegmentAverages<T> {
        let values = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &n)| (n > 0).then(|| *s / T::of(n as f64)))
            .collect();
        SegmentTable {
            dims: self.dims,
            segments: self.segments,
            values,
        }
    }

    pub fn records(&self, client: usize) -> Vec<SegmentRecord> {
        let avg = self.finalize();
        let mut out = Vec::with_capacity(self.sums.len());
        for d in 0..self.dims {
            for s in 0..self.segments {
                out.push(SegmentRecord {
                    client,
                    dimension: d,
                    segment: s,
                    value: avg.value(d, s).map(Scalar::as_f64),
                    count: self.count(d, s),
                });
            }
        }
        out
    }
}

/// Leave-one-out averages of the other clients' segment means, for one client.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTable<T> {
    table: SegmentTable<T>,
    peers: Vec<u32>,
    pub round: usize,
}

impl<T: Scalar> TeacherTable<T> {
    pub fn empty(dims: usize, segments: usize, round: usize) -> Self {
        Self {
            table: SegmentTable::empty(dims, segments),
            peers: vec![0; dims * segments],
            round,
        }
    }

    pub fn dimensions(&self) -> usize {
        self.table.dimensions()
    }

    pub fn segment_count(&self) -> usize {
        self.table.segment_count()
    }

    #[inline]
    pub fn value(&self, dim: usize, segment: usize) -> Option<T> {
        self.table.value(dim, segment)
    }

    pub fn set(&mut self, dim: usize, segment: usize, v: Option<T>) {
        self.table.set(dim, segment, v);
        self.peers[dim * self.table.segment_count() + segment] = u32::from(v.is_some());
    }

    /// How many other clients contributed to a cell.
    pub fn peers(&self, dim: usize, segment: usize) -> u32 {
        self.peers[dim * self.table.segment_count() + segment]
    }

    pub fn table(&self) -> &SegmentTable<T> {
        &self.table
    }

    pub fn records(&self, client: usize) -> Vec<SegmentRecord> {
        let mut out = Vec::new();
        for d in 0..self.dimensions() {
            for s in 0..self.segment_count() {
                out.push(SegmentRecord {
                    client,
                    dimension: d,
                    segment: s,
                    value: self.value(d, s).map(Scalar::as_f64),
                    count: u64::from(self.peers(d, s)),
                });
            }
        }
        out
    }
}

/// Server step: for each client, the mean of the *other* clients' reported
/// averages, cell by cell. Cells with no other reporter stay absent.
///
/// With `m` reporters summing to `total`, a reporting client receives
/// `(total - own) / (m - 1)` and a silent one `total / m`.
pub fn server_distill<T: Scalar>(
    reports: &[SegmentAverages<T>],
    round: usize,
) -> Result<Vec<TeacherTable<T>>> {
    let k = reports.len();
    if k < 2 {
        return Err(config(format!(
            "distillation needs at least two clients, got {k}"
        )));
    }
    let dims = reports[0].dimensions();
    let segments = reports[0].segment_count();
    for r in reports {
        check_dim("report dimensions", dims, r.dimensions())?;
        check_dim("report segments", segments, r.segment_count())?;
    }
    let mut teachers: Vec<TeacherTable<T>> =
        (0..k).map(|_| TeacherTable::empty(dims, segments, round)).collect();
    for d in 0..dims {
        for s in 0..segments {
            let mut total = T::zero();
            let mut m = 0u32;
            for r in reports {
                if let Some(v) = r.value(d, s) {
                    total += v;
                    m += 1;
                }
            }
            for (report, teacher) in reports.iter().zip(teachers.iter_mut()) {
                let (value, peers) = match report.value(d, s) {
                    Some(own) if m >= 2 => {
                        (Some((total - own) / T::of(f64::from(m - 1))), m - 1)
                    }
                    None if m >= 1 => (Some(total / T::of(f64::from(m))), m),
                    _ => (None, 0),
                };
                teacher.table.set(d, s, value);
                teacher.peers[d * segments + s] = peers;
            }
        }
    }
    Ok(teachers)
}

/// One row of the segment-table CSV layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub client: usize,
    pub dimension: usize,
    pub segment: usize,
    pub value: Option<f64>,
    pub count: u64,
}

pub const SEGMENT_CSV_HEADER: [&str; 5] = ["client", "dimension", "segment", "value", "count"];

/// Writes records as `client,dimension,segment,value,count`; absent values are empty cells.
pub fn write_segment_csv<W: Write>(out: W, records: &[SegmentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SEGMENT_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.client.to_string(),
            r.dimension.to_string(),
            r.segment.to_string(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_segment_csv<R: Read>(input: R) -> Result<Vec<SegmentRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(SEGMENT_CSV_HEADER) {
        return Err(Error::Parse {
            row: 0,
            message: format!("expected header {SEGMENT_CSV_HEADER:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |j: usize| rec.get(j).unwrap_or("").trim();
        let int = |j: usize| {
            field(j).parse::<u64>().map_err(|e| Error::Parse {
                row,
                message: format!("column {}: {e}", SEGMENT_CSV_HEADER[j]),
            })
        };
        let value = match field(3) {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|e| Error::Parse {
                row,
                message: format!("column value: {e}"),
            })?),
        };
        out.push(SegmentRecord {
            client: int(0)? as usize,
            dimension: int(1)? as usize,
            segment: int(2)? as usize,
            value,
            count: int(4)?,
        });
    }
    Ok(out)
}

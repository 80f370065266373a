//! Multi-field spatio-temporal frames and the plumbing around them:
//! min-max normalization, dataset splitting, teacher-forcing windows and the
//! binary container format.

mod container;

pub use container::{
    decode_container, decode_norm_stats, encode_container, encode_norm_stats, read_container,
    read_norm_stats, write_container, write_norm_stats, ContainerError, CONTAINER_MAGIC,
    CONTAINER_VERSION, STATS_MAGIC,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of physical fields in a frame.
pub const NUM_FIELDS: usize = 7;

/// Default recording resolution.
pub const DEFAULT_GRID: usize = 60;

/// Canonical field order. Materials sits at index 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Density = 0,
    VelocityX = 1,
    VelocityY = 2,
    Materials = 3,
    Pressure = 4,
    Energy = 5,
    Temperature = 6,
}

impl Field {
    pub const ALL: [Field; NUM_FIELDS] = [
        Field::Density,
        Field::VelocityX,
        Field::VelocityY,
        Field::Materials,
        Field::Pressure,
        Field::Energy,
        Field::Temperature,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Density => "density",
            Field::VelocityX => "velocity_x",
            Field::VelocityY => "velocity_y",
            Field::Materials => "materials",
            Field::Pressure => "pressure",
            Field::Energy => "energy",
            Field::Temperature => "temperature",
        }
    }

    pub fn from_index(index: usize) -> Option<Field> {
        Field::ALL.get(index).copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: FrameShape, found: FrameShape },
    #[error("stats cover {stats} fields but frame has {frame}")]
    StatsMismatch { stats: usize, frame: usize },
    #[error("frame data length {len} does not match shape {shape}")]
    LengthMismatch { len: usize, shape: FrameShape },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("sequence of {len} frames is too short for a window of {window}")]
    TooShort { len: usize, window: usize },
    #[error("need at least 3 sequences to split, got {0}")]
    TooFewSequences(usize),
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("invalid shape {0}: every extent must be at least 1")]
    DegenerateShape(FrameShape),
}

/// Extents of one frame: fields x height x width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameShape {
    pub fields: usize,
    pub height: usize,
    pub width: usize,
}

impl FrameShape {
    pub const fn new(fields: usize, height: usize, width: usize) -> Self {
        Self {
            fields,
            height,
            width,
        }
    }

    /// The default 7 x 60 x 60 recording shape.
    pub const fn standard() -> Self {
        Self::new(NUM_FIELDS, DEFAULT_GRID, DEFAULT_GRID)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.fields * self.plane()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for FrameShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.fields, self.height, self.width)
    }
}

/// One time snapshot: `fields` planes of `height x width` values, stored
/// row-major in (field, row, column) order.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFrame {
    shape: FrameShape,
    data: Vec<f32>,
}

impl FieldFrame {
    pub fn new(shape: FrameShape, data: Vec<f32>) -> Result<Self, FieldError> {
        if shape.fields == 0 || shape.height == 0 || shape.width == 0 {
            return Err(FieldError::DegenerateShape(shape));
        }
        if data.len() != shape.len() {
            return Err(FieldError::LengthMismatch {
                len: data.len(),
                shape,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: FrameShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Builds a frame by evaluating `f(field, row, col)` at every cell.
    pub fn from_fn(shape: FrameShape, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for k in 0..shape.fields {
            for i in 0..shape.height {
                for j in 0..shape.width {
                    data.push(f(k, i, j));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// One field plane as a flat `height * width` slice.
    pub fn field(&self, index: usize) -> &[f32] {
        let n = self.shape.plane();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn get(&self, field: usize, row: usize, col: usize) -> f32 {
        self.data[(field * self.shape.height + row) * self.shape.width + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Ordered frames plus the parameters that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    shape: FrameShape,
    pub frames: Vec<FieldFrame>,
    /// Free-form (key, value) metadata, usually the geometry configuration.
    pub params: Vec<(String, f64)>,
    /// Time between recorded frames in microseconds.
    pub frame_interval: f32,
}

impl Sequence {
    pub fn new(
        frames: Vec<FieldFrame>,
        params: Vec<(String, f64)>,
        frame_interval: f32,
    ) -> Result<Self, FieldError> {
        let shape = frames.first().ok_or(FieldError::EmptySequence)?.shape();
        Self::with_shape(shape, frames, params, frame_interval)
    }

    /// Like [`Sequence::new`] but allows an empty frame list.
    pub fn with_shape(
        shape: FrameShape,
        frames: Vec<FieldFrame>,
        params: Vec<(String, f64)>,
        frame_interval: f32,
    ) -> Result<Self, FieldError> {
        if let Some(bad) = frames.iter().find(|f| f.shape() != shape) {
            return Err(FieldError::ShapeMismatch {
                expected: shape,
                found: bad.shape(),
            });
        }
        Ok(Self {
            shape,
            frames,
            params,
            frame_interval,
        })
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldRange {
    pub min: f64,
    pub max: f64,
}

impl FieldRange {
    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }
}

/// Per-field extrema taken over the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub ranges: Vec<FieldRange>,
}

impl NormStats {
    pub fn new(ranges: Vec<FieldRange>) -> Self {
        Self { ranges }
    }

    pub fn num_fields(&self) -> usize {
        self.ranges.len()
    }

    /// SHA-256 of the sidecar encoding. Used to tie checkpoints to the
    /// statistics they were trained with.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(encode_norm_stats(self)).into()
    }

    fn check(&self, frame: &FieldFrame) -> Result<(), FieldError> {
        if self.ranges.len() != frame.shape().fields {
            return Err(FieldError::StatsMismatch {
                stats: self.ranges.len(),
                frame: frame.shape().fields,
            });
        }
        Ok(())
    }
}

/// Min/max of every field over every cell, frame and sequence.
pub fn compute_norm_stats(train: &[Sequence]) -> Result<NormStats, FieldError> {
    let mut frames = train.iter().flat_map(|s| s.frames.iter());
    let first = frames.next().ok_or(FieldError::EmptyTrainingSet)?;
    let shape = first.shape();
    let mut ranges = vec![
        FieldRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        shape.fields
    ];
    for frame in std::iter::once(first).chain(frames) {
        if frame.shape() != shape {
            return Err(FieldError::ShapeMismatch {
                expected: shape,
                found: frame.shape(),
            });
        }
        for (k, range) in ranges.iter_mut().enumerate() {
            for &v in frame.field(k) {
                let v = v as f64;
                range.min = range.min.min(v);
                range.max = range.max.max(v);
            }
        }
    }
    Ok(NormStats { ranges })
}

/// Maps every field to `(v - min) / (max - min)`. Degenerate fields map to 0.
/// Values outside the training range are not clipped.
pub fn normalize(frame: &FieldFrame, stats: &NormStats) -> Result<FieldFrame, FieldError> {
    stats.check(frame)?;
    let plane = frame.shape().plane();
    let mut data = Vec::with_capacity(frame.data.len());
    for (k, range) in stats.ranges.iter().enumerate() {
        let src = &frame.data[k * plane..(k + 1) * plane];
        if range.is_degenerate() {
            data.extend(std::iter::repeat_n(0.0f32, plane));
        } else {
            let span = range.span();
            data.extend(src.iter().map(|&v| ((v as f64 - range.min) / span) as f32));
        }
    }
    Ok(FieldFrame {
        shape: frame.shape(),
        data,
    })
}

/// Inverse of [`normalize`]; degenerate fields come back as the stored min.
pub fn denormalize(frame: &FieldFrame, stats: &NormStats) -> Result<FieldFrame, FieldError> {
    stats.check(frame)?;
    let plane = frame.shape().plane();
    let mut data = Vec::with_capacity(frame.data.len());
    for (k, range) in stats.ranges.iter().enumerate() {
        let src = &frame.data[k * plane..(k + 1) * plane];
        if range.is_degenerate() {
            data.extend(std::iter::repeat_n(range.min as f32, plane));
        } else {
            let span = range.span();
            data.extend(src.iter().map(|&v| (v as f64 * span + range.min) as f32));
        }
    }
    Ok(FieldFrame {
        shape: frame.shape(),
        data,
    })
}

/// Normalizes every frame of a sequence, keeping its metadata.
pub fn normalize_sequence(seq: &Sequence, stats: &NormStats) -> Result<Sequence, FieldError> {
    let frames = seq
        .frames
        .iter()
        .map(|f| normalize(f, stats))
        .collect::<Result<Vec<_>, _>>()?;
    Sequence::with_shape(seq.shape, frames, seq.params.clone(), seq.frame_interval)
}

pub fn denormalize_sequence(seq: &Sequence, stats: &NormStats) -> Result<Sequence, FieldError> {
    let frames = seq
        .frames
        .iter()
        .map(|f| denormalize(f, stats))
        .collect::<Result<Vec<_>, _>>()?;
    Sequence::with_shape(seq.shape, frames, seq.params.clone(), seq.frame_interval)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub rng_seed: u64,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Seeded 80/10/10 partition of `0..n_sequences`. Validation and test each
/// get `max(1, n / 10)` sequences and the remainder goes to training.
pub fn split_dataset(n_sequences: usize, seed: u64) -> Result<DatasetSplit, FieldError> {
    if n_sequences < 3 {
        return Err(FieldError::TooFewSequences(n_sequences));
    }
    let mut order: Vec<usize> = (0..n_sequences).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = (n_sequences / 10).max(1);
    let mut test = order[..n_hold].to_vec();
    let mut val = order[n_hold..2 * n_hold].to_vec();
    let mut train = order[2 * n_hold..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        train,
        val,
        test,
        rng_seed: seed,
    })
}

/// A teacher-forcing sample: `inputs` is always a contiguous slice of the
/// source sequence and `target` the frame right after it.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    pub offset: usize,
    pub inputs: &'a [FieldFrame],
    pub target: &'a FieldFrame,
}

pub fn window_samples(seq: &Sequence, window: usize) -> Result<Vec<Window<'_>>, FieldError> {
    let t = seq.frames.len();
    if window == 0 || t < window + 1 {
        return Err(FieldError::TooShort { len: t, window });
    }
    Ok((0..t - window)
        .map(|k| Window {
            offset: k,
            inputs: &seq.frames[k..k + window],
            target: &seq.frames[k + window],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_shape() -> FrameShape {
        FrameShape::new(NUM_FIELDS, 4, 5)
    }

    fn ramp_frame(shape: FrameShape, offset: f32) -> FieldFrame {
        FieldFrame::from_fn(shape, |k, i, j| {
            offset + k as f32 * 10.0 + i as f32 * 0.5 - j as f32 * 0.25
        })
    }

    fn seq_of(frames: Vec<FieldFrame>) -> Sequence {
        Sequence::new(frames, vec![], 0.1).unwrap()
    }

    #[test]
    fn stats_of_constant_field() {
        let shape = small_shape();
        let frame = FieldFrame::from_fn(shape, |k, _, _| if k == 0 { 2.5 } else { k as f32 });
        let stats = compute_norm_stats(&[seq_of(vec![frame])]).unwrap();
        assert_eq!(stats.ranges[0], FieldRange { min: 2.5, max: 2.5 });
    }

    #[test]
    fn stats_span_two_frames() {
        let shape = small_shape();
        let a = FieldFrame::from_fn(shape, |k, i, _| if k == 4 { i as f32 * 0.5 } else { 0.0 });
        let b = FieldFrame::from_fn(shape, |k, i, _| if k == 4 { 1.5 + i as f32 * 0.5 } else { 0.0 });
        let stats = compute_norm_stats(&[seq_of(vec![a, b])]).unwrap();
        assert_eq!(stats.ranges[4], FieldRange { min: 0.0, max: 3.0 });
    }

    #[test]
    fn stats_reject_empty() {
        assert_eq!(compute_norm_stats(&[]), Err(FieldError::EmptyTrainingSet));
        let empty = Sequence::with_shape(small_shape(), vec![], vec![], 0.1).unwrap();
        assert_eq!(
            compute_norm_stats(&[empty]),
            Err(FieldError::EmptyTrainingSet)
        );
    }

    #[test]
    fn normalize_endpoints_and_degenerate() {
        let shape = small_shape();
        let frame = ramp_frame(shape, 1.0);
        let stats = compute_norm_stats(&[seq_of(vec![frame.clone()])]).unwrap();
        let norm = normalize(&frame, &stats).unwrap();
        for k in 0..NUM_FIELDS {
            let plane = norm.field(k);
            let lo = plane.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = plane.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0);
        }

        let constant = FieldFrame::from_fn(shape, |_, _, _| 3.25);
        let stats = compute_norm_stats(&[seq_of(vec![constant.clone()])]).unwrap();
        let norm = normalize(&constant, &stats).unwrap();
        assert!(norm.data().iter().all(|&v| v == 0.0));
        let back = denormalize(&norm, &stats).unwrap();
        assert!(back.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn denormalize_endpoints() {
        let stats = NormStats::new(vec![FieldRange { min: -2.0, max: 6.0 }; NUM_FIELDS]);
        let shape = small_shape();
        let zeros = FieldFrame::zeros(shape);
        let ones = FieldFrame::from_fn(shape, |_, _, _| 1.0);
        assert!(denormalize(&zeros, &stats).unwrap().data().iter().all(|&v| v == -2.0));
        assert!(denormalize(&ones, &stats).unwrap().data().iter().all(|&v| v == 6.0));
    }

    #[test]
    fn out_of_range_values_are_not_clipped() {
        let stats = NormStats::new(vec![FieldRange { min: 0.0, max: 2.0 }; NUM_FIELDS]);
        let frame = FieldFrame::from_fn(small_shape(), |_, _, _| 3.0);
        assert!(normalize(&frame, &stats).unwrap().data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn stats_field_count_must_match() {
        let stats = NormStats::new(vec![FieldRange { min: 0.0, max: 1.0 }; 3]);
        let frame = FieldFrame::zeros(small_shape());
        assert!(matches!(
            normalize(&frame, &stats),
            Err(FieldError::StatsMismatch { .. })
        ));
        assert!(matches!(
            denormalize(&frame, &stats),
            Err(FieldError::StatsMismatch { .. })
        ));
    }

    #[test]
    fn frame_rejects_nan() {
        let mut data = vec![0.0; small_shape().len()];
        data[7] = f32::NAN;
        assert_eq!(
            FieldFrame::new(small_shape(), data),
            Err(FieldError::NonFinite(7))
        );
    }

    #[test]
    fn split_sizes() {
        assert_eq!(split_dataset(10, 1).unwrap().sizes(), (8, 1, 1));
        assert_eq!(split_dataset(13, 99).unwrap().sizes(), (11, 1, 1));
        assert_eq!(split_dataset(40, 7).unwrap().sizes(), (32, 4, 4));
        assert_eq!(split_dataset(3, 7).unwrap().sizes(), (1, 1, 1));
        assert_eq!(split_dataset(2, 7), Err(FieldError::TooFewSequences(2)));
        assert_eq!(split_dataset(25, 5).unwrap(), split_dataset(25, 5).unwrap());
    }

    #[test]
    fn windows_follow_indexing_contract() {
        let shape = small_shape();
        let frames: Vec<_> = (0..60).map(|t| ramp_frame(shape, t as f32)).collect();
        let seq = seq_of(frames);
        let windows = window_samples(&seq, 5).unwrap();
        assert_eq!(windows.len(), 55);
        assert_eq!(windows[0].target, &seq.frames[5]);
        assert_eq!(windows[3].inputs, &seq.frames[3..8]);

        let short = seq_of(seq.frames[..6].to_vec());
        assert_eq!(window_samples(&short, 5).unwrap().len(), 1);
        let too_short = seq_of(seq.frames[..5].to_vec());
        assert!(matches!(
            window_samples(&too_short, 5),
            Err(FieldError::TooShort { len: 5, window: 5 })
        ));
    }

    proptest! {
        #[test]
        fn split_partitions(n in 3usize..200, seed in any::<u64>()) {
            let split = split_dataset(n, seed).unwrap();
            let mut all: Vec<usize> = split.train.iter()
                .chain(&split.val)
                .chain(&split.test)
                .copied()
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(split.val.len(), (n / 10).max(1));
            prop_assert_eq!(split.test.len(), (n / 10).max(1));
        }

        #[test]
        fn normalized_training_data_in_unit_interval(
            values in proptest::collection::vec(-1e4f32..1e4, 2 * 7 * 3 * 3)
        ) {
            let shape = FrameShape::new(7, 3, 3);
            let frames: Vec<_> = values
                .chunks(shape.len())
                .map(|c| FieldFrame::new(shape, c.to_vec()).unwrap())
                .collect();
            let seq = seq_of(frames);
            let stats = compute_norm_stats(std::slice::from_ref(&seq)).unwrap();
            for frame in &seq.frames {
                let norm = normalize(frame, &stats).unwrap();
                prop_assert!(norm.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }

        #[test]
        fn normalize_round_trip(
            values in proptest::collection::vec(-1e3f32..1e3, 7 * 3 * 3),
            lo in -50.0f64..0.0,
            width in 0.5f64..100.0,
        ) {
            let shape = FrameShape::new(7, 3, 3);
            let frame = FieldFrame::new(shape, values).unwrap();
            let range = FieldRange { min: lo, max: lo + width };
            let stats = NormStats::new(vec![range; 7]);
            let back = denormalize(&normalize(&frame, &stats).unwrap(), &stats).unwrap();
            for (a, b) in frame.data().iter().zip(back.data()) {
                let scale = (*a as f64).abs().max(width).max(lo.abs());
                prop_assert!(((*a as f64) - (*b as f64)).abs() <= 1e-6 * scale);
            }
            let unit = FieldFrame::from_fn(shape, |k, i, j| ((k + i + j) % 5) as f32 * 0.25);
            let again = normalize(&denormalize(&unit, &stats).unwrap(), &stats).unwrap();
            for (a, b) in unit.data().iter().zip(again.data()) {
                prop_assert!((a - b).abs() <= 1e-6 * (lo.abs() / width).max(1.0) as f32);
            }
        }
    }
}

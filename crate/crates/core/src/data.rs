//! Labeled datasets, score collections, batches and seeded random streams.
//!
//! Everything here is immutable once built. Randomness is always passed in
//! explicitly as an [`RngHandle`], so two callers never share generator state.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label. Only `+1` and `-1` are accepted on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    fn parse(field: &str) -> Option<Label> {
        let value: f64 = field.trim().parse().ok()?;
        if value == 1.0 {
            Some(Label::Positive)
        } else if value == -1.0 {
            Some(Label::Negative)
        } else {
            None
        }
    }
}

/// A feature vector with its binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    features: Vec<f64>,
    label: Label,
}

impl LabeledVector {
    pub fn new(features: Vec<f64>, label: Label) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Shape("feature vector is empty".into()));
        }
        if let Some(bad) = features.iter().find(|x| !x.is_finite()) {
            return Err(Error::domain(format!("non-finite feature {bad}")));
        }
        Ok(Self { features, label })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// A labeled dataset split by class. Row order is preserved within each class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    positives: Vec<LabeledVector>,
    negatives: Vec<LabeledVector>,
    dim: usize,
}

impl Dataset {
    /// Partitions `rows` by label. Both classes must be non-empty and all
    /// rows must share one dimension.
    pub fn from_rows(rows: impl IntoIterator<Item = LabeledVector>) -> Result<Self> {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        let mut dim = None;
        for row in rows {
            match dim {
                None => dim = Some(row.dim()),
                Some(d) if d != row.dim() => {
                    return Err(Error::Shape(format!(
                        "row of dimension {} in a dataset of dimension {d}",
                        row.dim()
                    )))
                }
                Some(_) => {}
            }
            match row.label {
                Label::Positive => positives.push(row),
                Label::Negative => negatives.push(row),
            }
        }
        Self::from_parts(positives, negatives, dim.unwrap_or(0))
    }

    fn from_parts(
        positives: Vec<LabeledVector>,
        negatives: Vec<LabeledVector>,
        dim: usize,
    ) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::EmptyClass("dataset has no positive examples"));
        }
        if negatives.is_empty() {
            return Err(Error::EmptyClass("dataset has no negative examples"));
        }
        Ok(Self {
            positives,
            negatives,
            dim,
        })
    }

    pub fn positives(&self) -> &[LabeledVector] {
        &self.positives
    }

    pub fn negatives(&self) -> &[LabeledVector] {
        &self.negatives
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_positives(&self) -> usize {
        self.positives.len()
    }

    pub fn num_negatives(&self) -> usize {
        self.negatives.len()
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Class prior `N+ / (N+ + N-)`.
    pub fn prior(&self) -> f64 {
        self.positives.len() as f64 / self.len() as f64
    }

    /// Returns a copy with `row` substituted at `index` within its class.
    pub fn with_replaced(&self, label: Label, index: usize, row: LabeledVector) -> Result<Self> {
        if row.label != label || row.dim() != self.dim {
            return Err(Error::Shape("replacement row does not match class or dim".into()));
        }
        let mut out = self.clone();
        let class = match label {
            Label::Positive => &mut out.positives,
            Label::Negative => &mut out.negatives,
        };
        let slot = class.get_mut(index).ok_or(Error::Capacity {
            class: "replacement",
            requested: index + 1,
            available: 0,
        })?;
        *slot = row;
        Ok(out)
    }

    /// Parses the CSV layout `label,feature_1,...,feature_d`.
    pub fn from_reader<R: Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut rows = Vec::new();
        let mut arity = None;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if idx == 0 && has_header {
                continue;
            }
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label_field = fields.next().unwrap_or_default();
            let label = Label::parse(label_field).ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("label must be +1 or -1, got {:?}", label_field.trim()),
            })?;
            let features = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("non-numeric feature {:?}", f.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if features.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "row has no features".into(),
                });
            }
            match arity {
                None => arity = Some(features.len()),
                Some(d) if d != features.len() => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected {d} features, found {}", features.len()),
                    })
                }
                Some(_) => {}
            }
            let row = LabeledVector::new(features, label).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    /// Writes the dataset in the same CSV layout, positives first.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.positives.iter().chain(&self.negatives) {
            let label = match row.label {
                Label::Positive => "1",
                Label::Negative => "-1",
            };
            out.push_str(label);
            for x in &row.features {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Loads a dataset CSV from disk.
pub fn load_dataset(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_reader(file, has_header)
}

/// Index sets drawn from each class of a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub pos_indices: Vec<usize>,
    pub neg_indices: Vec<usize>,
}

impl Batch {
    pub fn n_pos(&self) -> usize {
        self.pos_indices.len()
    }

    pub fn n_neg(&self) -> usize {
        self.neg_indices.len()
    }

    /// Sampling rate `n+ / (n+ + n-)`.
    pub fn sampling_rate(&self) -> f64 {
        self.n_pos() as f64 / (self.n_pos() + self.n_neg()) as f64
    }
}

/// Draws `n_pos` positives and `n_neg` negatives uniformly without replacement.
pub fn sample_batch<R: rand::Rng + ?Sized>(
    dataset: &Dataset,
    n_pos: usize,
    n_neg: usize,
    rng: &mut R,
) -> Result<Batch> {
    let pos_indices = sample_indices(rng, dataset.num_positives(), n_pos, "positive")?;
    let neg_indices = sample_indices(rng, dataset.num_negatives(), n_neg, "negative")?;
    Ok(Batch {
        pos_indices,
        neg_indices,
    })
}

pub(crate) fn sample_indices<R: rand::Rng + ?Sized>(
    rng: &mut R,
    available: usize,
    requested: usize,
    class: &'static str,
) -> Result<Vec<usize>> {
    if requested == 0 || requested > available {
        return Err(Error::Capacity {
            class,
            requested,
            available,
        });
    }
    Ok(rand::seq::index::sample(rng, available, requested).into_vec())
}

/// Classifier scores split by class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl ScoreSet {
    pub fn new(pos: Vec<f64>, neg: Vec<f64>) -> Result<Self> {
        let set = Self { pos, neg };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pos.is_empty() {
            return Err(Error::EmptyClass("no positive scores"));
        }
        if self.neg.is_empty() {
            return Err(Error::EmptyClass("no negative scores"));
        }
        check_finite(&self.pos)?;
        check_finite(&self.neg)
    }

    /// Class prior implied by the set sizes.
    pub fn prior(&self) -> f64 {
        self.pos.len() as f64 / (self.pos.len() + self.neg.len()) as f64
    }

    pub fn check_range(&self, range: ScoreRange) -> Result<()> {
        self.pos
            .iter()
            .chain(&self.neg)
            .try_for_each(|&s| range.check(s))
    }
}

pub(crate) fn check_finite(xs: &[f64]) -> Result<()> {
    match xs.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(Error::domain(format!("non-finite score {x}"))),
        None => Ok(()),
    }
}

/// Closed interval `[lo, hi]` that scores are known to lie in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ScoreRange {
    /// Cosine-similarity range.
    fn default() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }
}

impl ScoreRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::spec(format!("invalid score range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Range {
                value: x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Key of a reproducible random stream.
///
/// The pair `(master_seed, stream_id)` selects a ChaCha8 key and stream, so
/// repeat `r` of an experiment can always use `stream_id = r` no matter how
/// repeats are scheduled across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngHandle {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngHandle {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Same seed, different stream.
    pub fn stream(&self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }

    /// Derives an unrelated master seed for a named sub-experiment.
    pub fn fork(&self, tag: u64) -> Self {
        Self::new(splitmix64(self.master_seed ^ splitmix64(tag)), self.stream_id)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn parse(text: &str) -> Result<Dataset> {
        Dataset::from_reader(text.as_bytes(), false)
    }

    #[test]
    fn loads_two_row_file() {
        let ds = parse("1,0.5,0.2\n-1,0.1,0.9").unwrap();
        assert_eq!(ds.num_positives(), 1);
        assert_eq!(ds.num_negatives(), 1);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.positives()[0].features(), &[0.5, 0.2]);
    }

    #[test]
    fn header_and_crlf() {
        let ds = Dataset::from_reader("y,a\r\n1,2\r\n-1,3\r\n+1,4\r\n".as_bytes(), true).unwrap();
        assert_eq!(ds.num_positives(), 2);
        assert_eq!(ds.positives()[1].features(), &[4.0]);
        assert!((ds.prior() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn non_numeric_reports_row() {
        match parse("1,a,b") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_reports_row() {
        match parse("1,0.5,0.2\n-1,0.1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_one_labels_rejected() {
        assert!(matches!(parse("1,0.5\n0,0.1\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(parse("1,0.5\n1,0.1\n"), Err(Error::EmptyClass(_))));
        assert!(matches!(parse("-1,0.5\n"), Err(Error::EmptyClass(_))));
    }

    #[test]
    fn csv_round_trip() {
        let ds = parse("1,0.5,0.25\n-1,-0.1,0.9\n1,3,4\n").unwrap();
        let again = parse(&ds.to_csv()).unwrap();
        assert_eq!(ds, again);
    }

    fn toy(n_pos: usize, n_neg: usize) -> Dataset {
        let rows = (0..n_pos)
            .map(|i| LabeledVector::new(vec![i as f64], Label::Positive).unwrap())
            .chain((0..n_neg).map(|i| LabeledVector::new(vec![-(i as f64)], Label::Negative).unwrap()));
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn exhaustive_draw_is_permutation() {
        let ds = toy(4, 6);
        let mut rng = RngHandle::new(3, 0).rng();
        let batch = sample_batch(&ds, 4, 2, &mut rng).unwrap();
        let mut idx = batch.pos_indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert!((batch.sampling_rate() - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = toy(20, 50);
        let a = sample_batch(&ds, 5, 7, &mut RngHandle::new(9, 2).rng()).unwrap();
        let b = sample_batch(&ds, 5, 7, &mut RngHandle::new(9, 2).rng()).unwrap();
        assert_eq!(a, b);
        let c = sample_batch(&ds, 5, 7, &mut RngHandle::new(9, 3).rng()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn capacity_errors() {
        let ds = toy(3, 3);
        let mut rng = RngHandle::new(0, 0).rng();
        assert!(matches!(
            sample_batch(&ds, 4, 1, &mut rng),
            Err(Error::Capacity { class: "positive", .. })
        ));
        assert!(matches!(
            sample_batch(&ds, 1, 0, &mut rng),
            Err(Error::Capacity { class: "negative", .. })
        ));
    }

    #[test]
    fn indices_distinct_and_in_range() {
        let ds = toy(30, 40);
        let mut rng = RngHandle::new(1, 1).rng();
        for _ in 0..100 {
            let b = sample_batch(&ds, 10, 25, &mut rng).unwrap();
            let mut p = b.pos_indices.clone();
            p.sort_unstable();
            p.dedup();
            assert_eq!(p.len(), 10);
            assert!(p.iter().all(|&i| i < 30));
            let mut n = b.neg_indices.clone();
            n.sort_unstable();
            n.dedup();
            assert_eq!(n.len(), 25);
            assert!(n.iter().all(|&i| i < 40));
        }
    }

    #[test]
    fn inclusion_frequencies_uniform() {
        // N+ = 10^4, n+ = 10, 10^4 draws: each count is Binomial(10^4, 10^-3).
        let n_total = 10_000;
        let draws = 10_000;
        let mut counts = vec![0u32; n_total];
        let mut rng = RngHandle::new(42, 0).rng();
        for _ in 0..draws {
            for i in sample_indices(&mut rng, n_total, 10, "positive").unwrap() {
                counts[i] += 1;
            }
        }
        let p = 10.0 / n_total as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        let worst = counts
            .iter()
            .map(|&c| (c as f64 - mean).abs() / sd)
            .fold(0.0, f64::max);
        assert!(worst < 5.0, "max deviation {worst} sigma");
        // Pearson chi-square over all indices, df = N - 1.
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2) / mean)
            .sum();
        let df = (n_total - 1) as f64;
        assert!((chi2 - df).abs() < 5.0 * (2.0 * df).sqrt(), "chi2 = {chi2}");
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let h = RngHandle::new(7, 0);
        let draw = |handle: RngHandle| {
            let mut rng = handle.rng();
            (0..4).map(|_| rng.random::<u64>()).collect::<Vec<_>>()
        };
        let (a, b, c) = (draw(h), draw(h), draw(h.stream(1)));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(h.fork(1), h.fork(2));
    }

    #[test]
    fn range_checks() {
        let r = ScoreRange::default();
        assert!(r.check(1.0).is_ok());
        assert!(matches!(r.check(1.5), Err(Error::Range { .. })));
        assert!(ScoreRange::new(1.0, 1.0).is_err());
        assert!(ScoreSet::new(vec![], vec![1.0]).is_err());
        assert!(ScoreSet::new(vec![f64::NAN], vec![1.0]).is_err());
    }
}

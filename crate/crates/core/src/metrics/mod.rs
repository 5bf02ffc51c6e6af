//! Confusion matrices and the headline scores: accuracy, Cohen's κ and
//! macro-averaged F₁, plus per-class precision and recall.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::sigdata::{SleepStage, NUM_CLASSES};

/// Orientation tag written next to every serialized matrix.
pub const ORIENTATION: &str = "rows=predicted,cols=truth";

/// 5×5 counts; `counts[predicted][truth]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = Self::new();
        for (p, t) in pairs {
            cm.accumulate(p, t)?;
        }
        Ok(cm)
    }

    pub fn accumulate(&mut self, predicted: usize, truth: usize) -> Result<()> {
        if predicted >= NUM_CLASSES || truth >= NUM_CLASSES {
            return Err(Error::BadArg(format!(
                "class pair ({predicted}, {truth}) outside 0..{NUM_CLASSES}"
            )));
        }
        self.counts[predicted][truth] += 1;
        Ok(())
    }

    pub fn record(&mut self, predicted: SleepStage, truth: SleepStage) {
        self.counts[predicted.index()][truth.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    /// Predicted-class totals.
    pub fn row_totals(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    /// True-class totals.
    pub fn col_totals(&self) -> [u64; NUM_CLASSES] {
        let mut out = [0; NUM_CLASSES];
        for row in &self.counts {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    fn nonempty(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::NoData("confusion matrix is empty".into())),
            n => Ok(n as f64),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("predicted\\truth");
        for c in SleepStage::ALL {
            write!(s, ",{}", c.name()).unwrap();
        }
        s.push('\n');
        for (c, row) in SleepStage::ALL.iter().zip(&self.counts) {
            s.push_str(c.name());
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(cm.trace() as f64 / cm.nonempty()?)
}

/// Chance agreement `Σ_c row_c · col_c / total²`.
pub fn expected_agreement(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.nonempty()?;
    let rows = cm.row_totals();
    let cols = cm.col_totals();
    Ok(rows.iter().zip(&cols).map(|(&r, &c)| r as f64 * c as f64).sum::<f64>() / (n * n))
}

pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let p0 = accuracy(cm)?;
    let pe = expected_agreement(cm)?;
    if pe >= 1.0 {
        return Err(Error::Degenerate { observed_agreement: p0 });
    }
    Ok((p0 - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing was predicted as this class (precision forced to 0).
    pub no_predictions: bool,
    /// The class never occurs in the truth (recall forced to 0).
    pub no_support: bool,
}

pub fn precision_recall(cm: &ConfusionMatrix) -> Result<[ClassScores; NUM_CLASSES]> {
    cm.nonempty()?;
    let rows = cm.row_totals();
    let cols = cm.col_totals();
    Ok(std::array::from_fn(|c| {
        let tp = cm.counts[c][c] as f64;
        let ratio = |d: u64| if d == 0 { 0.0 } else { tp / d as f64 };
        let (precision, recall) = (ratio(rows[c]), ratio(cols[c]));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            precision,
            recall,
            f1,
            no_predictions: rows[c] == 0,
            no_support: cols[c] == 0,
        }
    }))
}

/// Unweighted mean of the per-class F₁ scores.
pub fn f1_macro(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(precision_recall(cm)?.iter().map(|s| s.f1).sum::<f64>() / NUM_CLASSES as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub orientation: String,
    pub classes: Vec<String>,
    pub total: u64,
    pub accuracy: f64,
    /// `None` when every count sits in a single row and column.
    pub kappa: Option<f64>,
    pub f1_macro: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_matrix(cm: &ConfusionMatrix) -> Result<Self> {
        let kappa = match kappa(cm) {
            Ok(k) => Some(k),
            Err(Error::Degenerate { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            orientation: ORIENTATION.to_string(),
            classes: SleepStage::ALL.iter().map(|c| c.name().to_string()).collect(),
            total: cm.total(),
            accuracy: accuracy(cm)?,
            kappa,
            f1_macro: f1_macro(cm)?,
            per_class: precision_recall(cm)?.to_vec(),
            confusion: *cm,
        })
    }

    /// Writes `metrics.json` and `confusion.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fsutil::write_json(&dir.join("metrics.json"), self)?;
        fsutil::write_atomic(&dir.join("confusion.csv"), self.confusion.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let report: MetricsReport = fsutil::read_json(path)?;
        if report.orientation != ORIENTATION {
            return Err(Error::format(
                path,
                "orientation",
                format!("expected {ORIENTATION:?}, found {:?}", report.orientation),
            ));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Best-ensemble confusion matrix, rows = predicted, columns = truth.
    const TABLE: [[u64; 5]; 5] = [
        [479551, 19563, 24664, 769, 9861],
        [3868, 14872, 5197, 3, 1958],
        [20392, 20159, 635514, 50331, 22197],
        [1273, 12, 22544, 175868, 99],
        [7028, 10902, 24411, 119, 209068],
    ];

    fn pad2(m: [[u64; 2]; 2]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new();
        for (row, src) in cm.counts.iter_mut().zip(m) {
            row[..2].copy_from_slice(&src);
        }
        cm
    }

    #[test]
    fn published_matrix_scores() {
        let cm = ConfusionMatrix::from_counts(TABLE);
        assert_eq!(cm.total(), 1_760_223);
        assert_eq!(cm.trace(), 1_514_873);
        assert!((accuracy(&cm).unwrap() - 0.86061).abs() < 5e-5);
        assert!((kappa(&cm).unwrap() - 0.8022).abs() < 5e-4);
        let pr = precision_recall(&cm).unwrap();
        assert_eq!(pr[0].precision, 479_551.0 / 534_408.0);
        let margins = [
            (f64::NAN, 0.9364),
            (0.5742, 0.2270),
            (0.8489, 0.8922),
            (0.8802, 0.7744),
            (0.8312, 0.8597),
        ];
        for (s, (p, r)) in pr.iter().zip(margins) {
            assert!(p.is_nan() || (s.precision - p).abs() < 1e-4, "{s:?}");
            assert!((s.recall - r).abs() < 1e-4, "{s:?}");
        }
        assert!((f1_macro(&cm).unwrap() - 0.756).abs() < 5e-4);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.9, 1.1, 0.0]), 1);
    }

    #[test]
    fn two_class_hand_example() {
        let cm = pad2([[8, 2], [3, 7]]);
        assert_eq!(accuracy(&cm).unwrap(), 0.75);
        assert!((expected_agreement(&cm).unwrap() - 0.5).abs() < 1e-12);
        assert!((kappa(&cm).unwrap() - 0.5).abs() < 1e-12);
        let pr = precision_recall(&cm).unwrap();
        assert!((pr[0].f1 - 16.0 / 21.0).abs() < 1e-12);
        assert!((pr[1].f1 - 14.0 / 19.0).abs() < 1e-12);
        assert!(pr[2].no_predictions && pr[2].no_support && pr[2].f1 == 0.0);
        let two_class_macro = (pr[0].f1 + pr[1].f1) / 2.0;
        assert!((two_class_macro - 0.7494).abs() < 5e-5);
    }

    #[test]
    fn trivial_matrices() {
        let mut diag = ConfusionMatrix::new();
        for c in 0..5 {
            diag.counts[c][c] = 3 + c as u64;
        }
        assert_eq!(accuracy(&diag).unwrap(), 1.0);
        assert!((kappa(&diag).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(f1_macro(&diag).unwrap(), 1.0);
        assert!(precision_recall(&diag)
            .unwrap()
            .iter()
            .all(|s| s.precision == 1.0 && s.recall == 1.0));

        let uniform = ConfusionMatrix::from_counts([[4; 5]; 5]);
        assert!((accuracy(&uniform).unwrap() - 0.2).abs() < 1e-12);

        let empty = ConfusionMatrix::new();
        assert!(matches!(accuracy(&empty), Err(Error::NoData(_))));
        assert!(matches!(kappa(&empty), Err(Error::NoData(_))));

        let mut single = ConfusionMatrix::new();
        single.counts[2][2] = 9;
        assert!(matches!(kappa(&single), Err(Error::Degenerate { observed_agreement }) if observed_agreement == 1.0));
        assert_eq!(MetricsReport::from_matrix(&single).unwrap().kappa, None);
    }

    #[test]
    fn accumulate_and_merge() {
        let mut cm = ConfusionMatrix::new();
        cm.accumulate(2, 2).unwrap();
        let mut expected = ConfusionMatrix::new();
        expected.counts[2][2] = 1;
        assert_eq!(cm, expected);
        assert!(matches!(cm.accumulate(5, 0), Err(Error::BadArg(_))));

        let a = [(0, 1), (2, 2), (4, 3)];
        let b = [(1, 1), (3, 0)];
        let mut m = ConfusionMatrix::from_pairs(a).unwrap();
        m.merge(&ConfusionMatrix::from_pairs(b).unwrap());
        assert_eq!(m, ConfusionMatrix::from_pairs(a.into_iter().chain(b)).unwrap());
        assert_eq!(m.total(), 5);
    }

    #[test]
    fn serialization() {
        let cm = ConfusionMatrix::from_counts(TABLE);
        let report = MetricsReport::from_matrix(&cm).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        assert_eq!(MetricsReport::read(&dir.path().join("metrics.json")).unwrap(), report);
        let csv = std::fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "predicted\\truth,Awake,N1,N2,N3,REM");
        assert_eq!(lines[2], "N1,3868,14872,5197,3,1958");
    }

    fn matrix() -> impl Strategy<Value = ConfusionMatrix> {
        proptest::array::uniform5(proptest::array::uniform5(0u64..50))
            .prop_filter("non-empty", |m| m.iter().flatten().sum::<u64>() > 0)
            .prop_map(ConfusionMatrix::from_counts)
    }

    fn scores(cm: &ConfusionMatrix) -> (f64, Option<f64>, f64) {
        (accuracy(cm).unwrap(), kappa(cm).ok(), f1_macro(cm).unwrap())
    }

    fn close(a: (f64, Option<f64>, f64), b: (f64, Option<f64>, f64)) -> bool {
        let near = |x: f64, y: f64| (x - y).abs() < 1e-12;
        near(a.0, b.0)
            && near(a.2, b.2)
            && match (a.1, b.1) {
                (Some(x), Some(y)) => near(x, y),
                (None, None) => true,
                _ => false,
            }
    }

    proptest! {
        #[test]
        fn permutation_invariance(cm in matrix(), perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle()) {
            let mut p = ConfusionMatrix::new();
            for i in 0..5 {
                for j in 0..5 {
                    p.counts[perm[i]][perm[j]] = cm.counts[i][j];
                }
            }
            prop_assert!(close(scores(&cm), scores(&p)));
        }

        #[test]
        fn scale_invariance(cm in matrix(), k in 1u64..20) {
            let scaled = ConfusionMatrix::from_counts(cm.counts.map(|r| r.map(|v| v * k)));
            prop_assert!(close(scores(&cm), scores(&scaled)));
        }

        #[test]
        fn kappa_bounds(cm in matrix()) {
            let p0 = accuracy(&cm).unwrap();
            if let Ok(k) = kappa(&cm) {
                prop_assert!(k <= p0 + 1e-12);
                prop_assert!((-1.0..=1.0 + 1e-12).contains(&k));
                let diagonal = (0..5).all(|i| (0..5).all(|j| i == j || cm.counts[i][j] == 0));
                prop_assert_eq!((k - 1.0).abs() < 1e-12, diagonal);
            }
        }

        #[test]
        fn f1_between_precision_and_recall(cm in matrix()) {
            for s in precision_recall(&cm).unwrap() {
                prop_assert!((0.0..=1.0).contains(&s.precision) && (0.0..=1.0).contains(&s.recall));
                if s.precision > 0.0 && s.recall > 0.0 {
                    prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-12);
                    prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
                }
            }
        }

        #[test]
        fn matrix_matches_pair_stream(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let cm = ConfusionMatrix::from_pairs(pairs.iter().copied()).unwrap();
            let correct = pairs.iter().filter(|(p, t)| p == t).count() as f64;
            prop_assert!((accuracy(&cm).unwrap() - correct / pairs.len() as f64).abs() < 1e-12);
            prop_assert_eq!(cm.total(), pairs.len() as u64);
        }
    }
}

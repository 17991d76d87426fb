use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Contiguous, non-overlapping time spans of the three splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitBounds {
    /// Consecutive train/val/test spans measured in weeks.
    pub fn weeks(train: usize, val: usize, test: usize, steps_per_day: usize) -> Self {
        let w = 7 * steps_per_day;
        Self {
            train: 0..train * w,
            val: train * w..(train + val) * w,
            test: (train + val) * w..(train + val + test) * w,
        }
    }

    /// Consecutive spans from fractions of `steps` (test gets the remainder).
    pub fn fractions(steps: usize, train: f64, val: f64) -> Self {
        let a = (steps as f64 * train).round() as usize;
        let b = a + (steps as f64 * val).round() as usize;
        Self {
            train: 0..a,
            val: a..b.min(steps),
            test: b.min(steps)..steps,
        }
    }

    /// Everything in the training split.
    pub fn train_only(steps: usize) -> Self {
        Self {
            train: 0..steps,
            val: steps..steps,
            test: steps..steps,
        }
    }

    pub fn span(&self, split: Split) -> &Range<usize> {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn end(&self) -> usize {
        self.train.end.max(self.val.end).max(self.test.end)
    }
}

/// Sliding `(P input steps → Q target steps)` samples over a normalised joint
/// series, indexed by split. A sample anchored at `t` reads inputs
/// `[t−P+1, t]` and targets `[t+1, t+Q]`, both inside its split's span.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    data: Vec<f64>,
    steps: usize,
    nodes: usize,
    features: usize,
    p: usize,
    q: usize,
    bounds: SplitBounds,
    anchors: [Vec<usize>; 3],
}

/// Builds every valid window of each split; a split spanning `s` steps holds
/// `s − P − Q + 1` samples.
pub fn make_windows(
    data: Vec<f64>,
    dims: [usize; 3],
    p: usize,
    q: usize,
    bounds: SplitBounds,
) -> Result<WindowedDataset> {
    let [steps, nodes, features] = dims;
    if data.len() != steps * nodes * features {
        return Err(Error::shape("make_windows", format!("{dims:?} vs {} values", data.len())));
    }
    if p == 0 || q == 0 {
        return Err(Error::Config("window lengths P and Q must be positive".into()));
    }
    if steps < p + q {
        return Err(Error::InsufficientData(format!(
            "{steps} steps cannot hold a window of P={p} + Q={q}"
        )));
    }
    if bounds.end() > steps {
        return Err(Error::InsufficientData(format!(
            "split bounds reach step {} but the series has {steps}",
            bounds.end()
        )));
    }
    let spans = [&bounds.train, &bounds.val, &bounds.test];
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if !a.is_empty() && !b.is_empty() && a.start < b.end && b.start < a.end {
                return Err(Error::Config(format!("split spans {a:?} and {b:?} overlap")));
            }
        }
    }
    let anchors = Split::ALL.map(|s| {
        let span = bounds.span(s);
        if span.len() < p + q {
            if !span.is_empty() {
                log::warn!("{} split of {} steps holds no window", s.name(), span.len());
            }
            return Vec::new();
        }
        (span.start + p - 1..span.end - q).collect()
    });
    Ok(WindowedDataset {
        data,
        steps,
        nodes,
        features,
        p,
        q,
        bounds,
        anchors,
    })
}

impl WindowedDataset {
    pub fn input_len(&self) -> usize {
        self.p
    }

    pub fn horizon(&self) -> usize {
        self.q
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn bounds(&self) -> &SplitBounds {
        &self.bounds
    }

    /// Anchor steps `t` of a split, in time order.
    pub fn anchors(&self, split: Split) -> &[usize] {
        &self.anchors[split as usize]
    }

    pub fn len(&self, split: Split) -> usize {
        self.anchors(split).len()
    }

    pub fn is_empty(&self, split: Split) -> bool {
        self.anchors(split).is_empty()
    }

    /// The normalised joint series, `[T, N_M, F]` row-major.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    fn block(&self, from: usize, len: usize) -> &[f64] {
        let w = self.nodes * self.features;
        &self.data[from * w..(from + len) * w]
    }

    /// Input `[B, P, N_M, F]` and target `[B, Q, N_M, F]` tensors for the
    /// given sample indices of `split`.
    pub fn batch(&self, split: Split, samples: &[usize]) -> Result<(Tensor, Tensor)> {
        let anchors = self.anchors(split);
        let mut x = Vec::with_capacity(samples.len() * self.p * self.nodes * self.features);
        let mut y = Vec::with_capacity(samples.len() * self.q * self.nodes * self.features);
        for &s in samples {
            let t = *anchors
                .get(s)
                .ok_or_else(|| Error::Config(format!("{} sample {s} out of range", split.name())))?;
            x.extend_from_slice(self.block(t + 1 - self.p, self.p));
            y.extend_from_slice(self.block(t + 1, self.q));
        }
        let b = samples.len();
        Ok((
            Tensor::new(&[b, self.p, self.nodes, self.features], x)?,
            Tensor::new(&[b, self.q, self.nodes, self.features], y)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(steps: usize) -> Vec<f64> {
        (0..steps).map(|t| t as f64).collect()
    }

    #[test]
    fn boundary_case_has_one_sample() {
        let d = make_windows(ramp(24), [24, 1, 1], 12, 12, SplitBounds::train_only(24)).unwrap();
        assert_eq!(d.len(Split::Train), 1);
        let (x, y) = d.batch(Split::Train, &[0]).unwrap();
        assert_eq!(x.data(), &ramp(12)[..]);
        assert_eq!(y.data()[0], 12.0);
    }

    #[test]
    fn thirty_steps_give_seven_samples() {
        let d = make_windows(ramp(30), [30, 1, 1], 12, 12, SplitBounds::train_only(30)).unwrap();
        assert_eq!(d.len(Split::Train), 30 - 24 + 1);
    }

    #[test]
    fn nine_two_two_week_split() {
        let b = SplitBounds::weeks(9, 2, 2, 48);
        assert_eq!(b.train.len(), 3024);
        let steps = b.end();
        let d = make_windows(vec![0.0; steps], [steps, 1, 1], 12, 12, b).unwrap();
        assert_eq!(d.len(Split::Train), 3001);
        assert_eq!(d.len(Split::Val), 2 * 336 - 23);
        assert_eq!(d.len(Split::Test), 2 * 336 - 23);
    }

    #[test]
    fn insufficient_data_is_an_error() {
        let e = make_windows(ramp(10), [10, 1, 1], 6, 6, SplitBounds::train_only(10));
        assert!(matches!(e, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn windows_are_contiguous_and_stay_inside_their_split() {
        let steps = 60;
        let b = SplitBounds {
            train: 0..30,
            val: 30..45,
            test: 45..60,
        };
        let d = make_windows(ramp(steps), [steps, 1, 1], 4, 3, b.clone()).unwrap();
        for split in Split::ALL {
            let span = b.span(split);
            let n = d.len(split);
            assert_eq!(n, span.len() - 4 - 3 + 1);
            let idx: Vec<usize> = (0..n).collect();
            let (x, y) = d.batch(split, &idx).unwrap();
            for (s, (xw, yw)) in x.data().chunks(4).zip(y.data().chunks(3)).enumerate() {
                let t = d.anchors(split)[s] as f64;
                assert_eq!(xw, &[t - 3.0, t - 2.0, t - 1.0, t]);
                assert_eq!(yw, &[t + 1.0, t + 2.0, t + 3.0]);
                assert!(span.contains(&(xw[0] as usize)) && span.contains(&(yw[2] as usize)));
            }
        }
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let b = SplitBounds {
            train: 0..30,
            val: 20..40,
            test: 40..50,
        };
        assert!(make_windows(ramp(50), [50, 1, 1], 2, 2, b).is_err());
    }

    proptest::proptest! {
        #[test]
        fn window_count_formula(t in 2usize..200, p in 1usize..20, q in 1usize..20) {
            proptest::prop_assume!(t >= p + q);
            let d = make_windows(ramp(t), [t, 1, 1], p, q, SplitBounds::train_only(t)).unwrap();
            proptest::prop_assert_eq!(d.len(Split::Train), t - p - q + 1);
        }
    }
}

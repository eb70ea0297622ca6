use crate::scalar::{compensated_sum, Real};
use crate::workload::ContentId;

/// Windowed request statistics of one CDC.
///
/// Counts accumulate during a window; closing it folds them into the smoothed
/// estimate `c̄ ← α·c̄ + (1-α)·c_w`. Storage is dense over the catalog, and the
/// encountered set `F` keeps first-seen order.
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityTracker<T> {
    alpha: T,
    window_counts: Vec<u64>,
    smoothed: Vec<T>,
    encountered: Vec<ContentId>,
    seen: Vec<bool>,
    kappa: u64,
}

impl<T: Real> PopularityTracker<T> {
    pub fn new(alpha: T, contents: usize) -> Self {
        assert!(
            alpha >= T::zero() && alpha <= T::one(),
            "smoothing weight must be in [0, 1]"
        );
        PopularityTracker {
            alpha,
            window_counts: vec![0; contents],
            smoothed: vec![T::zero(); contents],
            encountered: Vec::new(),
            seen: vec![false; contents],
            kappa: 0,
        }
    }

    pub fn record(&mut self, f: ContentId) {
        self.window_counts[f] += 1;
        if !self.seen[f] {
            self.seen[f] = true;
            self.encountered.push(f);
        }
    }

    pub fn close_window(&mut self) {
        let keep = self.alpha;
        let fresh = T::one() - self.alpha;
        for &f in &self.encountered {
            let c = T::from(self.window_counts[f]).expect("count fits");
            self.smoothed[f] = keep * self.smoothed[f] + fresh * c;
            self.window_counts[f] = 0;
        }
        self.kappa += 1;
    }

    pub fn window_count(&self, f: ContentId) -> u64 {
        self.window_counts[f]
    }

    pub fn smoothed(&self, f: ContentId) -> T {
        self.smoothed[f]
    }

    /// Overrides the smoothed estimate of an encountered content.
    pub fn set_smoothed(&mut self, f: ContentId, value: T) {
        assert!(self.seen[f] && value >= T::zero());
        self.smoothed[f] = value;
    }

    pub fn encountered(&self) -> &[ContentId] {
        &self.encountered
    }

    pub fn has_seen(&self, f: ContentId) -> bool {
        self.seen[f]
    }

    /// Index of the current window.
    pub fn kappa(&self) -> u64 {
        self.kappa
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }
}

/// `p_f = c̄_f / Σ_{g∈F} c̄_g`, dense over the catalog (zero outside `F`).
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityIndex<T> {
    p: Vec<T>,
}

impl<T: Real> PopularityIndex<T> {
    pub fn zeros(contents: usize) -> Self {
        PopularityIndex {
            p: vec![T::zero(); contents],
        }
    }

    #[inline]
    pub fn get(&self, f: ContentId) -> T {
        self.p[f]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.p
    }
}

/// Normalized popularity over encountered contents. When every smoothed count
/// is zero (cold start) the index is uniform over `F`.
pub fn popularity_index<T: Real>(tracker: &PopularityTracker<T>) -> PopularityIndex<T> {
    let mut p = vec![T::zero(); tracker.smoothed.len()];
    let total = compensated_sum(tracker.encountered.iter().map(|&f| tracker.smoothed[f]));
    if total > T::zero() {
        for &f in &tracker.encountered {
            p[f] = tracker.smoothed[f] / total;
        }
    } else if !tracker.encountered.is_empty() {
        let u = T::one() / T::from_count(tracker.encountered.len());
        for &f in &tracker.encountered {
            p[f] = u;
        }
    }
    PopularityIndex { p }
}

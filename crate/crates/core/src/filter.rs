//! Windowed min/max filters.
//!
//! The filter keeps a monotone queue of candidates: the front is the current
//! extremum, and every later entry is strictly worse but newer. A candidate
//! is dropped as soon as a newer sample is at least as good, so the queue only
//! holds values that could still become the extremum once older ones age out.
//! `current()` is therefore exactly the extremum over the unexpired window.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    Max,
    Min,
}

#[derive(Clone, Debug)]
pub struct WindowedFilter<T> {
    mode: FilterMode,
    window_len: u64,
    entries: VecDeque<(T, u64)>,
    latest: Option<(T, u64)>,
}

impl<T: Copy + PartialOrd> WindowedFilter<T> {
    /// `window_len` is in the same unit as the stamps passed to `update`
    /// (nanoseconds, rounds or probe cycles).
    pub fn new(mode: FilterMode, window_len: u64) -> Self {
        WindowedFilter {
            mode,
            window_len,
            entries: VecDeque::new(),
            latest: None,
        }
    }

    pub fn max(window_len: u64) -> Self {
        Self::new(FilterMode::Max, window_len)
    }

    pub fn min(window_len: u64) -> Self {
        Self::new(FilterMode::Min, window_len)
    }

    pub fn mode(&self) -> FilterMode {
        self.mode
    }

    pub fn window_len(&self) -> u64 {
        self.window_len
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of retained candidates.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// `a` is at least as good as `b` under this filter's mode.
    fn dominates(&self, a: T, b: T) -> bool {
        match self.mode {
            FilterMode::Max => a >= b,
            FilterMode::Min => a <= b,
        }
    }

    fn expired(&self, stamp: u64, now: u64) -> bool {
        now.saturating_sub(stamp) >= self.window_len
    }

    /// Evicts entries whose age reached the window length.
    pub fn expire(&mut self, now: u64) {
        while let Some(&(_, stamp)) = self.entries.front() {
            if self.expired(stamp, now) {
                self.entries.pop_front();
            } else {
                break;
            }
        }
    }

    /// Inserts a sample taken at `now` and returns the new extremum.
    pub fn update(&mut self, sample: T, now: u64) -> T {
        self.latest = Some((sample, now));
        if self.window_len == 0 {
            self.entries.clear();
            self.entries.push_back((sample, now));
            return sample;
        }
        self.expire(now);
        while let Some(&(v, _)) = self.entries.back() {
            if self.dominates(sample, v) {
                self.entries.pop_back();
            } else {
                break;
            }
        }
        // A better entry with the same stamp expires together with this
        // sample, so the sample can never surface.
        let shadowed = matches!(self.entries.back(), Some(&(_, s)) if s >= now);
        if !shadowed {
            self.entries.push_back((sample, now));
        }
        self.entries.front().map(|e| e.0).unwrap_or(sample)
    }

    /// Extremum as of the most recent update.
    pub fn current(&self) -> Option<T> {
        self.entries.front().map(|e| e.0)
    }

    /// Extremum among entries still inside the window at `now`.
    pub fn get(&self, now: u64) -> Option<T> {
        if self.window_len == 0 {
            return self.latest.map(|e| e.0);
        }
        self.entries
            .iter()
            .find(|(_, s)| !self.expired(*s, now))
            .map(|e| e.0)
    }

    /// Most recent raw sample, whether or not it is retained.
    pub fn latest(&self) -> Option<T> {
        self.latest.map(|e| e.0)
    }

    /// Discards the current best entry. The next retained candidate becomes
    /// the extremum; if none remains, the most recent raw sample takes over.
    /// No-op on an empty filter.
    pub fn expire_oldest(&mut self) -> Option<T> {
        if self.entries.pop_front().is_none() {
            return None;
        }
        if self.entries.is_empty() {
            if let Some(latest) = self.latest {
                self.entries.push_back(latest);
            }
        }
        self.current()
    }

    /// Forgets all history and seeds the filter with one sample.
    pub fn reset(&mut self, sample: T, now: u64) {
        self.entries.clear();
        self.latest = None;
        self.update(sample, now);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.latest = None;
    }
}

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::io_util::output_err;

/// Where a request was finally served from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServedBy {
    Local,
    Neighbor(usize),
    /// The snapshot said the neighbor held the content but it had been evicted;
    /// the neighbor fetched it from the publisher.
    StaleNeighbor(usize),
    Origin,
}

impl ServedBy {
    pub fn is_cache_hit(self) -> bool {
        matches!(self, ServedBy::Local | ServedBy::Neighbor(_))
    }
}

/// Statistics of one popularity window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    pub window: u64,
    pub requests: u64,
    pub avg_latency: f64,
    pub hit_local: f64,
    pub hit_neighbor: f64,
    pub origin_ratio: f64,
    pub exchanged_records: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTotals {
    pub requests: u64,
    pub latency_sum: u64,
    pub local_hits: u64,
    pub neighbor_hits: u64,
    pub origin_fetches: u64,
    pub exchanged_records: u64,
}

impl RunTotals {
    pub fn avg_latency(&self) -> f64 {
        ratio(self.latency_sum, self.requests)
    }

    pub fn hit_ratio(&self) -> f64 {
        ratio(self.local_hits + self.neighbor_hits, self.requests)
    }

    pub fn local_ratio(&self) -> f64 {
        ratio(self.local_hits, self.requests)
    }

    pub fn neighbor_ratio(&self) -> f64 {
        ratio(self.neighbor_hits, self.requests)
    }

    pub fn origin_ratio(&self) -> f64 {
        ratio(self.origin_fetches, self.requests)
    }

    pub(crate) fn add(&mut self, served: ServedBy, latency: u32) {
        self.requests += 1;
        self.latency_sum += u64::from(latency);
        match served {
            ServedBy::Local => self.local_hits += 1,
            ServedBy::Neighbor(_) => self.neighbor_hits += 1,
            ServedBy::StaleNeighbor(_) | ServedBy::Origin => self.origin_fetches += 1,
        }
    }

    pub(crate) fn merge(&mut self, other: &RunTotals) {
        self.requests += other.requests;
        self.latency_sum += other.latency_sum;
        self.local_hits += other.local_hits;
        self.neighbor_hits += other.neighbor_hits;
        self.origin_fetches += other.origin_fetches;
        self.exchanged_records += other.exchanged_records;
    }

    pub(crate) fn record(&self, window: u64) -> WindowRecord {
        WindowRecord {
            window,
            requests: self.requests,
            avg_latency: self.avg_latency(),
            hit_local: self.local_ratio(),
            hit_neighbor: self.neighbor_ratio(),
            origin_ratio: self.origin_ratio(),
            exchanged_records: self.exchanged_records,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-window time series plus run totals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsSeries {
    pub windows: Vec<WindowRecord>,
    pub totals: RunTotals,
}

impl MetricsSeries {
    /// Mean latency over the last `fraction` of windows (request-weighted).
    pub fn tail_avg_latency(&self, fraction: f64) -> f64 {
        let skip = ((1.0 - fraction) * self.windows.len() as f64).floor() as usize;
        let tail = &self.windows[skip.min(self.windows.len())..];
        let (sum, n) = tail.iter().fold((0.0, 0u64), |(s, n), w| {
            (s + w.avg_latency * w.requests as f64, n + w.requests)
        });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// `window,requests,avg_latency_hops,hit_local,hit_neighbor,origin_ratio,exchanged_records`
    /// rows and a closing `TOTAL` row (omitted when no request ran).
    pub fn write_csv<W: Write>(&self, out: W, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let res = (|| -> csv::Result<()> {
            w.write_record([
                "window",
                "requests",
                "avg_latency_hops",
                "hit_local",
                "hit_neighbor",
                "origin_ratio",
                "exchanged_records",
            ])?;
            for rec in &self.windows {
                w.write_record(&row(rec.window.to_string(), rec))?;
            }
            if self.totals.requests > 0 {
                w.write_record(&row("TOTAL".into(), &self.totals.record(0)))?;
            }
            w.flush().map_err(csv::Error::from)
        })();
        res.map_err(|e| output_err(path, e))
    }
}

fn row(label: String, r: &WindowRecord) -> [String; 7] {
    [
        label,
        r.requests.to_string(),
        format!("{:.6}", r.avg_latency),
        format!("{:.6}", r.hit_local),
        format!("{:.6}", r.hit_neighbor),
        format!("{:.6}", r.origin_ratio),
        r.exchanged_records.to_string(),
    ]
}

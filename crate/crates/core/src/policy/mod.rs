//! Cache state and admission/eviction policies.
//!
//! Baselines (`fifo`, `rr`, `mru`, `lru`, `lfu`) are reactive: every miss is
//! admitted. `plfu` admits by windowed popularity index; `slfu` and `shat_lfu`
//! admit by the cooperative score, the latter tuning β from an estimated skew.

mod cache;
mod popularity;
mod score;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub use cache::{admit_by_value, baseline_on_access, AccessOutcome, Baseline, CacheState};
pub use popularity::{popularity_index, PopularityIndex, PopularityTracker};
pub use score::{
    beta_from_s, inter_cdc_delay, local_score, neighborhood_score, plfu_admit, score,
    slfu_admit_evict, LocalTerm, NeighborTerm, ScoreInputs,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Fifo,
    Rr,
    Mru,
    Lru,
    Lfu,
    Plfu,
    Slfu,
    ShatLfu,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::Lru,
        PolicyKind::Lfu,
        PolicyKind::Fifo,
        PolicyKind::Rr,
        PolicyKind::Mru,
        PolicyKind::Plfu,
        PolicyKind::Slfu,
        PolicyKind::ShatLfu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fifo => "fifo",
            PolicyKind::Rr => "rr",
            PolicyKind::Mru => "mru",
            PolicyKind::Lru => "lru",
            PolicyKind::Lfu => "lfu",
            PolicyKind::Plfu => "plfu",
            PolicyKind::Slfu => "slfu",
            PolicyKind::ShatLfu => "shat_lfu",
        }
    }

    pub fn baseline(self) -> Option<Baseline> {
        match self {
            PolicyKind::Fifo => Some(Baseline::Fifo),
            PolicyKind::Rr => Some(Baseline::Rr),
            PolicyKind::Mru => Some(Baseline::Mru),
            PolicyKind::Lru => Some(Baseline::Lru),
            PolicyKind::Lfu => Some(Baseline::Lfu),
            _ => None,
        }
    }

    /// Whether misses consult neighbor CDCs by default.
    pub fn is_cooperative(self) -> bool {
        matches!(self, PolicyKind::Slfu | PolicyKind::ShatLfu)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown policy {s:?} (expected lru | lfu | fifo | rr | mru | plfu | slfu | shat_lfu)"
                ))
            })
    }
}

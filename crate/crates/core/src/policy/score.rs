use crate::policy::cache::{admit_by_value, AccessOutcome, CacheState};
use crate::policy::popularity::PopularityIndex;
use crate::scalar::Real;
use crate::workload::ContentId;

/// pLFU admission by popularity index.
pub fn plfu_admit<T: Real>(cache: &mut CacheState, p: &PopularityIndex<T>, f: ContentId) -> AccessOutcome {
    admit_by_value(cache, f, |g| p.get(g))
}

/// Score-based admission: keeps the top-`C` contents by score incrementally.
pub fn slfu_admit_evict<T: Real>(
    cache: &mut CacheState,
    score: impl Fn(ContentId) -> T,
    f: ContentId,
) -> AccessOutcome {
    admit_by_value(cache, f, score)
}

/// Neighborhood weight from a skew estimate:
/// `1 - 1/(1 + e^{-20(s - 0.5)})`, evaluated as `1/(1 + e^{20(s - 0.5)})`.
pub fn beta_from_s<T: Real>(s: T) -> T {
    T::one() / (T::one() + (T::lit(20.0) * (s - T::lit(0.5))).exp())
}

/// Delay from CDC `i` to neighbor `j` for a content, including the fetch from
/// the publisher when `j` does not hold it.
pub fn inter_cdc_delay<T: Real>(i: usize, j: usize, available_at_j: bool, hops_ij: T, hops_j_origin: T) -> T {
    assert_ne!(i, j, "local delay is not an inter-CDC delay");
    if available_at_j {
        hops_ij
    } else {
        hops_ij + hops_j_origin
    }
}

/// What CDC `i` knows about one neighbor `j` for a given content.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborTerm<T> {
    /// Request mass of the neighbor's community.
    pub r: T,
    /// Neighbor's popularity index for the content.
    pub p: T,
    /// Hop distance between the two CDCs.
    pub hops: T,
    pub available: bool,
    /// Neighbor's hop penalty to the origin publisher.
    pub origin: T,
}

/// CDC `i`'s own view of a content.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTerm<T> {
    pub r: T,
    pub p: T,
    /// Intra-community delay `ℓ_i`.
    pub delay: T,
    pub available: bool,
    /// Added to `ℓ_i` when the content is absent.
    pub origin: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreInputs<T> {
    pub beta: T,
    pub local: LocalTerm<T>,
    pub neighbors: Vec<NeighborTerm<T>>,
}

/// `Σ_j r_j p_{f,j} ℓ_{i,j} / |N_i|` with availability-aware `ℓ_{i,j}`.
pub fn neighborhood_score<T: Real>(neighbors: &[NeighborTerm<T>]) -> T {
    if neighbors.is_empty() {
        return T::zero();
    }
    let total: T = neighbors
        .iter()
        .enumerate()
        .map(|(idx, n)| {
            // Indices only need to differ; the neighbor set never holds `i`.
            n.r * n.p * inter_cdc_delay(0, idx + 1, n.available, n.hops, n.origin)
        })
        .sum();
    total / T::from_count(neighbors.len())
}

/// `r_i p_{f,i} / ℓ_i`, with the origin penalty folded into `ℓ_i` when absent.
pub fn local_score<T: Real>(local: &LocalTerm<T>) -> T {
    let delay = if local.available {
        local.delay
    } else {
        local.delay + local.origin
    };
    assert!(delay > T::zero(), "intra-CDC delay must be positive");
    local.r * local.p / delay
}

/// `β·S_neigh + (1-β)·S_local`. With no neighbors β is treated as 0.
pub fn score<T: Real>(inputs: &ScoreInputs<T>) -> T {
    combine(inputs.beta, !inputs.neighbors.is_empty(), || neighborhood_score(&inputs.neighbors), local_score(&inputs.local))
}

pub(crate) fn combine<T: Real>(beta: T, has_neighbors: bool, neigh: impl FnOnce() -> T, local: T) -> T {
    if !has_neighbors || beta == T::zero() {
        if !has_neighbors && beta > T::zero() {
            log::trace!("empty neighborhood: scoring with local term only");
        }
        return local;
    }
    beta * neigh() + (T::one() - beta) * local
}

//! Content catalog, per-community Zipf interests, request sampling, epoch
//! shuffling and the maximum-likelihood Zipf exponent estimate.

use std::io::{Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geo::NodeId;
use crate::io_util::output_err;
use crate::population::RequestVector;
use crate::scalar::{compensated_sum, Real};

pub type ContentId = usize;

/// Largest Zipf exponent accepted anywhere (the estimator's search bracket).
pub const S_MAX: f64 = 4.0;

pub const DEFAULT_CATEGORIES: [&str; 4] = ["Sports", "Education", "Politics", "Movies"];

/// `M` equally sized contents, each labelled with a category. Labels are
/// reporting metadata only.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentCatalog {
    categories: Vec<String>,
    category_of: Vec<usize>,
}

impl ContentCatalog {
    /// Assigns categories round-robin by content id.
    pub fn new(size: usize, categories: &[&str]) -> Result<Self> {
        if size == 0 {
            return Err(Error::validation("content catalog must hold at least one content"));
        }
        if categories.is_empty() {
            return Err(Error::validation("at least one content category is required"));
        }
        Ok(ContentCatalog {
            categories: categories.iter().map(|c| c.to_string()).collect(),
            category_of: (0..size).map(|f| f % categories.len()).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.category_of.len()
    }

    pub fn category(&self, f: ContentId) -> &str {
        &self.categories[self.category_of[f]]
    }
}

/// `f(τ, s, M) = τ^{-s} / Σ_{m=1}^{M} m^{-s}` for ranks `τ = 1..=M`.
pub fn zipf_pmf<T: Real>(s: T, m: usize) -> Vec<T> {
    assert!(m >= 1, "Zipf support must be non-empty");
    assert!(s >= T::zero(), "Zipf exponent must be non-negative");
    let weights: Vec<T> = (1..=m).map(|tau| T::from_count(tau).powf(-s)).collect();
    let total = compensated_sum(weights.iter().copied());
    weights.into_iter().map(|w| w / total).collect()
}

/// Popularity skew and content ranking of one community.
#[derive(Clone, Debug, PartialEq)]
pub struct CommunityInterest {
    s: f64,
    /// content id → rank (0 = most popular).
    rank_of: Vec<usize>,
    /// rank → content id.
    content_at: Vec<ContentId>,
    cdf: Vec<f64>,
}

impl CommunityInterest {
    pub fn new(s: f64, rank_of: Vec<usize>) -> Result<Self> {
        if !(0.0..=S_MAX).contains(&s) {
            return Err(Error::validation(format!("Zipf exponent {s} outside [0, {S_MAX}]")));
        }
        let m = rank_of.len();
        let mut content_at = vec![usize::MAX; m];
        for (f, &rank) in rank_of.iter().enumerate() {
            if rank >= m || content_at[rank] != usize::MAX {
                return Err(Error::validation("rank permutation is not a bijection"));
            }
            content_at[rank] = f;
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = zipf_pmf(s, m)
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(CommunityInterest {
            s,
            rank_of,
            content_at,
            cdf,
        })
    }

    fn random(s_range: (f64, f64), m: usize, rng: &mut impl Rng) -> Self {
        let s = if s_range.0 == s_range.1 {
            s_range.0
        } else {
            rng.gen_range(s_range.0..=s_range.1)
        };
        let mut content_at: Vec<ContentId> = (0..m).collect();
        content_at.shuffle(rng);
        let mut rank_of = vec![0; m];
        for (rank, &f) in content_at.iter().enumerate() {
            rank_of[f] = rank;
        }
        Self::new(s, rank_of).expect("shuffled ranks form a permutation")
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn rank_of(&self) -> &[usize] {
        &self.rank_of
    }

    /// Request probability of content `f` in this community.
    pub fn probability(&self, f: ContentId) -> f64 {
        let rank = self.rank_of[f];
        if rank == 0 {
            self.cdf[0]
        } else {
            self.cdf[rank] - self.cdf[rank - 1]
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ContentId {
        let u: f64 = rng.gen();
        let rank = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.content_at[rank]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Request {
    pub origin_node: NodeId,
    pub content: ContentId,
    pub sequence_no: u64,
}

/// Request generator: origin nodes ∝ `r`, contents from the origin's community.
#[derive(Clone, Debug)]
pub struct Workload {
    interests: Vec<CommunityInterest>,
    community_of: Vec<usize>,
    origin: WeightedIndex<f64>,
    s_range: (f64, f64),
    contents: usize,
    next_seq: u64,
}

impl Workload {
    /// Draws an initial skew and ranking for each of `communities` communities.
    pub fn new<T: Real>(
        r: &RequestVector<T>,
        community_of: Vec<usize>,
        communities: usize,
        contents: usize,
        s_range: (f64, f64),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if contents == 0 {
            return Err(Error::validation("content catalog must hold at least one content"));
        }
        if !(0.0 <= s_range.0 && s_range.0 <= s_range.1 && s_range.1 <= S_MAX) {
            return Err(Error::validation(format!(
                "s range {s_range:?} must be ordered within [0, {S_MAX}]"
            )));
        }
        if community_of.len() != r.len() || community_of.iter().any(|&c| c >= communities) {
            return Err(Error::validation("every node needs a valid community"));
        }
        let origin = WeightedIndex::new(r.as_slice().iter().map(|x| x.as_f64()))
            .map_err(|e| Error::validation(format!("request vector: {e}")))?;
        let interests = (0..communities)
            .map(|_| CommunityInterest::random(s_range, contents, rng))
            .collect();
        Ok(Workload {
            interests,
            community_of,
            origin,
            s_range,
            contents,
            next_seq: 0,
        })
    }

    pub fn interests(&self) -> &[CommunityInterest] {
        &self.interests
    }

    /// Replaces one community's interest (e.g. to pin a ranking in tests).
    pub fn set_interest(&mut self, community: usize, interest: CommunityInterest) -> Result<()> {
        if interest.rank_of.len() != self.contents {
            return Err(Error::validation("interest must rank every content"));
        }
        self.interests[community] = interest;
        Ok(())
    }

    pub fn contents(&self) -> usize {
        self.contents
    }

    pub fn sample_request(&mut self, rng: &mut impl Rng) -> Request {
        let origin_node = self.origin.sample(rng);
        let content = self.interests[self.community_of[origin_node]].sample(rng);
        let req = Request {
            origin_node,
            content,
            sequence_no: self.next_seq,
        };
        self.next_seq += 1;
        req
    }

    /// New skew (uniform over the configured range) and a fresh random
    /// ranking for every community.
    pub fn shuffle_epoch(&mut self, rng: &mut impl Rng) {
        for interest in &mut self.interests {
            *interest = CommunityInterest::random(self.s_range, self.contents, rng);
        }
    }
}

/// Maximum-likelihood Zipf exponent of a sample of content ids.
///
/// Contents are ranked by descending observed frequency (ties: smaller id
/// first) and the log-likelihood is maximized over `s ∈ [0, 4]` by
/// golden-section search to a bracket width of `1e-4`.
pub fn mle_estimate_s<T: Real>(observations: &[ContentId], m: usize) -> Result<T> {
    if observations.is_empty() {
        return Err(Error::validation("MLE needs at least one observation"));
    }
    let mut counts = vec![0u64; m];
    for &f in observations {
        *counts
            .get_mut(f)
            .ok_or_else(|| Error::validation(format!("content {f} outside catalog of {m}")))? += 1;
    }
    let mut order: Vec<ContentId> = (0..m).collect();
    order.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
    // Σ_obs ln τ(obs)
    let log_rank_total = compensated_sum(
        order
            .iter()
            .enumerate()
            .filter(|(_, f)| counts[**f] > 0)
            .map(|(rank, f)| T::from_count(rank + 1).ln() * T::from(counts[*f]).unwrap()),
    );
    let n = T::from_count(observations.len());
    let log_ranks: Vec<T> = (1..=m).map(|tau| T::from_count(tau).ln()).collect();
    let loglik = |s: T| {
        let z = compensated_sum(log_ranks.iter().map(|lr| (-s * *lr).exp()));
        -s * log_rank_total - n * z.ln()
    };
    let (lo, hi) = (T::zero(), T::lit(S_MAX));
    let x = golden_section_max(loglik, lo, hi, T::lit(1e-4));
    let best = [(x, loglik(x)), (lo, loglik(lo)), (hi, loglik(hi))]
        .into_iter()
        .fold((x, T::neg_infinity()), |b, c| if c.1 > b.1 { c } else { b });
    Ok(best.0)
}

fn golden_section_max<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    (a + b) * T::lit(0.5)
}

/// Writes `sequence_no,origin_node,content_id` rows.
pub fn export_trace<W: Write>(requests: &[Request], out: W, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let res = (|| -> csv::Result<()> {
        w.write_record(["sequence_no", "origin_node", "content_id"])?;
        for r in requests {
            w.write_record(&[
                r.sequence_no.to_string(),
                r.origin_node.to_string(),
                r.content.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    res.map_err(|e| output_err(path, e))
}

/// Reads a trace written by [`export_trace`], checking ids against the scenario.
pub fn parse_trace<R: Read>(reader: R, path: &Path, nodes: usize, contents: usize) -> Result<Vec<Request>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["sequence_no", "origin_node", "content_id"] {
        return Err(parse_err(1, "expected header sequence_no,origin_node,content_id".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<u64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(line, format!("bad field {}", i + 1)))
        };
        let req = Request {
            sequence_no: field(0)?,
            origin_node: field(1)? as usize,
            content: field(2)? as usize,
        };
        if req.origin_node >= nodes || req.content >= contents {
            return Err(parse_err(line, "node or content id out of range".into()));
        }
        out.push(req);
    }
    Ok(out)
}

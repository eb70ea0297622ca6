use std::collections::BTreeMap;

use rand::Rng;

use crate::workload::ContentId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Baseline {
    Fifo,
    Rr,
    Mru,
    Lru,
    Lfu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessOutcome {
    Hit,
    Admitted { evicted: Option<ContentId> },
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Entry {
    inserted: u64,
    last_access: u64,
    freq: u64,
}

/// Contents resident at one CDC plus the per-entry bookkeeping every policy
/// needs (insertion time, last access, in-cache hit count).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheState {
    capacity: usize,
    entries: BTreeMap<ContentId, Entry>,
    clock: u64,
}

impl CacheState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "cache capacity must be at least 1");
        CacheState {
            capacity,
            entries: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn contains(&self, f: ContentId) -> bool {
        self.entries.contains_key(&f)
    }

    /// Resident contents in ascending id order.
    pub fn resident(&self) -> impl Iterator<Item = ContentId> + '_ {
        self.entries.keys().copied()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Records a hit on a resident content.
    pub fn touch(&mut self, f: ContentId) {
        let now = self.tick();
        let e = self.entries.get_mut(&f).expect("touched content is resident");
        e.last_access = now;
        e.freq += 1;
    }

    /// Inserts into free space.
    pub fn insert(&mut self, f: ContentId) {
        assert!(!self.is_full(), "insert into a full cache");
        let now = self.tick();
        let prev = self.entries.insert(
            f,
            Entry {
                inserted: now,
                last_access: now,
                freq: 1,
            },
        );
        debug_assert!(prev.is_none(), "content {f} already resident");
    }

    pub fn remove(&mut self, f: ContentId) -> bool {
        self.entries.remove(&f).is_some()
    }

    fn victim_by<K: Ord>(&self, key: impl Fn(&Entry) -> K) -> ContentId {
        self.entries
            .iter()
            .min_by_key(|(_, e)| key(e))
            .map(|(f, _)| *f)
            .expect("victim requested from an empty cache")
    }

    fn evict_for(&mut self, victim: ContentId, f: ContentId) -> AccessOutcome {
        self.entries.remove(&victim);
        self.insert(f);
        AccessOutcome::Admitted {
            evicted: Some(victim),
        }
    }
}

/// Reactive replacement: hits update bookkeeping, misses are always admitted.
///
/// LFU counts hits while resident and breaks frequency ties by least recent
/// use. RR draws its victim from `rng`.
pub fn baseline_on_access(
    policy: Baseline,
    cache: &mut CacheState,
    f: ContentId,
    rng: &mut impl Rng,
) -> AccessOutcome {
    if cache.contains(f) {
        cache.touch(f);
        return AccessOutcome::Hit;
    }
    if !cache.is_full() {
        cache.insert(f);
        return AccessOutcome::Admitted { evicted: None };
    }
    let victim = match policy {
        Baseline::Fifo => cache.victim_by(|e| e.inserted),
        Baseline::Lru => cache.victim_by(|e| e.last_access),
        Baseline::Mru => cache.victim_by(|e| std::cmp::Reverse(e.last_access)),
        Baseline::Lfu => cache.victim_by(|e| (e.freq, e.last_access)),
        Baseline::Rr => {
            let i = rng.gen_range(0..cache.len());
            cache.resident().nth(i).expect("index within cache")
        }
    };
    cache.evict_for(victim, f)
}

/// Value-ranked admission shared by pLFU and the score policies: admit into
/// free space; when full, admit only if `value(f)` beats the lowest resident
/// value, evicting that resident (ties: the larger content id leaves).
pub fn admit_by_value<T: PartialOrd + Copy>(
    cache: &mut CacheState,
    f: ContentId,
    value: impl Fn(ContentId) -> T,
) -> AccessOutcome {
    debug_assert!(!cache.contains(f), "admission for a resident content");
    if !cache.is_full() {
        cache.insert(f);
        return AccessOutcome::Admitted { evicted: None };
    }
    let mut worst: Option<(ContentId, T)> = None;
    for g in cache.resident() {
        let v = value(g);
        // Ascending ids, so `<=` lets the larger id win ties.
        if worst.map_or(true, |(_, wv)| v <= wv) {
            worst = Some((g, v));
        }
    }
    let (victim, min_value) = worst.expect("full cache has residents");
    if value(f) > min_value {
        cache.evict_for(victim, f)
    } else {
        AccessOutcome::Rejected
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    fn run(policy: Baseline, cap: usize, seq: &[ContentId]) -> Vec<ContentId> {
        let mut c = CacheState::new(cap);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for &f in seq {
            baseline_on_access(policy, &mut c, f, &mut rng);
        }
        c.resident().collect()
    }

    #[test]
    fn textbook_examples() {
        let (a, b, c) = (0, 1, 2);
        assert_eq!(run(Baseline::Lru, 2, &[a, b, a, c]), vec![a, c]);
        assert_eq!(run(Baseline::Lfu, 2, &[a, a, b, c]), vec![a, c]);
        assert_eq!(run(Baseline::Mru, 2, &[a, b, c]), vec![a, c]);
        assert_eq!(run(Baseline::Fifo, 2, &[a, b, a, c]), vec![b, c]);
    }

    #[test]
    fn rr_is_reproducible_and_bounded() {
        let seq: Vec<ContentId> = (0..200).map(|i| (i * 37) % 23).collect();
        let x = run(Baseline::Rr, 5, &seq);
        assert_eq!(x, run(Baseline::Rr, 5, &seq));
        assert_eq!(x.len(), 5);
    }

    #[test]
    fn admit_by_value_contract() {
        let mut c = CacheState::new(2);
        let p = |f: ContentId| [0.3, 0.01, 0.05, 0.001, 0.3][f];
        assert_eq!(admit_by_value(&mut c, 0, p), AccessOutcome::Admitted { evicted: None });
        assert_eq!(admit_by_value(&mut c, 1, p), AccessOutcome::Admitted { evicted: None });
        assert_eq!(admit_by_value(&mut c, 3, p), AccessOutcome::Rejected);
        assert_eq!(admit_by_value(&mut c, 2, p), AccessOutcome::Admitted { evicted: Some(1) });
        // Equal values never displace a resident.
        let mut c = CacheState::new(1);
        admit_by_value(&mut c, 0, p);
        assert_eq!(admit_by_value(&mut c, 4, p), AccessOutcome::Rejected);
    }

    #[test]
    fn admit_by_value_evicts_larger_id_on_ties() {
        let mut c = CacheState::new(2);
        let v = |f: ContentId| if f == 9 { 1.0 } else { 0.5 };
        admit_by_value(&mut c, 3, v);
        admit_by_value(&mut c, 7, v);
        assert_eq!(admit_by_value(&mut c, 9, v), AccessOutcome::Admitted { evicted: Some(7) });
    }

    // Reference models written independently as plain lists/counters.
    fn lru_model(cap: usize, seq: &[ContentId]) -> Vec<ContentId> {
        let mut list: VecDeque<ContentId> = VecDeque::new(); // front = most recent
        for &f in seq {
            if let Some(pos) = list.iter().position(|&x| x == f) {
                list.remove(pos);
            } else if list.len() == cap {
                list.pop_back();
            }
            list.push_front(f);
        }
        let mut v: Vec<_> = list.into_iter().collect();
        v.sort_unstable();
        v
    }

    fn fifo_model(cap: usize, seq: &[ContentId]) -> Vec<ContentId> {
        let mut q: VecDeque<ContentId> = VecDeque::new();
        for &f in seq {
            if !q.contains(&f) {
                if q.len() == cap {
                    q.pop_front();
                }
                q.push_back(f);
            }
        }
        let mut v: Vec<_> = q.into_iter().collect();
        v.sort_unstable();
        v
    }

    fn lfu_model(cap: usize, seq: &[ContentId]) -> Vec<ContentId> {
        // (content, count, last use)
        let mut items: Vec<(ContentId, u64, usize)> = Vec::new();
        for (t, &f) in seq.iter().enumerate() {
            if let Some(it) = items.iter_mut().find(|it| it.0 == f) {
                it.1 += 1;
                it.2 = t;
                continue;
            }
            if items.len() == cap {
                let (idx, _) = items
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, it)| (it.1, it.2))
                    .unwrap();
                items.remove(idx);
            }
            items.push((f, 1, t));
        }
        let mut v: Vec<_> = items.into_iter().map(|it| it.0).collect();
        v.sort_unstable();
        v
    }

    proptest! {
        #[test]
        fn matches_reference_models(
            seq in prop::collection::vec(0usize..40, 0..400),
            cap in prop::sample::select(vec![1usize, 2, 20]),
        ) {
            prop_assert_eq!(run(Baseline::Lru, cap, &seq), lru_model(cap, &seq));
            prop_assert_eq!(run(Baseline::Fifo, cap, &seq), fifo_model(cap, &seq));
            prop_assert_eq!(run(Baseline::Lfu, cap, &seq), lfu_model(cap, &seq));
            for p in [Baseline::Rr, Baseline::Mru] {
                prop_assert!(run(p, cap, &seq).len() <= cap);
            }
        }
    }
}

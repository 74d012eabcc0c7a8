//! Memoizing wrapper around any scorer.
//!
//! Identical (premise, hypothesis) pairs are sent to the backend once per
//! cache lifetime. Concurrent requests for a pair that is already in flight
//! wait for the owning request instead of issuing a second call. Failed
//! entries are evicted so a later request can retry them.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::ScoreError;
use crate::prompting::PairInput;
use crate::scoring::{ScoreRequest, ScoreResponse, Scorer, ScorerInfo};

type Key = (String, String);
type Slot = Arc<OnceLock<Result<(f64, u64), ScoreError>>>;

pub struct CachedScorer<S> {
    inner: S,
    slots: Mutex<HashMap<Key, Slot>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

enum Source {
    Owned(Slot),
    Shared(Slot),
    /// Same pair earlier in this batch.
    Repeat(usize),
}

impl<S: Scorer> CachedScorer<S> {
    pub fn new(inner: S) -> Self {
        CachedScorer {
            inner,
            slots: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn evict(&self, failed: &[(Key, Slot)]) {
        let mut slots = self.slots.lock().expect("cache lock");
        for (key, slot) in failed {
            if slots.get(key).is_some_and(|s| Arc::ptr_eq(s, slot)) {
                slots.remove(key);
            }
        }
    }
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn info(&self) -> ScorerInfo {
        self.inner.info()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
        request.check_size(self.inner.info().max_batch)?;

        let mut sources = Vec::with_capacity(request.len());
        let mut owned: Vec<(Key, Slot)> = Vec::new();
        {
            let mut slots = self.slots.lock().expect("cache lock");
            let mut seen: HashMap<&PairInput, usize> = HashMap::new();
            for (i, pair) in request.pairs.iter().enumerate() {
                if let Some(&first) = seen.get(pair) {
                    sources.push(Source::Repeat(first));
                    continue;
                }
                seen.insert(pair, i);
                let key = (pair.premise.clone(), pair.hypothesis.clone());
                match slots.get(&key) {
                    Some(slot) => sources.push(Source::Shared(Arc::clone(slot))),
                    None => {
                        let slot: Slot = Arc::new(OnceLock::new());
                        slots.insert(key.clone(), Arc::clone(&slot));
                        owned.push((key, Arc::clone(&slot)));
                        sources.push(Source::Owned(slot));
                    }
                }
            }
        }

        if !owned.is_empty() {
            let sub = ScoreRequest::new(
                owned
                    .iter()
                    .map(|((p, h), _)| PairInput::new(p.clone(), h.clone()))
                    .collect(),
            );
            let result = self
                .inner
                .score_batch(&sub)
                .and_then(|r| r.validate(sub.len()).map(|_| r));
            match result {
                Ok(resp) => {
                    for (i, (_, slot)) in owned.iter().enumerate() {
                        let _ = slot.set(Ok((resp.scores[i], resp.token_counts[i])));
                    }
                    self.misses.fetch_add(owned.len() as u64, Ordering::Relaxed);
                }
                Err(e) => {
                    for (_, slot) in &owned {
                        let _ = slot.set(Err(e.clone()));
                    }
                    self.evict(&owned);
                    return Err(e);
                }
            }
        }

        let mut scores = Vec::with_capacity(request.len());
        let mut token_counts = Vec::with_capacity(request.len());
        let mut cache_hits = Vec::with_capacity(request.len());
        for source in &sources {
            let (value, hit) = match source {
                Source::Owned(slot) => (slot.wait().clone()?, false),
                Source::Shared(slot) => (slot.wait().clone()?, true),
                Source::Repeat(first) => ((scores[*first], token_counts[*first]), true),
            };
            scores.push(value.0);
            token_counts.push(value.1);
            cache_hits.push(hit);
        }
        self.hits.fetch_add(
            cache_hits.iter().filter(|&&h| h).count() as u64,
            Ordering::Relaxed,
        );
        Ok(ScoreResponse {
            scores,
            token_counts,
            model_id: self.inner.info().model_id,
            cache_hits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[derive(Default)]
    struct Counting {
        calls: AtomicUsize,
        pairs: AtomicUsize,
        fail_next: std::sync::atomic::AtomicBool,
    }

    impl Scorer for Counting {
        fn info(&self) -> ScorerInfo {
            ScorerInfo {
                max_batch: 16,
                max_sequence_length: None,
                model_id: "counting".into(),
            }
        }

        fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScoreError> {
            if self.fail_next.swap(false, Ordering::SeqCst) {
                return Err(ScoreError::Transport {
                    message: "down".into(),
                    retryable: true,
                });
            }
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.pairs.fetch_add(request.len(), Ordering::SeqCst);
            Ok(ScoreResponse {
                scores: request
                    .pairs
                    .iter()
                    .map(|p| (p.premise.len() % 10) as f64 / 10.0)
                    .collect(),
                token_counts: request
                    .pairs
                    .iter()
                    .map(|p| p.premise.len() as u64)
                    .collect(),
                model_id: "counting".into(),
                cache_hits: vec![],
            })
        }
    }

    fn req(premises: &[&str]) -> ScoreRequest {
        ScoreRequest::new(premises.iter().map(|p| PairInput::new(*p, "h")).collect())
    }

    #[test]
    fn repeated_pair_hits_cache() {
        let cached = CachedScorer::new(Counting::default());
        let a = cached.score_batch(&req(&["abc"])).unwrap();
        let b = cached.score_batch(&req(&["abc"])).unwrap();
        assert_eq!(cached.inner().calls.load(Ordering::SeqCst), 1);
        assert_eq!(a.scores, b.scores);
        assert!(!a.is_cache_hit(0));
        assert!(b.is_cache_hit(0));
        assert_eq!((cached.hits(), cached.misses()), (1, 1));
    }

    #[test]
    fn distinct_pairs_all_forwarded() {
        let cached = CachedScorer::new(Counting::default());
        let r = cached.score_batch(&req(&["a", "bb", "ccc"])).unwrap();
        assert_eq!(cached.inner().pairs.load(Ordering::SeqCst), 3);
        assert_eq!(r.scores, vec![0.1, 0.2, 0.3]);
        assert_eq!(cached.hits(), 0);
    }

    #[test]
    fn duplicates_within_a_batch_are_sent_once() {
        let cached = CachedScorer::new(Counting::default());
        let r = cached.score_batch(&req(&["a", "b", "a"])).unwrap();
        assert_eq!(cached.inner().pairs.load(Ordering::SeqCst), 2);
        assert_eq!(r.cache_hits, vec![false, false, true]);
        assert_eq!(r.scores[0], r.scores[2]);
    }

    #[test]
    fn failures_are_not_cached() {
        let cached = CachedScorer::new(Counting::default());
        cached.inner().fail_next.store(true, Ordering::SeqCst);
        assert!(cached.score_batch(&req(&["x"])).is_err());
        assert!(cached.is_empty());
        let r = cached.score_batch(&req(&["x"])).unwrap();
        assert!(!r.is_cache_hit(0));
    }

    #[test]
    fn concurrent_requests_share_entries() {
        let cached = Arc::new(CachedScorer::new(Counting::default()));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let c = Arc::clone(&cached);
                std::thread::spawn(move || {
                    for i in 0..50 {
                        let p = format!("premise-{}", i % 10);
                        let r = c.score_batch(&req(&[p.as_str()])).unwrap();
                        assert_eq!(r.scores[0], (p.len() % 10) as f64 / 10.0);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(cached.inner().pairs.load(Ordering::SeqCst), 10);
        assert_eq!(cached.hits() + cached.misses(), 400);
    }
}

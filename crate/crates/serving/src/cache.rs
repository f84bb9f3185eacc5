//! L1 response cache: exact-key, TTL-bounded, LRU-evicted.
//!
//! The key covers everything that affects the reply: model id, canonical
//! sampling params, and the prompt hash. Only successful generations are
//! cached; errors must stay re-runnable.

use grev_core::hash::sha256_parts;
use std::collections::HashMap;

/// L1 key: hash over (model_id, canonical params, prompt_hash), each part
/// length-delimited so field boundaries cannot be confused.
pub fn l1_key(model_id: &str, params_canonical: &str, prompt_hash: &str) -> String {
    sha256_parts(&[model_id.as_bytes(), params_canonical.as_bytes(), prompt_hash.as_bytes()])
}

struct Slot {
    value: String,
    inserted_s: f64,
    tick: u64,
}

pub struct L1Cache {
    ttl_s: f64,
    capacity: usize,
    tick: u64,
    map: HashMap<String, Slot>,
}

impl L1Cache {
    pub fn new(capacity: usize, ttl_s: f64) -> Self {
        Self { ttl_s, capacity: capacity.max(1), tick: 0, map: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&mut self, key: &str, now_s: f64) -> Option<String> {
        let expired = match self.map.get(key) {
            Some(slot) => now_s - slot.inserted_s > self.ttl_s,
            None => return None,
        };
        if expired {
            self.map.remove(key);
            return None;
        }
        self.tick += 1;
        let slot = self.map.get_mut(key).expect("checked above");
        slot.tick = self.tick;
        Some(slot.value.clone())
    }

    pub fn put(&mut self, key: String, value: String, now_s: f64) {
        self.tick += 1;
        if self.map.len() >= self.capacity && !self.map.contains_key(&key) {
            // Evict the least recently used entry.
            if let Some(lru) = self
                .map
                .iter()
                .min_by(|a, b| a.1.tick.cmp(&b.1.tick))
                .map(|(k, _)| k.clone())
            {
                self.map.remove(&lru);
            }
        }
        self.map.insert(key, Slot { value, inserted_s: now_s, tick: self.tick });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_sensitive_to_every_part() {
        let base = l1_key("m", "{}", "p");
        assert_ne!(base, l1_key("m2", "{}", "p"));
        assert_ne!(base, l1_key("m", "{\"t\":1}", "p"));
        assert_ne!(base, l1_key("m", "{}", "q"));
        // Field boundaries are delimited: shifting a byte across them changes
        // nothing into a collision.
        assert_ne!(l1_key("ab", "c", "d"), l1_key("a", "bc", "d"));
    }

    #[test]
    fn ttl_expires_entries() {
        let mut c = L1Cache::new(10, 5.0);
        c.put("k".into(), "v".into(), 100.0);
        assert_eq!(c.get("k", 104.9).as_deref(), Some("v"));
        assert_eq!(c.get("k", 105.1), None);
        assert_eq!(c.len(), 0, "expired entry is dropped");
    }

    #[test]
    fn capacity_evicts_least_recently_used() {
        let mut c = L1Cache::new(2, 1_000.0);
        c.put("a".into(), "1".into(), 0.0);
        c.put("b".into(), "2".into(), 0.0);
        assert!(c.get("a", 1.0).is_some()); // refresh a; b is now LRU
        c.put("c".into(), "3".into(), 2.0);
        assert_eq!(c.len(), 2);
        assert!(c.get("b", 3.0).is_none(), "b evicted");
        assert!(c.get("a", 3.0).is_some());
        assert!(c.get("c", 3.0).is_some());
    }
}

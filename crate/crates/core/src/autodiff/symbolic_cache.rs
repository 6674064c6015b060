use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use crate::sparse::{Pattern, Result, SymbolicCholesky};

/// Symbolic Cholesky analyses keyed by sparsity pattern.
///
/// Parameter changes never change the patterns of the assembled matrices,
/// so ordering and elimination tree are computed once per distinct pattern.
#[derive(Debug, Default)]
pub struct SymbolicCache {
    entries: Mutex<HashMap<u64, Vec<Arc<SymbolicCholesky>>>>,
}

impl SymbolicCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_analyze(&self, pattern: &Arc<Pattern>) -> Result<Arc<SymbolicCholesky>> {
        let mut h = DefaultHasher::new();
        pattern.hash(&mut h);
        let key = h.finish();
        let mut map = self.entries.lock().expect("symbolic cache poisoned");
        let bucket = map.entry(key).or_default();
        if let Some(s) = bucket.iter().find(|s| s.accepts(pattern)) {
            return Ok(s.clone());
        }
        let s = Arc::new(SymbolicCholesky::analyze(pattern)?);
        bucket.push(s.clone());
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("symbolic cache poisoned").values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

use std::fmt;
use std::str::FromStr;

/// A place data can reside: a cache level (1-based, `Cache(1)` is L1) or
/// main memory. Ordered from the core outward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LevelRef {
    Cache(usize),
    Memory,
}

impl LevelRef {
    pub const L1: LevelRef = LevelRef::Cache(1);

    /// Position in the hierarchy with memory placed after `cache_count` caches.
    pub fn depth(self, cache_count: usize) -> usize {
        match self {
            LevelRef::Cache(k) => k,
            LevelRef::Memory => cache_count + 1,
        }
    }

    pub fn is_memory(self) -> bool {
        self == LevelRef::Memory
    }
}

impl fmt::Display for LevelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelRef::Cache(k) => write!(f, "L{k}"),
            LevelRef::Memory => f.write_str("MEM"),
        }
    }
}

impl FromStr for LevelRef {
    type Err = String;

    /// Accepts `L<k>` and `MEM`/`Memory`, case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("mem") || t.eq_ignore_ascii_case("memory") {
            return Ok(LevelRef::Memory);
        }
        match t.as_bytes().first() {
            Some(b'L' | b'l') => t[1..]
                .parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .map(LevelRef::Cache)
                .ok_or_else(|| format!("unknown level `{s}`")),
            _ => Err(format!("unknown level `{s}`")),
        }
    }
}

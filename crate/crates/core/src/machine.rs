//! Machine descriptors: the hardware parameters the model consumes.
//!
//! A descriptor is parsed from a line-oriented `key = value` file (see
//! [`parse_machine`]) and is immutable afterwards.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::level::LevelRef;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("duplicate level `{0}`")]
    DuplicateLevel(String),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
}

fn invalid(key: &str, reason: impl Into<String>) -> MachineError {
    MachineError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// A positive decimal quantity that keeps the text it was written as.
///
/// Serialization writes the original text back, so clock values never drift
/// through a parse/serialize cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Decimal {
    text: String,
    value: f64,
    /// Exact value as `mantissa / 10^scale`.
    mantissa: u64,
    scale: u32,
}

impl Decimal {
    pub fn value(&self) -> f64 {
        self.value
    }

    /// `(numerator, denominator)` of the exact value.
    pub fn ratio(&self) -> (u128, u128) {
        (u128::from(self.mantissa), 10u128.pow(self.scale))
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl FromStr for Decimal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if int.is_empty() || !digits_ok(int) || !digits_ok(frac) || s.ends_with('.') {
            return Err(format!("`{s}` is not a plain decimal number"));
        }
        let too_long = || format!("`{s}` has too many digits");
        let scale = u32::try_from(frac.len()).map_err(|_| too_long())?;
        let mantissa: u64 = format!("{int}{frac}").parse().map_err(|_| too_long())?;
        if scale > 18 {
            return Err(too_long());
        }
        if mantissa == 0 {
            return Err("must be positive".into());
        }
        Ok(Decimal {
            text: s.to_string(),
            value: mantissa as f64 / 10f64.powi(scale as i32),
            mantissa,
            scale,
        })
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Per-cycle load/store throughput of the core/L1 interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortModel {
    pub load_bytes_per_cycle: u32,
    pub store_bytes_per_cycle: u32,
    /// `true`: a load and a store may issue in the same cycle.
    /// `false`: loads and stores compete for the same issue slots.
    pub concurrent_load_store: bool,
}

impl PortModel {
    /// One 16-byte load and one 16-byte store per cycle.
    pub const INTEL: PortModel = PortModel {
        load_bytes_per_cycle: 16,
        store_bytes_per_cycle: 16,
        concurrent_load_store: true,
    };

    /// Either two 16-byte loads or two 8-byte stores per cycle.
    pub const AMD: PortModel = PortModel {
        load_bytes_per_cycle: 32,
        store_bytes_per_cycle: 16,
        concurrent_load_store: false,
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheLevel {
    pub name: String,
    pub capacity_bytes: u64,
    /// Width of the bus toward the next-closer-to-core level. `None` for L1,
    /// whose bandwidth lives in the [`PortModel`].
    pub link_bytes_per_cycle: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryDescriptor {
    pub bytes_per_clock: u32,
    pub clock_ghz: Decimal,
}

impl MemoryDescriptor {
    pub fn bandwidth_gbs(&self) -> f64 {
        f64::from(self.bytes_per_clock) * self.clock_ghz.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataPathPolicy {
    /// Every level holds the lines of the levels above it; misses walk the
    /// hierarchy one boundary at a time.
    InclusiveHierarchical,
    /// Outer levels only hold victims; fills go straight into L1 over a
    /// shared bus and evictions cascade outward.
    ExclusiveDirectLoad,
}

impl DataPathPolicy {
    pub fn keyword(self) -> &'static str {
        match self {
            DataPathPolicy::InclusiveHierarchical => "inclusive",
            DataPathPolicy::ExclusiveDirectLoad => "exclusive_direct_load",
        }
    }
}

impl FromStr for DataPathPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inclusive" => Ok(DataPathPolicy::InclusiveHierarchical),
            "exclusive_direct_load" => Ok(DataPathPolicy::ExclusiveDirectLoad),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineDescriptor {
    pub name: String,
    pub clock_ghz: Decimal,
    pub cache_line_bytes: u32,
    pub port_model: PortModel,
    /// Cache levels, innermost first. `levels[0]` is L1.
    pub levels: Vec<CacheLevel>,
    pub memory: MemoryDescriptor,
    pub policy: DataPathPolicy,
}

impl MachineDescriptor {
    pub fn clock(&self) -> f64 {
        self.clock_ghz.value()
    }

    pub fn cache_count(&self) -> usize {
        self.levels.len()
    }

    /// All levels data can reside in, innermost first, ending with memory.
    pub fn level_refs(&self) -> Vec<LevelRef> {
        (1..=self.levels.len())
            .map(LevelRef::Cache)
            .chain(std::iter::once(LevelRef::Memory))
            .collect()
    }

    pub fn contains(&self, level: LevelRef) -> bool {
        match level {
            LevelRef::Cache(k) => k >= 1 && k <= self.levels.len(),
            LevelRef::Memory => true,
        }
    }

    pub fn cache(&self, level: LevelRef) -> Option<&CacheLevel> {
        match level {
            LevelRef::Cache(k) if k >= 1 => self.levels.get(k - 1),
            _ => None,
        }
    }

    pub fn level_name(&self, level: LevelRef) -> String {
        match self.cache(level) {
            Some(c) => c.name.clone(),
            None => level.to_string(),
        }
    }

    /// Capacity in bytes of a cache level, `None` for memory.
    pub fn capacity(&self, level: LevelRef) -> Option<u64> {
        self.cache(level).map(|c| c.capacity_bytes)
    }

    /// Bytes per CPU cycle across the boundary between `level` and the
    /// next-closer level. Memory's width is derived from its bandwidth.
    /// `None` for L1 and for levels outside the machine.
    pub fn boundary_bytes_per_cycle(&self, level: LevelRef) -> Option<f64> {
        self.cycles_per_line(level)
            .map(|cy| f64::from(self.cache_line_bytes) / cy)
    }

    /// Cycles to move one cache line across the boundary at `level`.
    pub fn cycles_per_line(&self, level: LevelRef) -> Option<f64> {
        match level {
            LevelRef::Memory => Some(memory_cycles_per_cacheline(self)),
            LevelRef::Cache(_) => self
                .cache(level)
                .and_then(|c| c.link_bytes_per_cycle)
                .map(|w| f64::from(self.cache_line_bytes) / f64::from(w)),
        }
    }

    /// Resolves a level label: `L<k>`, a cache name from the descriptor, or
    /// `MEM`/`Memory`, all case-insensitive.
    pub fn resolve_level(&self, label: &str) -> Option<LevelRef> {
        let label = label.trim();
        if let Ok(level) = label.parse::<LevelRef>() {
            return self.contains(level).then_some(level);
        }
        self.levels
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(label))
            .map(|i| LevelRef::Cache(i + 1))
    }

    fn validate(&self) -> Result<(), MachineError> {
        if self.name.is_empty() {
            return Err(invalid("name", "empty"));
        }
        if self.cache_line_bytes == 0 {
            return Err(invalid("cache_line_bytes", "must be positive"));
        }
        if self.port_model.load_bytes_per_cycle == 0 {
            return Err(invalid("port.load_bytes_per_cycle", "must be positive"));
        }
        if self.port_model.store_bytes_per_cycle == 0 {
            return Err(invalid("port.store_bytes_per_cycle", "must be positive"));
        }
        if self.memory.bytes_per_clock == 0 {
            return Err(invalid("memory.bytes_per_clock", "must be positive"));
        }
        if self.levels.is_empty() {
            return Err(MachineError::MissingKey("level.1.name".into()));
        }
        for (i, level) in self.levels.iter().enumerate() {
            let k = i + 1;
            if level.capacity_bytes == 0 {
                return Err(invalid(&format!("level.{k}.capacity_kb"), "must be positive"));
            }
            let link_key = format!("level.{k}.link_bytes_per_cycle");
            match (k, level.link_bytes_per_cycle) {
                (1, Some(_)) => {
                    return Err(invalid(&link_key, "L1 bandwidth is given by the port model"))
                }
                (1, None) => {}
                (_, None) => return Err(MachineError::MissingKey(link_key)),
                (_, Some(0)) => return Err(invalid(&link_key, "must be positive")),
                (_, Some(w)) if w > self.cache_line_bytes => {
                    return Err(invalid(&link_key, "wider than a cache line"))
                }
                _ => {}
            }
            if i > 0 && level.capacity_bytes <= self.levels[i - 1].capacity_bytes {
                return Err(invalid(
                    &format!("level.{k}.capacity_kb"),
                    "capacity must grow with level depth",
                ));
            }
            if self.levels[..i].iter().any(|o| o.name.eq_ignore_ascii_case(&level.name)) {
                return Err(MachineError::DuplicateLevel(level.name.clone()));
            }
        }
        Ok(())
    }

    /// Canonical machine-file text: fixed key order, no comments.
    pub fn to_machine_file(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| out.push_str(&format!("{k} = {v}\n"));
        kv("name", &self.name);
        kv("clock_ghz", &self.clock_ghz);
        kv("cache_line_bytes", &self.cache_line_bytes);
        kv("port.load_bytes_per_cycle", &self.port_model.load_bytes_per_cycle);
        kv("port.store_bytes_per_cycle", &self.port_model.store_bytes_per_cycle);
        kv("port.concurrent_load_store", &self.port_model.concurrent_load_store);
        for (i, level) in self.levels.iter().enumerate() {
            let k = i + 1;
            kv(&format!("level.{k}.name"), &level.name);
            kv(&format!("level.{k}.capacity_kb"), &(level.capacity_bytes / 1024));
            if let Some(w) = level.link_bytes_per_cycle {
                kv(&format!("level.{k}.link_bytes_per_cycle"), &w);
            }
        }
        kv("memory.bytes_per_clock", &self.memory.bytes_per_clock);
        kv("memory.clock_ghz", &self.memory.clock_ghz);
        kv("policy", &self.policy.keyword());
        out
    }
}

/// CPU cycles to move one cache line across the memory bus.
///
/// Evaluated as one exact integer ratio so values such as 12 come out exact.
pub fn memory_cycles_per_cacheline(m: &MachineDescriptor) -> f64 {
    let (clock_num, clock_den) = m.clock_ghz.ratio();
    let (mem_num, mem_den) = m.memory.clock_ghz.ratio();
    let num = u128::from(m.cache_line_bytes) * clock_num * mem_den;
    let den = u128::from(m.memory.bytes_per_clock) * mem_num * clock_den;
    num as f64 / den as f64
}

/// Parses machine-file text into a validated descriptor.
///
/// Lines are `key = value`; `#` starts a comment; blank lines are ignored.
/// Unknown and repeated keys are errors.
pub fn parse_machine(text: &str) -> Result<MachineDescriptor, MachineError> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(MachineError::Syntax { line: n + 1 })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(MachineError::Syntax { line: n + 1 });
        }
        if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(MachineError::DuplicateKey(key.to_string()));
        }
    }

    let mut fields = Fields { entries };
    let name = fields.take("name")?;
    let clock_ghz = fields.parse::<Decimal>("clock_ghz")?;
    let cache_line_bytes = fields.parse::<u32>("cache_line_bytes")?;
    let port_model = PortModel {
        load_bytes_per_cycle: fields.parse("port.load_bytes_per_cycle")?,
        store_bytes_per_cycle: fields.parse("port.store_bytes_per_cycle")?,
        concurrent_load_store: fields.parse("port.concurrent_load_store")?,
    };

    let mut levels = Vec::new();
    for k in 1.. {
        let name_key = format!("level.{k}.name");
        if !fields.entries.contains_key(&name_key) {
            break;
        }
        let name = fields.take(&name_key)?;
        let capacity_kb: u64 = fields.parse(&format!("level.{k}.capacity_kb"))?;
        let link_key = format!("level.{k}.link_bytes_per_cycle");
        let link_bytes_per_cycle = if fields.entries.contains_key(&link_key) {
            Some(fields.parse::<u32>(&link_key)?)
        } else {
            None
        };
        levels.push(CacheLevel {
            name,
            capacity_bytes: capacity_kb * 1024,
            link_bytes_per_cycle,
        });
    }

    let memory = MemoryDescriptor {
        bytes_per_clock: fields.parse("memory.bytes_per_clock")?,
        clock_ghz: fields.parse("memory.clock_ghz")?,
    };
    let policy = fields.parse::<DataPathPolicy>("policy")?;

    if let Some(key) = fields.entries.keys().next() {
        // a level block past a gap shows up here as an unknown key
        return Err(MachineError::UnknownKey(key.clone()));
    }

    let machine = MachineDescriptor {
        name,
        clock_ghz,
        cache_line_bytes,
        port_model,
        levels,
        memory,
        policy,
    };
    machine.validate()?;
    Ok(machine)
}

struct Fields {
    entries: BTreeMap<String, String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Result<String, MachineError> {
        self.entries
            .remove(key)
            .ok_or_else(|| MachineError::MissingKey(key.to_string()))
    }

    fn parse<T>(&mut self, key: &str) -> Result<T, MachineError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let raw = self.take(key)?;
        raw.parse::<T>().map_err(|e| invalid(key, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn shanghai_descriptor() {
        let m = bundled::machine("shanghai").unwrap();
        assert_eq!(m.clock(), 2.4);
        assert_eq!(m.levels.len(), 3);
        assert_eq!(m.levels[0].capacity_bytes, 64 * 1024);
        assert_eq!(m.levels[1].capacity_bytes, 512 * 1024);
        assert_eq!(m.levels[2].capacity_bytes, 6 * 1024 * 1024);
        assert!((m.memory.bandwidth_gbs() - 12.8).abs() < 1e-12);
        assert_eq!(m.policy, DataPathPolicy::ExclusiveDirectLoad);
        assert_eq!(m.port_model, PortModel::AMD);
    }

    #[test]
    fn core2_has_no_l3() {
        let m = bundled::machine("core2").unwrap();
        assert_eq!(m.levels.len(), 2);
        assert_eq!(m.levels[0].capacity_bytes, 32 * 1024);
        assert_eq!(m.levels[1].capacity_bytes, 6 * 1024 * 1024);
        assert_eq!(m.policy, DataPathPolicy::InclusiveHierarchical);
        assert_eq!(m.resolve_level("L3"), None);
        assert_eq!(m.resolve_level("mem"), Some(LevelRef::Memory));
    }

    #[test]
    fn nehalem_memory_bandwidth() {
        let m = bundled::machine("nehalem").unwrap();
        assert!((m.memory.bandwidth_gbs() - 25.6).abs() < 1e-6);
        assert_eq!(m.port_model, PortModel::INTEL);
        assert_eq!(m.policy, DataPathPolicy::InclusiveHierarchical);
    }

    #[test]
    fn memory_cycles_hand_arithmetic() {
        // 64 B * clock / (bytes per mem clock * mem clock)
        let cy = |n| memory_cycles_per_cacheline(&bundled::machine(n).unwrap());
        assert_eq!(cy("shanghai"), 12.0);
        assert!((cy("core2") - 14.15).abs() < 1e-9);
        assert!((cy("nehalem") - 6.675).abs() < 5e-4);
    }

    #[test]
    fn bundled_round_trip() {
        for name in bundled::MACHINE_NAMES {
            let m = bundled::machine(name).unwrap();
            let text = m.to_machine_file();
            let again = parse_machine(&text).unwrap();
            assert_eq!(m, again);
            assert_eq!(text, again.to_machine_file());
        }
    }

    fn core2_text() -> String {
        bundled::machine("core2").unwrap().to_machine_file()
    }

    #[test]
    fn rejects_unknown_key() {
        let text = core2_text() + "turbo = yes\n";
        assert_eq!(
            parse_machine(&text),
            Err(MachineError::UnknownKey("turbo".into()))
        );
    }

    #[test]
    fn rejects_missing_key() {
        let text = core2_text().replace("clock_ghz = 2.83\n", "");
        assert_eq!(
            parse_machine(&text),
            Err(MachineError::MissingKey("clock_ghz".into()))
        );
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            ("clock_ghz = 2.83", "clock_ghz = 0"),
            ("clock_ghz = 2.83", "clock_ghz = 2.83GHz"),
            ("clock_ghz = 2.83", "clock_ghz = -2.83"),
            ("clock_ghz = 2.83", "clock_ghz = 1e3"),
            ("policy = inclusive", "policy = victim"),
            ("port.load_bytes_per_cycle = 16", "port.load_bytes_per_cycle = 0"),
            ("level.2.link_bytes_per_cycle = 32", "level.2.link_bytes_per_cycle = 128"),
            ("level.2.capacity_kb = 6144", "level.2.capacity_kb = 16"),
        ];
        for (from, to) in cases {
            let text = core2_text().replace(from, to);
            assert!(
                matches!(parse_machine(&text), Err(MachineError::InvalidValue { .. })),
                "{to}"
            );
        }
    }

    #[test]
    fn rejects_duplicate_level_and_key() {
        let text = core2_text().replace("level.2.name = L2", "level.2.name = l1");
        assert_eq!(
            parse_machine(&text),
            Err(MachineError::DuplicateLevel("l1".into()))
        );
        let text = core2_text() + "name = again\n";
        assert_eq!(
            parse_machine(&text),
            Err(MachineError::DuplicateKey("name".into()))
        );
    }

    #[test]
    fn level_gap_is_rejected() {
        let text = core2_text().replace("level.2.", "level.3.");
        assert!(matches!(
            parse_machine(&text),
            Err(MachineError::UnknownKey(k)) if k.starts_with("level.3")
        ));
    }

    #[test]
    fn missing_link_width_beyond_l1() {
        let text = core2_text().replace("level.2.link_bytes_per_cycle = 32\n", "");
        assert_eq!(
            parse_machine(&text),
            Err(MachineError::MissingKey("level.2.link_bytes_per_cycle".into()))
        );
    }
}

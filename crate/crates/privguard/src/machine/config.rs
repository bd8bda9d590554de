use crate::ir::{Program, SectionAttr};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    /// Kernel code and other immutable kernel bytes.
    CodeRo,
    /// Kernel globals and stack.
    DataRw,
    /// Kernel constants (jump tables, strings).
    DataRo,
    /// Application-dependent kernel data, such as the task structures.
    Param,
    /// Memory user tasks may legitimately modify.
    Unprotected,
}

impl RegionKind {
    pub fn is_fixed(self) -> bool {
        matches!(self, RegionKind::CodeRo | RegionKind::DataRw | RegionKind::DataRo)
    }

    pub fn is_read_only(self) -> bool {
        matches!(self, RegionKind::CodeRo | RegionKind::DataRo)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub start: u64,
    /// Inclusive.
    pub end: u64,
    pub kind: RegionKind,
}

impl Region {
    pub fn contains(&self, a: u64) -> bool {
        a >= self.start && a <= self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mmio {
    pub addr: u64,
    pub size: u8,
    pub values: Vec<u64>,
}

/// Bit positions of the MPU register fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpuLayout {
    pub base_shift: u8,
    pub limit_mask: u64,
    pub read: u64,
    pub write: u64,
    pub exec: u64,
}

impl Default for MpuLayout {
    fn default() -> Self {
        MpuLayout { base_shift: 32, limit_mask: 0xFFFF_FFF8, read: 1, write: 2, exec: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Exact(u64),
    Range([u64; 2]),
}

impl ParamValue {
    pub fn bounds(self) -> (u64, u64) {
        match self {
            ParamValue::Exact(v) => (v, v),
            ParamValue::Range([lo, hi]) => (lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    #[serde(default = "default_addr_width")]
    pub addr_width: u8,
    pub kernel_entry: u64,
    /// Index of the UNPRIVILEGED bit in `flags`.
    #[serde(default)]
    pub unprivileged_bit: u8,
    #[serde(default)]
    pub mpu: MpuLayout,
    #[serde(rename = "region", default)]
    pub regions: Vec<Region>,
    /// Inclusive code ranges executed only during boot.
    #[serde(default)]
    pub boot: Vec<[u64; 2]>,
    #[serde(default)]
    pub mmio: Vec<Mmio>,
    /// Inclusive range of interrupt numbers that may reach the kernel at runtime.
    #[serde(default = "default_interrupts")]
    pub interrupts: [u64; 2],
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

fn default_addr_width() -> u8 {
    32
}

fn default_interrupts() -> [u64; 2] {
    [1, super::irq::MAX]
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("machine config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("machine config: {0}")]
    Invalid(String),
}

impl MachineConfig {
    pub fn from_toml(text: &str) -> Result<MachineConfig, ConfigError> {
        let cfg: MachineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(8..=32).contains(&self.addr_width) {
            return bad(format!("addr_width {} outside 8..=32", self.addr_width));
        }
        if self.unprivileged_bit >= 32 {
            return bad("unprivileged_bit must index a 32-bit register".into());
        }
        let top = self.addr_mask();
        for (i, r) in self.regions.iter().enumerate() {
            if r.start > r.end || r.end > top {
                return bad(format!("region `{}` has an invalid range", r.name));
            }
            for o in &self.regions[..i] {
                if r.start <= o.end && o.start <= r.end {
                    return bad(format!("regions `{}` and `{}` overlap", o.name, r.name));
                }
            }
        }
        for m in &self.mmio {
            if !matches!(m.size, 1 | 2 | 4 | 8) || m.values.is_empty() {
                return bad(format!("mmio entry at {:#x} needs a size of 1/2/4/8 and values", m.addr));
            }
        }
        if self.interrupts[0] > self.interrupts[1] {
            return bad("empty interrupt range".into());
        }
        if let (Some(f), Some(l)) = (self.params.get("kernel_first_addr"), self.params.get("kernel_last_addr")) {
            let (f, l) = (f.bounds().0, l.bounds().0);
            for r in self.regions.iter().filter(|r| r.kind != RegionKind::Unprotected) {
                if r.start < f || r.end > l {
                    return bad(format!("protected region `{}` lies outside [kernel_first_addr, kernel_last_addr]", r.name));
                }
            }
        }
        Ok(())
    }

    /// Checks that every program section sits in a region of matching kind.
    pub fn check_program(&self, p: &Program) -> Result<(), ConfigError> {
        if p.addr_width != self.addr_width {
            return Err(ConfigError::Invalid(format!(
                "program address width {} differs from config {}",
                p.addr_width, self.addr_width
            )));
        }
        for s in &p.sections {
            let want = match s.attr {
                SectionAttr::CodeRo => RegionKind::CodeRo,
                SectionAttr::DataRw => RegionKind::DataRw,
                SectionAttr::DataRo => RegionKind::DataRo,
            };
            let ok = s.bytes.is_empty()
                || self.region_of(s.base).is_some_and(|r| r.kind == want && r.contains(s.end() - 1));
            if !ok {
                return Err(ConfigError::Invalid(format!("section `{}` is not inside a {:?} region", s.name, want)));
            }
        }
        Ok(())
    }

    pub fn addr_mask(&self) -> u64 {
        crate::ir::mask(self.addr_width)
    }

    pub fn unpriv_mask(&self) -> u64 {
        1 << self.unprivileged_bit
    }

    pub fn region_of(&self, a: u64) -> Option<&Region> {
        self.regions.iter().find(|r| r.contains(a))
    }

    pub fn kind_of(&self, a: u64) -> Option<RegionKind> {
        self.region_of(a).map(|r| r.kind)
    }

    pub fn is_boot(&self, pc: u64) -> bool {
        self.boot.iter().any(|[lo, hi]| pc >= *lo && pc <= *hi)
    }

    pub fn mmio_at(&self, a: u64) -> Option<&Mmio> {
        self.mmio.iter().find(|m| m.addr == a)
    }

    pub fn regions_of_kind(&self, k: RegionKind) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.kind == k)
    }

    pub fn in_kernel_code(&self, a: u64) -> bool {
        self.kind_of(a) == Some(RegionKind::CodeRo)
    }

    /// Bounds of the protected memory range `[kernel_first_addr, kernel_last_addr]`,
    /// falling back to the hull of the non-unprotected regions.
    pub fn protected_range(&self) -> Option<(u64, u64)> {
        if let (Some(f), Some(l)) = (self.params.get("kernel_first_addr"), self.params.get("kernel_last_addr")) {
            return Some((f.bounds().0, l.bounds().0));
        }
        let prot: Vec<_> = self.regions.iter().filter(|r| r.kind != RegionKind::Unprotected).collect();
        let lo = prot.iter().map(|r| r.start).min()?;
        let hi = prot.iter().map(|r| r.end).max()?;
        Some((lo, hi))
    }

    /// Region boundaries, used as widening thresholds.
    pub fn boundaries(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.regions.iter().flat_map(|r| [r.start, r.end]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
addr_width = 16
kernel_entry = 0x8000
interrupts = [1, 31]

[[region]]
name = "code"
start = 0x8000
end = 0x8fff
kind = "code-ro"

[[region]]
name = "tasks"
start = 0x4000
end = 0x4fff
kind = "param"

[[mmio]]
addr = 0x9000
size = 4
values = [1, 2, 3, 4]

[params]
nb_tasks = [1, 8]
kernel_first_addr = 0x4000
kernel_last_addr = 0xffff
"#;

    #[test]
    fn parses_and_queries() {
        let c = MachineConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.kind_of(0x8004), Some(RegionKind::CodeRo));
        assert_eq!(c.kind_of(0x100), None);
        assert_eq!(c.params["nb_tasks"].bounds(), (1, 8));
        assert_eq!(c.mmio_at(0x9000).unwrap().values.len(), 4);
        assert_eq!(c.protected_range(), Some((0x4000, 0xffff)));
        let again = MachineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_overlap() {
        let t = SAMPLE.replace("start = 0x4000", "start = 0x8800").replace("end = 0x4fff", "end = 0x9fff");
        assert!(MachineConfig::from_toml(&t).is_err());
    }
}

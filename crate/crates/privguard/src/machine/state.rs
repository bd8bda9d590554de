use crate::ir::{Program, Reg};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

const PAGE: u64 = 256;

/// Sparse byte memory; unwritten bytes read as zero.
#[derive(Clone, Debug, Default)]
pub struct Memory {
    pages: BTreeMap<u64, Box<[u8; PAGE as usize]>>,
}

impl Memory {
    pub fn new() -> Memory {
        Memory::default()
    }

    pub fn read_byte(&self, a: u64) -> u8 {
        self.pages.get(&(a / PAGE)).map_or(0, |p| p[(a % PAGE) as usize])
    }

    pub fn write_byte(&mut self, a: u64, v: u8) {
        let page = self.pages.entry(a / PAGE).or_insert_with(|| Box::new([0; PAGE as usize]));
        page[(a % PAGE) as usize] = v;
    }

    /// Little-endian read of `size` bytes; addresses wrap within `addr_mask`.
    pub fn read(&self, a: u64, size: u8, addr_mask: u64) -> u64 {
        (0..size as u64).fold(0, |acc, i| acc | (self.read_byte((a + i) & addr_mask) as u64) << (8 * i))
    }

    pub fn write(&mut self, a: u64, size: u8, v: u64, addr_mask: u64) {
        for i in 0..size as u64 {
            self.write_byte((a + i) & addr_mask, (v >> (8 * i)) as u8);
        }
    }

    pub fn write_bytes(&mut self, a: u64, bytes: &[u8]) {
        for (i, b) in bytes.iter().enumerate() {
            self.write_byte(a + i as u64, *b);
        }
    }

    pub fn read_slot(&self, a: u64, addr_mask: u64) -> [u8; 8] {
        let mut out = [0u8; 8];
        for (i, b) in out.iter_mut().enumerate() {
            *b = self.read_byte((a + i as u64) & addr_mask);
        }
        out
    }

    fn nonzero_pages(&self) -> impl Iterator<Item = (&u64, &Box<[u8; PAGE as usize]>)> {
        self.pages.iter().filter(|(_, p)| p.iter().any(|b| *b != 0))
    }
}

impl PartialEq for Memory {
    fn eq(&self, other: &Memory) -> bool {
        self.nonzero_pages().eq(other.nonzero_pages())
    }
}

impl Eq for Memory {}

impl Hash for Memory {
    fn hash<H: Hasher>(&self, h: &mut H) {
        for (k, p) in self.nonzero_pages() {
            k.hash(h);
            p.hash(h);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RegisterFile([u64; 16]);

impl RegisterFile {
    pub fn get(&self, r: Reg) -> u64 {
        self.0[r.index()]
    }

    /// Writes `v` truncated to the register's width.
    pub fn set(&mut self, r: Reg, v: u64) {
        self.0[r.index()] = v & crate::ir::mask(r.width());
    }

    pub fn swap(&mut self, a: Reg, b: Reg) {
        self.0.swap(a.index(), b.index());
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ConcreteState {
    pub mem: Memory,
    pub regs: RegisterFile,
}

impl ConcreteState {
    /// Memory holding the program's sections, all registers zero.
    pub fn from_program(p: &Program) -> ConcreteState {
        let mut s = ConcreteState::default();
        for sec in &p.sections {
            s.mem.write_bytes(sec.base, &sec.bytes);
        }
        s
    }

    pub fn pc(&self) -> u64 {
        self.regs.get(Reg::Pc)
    }
}

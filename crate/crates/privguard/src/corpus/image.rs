//! User images for the toy kernel: task descriptors in the parameter region,
//! one shared code segment and one stack per task in user memory.

use super::kernel::{KSTACK_LO, TASKS_BASE, TASK_SIZE, UNPRIVILEGED, USER_BASE};
use crate::ir::parse_program;
use crate::machine::Memory;
use std::io::{self, Read, Write};

const MAGIC: &[u8; 8] = b"PGIMAGE1";

pub const STACKS_BASE: u64 = USER_BASE + 0x1000;
const READ: u64 = 1;
const WRITE: u64 = 2;
const EXEC: u64 = 4;

/// A contiguous run of bytes loaded at `addr`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub addr: u64,
    pub bytes: Vec<u8>,
}

/// What gets loaded next to the kernel before boot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UserImage {
    pub chunks: Vec<Chunk>,
}

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("not a user image")]
    BadMagic,
    #[error("user image: {0}")]
    Io(#[from] io::Error),
    #[error("chunk at {0:#x} overflows the address space")]
    Overflow(u64),
}

impl UserImage {
    pub fn load_into(&self, mem: &mut Memory) {
        for c in &self.chunks {
            mem.write_bytes(c.addr, &c.bytes);
        }
    }

    pub fn byte_len(&self) -> usize {
        self.chunks.iter().map(|c| c.bytes.len()).sum()
    }

    /// Magic, chunk count (u32), then per chunk address (u64), length (u32)
    /// and bytes. Little-endian.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.chunks.len() as u32).to_le_bytes())?;
        for c in &self.chunks {
            w.write_all(&c.addr.to_le_bytes())?;
            w.write_all(&(c.bytes.len() as u32).to_le_bytes())?;
            w.write_all(&c.bytes)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<UserImage, ImageError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ImageError::BadMagic);
        }
        let mut n = [0u8; 4];
        r.read_exact(&mut n)?;
        let mut chunks = Vec::new();
        for _ in 0..u32::from_le_bytes(n) {
            let mut a = [0u8; 8];
            r.read_exact(&mut a)?;
            r.read_exact(&mut n)?;
            let addr = u64::from_le_bytes(a);
            let len = u32::from_le_bytes(n) as usize;
            if addr.checked_add(len as u64).is_none() {
                return Err(ImageError::Overflow(addr));
            }
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            chunks.push(Chunk { addr, bytes });
        }
        Ok(UserImage { chunks })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a vector");
        v
    }
}

/// Ways of breaking an otherwise correct image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corruption {
    /// The last task starts privileged.
    PrivilegedTask,
    /// The last task's `next` points into the kernel stack.
    NextIntoKernelStack,
    /// The last task's data segment is writable and covers the task table.
    WritableTaskTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageSpec {
    pub tasks: u32,
    /// Bytes per task stack, a multiple of 8.
    pub stack_size: u32,
    pub corruption: Option<Corruption>,
}

impl ImageSpec {
    pub fn new(tasks: u32) -> ImageSpec {
        ImageSpec { tasks, stack_size: 256, corruption: None }
    }
}

const USER_CODE: &str = "
.section ucode 0x40000 code-ro
code:
    assign r1, r1 + 1:32
    trap 0
    goto code
after_code:
";

/// `base << 32 | limit | rights`, the encoding the MPU expects.
pub fn segment(base: u64, limit: u64, rights: u64) -> u64 {
    (base << 32) | limit | rights
}

pub fn build_image(spec: &ImageSpec) -> UserImage {
    assert!(spec.tasks >= 1 && spec.stack_size >= 8 && spec.stack_size % 8 == 0);
    let code = parse_program(USER_CODE).expect("user code assembles");
    let code_addr = code.label("code").unwrap();
    let after_code = code.label("after_code").unwrap();
    let n = spec.tasks as u64;
    let last = n - 1;
    let mut table = Vec::with_capacity((n * TASK_SIZE) as usize);
    for i in 0..n {
        let stack = STACKS_BASE + i * spec.stack_size as u64;
        let stack_end = stack + spec.stack_size as u64;
        let corrupt = if i == last { spec.corruption } else { None };
        let flags = if corrupt == Some(Corruption::PrivilegedTask) { 0 } else { UNPRIVILEGED };
        let data = match corrupt {
            Some(Corruption::WritableTaskTable) => segment(TASKS_BASE, TASKS_BASE + n * TASK_SIZE, READ | WRITE),
            _ => segment(stack, stack_end, READ | WRITE),
        };
        let next = match corrupt {
            Some(Corruption::NextIntoKernelStack) => KSTACK_LO,
            _ => TASKS_BASE + ((i + 1) % n) * TASK_SIZE,
        };
        table.extend((code_addr as u32).to_le_bytes());
        table.extend(((stack_end - 4) as u32).to_le_bytes());
        table.extend((flags as u32).to_le_bytes());
        table.extend(segment(code_addr, after_code, READ | EXEC).to_le_bytes());
        table.extend(data.to_le_bytes());
        table.extend((next as u32).to_le_bytes());
    }
    UserImage {
        chunks: vec![
            Chunk { addr: TASKS_BASE, bytes: table },
            Chunk { addr: code.sections[0].base, bytes: code.sections[0].bytes.clone() },
            Chunk { addr: STACKS_BASE, bytes: vec![0; (n * spec.stack_size as u64) as usize] },
        ],
    }
}

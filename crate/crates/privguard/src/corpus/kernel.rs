use crate::ir::{parse_program, Program};
use crate::machine::{MachineConfig, Mmio, ParamValue, Region, RegionKind};
use std::collections::BTreeMap;

pub const TASKS_BASE: u64 = 0x10000;
pub const TASKS_END: u64 = 0x1ffff;
pub const KDATA_BASE: u64 = 0x20000;
pub const CUR: u64 = 0x20000;
pub const KSTACK_LO: u64 = 0x20400;
pub const KSTACK_TOP: u64 = 0x20800;
pub const RODATA_BASE: u64 = 0x21000;
pub const TEXT_BASE: u64 = 0x30000;
pub const USER_BASE: u64 = 0x40000;
pub const USER_END: u64 = 0x7ffff;
pub const TIMER_MMIO: u64 = 0xf000_0000;
pub const KERNEL_FIRST: u64 = 0x10000;
pub const KERNEL_LAST: u64 = 0x3ffff;
pub const TASK_SIZE: u64 = 32;
pub const UNPRIVILEGED: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Secure,
    /// The syscall index is bounded by 7 but the table has 6 entries.
    JumpTableOffByOne,
    /// The saved user flags are stored without forcing UNPRIVILEGED.
    FlagsUnsanitized,
    /// The data segment is granted write access whatever the task says.
    MpuUnchecked,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::Secure, Variant::JumpTableOffByOne, Variant::FlagsUnsanitized, Variant::MpuUnchecked];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Secure => "secure",
            Variant::JumpTableOffByOne => "jump-table-off-by-one",
            Variant::FlagsUnsanitized => "flags-unsanitized",
            Variant::MpuUnchecked => "mpu-unchecked",
        }
    }

    pub fn from_name(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    /// The one line where the variant differs from the secure kernel, and
    /// its replacement.
    pub fn delta(self) -> Option<(&'static str, &'static str)> {
        match self {
            Variant::Secure => None,
            Variant::JumpTableOffByOne => Some((SYSCALL_BOUND, "if r4 >u 7:32 goto preempt")),
            Variant::FlagsUnsanitized => Some((FLAGS_SAVE, "assign r3, flags'")),
            Variant::MpuUnchecked => Some((MPU2_LOAD, "assign mpu2, load64(r7) | 2:64")),
        }
    }
}

const SYSCALL_BOUND: &str = "if r4 >u 5:32 goto preempt";
const FLAGS_SAVE: &str = "assign r3, flags' | 1:32";
const MPU2_LOAD: &str = "assign mpu2, load64(r7)";

const SECURE: &str = r#"; Round-robin kernel: context save, scheduling through the circular
; task list, MPU reload and return from interrupt. Task layout:
; pc 0, sp 4, flags 8, code segment 12, data segment 20, next 28.
.addr_width 32
.equ CUR, 0x20000
.equ PERIOD, 0x20004
.equ KSTACK_LO, 0x20400
.equ KSTACK_TOP, 0x20800
.equ TASK0, 0x10000
.equ TIMER_MMIO, 0xf0000000

.section kdata 0x20000 data-rw
cur:    .word32 0
period: .word32 0
        .zero 0x3f8
kstack: .zero 0x400

.section rodata 0x21000 data-ro
syscalls: .word32 sys_yield, sys_self, sys_period, sys_nop, sys_nop, sys_yield

.section text 0x30000 code-ro
.entry reset entry
entry:
    if r0 == 0:32 goto boot
    assign sp, KSTACK_TOP
    ; save the interrupted task
    assign r1, load32(CUR)
    store r1, pc'
    assign r2, r1 + 4:32
    store r2, sp'
    assign r3, flags' | 1:32
    assign r2, r1 + 8:32
save_flags:
    store r2, r3
    ; timer and faults preempt, software interrupts go through the table
    if r0 <u 16:32 goto preempt
    assign r4, r0 - 16:32
    if r4 >u 5:32 goto preempt
    assign r4, r4 * 4:32
    assign r5, syscalls
    assign r4, r4 + r5
dispatch:
    goto load32(r4)

preempt:
sys_yield:
    assign r7, restore
    .hint call
    goto schedule

sys_self:
    assign r1, load32(CUR)
    goto restore

sys_period:
    assign r1, load32(PERIOD)
    goto restore

sys_nop:
    goto restore

; cur = cur->next, return address in r7
schedule:
    assign sp, sp - 4:32
    store sp, r7
    assign r1, load32(CUR)
    assign r2, r1 + 28:32
    assign r1, load32(r2)
    store CUR, r1
    assign r7, load32(sp)
    assign sp, sp + 4:32
    .hint return
    goto r7

restore:
    assign r6, load32(CUR)
    assign r7, r6 + 12:32
    assign mpu1, load64(r7)
    assign r7, r6 + 20:32
load_mpu2:
    assign mpu2, load64(r7)
    assign r7, r6 + 4:32
    assign sp', load32(r7)
    assign pc', load32(r6)
    assign r7, r6 + 8:32
    assign flags', load32(r7)
    rfi

boot:
    assign sp, KSTACK_TOP
    assign r1, KSTACK_LO
    assign r2, KSTACK_TOP
clear:
    store r1, 0:32
    assign r1, r1 + 4:32
    if r1 <u r2 goto clear
    assign r3, load32(TIMER_MMIO)
    store PERIOD, r3
    assign r1, TASK0
    store CUR, r1
    assign r7, restore
    .hint call
    goto schedule
boot_end:
"#;

/// Assembly text of a kernel variant.
pub fn kernel_source(v: Variant) -> String {
    match v.delta() {
        None => SECURE.to_string(),
        Some((from, to)) => {
            assert_eq!(SECURE.matches(from).count(), 1, "variant site must be unique");
            SECURE.replacen(from, to, 1)
        }
    }
}

/// Layout declarations of the kernel data.
pub const TYPEDECLS: &str = "# toy kernel layouts
pointer 4
struct Task 32
  field pc 0 int32
  field sp 4 int32
  field flags 8 int32
  field code_segment 12 int64
  field data_segment 20 int64
  field next 28 ptr Task
end
global cur 0x20000 ptr Task
";

/// Manual overlay: predicates on the MPU and flags words.
pub const OVERLAY: &str = "// refinements of the generated Task layout
#define READ 1
#define WRITE 2
#define EXEC 4
type mpu = int64 with
      (self & WRITE == 0) or
      ((self >>u 32) >u kernel_last_addr) or
      (((self << 32) >>u 32) <u kernel_first_addr)

#define UNPRIVILEGED 1
type flags = int32 with (self & UNPRIVILEGED) != 0

type Task = struct { int32 int32 flags mpu mpu Task* }

register mpu1 : mpu
register mpu2 : mpu
register flags' : flags
";

/// How many tasks the configuration announces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskCount {
    Exact(u64),
    Unknown,
}

#[derive(Clone, Debug)]
pub struct KernelBuild {
    pub variant: Variant,
    pub source: String,
    pub program: Program,
    pub config: MachineConfig,
}

/// Machine description shared by every variant. With `mmio`, the boot read
/// of the timer period returns one of four values.
pub fn kernel_config(p: &Program, tasks: TaskCount, mmio: bool) -> MachineConfig {
    let region = |name: &str, start, end, kind| Region { name: name.into(), start, end, kind };
    let mut params = BTreeMap::new();
    params.insert("kernel_first_addr".into(), ParamValue::Exact(KERNEL_FIRST));
    params.insert("kernel_last_addr".into(), ParamValue::Exact(KERNEL_LAST));
    params.insert(
        "nb_tasks".into(),
        match tasks {
            TaskCount::Exact(n) => ParamValue::Exact(n),
            TaskCount::Unknown => ParamValue::Range([1, (1 << 31) - 1]),
        },
    );
    MachineConfig {
        addr_width: 32,
        kernel_entry: p.label("entry").expect("entry label"),
        unprivileged_bit: 0,
        mpu: Default::default(),
        regions: vec![
            region("tasks", TASKS_BASE, TASKS_END, RegionKind::Param),
            region("kdata", KDATA_BASE, 0x20fff, RegionKind::DataRw),
            region("rodata", RODATA_BASE, 0x21fff, RegionKind::DataRo),
            region("text", TEXT_BASE, KERNEL_LAST, RegionKind::CodeRo),
            region("user", USER_BASE, USER_END, RegionKind::Unprotected),
        ],
        boot: vec![[p.label("boot").unwrap(), p.label("boot_end").unwrap() - 1]],
        mmio: if mmio { vec![Mmio { addr: TIMER_MMIO, size: 4, values: vec![100, 250, 500, 1000] }] } else { Vec::new() },
        interrupts: [1, crate::machine::irq::MAX],
        params,
    }
}

pub fn build_kernel(v: Variant) -> KernelBuild {
    build_kernel_with(v, TaskCount::Exact(2), false)
}

pub fn build_kernel_with(v: Variant, tasks: TaskCount, mmio: bool) -> KernelBuild {
    let source = kernel_source(v);
    let program = parse_program(&source).expect("corpus kernel assembles");
    let config = kernel_config(&program, tasks, mmio);
    KernelBuild { variant: v, source, program, config }
}

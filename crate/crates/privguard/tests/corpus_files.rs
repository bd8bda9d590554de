//! The files under `corpus/` are what the command line consumes. They must
//! stay identical to the builders; `PRIVGUARD_BLESS=1` rewrites them.

use privguard::corpus::kernel::{kernel_config, kernel_source, OVERLAY, TYPEDECLS};
use privguard::corpus::*;
use privguard::ir::parse_program;
use privguard::machine::MachineConfig;
use std::path::{Path, PathBuf};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn bless() -> bool {
    std::env::var_os("PRIVGUARD_BLESS").is_some()
}

fn same_text(rel: &str, want: &str) {
    let path = corpus().join(rel);
    if bless() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, want).unwrap();
    }
    let got = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(got, want, "{rel} is stale; rerun with PRIVGUARD_BLESS=1");
}

fn same_bytes(rel: &str, want: &[u8]) {
    let path = corpus().join(rel);
    if bless() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, want).unwrap();
    }
    assert_eq!(std::fs::read(&path).unwrap(), want, "{rel} is stale");
}

/// Counts instruction lines without the assembler: whatever is left of a
/// line after its comment and leading labels, unless it is a directive.
fn count_instruction_lines(src: &str) -> usize {
    src.lines()
        .map(|l| {
            let mut l = l.split(';').next().unwrap().trim();
            while let Some((head, rest)) = l.split_once(':') {
                if head.trim().chars().all(|c| c.is_alphanumeric() || c == '_') && !head.trim().is_empty() {
                    l = rest.trim();
                } else {
                    break;
                }
            }
            l
        })
        .filter(|l| !l.is_empty() && !l.starts_with('.'))
        .count()
}

#[test]
fn kernel_sources_match_the_builders() {
    for v in Variant::ALL {
        same_text(&format!("kernels/{}.s", v.name()), &kernel_source(v));
    }
}

#[test]
fn configs_match_the_builders() {
    let p = build_kernel(Variant::Secure).program;
    for (name, tasks, mmio) in [
        ("toy.toml", TaskCount::Exact(2), false),
        ("toy-any-tasks.toml", TaskCount::Unknown, false),
        ("toy-mmio.toml", TaskCount::Exact(2), true),
    ] {
        let cfg = kernel_config(&p, tasks, mmio);
        same_text(name, &cfg.to_toml());
        let back = MachineConfig::from_toml(&std::fs::read_to_string(corpus().join(name)).unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
    same_text("toy.typedecls", TYPEDECLS);
    same_text("toy.annot", OVERLAY);
}

fn images() -> Vec<(&'static str, ImageSpec)> {
    let bad = |c| ImageSpec { corruption: Some(c), ..ImageSpec::new(2) };
    vec![
        ("images/tasks1.img", ImageSpec::new(1)),
        ("images/tasks2.img", ImageSpec::new(2)),
        ("images/tasks8.img", ImageSpec::new(8)),
        ("images/tasks2-privileged.img", bad(Corruption::PrivilegedTask)),
        ("images/tasks2-next-kstack.img", bad(Corruption::NextIntoKernelStack)),
        ("images/tasks2-writable-table.img", bad(Corruption::WritableTaskTable)),
    ]
}

#[test]
fn images_match_the_builders() {
    for (rel, spec) in images() {
        same_bytes(rel, &build_image(&spec).to_bytes());
    }
}

fn manifest_text() -> String {
    let mut out = String::from("# Toy kernel corpus: expected instruction counts and alarms.\n");
    for v in Variant::ALL {
        let k = build_kernel(v);
        let alarm = match v {
            Variant::Secure => String::new(),
            Variant::JumpTableOffByOne => "{ category = \"ComputedJumpImprecise\", label = \"dispatch\" }".into(),
            Variant::FlagsUnsanitized => "{ category = \"PredicateViolation\", label = \"save_flags\" }".into(),
            Variant::MpuUnchecked => "{ category = \"PrivilegeSinkViolation\", label = \"load_mpu2\" }".into(),
        };
        out += &format!(
            "\n[[kernel]]\nvariant = \"{}\"\nfile = \"kernels/{}.s\"\ninstructions = {}\nalarms = [{alarm}]\n",
            v.name(),
            v.name(),
            k.program.instrs.len()
        );
    }
    for (rel, spec) in images() {
        let expect = if spec.corruption.is_none() { "pass" } else { "rejected" };
        out += &format!("\n[[image]]\nfile = \"{rel}\"\ntasks = {}\nexpect = \"{expect}\"\n", spec.tasks);
    }
    out
}

#[derive(serde::Deserialize)]
struct Manifest {
    kernel: Vec<KernelEntry>,
    image: Vec<toml::Value>,
}

#[derive(serde::Deserialize)]
struct KernelEntry {
    variant: String,
    file: String,
    instructions: usize,
    alarms: Vec<toml::Value>,
}

#[test]
fn manifest_counts_instructions() {
    same_text("manifest.toml", &manifest_text());
    let m: Manifest = toml::from_str(&std::fs::read_to_string(corpus().join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(m.kernel.len(), 4);
    assert_eq!(m.image.len(), images().len());
    for k in &m.kernel {
        let src = std::fs::read_to_string(corpus().join(&k.file)).unwrap();
        assert_eq!(count_instruction_lines(&src), k.instructions, "{}", k.variant);
        assert_eq!(parse_program(&src).unwrap().instrs.len(), k.instructions);
        assert_eq!(k.alarms.len(), usize::from(k.variant != "secure"));
    }
}

#[test]
fn line_scan_counts() {
    assert_eq!(count_instruction_lines("a: b:\n  rfi ; x\n.word32 1\nc: .zero 4\n; only\n  goto a\n"), 2);
}

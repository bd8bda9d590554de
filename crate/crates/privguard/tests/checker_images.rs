use privguard::analyzer::{analyze_runtime, AnalysisOptions, AnalysisResult, Invariant};
use privguard::checker::*;
use privguard::corpus::image::Chunk;
use privguard::corpus::*;

struct Setup {
    k: KernelBuild,
    tt: privguard::typedom::TypeTable,
    r: AnalysisResult,
    inv: Invariant,
}

fn setup(v: Variant, tasks: TaskCount, mmio: bool) -> Setup {
    let k = build_kernel_with(v, tasks, mmio);
    let ann = kernel_annotations(&k.config);
    let r = analyze_runtime(&k.program, &k.config, &ann, &AnalysisOptions::default()).unwrap();
    let inv = Invariant::of(&r, &ann.table);
    Setup { k, tt: ann.table, r, inv }
}

fn check(s: &Setup, img: &UserImage, opts: &CheckOptions) -> ImageReport {
    check_user_image(&s.k.program, img, &s.inv, &s.tt, &s.k.config, opts)
}

#[test]
fn well_formed_images_pass() {
    let s = setup(Variant::Secure, TaskCount::Unknown, false);
    for n in 1..=8 {
        for boundary in [Boundary::NextEntry, Boundary::FirstExit] {
            let rep = check(&s, &build_image(&ImageSpec::new(n)), &CheckOptions { boundary, ..Default::default() });
            assert!(rep.pass, "n={n} {boundary:?}: {:?}", rep.violations);
            assert_eq!(rep.paths, 1);
        }
    }
    let v = verdict(&s.r, &s.inv, Some(check(&s, &build_image(&ImageSpec::new(2)), &Default::default())));
    assert_eq!(v.verdict, VerdictKind::ApeProven);
}

#[test]
fn corrupted_images_name_the_broken_constraint() {
    let s = setup(Variant::Secure, TaskCount::Exact(2), false);
    let cases = [
        (Corruption::PrivilegedTask, "UNPRIVILEGED"),
        (Corruption::NextIntoKernelStack, "outside"),
        (Corruption::WritableTaskTable, "WRITE"),
    ];
    for (c, needle) in cases {
        let img = build_image(&ImageSpec { corruption: Some(c), ..ImageSpec::new(2) });
        let rep = check(&s, &img, &Default::default());
        assert!(!rep.pass, "{c:?}");
        assert!(rep.violations.iter().any(|v| v.what.contains(needle)), "{c:?}: {:?}", rep.violations);
        let v = verdict(&s.r, &s.inv, Some(rep));
        assert_eq!(v.verdict, VerdictKind::ImageRejected);
    }
}

#[test]
fn images_may_not_touch_kernel_memory() {
    let s = setup(Variant::Secure, TaskCount::Exact(2), false);
    let mut img = build_image(&ImageSpec::new(2));
    img.chunks.push(Chunk { addr: 0x20000, bytes: vec![0; 4] });
    let rep = check(&s, &img, &Default::default());
    assert!(!rep.pass);
    assert!(rep.violations[0].what.contains("0x20000"));
}

#[test]
fn mmio_boot_explores_every_value() {
    let s = setup(Variant::Secure, TaskCount::Exact(2), true);
    let rep = check(&s, &build_image(&ImageSpec::new(2)), &Default::default());
    assert!(rep.pass, "{:?}", rep.violations);
    assert_eq!(rep.paths, 4);
    assert_eq!(rep.determinism.mmio_loads, 1);
    assert_eq!(rep.determinism.instructions - rep.determinism.deterministic, 1);
    let cut = check(&s, &build_image(&ImageSpec::new(2)), &CheckOptions { max_paths: 3, ..Default::default() });
    assert!(cut.inconclusive && !cut.pass);
    assert_eq!(verdict(&s.r, &s.inv, Some(cut)).verdict, VerdictKind::NotProven);
}

#[test]
fn buggy_kernels_are_not_proven() {
    for v in [Variant::JumpTableOffByOne, Variant::FlagsUnsanitized, Variant::MpuUnchecked] {
        let s = setup(v, TaskCount::Exact(2), false);
        let rep = check(&s, &build_image(&ImageSpec::new(2)), &Default::default());
        let vd = verdict(&s.r, &s.inv, Some(rep));
        assert_eq!(vd.verdict, VerdictKind::NotProven, "{}", v.name());
        assert_eq!(vd.evidence.runtime_alarms.len(), 1);
    }
}

#[test]
fn image_bytes_are_deterministic() {
    let spec = ImageSpec { stack_size: 64, ..ImageSpec::new(5) };
    assert_eq!(build_image(&spec).to_bytes(), build_image(&spec).to_bytes());
}

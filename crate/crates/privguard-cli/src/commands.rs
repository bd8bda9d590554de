use crate::inputs::*;
use crate::{BootFlags, BoundaryArg, Command, CorruptArg, KernelInputs, OptInputs};
use privguard::analyzer::{analyze_runtime, AnalysisOptions, AnalysisResult, Invariant, SCHEMA_VERSION};
use privguard::checker::{check_user_image, invariant_hash, verdict, Boundary, CheckOptions, ImageReport, VerdictKind};
use privguard::corpus::{build_image, fig6_fixture, Corruption, ImageSpec};
use privguard::machine::{boot_state, run_concrete, ConcreteState, RunEnd, RunOptions};
use privguard::typedom::{check_labeling, interpret_byte, ByteType};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::GenAnnot { typedecls, annot, config, kernel, out, json } => {
            gen_annot(&typedecls, annot.as_deref(), config.as_deref(), kernel.as_deref(), out.as_deref(), json)
        }
        Command::Analyze { inputs, analysis, out_dir, json } => {
            let opts = overrides(analysis).resolve()?;
            analyze(&inputs, opts, out_dir.as_deref(), json)
        }
        Command::Check { inputs, invariant, image, boot, out_dir, json } => {
            check(&inputs, &invariant, &image, boot, out_dir.as_deref(), json)
        }
        Command::Verify { manifest, inputs, image, analysis, boot, out_dir, json } => {
            let m = match manifest {
                Some(p) => RunManifest::load(&p)?,
                None => RunManifest::default(),
            };
            let OptInputs { kernel, config, typedecls, annot } = inputs;
            let inputs = KernelInputs {
                kernel: require(kernel.or(m.kernel), "kernel")?,
                config: require(config.or(m.config), "config")?,
                typedecls: require(typedecls.or(m.typedecls), "typedecls")?,
                annot: annot.or(m.annot),
            };
            let opts = overrides(analysis).or(m.options).resolve()?;
            let out_dir = out_dir.or(m.out_dir).unwrap_or_else(|| PathBuf::from("privguard-out"));
            verify(&inputs, image.or(m.image).as_deref(), opts, boot, &out_dir, json)
        }
        Command::Simulate { kernel, config, image, steps, seed, json } => simulate(&kernel, &config, &image, steps, seed, json),
        Command::BuildImage { tasks, stack_size, corrupt, out } => build(tasks, stack_size, corrupt, &out),
        Command::ReproFig6 { json } => Ok(repro_fig6(json)),
    }
}

fn overrides(a: crate::AnalysisFlags) -> OptionOverrides {
    OptionOverrides { unroll: a.unroll, call_depth: a.call_depth, jump_cap: a.jump_cap }
}

fn check_options(b: BootFlags) -> CheckOptions {
    let boundary = match b.boundary {
        BoundaryArg::NextEntry => Boundary::NextEntry,
        BoundaryArg::FirstExit => Boundary::FirstExit,
    };
    CheckOptions { boundary, max_paths: b.max_paths, ..CheckOptions::default() }
}

#[derive(Serialize)]
struct AnnotCounts {
    schema: u32,
    generated_lines: usize,
    manual_lines: usize,
}

fn gen_annot(
    typedecls: &Path,
    overlay: Option<&Path>,
    config: Option<&Path>,
    kernel: Option<&Path>,
    out: Option<&Path>,
    json: bool,
) -> Result<u8> {
    let cfg = match (config, kernel) {
        (Some(c), Some(k)) => Some(load_config(c, &load_kernel(k)?)?),
        (Some(_), None) => return Err(InputError("--config needs --kernel".into())),
        _ => None,
    };
    let a = load_annotations(typedecls, overlay, cfg.as_ref())?;
    let text = a.generated.to_string();
    match out {
        Some(path) => std::fs::write(path, &text).map_err(|e| InputError(format!("{}: {e}", path.display())))?,
        None if !json => print!("{text}"),
        None => {}
    }
    let counts = AnnotCounts {
        schema: SCHEMA_VERSION,
        generated_lines: a.generated_lines,
        manual_lines: a.manual_lines,
    };
    if json {
        print!("{}", to_json(&counts));
    } else {
        eprintln!("generated {} lines, manual {} lines", counts.generated_lines, counts.manual_lines);
    }
    Ok(0)
}

struct Analyzed {
    program: privguard::ir::Program,
    config: privguard::machine::MachineConfig,
    ann: privguard::annot::Merged,
    result: AnalysisResult,
    invariant: Invariant,
}

fn run_analysis(inputs: &KernelInputs, opts: AnalysisOptions) -> Result<Analyzed> {
    let program = load_kernel(&inputs.kernel)?;
    let config = load_config(&inputs.config, &program)?;
    let ann = load_merged(&inputs.typedecls, inputs.annot.as_deref(), &config)?;
    let result = analyze_runtime(&program, &config, &ann, &opts).map_err(|e| InputError(e.to_string()))?;
    let invariant = Invariant::of(&result, &ann.table);
    Ok(Analyzed { program, config, ann, result, invariant })
}

#[derive(Serialize)]
struct AlarmsReport<'a> {
    schema: u32,
    alarms: Vec<&'a privguard::analyzer::Alarm>,
}

fn alarms_report(r: &AnalysisResult) -> AlarmsReport<'_> {
    AlarmsReport { schema: SCHEMA_VERSION, alarms: r.runtime_alarms().collect() }
}

#[derive(Serialize)]
struct AnalysisSummary {
    schema: u32,
    locations: usize,
    visits: usize,
    nontrivial: bool,
    runtime_alarms: usize,
    invariant_hash: String,
}

fn analysis_summary(a: &Analyzed) -> AnalysisSummary {
    AnalysisSummary {
        schema: SCHEMA_VERSION,
        locations: a.invariant.locations.len(),
        visits: a.result.visits,
        nontrivial: a.result.nontrivial,
        runtime_alarms: a.result.runtime_alarms().count(),
        invariant_hash: invariant_hash(&a.invariant),
    }
}

fn print_alarms(r: &AnalysisResult) {
    for a in r.runtime_alarms() {
        println!("  {a}");
    }
}

fn analyze(inputs: &KernelInputs, opts: AnalysisOptions, out_dir: Option<&Path>, json: bool) -> Result<u8> {
    let a = run_analysis(inputs, opts)?;
    if let Some(dir) = out_dir {
        write_json(dir, "invariant.json", &a.invariant)?;
        write_json(dir, "alarms.json", &alarms_report(&a.result))?;
    }
    let s = analysis_summary(&a);
    if json {
        print!("{}", to_json(&s));
    } else {
        println!("locations: {}", s.locations);
        println!("invariant: {}", if s.nontrivial { "nontrivial" } else { "trivial" });
        println!("runtime alarms: {}", s.runtime_alarms);
        print_alarms(&a.result);
    }
    Ok(u8::from(s.runtime_alarms > 0 || !s.nontrivial))
}

fn image_summary(r: &ImageReport) -> String {
    let status = if r.pass {
        "pass"
    } else if r.inconclusive {
        "inconclusive"
    } else {
        "rejected"
    };
    format!(
        "image: {status} ({} boot paths, {}/{} deterministic instructions, {} MMIO loads)",
        r.paths, r.determinism.deterministic, r.determinism.instructions, r.determinism.mmio_loads
    )
}

fn check(
    inputs: &KernelInputs,
    invariant: &Path,
    image: &Path,
    boot: BootFlags,
    out_dir: Option<&Path>,
    json: bool,
) -> Result<u8> {
    let program = load_kernel(&inputs.kernel)?;
    let config = load_config(&inputs.config, &program)?;
    let ann = load_merged(&inputs.typedecls, inputs.annot.as_deref(), &config)?;
    let inv: Invariant = serde_json::from_str(&read_text(invariant)?)
        .map_err(|e| InputError(format!("{}: {e}", invariant.display())))?;
    if inv.schema != SCHEMA_VERSION {
        return Err(InputError(format!(
            "{}: schema {} is not supported (expected {SCHEMA_VERSION})",
            invariant.display(),
            inv.schema
        )));
    }
    let img = load_image(image)?;
    let report = check_user_image(&program, &img, &inv, &ann.table, &config, &check_options(boot));
    if let Some(dir) = out_dir {
        write_json(dir, "image.json", &report)?;
    }
    if json {
        print!("{}", to_json(&report));
    } else {
        println!("{}", image_summary(&report));
        for v in &report.violations {
            println!("  path {}: {}", v.path, v.what);
        }
    }
    Ok(u8::from(!report.pass))
}

fn verify(
    inputs: &KernelInputs,
    image: Option<&Path>,
    opts: AnalysisOptions,
    boot: BootFlags,
    out_dir: &Path,
    json: bool,
) -> Result<u8> {
    let img = image.map(load_image).transpose()?;
    let a = run_analysis(inputs, opts)?;
    let report = img.map(|img| check_user_image(&a.program, &img, &a.invariant, &a.ann.table, &a.config, &check_options(boot)));
    let v = verdict(&a.result, &a.invariant, report);
    write_json(out_dir, "invariant.json", &a.invariant)?;
    write_json(out_dir, "alarms.json", &alarms_report(&a.result))?;
    write_json(out_dir, "verdict.json", &v)?;
    if json {
        print!("{}", to_json(&v));
    } else {
        let name = serde_json::to_value(v.verdict).unwrap();
        println!("verdict: {}", name.as_str().unwrap());
        println!(
            "invariant: {} locations, {}, sha256 {}",
            a.invariant.locations.len(),
            if a.result.nontrivial { "nontrivial" } else { "trivial" },
            v.evidence.invariant_hash
        );
        println!("runtime alarms: {}", v.evidence.runtime_alarms.len());
        if let Some(r) = &v.evidence.image {
            println!("{}", image_summary(r));
        }
        for r in &v.reasons {
            println!("  {r}");
        }
        println!("reports written to {}", out_dir.display());
    }
    Ok(u8::from(v.verdict != VerdictKind::ApeProven))
}

fn simulate(kernel: &Path, config: &Path, image: &Path, steps: u64, seed: u64, json: bool) -> Result<u8> {
    let program = load_kernel(kernel)?;
    let cfg = load_config(config, &program)?;
    let img = load_image(image)?;
    let mut s = ConcreteState::from_program(&program);
    img.load_into(&mut s.mem);
    let s0 = boot_state(s.mem, &cfg);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let opts = RunOptions { budget: steps, ..RunOptions::default() };
    let report = run_concrete(&s0, &cfg, opts, &mut |n| rng.gen_range(0..n));
    if json {
        print!("{}", to_json(&report));
    } else {
        print!("{}", report.summary_text());
    }
    Ok(u8::from(matches!(report.end, RunEnd::PrivilegedFault(_))))
}

fn build(tasks: u32, stack_size: u32, corrupt: Option<CorruptArg>, out: &Path) -> Result<u8> {
    if tasks == 0 || stack_size < 8 || stack_size % 8 != 0 {
        return Err(InputError("need at least one task and a stack size that is a positive multiple of 8".into()));
    }
    let corruption = corrupt.map(|c| match c {
        CorruptArg::Privileged => Corruption::PrivilegedTask,
        CorruptArg::NextKstack => Corruption::NextIntoKernelStack,
        CorruptArg::WritableTable => Corruption::WritableTaskTable,
    });
    let img = build_image(&ImageSpec { tasks, stack_size, corruption });
    std::fs::write(out, img.to_bytes()).map_err(|e| InputError(format!("{}: {e}", out.display())))?;
    Ok(0)
}

#[derive(Serialize)]
struct Fig6Report {
    schema: u32,
    edges: Vec<(String, String)>,
    labeling_valid: bool,
    violations: Vec<String>,
    bar_3: Vec<u64>,
}

fn repro_fig6(json: bool) -> u8 {
    let f = fig6_fixture();
    let name = |b: ByteType| f.table.display_byte(b).replace("int8", "int");
    let mut edges: Vec<(String, String)> = f.table.hasse_edges().into_iter().map(|(a, b)| (name(a), name(b))).collect();
    edges.sort();
    let read = |a: u64, _: u8| f.read(a);
    let violations: Vec<String> = check_labeling(&read, &f.labeling, &f.table).iter().map(|v| v.to_string()).collect();
    let bar_3 = interpret_byte(ByteType { ty: f.bar, k: 3 }, &f.labeling, &f.table, 1);
    let r = Fig6Report { schema: SCHEMA_VERSION, edges, labeling_valid: violations.is_empty(), violations, bar_3 };
    if json {
        print!("{}", to_json(&r));
    } else {
        println!("subtyping edges ({}):", r.edges.len());
        for (a, b) in &r.edges {
            println!("  {a} <: {b}");
        }
        println!("labeling: {}", if r.labeling_valid { "valid" } else { "invalid" });
        for v in &r.violations {
            println!("  {v}");
        }
        let set: Vec<String> = r.bar_3.iter().map(|v| format!("{v:#04x}")).collect();
        println!("[bar_3] = {{{}}}", set.join(", "));
    }
    u8::from(!r.labeling_valid)
}

//! Reading input files and writing reports.

use privguard::analyzer::AnalysisOptions;
use privguard::annot::{generate_from_decls, merge, parse_annotations, parse_decls, Annotations, Merged};
use privguard::corpus::{params_env, UserImage};
use privguard::ir::{parse_program, Program};
use privguard::machine::MachineConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Anything that makes the run a usage error (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type Result<T> = std::result::Result<T, InputError>;

fn err(path: &Path, e: impl std::fmt::Display) -> InputError {
    InputError(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| err(path, e))
}

pub fn load_kernel(path: &Path) -> Result<Program> {
    parse_program(&read_text(path)?).map_err(|e| err(path, e))
}

pub fn load_merged(typedecls: &Path, overlay: Option<&Path>, cfg: &MachineConfig) -> Result<Merged> {
    Ok(load_annotations(typedecls, overlay, Some(cfg))?.merged.expect("merged with a config"))
}

pub fn load_config(path: &Path, p: &Program) -> Result<MachineConfig> {
    let cfg = MachineConfig::from_toml(&read_text(path)?).map_err(|e| err(path, e))?;
    cfg.check_program(p).map_err(|e| err(path, e))?;
    Ok(cfg)
}

pub fn load_image(path: &Path) -> Result<UserImage> {
    let bytes = std::fs::read(path).map_err(|e| err(path, e))?;
    UserImage::read_from(&mut bytes.as_slice()).map_err(|e| err(path, e))
}

pub struct LoadedAnnotations {
    /// Absent when no machine configuration gives the predicate variables.
    pub merged: Option<Merged>,
    pub generated: Annotations,
    pub generated_lines: usize,
    pub manual_lines: usize,
}

/// Non-blank lines that are not only a comment.
pub fn annotation_lines(text: &str) -> usize {
    text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with("//")).count()
}

pub fn load_annotations(
    typedecls: &Path,
    overlay: Option<&Path>,
    cfg: Option<&MachineConfig>,
) -> Result<LoadedAnnotations> {
    let decls = parse_decls(&read_text(typedecls)?).map_err(|e| err(typedecls, e))?;
    let generated = generate_from_decls(&decls).map_err(|e| err(typedecls, e))?;
    let (manual, manual_lines) = match overlay {
        Some(path) => {
            let text = read_text(path)?;
            (parse_annotations(&text).map_err(|e| err(path, e))?, annotation_lines(&text))
        }
        None => (Annotations::default(), 0),
    };
    let merged = match cfg {
        Some(cfg) => Some(
            merge(&generated.annotations, &manual, decls.ptr_size, &params_env(cfg))
                .map_err(|e| InputError(format!("merging annotations: {e}")))?,
        ),
        None => None,
    };
    Ok(LoadedAnnotations { merged, generated: generated.annotations, generated_lines: generated.lines, manual_lines })
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionOverrides {
    pub unroll: Option<u32>,
    pub call_depth: Option<usize>,
    pub jump_cap: Option<usize>,
}

impl OptionOverrides {
    pub fn or(self, o: OptionOverrides) -> OptionOverrides {
        OptionOverrides {
            unroll: self.unroll.or(o.unroll),
            call_depth: self.call_depth.or(o.call_depth),
            jump_cap: self.jump_cap.or(o.jump_cap),
        }
    }

    pub fn resolve(self) -> Result<AnalysisOptions> {
        let d = AnalysisOptions::default();
        let o = AnalysisOptions {
            unroll: self.unroll.unwrap_or(d.unroll),
            call_depth: self.call_depth.unwrap_or(d.call_depth),
            jump_cap: self.jump_cap.unwrap_or(d.jump_cap),
            ..d
        };
        if o.unroll > 10_000 {
            return Err(InputError(format!("--unroll {} is above 10000", o.unroll)));
        }
        if o.call_depth > 64 {
            return Err(InputError(format!("--call-depth {} is above 64", o.call_depth)));
        }
        if o.jump_cap == 0 || o.jump_cap > 65_536 {
            return Err(InputError(format!("--jump-cap {} is outside 1..=65536", o.jump_cap)));
        }
        Ok(o)
    }
}

/// Inputs and options of a full verification. Relative paths are taken
/// from the manifest's directory.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub kernel: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub typedecls: Option<PathBuf>,
    pub annot: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: OptionOverrides,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let mut m: RunManifest = toml::from_str(&read_text(path)?).map_err(|e| err(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut m.kernel, &mut m.config, &mut m.typedecls, &mut m.annot, &mut m.image, &mut m.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(m)
    }
}

pub fn require(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| InputError(format!("no {what} given (flag --{what} or manifest entry)")))
}

/// Pretty JSON with sorted keys.
pub fn to_json(v: &impl Serialize) -> String {
    // serde_json's default map is ordered, so going through a Value sorts keys
    let v = serde_json::to_value(v).expect("report serializes");
    serde_json::to_string_pretty(&v).expect("value prints") + "\n"
}

pub fn write_json(dir: &Path, name: &str, v: &impl Serialize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, to_json(v)).map_err(|e| err(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_paths_are_relative_to_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "kernel = \"k.s\"\nconfig = \"/abs/c.toml\"\n[options]\nunroll = 3\n").unwrap();
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.kernel.unwrap(), dir.path().join("k.s"));
        assert_eq!(m.config.unwrap(), PathBuf::from("/abs/c.toml"));
        assert_eq!(m.options.unroll, Some(3));
        assert!(m.image.is_none());
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "kernal = \"k.s\"\n").unwrap();
        assert!(RunManifest::load(&path).unwrap_err().0.contains("kernal"));
    }

    #[test]
    fn flags_win_over_the_manifest() {
        let flags = OptionOverrides { unroll: Some(5), ..Default::default() };
        let manifest = OptionOverrides { unroll: Some(64), call_depth: Some(2), jump_cap: None };
        let o = flags.or(manifest).resolve().unwrap();
        assert_eq!((o.unroll, o.call_depth, o.jump_cap), (5, 2, AnalysisOptions::default().jump_cap));
    }

    #[test]
    fn option_ranges() {
        let bad = [
            OptionOverrides { unroll: Some(10_001), ..Default::default() },
            OptionOverrides { call_depth: Some(65), ..Default::default() },
            OptionOverrides { jump_cap: Some(0), ..Default::default() },
            OptionOverrides { jump_cap: Some(65_537), ..Default::default() },
        ];
        for o in bad {
            assert!(o.resolve().is_err(), "{o:?}");
        }
        let edge = OptionOverrides { unroll: Some(10_000), call_depth: Some(64), jump_cap: Some(65_536) };
        assert!(edge.resolve().is_ok());
    }

    #[test]
    fn counted_annotation_lines() {
        assert_eq!(annotation_lines("// c\n\n  \ntype a = int8\n  // d\nregister r0 : a\n"), 2);
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct R {
            zeta: u8,
            alpha: u8,
        }
        let s = to_json(&R { zeta: 1, alpha: 2 });
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.ends_with('\n'));
    }
}

//! Evaluation fixtures: the toy kernel and its variants, user images for it,
//! and the small typed memory used to illustrate labelings.

mod fig6;
pub mod fuzz;
pub mod image;
pub mod kernel;

pub use fig6::{fig6_fixture, Fig6};
pub use image::{build_image, Corruption, ImageError, ImageSpec, UserImage};
pub use kernel::{build_kernel, build_kernel_with, KernelBuild, TaskCount, Variant};

use crate::annot::{generate_from_decls, merge, parse_annotations, parse_decls, Merged};
use crate::machine::MachineConfig;
use crate::typedom::Env;

/// Configuration parameters as predicate variables.
pub fn params_env(cfg: &MachineConfig) -> Env {
    cfg.params.iter().map(|(k, v)| (k.clone(), v.bounds())).collect()
}

/// Generated annotations for the kernel layouts, refined by the overlay.
pub fn kernel_annotations(cfg: &MachineConfig) -> Merged {
    annotations_with(cfg, kernel::OVERLAY).expect("corpus overlay merges")
}

/// Generated annotations for the kernel layouts under another overlay.
pub fn annotations_with(cfg: &MachineConfig, overlay: &str) -> Result<Merged, String> {
    let decls = parse_decls(kernel::TYPEDECLS).map_err(|e| e.to_string())?;
    let generated = generate_from_decls(&decls).map_err(|e| e.to_string())?;
    let overlay = parse_annotations(overlay).map_err(|e| e.to_string())?;
    merge(&generated.annotations, &overlay, decls.ptr_size, &params_env(cfg)).map_err(|e| e.to_string())
}

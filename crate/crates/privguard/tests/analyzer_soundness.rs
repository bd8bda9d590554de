use privguard::corpus::fuzz::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_kernels_are_contained() {
    let cfg = fuzz_config();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut excluded, mut capped) = (0, 0, 0);
    while checked < 60 {
        let p = random_kernel(&mut rng);
        let (out, _) = check_soundness(&p, &cfg, DEFAULT_CAP);
        match out {
            FuzzOutcome::Excluded => excluded += 1,
            FuzzOutcome::Checked { capped: c, violations, .. } => {
                assert!(violations.is_empty(), "{}\n{:?}", privguard::ir::print_program(&p), &violations[..violations.len().min(5)]);
                checked += 1;
                capped += c as usize;
            }
        }
    }
    eprintln!("checked {checked} excluded {excluded} capped {capped}");
}

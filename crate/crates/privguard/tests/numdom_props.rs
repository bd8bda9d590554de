//! Exhaustive width-8 checks of the numeric domain against concrete evaluation.

use privguard::ir::{apply_binop, apply_unop, to_signed, Binop, Unop};
use privguard::numdom::{thresholds, Congruence, IntervalSU, NumAbstract};
use proptest::prelude::*;

const W: u8 = 8;

fn members(v: &NumAbstract) -> Vec<u64> {
    (0..=255u64).filter(|x| v.contains(*x)).collect()
}

#[derive(Clone, Debug)]
struct Raw {
    ulo: u64,
    uhi: u64,
    slo: i64,
    shi: i64,
    m: u64,
    r: u64,
}

impl Raw {
    fn build(&self) -> NumAbstract {
        NumAbstract::from_parts(IntervalSU::new(self.ulo, self.uhi, self.slo, self.shi, W), Congruence::new(self.m, self.r), W)
    }

    fn holds(&self, x: u64) -> bool {
        let s = to_signed(x, W);
        x >= self.ulo
            && x <= self.uhi
            && s >= self.slo
            && s <= self.shi
            && if self.m == 0 { x == self.r } else { x % self.m == self.r % self.m }
    }
}

fn raw() -> impl Strategy<Value = Raw> {
    (0u64..256, 0u64..256, -128i64..128, -128i64..128, prop_oneof![Just(0u64), Just(1), 1u64..10, Just(16)], 0u64..256).prop_map(
        |(a, b, c, d, m, r)| Raw { ulo: a.min(b), uhi: a.max(b), slo: c.min(d), shi: c.max(d), m, r: if m == 0 { r } else { r % m } },
    )
}

fn value() -> impl Strategy<Value = NumAbstract> {
    prop_oneof![
        raw().prop_map(|r| r.build()),
        (0u64..256).prop_map(|c| NumAbstract::constant(c, W)),
        (0u64..256, 0u64..8).prop_map(|(a, k)| NumAbstract::range(a, (a + k).min(255), W)),
    ]
}

fn binop() -> impl Strategy<Value = Binop> {
    proptest::sample::select(Binop::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 3000, ..ProptestConfig::default() })]

    #[test]
    fn binop_is_sound(op in binop(), a in value(), b in value()) {
        let r = NumAbstract::binop(op, &a, &b);
        for x in members(&a) {
            for y in members(&b) {
                if let Ok(v) = apply_binop(op, x, y, W, W) {
                    prop_assert!(r.contains(v), "{:?}: {} {} {} = {} not in {}", op, x, op.symbol(), y, v, r);
                }
            }
        }
    }

    #[test]
    fn unop_is_sound(a in value(), k in 0u8..8, j in 0u8..8) {
        let (lo, hi) = (k.min(j), k.max(j));
        for op in [Unop::Not, Unop::Neg, Unop::Uext(16), Unop::Sext(16), Unop::Sext(8), Unop::Extract(lo, hi)] {
            let r = NumAbstract::unop(op, &a);
            for x in members(&a) {
                let v = apply_unop(op, x, W);
                prop_assert!(r.contains(v), "{:?} {} = {} not in {}", op, x, v, r);
            }
        }
    }

    #[test]
    fn reduction_preserves_meaning(r in raw()) {
        let v = r.build();
        for x in 0..=255u64 {
            prop_assert_eq!(v.contains(x), r.holds(x), "value {} in {}", x, v);
        }
    }

    #[test]
    fn join_is_upper_bound(a in value(), b in value()) {
        let j = a.join(&b);
        for x in members(&a).into_iter().chain(members(&b)) {
            prop_assert!(j.contains(x));
        }
        prop_assert!(a.leq(&j) && b.leq(&j));
    }

    #[test]
    fn widening_chains_stabilize(start in value(), steps in proptest::collection::vec(value(), 1..200), extra in proptest::collection::vec(0u64..256, 0..6)) {
        let th = thresholds(W, &extra);
        let mut x = start;
        let mut changes = 0;
        for s in steps.iter().cycle().take(600) {
            let target = x.join(s);
            let n = x.widen(&target, &th);
            prop_assert!(target.leq(&n));
            if n != x {
                changes += 1;
            }
            x = n;
        }
        prop_assert!(changes <= 2 * th.len() + 64, "{} changes", changes);
    }

    #[test]
    fn compare_refinement_is_sound(op in proptest::sample::select(vec![Binop::Eq, Binop::Ne, Binop::Ult, Binop::Ugt, Binop::Slt, Binop::Sgt]), a in value(), b in value(), truth in any::<bool>()) {
        let (na, nb) = privguard::numdom::refine_compare(op, &a, &b, truth);
        for x in members(&a) {
            for y in members(&b) {
                if (apply_binop(op, x, y, W, W).unwrap() == 1) == truth {
                    prop_assert!(na.contains(x) && nb.contains(y), "{:?} {} {} {}", op, x, y, truth);
                }
            }
        }
    }
}

#[test]
fn join_of_4_and_12_is_4_mod_8() {
    // gcd oracle: the set {4, 12} differs by 8, so the modulus is gcd(8) = 8
    let j = NumAbstract::constant(4, 32).join(&NumAbstract::constant(12, 32));
    let c = j.congruence().unwrap();
    let diff: u64 = 12 - 4;
    assert_eq!(c.modulus(), diff);
    assert_eq!(c.residue(), 4 % diff);
    assert_eq!(j.urange(), Some((4, 12)));
}

#[test]
fn congruence_widening_chain_reaches_gcd() {
    let th = thresholds(32, &[]);
    let a = NumAbstract::constant(0, 32);
    let b = a.widen(&a.join(&NumAbstract::constant(8, 32)), &th);
    let c = b.widen(&b.join(&NumAbstract::constant(4, 32)), &th);
    assert_eq!(b.congruence().unwrap().modulus(), 8);
    assert_eq!(c.congruence().unwrap().modulus(), 4);
    assert_eq!(c.widen(&c, &th), c);
}

#[test]
fn times_four_over_small_range() {
    let r0 = NumAbstract::range(0, 3, 32);
    let r = NumAbstract::binop(Binop::Mul, &r0, &NumAbstract::constant(4, 32));
    let concrete: Vec<u64> = (0..4).map(|x| x * 4).collect();
    assert_eq!(r.enumerate(16).unwrap(), concrete);
}

#[test]
fn wrapping_add_at_width_8() {
    let a = NumAbstract::range(0xFE, 0xFF, 8);
    let r = NumAbstract::binop(Binop::Add, &a, &NumAbstract::constant(2, 8));
    let oracle: Vec<u64> = [0xFEu64, 0xFF].iter().map(|x| (x + 2) & 0xFF).collect();
    assert_eq!(members(&r), oracle);
}

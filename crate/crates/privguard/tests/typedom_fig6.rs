//! The two-structure example with one-byte words: `foo` holds a `foo*` and a
//! `bar*`, `bar` holds two ints followed by an embedded `foo`.

use privguard::corpus::fig6_fixture;
use privguard::numdom::NumAbstract;
use privguard::typedom::*;
use proptest::prelude::*;

struct Fig {
    tt: TypeTable,
    foo: TypeId,
    bar: TypeId,
    int: TypeId,
}

fn fig() -> Fig {
    let f = fig6_fixture();
    Fig { tt: f.table, foo: f.foo, bar: f.bar, int: f.int }
}

const MEM: [u64; 6] = [0x04, 0x02, 0x00, 0xff, 0x00, 0x02];

fn b(ty: TypeId, k: u32) -> ByteType {
    ByteType { ty, k }
}

fn expected_labeling(f: &Fig) -> Labeling {
    let l: Labeling =
        [(0, b(f.foo, 0)), (1, b(f.foo, 1)), (2, b(f.bar, 0)), (3, b(f.bar, 1)), (4, b(f.bar, 2)), (5, b(f.bar, 3))].into();
    assert_eq!(l, fig6_fixture().labeling);
    assert_eq!(MEM, fig6_fixture().memory);
    l
}

fn reader(mem: [u64; 6]) -> impl Fn(u64, u8) -> u64 {
    move |a, _| mem.get(a as usize).copied().unwrap_or(0)
}

fn pointer_to(t: ByteType) -> VType {
    VType::Ptr { target: t, nullable: false, base: false }
}

#[test]
fn hasse_diagram_has_the_nine_edges() {
    let f = fig();
    let name = |x: ByteType| f.tt.display_byte(x).replace("int8", "int");
    let mut got: Vec<(String, String)> = f.tt.hasse_edges().into_iter().map(|(a, c)| (name(a), name(c))).collect();
    got.sort();
    let mut want: Vec<(String, String)> = [
        ("foo_0", "foo*"),
        ("foo_1", "bar*"),
        ("bar_2", "foo_0"),
        ("bar_3", "foo_1"),
        ("bar_0", "int"),
        ("bar_1", "int"),
        ("int", "word"),
        ("foo*", "word"),
        ("bar*", "word"),
    ]
    .iter()
    .map(|(a, c)| (a.to_string(), c.to_string()))
    .collect();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn given_labeling_is_valid_and_inferred() {
    let f = fig();
    let l = expected_labeling(&f);
    assert!(check_labeling(&reader(MEM), &l, &f.tt).is_empty());
    assert!(is_adjacency_closed(&l, &f.tt));
    let inferred = infer_labeling(&reader(MEM), &[(0, pointer_to(b(f.foo, 0)))], &f.tt, &|a| a < 6).unwrap();
    assert_eq!(inferred, l);
}

#[test]
fn corrupting_a_pointer_breaks_the_labeling() {
    let f = fig();
    let l = expected_labeling(&f);
    let mut mem = MEM;
    mem[1] = 0x03; // bar* now points into the middle of bar
    let v = check_labeling(&reader(mem), &l, &f.tt);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].addr, 1);
}

#[test]
fn interpretation_of_bar_3_is_the_bar_object() {
    let f = fig();
    let l = expected_labeling(&f);
    assert_eq!(interpret_byte(b(f.bar, 3), &l, &f.tt, 1), vec![0x02]);
    assert_eq!(interpret_byte(b(f.bar, 2), &l, &f.tt, 1), vec![0x00, 0x04]);
    assert_eq!(interpret_byte(b(f.bar, 0), &l, &f.tt, 1).len(), 256);
}

#[test]
fn aliasing_follows_the_order() {
    let f = fig();
    assert!(f.tt.may_alias(b(f.bar, 2), b(f.foo, 0)));
    assert!(!f.tt.may_alias(b(f.bar, 0), b(f.foo, 0)));
    assert!(!f.tt.may_alias(b(f.bar, 2), b(f.bar, 3)));
}

#[test]
fn pointer_arithmetic_and_access() {
    let f = fig();
    let one = |v| NumAbstract::constant(v, 8);
    let p = ptr_arith(&pointer_to(b(f.bar, 1)), &one(2), &f.tt).unwrap();
    assert_eq!(p, pointer_to(b(f.bar, 3)));
    assert!(ptr_arith(&pointer_to(b(f.bar, 1)), &one(3), &f.tt).is_err());

    let loaded = type_load(&pointer_to(b(f.foo, 1)), &one(0), 1, &f.tt).unwrap();
    assert_eq!(loaded, pointer_to(b(f.bar, 0)));

    let int = VType::Int(f.int);
    let err = type_store(&pointer_to(b(f.foo, 1)), &one(0), 1, &int, &NumAbstract::top(8), &f.tt);
    assert!(matches!(err, Err(TypeError::Violation(_))));
    let ok = type_store(&pointer_to(b(f.foo, 1)), &one(0), 1, &pointer_to(b(f.bar, 0)), &NumAbstract::top(8), &f.tt);
    assert!(ok.is_ok());
    assert!(type_store(&pointer_to(b(f.bar, 0)), &one(0), 1, &VType::Word, &NumAbstract::top(8), &f.tt).is_ok());
}

#[test]
fn array_bounds() {
    let mut tt = TypeTable::new(4);
    let i32_ = tt.int(32);
    let fixed = tt.add(None, TypeDef::Array { elem: i32_, len: ArrayLen::Const(4) }).unwrap();
    let var = tt.add(None, TypeDef::Array { elem: i32_, len: ArrayLen::Var("n".into()) }).unwrap();
    let unk = tt.add(None, TypeDef::Array { elem: i32_, len: ArrayLen::Unknown }).unwrap();
    tt.params.insert("n".into(), (2, 5));
    tt.finish().unwrap();
    let base = |ty| VType::Ptr { target: ByteType { ty, k: 0 }, nullable: false, base: true };
    let c = |v| NumAbstract::constant(v, 32);
    assert_eq!(ptr_arith(&base(fixed), &c(12), &tt).unwrap(), pointer_to(ByteType { ty: fixed, k: 0 }));
    assert!(ptr_arith(&base(fixed), &c(16), &tt).is_err());
    // only the minimum of `n` is guaranteed
    assert!(ptr_arith(&base(var), &c(4), &tt).is_ok());
    assert!(ptr_arith(&base(var), &c(8), &tt).is_err());
    // a scaled index keeps the element offset
    let idx = NumAbstract::binop(privguard::ir::Binop::Mul, &NumAbstract::range(0, 3, 32), &c(4));
    assert_eq!(ptr_arith(&base(fixed), &idx, &tt).unwrap(), pointer_to(ByteType { ty: fixed, k: 0 }));
    assert!(type_store(&base(unk), &c(0), 4, &VType::Word, &c(0), &tt).is_err());
    assert_eq!(type_load(&base(fixed), &c(8), 4, &tt).unwrap(), VType::Int(i32_));
}

#[test]
fn larger_types_contain_more_values() {
    let f = fig();
    let l = expected_labeling(&f);
    for &a in f.tt.nodes() {
        for &c in f.tt.nodes() {
            if f.tt.leq(a, c) {
                let (sa, sc) = (interpret_byte(a, &l, &f.tt, 1), interpret_byte(c, &l, &f.tt, 1));
                assert!(sa.iter().all(|x| sc.contains(x)), "{} ⊑ {}", f.tt.display_byte(a), f.tt.display_byte(c));
            }
        }
    }
}

#[test]
fn unrelated_pointers_do_not_overlap() {
    let f = fig();
    let l = expected_labeling(&f);
    for &a in f.tt.nodes() {
        for &c in f.tt.nodes() {
            if !f.tt.may_alias(a, c) {
                let sa = interpret(&pointer_to(a), &l, &f.tt, 1);
                let sc = interpret(&pointer_to(c), &l, &f.tt, 1);
                assert!(sa.iter().all(|x| !sc.contains(x)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

    /// A store accepted by the type check keeps the labeling valid.
    #[test]
    fn accepted_stores_preserve_labeling(addr in 0u64..6, v in 0u64..256, claim_ptr in any::<bool>()) {
        let f = fig();
        let l = expected_labeling(&f);
        let tv = match (claim_ptr, l.get(&v)) {
            (true, Some(t)) => pointer_to(*t),
            _ => VType::Word,
        };
        let ok = type_store(&pointer_to(l[&addr]), &NumAbstract::constant(0, 8), 1, &tv, &NumAbstract::constant(v, 8), &f.tt);
        if ok.is_ok() {
            let mut mem = MEM;
            mem[addr as usize] = v;
            prop_assert!(check_labeling(&reader(mem), &l, &f.tt).is_empty());
        }
    }

    #[test]
    fn order_is_a_partial_order(sizes in proptest::collection::vec(1u32..4, 1..5), picks in proptest::collection::vec(0usize..64, 16)) {
        let mut tt = TypeTable::new(1);
        let int = tt.int(8);
        let ids: Vec<TypeId> = (0..sizes.len()).map(|i| tt.declare(&format!("s{i}")).unwrap()).collect();
        let mut pi = picks.iter().cycle();
        for (i, &n) in sizes.iter().enumerate() {
            let mut fields = Vec::new();
            let mut off = 0;
            for _ in 0..n {
                // earlier structs may be embedded; any struct may be pointed to
                let p = *pi.next().unwrap();
                let ty = match p % 3 {
                    0 => int,
                    1 => tt.ptr(ids[p % ids.len()], p % 2 == 0),
                    _ if i > 0 => ids[p % i],
                    _ => int,
                };
                let sz = tt.size(ty).unwrap_or(1).max(1);
                fields.push(Field { name: None, offset: off, ty });
                off += sz;
            }
            tt.define(ids[i], TypeDef::Struct { size: off, fields });
        }
        tt.finish().unwrap();
        let nodes = tt.nodes().to_vec();
        for &a in &nodes {
            prop_assert!(tt.leq(a, a));
            for &c in &nodes {
                if a != c && tt.leq(a, c) {
                    prop_assert!(!tt.leq(c, a));
                }
                for &d in &nodes {
                    if tt.leq(a, c) && tt.leq(c, d) {
                        prop_assert!(tt.leq(a, d));
                    }
                }
            }
        }
    }
}

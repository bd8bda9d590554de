//! The two-structure memory with one-byte words: `foo` holds a `foo*` and a
//! `bar*`, `bar` holds two ints followed by an embedded `foo`.

use crate::typedom::{ByteType, Field, Labeling, TypeDef, TypeId, TypeTable};

pub struct Fig6 {
    pub table: TypeTable,
    pub foo: TypeId,
    pub bar: TypeId,
    pub int: TypeId,
    /// Bytes at addresses 0 to 5.
    pub memory: [u64; 6],
    pub labeling: Labeling,
}

impl Fig6 {
    pub fn read(&self, a: u64) -> u64 {
        self.memory.get(a as usize).copied().unwrap_or(0)
    }
}

pub fn fig6_fixture() -> Fig6 {
    let mut tt = TypeTable::new(1);
    let foo = tt.declare("foo").unwrap();
    let bar = tt.declare("bar").unwrap();
    let int = tt.int(8);
    let foo_p = tt.ptr(foo, false);
    let bar_p = tt.ptr(bar, false);
    let f = |name: &str, offset, ty| Field { name: Some(name.into()), offset, ty };
    tt.define(foo, TypeDef::Struct { size: 2, fields: vec![f("next", 0, foo_p), f("data", 1, bar_p)] });
    tt.define(bar, TypeDef::Struct { size: 4, fields: vec![f("x", 0, int), f("y", 1, int), f("f", 2, foo)] });
    tt.finish().expect("fixture types are well formed");
    let b = |ty, k| ByteType { ty, k };
    let labeling =
        [(0, b(foo, 0)), (1, b(foo, 1)), (2, b(bar, 0)), (3, b(bar, 1)), (4, b(bar, 2)), (5, b(bar, 3))].into();
    Fig6 { table: tt, foo, bar, int, memory: [0x04, 0x02, 0x00, 0xff, 0x00, 0x02], labeling }
}

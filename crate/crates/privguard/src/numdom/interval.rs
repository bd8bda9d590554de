use crate::ir::{from_signed, mask, to_signed};
use std::fmt;

/// A bitvector set described by an unsigned and a signed interval at the
/// same time. The set is the intersection of both readings; both bounds are
/// kept tight with respect to that intersection. Empty sets are represented
/// by `None` at construction time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IntervalSU {
    width: u8,
    ulo: u64,
    uhi: u64,
    slo: i64,
    shi: i64,
}

fn smin(w: u8) -> i64 {
    to_signed(1 << (w - 1), w)
}

fn smax(w: u8) -> i64 {
    (mask(w) >> 1) as i64
}

impl IntervalSU {
    pub fn top(w: u8) -> IntervalSU {
        IntervalSU { width: w, ulo: 0, uhi: mask(w), slo: smin(w), shi: smax(w) }
    }

    pub fn constant(v: u64, w: u8) -> IntervalSU {
        let v = v & mask(w);
        IntervalSU { width: w, ulo: v, uhi: v, slo: to_signed(v, w), shi: to_signed(v, w) }
    }

    pub fn unsigned(lo: u64, hi: u64, w: u8) -> Option<IntervalSU> {
        IntervalSU::new(lo, hi, smin(w), smax(w), w)
    }

    pub fn signed(lo: i64, hi: i64, w: u8) -> Option<IntervalSU> {
        IntervalSU::new(0, mask(w), lo, hi, w)
    }

    /// Intersection of both readings, in canonical form.
    pub fn new(ulo: u64, uhi: u64, slo: i64, shi: i64, w: u8) -> Option<IntervalSU> {
        let m = mask(w);
        let (ulo, uhi) = (ulo.min(m), uhi.min(m));
        let (slo, shi) = (slo.max(smin(w)), shi.min(smax(w)));
        if ulo > uhi || slo > shi {
            return None;
        }
        let mut pieces: [Option<(u64, u64)>; 2] = [None, None];
        let spieces: [Option<(u64, u64)>; 2] = if slo >= 0 {
            [Some((slo as u64, shi as u64)), None]
        } else if shi < 0 {
            [Some((from_signed(slo, w), from_signed(shi, w))), None]
        } else {
            [Some((0, shi as u64)), Some((from_signed(slo, w), m))]
        };
        for (i, p) in spieces.iter().enumerate() {
            if let Some((a, b)) = p {
                let (lo, hi) = ((*a).max(ulo), (*b).min(uhi));
                if lo <= hi {
                    pieces[i] = Some((lo, hi));
                }
            }
        }
        let ps: Vec<(u64, u64)> = pieces.iter().flatten().copied().collect();
        if ps.is_empty() {
            return None;
        }
        let nulo = ps.iter().map(|p| p.0).min().unwrap();
        let nuhi = ps.iter().map(|p| p.1).max().unwrap();
        let nslo = ps.iter().map(|p| to_signed(p.0, w)).min().unwrap();
        let nshi = ps.iter().map(|p| to_signed(p.1, w)).max().unwrap();
        Some(IntervalSU { width: w, ulo: nulo, uhi: nuhi, slo: nslo, shi: nshi })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn urange(&self) -> (u64, u64) {
        (self.ulo, self.uhi)
    }

    pub fn srange(&self) -> (i64, i64) {
        (self.slo, self.shi)
    }

    pub fn contains(&self, v: u64) -> bool {
        let s = to_signed(v, self.width);
        v >= self.ulo && v <= self.uhi && s >= self.slo && s <= self.shi
    }

    pub fn as_const(&self) -> Option<u64> {
        (self.ulo == self.uhi).then_some(self.ulo)
    }

    pub fn is_top(&self) -> bool {
        *self == IntervalSU::top(self.width)
    }

    /// Upper bound on the number of members.
    pub fn card(&self) -> u128 {
        let u = (self.uhi - self.ulo) as u128 + 1;
        let s = (self.shi as i128 - self.slo as i128) as u128 + 1;
        u.min(s)
    }

    pub fn leq(&self, o: &IntervalSU) -> bool {
        self.ulo >= o.ulo && self.uhi <= o.uhi && self.slo >= o.slo && self.shi <= o.shi
    }

    pub fn join(&self, o: &IntervalSU) -> IntervalSU {
        IntervalSU::new(
            self.ulo.min(o.ulo),
            self.uhi.max(o.uhi),
            self.slo.min(o.slo),
            self.shi.max(o.shi),
            self.width,
        )
        .expect("hull of nonempty sets is nonempty")
    }

    pub fn meet(&self, o: &IntervalSU) -> Option<IntervalSU> {
        IntervalSU::new(
            self.ulo.max(o.ulo),
            self.uhi.min(o.uhi),
            self.slo.max(o.slo),
            self.shi.min(o.shi),
            self.width,
        )
    }

    /// Widening with thresholds. Unstable bounds jump to the nearest
    /// threshold in their reading; the extreme values act as implicit
    /// thresholds.
    pub fn widen(&self, o: &IntervalSU, thresholds: &[u64]) -> IntervalSU {
        let w = self.width;
        let m = mask(w);
        let ut = |v: u64| v & m;
        let ulo = if o.ulo < self.ulo {
            thresholds.iter().map(|t| ut(*t)).filter(|t| *t <= o.ulo).max().unwrap_or(0)
        } else {
            self.ulo
        };
        let uhi = if o.uhi > self.uhi {
            thresholds.iter().map(|t| ut(*t)).filter(|t| *t >= o.uhi).min().unwrap_or(m)
        } else {
            self.uhi
        };
        let st = |t: &u64| to_signed(t & m, w);
        let slo = if o.slo < self.slo {
            thresholds.iter().map(st).chain([-1, 0]).filter(|t| *t <= o.slo).max().unwrap_or(smin(w))
        } else {
            self.slo
        };
        let shi = if o.shi > self.shi {
            thresholds.iter().map(st).chain([-1, 0]).filter(|t| *t >= o.shi).min().unwrap_or(smax(w))
        } else {
            self.shi
        };
        IntervalSU::new(ulo, uhi, slo, shi, w).expect("widening is an upper bound")
    }

    /// Same set viewed at another width (zero extension).
    pub(crate) fn with_width(&self, w: u8) -> Option<IntervalSU> {
        IntervalSU::unsigned(self.ulo, self.uhi, w)
    }
}

impl fmt::Display for IntervalSU {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(c) = self.as_const() {
            return write!(f, "{c:#x}");
        }
        write!(f, "u[{:#x},{:#x}] s[{},{}]", self.ulo, self.uhi, self.slo, self.shi)
    }
}

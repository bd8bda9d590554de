use super::congruence::{Congruence, KnownBits};
use super::interval::IntervalSU;
use crate::ir::{apply_binop, apply_unop, mask, to_signed, Binop, Unop};
use std::fmt;

/// Interval and congruence information about a bitvector of fixed width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NumAbstract {
    width: u8,
    inner: Option<(IntervalSU, Congruence)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("width mismatch: {0} vs {1}")]
pub struct WidthMismatch(pub u8, pub u8);

/// Number of enumerated values above which transfer functions fall back to
/// interval reasoning.
const ENUM_LIMIT: u128 = 64;

fn pow2(w: u8) -> u128 {
    1u128 << w
}

impl NumAbstract {
    pub fn top(w: u8) -> NumAbstract {
        NumAbstract { width: w, inner: Some((IntervalSU::top(w), Congruence::TOP)) }
    }

    pub fn bottom(w: u8) -> NumAbstract {
        NumAbstract { width: w, inner: None }
    }

    pub fn constant(v: u64, w: u8) -> NumAbstract {
        let v = v & mask(w);
        NumAbstract { width: w, inner: Some((IntervalSU::constant(v, w), Congruence::constant(v))) }
    }

    pub fn boolean(b: bool) -> NumAbstract {
        NumAbstract::constant(b as u64, 1)
    }

    pub fn range(lo: u64, hi: u64, w: u8) -> NumAbstract {
        NumAbstract::from_parts(IntervalSU::unsigned(lo, hi, w), Congruence::TOP, w)
    }

    pub fn signed_range(lo: i64, hi: i64, w: u8) -> NumAbstract {
        NumAbstract::from_parts(IntervalSU::signed(lo, hi, w), Congruence::TOP, w)
    }

    pub fn with_congruence(self, c: Congruence) -> NumAbstract {
        match self.inner {
            None => self,
            Some((i, old)) => match old.meet(&c) {
                Some(c) => NumAbstract::from_parts(Some(i), c, self.width),
                None => NumAbstract::bottom(self.width),
            },
        }
    }

    /// Smallest abstract value containing all of `vals`.
    pub fn from_values(vals: impl IntoIterator<Item = u64>, w: u8) -> NumAbstract {
        vals.into_iter().fold(NumAbstract::bottom(w), |acc, v| acc.join(&NumAbstract::constant(v, w)))
    }

    /// Builds a reduced product value.
    pub fn from_parts(itv: Option<IntervalSU>, cong: Congruence, w: u8) -> NumAbstract {
        let Some(mut itv) = itv else { return NumAbstract::bottom(w) };
        if let Some(c) = cong.as_const() {
            let c = c & mask(w);
            return if itv.contains(c) { NumAbstract::constant(c, w) } else { NumAbstract::bottom(w) };
        }
        let m = cong.modulus() as u128;
        let r = cong.residue() as u128;
        let signed_ok = m.is_power_of_two() && m <= pow2(w);
        for _ in 0..8 {
            let (ulo, uhi) = itv.urange();
            let nlo = ulo as i128 + ((r + m - ulo as u128 % m) % m) as i128;
            let nhi = uhi as i128 - ((uhi as u128 + m - r) % m) as i128;
            if nlo > uhi as i128 || nhi < ulo as i128 || nlo > nhi {
                return NumAbstract::bottom(w);
            }
            let (mut slo, mut shi) = itv.srange();
            if signed_ok {
                let mi = m as i128;
                let ri = r as i128;
                let lo = slo as i128 + (ri - slo as i128).rem_euclid(mi);
                let hi = shi as i128 - (shi as i128 - ri).rem_euclid(mi);
                if lo > hi {
                    return NumAbstract::bottom(w);
                }
                (slo, shi) = (lo as i64, hi as i64);
            }
            let Some(n) = IntervalSU::new(nlo as u64, nhi as u64, slo, shi, w) else {
                return NumAbstract::bottom(w);
            };
            if n == itv {
                break;
            }
            itv = n;
        }
        match itv.as_const() {
            Some(c) => NumAbstract::constant(c, w),
            None => NumAbstract { width: w, inner: Some((itv, cong)) },
        }
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn is_bottom(&self) -> bool {
        self.inner.is_none()
    }

    pub fn is_top(&self) -> bool {
        matches!(self.inner, Some((i, c)) if i.is_top() && c.is_top())
    }

    pub fn interval(&self) -> Option<IntervalSU> {
        self.inner.map(|p| p.0)
    }

    pub fn congruence(&self) -> Option<Congruence> {
        self.inner.map(|p| p.1)
    }

    pub fn urange(&self) -> Option<(u64, u64)> {
        self.inner.map(|p| p.0.urange())
    }

    pub fn srange(&self) -> Option<(i64, i64)> {
        self.inner.map(|p| p.0.srange())
    }

    pub fn as_const(&self) -> Option<u64> {
        self.inner.and_then(|p| p.0.as_const())
    }

    /// For width-1 values: `Some(b)` when the truth value is known.
    pub fn truth(&self) -> Option<bool> {
        self.as_const().map(|v| v != 0)
    }

    pub fn may_be_true(&self) -> bool {
        self.contains_nonzero()
    }

    pub fn may_be_false(&self) -> bool {
        self.contains(0)
    }

    fn contains_nonzero(&self) -> bool {
        match self.inner {
            None => false,
            Some((i, _)) => i.urange().1 > 0,
        }
    }

    pub fn contains(&self, v: u64) -> bool {
        match self.inner {
            None => false,
            Some((i, c)) => i.contains(v) && c.contains(v),
        }
    }

    /// Upper bound on the number of concrete members.
    pub fn card(&self) -> u128 {
        match self.inner {
            None => 0,
            Some((i, c)) => match c.modulus() {
                0 => 1,
                m => {
                    let (lo, hi) = i.urange();
                    (((hi - lo) as u128) / m as u128 + 1).min(i.card())
                }
            },
        }
    }

    /// All members when there are at most `limit` of them.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<u64>> {
        let (i, c) = self.inner?;
        if self.card() > limit as u128 {
            return None;
        }
        let (lo, hi) = i.urange();
        let step = c.modulus().max(1);
        let mut out = Vec::new();
        let mut v = lo;
        loop {
            if self.contains(v) {
                out.push(v);
            }
            match v.checked_add(step) {
                Some(n) if n <= hi => v = n,
                _ => break,
            }
        }
        Some(out)
    }

    pub fn leq(&self, o: &NumAbstract) -> bool {
        match (self.inner, o.inner) {
            (None, _) => true,
            (_, None) => false,
            (Some((i, c)), Some((oi, oc))) => i.leq(&oi) && c.leq(&oc),
        }
    }

    pub fn join(&self, o: &NumAbstract) -> NumAbstract {
        assert_eq!(self.width, o.width, "join of values with different widths");
        match (self.inner, o.inner) {
            (None, _) => *o,
            (_, None) => *self,
            (Some((i, c)), Some((oi, oc))) => NumAbstract::from_parts(Some(i.join(&oi)), c.join(&oc), self.width),
        }
    }

    pub fn try_join(&self, o: &NumAbstract) -> Result<NumAbstract, WidthMismatch> {
        if self.width != o.width {
            return Err(WidthMismatch(self.width, o.width));
        }
        Ok(self.join(o))
    }

    pub fn meet(&self, o: &NumAbstract) -> NumAbstract {
        match (self.inner, o.inner) {
            (Some((i, c)), Some((oi, oc))) => match c.meet(&oc) {
                Some(c) => NumAbstract::from_parts(i.meet(&oi), c, self.width),
                None => NumAbstract::bottom(self.width),
            },
            _ => NumAbstract::bottom(self.width),
        }
    }

    pub fn widen(&self, o: &NumAbstract, thresholds: &[u64]) -> NumAbstract {
        match (self.inner, o.inner) {
            (None, _) => *o,
            (_, None) => *self,
            (Some((i, c)), Some((oi, oc))) => {
                if o.leq(self) {
                    return *self;
                }
                let ni = i.widen(&oi, thresholds);
                let nc = if oc.leq(&c) { c } else { c.join(&oc) };
                NumAbstract::from_parts(Some(ni), nc, self.width)
            }
        }
    }

    fn known_bits(&self) -> KnownBits {
        let c = self.congruence().unwrap_or(Congruence::TOP);
        let mut kb = KnownBits::of(&c, self.width);
        if let Some((_, hi)) = self.urange() {
            // bits above the highest set bit of the upper bound are zero
            kb.zero |= mask(self.width) & !(hi.checked_next_power_of_two().map_or(u64::MAX, |p| p.wrapping_sub(1)) | hi);
        }
        kb
    }

    fn bottom_of(a: &NumAbstract, b: &NumAbstract, w: u8) -> Option<NumAbstract> {
        (a.is_bottom() || b.is_bottom()).then(|| NumAbstract::bottom(w))
    }

    /// Exact result by enumeration when both operands are small sets.
    fn by_enumeration(op: Binop, a: &NumAbstract, b: &NumAbstract, w: u8) -> Option<NumAbstract> {
        if a.card() * b.card() > ENUM_LIMIT {
            return None;
        }
        let (xs, ys) = (a.enumerate(ENUM_LIMIT as usize)?, b.enumerate(ENUM_LIMIT as usize)?);
        let mut out = NumAbstract::bottom(w);
        for x in &xs {
            for y in &ys {
                if let Ok(v) = apply_binop(op, *x, *y, a.width, b.width) {
                    out = out.join(&NumAbstract::constant(v, w));
                }
            }
        }
        Some(out)
    }

    /// Abstract counterpart of [`apply_binop`]. Division by zero contributes
    /// no result.
    pub fn binop(op: Binop, a: &NumAbstract, b: &NumAbstract) -> NumAbstract {
        let w = op.result_width(a.width, b.width).expect("ill-typed abstract binop");
        if let Some(bot) = NumAbstract::bottom_of(a, b, w) {
            return bot;
        }
        if let Some(r) = NumAbstract::by_enumeration(op, a, b, w) {
            return r;
        }
        let (ai, ac) = a.inner.unwrap();
        let (bi, bc) = b.inner.unwrap();
        let aw = a.width;
        let (aulo, auhi) = ai.urange();
        let (bulo, buhi) = bi.urange();
        let (aslo, ashi) = ai.srange();
        let (bslo, bshi) = bi.srange();
        let m = pow2(aw);
        let smin = -(1i128 << (aw - 1));
        let smax = (1i128 << (aw - 1)) - 1;
        // unsigned and signed readings of a candidate result hull, each kept
        // only when free of wrap-around
        let uread = |lo: i128, hi: i128| -> Option<(u64, u64)> {
            if lo >= 0 && hi < m as i128 {
                Some((lo as u64, hi as u64))
            } else if lo >= m as i128 && hi < 2 * m as i128 {
                Some(((lo - m as i128) as u64, (hi - m as i128) as u64))
            } else if lo < 0 && hi < 0 && lo >= -(m as i128) {
                Some(((lo + m as i128) as u64, (hi + m as i128) as u64))
            } else {
                None
            }
        };
        let sread = |lo: i128, hi: i128| -> Option<(i64, i64)> {
            if lo >= smin && hi <= smax {
                Some((lo as i64, hi as i64))
            } else {
                None
            }
        };
        let build = |u: Option<(u64, u64)>, s: Option<(i64, i64)>, c: Congruence| {
            let (ulo, uhi) = u.unwrap_or((0, mask(w)));
            let (slo, shi) = s.unwrap_or((i64::MIN, i64::MAX));
            NumAbstract::from_parts(IntervalSU::new(ulo, uhi, slo, shi, w), c, w)
        };
        let kb_result = |kb: KnownBits| kb.to_congruence();
        match op {
            Binop::Add | Binop::Sub => {
                let sign = if op == Binop::Add { 1 } else { -1 };
                let (ulo, uhi) = if sign == 1 {
                    (aulo as i128 + bulo as i128, auhi as i128 + buhi as i128)
                } else {
                    (aulo as i128 - buhi as i128, auhi as i128 - bulo as i128)
                };
                let (slo, shi) = if sign == 1 {
                    (aslo as i128 + bslo as i128, ashi as i128 + bshi as i128)
                } else {
                    (aslo as i128 - bshi as i128, ashi as i128 - bslo as i128)
                };
                let c = if sign == 1 { ac.add(&bc) } else { ac.sub(&bc) };
                let c = if ulo >= 0 && uhi < m as i128 { c } else { c.wrap(w) };
                build(uread(ulo, uhi), sread(slo, shi), c)
            }
            Binop::Mul => {
                let ulo = aulo as u128 * bulo as u128;
                let uhi = auhi as u128 * buhi as u128;
                let u = (uhi < m).then_some((ulo as u64, uhi as u64));
                let cs = [aslo as i128 * bslo as i128, aslo as i128 * bshi as i128, ashi as i128 * bslo as i128, ashi as i128 * bshi as i128];
                let s = sread(*cs.iter().min().unwrap(), *cs.iter().max().unwrap());
                let c = if u.is_some() { ac.mul(&bc) } else { ac.mul(&bc).wrap(w) };
                build(u, s, c)
            }
            Binop::Udiv => {
                let blo = bulo.max(1);
                if buhi == 0 {
                    return NumAbstract::bottom(w);
                }
                build(Some((aulo / buhi, auhi / blo)), None, Congruence::TOP)
            }
            Binop::Urem => {
                if buhi == 0 {
                    return NumAbstract::bottom(w);
                }
                let hi = auhi.min(buhi - 1);
                let c = match (bc.as_const(), ac.modulus()) {
                    (Some(d), am) if d != 0 && am != 0 && am % d == 0 => Congruence::new(d, ac.residue() % d),
                    _ => Congruence::TOP,
                };
                if auhi < bulo {
                    return *a;
                }
                build(Some((0, hi)), None, c)
            }
            Binop::Sdiv => {
                let mut lo = i128::MAX;
                let mut hi = i128::MIN;
                let mut any = false;
                for (pl, ph) in [(bslo as i128, (bshi as i128).min(-1)), ((bslo as i128).max(1), bshi as i128)] {
                    if pl > ph {
                        continue;
                    }
                    any = true;
                    for x in [aslo as i128, ashi as i128] {
                        for y in [pl, ph] {
                            let q = x / y;
                            lo = lo.min(q);
                            hi = hi.max(q);
                        }
                    }
                }
                if !any {
                    return NumAbstract::bottom(w);
                }
                build(None, sread(lo, hi), Congruence::TOP)
            }
            Binop::Srem => {
                let mb = (bslo as i128).abs().max((bshi as i128).abs()) - 1;
                let (lo, hi) = if aslo >= 0 {
                    (0, (ashi as i128).min(mb))
                } else if ashi <= 0 {
                    ((aslo as i128).max(-mb), 0)
                } else {
                    ((aslo as i128).max(-mb), (ashi as i128).min(mb))
                };
                build(None, sread(lo, hi), Congruence::TOP)
            }
            Binop::And => {
                let c = kb_result(a.known_bits().and(b.known_bits()));
                build(Some((0, auhi.min(buhi))), and_signed(aslo, bslo), c)
            }
            Binop::Or => {
                let hi = (auhi | buhi).checked_next_power_of_two().map_or(mask(w), |p| p.wrapping_sub(1)) | auhi | buhi;
                let c = kb_result(a.known_bits().or(b.known_bits()));
                build(Some((aulo.max(bulo), hi.min(mask(w)))), None, c)
            }
            Binop::Xor => {
                let hi = (auhi | buhi).checked_next_power_of_two().map_or(mask(w), |p| p.wrapping_sub(1)) | auhi | buhi;
                let c = kb_result(a.known_bits().xor(b.known_bits()));
                build(Some((0, hi.min(mask(w)))), None, c)
            }
            Binop::Shl | Binop::Shr | Binop::Sar => {
                if buhi - bulo >= aw as u64 + 1 && bulo < aw as u64 {
                    return NumAbstract::top(w);
                }
                let mut out = NumAbstract::bottom(w);
                let mut k = bulo;
                loop {
                    if bc.contains(k) || k >= aw as u64 {
                        out = out.join(&shift_by(op, a, k));
                    }
                    if k >= buhi || k >= aw as u64 {
                        break;
                    }
                    k += 1;
                }
                out
            }
            Binop::Concat => {
                let wb = b.width;
                let ulo = ((aulo as u128) << wb) | bulo as u128;
                let uhi = ((auhi as u128) << wb) | buhi as u128;
                let c = ac.mul(&Congruence::constant(1u64 << wb)).add(&bc);
                build(Some((ulo as u64, uhi as u64)), None, c)
            }
            Binop::Eq | Binop::Ne | Binop::Ult | Binop::Ugt | Binop::Slt | Binop::Sgt => {
                match compare(op, a, b) {
                    Some(t) => NumAbstract::boolean(t),
                    None => NumAbstract::top(1),
                }
            }
        }
    }

    pub fn unop(op: Unop, a: &NumAbstract) -> NumAbstract {
        let w = op.result_width(a.width).expect("ill-typed abstract unop");
        let Some((ai, ac)) = a.inner else { return NumAbstract::bottom(w) };
        if let Some(c) = ai.as_const() {
            return NumAbstract::constant(apply_unop(op, c, a.width), w);
        }
        let (ulo, uhi) = ai.urange();
        let (slo, shi) = ai.srange();
        let aw = a.width;
        match op {
            Unop::Not => {
                let m = mask(aw);
                let c = Congruence::constant(m).add(&ac.neg());
                NumAbstract::from_parts(IntervalSU::new(m - uhi, m - ulo, -1 - shi, -1 - slo, w), c, w)
            }
            Unop::Neg => NumAbstract::binop(Binop::Sub, &NumAbstract::constant(0, aw), a),
            Unop::Uext(_) => NumAbstract::from_parts(ai.with_width(w), ac, w),
            Unop::Sext(_) => {
                let c = if slo >= 0 { ac } else { ac.wrap(aw) };
                let itv = IntervalSU::signed(slo, shi, w);
                let itv = if slo >= 0 { itv.and_then(|i| i.meet(&IntervalSU::unsigned(ulo, uhi, w)?)) } else { itv };
                NumAbstract::from_parts(itv, c, w)
            }
            Unop::Extract(lo, hi) => {
                let kb = a.known_bits().shr(lo as u32).resize(w);
                let c = kb.to_congruence();
                if hi as u32 + 1 >= 64 || uhi < (1u64 << (hi + 1)) {
                    NumAbstract::from_parts(IntervalSU::unsigned(ulo >> lo, uhi >> lo, w), c, w)
                } else {
                    NumAbstract::from_parts(Some(IntervalSU::top(w)), c, w)
                }
            }
        }
    }

    pub fn to_signed_string(&self) -> String {
        match self.srange() {
            None => "⊥".into(),
            Some((lo, hi)) => format!("[{lo},{hi}]"),
        }
    }
}

/// Signed bounds of `a & b`: non-negative whenever either operand is.
fn and_signed(aslo: i64, bslo: i64) -> Option<(i64, i64)> {
    (aslo >= 0 || bslo >= 0).then_some((0, i64::MAX))
}

fn shift_by(op: Binop, a: &NumAbstract, k: u64) -> NumAbstract {
    let w = a.width;
    let (ai, ac) = a.inner.unwrap();
    let (ulo, uhi) = ai.urange();
    let (slo, shi) = ai.srange();
    if k >= w as u64 {
        return match op {
            Binop::Sar => NumAbstract::binop(Binop::Sar, a, &NumAbstract::constant(w as u64 - 1, w)),
            _ => NumAbstract::constant(0, w),
        };
    }
    let k32 = k as u32;
    match op {
        Binop::Shl => {
            let u = ((uhi as u128) << k) < pow2(w);
            let c = ac.mul(&Congruence::constant(1 << k));
            let c = if u { c } else { c.wrap(w) };
            let s_ok = (slo as i128) << k >= -(1i128 << (w - 1)) && ((shi as i128) << k) < (1i128 << (w - 1));
            let itv = match (u, s_ok) {
                (true, _) => IntervalSU::unsigned(ulo << k, uhi << k, w),
                (false, true) => IntervalSU::signed(slo << k, shi << k, w),
                _ => Some(IntervalSU::top(w)),
            };
            NumAbstract::from_parts(itv, c, w)
        }
        Binop::Shr => {
            let c = KnownBits::of(&ac, w).shr(k32).to_congruence();
            NumAbstract::from_parts(IntervalSU::unsigned(ulo >> k, uhi >> k, w), c, w)
        }
        _ => {
            let c = if slo >= 0 { KnownBits::of(&ac, w).shr(k32).to_congruence() } else { Congruence::TOP };
            NumAbstract::from_parts(IntervalSU::signed(slo >> k, shi >> k, w), c, w)
        }
    }
}

/// Truth value of a comparison when it is the same for all members.
pub fn compare(op: Binop, a: &NumAbstract, b: &NumAbstract) -> Option<bool> {
    let (ai, ac) = a.inner?;
    let (bi, bc) = b.inner?;
    let (aulo, auhi) = ai.urange();
    let (bulo, buhi) = bi.urange();
    let (aslo, ashi) = ai.srange();
    let (bslo, bshi) = bi.srange();
    let disjoint = ai.meet(&bi).is_none() || ac.meet(&bc).is_none();
    let same = matches!((ai.as_const(), bi.as_const()), (Some(x), Some(y)) if x == y);
    match op {
        Binop::Eq | Binop::Ne => {
            let r = if same {
                Some(true)
            } else if disjoint {
                Some(false)
            } else {
                None
            };
            if op == Binop::Ne {
                r.map(|t| !t)
            } else {
                r
            }
        }
        Binop::Ult => cmp_bounds(aulo, auhi, bulo, buhi),
        Binop::Ugt => cmp_bounds(bulo, buhi, aulo, auhi),
        Binop::Slt => cmp_bounds(aslo, ashi, bslo, bshi),
        Binop::Sgt => cmp_bounds(bslo, bshi, aslo, ashi),
        _ => None,
    }
}

fn cmp_bounds<T: Ord>(alo: T, ahi: T, blo: T, bhi: T) -> Option<bool> {
    if ahi < blo {
        Some(true)
    } else if alo >= bhi {
        Some(false)
    } else {
        None
    }
}

/// Refines both operands under the assumption that `a op b` evaluates to `truth`.
pub fn refine_compare(op: Binop, a: &NumAbstract, b: &NumAbstract, truth: bool) -> (NumAbstract, NumAbstract) {
    let w = a.width;
    if a.is_bottom() || b.is_bottom() {
        return (NumAbstract::bottom(w), NumAbstract::bottom(w));
    }
    let m = mask(w);
    let smin = to_signed(1 << (w - 1), w);
    let smax = (m >> 1) as i64;
    // normalize to one of: eq, ne, a < b, a <= b (unsigned or signed)
    #[derive(Clone, Copy, PartialEq)]
    enum Rel {
        Eq,
        Ne,
        Lt,
        Le,
    }
    let (rel, signed, swap) = match (op, truth) {
        (Binop::Eq, true) | (Binop::Ne, false) => (Rel::Eq, false, false),
        (Binop::Eq, false) | (Binop::Ne, true) => (Rel::Ne, false, false),
        (Binop::Ult, true) => (Rel::Lt, false, false),
        (Binop::Ult, false) => (Rel::Le, false, true),
        (Binop::Ugt, true) => (Rel::Lt, false, true),
        (Binop::Ugt, false) => (Rel::Le, false, false),
        (Binop::Slt, true) => (Rel::Lt, true, false),
        (Binop::Slt, false) => (Rel::Le, true, true),
        (Binop::Sgt, true) => (Rel::Lt, true, true),
        (Binop::Sgt, false) => (Rel::Le, true, false),
        _ => return (*a, *b),
    };
    match rel {
        Rel::Eq => {
            let r = a.meet(b);
            (r, r)
        }
        Rel::Ne => {
            let trim = |x: &NumAbstract, c: Option<u64>| -> NumAbstract {
                let Some(c) = c else { return *x };
                let (lo, hi) = x.urange().unwrap();
                let (slo, shi) = x.srange().unwrap();
                let cs = to_signed(c, w);
                let mut r = *x;
                if lo == c {
                    r = r.meet(&NumAbstract::range(c.saturating_add(1).min(m), m, w));
                    if c == m {
                        r = NumAbstract::bottom(w);
                    }
                } else if hi == c {
                    r = r.meet(&NumAbstract::range(0, c - 1, w));
                }
                if slo == cs && cs < smax {
                    r = r.meet(&NumAbstract::signed_range(cs + 1, smax, w));
                } else if shi == cs && cs > smin {
                    r = r.meet(&NumAbstract::signed_range(smin, cs - 1, w));
                }
                r
            };
            (trim(a, b.as_const()), trim(b, a.as_const()))
        }
        Rel::Lt | Rel::Le => {
            let (x, y) = if swap { (b, a) } else { (a, b) };
            let strict = rel == Rel::Lt;
            let (nx, ny) = if signed {
                let (xlo, _) = x.srange().unwrap();
                let (_, yhi) = y.srange().unwrap();
                let xmax = if strict { yhi as i128 - 1 } else { yhi as i128 };
                let ymin = if strict { xlo as i128 + 1 } else { xlo as i128 };
                if xmax < smin as i128 || ymin > smax as i128 {
                    return (NumAbstract::bottom(w), NumAbstract::bottom(w));
                }
                (
                    x.meet(&NumAbstract::signed_range(smin, xmax as i64, w)),
                    y.meet(&NumAbstract::signed_range(ymin as i64, smax, w)),
                )
            } else {
                let (xlo, _) = x.urange().unwrap();
                let (_, yhi) = y.urange().unwrap();
                let xmax = if strict { yhi as i128 - 1 } else { yhi as i128 };
                let ymin = if strict { xlo as i128 + 1 } else { xlo as i128 };
                if xmax < 0 || ymin > m as i128 {
                    return (NumAbstract::bottom(w), NumAbstract::bottom(w));
                }
                (x.meet(&NumAbstract::range(0, xmax as u64, w)), y.meet(&NumAbstract::range(ymin as u64, m, w)))
            };
            if swap {
                (ny, nx)
            } else {
                (nx, ny)
            }
        }
    }
}

impl fmt::Display for NumAbstract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.inner {
            None => write!(f, "⊥:{}", self.width),
            Some((i, c)) => {
                if i.as_const().is_some() || c.is_top() {
                    write!(f, "{i}:{}", self.width)
                } else {
                    write!(f, "{i} {c}:{}", self.width)
                }
            }
        }
    }
}

use crate::ir::mask;
use std::fmt;

/// Moduli above this are weakened to keep the lattice height bounded.
pub const MODULUS_CAP: u64 = 1 << 16;

/// `{ x : x ≡ r (mod m) }` over the unsigned reading. `m = 0` is the constant `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Congruence {
    m: u64,
    r: u64,
}

/// Mask of the low `k` bits, `k` possibly zero.
fn low(k: u32) -> u64 {
    if k == 0 {
        0
    } else {
        mask(k.min(64) as u8)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Congruence {
    pub const TOP: Congruence = Congruence { m: 1, r: 0 };

    pub fn constant(v: u64) -> Congruence {
        Congruence { m: 0, r: v }
    }

    /// Residue is reduced; a modulus above the cap is weakened to a divisor.
    pub fn new(m: u64, r: u64) -> Congruence {
        Congruence::from_wide(m as u128, r as u128)
    }

    fn from_wide(m: u128, r: u128) -> Congruence {
        if m == 0 {
            return Congruence { m: 0, r: r as u64 };
        }
        let m = if m > MODULUS_CAP as u128 { gcd(m, MODULUS_CAP as u128) } else { m };
        Congruence { m: m as u64, r: (r % m) as u64 }
    }

    pub fn modulus(&self) -> u64 {
        self.m
    }

    pub fn residue(&self) -> u64 {
        self.r
    }

    pub fn as_const(&self) -> Option<u64> {
        (self.m == 0).then_some(self.r)
    }

    pub fn is_top(&self) -> bool {
        self.m == 1
    }

    pub fn contains(&self, v: u64) -> bool {
        if self.m == 0 {
            v == self.r
        } else {
            v % self.m == self.r
        }
    }

    pub fn leq(&self, o: &Congruence) -> bool {
        match (self.m, o.m) {
            (_, 0) => self.m == 0 && self.r == o.r,
            (0, om) => self.r % om == o.r,
            (m, om) => m % om == 0 && self.r % om == o.r,
        }
    }

    pub fn join(&self, o: &Congruence) -> Congruence {
        let d = (self.r as i128 - o.r as i128).unsigned_abs();
        let m = gcd(gcd(self.m as u128, o.m as u128), d);
        Congruence::from_wide(m, self.r as u128)
    }

    /// Sound over-approximation of the intersection; `None` when empty.
    pub fn meet(&self, o: &Congruence) -> Option<Congruence> {
        match (self.m, o.m) {
            (0, _) => o.contains(self.r).then_some(*self),
            (_, 0) => self.contains(o.r).then_some(*o),
            (a, b) => {
                let g = gcd(a as u128, b as u128) as u64;
                if self.r % g != o.r % g {
                    return None;
                }
                if a % b == 0 {
                    return Some(*self);
                }
                if b % a == 0 {
                    return Some(*o);
                }
                let l = (a / g) as u128 * b as u128;
                if l <= MODULUS_CAP as u128 {
                    let x = (0..l / a as u128).map(|k| self.r as u128 + k * a as u128).find(|x| x % b as u128 == o.r as u128);
                    return x.map(|x| Congruence::from_wide(l, x));
                }
                Some(if a >= b { *self } else { *o })
            }
        }
    }

    /// Weakening to account for arithmetic modulo `2^w`.
    pub fn wrap(&self, w: u8) -> Congruence {
        if self.m == 0 {
            return Congruence::constant(self.r & mask(w));
        }
        Congruence::from_wide(gcd(self.m as u128, 1u128 << w), self.r as u128)
    }

    pub fn add(&self, o: &Congruence) -> Congruence {
        if let (Some(a), Some(b)) = (self.as_const(), o.as_const()) {
            return Congruence::from_wide(0, a as u128 + b as u128);
        }
        let m = gcd(self.m as u128, o.m as u128);
        Congruence::from_wide(m, self.r as u128 + o.r as u128)
    }

    /// Integer difference; a negative constant result is stored modulo 2^64.
    pub fn sub(&self, o: &Congruence) -> Congruence {
        if let (Some(a), Some(b)) = (self.as_const(), o.as_const()) {
            return Congruence::constant(a.wrapping_sub(b));
        }
        let m = gcd(self.m as u128, o.m as u128);
        Congruence::from_wide(m, self.r as u128 + m - (o.r as u128 % m))
    }

    /// Negation of a non-constant congruence.
    pub fn neg(&self) -> Congruence {
        if self.m == 0 {
            return *self;
        }
        Congruence::new(self.m, (self.m - self.r) % self.m)
    }

    pub fn mul(&self, o: &Congruence) -> Congruence {
        let (a, b) = (self.m as u128, o.m as u128);
        let (ra, rb) = (self.r as u128, o.r as u128);
        if a == 0 && b == 0 {
            return Congruence::constant((ra.wrapping_mul(rb)) as u64);
        }
        let m = gcd(gcd(a.saturating_mul(b), a.saturating_mul(rb)), b.saturating_mul(ra));
        if m == 0 {
            return Congruence::constant(0);
        }
        Congruence::from_wide(m, (ra % m) * (rb % m))
    }
}

impl fmt::Display for Congruence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.m {
            0 => write!(f, "={:#x}", self.r),
            1 => f.write_str("*"),
            m => write!(f, "{} mod {}", self.r, m),
        }
    }
}

/// Bits known to be zero or one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnownBits {
    pub zero: u64,
    pub one: u64,
    pub width: u8,
}

impl KnownBits {
    /// The low bits fixed by a congruence whose modulus has `t` trailing zeros.
    pub fn of(c: &Congruence, w: u8) -> KnownBits {
        let known = match c.as_const() {
            Some(_) => mask(w),
            None => low(c.modulus().trailing_zeros().min(w as u32)),
        };
        KnownBits { zero: known & !c.residue(), one: known & c.residue(), width: w }
    }

    /// Congruence modulo the longest run of known low bits.
    pub fn to_congruence(self) -> Congruence {
        let known = (self.zero | self.one) & mask(self.width);
        let t = known.trailing_ones();
        if t >= self.width as u32 {
            Congruence::constant(self.one & mask(self.width))
        } else {
            Congruence::new(1 << t, self.one & low(t))
        }
    }

    pub fn and(self, o: KnownBits) -> KnownBits {
        KnownBits { zero: self.zero | o.zero, one: self.one & o.one, width: self.width }
    }

    pub fn or(self, o: KnownBits) -> KnownBits {
        KnownBits { zero: self.zero & o.zero, one: self.one | o.one, width: self.width }
    }

    pub fn xor(self, o: KnownBits) -> KnownBits {
        let known = (self.zero | self.one) & (o.zero | o.one);
        let v = self.one ^ o.one;
        KnownBits { zero: known & !v, one: known & v, width: self.width }
    }

    pub fn not(self) -> KnownBits {
        KnownBits { zero: self.one, one: self.zero, width: self.width }
    }

    pub fn shl(self, k: u32) -> KnownBits {
        if k >= self.width as u32 {
            return KnownBits { zero: mask(self.width), one: 0, width: self.width };
        }
        let m = mask(self.width);
        KnownBits { zero: ((self.zero << k) | low(k)) & m, one: (self.one << k) & m, width: self.width }
    }

    pub fn shr(self, k: u32) -> KnownBits {
        if k >= self.width as u32 {
            return KnownBits { zero: mask(self.width), one: 0, width: self.width };
        }
        let high = mask(self.width) & !(mask(self.width) >> k);
        KnownBits { zero: (self.zero >> k) | high, one: self.one >> k, width: self.width }
    }

    pub fn resize(self, w: u8) -> KnownBits {
        let m = mask(w);
        let ext = m & !mask(self.width);
        KnownBits { zero: (self.zero & m) | ext, one: self.one & m, width: w }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_of_constants_uses_gcd() {
        let c = Congruence::constant(4).join(&Congruence::constant(12));
        assert_eq!((c.modulus(), c.residue()), (8, 4));
        assert!(Congruence::constant(4).leq(&c) && Congruence::constant(12).leq(&c));
    }

    #[test]
    fn modulus_is_capped() {
        let c = Congruence::new(3 << 17, 5);
        assert!(c.modulus() <= MODULUS_CAP);
        assert!(c.contains(5) && c.contains(5 + (3 << 17)));
    }

    #[test]
    fn or_with_one_sets_low_bit() {
        let kb = KnownBits::of(&Congruence::TOP, 32).or(KnownBits::of(&Congruence::constant(1), 32));
        assert_eq!(kb.to_congruence(), Congruence::new(2, 1));
    }

    #[test]
    fn meet_combines_moduli() {
        let c = Congruence::new(4, 1).meet(&Congruence::new(6, 3)).unwrap();
        assert_eq!((c.modulus(), c.residue()), (12, 9));
        assert!(Congruence::new(4, 1).meet(&Congruence::new(2, 0)).is_none());
    }
}

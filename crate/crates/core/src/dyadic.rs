//! Dyadic addresses of torus points and the digit dynamics acting on them.
//!
//! A point `x = (x1, x2)` of the unit torus is identified with the pair of
//! binary expansions `x_i = sum_n 2^-n d_i(n)`. Everything here works on
//! finite truncations: a [`DigitAddress`] of depth `D` stands for the dyadic
//! square of side `2^-D` whose lower-left corner has those digits.
//!
//! The digit map acts by conditional flips. Stage `s` flips digit `s` of the
//! first coordinate (odd `s`) or of the second coordinate (even `s`), and
//! does so exactly when digit `s + 1` of the *other* coordinate is one.
//! Composing all stages gives a two-to-one map whose two preimages differ by
//! the involution [`sigma`], which flips `d1(n)` for odd `n` and `d2(n)` for
//! even `n`.
//!
//! The full-measure set on which the infinite-depth map is exactly two-to-one
//! (no eventually constant `d1(2n)` or `d2(2n+1)` tails) is not decidable at
//! finite depth and is not modelled; uniform sampling misses its complement
//! almost surely.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Digits are packed into one `u64` per coordinate.
pub const MAX_DEPTH: u32 = 64;

/// A point of `[0, 1)^2` with coordinates taken mod 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    pub x1: f64,
    pub x2: f64,
}

#[inline]
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid of a tiny negative number rounds up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed difference `a - b` reduced to `[-1/2, 1/2)`.
#[inline]
pub fn torus_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

impl TorusPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1: wrap_unit(x1), x2: wrap_unit(x2) }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.x1, self.x2]
    }

    /// Euclidean distance on the flat torus.
    pub fn distance(self, other: TorusPoint) -> f64 {
        torus_delta(self.x1, other.x1).hypot(torus_delta(self.x2, other.x2))
    }
}

impl From<[f64; 2]> for TorusPoint {
    fn from(p: [f64; 2]) -> Self {
        TorusPoint::new(p[0], p[1])
    }
}

/// Which of the two coordinate digit strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    First,
    Second,
}

/// A dyadic cylinder: `depth` binary digits for each coordinate.
///
/// Digit `n` (1-based, most significant first) of a coordinate lives at bit
/// `depth - n` of its word, so each word is the integer `floor(x * 2^depth)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DigitAddress {
    depth: u32,
    d1: u64,
    d2: u64,
}

#[inline]
fn low_mask(depth: u32) -> u64 {
    if depth >= 64 {
        u64::MAX
    } else {
        (1u64 << depth) - 1
    }
}

/// Bits for the positions `n <= max_pos` with `n % 2 == parity`.
fn position_mask(depth: u32, parity: u32, max_pos: u32) -> u64 {
    (1..=max_pos.min(depth))
        .filter(|n| n % 2 == parity)
        .fold(0u64, |m, n| m | (1u64 << (depth - n)))
}

fn check_depth(depth: u32) -> Result<()> {
    if depth == 0 || depth > MAX_DEPTH {
        Err(Error::InvalidDepth(depth))
    } else {
        Ok(())
    }
}

impl DigitAddress {
    /// Builds an address from packed words; bits above `depth` are rejected.
    pub fn from_words(depth: u32, d1: u64, d2: u64) -> Result<Self> {
        check_depth(depth)?;
        let m = low_mask(depth);
        if d1 & !m != 0 || d2 & !m != 0 {
            return Err(Error::Parse {
                what: "digit address",
                reason: format!("words do not fit in {depth} digits"),
            });
        }
        Ok(Self { depth, d1, d2 })
    }

    /// Builds an address from explicit digit slices (entries must be 0 or 1).
    pub fn from_digits(digits1: &[u8], digits2: &[u8]) -> Result<Self> {
        if digits1.len() != digits2.len() {
            return Err(Error::Parse {
                what: "digit address",
                reason: format!("digit strings differ in length ({} vs {})", digits1.len(), digits2.len()),
            });
        }
        let depth = u32::try_from(digits1.len()).map_err(|_| Error::InvalidDepth(u32::MAX))?;
        check_depth(depth)?;
        let pack = |ds: &[u8]| -> Result<u64> {
            ds.iter().try_fold(0u64, |w, &b| match b {
                0 | 1 => Ok((w << 1) | u64::from(b)),
                _ => Err(Error::Parse { what: "digit address", reason: format!("digit {b} is not binary") }),
            })
        };
        Ok(Self { depth, d1: pack(digits1)?, d2: pack(digits2)? })
    }

    pub fn zeros(depth: u32) -> Result<Self> {
        Self::from_words(depth, 0, 0)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn words(&self) -> (u64, u64) {
        (self.d1, self.d2)
    }

    /// Digit `n` (1-based) of the given coordinate. Panics if `n` is out of range.
    pub fn digit(&self, coord: Coord, n: u32) -> u8 {
        assert!(n >= 1 && n <= self.depth, "digit position {n} outside 1..={}", self.depth);
        let w = match coord {
            Coord::First => self.d1,
            Coord::Second => self.d2,
        };
        ((w >> (self.depth - n)) & 1) as u8
    }

    pub fn digits(&self, coord: Coord) -> Vec<u8> {
        (1..=self.depth).map(|n| self.digit(coord, n)).collect()
    }

    fn flip(&mut self, coord: Coord, n: u32) {
        let bit = 1u64 << (self.depth - n);
        match coord {
            Coord::First => self.d1 ^= bit,
            Coord::Second => self.d2 ^= bit,
        }
    }

    /// Keeps the first `depth` digits of each coordinate.
    pub fn truncate(&self, depth: u32) -> Result<Self> {
        check_depth(depth)?;
        if depth > self.depth {
            return Err(Error::DepthTooShallow { depth: self.depth, needed: depth });
        }
        let shift = self.depth - depth;
        Ok(Self { depth, d1: self.d1 >> shift, d2: self.d2 >> shift })
    }

    /// Row-major index `d2 * 2^depth + d1` of the cylinder among the `4^depth` squares.
    pub fn box_index(&self) -> usize {
        assert!(self.depth <= 31, "box index only defined for depth <= 31");
        ((self.d2 << self.depth) | self.d1) as usize
    }

    pub fn from_box_index(depth: u32, index: usize) -> Result<Self> {
        if depth > 31 {
            return Err(Error::InvalidDepth(depth));
        }
        let m = low_mask(depth);
        let i = index as u64;
        Self::from_words(depth, i & m, (i >> depth) & m)
    }

    /// Side length `2^-depth` of the cylinder.
    pub fn side(&self) -> f64 {
        (-f64::from(self.depth)).exp2()
    }
}

impl fmt::Display for DigitAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in 1..=self.depth {
            write!(f, "{}", self.digit(Coord::First, n))?;
        }
        f.write_str("/")?;
        for n in 1..=self.depth {
            write!(f, "{}", self.digit(Coord::Second, n))?;
        }
        Ok(())
    }
}

impl FromStr for DigitAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.trim().split_once('/').ok_or_else(|| Error::Parse {
            what: "digit address",
            reason: format!("expected `bits/bits`, got {s:?}"),
        })?;
        let parse = |part: &str| -> Result<Vec<u8>> {
            part.chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(Error::Parse { what: "digit address", reason: format!("unexpected character {c:?}") }),
                })
                .collect()
        };
        DigitAddress::from_digits(&parse(a)?, &parse(b)?)
    }
}

/// Truncated binary expansion of `p` (never the all-ones tail form).
pub fn encode(p: TorusPoint, depth: u32) -> Result<DigitAddress> {
    check_depth(depth)?;
    let scale = f64::from(depth).exp2();
    let word = |x: f64| -> u64 {
        let v = (wrap_unit(x) * scale).floor();
        // x < 1 keeps v below 2^depth except for rounding at depth 64
        (v as u64).min(low_mask(depth))
    };
    Ok(DigitAddress { depth, d1: word(p.x1), d2: word(p.x2) })
}

/// Lower-left corner of the cylinder.
pub fn decode(a: &DigitAddress) -> TorusPoint {
    let scale = (-f64::from(a.depth)).exp2();
    TorusPoint { x1: a.d1 as f64 * scale, x2: a.d2 as f64 * scale }
}

/// Centre of the cylinder.
pub fn decode_center(a: &DigitAddress) -> TorusPoint {
    let p = decode(a);
    let h = 0.5 * a.side();
    TorusPoint { x1: p.x1 + h, x2: p.x2 + h }
}

/// The digit-change involution: flips `d1(n)` for odd `n` and `d2(n)` for even `n`.
pub fn sigma(a: &DigitAddress) -> DigitAddress {
    DigitAddress {
        depth: a.depth,
        d1: a.d1 ^ position_mask(a.depth, 1, a.depth),
        d2: a.d2 ^ position_mask(a.depth, 0, a.depth),
    }
}

/// One stage of the digit dynamics (stages are numbered from 1).
///
/// Odd stage `s` flips `d1(s)` iff `d2(s+1) = 1`; even stage `s` flips
/// `d2(s)` iff `d1(s+1) = 1`.
pub fn psi_step(a: &DigitAddress, stage: u32) -> Result<DigitAddress> {
    if stage == 0 {
        return Err(Error::InvalidParam { name: "stage", reason: "stages are numbered from 1".into() });
    }
    if a.depth < stage + 1 {
        return Err(Error::DepthTooShallow { depth: a.depth, needed: stage + 1 });
    }
    let (target, condition) = stage_coords(stage);
    let mut out = *a;
    if a.digit(condition, stage + 1) == 1 {
        out.flip(target, stage);
    }
    Ok(out)
}

/// `(flipped coordinate, condition coordinate)` of a stage.
pub fn stage_coords(stage: u32) -> (Coord, Coord) {
    if stage % 2 == 1 {
        (Coord::First, Coord::Second)
    } else {
        (Coord::Second, Coord::First)
    }
}

/// Applies stages `1..=stages` in order.
pub fn psi_steps(a: &DigitAddress, stages: u32) -> Result<DigitAddress> {
    (1..=stages).try_fold(*a, |acc, s| psi_step(&acc, s))
}

/// Closed-form digit map on the stable prefix.
///
/// Every flip reads the *input* digits; the result has depth `depth - 1`
/// because the update of digit `depth` would need digit `depth + 1`.
pub fn psi_map(a: &DigitAddress) -> Result<DigitAddress> {
    let d = a.depth;
    if d < 2 {
        return Err(Error::DepthTooShallow { depth: d, needed: 2 });
    }
    // digit n+1 shifted left by one lands on position n
    let flips1 = (a.d2 << 1) & position_mask(d, 1, d - 1);
    let flips2 = (a.d1 << 1) & position_mask(d, 0, d - 1);
    Ok(DigitAddress { depth: d - 1, d1: (a.d1 ^ flips1) >> 1, d2: (a.d2 ^ flips2) >> 1 })
}

/// The preimage of `target` under the digit map whose first digit `d1(1)` is `first_bit`.
///
/// Digits `d1(2n)` and `d2(2n+1)` are copied from the target; the remaining
/// ones follow from the recurrences `d2(2n+2) = [d1(2n+1) != t1(2n+1)]` and
/// `d1(2n+3) = [d2(2n+2) != t2(2n+2)]`. Every digit up to the target's depth
/// is determined, so the result has the same depth as the target and its
/// image under [`psi_map`] matches the target on `depth - 1` digits.
pub fn invert_psi(target: &DigitAddress, first_bit: u8) -> Result<DigitAddress> {
    let d = target.depth;
    if d < 2 {
        return Err(Error::DepthTooShallow { depth: d, needed: 2 });
    }
    if first_bit > 1 {
        return Err(Error::InvalidParam { name: "first_bit", reason: format!("{first_bit} is not a bit") });
    }
    let mut w = DigitAddress {
        depth: d,
        d1: target.d1 & position_mask(d, 0, d),
        d2: target.d2 & position_mask(d, 1, d),
    };
    let set = |w: &mut DigitAddress, coord: Coord, n: u32, bit: bool| {
        if bit {
            w.flip(coord, n);
        }
    };
    set(&mut w, Coord::First, 1, first_bit == 1);
    for n in 2..=d {
        if n % 2 == 0 {
            // d2(n) decided by whether d1(n-1) must flip to reach the target
            let bit = w.digit(Coord::First, n - 1) != target.digit(Coord::First, n - 1);
            set(&mut w, Coord::Second, n, bit);
        } else {
            let bit = w.digit(Coord::Second, n - 1) != target.digit(Coord::Second, n - 1);
            set(&mut w, Coord::First, n, bit);
        }
    }
    Ok(w)
}

/// Seeded source of uniformly distributed addresses.
#[derive(Debug, Clone)]
pub struct AddressSampler {
    rng: ChaCha8Rng,
}

impl AddressSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample(&mut self, depth: u32) -> Result<DigitAddress> {
        check_depth(depth)?;
        let m = low_mask(depth);
        let d1 = self.rng.random::<u64>() & m;
        let d2 = self.rng.random::<u64>() & m;
        Ok(DigitAddress { depth, d1, d2 })
    }
}

/// One address of i.i.d. fair digits, reproducible from the seed.
pub fn sample_uniform_address(depth: u32, seed: u64) -> Result<DigitAddress> {
    AddressSampler::new(seed).sample(depth)
}

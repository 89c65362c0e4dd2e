//! Adaptive run-length / Golomb-Rice coder for signed integers.
//!
//! Single-symbol variant with backward adaptation of both the run parameter
//! `k` and the Golomb-Rice parameter `kr`. Parameters are kept scaled by
//! `2^LSGR`. Large quotients use an escape so arbitrarily large magnitudes
//! stay cheap to represent.

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

const LSGR: u32 = 3;
const UP_GR: i64 = 4;
const DN_GR: i64 = 6;
const UQ_GR: i64 = 3;
const DQ_GR: i64 = 3;
const KMAX: i64 = 30;
const KPMAX: i64 = KMAX << LSGR;
/// Unary quotients at or above this length are escaped.
const ESCAPE: u64 = 32;
/// Largest magnitude accepted by the coder.
pub const MAX_MAGNITUDE: u64 = 1 << 61;

#[derive(Debug, Clone, Copy)]
struct Params {
    kp: i64,
    krp: i64,
}

impl Params {
    fn new() -> Self {
        Self { kp: 1 << LSGR, krp: 1 << LSGR }
    }

    #[inline]
    fn k(&self) -> u32 {
        (self.kp >> LSGR) as u32
    }

    #[inline]
    fn kr(&self) -> u32 {
        (self.krp >> LSGR) as u32
    }

    #[inline]
    fn bump_k(&mut self, delta: i64) {
        self.kp = (self.kp + delta).clamp(0, KPMAX);
    }

    #[inline]
    fn bump_kr(&mut self, delta: i64) {
        self.krp = (self.krp + delta).clamp(0, KPMAX);
    }

    fn adapt_kr(&mut self, quotient: u64) {
        if quotient == 0 {
            self.bump_kr(-2);
        } else if quotient != 1 {
            self.bump_kr(quotient.min(KPMAX as u64) as i64);
        }
    }
}

fn put_gr(w: &mut BitWriter, p: &mut Params, val: u64) {
    let kr = p.kr();
    let vk = val >> kr;
    if vk < ESCAPE {
        w.put_ones(vk);
        w.put_bit(false);
    } else {
        w.put_ones(ESCAPE);
        let nbits = 64 - vk.leading_zeros();
        w.put_bits(nbits as u64, 6);
        w.put_bits(vk, nbits);
    }
    if kr > 0 {
        w.put_bits(val & ((1u64 << kr) - 1), kr);
    }
    p.adapt_kr(vk);
}

fn get_gr(r: &mut BitReader, p: &mut Params) -> Result<u64> {
    let kr = p.kr();
    let mut vk = 0u64;
    while vk < ESCAPE && r.get_bit()? {
        vk += 1;
    }
    if vk == ESCAPE {
        let nbits = r.get_bits(6)? as u32;
        vk = r.get_bits(nbits)?;
        if nbits == 0 || vk >> (nbits - 1) != 1 || vk < ESCAPE {
            return Err(Error::Corrupt("rlgr escape".into()));
        }
    }
    if kr > 0 && vk.leading_zeros() < kr {
        return Err(Error::Corrupt("rlgr quotient overflow".into()));
    }
    let low = if kr > 0 { r.get_bits(kr)? } else { 0 };
    p.adapt_kr(vk);
    Ok((vk << kr) | low)
}

#[inline]
fn two_ms(v: i64) -> u64 {
    if v >= 0 {
        (v as u64) << 1
    } else {
        ((v.unsigned_abs() - 1) << 1) | 1
    }
}

#[inline]
fn from_two_ms(u: u64) -> i64 {
    if u & 1 == 0 {
        (u >> 1) as i64
    } else {
        -((u >> 1) as i64) - 1
    }
}

/// Encodes `symbols`. The decoder needs the symbol count.
pub fn rlgr_encode(symbols: &[i64]) -> Result<Vec<u8>> {
    let mut w = BitWriter::new();
    let mut p = Params::new();
    let mut i = 0;
    while i < symbols.len() {
        let k = p.k();
        if k > 0 {
            let mut zeros = 0u64;
            while i < symbols.len() && symbols[i] == 0 {
                zeros += 1;
                i += 1;
            }
            while zeros >= (1u64 << p.k()) {
                w.put_bit(false);
                zeros -= 1u64 << p.k();
                p.bump_k(UP_GR);
            }
            if i == symbols.len() {
                if zeros > 0 {
                    // Trailing partial run: the decoder stops at the count.
                    w.put_bit(false);
                }
                break;
            }
            let k = p.k();
            w.put_bit(true);
            w.put_bits(zeros, k);
            let v = symbols[i];
            i += 1;
            let mag = v.unsigned_abs();
            if mag > MAX_MAGNITUDE {
                return Err(Error::InvalidParameter(format!("rlgr magnitude {mag} too large")));
            }
            w.put_bit(v < 0);
            put_gr(&mut w, &mut p, mag - 1);
            p.bump_k(-DN_GR);
        } else {
            let v = symbols[i];
            i += 1;
            if v.unsigned_abs() > MAX_MAGNITUDE {
                return Err(Error::InvalidParameter(format!("rlgr magnitude {v} too large")));
            }
            let u = two_ms(v);
            put_gr(&mut w, &mut p, u);
            if u == 0 {
                p.bump_k(UQ_GR);
            } else {
                p.bump_k(-DQ_GR);
            }
        }
    }
    Ok(w.finish())
}

pub fn rlgr_decode(bytes: &[u8], count: usize) -> Result<Vec<i64>> {
    let mut r = BitReader::new(bytes);
    let mut p = Params::new();
    let mut out = Vec::with_capacity(count.min(1 << 20));
    while out.len() < count {
        let k = p.k();
        if k > 0 {
            if !r.get_bit()? {
                let run = 1u64 << k;
                let take = run.min((count - out.len()) as u64);
                out.extend(std::iter::repeat_n(0, take as usize));
                p.bump_k(UP_GR);
                continue;
            }
            let zeros = r.get_bits(k)?;
            if zeros >= (count - out.len()) as u64 {
                return Err(Error::Corrupt("rlgr run exceeds symbol count".into()));
            }
            out.extend(std::iter::repeat_n(0, zeros as usize));
            let neg = r.get_bit()?;
            let mag = get_gr(&mut r, &mut p)? + 1;
            if mag > MAX_MAGNITUDE {
                return Err(Error::Corrupt("rlgr magnitude".into()));
            }
            out.push(if neg { -(mag as i64) } else { mag as i64 });
            p.bump_k(-DN_GR);
        } else {
            let u = get_gr(&mut r, &mut p)?;
            if u > 2 * MAX_MAGNITUDE {
                return Err(Error::Corrupt("rlgr magnitude".into()));
            }
            out.push(from_two_ms(u));
            if u == 0 {
                p.bump_k(UQ_GR);
            } else {
                p.bump_k(-DQ_GR);
            }
        }
    }
    Ok(out)
}

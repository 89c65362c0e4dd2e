//! Static-model rANS coder.
//!
//! 32-bit state in `[2^16, 2^32)`, 16-bit renormalisation, frequencies
//! summing to `2^14`. Symbols outside `[-255, 255]` are coded as an escape
//! symbol and their values travel separately.

use std::collections::BTreeMap;

use super::bits::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const PROB_BITS: u32 = 14;
pub const PROB_SCALE: u32 = 1 << PROB_BITS;
const RANS_L: u32 = 1 << 16;
/// Largest magnitude coded directly.
pub const DIRECT_LIMIT: i64 = 255;
/// Model symbol standing for an escaped value.
pub const ESC: i16 = 256;

/// Normalised frequency table over model symbols `-255..=255` and [`ESC`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RansModel {
    /// `(symbol, freq)` sorted by symbol, all frequencies nonzero.
    entries: Vec<(i16, u16)>,
    cum: Vec<u32>,
}

#[inline]
pub fn model_symbol(v: i64) -> i16 {
    if v.abs() <= DIRECT_LIMIT {
        v as i16
    } else {
        ESC
    }
}

impl RansModel {
    /// Builds a model from raw counts, keeping every symbol with a nonzero
    /// count at frequency at least 1.
    pub fn from_counts(counts: &BTreeMap<i16, u64>) -> Result<Self> {
        let present: Vec<(i16, u64)> = counts.iter().filter(|(_, &c)| c > 0).map(|(&s, &c)| (s, c)).collect();
        if present.is_empty() {
            return Err(Error::Model("empty histogram".into()));
        }
        if present.len() > PROB_SCALE as usize {
            return Err(Error::Model("alphabet too large".into()));
        }
        let total: u64 = present.iter().map(|e| e.1).sum();
        let mut freqs: Vec<i64> = present
            .iter()
            .map(|&(_, c)| ((c as u128 * PROB_SCALE as u128 / total as u128) as i64).max(1))
            .collect();
        let mut diff = PROB_SCALE as i64 - freqs.iter().sum::<i64>();
        // Hand the slack to (or take it from) the most frequent symbols.
        let mut order: Vec<usize> = (0..freqs.len()).collect();
        order.sort_by(|&a, &b| present[b].1.cmp(&present[a].1).then(a.cmp(&b)));
        while diff != 0 {
            let mut progressed = false;
            for &i in &order {
                if diff > 0 {
                    freqs[i] += 1;
                    diff -= 1;
                    progressed = true;
                } else if diff < 0 && freqs[i] > 1 {
                    freqs[i] -= 1;
                    diff += 1;
                    progressed = true;
                }
                if diff == 0 {
                    break;
                }
            }
            if !progressed {
                return Err(Error::Model("cannot normalise frequencies".into()));
            }
        }
        let entries = present.iter().zip(&freqs).map(|(&(s, _), &f)| (s, f as u16)).collect();
        Self::from_entries(entries)
    }

    /// Counts model symbols of `values` and builds a model.
    pub fn from_values(values: &[i64]) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for &v in values {
            *counts.entry(model_symbol(v)).or_insert(0u64) += 1;
        }
        Self::from_counts(&counts)
    }

    pub fn from_entries(mut entries: Vec<(i16, u16)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Model("duplicate symbol".into()));
        }
        let mut cum = Vec::with_capacity(entries.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &(s, f) in &entries {
            if f == 0 {
                return Err(Error::Model(format!("zero frequency for symbol {s}")));
            }
            if !(s == ESC || (s as i64).abs() <= DIRECT_LIMIT) {
                return Err(Error::Model(format!("symbol {s} outside alphabet")));
            }
            acc += f as u32;
            cum.push(acc);
        }
        if acc != PROB_SCALE {
            return Err(Error::Model(format!("frequencies sum to {acc}, expected {PROB_SCALE}")));
        }
        Ok(Self { entries, cum })
    }

    pub fn entries(&self) -> &[(i16, u16)] {
        &self.entries
    }

    fn index_of(&self, sym: i16) -> Option<usize> {
        self.entries.binary_search_by_key(&sym, |e| e.0).ok()
    }

    /// Probability of a model symbol, zero if absent.
    pub fn probability(&self, sym: i16) -> f64 {
        self.index_of(sym).map_or(0.0, |i| self.entries[i].1 as f64 / PROB_SCALE as f64)
    }

    /// Sparse serialisation: `u16` count then `(i16 symbol, u16 freq)` pairs.
    pub fn write(&self, w: &mut ByteWriter) {
        w.u16(self.entries.len() as u16);
        for &(s, f) in &self.entries {
            w.i16(s);
            w.u16(f);
        }
    }

    pub fn read(r: &mut ByteReader) -> Result<Self> {
        let n = r.u16()? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            entries.push((r.i16()?, r.u16()?));
        }
        Self::from_entries(entries)
    }

    /// Cross-entropy in bits of `values` under this model (escape payloads
    /// excluded).
    pub fn cross_entropy_bits(&self, values: &[i64]) -> f64 {
        values.iter().map(|&v| -self.probability(model_symbol(v)).log2()).sum()
    }
}

/// rANS-codes the model symbols of `values`. Returns the state flush followed
/// by renormalisation words, all little-endian.
pub fn rans_encode(values: &[i64], model: &RansModel) -> Result<Vec<u8>> {
    let mut words: Vec<u16> = Vec::new();
    let mut x: u32 = RANS_L;
    for &v in values.iter().rev() {
        let sym = model_symbol(v);
        let i = model
            .index_of(sym)
            .ok_or_else(|| Error::Model(format!("symbol {sym} has zero frequency")))?;
        let f = model.entries[i].1 as u32;
        let c = model.cum[i];
        let x_max = (((RANS_L >> PROB_BITS) as u64) << 16) * f as u64;
        while x as u64 >= x_max {
            words.push(x as u16);
            x >>= 16;
        }
        x = ((x / f) << PROB_BITS) + (x % f) + c;
    }
    let mut out = Vec::with_capacity(4 + 2 * words.len());
    out.extend_from_slice(&x.to_le_bytes());
    for &wd in words.iter().rev() {
        out.extend_from_slice(&wd.to_le_bytes());
    }
    Ok(out)
}

/// Decodes `count` model symbols. Escaped positions come back as [`ESC`].
/// The final state must return to its initial value.
pub fn rans_decode(bytes: &[u8], model: &RansModel, count: usize) -> Result<Vec<i16>> {
    let mut r = ByteReader::new(bytes, "rans payload");
    let mut x = r.u32()?;
    let mut slot_sym = vec![0u16; PROB_SCALE as usize];
    for i in 0..model.entries.len() {
        for s in model.cum[i]..model.cum[i + 1] {
            slot_sym[s as usize] = i as u16;
        }
    }
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        if x < RANS_L {
            return Err(Error::Corrupt("rans state underflow".into()));
        }
        let slot = x & (PROB_SCALE - 1);
        let i = slot_sym[slot as usize] as usize;
        let (sym, f) = model.entries[i];
        x = (f as u32) * (x >> PROB_BITS) + slot - model.cum[i];
        while x < RANS_L {
            x = (x << 16) | r.u16()? as u32;
        }
        out.push(sym);
    }
    if x != RANS_L || !r.is_empty() {
        return Err(Error::Corrupt("rans checksum mismatch".into()));
    }
    Ok(out)
}

/// Self-contained payload for one level: count, model, escape values, rANS
/// stream. An empty input produces an empty payload.
pub fn encode_block(values: &[i64]) -> Result<Vec<u8>> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let model = RansModel::from_values(values)?;
    let mut w = ByteWriter::new();
    w.varint(values.len() as u64);
    model.write(&mut w);
    let escapes: Vec<i64> = values.iter().copied().filter(|v| v.abs() > DIRECT_LIMIT).collect();
    w.varint(escapes.len() as u64);
    for &e in &escapes {
        w.svarint(e);
    }
    let stream = rans_encode(values, &model)?;
    w.bytes(&stream);
    Ok(w.into_inner())
}

pub fn decode_block(bytes: &[u8]) -> Result<Vec<i64>> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let mut r = ByteReader::new(bytes, "rans block");
    let count = r.varint()? as usize;
    let model = RansModel::read(&mut r)?;
    let n_esc = r.varint()? as usize;
    let mut escapes = Vec::with_capacity(n_esc.min(1 << 20));
    for _ in 0..n_esc {
        let e = r.svarint()?;
        if e.abs() <= DIRECT_LIMIT {
            return Err(Error::Corrupt("escaped value within direct range".into()));
        }
        escapes.push(e);
    }
    let rest = r.take(r.remaining())?;
    let syms = rans_decode(rest, &model, count)?;
    let mut esc = escapes.into_iter();
    let mut out = Vec::with_capacity(count);
    for s in syms {
        if s == ESC {
            out.push(esc.next().ok_or_else(|| Error::Corrupt("missing escape value".into()))?);
        } else {
            out.push(s as i64);
        }
    }
    if esc.next().is_some() {
        return Err(Error::Corrupt("unused escape values".into()));
    }
    Ok(out)
}

/// Empirical entropy in bits of the model symbols of `values`, using the
/// values' own histogram.
pub fn empirical_entropy_bits(values: &[i64]) -> f64 {
    let mut counts: BTreeMap<i16, u64> = BTreeMap::new();
    for &v in values {
        *counts.entry(model_symbol(v)).or_default() += 1;
    }
    let n = values.len() as f64;
    counts.values().map(|&c| -(c as f64) * (c as f64 / n).log2()).sum()
}

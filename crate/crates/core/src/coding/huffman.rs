//! Canonical Huffman coding over the 16-bit symbol alphabet.
//!
//! Stream layout: `u16` distinct-symbol count (0 stands for 65536), then one
//! `(u16 symbol, u8 length)` entry per symbol in ascending symbol order, all
//! little-endian, followed by the code bits packed most-significant first.
//! Codes are assigned canonically by `(length, symbol)`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Longest permitted code. Alphabets with more than 2^15 distinct symbols
/// cannot be coded within 15 bits and get one extra bit of headroom.
pub const MAX_CODE_LEN: u8 = 15;

fn length_limit(distinct: usize) -> u8 {
    if distinct > 1 << MAX_CODE_LEN {
        MAX_CODE_LEN + 1
    } else {
        MAX_CODE_LEN
    }
}

/// Code lengths for the distinct symbols in `freqs` (pairs of symbol and
/// count, ascending by symbol). Returns lengths in the same order.
pub fn code_lengths(freqs: &[(u16, u64)]) -> Vec<u8> {
    let n = freqs.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![1],
        _ => {}
    }

    // Plain Huffman tree: leaves 0..n, internal nodes appended. Ties are
    // broken by node id so the tree is deterministic.
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        freqs.iter().enumerate().map(|(i, &(_, f))| Reverse((f, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((fa, a)) = heap.pop().unwrap();
        let Reverse((fb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((fa + fb, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u32; 2 * n - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }

    let max_depth = depth[..n].iter().copied().max().unwrap() as usize;
    let mut bl_count = vec![0u64; max_depth.max(MAX_CODE_LEN as usize + 1) + 1];
    for &d in &depth[..n] {
        bl_count[d as usize] += 1;
    }

    // Length limiting that keeps the Kraft sum at exactly one: repeatedly
    // move a pair of over-long leaves up, compensating with a split leaf.
    let limit = length_limit(n) as usize;
    for i in (limit + 1..bl_count.len()).rev() {
        while bl_count[i] > 0 {
            let mut j = i - 2;
            while bl_count[j] == 0 {
                j -= 1;
            }
            bl_count[i] -= 2;
            bl_count[i - 1] += 1;
            bl_count[j + 1] += 2;
            bl_count[j] -= 1;
        }
    }

    // Shortest codes to the most frequent symbols.
    let mut by_freq: Vec<usize> = (0..n).collect();
    by_freq.sort_by(|&a, &b| freqs[b].1.cmp(&freqs[a].1).then(freqs[a].0.cmp(&freqs[b].0)));
    let mut lengths = vec![0u8; n];
    let mut it = by_freq.into_iter();
    for (len, &count) in bl_count.iter().enumerate().take(limit + 1) {
        for _ in 0..count {
            lengths[it.next().unwrap()] = len as u8;
        }
    }
    lengths
}

/// Canonical codes for `(symbol, length)` entries, in the same order.
fn canonical_codes(entries: &[(u16, u8)]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| (entries[i].1, entries[i].0));
    let mut codes = vec![0u32; entries.len()];
    let mut code = 0u32;
    let mut prev_len = 0u8;
    for (k, &i) in order.iter().enumerate() {
        let len = entries[i].1;
        if k > 0 {
            code = (code + 1) << (len - prev_len);
        } else {
            code <<= len;
        }
        codes[i] = code;
        prev_len = len;
    }
    codes
}

struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    fn put(&mut self, code: u32, len: u8) {
        self.acc = (self.acc << len) | code as u64;
        self.nbits += len as u32;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.out
    }
}

pub fn frequencies(symbols: &[u16]) -> Vec<(u16, u64)> {
    let mut counts = vec![0u64; 1 << 16];
    for &s in symbols {
        counts[s as usize] += 1;
    }
    counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(s, &c)| (s as u16, c)).collect()
}

pub fn huffman_encode(symbols: &[u16]) -> Result<Vec<u8>> {
    if symbols.is_empty() {
        return Err(Error::Stream("cannot Huffman-code an empty symbol list".into()));
    }
    let freqs = frequencies(symbols);
    let lengths = code_lengths(&freqs);
    let entries: Vec<(u16, u8)> = freqs.iter().zip(&lengths).map(|(&(s, _), &l)| (s, l)).collect();
    let codes = canonical_codes(&entries);

    let mut lut = vec![(0u32, 0u8); 1 << 16];
    for (&(s, l), &c) in entries.iter().zip(&codes) {
        lut[s as usize] = (c, l);
    }

    let mut out = Vec::with_capacity(2 + 3 * entries.len() + symbols.len() / 4);
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for &(s, l) in &entries {
        out.extend_from_slice(&s.to_le_bytes());
        out.push(l);
    }
    let mut w = BitWriter { out, acc: 0, nbits: 0 };
    for &s in symbols {
        let (c, l) = lut[s as usize];
        w.put(c, l);
    }
    Ok(w.finish())
}

/// Decodes exactly `count` symbols; the stream must contain nothing else.
pub fn huffman_decode(bytes: &[u8], count: usize) -> Result<Vec<u16>> {
    let err = |m: &str| Error::Stream(format!("Huffman: {m}"));
    if bytes.len() < 2 {
        return Err(err("missing table"));
    }
    let distinct = match u16::from_le_bytes([bytes[0], bytes[1]]) {
        0 => 1usize << 16,
        n => n as usize,
    };
    let table_end = 2 + 3 * distinct;
    if bytes.len() < table_end {
        return Err(err("truncated table"));
    }
    let mut entries = Vec::with_capacity(distinct);
    for e in bytes[2..table_end].chunks_exact(3) {
        entries.push((u16::from_le_bytes([e[0], e[1]]), e[2]));
    }
    if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(err("table symbols not strictly ascending"));
    }
    let max_len = length_limit(distinct);
    if entries.iter().any(|&(_, l)| l == 0 || l > max_len) {
        return Err(err("code length out of range"));
    }
    if distinct == 1 {
        if entries[0].1 != 1 {
            return Err(err("single-symbol code must have length 1"));
        }
    } else {
        let kraft: u64 = entries.iter().map(|&(_, l)| 1u64 << (32 - l as u32)).sum();
        if kraft != 1u64 << 32 {
            return Err(err("code lengths violate the Kraft equality"));
        }
    }

    // Canonical decoding tables.
    let mut sorted = entries.clone();
    sorted.sort_by_key(|&(s, l)| (l, s));
    let mut len_count = [0u32; 18];
    for &(_, l) in &entries {
        len_count[l as usize] += 1;
    }
    let mut first_code = [0u32; 18];
    let mut first_index = [0u32; 18];
    let mut code = 0u32;
    let mut index = 0u32;
    for l in 1..18 {
        code <<= 1;
        first_code[l] = code;
        first_index[l] = index;
        code += len_count[l];
        index += len_count[l];
    }

    let data = &bytes[table_end..];
    let mut out = Vec::with_capacity(count);
    let mut bitpos = 0usize;
    let total_bits = data.len() * 8;
    for _ in 0..count {
        let mut code = 0u32;
        let mut len = 0usize;
        loop {
            if bitpos >= total_bits {
                return Err(err("truncated bitstream"));
            }
            let bit = (data[bitpos >> 3] >> (7 - (bitpos & 7))) & 1;
            bitpos += 1;
            code = (code << 1) | bit as u32;
            len += 1;
            if len > max_len as usize {
                return Err(err("invalid code"));
            }
            let offset = code.wrapping_sub(first_code[len]);
            if code >= first_code[len] && offset < len_count[len] {
                out.push(sorted[(first_index[len] + offset) as usize].0);
                break;
            }
        }
    }
    if bitpos.div_ceil(8) != data.len() {
        return Err(err("stream length mismatch"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_frequencies() {
        // a:2, b:1, c:1 -> lengths 1, 2, 2 -> 6 bits total.
        let lengths = code_lengths(&[(10, 2), (20, 1), (30, 1)]);
        assert_eq!(lengths, vec![1, 2, 2]);
        let enc = huffman_encode(&[10, 10, 20, 30]).unwrap();
        assert_eq!(enc.len(), 2 + 9 + 1);
        assert_eq!(huffman_decode(&enc, 4).unwrap(), vec![10, 10, 20, 30]);
    }

    #[test]
    fn single_symbol_uses_one_bit() {
        let syms = vec![7u16; 1000];
        let enc = huffman_encode(&syms).unwrap();
        assert_eq!(enc.len(), 2 + 3 + 125);
        assert_eq!(huffman_decode(&enc, 1000).unwrap(), syms);
    }

    #[test]
    fn fibonacci_frequencies_are_length_limited() {
        // Fibonacci counts produce a maximally skewed tree of depth n-1.
        let mut freqs = Vec::new();
        let (mut a, mut b) = (1u64, 1u64);
        for s in 0..30u16 {
            freqs.push((s, a));
            (a, b) = (b, a + b);
        }
        let lengths = code_lengths(&freqs);
        assert!(lengths.iter().all(|&l| l <= MAX_CODE_LEN));
        let kraft: f64 = lengths.iter().map(|&l| 2f64.powi(-(l as i32))).sum();
        assert_eq!(kraft, 1.0);

        let mut syms = Vec::new();
        for &(s, c) in &freqs[..24] {
            syms.extend(std::iter::repeat_n(s, c as usize));
        }
        let enc = huffman_encode(&syms).unwrap();
        assert_eq!(huffman_decode(&enc, syms.len()).unwrap(), syms);
    }

    #[test]
    fn full_alphabet() {
        let syms: Vec<u16> = (0..=u16::MAX).chain([0, 0, 0]).collect();
        let enc = huffman_encode(&syms).unwrap();
        assert_eq!(&enc[..2], &[0, 0]);
        assert_eq!(huffman_decode(&enc, syms.len()).unwrap(), syms);
    }

    #[test]
    fn corrupt_streams_rejected() {
        let enc = huffman_encode(&[1, 2, 3, 1, 1]).unwrap();
        assert!(huffman_decode(&enc[..enc.len() - 1], 5).is_err());
        assert!(huffman_decode(&enc, 8).is_err());
        let mut bad = enc.clone();
        bad[4] = 9;
        assert!(huffman_decode(&bad, 5).is_err());
        let mut extra = enc.clone();
        extra.push(0);
        assert!(huffman_decode(&extra, 5).is_err());
        assert!(huffman_encode(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn payload_within_entropy_and_fixed_bounds(
            alphabet in 1usize..300,
            skew in 0.0f64..4.0,
            len in 1usize..3000,
            seed in proptest::prelude::any::<u64>(),
        ) {
            let mut state = seed | 1;
            let symbols: Vec<u16> = (0..len)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    let u = (state >> 11) as f64 / (1u64 << 53) as f64;
                    ((u.powf(1.0 + skew) * alphabet as f64) as usize).min(alphabet - 1) as u16 * 97
                })
                .collect();
            let freqs = frequencies(&symbols);
            let lengths = code_lengths(&freqs);
            let bits: u64 = freqs.iter().zip(&lengths).map(|(&(_, f), &l)| f * l as u64).sum();
            let n = len as f64;
            let entropy: f64 = freqs.iter().map(|&(_, f)| -(f as f64) * (f as f64 / n).log2()).sum();
            let distinct = freqs.len();
            let fixed = len as u64 * (distinct as f64).log2().ceil().max(1.0) as u64;
            proptest::prop_assert!(bits as f64 >= entropy - 1e-6);
            proptest::prop_assert!(bits <= fixed);
            let enc = huffman_encode(&symbols).unwrap();
            proptest::prop_assert_eq!(enc.len(), 2 + 3 * distinct + (bits as usize).div_ceil(8));
            proptest::prop_assert_eq!(huffman_decode(&enc, len).unwrap(), symbols);
        }
    }
}

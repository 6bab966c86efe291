//! Bitmask subset enumeration shared by the asymmetric formulas.

use crate::error::{Error, Result};

/// Largest network for which subset sums are enumerated.
pub const MAX_ENUM_N: usize = 12;

pub(crate) fn check_enum(n: usize) -> Result<()> {
    if n > MAX_ENUM_N {
        Err(Error::TooLarge { n, max: MAX_ENUM_N })
    } else {
        Ok(())
    }
}

/// `Π_{i∈set} p_i · Π_{i∈universe∖set} (1 - p_i)`; `set` must lie in `universe`.
pub(crate) fn weight(set: u32, universe: u32, probs: &[f64]) -> f64 {
    let mut w = 1.0;
    let mut bits = universe;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        w *= if set >> i & 1 == 1 { probs[i] } else { 1.0 - probs[i] };
        if w == 0.0 {
            break;
        }
    }
    w
}

/// All submasks of `mask`, including the empty set and `mask` itself.
pub(crate) fn submasks(mask: u32) -> impl Iterator<Item = u32> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

pub(crate) fn full(n: usize) -> u32 {
    if n == 0 {
        0
    } else {
        u32::MAX >> (32 - n)
    }
}

pub(crate) fn members(mask: u32) -> impl Iterator<Item = usize> {
    let mut bits = mask;
    std::iter::from_fn(move || {
        if bits == 0 {
            return None;
        }
        let i = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        Some(i)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submasks_are_complete() {
        let v: Vec<u32> = submasks(0b1011).collect();
        assert_eq!(v.len(), 8);
        assert!(v.contains(&0) && v.contains(&0b1011) && v.contains(&0b0010));
        assert_eq!(submasks(0).count(), 1);
    }

    #[test]
    fn weights_partition() {
        let p = [0.2, 0.7, 0.5];
        let total: f64 = submasks(0b111).map(|s| weight(s, 0b111, &p)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(full(3), 0b111);
        assert_eq!(members(0b1010).collect::<Vec<_>>(), vec![1, 3]);
    }
}

//! Serial-number arithmetic over the 16-bit RTP sequence space.

/// True iff `a` comes strictly before `b`: the forward distance from `a` to
/// `b` is in `(0, 32768)`. A distance of exactly half the space is unordered.
pub fn seq_precedes(a: u16, b: u16) -> bool {
    let d = b.wrapping_sub(a);
    d != 0 && d < 0x8000
}

/// Signed forward distance from `a` to `b`, in `[-32768, 32767]`.
pub fn seq_distance(a: u16, b: u16) -> i32 {
    b.wrapping_sub(a) as i16 as i32
}

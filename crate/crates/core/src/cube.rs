//! The discrete cube {-1,1}^n with its normalized Hamming metric.
//!
//! Points are stored as bitmasks: bit i-1 of `mask` is set exactly when
//! coordinate i equals -1, so the all-plus vertex is mask 0 and coordinate
//! flips are XOR operations. Expectations over the uniform measure are
//! computed by full enumeration with a fixed pairwise reduction tree, so
//! serial and parallel runs produce bit-identical sums.

use crate::error::{Error, Result};

/// Default enumeration cap: full sweeps touch 2^n vertices.
pub const DEFAULT_DIM_CAP: u32 = 20;
/// Absolute ceiling regardless of cap overrides.
pub const MAX_DIM: u32 = 30;

/// A vertex of {-1,1}^n. Bit i-1 set means coordinate i is -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CubePoint {
    n: u32,
    mask: u64,
}

impl CubePoint {
    pub fn from_mask(n: u32, mask: u64) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "cube dimension must be in 1..={MAX_DIM}, got {n}"
            )));
        }
        if mask >> n != 0 {
            return Err(Error::InvalidParameter(format!(
                "mask {mask:#x} has bits above dimension {n}"
            )));
        }
        Ok(CubePoint { n, mask })
    }

    /// The all-plus vertex (every coordinate +1).
    pub fn all_plus(n: u32) -> Self {
        CubePoint { n, mask: 0 }
    }

    pub fn dim(&self) -> u32 {
        self.n
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// Sign of coordinate i (1-based): +1 or -1.
    pub fn sign(&self, i: u32) -> Result<i32> {
        if i == 0 || i > self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(if self.mask >> (i - 1) & 1 == 1 { -1 } else { 1 })
    }

    pub fn coord(&self, i: u32) -> Result<f64> {
        Ok(self.sign(i)? as f64)
    }

    pub fn signs(&self) -> Vec<i32> {
        (1..=self.n).map(|i| self.sign(i).unwrap()).collect()
    }

    /// -e: every coordinate negated.
    pub fn antipode(&self) -> Self {
        CubePoint {
            n: self.n,
            mask: self.mask ^ ((1u64 << self.n) - 1),
        }
    }

    fn xor(&self, bits: u64) -> Self {
        CubePoint {
            n: self.n,
            mask: self.mask ^ bits,
        }
    }
}

/// A contiguous coordinate interval [lo,hi] (1-based, inclusive), acting on
/// the cube by flipping the signs of the coordinates it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedInterval {
    lo: u32,
    hi: u32,
}

impl SignedInterval {
    pub fn new(lo: u32, hi: u32) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::IntervalOutOfRange { lo, hi, n: 0 });
        }
        Ok(SignedInterval { lo, hi })
    }

    pub fn lo(&self) -> u32 {
        self.lo
    }

    pub fn hi(&self) -> u32 {
        self.hi
    }

    pub fn len(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: u32) -> bool {
        self.lo <= i && i <= self.hi
    }

    /// Bitmask with bits lo-1 ..= hi-1 set.
    pub fn bits(&self) -> u64 {
        let width = self.len();
        let ones = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        ones << (self.lo - 1)
    }

    fn check_dim(&self, n: u32) -> Result<()> {
        if self.hi > n {
            return Err(Error::IntervalOutOfRange { lo: self.lo, hi: self.hi, n });
        }
        Ok(())
    }
}

/// Number of coordinates where a and b differ.
pub fn hamming_distance(a: &CubePoint, b: &CubePoint) -> Result<u32> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch { expected: a.n, got: b.n });
    }
    Ok((a.mask ^ b.mask).count_ones())
}

/// Normalized graph metric: |{i : a(i) != b(i)}| / n, a rational in [0,1].
pub fn hamming_metric(a: &CubePoint, b: &CubePoint) -> Result<f64> {
    Ok(hamming_distance(a, b)? as f64 / a.n as f64)
}

/// d_i e: flip coordinate i (1-based).
pub fn flip_coordinate(e: &CubePoint, i: u32) -> Result<CubePoint> {
    if i == 0 || i > e.n {
        return Err(Error::IndexOutOfRange { index: i, n: e.n });
    }
    Ok(e.xor(1u64 << (i - 1)))
}

/// I e: flip every coordinate in the interval.
pub fn flip_interval(e: &CubePoint, iv: &SignedInterval) -> Result<CubePoint> {
    iv.check_dim(e.n)?;
    Ok(e.xor(iv.bits()))
}

/// Validates that `blocks` is an ordered list of pairwise disjoint contiguous
/// intervals inside [1,n].
pub fn check_blocks(n: u32, blocks: &[SignedInterval]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::MalformedBlocks("empty block list".into()));
    }
    let mut prev_hi = 0u32;
    for b in blocks {
        b.check_dim(n)?;
        if b.lo <= prev_hi {
            return Err(Error::MalformedBlocks(format!(
                "blocks must be ordered and disjoint; [{},{}] starts at or before {}",
                b.lo, b.hi, prev_hi
            )));
        }
        prev_hi = b.hi;
    }
    Ok(())
}

/// Splits [1,n] into l contiguous intervals of equal cardinality.
pub fn equal_blocks(n: u32, l: u32) -> Result<Vec<SignedInterval>> {
    if l == 0 || n % l != 0 {
        return Err(Error::MalformedBlocks(format!(
            "cannot split [1,{n}] into {l} equal intervals"
        )));
    }
    let w = n / l;
    (0..l)
        .map(|k| SignedInterval::new(k * w + 1, (k + 1) * w))
        .collect()
}

/// g(e,d): coordinate i of the result is d(k)*e(i) for i in block k, and
/// e(i) unchanged outside the blocks. When the blocks cover [1,n],
/// g(e,-d) = -g(e,d); in general g(e,-d) differs from g(e,d) exactly on the
/// union of the blocks. For fixed e, d -> g(e,d) is injective.
pub fn block_product(e: &CubePoint, d: &CubePoint, blocks: &[SignedInterval]) -> Result<CubePoint> {
    check_blocks(e.n, blocks)?;
    if d.n as usize != blocks.len() {
        return Err(Error::DimensionMismatch {
            expected: blocks.len() as u32,
            got: d.n,
        });
    }
    let mut bits = 0u64;
    for (k, b) in blocks.iter().enumerate() {
        if d.sign(k as u32 + 1)? == -1 {
            bits |= b.bits();
        }
    }
    Ok(e.xor(bits))
}

/// The cube {-1,1}^n together with its enumeration cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cube {
    n: u32,
}

impl Cube {
    pub fn new(n: u32) -> Result<Self> {
        Self::with_cap(n, DEFAULT_DIM_CAP)
    }

    /// Explicit cap override for dimensions above the default.
    pub fn with_cap(n: u32, cap: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("cube dimension must be at least 1".into()));
        }
        let cap = cap.min(MAX_DIM);
        if n > cap {
            return Err(Error::CapExceeded { n, cap });
        }
        Ok(Cube { n })
    }

    pub fn dim(&self) -> u32 {
        self.n
    }

    pub fn vertex_count(&self) -> u64 {
        1u64 << self.n
    }

    /// Uniform measure of a single vertex, 2^-n.
    pub fn point_measure(&self) -> f64 {
        1.0 / self.vertex_count() as f64
    }

    pub fn point(&self, mask: u64) -> CubePoint {
        debug_assert!(mask >> self.n == 0);
        CubePoint { n: self.n, mask }
    }

    pub fn points(&self) -> impl Iterator<Item = CubePoint> {
        let n = self.n;
        (0..1u64 << n).map(move |mask| CubePoint { n, mask })
    }
}

const SUM_LEAF: u64 = 1 << 10;
const PAR_GRAIN: u64 = 1 << 14;

fn leaf_sum<F: Fn(CubePoint) -> f64>(n: u32, lo: u64, len: u64, f: &F) -> f64 {
    // Neumaier-compensated running sum.
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for mask in lo..lo + len {
        let x = f(CubePoint { n, mask });
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

fn tree_sum<F: Fn(CubePoint) -> f64 + Sync>(n: u32, lo: u64, len: u64, f: &F) -> f64 {
    if len <= SUM_LEAF {
        return leaf_sum(n, lo, len, f);
    }
    let half = len / 2;
    let (a, b) = if len >= PAR_GRAIN {
        rayon::join(
            || tree_sum(n, lo, half, f),
            || tree_sum(n, lo + half, len - half, f),
        )
    } else {
        (tree_sum(n, lo, half, f), tree_sum(n, lo + half, len - half, f))
    };
    a + b
}

/// E f = 2^-n sum over all vertices. The reduction tree splits the vertex
/// range at fixed midpoints, so the result does not depend on how many
/// workers execute the leaves.
pub fn expect<F>(cube: &Cube, f: F) -> f64
where
    F: Fn(CubePoint) -> f64 + Sync,
{
    let total = cube.vertex_count();
    tree_sum(cube.n, 0, total, &f) * cube.point_measure()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_encoding() {
        let e = CubePoint::from_mask(4, 0b0101).unwrap();
        assert_eq!(e.sign(1).unwrap(), -1);
        assert_eq!(e.sign(2).unwrap(), 1);
        assert_eq!(e.sign(3).unwrap(), -1);
        assert_eq!(e.sign(4).unwrap(), 1);
        assert!(e.sign(5).is_err());
        assert!(e.sign(0).is_err());
    }

    #[test]
    fn metric_examples() {
        let n = 6;
        let e = CubePoint::all_plus(n);
        assert_eq!(hamming_metric(&e, &e).unwrap(), 0.0);
        assert_eq!(hamming_metric(&e, &e.antipode()).unwrap(), 1.0);
        let d1 = flip_coordinate(&e, 3).unwrap();
        assert_eq!(hamming_metric(&e, &d1).unwrap(), 1.0 / 6.0);
        let other = CubePoint::from_mask(5, 0).unwrap();
        assert!(hamming_metric(&e, &other).is_err());
    }

    #[test]
    fn metric_is_a_metric_on_small_cubes() {
        for n in 1..=5u32 {
            let cube = Cube::new(n).unwrap();
            let pts: Vec<_> = cube.points().collect();
            for a in &pts {
                for b in &pts {
                    let dab = hamming_metric(a, b).unwrap();
                    let dba = hamming_metric(b, a).unwrap();
                    assert_eq!(dab, dba);
                    assert_eq!(dab == 0.0, a == b);
                    for c in &pts {
                        let dac = hamming_metric(a, c).unwrap();
                        let dcb = hamming_metric(c, b).unwrap();
                        assert!(dab <= dac + dcb + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn flips_are_involutions() {
        let e = CubePoint::from_mask(8, 0b1011_0010).unwrap();
        for i in 1..=8 {
            let f = flip_coordinate(&e, i).unwrap();
            assert_eq!(flip_coordinate(&f, i).unwrap(), e);
            assert_eq!(hamming_distance(&e, &f).unwrap(), 1);
        }
        let iv = SignedInterval::new(3, 6).unwrap();
        let g = flip_interval(&e, &iv).unwrap();
        assert_eq!(flip_interval(&g, &iv).unwrap(), e);
        assert_eq!(hamming_distance(&e, &g).unwrap(), 4);
    }

    #[test]
    fn interval_partition_composes_to_antipode() {
        let e = CubePoint::from_mask(9, 0b1_0110_0101).unwrap();
        let blocks = equal_blocks(9, 3).unwrap();
        let mut x = e;
        for b in &blocks {
            x = flip_interval(&x, b).unwrap();
        }
        assert_eq!(x, e.antipode());
    }

    #[test]
    fn interval_out_of_range() {
        let e = CubePoint::all_plus(4);
        let iv = SignedInterval::new(3, 5).unwrap();
        assert!(flip_interval(&e, &iv).is_err());
        assert!(SignedInterval::new(0, 2).is_err());
        assert!(SignedInterval::new(4, 2).is_err());
    }

    #[test]
    fn block_product_identity_and_antipode() {
        let e = CubePoint::from_mask(8, 0b0110_1001).unwrap();
        let blocks = equal_blocks(8, 4).unwrap();
        let plus = CubePoint::all_plus(4);
        assert_eq!(block_product(&e, &plus, &blocks).unwrap(), e);
        assert_eq!(
            block_product(&e, &plus.antipode(), &blocks).unwrap(),
            e.antipode()
        );
    }

    #[test]
    fn block_product_is_injective_in_d() {
        let e = CubePoint::from_mask(6, 0b10_1100).unwrap();
        let blocks = equal_blocks(6, 3).unwrap();
        let d_cube = Cube::new(3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for d in d_cube.points() {
            let g = block_product(&e, &d, &blocks).unwrap();
            assert!(seen.insert(g.mask()));
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn block_product_partial_blocks_leave_rest_alone() {
        let e = CubePoint::from_mask(8, 0).unwrap();
        let blocks = vec![
            SignedInterval::new(2, 3).unwrap(),
            SignedInterval::new(6, 7).unwrap(),
        ];
        let d = CubePoint::from_mask(2, 0b01).unwrap(); // d(1) = -1, d(2) = +1
        let g = block_product(&e, &d, &blocks).unwrap();
        assert_eq!(g.mask(), 0b0000_0110);
        // flipping d flips exactly the union of the blocks
        let g2 = block_product(&e, &d.antipode(), &blocks).unwrap();
        assert_eq!(g.mask() ^ g2.mask(), 0b0110_0110);
    }

    #[test]
    fn malformed_blocks_rejected() {
        let e = CubePoint::all_plus(6);
        let d = CubePoint::all_plus(2);
        let overlapping = vec![
            SignedInterval::new(1, 3).unwrap(),
            SignedInterval::new(3, 6).unwrap(),
        ];
        assert!(block_product(&e, &d, &overlapping).is_err());
        let out_of_order = vec![
            SignedInterval::new(4, 6).unwrap(),
            SignedInterval::new(1, 3).unwrap(),
        ];
        assert!(block_product(&e, &d, &out_of_order).is_err());
        let wrong_arity = equal_blocks(6, 3).unwrap();
        assert!(block_product(&e, &d, &wrong_arity).is_err());
    }

    #[test]
    fn cap_errors() {
        assert!(Cube::new(20).is_ok());
        match Cube::new(21) {
            Err(Error::CapExceeded { n, cap }) => {
                assert_eq!((n, cap), (21, DEFAULT_DIM_CAP));
            }
            other => panic!("expected cap error, got {other:?}"),
        }
        assert!(Cube::with_cap(21, 22).is_ok());
        assert!(Cube::with_cap(31, 40).is_err());
    }

    // Exact rational oracle: expectations of integer-valued functions have
    // dyadic rational value k/2^n, which the fixed-tree float sum must hit
    // with zero error.
    #[test]
    fn expect_matches_exact_rational_oracle() {
        for n in [1u32, 3, 7, 12] {
            let cube = Cube::new(n).unwrap();
            let got = expect(&cube, |e| e.mask().count_ones() as f64);
            // sum over masks of popcount = n * 2^(n-1), exactly
            let num: u128 = (n as u128) << (n - 1);
            let den: u128 = 1 << n;
            assert_eq!(got, num as f64 / den as f64);
            assert_eq!(got, n as f64 / 2.0);
        }
    }

    #[test]
    fn expect_of_signs_vanishes_exactly() {
        let cube = Cube::new(10).unwrap();
        for i in 1..=10 {
            assert_eq!(expect(&cube, |e| e.coord(i).unwrap()), 0.0);
        }
    }

    #[test]
    fn expect_is_threading_independent() {
        let cube = Cube::new(16).unwrap();
        let f = |e: CubePoint| ((e.mask().wrapping_mul(0x9e37_79b9_7f4a_7c15)) as f64).sin();
        let a = expect(&cube, f);
        // second run re-dispatches across whatever workers rayon has; the
        // fixed reduction tree must make this bit-identical
        let b = expect(&cube, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

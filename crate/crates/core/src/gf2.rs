//! Bit-packed linear algebra over GF(2).
//!
//! Vectors and matrices are stored densely (64 bits per word, rows packed
//! contiguously). The public surface is positional: callers build matrices
//! from `(row, col)` entries or row supports and read them back the same way.

use std::fmt;

const WORD: usize = 64;

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// A fixed-length vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    /// Builds a vector from the positions holding 1. Repeated positions cancel.
    ///
    /// Panics if a position is out of bounds.
    pub fn from_support<I: IntoIterator<Item = usize>>(len: usize, support: I) -> Self {
        let mut v = Self::zeros(len);
        for i in support {
            v.toggle(i);
        }
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::from_support(bits.len(), bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of bounds for length {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of bounds for length {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of bounds for length {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "length mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Parity of the overlap with `other`.
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "length mismatch");
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones & 1 == 1
    }

    /// Positions holding 1, ascending.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let t = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD + t)
                }
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec[{}; ", self.len)?;
        f.debug_list().entries(self.support()).finish()?;
        write!(f, "]")
    }
}

/// A dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

/// Result of a full row reduction: the pivot column of each nonzero row, in row order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Echelon {
    pub pivots: Vec<usize>,
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix from `(row, col)` positions holding 1.
    ///
    /// Panics on an out-of-bounds position or a duplicated one.
    pub fn from_entries<I: IntoIterator<Item = (usize, usize)>>(rows: usize, cols: usize, entries: I) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (r, c) in entries {
            assert!(!m.get(r, c), "duplicate entry ({r}, {c})");
            m.set(r, c, true);
        }
        m
    }

    /// Builds a matrix from per-row supports. Repeated positions within a row cancel.
    pub fn from_row_supports(cols: usize, rows: &[Vec<usize>]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (r, support) in rows.iter().enumerate() {
            for &c in support {
                m.toggle(r, c);
            }
        }
        m
    }

    pub fn from_rows(cols: usize, rows: &[BitVec]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (r, v) in rows.iter().enumerate() {
            assert_eq!(v.len(), cols, "row length mismatch");
            m.row_words_mut(r).copy_from_slice(v.words());
        }
        m
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols, "entry ({r}, {c}) out of bounds");
        (self.data[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols, "entry ({r}, {c}) out of bounds");
        let w = &mut self.data[r * self.stride + c / WORD];
        let mask = 1u64 << (c % WORD);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, r: usize, c: usize) {
        assert!(r < self.rows && c < self.cols, "entry ({r}, {c}) out of bounds");
        self.data[r * self.stride + c / WORD] ^= 1u64 << (c % WORD);
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVec {
        BitVec {
            len: self.cols,
            words: self.row_words(r).to_vec(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = BitVec> + '_ {
        (0..self.rows).map(|r| self.row(r))
    }

    pub fn col(&self, c: usize) -> BitVec {
        BitVec::from_support(self.rows, (0..self.rows).filter(|&r| self.get(r, c)))
    }

    pub fn row_support(&self, r: usize) -> Vec<usize> {
        let words = self.row_words(r);
        let mut out = Vec::new();
        for (wi, &w) in words.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.push(wi * WORD + w.trailing_zeros() as usize);
                w &= w - 1;
            }
        }
        out
    }

    pub fn row_weight(&self, r: usize) -> usize {
        self.row_words(r).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn col_weight(&self, c: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, c)).count()
    }

    /// All `(row, col)` positions holding 1, row-major.
    pub fn entries(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| self.row_support(r).into_iter().map(move |c| (r, c)))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|w| *w == 0)
    }

    /// `row[dst] ^= row[src]`.
    #[inline]
    pub fn xor_row_into(&mut self, src: usize, dst: usize) {
        debug_assert_ne!(src, dst);
        let s = self.stride;
        let (a, b) = if src < dst {
            let (lo, hi) = self.data.split_at_mut(dst * s);
            (&lo[src * s..(src + 1) * s], &mut hi[..s])
        } else {
            let (lo, hi) = self.data.split_at_mut(src * s);
            (&hi[..s], &mut lo[dst * s..(dst + 1) * s])
        };
        for (d, x) in b.iter_mut().zip(a) {
            *d ^= x;
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let s = self.stride;
        for w in 0..s {
            self.data.swap(a * s + w, b * s + w);
        }
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                t.set(c, r, true);
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.cols, "dimension mismatch");
        let mut out = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            let parity: u32 = self
                .row_words(r)
                .iter()
                .zip(v.words())
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            if parity & 1 == 1 {
                out.set(r, true);
            }
        }
        out
    }

    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in self.row_support(r) {
                let src = other.row_words(k).to_vec();
                for (d, s) in out.row_words_mut(r).iter_mut().zip(&src) {
                    *d ^= s;
                }
            }
        }
        out
    }

    /// `[self | other]`.
    pub fn hstack(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.rows, other.rows, "row count mismatch");
        let mut out = BitMatrix::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                out.set(r, c, true);
            }
            for c in other.row_support(r) {
                out.set(r, self.cols + c, true);
            }
        }
        out
    }

    /// `[self ; other]`.
    pub fn vstack(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.cols, "column count mismatch");
        let mut out = BitMatrix::zeros(self.rows + other.rows, self.cols);
        out.data[..self.data.len()].copy_from_slice(&self.data);
        out.data[self.data.len()..].copy_from_slice(&other.data);
        out
    }

    /// In-place reduction to reduced row echelon form, pivoting on columns
    /// in natural order. Nonzero rows end up first, row `i` carrying the
    /// pivot `pivots[i]`, which is the only 1 in its column.
    pub fn row_reduce(&mut self) -> Echelon {
        self.row_reduce_limited(self.cols)
    }

    /// Like [`row_reduce`](Self::row_reduce) but only pivots on the first `limit` columns;
    /// later columns are transformed along.
    pub fn row_reduce_limited(&mut self, limit: usize) -> Echelon {
        let mut pivots = Vec::new();
        let mut next = 0;
        for c in 0..limit.min(self.cols) {
            if next == self.rows {
                break;
            }
            let word = c / WORD;
            let mask = 1u64 << (c % WORD);
            let Some(p) = (next..self.rows).find(|&r| self.data[r * self.stride + word] & mask != 0) else {
                continue;
            };
            self.swap_rows(p, next);
            for r in 0..self.rows {
                if r != next && self.data[r * self.stride + word] & mask != 0 {
                    self.xor_row_into(next, r);
                }
            }
            pivots.push(c);
            next += 1;
        }
        Echelon { pivots }
    }

    pub fn rank(&self) -> usize {
        self.clone().row_reduce().rank()
    }

    /// Some `x` with `self · x = s`, or `None` if `s` is outside the column space.
    pub fn solve(&self, s: &BitVec) -> Option<BitVec> {
        assert_eq!(s.len(), self.rows, "syndrome length mismatch");
        let mut aug = BitMatrix::zeros(self.rows, self.cols + 1);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                aug.set(r, c, true);
            }
            if s.get(r) {
                aug.set(r, self.cols, true);
            }
        }
        let ech = aug.row_reduce_limited(self.cols);
        for r in ech.rank()..self.rows {
            if aug.get(r, self.cols) {
                return None;
            }
        }
        let mut x = BitVec::zeros(self.cols);
        for (r, &p) in ech.pivots.iter().enumerate() {
            if aug.get(r, self.cols) {
                x.set(p, true);
            }
        }
        Some(x)
    }

    /// A basis of `{x : self · x = 0}`, one vector per free column.
    pub fn nullspace(&self) -> Vec<BitVec> {
        let mut m = self.clone();
        let ech = m.row_reduce();
        let mut is_pivot = vec![false; self.cols];
        for &p in &ech.pivots {
            is_pivot[p] = true;
        }
        (0..self.cols)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = BitVec::zeros(self.cols);
                v.set(f, true);
                for (r, &p) in ech.pivots.iter().enumerate() {
                    if m.get(r, f) {
                        v.set(p, true);
                    }
                }
                v
            })
            .collect()
    }

    /// Inverse of a square matrix, if it exists.
    pub fn inverse(&self) -> Option<BitMatrix> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut aug = self.hstack(&BitMatrix::identity(n));
        let ech = aug.row_reduce_limited(n);
        if ech.rank() < n {
            return None;
        }
        let mut inv = BitMatrix::zeros(n, n);
        for r in 0..n {
            for c in aug.row_support(r) {
                if c >= n {
                    inv.set(r, c - n, true);
                }
            }
        }
        Some(inv)
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows.min(32) {
            let line: String = (0..self.cols.min(96)).map(|c| if self.get(r, c) { '1' } else { '.' }).collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

pub fn rank(m: &BitMatrix) -> usize {
    m.rank()
}

pub fn solve(m: &BitMatrix, s: &BitVec) -> Option<BitVec> {
    m.solve(s)
}

pub fn nullspace(m: &BitMatrix) -> Vec<BitVec> {
    m.nullspace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, density: f64) -> BitMatrix {
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen_bool(density) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(rank(&BitMatrix::identity(3)), 3);
        assert_eq!(rank(&BitMatrix::zeros(4, 5)), 0);
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let s = BitVec::from_support(5, [0, 3]);
        assert_eq!(solve(&BitMatrix::identity(5), &s), Some(s));
    }

    #[test]
    fn solve_zero_matrix_nonzero_rhs_fails() {
        let s = BitVec::from_support(3, [1]);
        assert_eq!(solve(&BitMatrix::zeros(3, 4), &s), None);
    }

    #[test]
    fn solve_random_full_rank_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tried = 0;
        while tried < 20 {
            let m = random_matrix(&mut rng, 10, 20, 0.3);
            if m.rank() != 10 {
                continue;
            }
            tried += 1;
            let x0 = BitVec::from_support(20, (0..20).filter(|_| rng.gen_bool(0.5)));
            let s = m.mul_vec(&x0);
            let x = solve(&m, &s).expect("consistent system");
            assert_eq!(m.mul_vec(&x), s);
        }
    }

    #[test]
    fn nullspace_small_cases() {
        assert!(nullspace(&BitMatrix::identity(3)).is_empty());
        let m = BitMatrix::from_row_supports(2, &[vec![0, 1]]);
        assert_eq!(nullspace(&m), vec![BitVec::from_support(2, [0, 1])]);
    }

    #[test]
    fn row_reduce_records_pivots_in_column_order() {
        let m = BitMatrix::from_row_supports(4, &[vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut r = m.clone();
        let ech = r.row_reduce();
        assert_eq!(ech.pivots, vec![1, 2]);
        assert!(r.row_support(2).is_empty());
        assert_eq!(r.col_weight(1), 1);
        assert_eq!(r.col_weight(2), 1);
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut found = 0;
        while found < 5 {
            let m = random_matrix(&mut rng, 8, 8, 0.5);
            if let Some(inv) = m.inverse() {
                assert_eq!(m.mul(&inv), BitMatrix::identity(8));
                found += 1;
            } else {
                assert!(m.rank() < 8);
            }
        }
    }

    #[test]
    fn transpose_and_stack_shapes() {
        let a = BitMatrix::from_entries(2, 3, [(0, 2), (1, 0)]);
        let t = a.transpose();
        assert_eq!((t.n_rows(), t.n_cols()), (3, 2));
        assert!(t.get(2, 0) && t.get(0, 1));
        assert_eq!(a.hstack(&a).n_cols(), 6);
        assert_eq!(a.vstack(&a).n_rows(), 4);
    }

    #[test]
    #[should_panic(expected = "duplicate entry")]
    fn duplicate_entries_rejected() {
        BitMatrix::from_entries(2, 2, [(0, 1), (0, 1)]);
    }

    fn arb_matrix() -> impl Strategy<Value = BitMatrix> {
        (1usize..24, 1usize..80, any::<u64>()).prop_map(|(r, c, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_matrix(&mut rng, r, c, 0.3)
        })
    }

    proptest! {
        #[test]
        fn nullspace_vectors_are_annihilated(m in arb_matrix()) {
            let basis = nullspace(&m);
            prop_assert_eq!(basis.len() + rank(&m), m.n_cols());
            for v in &basis {
                prop_assert!(m.mul_vec(v).is_zero());
            }
            // basis vectors are independent
            if !basis.is_empty() {
                prop_assert_eq!(BitMatrix::from_rows(m.n_cols(), &basis).rank(), basis.len());
            }
        }

        #[test]
        fn solve_reproduces_consistent_rhs(m in arb_matrix(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = BitVec::from_support(m.n_cols(), (0..m.n_cols()).filter(|_| rng.gen_bool(0.5)));
            let s = m.mul_vec(&x0);
            let x = solve(&m, &s).unwrap();
            prop_assert_eq!(m.mul_vec(&x), s);
        }

        #[test]
        fn support_round_trips(len in 1usize..300, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let support: Vec<usize> = (0..len).filter(|_| rng.gen_bool(0.2)).collect();
            let v = BitVec::from_support(len, support.iter().copied());
            prop_assert_eq!(v.support().collect::<Vec<_>>(), support.clone());
            prop_assert_eq!(v.weight(), support.len());
        }
    }
}

//! Exact integer linear algebra: sparse matrices, Smith normal form,
//! bigraded chain complexes, homology with torsion, Laurent polynomials.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum AlgebraError {
    #[error("differential does not square to zero at homological degree {0}")]
    NotAComplex(i64),
    #[error("differential at degree {degree} does not preserve the secondary grading (generator {gen})")]
    GradingViolation { degree: i64, gen: String },
    #[error("matrix shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("inexact division of Laurent polynomials")]
    InexactDivision,
    #[error("substitution requires even exponents, found doubled exponent {0}")]
    OddExponent(i64),
}

/// Sparse matrix over the integers. Acts on column vectors, so an
/// `rows x cols` matrix maps a module with `cols` generators to one
/// with `rows` generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseIntMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: BTreeMap<(usize, usize), BigInt>,
}

impl SparseIntMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        SparseIntMatrix { rows, cols, entries: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.set(i, i, BigInt::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zero(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, BigInt::from(v));
            }
        }
        m
    }

    pub fn set(&mut self, row: usize, col: usize, value: BigInt) {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        if value.is_zero() {
            self.entries.remove(&(row, col));
        } else {
            self.entries.insert((row, col), value);
        }
    }

    pub fn get(&self, row: usize, col: usize) -> BigInt {
        self.entries.get(&(row, col)).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn add_to(&mut self, row: usize, col: usize, delta: &BigInt) {
        let v = self.get(row, col) + delta;
        self.set(row, col, v);
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &BigInt)> {
        self.entries.iter().map(|(&(r, c), v)| (r, c, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero(self.cols, self.rows);
        for (r, c, v) in self.entries() {
            m.set(c, r, v.clone());
        }
        m
    }

    pub fn neg(&self) -> Self {
        let mut m = Self::zero(self.rows, self.cols);
        for (r, c, v) in self.entries() {
            m.set(r, c, -v);
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (r, c, v) in other.entries() {
            m.add_to(r, c, v);
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matrix product shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        // group the right factor by row for sparse traversal
        let mut by_row: BTreeMap<usize, Vec<(usize, &BigInt)>> = BTreeMap::new();
        for (r, c, v) in other.entries() {
            by_row.entry(r).or_default().push((c, v));
        }
        let mut m = Self::zero(self.rows, other.cols);
        for (r, k, a) in self.entries() {
            if let Some(row) = by_row.get(&k) {
                for &(c, b) in row {
                    m.add_to(r, c, &(a * b));
                }
            }
        }
        m
    }

    pub fn drop_row(&self, row: usize) -> Self {
        let mut m = Self::zero(self.rows - 1, self.cols);
        for (r, c, v) in self.entries() {
            if r != row {
                m.set(if r > row { r - 1 } else { r }, c, v.clone());
            }
        }
        m
    }

    pub fn drop_col(&self, col: usize) -> Self {
        let mut m = Self::zero(self.rows, self.cols - 1);
        for (r, c, v) in self.entries() {
            if c != col {
                m.set(r, if c > col { c - 1 } else { c }, v.clone());
            }
        }
        m
    }

    pub fn scale(&self, s: &BigInt) -> Self {
        let mut m = Self::zero(self.rows, self.cols);
        for (r, c, v) in self.entries() {
            m.set(r, c, v * s);
        }
        m
    }

    /// Vertical stack helper used when assembling block matrices.
    pub fn block(blocks: &[Vec<Option<&SparseIntMatrix>>], row_sizes: &[usize], col_sizes: &[usize]) -> Self {
        let rows: usize = row_sizes.iter().sum();
        let cols: usize = col_sizes.iter().sum();
        let mut m = Self::zero(rows, cols);
        let mut roff = 0;
        for (bi, brow) in blocks.iter().enumerate() {
            let mut coff = 0;
            for (bj, blk) in brow.iter().enumerate() {
                if let Some(b) = blk {
                    assert_eq!(b.rows, row_sizes[bi]);
                    assert_eq!(b.cols, col_sizes[bj]);
                    for (r, c, v) in b.entries() {
                        m.set(roff + r, coff + c, v.clone());
                    }
                }
                coff += col_sizes[bj];
            }
            roff += row_sizes[bi];
        }
        m
    }

    /// Determinant by fraction-free elimination; intended for the small
    /// unimodularity checks in tests, not for production paths.
    pub fn determinant(&self) -> BigInt {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut a: Vec<Vec<BigInt>> = (0..n).map(|r| (0..n).map(|c| self.get(r, c)).collect()).collect();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if a[k][k].is_zero() {
                match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                    Some(r) => {
                        a.swap(k, r);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = &a[k][k] * &a[i][j] - &a[i][k] * &a[k][j];
                    a[i][j] = num / &prev;
                }
                a[i][k] = BigInt::zero();
            }
            prev = a[k][k].clone();
        }
        sign * a[n - 1][n - 1].clone()
    }

    pub fn rank_mod2(&self) -> usize {
        let mut rows: Vec<u128> = Vec::new();
        // chunk columns into u128 words
        let words = (self.cols + 127) / 128;
        let mut dense: Vec<Vec<u128>> = vec![vec![0u128; words]; self.rows];
        for (r, c, v) in self.entries() {
            if v.bit(0) {
                dense[r][c / 128] ^= 1u128 << (c % 128);
            }
        }
        let _ = &mut rows;
        let mut rank = 0usize;
        let mut pivots: Vec<(usize, usize, Vec<u128>)> = Vec::new();
        for mut row in dense {
            for (w, b, p) in &pivots {
                if row[*w] >> *b & 1 == 1 {
                    for (x, y) in row.iter_mut().zip(p.iter()) {
                        *x ^= *y;
                    }
                }
            }
            if let Some(w) = row.iter().position(|&x| x != 0) {
                let b = row[w].trailing_zeros() as usize;
                pivots.push((w, b, row));
                rank += 1;
            }
        }
        rank
    }
}

impl fmt::Display for SparseIntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// Result of a Smith normal form computation: U * A * V = diag(d) padded
/// with zeros, with U and V unimodular and d_k | d_{k+1}.
#[derive(Clone, Debug)]
pub struct SNFResult {
    pub u: SparseIntMatrix,
    pub v: SparseIntMatrix,
    pub diag: Vec<BigInt>,
}

impl SNFResult {
    pub fn rank(&self) -> usize {
        self.diag.len()
    }
}

/// Smith normal form over the integers. Pivots are chosen with minimal
/// absolute value, ties broken by least fill-in, which keeps intermediate
/// entries small on the sparse {0, +-1} matrices arising from resolution
/// cubes.
pub fn smith_normal_form(a: &SparseIntMatrix) -> SNFResult {
    let (rows, cols) = (a.rows, a.cols);
    // dense working copies; entries can grow, BigInt throughout
    let mut m: Vec<Vec<BigInt>> = vec![vec![BigInt::zero(); cols]; rows];
    for (r, c, v) in a.entries() {
        m[r][c] = v.clone();
    }
    let mut u: Vec<Vec<BigInt>> = (0..rows)
        .map(|r| (0..rows).map(|c| if r == c { BigInt::one() } else { BigInt::zero() }).collect())
        .collect();
    let mut v: Vec<Vec<BigInt>> = (0..cols)
        .map(|r| (0..cols).map(|c| if r == c { BigInt::one() } else { BigInt::zero() }).collect())
        .collect();

    let n = rows.min(cols);
    let mut t = 0usize;
    while t < n {
        // pivot search in the trailing submatrix
        let mut best: Option<(usize, usize)> = None;
        let mut best_key: Option<(BigInt, usize)> = None;
        for r in t..rows {
            for c in t..cols {
                if m[r][c].is_zero() {
                    continue;
                }
                let abs = m[r][c].abs();
                let fill = (t..cols).filter(|&j| !m[r][j].is_zero()).count()
                    + (t..rows).filter(|&i| !m[i][c].is_zero()).count();
                let key = (abs, fill);
                if best_key.as_ref().map_or(true, |k| key < *k) {
                    best_key = Some(key);
                    best = Some((r, c));
                }
            }
        }
        let Some((pr, pc)) = best else { break };
        m.swap(t, pr);
        u.swap(t, pr);
        if pc != t {
            for row in m.iter_mut() {
                row.swap(t, pc);
            }
            for row in v.iter_mut() {
                row.swap(t, pc);
            }
        }

        // clear row and column t; restart if a reduction creates a smaller
        // remainder (standard gcd sweep)
        loop {
            let mut done = true;
            for r in t + 1..rows {
                if m[r][t].is_zero() {
                    continue;
                }
                let q = div_nearest(&m[r][t], &m[t][t]);
                if !q.is_zero() {
                    for c in 0..cols {
                        let d = &q * &m[t][c];
                        m[r][c] -= d;
                    }
                    for c in 0..rows {
                        let d = &q * &u[t][c];
                        u[r][c] -= d;
                    }
                }
                if !m[r][t].is_zero() {
                    m.swap(t, r);
                    u.swap(t, r);
                    done = false;
                }
            }
            for c in t + 1..cols {
                if m[t][c].is_zero() {
                    continue;
                }
                let q = div_nearest(&m[t][c], &m[t][t]);
                if !q.is_zero() {
                    for r in 0..rows {
                        let d = &q * &m[r][t];
                        m[r][c] -= d;
                    }
                    for r in 0..cols {
                        let d = &q * &v[r][t];
                        v[r][c] -= d;
                    }
                }
                if !m[t][c].is_zero() {
                    for row in m.iter_mut() {
                        row.swap(t, c);
                    }
                    for row in v.iter_mut() {
                        row.swap(t, c);
                    }
                    done = false;
                }
            }
            if done {
                break;
            }
        }

        // the pivot must divide every remaining entry; if not, fold the
        // offending row in and redo this position
        let mut clean = true;
        'search: for r in t + 1..rows {
            for c in t + 1..cols {
                if !(&m[r][c] % &m[t][t]).is_zero() {
                    for j in 0..cols {
                        let add = m[r][j].clone();
                        m[t][j] += add;
                    }
                    for j in 0..rows {
                        let add = u[r][j].clone();
                        u[t][j] += add;
                    }
                    clean = false;
                    break 'search;
                }
            }
        }
        if !clean {
            continue;
        }
        if m[t][t].is_negative() {
            for c in 0..cols {
                m[t][c] = -m[t][c].clone();
            }
            for c in 0..rows {
                u[t][c] = -u[t][c].clone();
            }
        }
        t += 1;
    }

    let diag: Vec<BigInt> = (0..n).map(|i| m[i][i].clone()).filter(|d| !d.is_zero()).collect();
    let mut um = SparseIntMatrix::zero(rows, rows);
    for (r, row) in u.iter().enumerate() {
        for (c, val) in row.iter().enumerate() {
            if !val.is_zero() {
                um.set(r, c, val.clone());
            }
        }
    }
    let mut vm = SparseIntMatrix::zero(cols, cols);
    for (r, row) in v.iter().enumerate() {
        for (c, val) in row.iter().enumerate() {
            if !val.is_zero() {
                vm.set(r, c, val.clone());
            }
        }
    }
    SNFResult { u: um, v: vm, diag }
}

/// Quotient rounding to nearest, so remainders satisfy |r| <= |b|/2.
fn div_nearest(a: &BigInt, b: &BigInt) -> BigInt {
    assert!(!b.is_zero());
    let mut q = a / b;
    let r = a - &q * b;
    if r.abs() * 2 > b.abs() {
        if r.sign() == b.sign() {
            q += 1;
        } else {
            q -= 1;
        }
    }
    q
}

/// Coefficient rings supported by homology computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ring {
    Z,
    Z2,
    Q,
}

impl std::str::FromStr for Ring {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Z" | "z" => Ok(Ring::Z),
            "Z2" | "z2" | "Z/2" => Ok(Ring::Z2),
            "Q" | "q" => Ok(Ring::Q),
            other => Err(format!("unknown coefficient ring {other:?} (expected Z, Z2 or Q)")),
        }
    }
}

/// Bigraded cochain complex with integer coefficients. Homological degree
/// i runs along the differentials, a secondary grading j is preserved by
/// them. Generators carry names so chain maps can be written down against
/// a stable basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedComplex {
    /// per bidegree (i, j): ordered list of generator names
    pub generators: BTreeMap<(i64, i64), Vec<String>>,
    /// per i: the full differential C^i -> C^{i+1}, columns ordered by
    /// `basis(i)`, rows by `basis(i+1)`
    pub differentials: BTreeMap<i64, SparseIntMatrix>,
}

impl GradedComplex {
    pub fn new(generators: BTreeMap<(i64, i64), Vec<String>>, differentials: BTreeMap<i64, SparseIntMatrix>) -> Self {
        GradedComplex { generators, differentials }
    }

    pub fn empty() -> Self {
        GradedComplex { generators: BTreeMap::new(), differentials: BTreeMap::new() }
    }

    /// Ordered basis at homological degree i: ascending j, then position.
    pub fn basis(&self, i: i64) -> Vec<(i64, String)> {
        self.generators
            .range((i, i64::MIN)..=(i, i64::MAX))
            .flat_map(|(&(_, j), names)| names.iter().map(move |n| (j, n.clone())))
            .collect()
    }

    pub fn dim(&self, i: i64) -> usize {
        self.generators.range((i, i64::MIN)..=(i, i64::MAX)).map(|(_, g)| g.len()).sum()
    }

    pub fn dim_at(&self, i: i64, j: i64) -> usize {
        self.generators.get(&(i, j)).map_or(0, |g| g.len())
    }

    pub fn i_range(&self) -> Option<(i64, i64)> {
        let mut it = self.generators.keys().map(|&(i, _)| i);
        let first = it.next()?;
        let (mut lo, mut hi) = (first, first);
        for i in it {
            lo = lo.min(i);
            hi = hi.max(i);
        }
        Some((lo, hi))
    }

    pub fn differential(&self, i: i64) -> SparseIntMatrix {
        match self.differentials.get(&i) {
            Some(d) => d.clone(),
            None => SparseIntMatrix::zero(self.dim(i + 1), self.dim(i)),
        }
    }

    /// Offset of the (i, j) block inside the ordered basis at degree i.
    pub fn block_offset(&self, i: i64, j: i64) -> usize {
        self.generators
            .range((i, i64::MIN)..(i, j))
            .map(|(_, g)| g.len())
            .sum()
    }

    /// The restriction of d_i to the j-block.
    pub fn block_differential(&self, i: i64, j: i64) -> SparseIntMatrix {
        let src = self.dim_at(i, j);
        let tgt = self.dim_at(i + 1, j);
        let mut m = SparseIntMatrix::zero(tgt, src);
        if src == 0 || tgt == 0 {
            return m;
        }
        let d = self.differential(i);
        let coff = self.block_offset(i, j);
        let roff = self.block_offset(i + 1, j);
        for (r, c, v) in d.entries() {
            if c >= coff && c < coff + src && r >= roff && r < roff + tgt {
                m.set(r - roff, c - coff, v.clone());
            }
        }
        m
    }

    /// Checks d*d = 0 and that each differential is block-diagonal in j.
    pub fn validate(&self) -> Result<(), AlgebraError> {
        let Some((lo, hi)) = self.i_range() else { return Ok(()) };
        for i in lo..=hi {
            let d = self.differential(i);
            if d.rows != self.dim(i + 1) || d.cols != self.dim(i) {
                return Err(AlgebraError::ShapeMismatch(format!(
                    "differential at degree {i} is {}x{}, expected {}x{}",
                    d.rows,
                    d.cols,
                    self.dim(i + 1),
                    self.dim(i)
                )));
            }
            let src = self.basis(i);
            let tgt = self.basis(i + 1);
            for (r, c, _) in d.entries() {
                if src[c].0 != tgt[r].0 {
                    return Err(AlgebraError::GradingViolation { degree: i, gen: src[c].1.clone() });
                }
            }
            if i > lo {
                let prev = self.differential(i - 1);
                if !d.mul(&prev).is_zero() {
                    return Err(AlgebraError::NotAComplex(i - 1));
                }
            }
        }
        Ok(())
    }
}

/// A finitely generated abelian group per bidegree: free rank plus a
/// sorted list of prime-power torsion orders.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSummand {
    pub rank: usize,
    pub torsion: Vec<u64>,
}

impl GroupSummand {
    pub fn is_trivial(&self) -> bool {
        self.rank == 0 && self.torsion.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbelianGroupTable {
    pub entries: BTreeMap<(i64, i64), GroupSummand>,
}

impl AbelianGroupTable {
    pub fn insert(&mut self, bidegree: (i64, i64), summand: GroupSummand) {
        if !summand.is_trivial() {
            self.entries.insert(bidegree, summand);
        }
    }

    pub fn get(&self, bidegree: (i64, i64)) -> GroupSummand {
        self.entries.get(&bidegree).cloned().unwrap_or_default()
    }

    pub fn total_rank(&self) -> usize {
        self.entries.values().map(|g| g.rank).sum()
    }
}

/// Prime-power decomposition of a positive integer >= 2, ascending.
pub fn prime_power_decomposition(n: &BigInt) -> Vec<u64> {
    let mut n = n.clone();
    assert!(n > BigInt::one());
    let mut out = Vec::new();
    let mut p = BigInt::from(2u32);
    while &p * &p <= n {
        if (&n % &p).is_zero() {
            let mut pk = BigInt::one();
            while (&n % &p).is_zero() {
                n /= &p;
                pk *= &p;
            }
            out.push(u64::try_from(&pk).expect("torsion order overflows u64"));
        }
        p += 1;
    }
    if n > BigInt::one() {
        out.push(u64::try_from(&n).expect("torsion order overflows u64"));
    }
    out.sort_unstable();
    out
}

fn rank_over(m: &SparseIntMatrix, ring: Ring) -> usize {
    match ring {
        Ring::Z2 => m.rank_mod2(),
        _ => smith_normal_form(m).rank(),
    }
}

/// Homology of a validated bigraded complex, per bidegree.
pub fn homology(c: &GradedComplex, ring: Ring) -> Result<AbelianGroupTable, AlgebraError> {
    c.validate()?;
    let mut table = AbelianGroupTable::default();
    let bidegrees: Vec<(i64, i64)> = c.generators.keys().cloned().collect();
    use rayon::prelude::*;
    let computed: Vec<((i64, i64), GroupSummand)> = bidegrees
        .par_iter()
        .map(|&(i, j)| {
            let n = c.dim_at(i, j);
            let d_out = c.block_differential(i, j);
            let d_in = c.block_differential(i - 1, j);
            let summand = match ring {
                Ring::Q => {
                    let r_out = rank_over(&d_out, Ring::Q);
                    let r_in = rank_over(&d_in, Ring::Q);
                    GroupSummand { rank: n - r_out - r_in, torsion: vec![] }
                }
                Ring::Z2 => {
                    let r_out = d_out.rank_mod2();
                    let r_in = d_in.rank_mod2();
                    GroupSummand { rank: n - r_out - r_in, torsion: vec![] }
                }
                Ring::Z => {
                    let snf_in = smith_normal_form(&d_in);
                    let r_out = smith_normal_form(&d_out).rank();
                    let mut torsion = Vec::new();
                    for d in &snf_in.diag {
                        if d > &BigInt::one() {
                            torsion.extend(prime_power_decomposition(d));
                        }
                    }
                    torsion.sort_unstable();
                    GroupSummand { rank: n - r_out - snf_in.rank(), torsion }
                }
            };
            ((i, j), summand)
        })
        .collect();
    for (bidegree, summand) in computed {
        table.insert(bidegree, summand);
    }
    Ok(table)
}

/// Laurent polynomial with half-integer exponents. Exponents are stored
/// doubled so that all arithmetic stays in the integers: the key `e`
/// stands for the monomial x^(e/2) in whichever variable (q or t) the
/// caller has in mind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LaurentPoly {
    coeffs: BTreeMap<i64, BigInt>,
}

impl LaurentPoly {
    pub fn zero() -> Self {
        LaurentPoly::default()
    }

    pub fn one() -> Self {
        Self::monomial_doubled(0, BigInt::one())
    }

    /// x^(doubled/2) with the given coefficient.
    pub fn monomial_doubled(doubled: i64, coeff: BigInt) -> Self {
        let mut p = Self::zero();
        p.add_term(doubled, coeff);
        p
    }

    /// x^e for an integer exponent e.
    pub fn monomial(e: i64, coeff: i64) -> Self {
        Self::monomial_doubled(2 * e, BigInt::from(coeff))
    }

    pub fn add_term(&mut self, doubled: i64, coeff: BigInt) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(doubled).or_insert_with(BigInt::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.coeffs.remove(&doubled);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &BigInt)> {
        self.coeffs.iter().map(|(&e, c)| (e, c))
    }

    pub fn coeff_doubled(&self, doubled: i64) -> BigInt {
        self.coeffs.get(&doubled).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (e, c) in other.terms() {
            p.add_term(e, c.clone());
        }
        p
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut p = Self::zero();
        for (e, c) in self.terms() {
            p.add_term(e, -c);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero();
        for (e1, c1) in self.terms() {
            for (e2, c2) in other.terms() {
                p.add_term(e1 + e2, c1 * c2);
            }
        }
        p
    }

    /// Exact division; errors when the remainder is nonzero.
    pub fn div_exact(&self, divisor: &Self) -> Result<Self, AlgebraError> {
        if divisor.is_zero() {
            return Err(AlgebraError::InexactDivision);
        }
        if self.is_zero() {
            return Ok(Self::zero());
        }
        let mut rem = self.clone();
        let mut quot = Self::zero();
        let (&lead_e, lead_c) = divisor.coeffs.iter().next_back().unwrap();
        // the quotient's exponents cannot drop below this, so any term
        // that would means the division is inexact
        let low = self.coeffs.keys().next().unwrap() - divisor.coeffs.keys().next().unwrap();
        while !rem.is_zero() {
            let (&re, rc) = rem.coeffs.iter().next_back().unwrap();
            let (q, r) = (rc / lead_c, rc % lead_c);
            if !r.is_zero() || q.is_zero() || re - lead_e < low {
                return Err(AlgebraError::InexactDivision);
            }
            let term = Self::monomial_doubled(re - lead_e, q);
            rem = rem.sub(&term.mul(divisor));
            quot = quot.add(&term);
        }
        Ok(quot)
    }

    /// Substitutes x := y^(1/2): every exponent is halved. Requires all
    /// doubled exponents to be even (i.e. integer exponents in x).
    pub fn halve_exponents(&self) -> Result<Self, AlgebraError> {
        let mut p = Self::zero();
        for (e, c) in self.terms() {
            if e % 2 != 0 {
                return Err(AlgebraError::OddExponent(e));
            }
            p.add_term(e / 2, c.clone());
        }
        Ok(p)
    }

    /// Renders with the given variable name, ascending exponents; half
    /// integer exponents print as e.g. t^(3/2).
    pub fn render(&self, var: &str) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (e, c) in self.terms() {
            let sign = if c.is_negative() { "-" } else { "+" };
            let mag = c.abs();
            if out.is_empty() {
                if c.is_negative() {
                    out.push('-');
                }
            } else {
                out.push_str(&format!(" {} ", sign));
            }
            let coeff_part = if mag.is_one() && e != 0 { String::new() } else { mag.to_string() };
            let var_part = match e {
                0 => String::new(),
                2 => var.to_string(),
                e if e % 2 == 0 => format!("{var}^{}", e / 2),
                e => format!("{var}^({e}/2)"),
            };
            match (coeff_part.is_empty(), var_part.is_empty()) {
                (true, _) => out.push_str(&var_part),
                (false, true) => out.push_str(&coeff_part),
                (false, false) => out.push_str(&format!("{coeff_part}*{var_part}")),
            }
        }
        out
    }
}

/// Sum over bidegrees of (-1)^i rank q^j, torsion discarded; the caller
/// supplies a rational (or integral) homology table.
pub fn graded_euler_characteristic(t: &AbelianGroupTable) -> LaurentPoly {
    let mut p = LaurentPoly::zero();
    for (&(i, j), g) in &t.entries {
        if g.rank == 0 {
            continue;
        }
        let sign = if i.rem_euclid(2) == 0 { 1 } else { -1 };
        p.add_term(2 * j, BigInt::from(sign * g.rank as i64));
    }
    p
}

/// Dense bit matrix over the two-element field, one u64 word per 64
/// columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    pub rows: usize,
    pub cols: usize,
    words: Vec<u64>,
    stride: usize,
}

impl BitMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(64);
        BitMatrix { rows, cols, words: vec![0; rows * stride], stride }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_int(a: &SparseIntMatrix) -> Self {
        let mut m = Self::zero(a.rows, a.cols);
        for (r, c, v) in a.entries() {
            if v.bit(0) {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.words[r * self.stride + c / 64] >> (c % 64) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.words[r * self.stride + c / 64];
        if v {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    fn xor_row(&mut self, dst: usize, src: usize) {
        let (d, s) = (dst * self.stride, src * self.stride);
        for k in 0..self.stride {
            let w = self.words[s + k];
            self.words[d + k] ^= w;
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut m = Self::zero(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) {
                    let (d, s) = (r * m.stride, k * other.stride);
                    for w in 0..m.stride {
                        m.words[d + w] ^= other.words[s + w];
                    }
                }
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (w, o) in m.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn column(&self, c: usize) -> Vec<bool> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Row echelon pivots of the column space; returns (pivot row per
    /// reduced column, reduced copy).
    fn echelon(&self) -> (Vec<(usize, usize)>, BitMatrix) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r0 = 0;
        for c in 0..m.cols {
            let Some(p) = (r0..m.rows).find(|&r| m.get(r, c)) else { continue };
            if p != r0 {
                let (a, b) = (p * m.stride, r0 * m.stride);
                for k in 0..m.stride {
                    m.words.swap(a + k, b + k);
                }
            }
            for r in 0..m.rows {
                if r != r0 && m.get(r, c) {
                    m.xor_row(r, r0);
                }
            }
            pivots.push((r0, c));
            r0 += 1;
            if r0 == m.rows {
                break;
            }
        }
        (pivots, m)
    }

    pub fn rank(&self) -> usize {
        self.echelon().0.len()
    }

    /// Basis of the right kernel, as columns.
    pub fn kernel_basis(&self) -> BitMatrix {
        let (pivots, red) = self.echelon();
        let pivot_cols: BTreeSet<usize> = pivots.iter().map(|&(_, c)| c).collect();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivot_cols.contains(c)).collect();
        let mut k = BitMatrix::zero(self.cols, free.len());
        for (idx, &fc) in free.iter().enumerate() {
            k.set(fc, idx, true);
            for &(pr, pc) in &pivots {
                if red.get(pr, fc) {
                    k.set(pc, idx, true);
                }
            }
        }
        k
    }

    /// Solves self * X = B, if solvable.
    pub fn solve(&self, b: &BitMatrix) -> Option<BitMatrix> {
        assert_eq!(self.rows, b.rows);
        // eliminate on the augmented matrix
        let mut aug = BitMatrix::zero(self.rows, self.cols + b.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    aug.set(r, c, true);
                }
            }
            for c in 0..b.cols {
                if b.get(r, c) {
                    aug.set(r, self.cols + c, true);
                }
            }
        }
        let mut pivots = Vec::new();
        let mut r0 = 0;
        for c in 0..self.cols {
            let Some(p) = (r0..aug.rows).find(|&r| aug.get(r, c)) else { continue };
            if p != r0 {
                let (a, bb) = (p * aug.stride, r0 * aug.stride);
                for k in 0..aug.stride {
                    aug.words.swap(a + k, bb + k);
                }
            }
            for r in 0..aug.rows {
                if r != r0 && aug.get(r, c) {
                    aug.xor_row(r, r0);
                }
            }
            pivots.push((r0, c));
            r0 += 1;
            if r0 == aug.rows {
                break;
            }
        }
        // inconsistent rows
        for r in r0..aug.rows {
            for c in 0..b.cols {
                if aug.get(r, self.cols + c) {
                    return None;
                }
            }
        }
        let mut x = BitMatrix::zero(self.cols, b.cols);
        for &(pr, pc) in &pivots {
            for c in 0..b.cols {
                if aug.get(pr, self.cols + c) {
                    x.set(pc, c, true);
                }
            }
        }
        Some(x)
    }
}

/// Integer basis of the rational kernel of the (i, j) block differential,
/// as columns. The last cols - rank columns of V in U A V = D span the
/// kernel of A over the rationals.
pub fn rational_cycle_basis(c: &GradedComplex, i: i64, j: i64) -> SparseIntMatrix {
    let d = c.block_differential(i, j);
    let snf = smith_normal_form(&d);
    let r = snf.rank();
    let n = d.cols;
    let mut z = SparseIntMatrix::zero(n, n - r);
    for (row, col, v) in snf.v.entries() {
        if col >= r {
            z.set(row, col - r, v.clone());
        }
    }
    z
}

/// Solves A X = B over the integers, if an integral solution exists.
pub fn solve_exact(a: &SparseIntMatrix, b: &SparseIntMatrix) -> Option<SparseIntMatrix> {
    assert_eq!(a.rows, b.rows, "solve shape mismatch");
    let snf = smith_normal_form(a);
    let ub = snf.u.mul(b);
    let r = snf.rank();
    for (row, _, v) in ub.entries() {
        if row >= r && !v.is_zero() {
            return None;
        }
    }
    let mut y = SparseIntMatrix::zero(a.cols, b.cols);
    for (row, c, v) in ub.entries() {
        if row >= r {
            continue;
        }
        let d = &snf.diag[row];
        if (v % d).is_zero() {
            y.set(row, c, v / d);
        } else {
            return None;
        }
    }
    Some(snf.v.mul(&y))
}

/// Rank over the rationals of the span of the columns of `z` inside the
/// homology at (i, j): rank([z | boundaries]) - rank(boundaries).
pub fn rank_modulo_boundaries(c: &GradedComplex, i: i64, j: i64, z: &SparseIntMatrix) -> usize {
    let b = c.block_differential(i - 1, j);
    let rb = smith_normal_form(&b).rank();
    let joint = SparseIntMatrix::block(&[vec![Some(z), Some(&b)]], &[z.rows], &[z.cols, b.cols]);
    smith_normal_form(&joint).rank() - rb
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snf_check(a: &SparseIntMatrix) -> SNFResult {
        let r = smith_normal_form(a);
        // U*A*V must equal the diagonal matrix of diag padded with zeros
        let prod = r.u.mul(a).mul(&r.v);
        let mut expect = SparseIntMatrix::zero(a.rows, a.cols);
        for (k, d) in r.diag.iter().enumerate() {
            expect.set(k, k, d.clone());
        }
        assert_eq!(prod, expect, "U*A*V != D for\n{a}");
        let du = r.u.determinant();
        let dv = r.v.determinant();
        assert!(du.abs().is_one(), "det U = {du}");
        assert!(dv.abs().is_one(), "det V = {dv}");
        for w in r.diag.windows(2) {
            assert!((&w[1] % &w[0]).is_zero(), "divisibility fails: {:?}", r.diag);
        }
        for d in &r.diag {
            assert!(d > &BigInt::zero());
        }
        r
    }

    #[test]
    fn snf_identity() {
        let a = SparseIntMatrix::identity(2);
        let r = snf_check(&a);
        assert_eq!(r.diag, vec![BigInt::one(), BigInt::one()]);
    }

    #[test]
    fn snf_diag_2_3() {
        let a = SparseIntMatrix::from_rows(&[vec![2, 0], vec![0, 3]]);
        let r = snf_check(&a);
        assert_eq!(r.diag, vec![BigInt::one(), BigInt::from(6)]);
    }

    #[test]
    fn snf_rank_one() {
        let a = SparseIntMatrix::from_rows(&[vec![2, 4], vec![4, 8]]);
        let r = snf_check(&a);
        assert_eq!(r.diag, vec![BigInt::from(2)]);
    }

    #[test]
    fn snf_zero_and_empty() {
        snf_check(&SparseIntMatrix::zero(3, 2));
        snf_check(&SparseIntMatrix::zero(0, 0));
        snf_check(&SparseIntMatrix::zero(0, 4));
    }

    #[test]
    fn homology_single_generator() {
        let mut gens = BTreeMap::new();
        gens.insert((0, 5), vec!["g".to_string()]);
        let c = GradedComplex::new(gens, BTreeMap::new());
        let t = homology(&c, Ring::Z).unwrap();
        assert_eq!(t.get((0, 5)), GroupSummand { rank: 1, torsion: vec![] });
    }

    #[test]
    fn homology_times_two() {
        // 0 -> Z --x2--> Z -> 0 gives Z/2 at the target degree
        let mut gens = BTreeMap::new();
        gens.insert((0, 0), vec!["a".to_string()]);
        gens.insert((1, 0), vec!["b".to_string()]);
        let mut diffs = BTreeMap::new();
        diffs.insert(0, SparseIntMatrix::from_rows(&[vec![2]]));
        let c = GradedComplex::new(gens, diffs);
        let t = homology(&c, Ring::Z).unwrap();
        assert_eq!(t.get((0, 0)), GroupSummand::default());
        assert_eq!(t.get((1, 0)), GroupSummand { rank: 0, torsion: vec![2] });
        let tq = homology(&c, Ring::Q).unwrap();
        assert!(tq.entries.is_empty());
        let t2 = homology(&c, Ring::Z2).unwrap();
        assert_eq!(t2.get((0, 0)).rank, 1);
        assert_eq!(t2.get((1, 0)).rank, 1);
    }

    #[test]
    fn homology_rejects_non_complex() {
        let mut gens = BTreeMap::new();
        gens.insert((0, 0), vec!["a".to_string()]);
        gens.insert((1, 0), vec!["b".to_string()]);
        gens.insert((2, 0), vec!["c".to_string()]);
        let mut diffs = BTreeMap::new();
        diffs.insert(0, SparseIntMatrix::from_rows(&[vec![1]]));
        diffs.insert(1, SparseIntMatrix::from_rows(&[vec![1]]));
        let c = GradedComplex::new(gens, diffs);
        assert!(matches!(homology(&c, Ring::Z), Err(AlgebraError::NotAComplex(0))));
    }

    #[test]
    fn euler_characteristic_unknot_table() {
        let mut t = AbelianGroupTable::default();
        t.insert((0, 1), GroupSummand { rank: 1, torsion: vec![] });
        t.insert((0, -1), GroupSummand { rank: 1, torsion: vec![] });
        let p = graded_euler_characteristic(&t);
        let expect = LaurentPoly::monomial(1, 1).add(&LaurentPoly::monomial(-1, 1));
        assert_eq!(p, expect);
    }

    #[test]
    fn euler_characteristic_empty() {
        assert!(graded_euler_characteristic(&AbelianGroupTable::default()).is_zero());
    }

    #[test]
    fn laurent_div_exact() {
        // (q + q^-1)^2 / (q + q^-1)
        let q = LaurentPoly::monomial(1, 1).add(&LaurentPoly::monomial(-1, 1));
        let sq = q.mul(&q);
        assert_eq!(sq.div_exact(&q).unwrap(), q);
        let one = LaurentPoly::one();
        assert!(one.div_exact(&q).is_err());
    }

    #[test]
    fn laurent_render() {
        let p = LaurentPoly::monomial(-1, 1)
            .add(&LaurentPoly::monomial(1, -2))
            .add(&LaurentPoly::monomial_doubled(3, BigInt::from(5)));
        assert_eq!(p.render("t"), "t^-1 - 2*t + 5*t^(3/2)");
    }

    #[test]
    fn prime_powers() {
        assert_eq!(prime_power_decomposition(&BigInt::from(6)), vec![2, 3]);
        assert_eq!(prime_power_decomposition(&BigInt::from(12)), vec![3, 4]);
        assert_eq!(prime_power_decomposition(&BigInt::from(8)), vec![8]);
    }

    #[test]
    fn rank_mod2_vs_rational() {
        let a = SparseIntMatrix::from_rows(&[vec![2, 0], vec![0, 1]]);
        assert_eq!(a.rank_mod2(), 1);
        assert_eq!(smith_normal_form(&a).rank(), 2);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_matrix() -> impl Strategy<Value = SparseIntMatrix> {
            (1usize..=5, 1usize..=5).prop_flat_map(|(r, c)| {
                proptest::collection::vec(-4i64..=4, r * c).prop_map(move |flat| {
                    let rows: Vec<Vec<i64>> = flat.chunks(c).map(|ch| ch.to_vec()).collect();
                    SparseIntMatrix::from_rows(&rows)
                })
            })
        }

        fn arb_poly() -> impl Strategy<Value = LaurentPoly> {
            proptest::collection::vec((-6i64..=6, -5i64..=5), 0..5).prop_map(|terms| {
                let mut p = LaurentPoly::zero();
                for (e, c) in terms {
                    p.add_term(e, BigInt::from(c));
                }
                p
            })
        }

        proptest! {
            #[test]
            fn snf_invariants(a in arb_matrix()) {
                snf_check(&a);
            }

            #[test]
            fn mod_two_rank_counts_odd_diagonal(a in arb_matrix()) {
                let r = smith_normal_form(&a);
                let odd = r.diag.iter().filter(|d| d.bit(0)).count();
                prop_assert_eq!(a.rank_mod2(), odd);
            }

            #[test]
            fn snf_rank_invariant_under_transpose(a in arb_matrix()) {
                let mut d1 = smith_normal_form(&a).diag;
                let mut d2 = smith_normal_form(&a.transpose()).diag;
                d1.sort();
                d2.sort();
                prop_assert_eq!(d1, d2);
            }

            #[test]
            fn laurent_ring_laws(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
                prop_assert_eq!(a.mul(&b), b.mul(&a));
                prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
                prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
            }

            #[test]
            fn laurent_division_inverts_multiplication(a in arb_poly(), b in arb_poly()) {
                prop_assume!(!b.is_zero());
                let q = a.mul(&b).div_exact(&b).unwrap();
                prop_assert_eq!(q, a);
            }
        }
    }
}

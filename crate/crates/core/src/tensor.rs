//! Kronecker and Khatri-Rao structured linear algebra.
//!
//! Flat indices into a Kronecker product follow the usual convention: the
//! first factor varies slowest, so the tuple `(i_1, ..., i_d)` maps to
//! `sum_k i_k * prod_{j > k} m_j`. Row `r` of a row-partitioned Khatri-Rao
//! product is the Kronecker product of row `r` of every factor, which is
//! consistent with that ordering.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{GriefError, Result};

/// Kronecker product `K_1 ⊗ ... ⊗ K_d` of square factors, kept unexpanded.
#[derive(Debug, Clone, PartialEq)]
pub struct KronMatrix {
    factors: Vec<DMatrix<f64>>,
}

impl KronMatrix {
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(GriefError::DimensionMismatch(
                "Kronecker product needs at least one factor".into(),
            ));
        }
        for (i, f) in factors.iter().enumerate() {
            if !f.is_square() {
                return Err(GriefError::DimensionMismatch(format!(
                    "Kronecker factor {i} is {}x{}, expected square",
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn ndims(&self) -> usize {
        self.factors.len()
    }

    /// Per-factor sizes `m̄_i`.
    pub fn factor_sizes(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Implied dimension `prod m̄_i`, or `None` when it does not fit in `usize`.
    pub fn dim(&self) -> Option<usize> {
        checked_product(self.factors.iter().map(|f| f.nrows()))
    }
}

/// Row-partitioned Khatri-Rao product: row `r` is `⊗_i F_i[r, :]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowKhatriRao {
    factors: Vec<DMatrix<f64>>,
}

impl RowKhatriRao {
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return Err(GriefError::DimensionMismatch(
                "Khatri-Rao product needs at least one factor".into(),
            ));
        };
        let n = first.nrows();
        if let Some((i, f)) = factors.iter().enumerate().find(|(_, f)| f.nrows() != n) {
            return Err(GriefError::DimensionMismatch(format!(
                "Khatri-Rao factor {i} has {} rows, expected {n}",
                f.nrows()
            )));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn nrows(&self) -> usize {
        self.factors[0].nrows()
    }

    pub fn ndims(&self) -> usize {
        self.factors.len()
    }
}

/// The `p` selected Kronecker entries: per-dimension index tuples plus the log
/// of the selected values in non-increasing order.
///
/// Row `j` of the index table is the tuple of the `j`-th selected entry; column
/// `i` is the list of rows of the `m̄_i` identity that forms the per-dimension
/// selection factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    ndims: usize,
    index_table: Vec<usize>,
    log_values: Vec<f64>,
}

impl Selection {
    /// Builds a selection from explicit tuples. Tuples must be distinct, of
    /// equal length, and `log_values` non-increasing.
    pub fn new(tuples: Vec<Vec<usize>>, log_values: Vec<f64>) -> Result<Self> {
        if tuples.len() != log_values.len() {
            return Err(GriefError::DimensionMismatch(format!(
                "{} index tuples but {} log values",
                tuples.len(),
                log_values.len()
            )));
        }
        let ndims = tuples.first().map_or(0, Vec::len);
        if ndims == 0 {
            return Err(GriefError::InvalidParameter(
                "selection needs at least one non-empty tuple".into(),
            ));
        }
        if tuples.iter().any(|t| t.len() != ndims) {
            return Err(GriefError::DimensionMismatch(
                "index tuples have differing lengths".into(),
            ));
        }
        if log_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(GriefError::InvalidParameter(
                "log values must be non-increasing".into(),
            ));
        }
        let mut sorted: Vec<&Vec<usize>> = tuples.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(GriefError::InvalidParameter("duplicate index tuple".into()));
        }
        Ok(Self {
            ndims,
            index_table: tuples.into_iter().flatten().collect(),
            log_values,
        })
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    pub fn ndims(&self) -> usize {
        self.ndims
    }

    /// Index tuple of the `j`-th selected entry.
    pub fn tuple(&self, j: usize) -> &[usize] {
        &self.index_table[j * self.ndims..(j + 1) * self.ndims]
    }

    pub fn tuples(&self) -> impl Iterator<Item = &[usize]> {
        self.index_table.chunks_exact(self.ndims)
    }

    /// Per-dimension column `i` of the index table.
    pub fn column(&self, dim: usize) -> Vec<usize> {
        self.tuples().map(|t| t[dim]).collect()
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// Checks every index against the per-dimension sizes.
    pub fn check_bounds(&self, sizes: &[usize]) -> Result<()> {
        if sizes.len() != self.ndims {
            return Err(GriefError::DimensionMismatch(format!(
                "selection has {} dimensions, operand has {}",
                self.ndims,
                sizes.len()
            )));
        }
        for t in self.tuples() {
            for (dim, (&index, &size)) in t.iter().zip(sizes).enumerate() {
                if index >= size {
                    return Err(GriefError::IndexOutOfRange { dim, index, size });
                }
            }
        }
        Ok(())
    }
}

/// Distinct columns referenced by one dimension of a selection, and where each
/// selected entry lands among them.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ColumnGather {
    pub columns: Vec<usize>,
    pub local: Vec<usize>,
}

impl ColumnGather {
    pub fn from_selection(sel: &Selection, dim: usize) -> Self {
        let col = sel.column(dim);
        let mut columns = col.clone();
        columns.sort_unstable();
        columns.dedup();
        let local = col
            .iter()
            .map(|c| columns.binary_search(c).expect("column present"))
            .collect();
        Self { columns, local }
    }
}

pub(crate) fn checked_product(sizes: impl IntoIterator<Item = usize>) -> Option<usize> {
    sizes.into_iter().try_fold(1usize, |acc, s| acc.checked_mul(s))
}

/// `(⊗_i K_i) v` without forming the Kronecker product.
pub fn kron_matvec(k: &KronMatrix, v: &DVector<f64>) -> Result<DVector<f64>> {
    let sizes = k.factor_sizes();
    let m = k.dim().ok_or_else(|| {
        GriefError::DimensionMismatch("Kronecker dimension overflows usize".into())
    })?;
    if v.len() != m {
        return Err(GriefError::DimensionMismatch(format!(
            "vector has length {}, Kronecker operator has dimension {m}",
            v.len()
        )));
    }

    let mut cur = v.as_slice().to_vec();
    let mut next = vec![0.0; m];
    for (axis, factor) in k.factors().iter().enumerate() {
        let size = sizes[axis];
        let right: usize = sizes[axis + 1..].iter().product();
        let left = m / (size * right);
        for l in 0..left {
            let base = l * size * right;
            for a in 0..size {
                for r in 0..right {
                    let mut acc = 0.0;
                    for b in 0..size {
                        acc += factor[(a, b)] * cur[base + b * right + r];
                    }
                    next[base + a * right + r] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(DVector::from_vec(cur))
}

fn check_operands(kr: &RowKhatriRao, q: &KronMatrix, sel: &Selection) -> Result<()> {
    if kr.ndims() != q.ndims() {
        return Err(GriefError::DimensionMismatch(format!(
            "Khatri-Rao operand has {} factors, Kronecker operand has {}",
            kr.ndims(),
            q.ndims()
        )));
    }
    for (i, (a, b)) in kr.factors().iter().zip(q.factors()).enumerate() {
        if a.ncols() != b.nrows() {
            return Err(GriefError::DimensionMismatch(format!(
                "factor {i}: Khatri-Rao block has {} columns, Kronecker block is {}x{}",
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
    }
    sel.check_bounds(&q.factor_sizes())
}

/// Per-dimension blocks `KR_i · Q_i[:, referenced columns]` and the gather maps.
fn reduced_blocks(
    kr: &RowKhatriRao,
    q: &KronMatrix,
    sel: &Selection,
) -> (Vec<DMatrix<f64>>, Vec<Vec<usize>>) {
    let mut blocks = Vec::with_capacity(kr.ndims());
    let mut locals = Vec::with_capacity(kr.ndims());
    for (dim, (a, b)) in kr.factors().iter().zip(q.factors()).enumerate() {
        let gather = ColumnGather::from_selection(sel, dim);
        blocks.push(a * b.select_columns(&gather.columns));
        locals.push(gather.local);
    }
    log::debug!(
        "distinct referenced columns per dimension: {:?}",
        blocks.iter().map(|b| b.ncols()).collect::<Vec<_>>()
    );
    (blocks, locals)
}

pub(crate) fn hadamard_direct(blocks: &[DMatrix<f64>], locals: &[Vec<usize>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let p = locals[0].len();
    DMatrix::from_fn(n, p, |r, j| {
        blocks
            .iter()
            .zip(locals)
            .fold(1.0, |acc, (b, loc)| acc * b[(r, loc[j])])
    })
}

/// Sign/log-magnitude evaluation of `⊙_i B_i` with an additive log rescale per
/// column. Entries whose sign product is zero are exactly zero.
pub(crate) fn hadamard_log(
    blocks: &[DMatrix<f64>],
    locals: &[Vec<usize>],
    log_scale: &[f64],
) -> Result<DMatrix<f64>> {
    let n = blocks[0].nrows();
    let p = locals[0].len();
    let mut out = DMatrix::zeros(n, p);
    for j in 0..p {
        for r in 0..n {
            let mut negative = false;
            let mut log_mag = 0.0;
            let mut zero = false;
            for (b, loc) in blocks.iter().zip(locals) {
                let v = b[(r, loc[j])];
                if v == 0.0 {
                    zero = true;
                    break;
                }
                negative ^= v < 0.0;
                log_mag += v.abs().ln();
            }
            if zero {
                continue;
            }
            let mag = (log_mag + log_scale[j]).exp();
            if !mag.is_finite() {
                return Err(GriefError::NumericalOverflow { row: r, col: j });
            }
            out[(r, j)] = if negative { -mag } else { mag };
        }
    }
    Ok(out)
}

/// `KR · Q · S_pᵀ` computed as the Hadamard product of `d` small products.
pub fn kr_q_select(kr: &RowKhatriRao, q: &KronMatrix, sel: &Selection) -> Result<DMatrix<f64>> {
    check_operands(kr, q, sel)?;
    let (blocks, locals) = reduced_blocks(kr, q, sel);
    Ok(hadamard_direct(&blocks, &locals))
}

/// Log-domain version of [`kr_q_select`]; column `j` of the result is
/// additionally scaled by `exp(log_scale[j])`.
pub fn kr_q_select_log(
    kr: &RowKhatriRao,
    q: &KronMatrix,
    sel: &Selection,
    log_scale: &[f64],
) -> Result<DMatrix<f64>> {
    check_operands(kr, q, sel)?;
    if log_scale.len() != sel.len() {
        return Err(GriefError::DimensionMismatch(format!(
            "log scale has length {}, selection has {} entries",
            log_scale.len(),
            sel.len()
        )));
    }
    let (blocks, locals) = reduced_blocks(kr, q, sel);
    hadamard_log(&blocks, &locals, log_scale)
}

/// Descending by value, then lexicographically ascending by tuple.
fn rank_order(va: f64, ta: (&[usize], usize), vb: f64, tb: (&[usize], usize)) -> Ordering {
    vb.total_cmp(&va)
        .then_with(|| ta.0.cmp(tb.0))
        .then_with(|| ta.1.cmp(&tb.1))
}

/// Finds the `p` largest entries of `⊗_i λ_i` by sequential truncated
/// expansion in the log domain.
///
/// After each accumulation step only the best `min(len, p)` partial products
/// survive. Because every factor is positive, a partial tuple outside the
/// current top `p` can never extend to a full tuple inside the final top `p`.
/// Ties are broken towards the lexicographically smaller index tuple.
pub fn top_p_kron_eigs<E: AsRef<[f64]>>(eigs: &[E], p: usize) -> Result<Selection> {
    if eigs.is_empty() {
        return Err(GriefError::InvalidParameter("no eigenvalue factors".into()));
    }
    if p == 0 {
        return Err(GriefError::InvalidParameter("p must be at least 1".into()));
    }
    let mut logs = Vec::with_capacity(eigs.len());
    for (dim, lam) in eigs.iter().enumerate() {
        let lam = lam.as_ref();
        if lam.is_empty() {
            return Err(GriefError::InvalidParameter(format!(
                "eigenvalue factor {dim} is empty"
            )));
        }
        if let Some(bad) = lam.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(GriefError::InvalidParameter(format!(
                "eigenvalue {bad} in factor {dim} is not strictly positive and finite"
            )));
        }
        logs.push(lam.iter().map(|l| l.ln()).collect::<Vec<f64>>());
    }
    if let Some(total) = checked_product(logs.iter().map(Vec::len)) {
        if p > total {
            return Err(GriefError::TooManyRequested {
                requested: p,
                available: total.to_string(),
            });
        }
    }

    // Prefix tuples stored flat with stride `width`.
    let mut width = 1;
    let first = &logs[0];
    let mut order: Vec<usize> = (0..first.len()).collect();
    order.sort_by(|&a, &b| first[b].total_cmp(&first[a]).then(a.cmp(&b)));
    order.truncate(p);
    let mut values: Vec<f64> = order.iter().map(|&a| first[a]).collect();
    let mut tuples: Vec<usize> = order;

    for factor in &logs[1..] {
        let mbar = factor.len();
        let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(values.len() * mbar);
        for (j, &v) in values.iter().enumerate() {
            for (a, &l) in factor.iter().enumerate() {
                cand.push((v + l, j, a));
            }
        }
        let prefix = |j: usize| &tuples[j * width..(j + 1) * width];
        let cmp = |x: &(f64, usize, usize), y: &(f64, usize, usize)| {
            rank_order(x.0, (prefix(x.1), x.2), y.0, (prefix(y.1), y.2))
        };
        let keep = cand.len().min(p);
        if cand.len() > keep {
            cand.select_nth_unstable_by(keep - 1, cmp);
            cand.truncate(keep);
        }
        cand.sort_unstable_by(cmp);

        let mut next = Vec::with_capacity(keep * (width + 1));
        for &(_, j, a) in &cand {
            next.extend_from_slice(prefix(j));
            next.push(a);
        }
        values = cand.iter().map(|c| c.0).collect();
        tuples = next;
        width += 1;
    }

    Ok(Selection {
        ndims: width,
        index_table: tuples,
        log_values: values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_kron(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
        factors[1..]
            .iter()
            .fold(factors[0].clone(), |acc, f| acc.kronecker(f))
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn kron_matvec_identity() {
        let k = KronMatrix::new(vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)]).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(kron_matvec(&k, &v).unwrap(), v);
    }

    #[test]
    fn kron_matvec_scalars() {
        let k = KronMatrix::new(vec![
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 3.0),
        ])
        .unwrap();
        let out = kron_matvec(&k, &DVector::from_vec(vec![5.0])).unwrap();
        assert_eq!(out[0], 30.0);
    }

    #[test]
    fn kron_matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = vec![random_matrix(&mut rng, 3, 3), random_matrix(&mut rng, 2, 2)];
        let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let dense = dense_kron(&f) * &v;
        let got = kron_matvec(&KronMatrix::new(f).unwrap(), &v).unwrap();
        assert!((got - dense).amax() < 1e-12);
    }

    #[test]
    fn kron_matvec_rejects_bad_length() {
        let k = KronMatrix::new(vec![DMatrix::identity(2, 2)]).unwrap();
        assert!(matches!(
            kron_matvec(&k, &DVector::zeros(3)),
            Err(GriefError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn non_square_factor_rejected() {
        assert!(KronMatrix::new(vec![DMatrix::zeros(2, 3)]).is_err());
    }

    #[test]
    fn single_factor_select_is_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 5, 4);
        let q = random_matrix(&mut rng, 4, 4);
        let sel = Selection::new(vec![vec![2], vec![0], vec![3]], vec![0.0, -1.0, -2.0]).unwrap();
        let got = kr_q_select(
            &RowKhatriRao::new(vec![a.clone()]).unwrap(),
            &KronMatrix::new(vec![q.clone()]).unwrap(),
            &sel,
        )
        .unwrap();
        let aq = &a * &q;
        for (j, c) in [2usize, 0, 3].into_iter().enumerate() {
            for r in 0..5 {
                assert_eq!(got[(r, j)], aq[(r, c)]);
            }
        }
    }

    #[test]
    fn hadamard_of_ones() {
        // KR_i = ones(n x 1), Q_i = [[1]] so every B_i is all ones.
        let kr = RowKhatriRao::new(vec![DMatrix::from_element(3, 1, 1.0); 3]).unwrap();
        let q = KronMatrix::new(vec![DMatrix::from_element(1, 1, 1.0); 3]).unwrap();
        let sel = Selection::new(vec![vec![0, 0, 0]], vec![0.0]).unwrap();
        assert_eq!(kr_q_select(&kr, &q, &sel).unwrap(), DMatrix::from_element(3, 1, 1.0));
    }

    #[test]
    fn select_matches_dense_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, n, mbar, p) = (3, 7, 4, 5);
        let krf: Vec<_> = (0..d).map(|_| random_matrix(&mut rng, n, mbar)).collect();
        let qf: Vec<_> = (0..d).map(|_| random_matrix(&mut rng, mbar, mbar)).collect();
        let mut tuples = Vec::new();
        while tuples.len() < p {
            let t: Vec<usize> = (0..d).map(|_| rng.random_range(0..mbar)).collect();
            if !tuples.contains(&t) {
                tuples.push(t);
            }
        }
        let sel = Selection::new(tuples.clone(), vec![0.0; p]).unwrap();

        // Dense K_XU: row r is the Kronecker product of the factor rows.
        let kxu = DMatrix::from_fn(n, mbar.pow(d as u32), |r, c| {
            let (mut rem, mut v) = (c, 1.0);
            for i in (0..d).rev() {
                v *= krf[i][(r, rem % mbar)];
                rem /= mbar;
            }
            v
        });
        let st = DMatrix::from_fn(mbar.pow(d as u32), p, |c, j| {
            let flat = tuples[j].iter().fold(0, |acc, &t| acc * mbar + t);
            if c == flat { 1.0 } else { 0.0 }
        });
        let dense = kxu * dense_kron(&qf) * st;
        let got = kr_q_select(
            &RowKhatriRao::new(krf).unwrap(),
            &KronMatrix::new(qf).unwrap(),
            &sel,
        )
        .unwrap();
        assert!((got - dense).amax() < 1e-10);
    }

    #[test]
    fn select_rejects_out_of_range() {
        let kr = RowKhatriRao::new(vec![DMatrix::zeros(2, 2)]).unwrap();
        let q = KronMatrix::new(vec![DMatrix::zeros(2, 2)]).unwrap();
        let sel = Selection::new(vec![vec![2]], vec![0.0]).unwrap();
        assert_eq!(
            kr_q_select(&kr, &q, &sel),
            Err(GriefError::IndexOutOfRange { dim: 0, index: 2, size: 2 })
        );
    }

    #[test]
    fn log_path_single_factor_equals_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kr = RowKhatriRao::new(vec![random_matrix(&mut rng, 6, 3)]).unwrap();
        let q = KronMatrix::new(vec![random_matrix(&mut rng, 3, 3)]).unwrap();
        let sel = Selection::new(vec![vec![1], vec![2]], vec![0.0, 0.0]).unwrap();
        let a = kr_q_select(&kr, &q, &sel).unwrap();
        let b = kr_q_select_log(&kr, &q, &sel, &[0.0, 0.0]).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn log_path_zero_short_circuit() {
        let kr = RowKhatriRao::new(vec![
            DMatrix::from_row_slice(2, 1, &[0.0, 2.0]),
            DMatrix::from_row_slice(2, 1, &[1e300, -3.0]),
        ])
        .unwrap();
        let q = KronMatrix::new(vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1)]).unwrap();
        let sel = Selection::new(vec![vec![0, 0]], vec![0.0]).unwrap();
        let out = kr_q_select_log(&kr, &q, &sel, &[0.0]).unwrap();
        assert_eq!(out[(0, 0)], 0.0);
        assert!((out[(1, 0)] + 6.0).abs() < 1e-14);
    }

    #[test]
    fn log_path_reports_overflow() {
        let kr = RowKhatriRao::new(vec![DMatrix::from_element(1, 1, 1e300); 2]).unwrap();
        let q = KronMatrix::new(vec![DMatrix::identity(1, 1); 2]).unwrap();
        let sel = Selection::new(vec![vec![0, 0]], vec![0.0]).unwrap();
        assert_eq!(
            kr_q_select_log(&kr, &q, &sel, &[0.0]),
            Err(GriefError::NumericalOverflow { row: 0, col: 0 })
        );
    }

    #[test]
    fn top_p_two_factor_example() {
        let sel = top_p_kron_eigs(&[vec![2.0, 1.0], vec![3.0, 1.0]], 2).unwrap();
        assert_eq!(sel.log_values(), &[6f64.ln(), 3f64.ln()]);
        assert_eq!(sel.tuple(0), &[0, 0]);
        assert_eq!(sel.tuple(1), &[1, 0]);
    }

    #[test]
    fn top_p_single_factor_sort() {
        let sel = top_p_kron_eigs(&[vec![5.0, 4.0, 3.0]], 3).unwrap();
        assert_eq!(sel.log_values(), &[5f64.ln(), 4f64.ln(), 3f64.ln()]);
        assert_eq!(sel.tuples().collect::<Vec<_>>(), vec![&[0][..], &[1], &[2]]);
    }

    #[test]
    fn top_p_tie_break_is_lexicographic() {
        let sel = top_p_kron_eigs(&[vec![1.0, 2.0], vec![2.0, 1.0]], 4).unwrap();
        // Values: (0,0)=2 (0,1)=1 (1,0)=4 (1,1)=2
        let tuples: Vec<_> = sel.tuples().map(<[usize]>::to_vec).collect();
        assert_eq!(tuples, vec![vec![1, 0], vec![0, 0], vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn top_p_errors() {
        assert!(matches!(
            top_p_kron_eigs(&[vec![1.0, 2.0]], 3),
            Err(GriefError::TooManyRequested { .. })
        ));
        assert!(top_p_kron_eigs(&[vec![1.0, 0.0]], 1).is_err());
        assert!(top_p_kron_eigs(&[vec![1.0]], 0).is_err());
    }

    #[test]
    fn selection_rejects_duplicates_and_unsorted() {
        assert!(Selection::new(vec![vec![0], vec![0]], vec![1.0, 0.0]).is_err());
        assert!(Selection::new(vec![vec![0], vec![1]], vec![0.0, 1.0]).is_err());
    }
}

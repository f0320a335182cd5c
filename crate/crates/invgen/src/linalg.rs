//! Exact rational linear algebra: reduced row echelon form, rank, right
//! nullspace, and an incremental sparse reducer for span-membership tests.
//! No floating point anywhere.

use num_rational::BigRational;
use num_traits::{One, Zero};

/// Reduced row echelon form in place. Returns pivot column indices in order.
pub fn rref(rows: &mut Vec<Vec<BigRational>>, ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r >= rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for x in rows[r].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                for j in c..ncols {
                    if !rows[r][j].is_zero() {
                        let delta = &f * &rows[r][j];
                        rows[i][j] -= delta;
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    pivots
}

pub fn rank(rows: &[Vec<BigRational>], ncols: usize) -> usize {
    let mut m = rows.to_vec();
    rref(&mut m, ncols).len()
}

/// Basis of { v : A v = 0 }. Deterministic: one vector per free column in
/// ascending column order, with a unit at the free column.
pub fn nullspace(rows: &[Vec<BigRational>], ncols: usize) -> Vec<Vec<BigRational>> {
    let mut m = rows.to_vec();
    let pivots = rref(&mut m, ncols);
    let pivot_set: Vec<bool> = {
        let mut v = vec![false; ncols];
        for &c in &pivots {
            v[c] = true;
        }
        v
    };
    let mut basis = Vec::new();
    for f in 0..ncols {
        if pivot_set[f] {
            continue;
        }
        let mut v = vec![BigRational::zero(); ncols];
        v[f] = BigRational::one();
        for (row, &c) in m.iter().zip(pivots.iter()) {
            if !row[f].is_zero() {
                v[c] = -row[f].clone();
            }
        }
        basis.push(v);
    }
    basis
}

/// Sparse row: (column, coefficient) sorted ascending by column, no zeros.
pub type SparseRow = Vec<(u32, BigRational)>;

fn sub_scaled(a: &SparseRow, k: &BigRational, b: &SparseRow) -> SparseRow {
    // a - k*b, merge of two sorted lists
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some((ca, va)), Some((cb, vb))) => {
                if ca < cb {
                    out.push((*ca, va.clone()));
                    i += 1;
                } else if cb < ca {
                    let x = -(k * vb);
                    if !x.is_zero() {
                        out.push((*cb, x));
                    }
                    j += 1;
                } else {
                    let x = va - k * vb;
                    if !x.is_zero() {
                        out.push((*ca, x));
                    }
                    i += 1;
                    j += 1;
                }
            }
            (Some((ca, va)), None) => {
                out.push((*ca, va.clone()));
                i += 1;
            }
            (None, Some((cb, vb))) => {
                let x = -(k * vb);
                if !x.is_zero() {
                    out.push((*cb, x));
                }
                j += 1;
            }
            (None, None) => break,
        }
    }
    out
}

/// Incremental row-echelon basis keyed by leading (smallest-index) column.
#[derive(Default, Debug)]
pub struct SpanReducer {
    pivots: std::collections::BTreeMap<u32, SparseRow>,
}

impl SpanReducer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Reduces `row` against the current basis; the residual's leading column
    /// carries no pivot.
    pub fn reduce(&self, mut row: SparseRow) -> SparseRow {
        loop {
            let Some((lead, coeff)) = row.first().cloned() else {
                return row;
            };
            let Some(p) = self.pivots.get(&lead) else {
                return row;
            };
            row = sub_scaled(&row, &coeff, p);
        }
    }

    /// Inserts a row; returns true iff it enlarged the span.
    pub fn insert(&mut self, row: SparseRow) -> bool {
        let red = self.reduce(row);
        let Some((lead, coeff)) = red.first().cloned() else {
            return false;
        };
        let inv = coeff.recip();
        let norm: SparseRow = red.into_iter().map(|(c, v)| (c, v * &inv)).collect();
        self.pivots.insert(lead, norm);
        true
    }

    pub fn contains(&self, row: SparseRow) -> bool {
        self.reduce(row).is_empty()
    }
}

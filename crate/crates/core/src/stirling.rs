//! Generalized Stirling numbers and Pochhammer symbols.
//!
//! The generalized Stirling number `S^n_{m,α}` counts, with weights, the ways
//! `n` customers can be seated at `m` tables of a Pitman-Yor restaurant with
//! discount `α`. It satisfies
//!
//! ```text
//! S^{n+1}_{m,α} = S^n_{m-1,α} + (n - mα) S^n_{m,α},   S^0_{0,α} = 1,   S^n_{0,α} = 0 (n ≥ 1)
//! ```
//!
//! Values grow super-exponentially in `n`, so the cache stores natural logs.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StirlingError {
    #[error("table count {m} exceeds customer count {n}")]
    Domain { n: usize, m: usize },
    #[error("discount {0} outside [0, 1)")]
    Discount(f64),
    #[error("Pochhammer factor {factor} at index {index} is not positive")]
    NonPositiveFactor { index: usize, factor: f64 },
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-extendable table of `log S^n_{m,α}` for one fixed discount.
///
/// Row `n` holds entries `0..=min(n, width)`. Rows grow by doubling in `n`;
/// the column bound `width` grows by doubling when a larger table count is
/// requested, which recomputes the stored rows.
#[derive(Debug, Clone)]
pub struct StirlingCache {
    discount: f64,
    width: usize,
    rows: Vec<Vec<f64>>,
}

impl StirlingCache {
    pub fn new(discount: f64) -> Result<Self, StirlingError> {
        if !(0.0..1.0).contains(&discount) {
            return Err(StirlingError::Discount(discount));
        }
        Ok(Self {
            discount,
            width: 16,
            rows: vec![vec![0.0]],
        })
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Number of rows (customer counts) currently tabulated.
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    fn next_row(&self, prev: &[f64], n: usize) -> Vec<f64> {
        // Builds row n + 1 from row n.
        let len = (n + 1).min(self.width) + 1;
        let mut row = vec![f64::NEG_INFINITY; len];
        for (m, slot) in row.iter_mut().enumerate().skip(1) {
            let left = prev[m - 1];
            let stay = match prev.get(m) {
                Some(&v) if v > f64::NEG_INFINITY => (n as f64 - m as f64 * self.discount).ln() + v,
                _ => f64::NEG_INFINITY,
            };
            *slot = log_add_exp(left, stay);
        }
        row
    }

    fn rebuild(&mut self, row_count: usize) {
        let mut rows = Vec::with_capacity(row_count);
        rows.push(vec![0.0]);
        for n in 0..row_count - 1 {
            let next = self.next_row(&rows[n], n);
            rows.push(next);
        }
        self.rows = rows;
    }

    /// Make sure `log S^n_m` is tabulated.
    pub fn ensure(&mut self, n: usize, m: usize) {
        if m > self.width {
            let mut width = self.width.max(1);
            while width < m {
                width *= 2;
            }
            self.width = width;
            let count = self.rows.len().max(n + 1);
            self.rebuild(count);
            return;
        }
        if n >= self.rows.len() {
            let target = (n + 1).max(2 * self.rows.len());
            self.rows.reserve(target - self.rows.len());
            while self.rows.len() < target {
                let k = self.rows.len() - 1;
                let next = self.next_row(&self.rows[k], k);
                self.rows.push(next);
            }
        }
    }

    /// `log S^n_{m,α}`, growing the table as needed.
    pub fn log_stirling(&mut self, n: usize, m: usize) -> Result<f64, StirlingError> {
        if m > n {
            return Err(StirlingError::Domain { n, m });
        }
        Ok(self.log_unchecked(n, m))
    }

    #[inline]
    pub(crate) fn log_unchecked(&mut self, n: usize, m: usize) -> f64 {
        if m == n {
            return 0.0;
        }
        if m == 0 {
            return f64::NEG_INFINITY;
        }
        if n >= self.rows.len() || m > self.width {
            self.ensure(n, m);
        }
        self.rows[n][m]
    }

    /// `log(S^{n+dn}_{m+dm} / S^n_m)`.
    pub fn log_ratio(
        &mut self,
        n: usize,
        m: usize,
        dn: usize,
        dm: usize,
    ) -> Result<f64, StirlingError> {
        if m > n {
            return Err(StirlingError::Domain { n, m });
        }
        if m + dm > n + dn {
            return Err(StirlingError::Domain {
                n: n + dn,
                m: m + dm,
            });
        }
        Ok(self.log_unchecked(n + dn, m + dm) - self.log_unchecked(n, m))
    }

    /// `S^{n+1}_m / S^n_m`: weight of seating a customer at an existing table.
    #[inline]
    pub(crate) fn join_ratio(&mut self, n: usize, m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        (self.log_unchecked(n + 1, m) - self.log_unchecked(n, m)).exp()
    }

    /// `S^{n+1}_{m+1} / S^n_m`: weight of opening a new table.
    #[inline]
    pub(crate) fn open_ratio(&mut self, n: usize, m: usize) -> f64 {
        (self.log_unchecked(n + 1, m + 1) - self.log_unchecked(n, m)).exp()
    }
}

/// Convenience wrapper over a throwaway cache.
pub fn log_stirling(n: usize, m: usize, discount: f64) -> Result<f64, StirlingError> {
    StirlingCache::new(discount)?.log_stirling(n, m)
}

pub fn log_stirling_ratio(
    n: usize,
    m: usize,
    dn: usize,
    dm: usize,
    discount: f64,
) -> Result<f64, StirlingError> {
    StirlingCache::new(discount)?.log_ratio(n, m, dn, dm)
}

/// `log ∏_{i<count} (base + i·step)`.
pub fn log_pochhammer(base: f64, step: f64, count: usize) -> Result<f64, StirlingError> {
    let mut acc = 0.0;
    for i in 0..count {
        let factor = base + i as f64 * step;
        if factor <= 0.0 || factor.is_nan() {
            return Err(StirlingError::NonPositiveFactor { index: i, factor });
        }
        acc += factor.ln();
    }
    Ok(acc)
}

/// `(base|step)_{count+1} / (base|step)_count`.
#[inline]
pub fn pochhammer_ratio(base: f64, step: f64, count: usize) -> f64 {
    base + count as f64 * step
}

//! Resource-grid addressing and DFT pilot books.
//!
//! REs are numbered column-major over the `S x T` grid: the subcarrier index
//! varies fastest, so `e = s + S * t`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, Result, C64};

/// OFDM resource grid of `S` subcarriers by `T` symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResourceGrid {
    subcarriers: usize,
    symbols: usize,
}

impl ResourceGrid {
    pub fn new(subcarriers: usize, symbols: usize) -> Result<Self> {
        if subcarriers == 0 || symbols == 0 {
            return Err(Error::config(alloc::format!(
                "grid needs at least one subcarrier and one symbol, got {subcarriers}x{symbols}"
            )));
        }
        Ok(Self { subcarriers, symbols })
    }

    #[inline]
    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    #[inline]
    pub fn symbols(&self) -> usize {
        self.symbols
    }

    /// Number of resource elements `E = S * T`.
    #[inline]
    pub fn res(&self) -> usize {
        self.subcarriers * self.symbols
    }

    pub fn re_index(&self, subcarrier: usize, symbol: usize) -> Result<usize> {
        if subcarrier >= self.subcarriers {
            return Err(Error::Range {
                what: "subcarrier",
                index: subcarrier,
                limit: self.subcarriers,
            });
        }
        if symbol >= self.symbols {
            return Err(Error::Range {
                what: "symbol",
                index: symbol,
                limit: self.symbols,
            });
        }
        Ok(subcarrier + self.subcarriers * symbol)
    }

    /// Inverse of [`ResourceGrid::re_index`]: `(s, t) = (e mod S, e div S)`.
    pub fn grid_index(&self, re: usize) -> Result<(usize, usize)> {
        if re >= self.res() {
            return Err(Error::Range {
                what: "resource element",
                index: re,
                limit: self.res(),
            });
        }
        Ok((re % self.subcarriers, re / self.subcarriers))
    }
}

/// Pilot sequences, one row of `E` unit-modulus symbols per user.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    users: usize,
    res: usize,
    symbols: Vec<C64>,
}

impl PilotBook {
    pub fn from_rows(users: usize, res: usize, symbols: Vec<C64>) -> Result<Self> {
        if symbols.len() != users * res {
            return Err(Error::shape(alloc::format!(
                "pilot book needs {users}x{res} symbols, got {}",
                symbols.len()
            )));
        }
        Ok(Self { users, res, symbols })
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn res(&self) -> usize {
        self.res
    }

    #[inline]
    pub fn row(&self, user: usize) -> &[C64] {
        &self.symbols[user * self.res..(user + 1) * self.res]
    }

    #[inline]
    pub fn get(&self, user: usize, re: usize) -> C64 {
        self.symbols[user * self.res + re]
    }

    /// Row-major `K x E` view.
    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.symbols
    }

    /// Inner product `phi_a^H phi_b`.
    pub fn inner(&self, a: usize, b: usize) -> C64 {
        self.row(a)
            .iter()
            .zip(self.row(b))
            .map(|(x, y)| x.conj() * y)
            .sum()
    }

    pub fn verify_orthogonality(&self, tol: f64) -> OrthogonalityReport {
        let e = self.res as f64;
        let mut max_diagonal_deviation = 0.0f64;
        let mut max_cross_correlation = 0.0f64;
        for a in 0..self.users {
            for b in 0..self.users {
                let ip = self.inner(a, b);
                if a == b {
                    max_diagonal_deviation = max_diagonal_deviation.max((ip - e).norm());
                } else {
                    max_cross_correlation = max_cross_correlation.max(ip.norm());
                }
            }
        }
        OrthogonalityReport {
            max_diagonal_deviation,
            max_cross_correlation,
            pass: max_diagonal_deviation <= tol * e && max_cross_correlation <= tol * e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalityReport {
    /// `max_k |phi_k^H phi_k - E|`
    pub max_diagonal_deviation: f64,
    /// `max_{k != k'} |phi_k^H phi_k'|`
    pub max_cross_correlation: f64,
    pub pass: bool,
}

/// DFT pilots `phi_k[e] = exp(-j 2 pi k e / K)` with 0-based `k`, `e`.
///
/// Rows are mutually orthogonal when `K` divides `E`; otherwise the book is
/// still built and a warning is logged.
pub fn make_dft_pilots(users: usize, grid: &ResourceGrid) -> Result<PilotBook> {
    dft_rows(users, grid.res())
}

pub(crate) fn dft_rows(users: usize, len: usize) -> Result<PilotBook> {
    if users == 0 {
        return Err(Error::config("pilot book needs at least one user"));
    }
    if users > len {
        return Err(Error::config(alloc::format!(
            "{users} users cannot be given orthogonal pilots on {len} REs"
        )));
    }
    if len % users != 0 {
        log::warn!("{users} users do not divide {len} REs; DFT pilots are not orthogonal");
    }
    let mut symbols = Vec::with_capacity(users * len);
    for k in 0..users {
        for e in 0..len {
            // reduce the exponent modulo K before scaling to keep the phase exact
            let phase = -2.0 * PI * ((k * e) % users) as f64 / users as f64;
            symbols.push(C64::from_polar(1.0, phase));
        }
    }
    Ok(PilotBook {
        users,
        res: len,
        symbols,
    })
}

//! QAM constellations and the OTFS delay-Doppler <-> time transforms.
//!
//! A frame is an `M x N` grid (`M` delay bins, `N` Doppler bins) stored as
//! `vec(X)`, i.e. column-major with index `m + M k`. Modulation computes
//! `S = A_cp X F_Nᴴ` and serializes it block by block: block `b` is column
//! `b` of `X F_Nᴴ` with its last `N_cp` samples copied in front. The
//! demodulator drops the first `N_cp` samples of each block and applies
//! `F_N` across blocks, so `demodulate(modulate(x)) == x`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{LinearOperator, UnitaryDft, C64, ZERO};

/// Unit-energy square QAM with points `(2a-1)d + j(2b-1)d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: usize,
    side: usize,
    half_distance: f64,
    levels: Vec<f64>,
    points: Vec<C64>,
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self> {
        let side = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            _ => {
                return Err(Error::config(format!(
                    "unsupported QAM order {order}; expected 4, 16 or 64"
                )))
            }
        };
        let half_distance = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let levels: Vec<f64> = (0..side)
            .map(|i| (2.0 * i as f64 - (side as f64 - 1.0)) * half_distance)
            .collect();
        let mut points = Vec::with_capacity(order);
        for &re in &levels {
            for &im in &levels {
                points.push(C64::new(re, im));
            }
        }
        Ok(Self {
            order,
            side,
            half_distance,
            levels,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Points per axis, `sqrt(order)`.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Half the spacing between adjacent points, `d`.
    pub fn half_distance(&self) -> f64 {
        self.half_distance
    }

    /// Per-axis amplitude levels in increasing order.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    /// Per-axis decision boundaries `2ad`, `a = -side/2+1 ..= side/2-1`.
    pub fn boundaries(&self) -> impl Iterator<Item = f64> + '_ {
        let half = (self.side / 2) as i64;
        (-half + 1..half).map(move |a| 2.0 * a as f64 * self.half_distance)
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order as f64
    }

    /// Index of `v` in [`points`](Self::points) when `v` is (numerically) a point.
    pub fn index_of(&self, v: C64) -> Option<usize> {
        let tol = 1e-9 * self.half_distance;
        let axis = |x: f64| self.levels.iter().position(|l| (l - x).abs() < tol);
        Some(axis(v.re)? * self.side + axis(v.im)?)
    }
}

/// Delay-Doppler frame, stored as `vec(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerFrame {
    m: usize,
    n: usize,
    data: Vec<C64>,
}

impl DelayDopplerFrame {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            data: vec![ZERO; m * n],
        }
    }

    pub fn from_vec(m: usize, n: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::dim("delay-Doppler frame", m * n, data.len()));
        }
        Ok(Self { m, n, data })
    }

    pub fn delay_bins(&self) -> usize {
        self.m
    }

    pub fn doppler_bins(&self) -> usize {
        self.n
    }

    /// Entry `X[delay, doppler]`.
    pub fn get(&self, delay: usize, doppler: usize) -> C64 {
        self.data[delay + self.m * doppler]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }
}

/// Draws every entry uniformly from the constellation.
pub fn random_frame<R: Rng + ?Sized>(
    constellation: &QamConstellation,
    m: usize,
    n: usize,
    rng: &mut R,
) -> DelayDopplerFrame {
    let points = constellation.points();
    let data = (0..m * n)
        .map(|_| points[rng.gen_range(0..points.len())])
        .collect();
    DelayDopplerFrame { m, n, data }
}

/// `sqrt(p1) x1 + sqrt(p2) x2`.
pub fn superimpose(x1: &[C64], x2: &[C64], p1: f64, p2: f64) -> Result<Vec<C64>> {
    if x1.len() != x2.len() {
        return Err(Error::dim("superimposed frames", x1.len(), x2.len()));
    }
    if p1 < 0.0 || p2 < 0.0 || (p1 + p2 - 1.0).abs() > 1e-12 {
        return Err(Error::config(format!(
            "power coefficients must be nonnegative and sum to 1, got {p1} + {p2}"
        )));
    }
    let (a1, a2) = (p1.sqrt(), p2.sqrt());
    Ok(x1.iter().zip(x2).map(|(u, v)| a1 * u + a2 * v).collect())
}

/// Cyclic prefix length per OTFS block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpConfig {
    pub len: usize,
}

impl CpConfig {
    pub fn new(len: usize) -> Self {
        Self { len }
    }
}

/// Grid geometry shared by the modulator, demodulator and channel operators.
#[derive(Debug, Clone)]
pub struct OtfsGrid {
    m: usize,
    n: usize,
    cp: CpConfig,
    dft: UnitaryDft,
}

impl OtfsGrid {
    pub fn new(m: usize, n: usize, cp: CpConfig) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::config(format!(
                "grid dimensions must be positive, got {m}x{n}"
            )));
        }
        if cp.len >= m {
            return Err(Error::config(format!(
                "cyclic prefix length {} must be smaller than M = {m}",
                cp.len
            )));
        }
        Ok(Self {
            m,
            n,
            cp,
            dft: UnitaryDft::new(n)?,
        })
    }

    pub fn delay_bins(&self) -> usize {
        self.m
    }

    pub fn doppler_bins(&self) -> usize {
        self.n
    }

    pub fn cp(&self) -> CpConfig {
        self.cp
    }

    /// `MN`, the number of delay-Doppler symbols.
    pub fn symbols(&self) -> usize {
        self.m * self.n
    }

    /// `M + N_cp`.
    pub fn block_len(&self) -> usize {
        self.m + self.cp.len
    }

    /// `N (M + N_cp)`, the number of time-domain samples per frame.
    pub fn frame_len(&self) -> usize {
        self.n * self.block_len()
    }

    pub fn dft(&self) -> &UnitaryDft {
        &self.dft
    }

    pub fn modulator(&self) -> OtfsModulator {
        OtfsModulator(self.clone())
    }

    pub fn demodulator(&self) -> OtfsDemodulator {
        OtfsDemodulator(self.clone())
    }

    /// Applies the `N`-point DFT (or inverse) along the Doppler index of a
    /// column-major `M x N` grid, in place.
    pub fn doppler_transform(&self, grid: &mut [C64], inverse: bool) {
        let (m, n) = (self.m, self.n);
        debug_assert_eq!(grid.len(), m * n);
        let mut rows = vec![ZERO; m * n];
        for k in 0..n {
            for d in 0..m {
                rows[d * n + k] = grid[d + m * k];
            }
        }
        if inverse {
            self.dft.inverse_inplace(&mut rows);
        } else {
            self.dft.forward_inplace(&mut rows);
        }
        for k in 0..n {
            for d in 0..m {
                grid[d + m * k] = rows[d * n + k];
            }
        }
    }
}

/// `F_Nᴴ ⊗ A_cp`: delay-Doppler symbols to time-domain samples.
#[derive(Debug, Clone)]
pub struct OtfsModulator(OtfsGrid);

impl LinearOperator for OtfsModulator {
    fn nrows(&self) -> usize {
        self.0.frame_len()
    }

    fn ncols(&self) -> usize {
        self.0.symbols()
    }

    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        let g = &self.0;
        let (m, ncp, bl) = (g.m, g.cp.len, g.block_len());
        let mut z = x.to_vec();
        g.doppler_transform(&mut z, true);
        for (block, col) in out.chunks_exact_mut(bl).zip(z.chunks_exact(m)) {
            block[..ncp].copy_from_slice(&col[m - ncp..]);
            block[ncp..].copy_from_slice(col);
        }
    }

    fn apply_adjoint_into(&self, r: &[C64], out: &mut [C64]) {
        let g = &self.0;
        let (m, ncp, bl) = (g.m, g.cp.len, g.block_len());
        for (col, block) in out.chunks_exact_mut(m).zip(r.chunks_exact(bl)) {
            col.copy_from_slice(&block[ncp..]);
            for (dst, src) in col[m - ncp..].iter_mut().zip(&block[..ncp]) {
                *dst += src;
            }
        }
        g.doppler_transform(out, false);
    }
}

/// `F_N ⊗ R_cp`: time-domain samples back to the delay-Doppler grid.
#[derive(Debug, Clone)]
pub struct OtfsDemodulator(OtfsGrid);

impl LinearOperator for OtfsDemodulator {
    fn nrows(&self) -> usize {
        self.0.symbols()
    }

    fn ncols(&self) -> usize {
        self.0.frame_len()
    }

    fn apply_into(&self, r: &[C64], out: &mut [C64]) {
        let g = &self.0;
        let (m, ncp, bl) = (g.m, g.cp.len, g.block_len());
        for (col, block) in out.chunks_exact_mut(m).zip(r.chunks_exact(bl)) {
            col.copy_from_slice(&block[ncp..]);
        }
        g.doppler_transform(out, false);
    }

    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        let g = &self.0;
        let (m, ncp, bl) = (g.m, g.cp.len, g.block_len());
        let mut z = y.to_vec();
        g.doppler_transform(&mut z, true);
        for (block, col) in out.chunks_exact_mut(bl).zip(z.chunks_exact(m)) {
            block[..ncp].fill(ZERO);
            block[ncp..].copy_from_slice(col);
        }
    }
}

/// Time-domain samples `s = (F_Nᴴ ⊗ A_cp) vec(X)` of one frame.
pub fn modulate(frame: &DelayDopplerFrame, cp: CpConfig) -> Result<Vec<C64>> {
    let grid = OtfsGrid::new(frame.m, frame.n, cp)?;
    grid.modulator().apply(frame.as_slice())
}

/// `y = (F_N ⊗ R_cp) r` for a received frame of `N (M + N_cp)` samples.
pub fn demodulate(r: &[C64], m: usize, n: usize, cp: CpConfig) -> Result<Vec<C64>> {
    let grid = OtfsGrid::new(m, n, cp)?;
    grid.demodulator().apply(r)
}

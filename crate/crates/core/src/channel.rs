//! Linear time-varying multipath channels.
//!
//! A realization is a list of paths `(h_p, l_p, ν_p)` on the sample grid. The
//! received sample is
//!
//! ```text
//! r[n] = Σ_p h_p exp(j2π ν_p (n - l_p) T_s) s[n - l_p]
//! ```
//!
//! with `s[m] = 0` before the frame start. Paths sharing a delay are merged
//! into one time-varying tap `h[n, l]` when the realization is built, so an
//! application costs `O(L · frame_len)` for `L` distinct delays.

use std::path::Path as FsPath;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::modem::{OtfsDemodulator, OtfsGrid, OtfsModulator};
use crate::numerics::{complex_gaussian, ComplexMatrix, Composed, LinearOperator, C64, ZERO};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One row of a power-delay profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub normalized_delay: f64,
    pub power_db: f64,
}

/// 3GPP TS 38.901 Table 7.7.2-3, TDL-C: (normalized delay, power in dB),
/// all taps Rayleigh. Listed in the table's own order.
#[allow(clippy::approx_constant)] // 0.6366 is a tabulated delay, not 2/pi
const TDL_C: [(f64, f64); 24] = [
    (0.0, -4.4),
    (0.2099, -1.2),
    (0.2219, -3.5),
    (0.2329, -5.2),
    (0.2176, -2.5),
    (0.6366, 0.0),
    (0.6448, -2.2),
    (0.6560, -3.9),
    (0.6584, -7.4),
    (0.7935, -7.1),
    (0.8213, -10.7),
    (0.9336, -11.1),
    (1.2285, -5.1),
    (1.3083, -6.8),
    (2.1704, -8.7),
    (2.7105, -13.2),
    (4.2589, -13.9),
    (4.6003, -13.9),
    (5.4902, -15.8),
    (5.6077, -17.1),
    (6.3065, -16.0),
    (6.6374, -15.7),
    (7.0427, -21.6),
    (8.6523, -22.8),
];

/// Tapped-delay-line power-delay profile scaled to a delay spread and
/// sampled at `sample_period_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapProfile {
    taps: Vec<Tap>,
    delay_spread_s: f64,
    sample_period_s: f64,
}

impl TapProfile {
    /// Taps are stably sorted by delay.
    pub fn new(mut taps: Vec<Tap>, delay_spread_s: f64, sample_period_s: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::config("tap profile has no taps"));
        }
        if let Some(t) = taps.iter().find(|t| {
            !(t.normalized_delay >= 0.0) || !t.normalized_delay.is_finite() || !t.power_db.is_finite()
        }) {
            return Err(Error::config(format!(
                "invalid tap (delay {}, power {} dB)",
                t.normalized_delay, t.power_db
            )));
        }
        if !(delay_spread_s >= 0.0) || !(sample_period_s > 0.0) {
            return Err(Error::config(format!(
                "delay spread {delay_spread_s} s and sample period {sample_period_s} s must be nonnegative/positive"
            )));
        }
        taps.sort_by(|a, b| a.normalized_delay.total_cmp(&b.normalized_delay));
        Ok(Self {
            taps,
            delay_spread_s,
            sample_period_s,
        })
    }

    pub fn tdl_c(delay_spread_s: f64, sample_period_s: f64) -> Result<Self> {
        let taps = TDL_C
            .iter()
            .map(|&(normalized_delay, power_db)| Tap {
                normalized_delay,
                power_db,
            })
            .collect();
        Self::new(taps, delay_spread_s, sample_period_s)
    }

    /// Parses `normalized_delay, power_db` rows. Fields may be separated by
    /// commas or whitespace; `#` starts a comment and a non-numeric first
    /// line is treated as a header.
    pub fn parse(text: &str, delay_spread_s: f64, sample_period_s: f64) -> Result<Self> {
        let mut taps = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 2 => taps.push(Tap {
                    normalized_delay: v[0],
                    power_db: v[1],
                }),
                None if taps.is_empty() && fields.len() == 2 => {} // header
                _ => {
                    return Err(Error::config(format!(
                        "tap profile line {}: expected `normalized_delay, power_db`, got `{raw}`",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(taps, delay_spread_s, sample_period_s)
    }

    pub fn from_path(path: &FsPath, delay_spread_s: f64, sample_period_s: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, delay_spread_s, sample_period_s).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn delay_spread_s(&self) -> f64 {
        self.delay_spread_s
    }

    /// Linear tap powers normalized to unit sum.
    pub fn linear_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.taps.iter().map(|t| 10f64.powf(t.power_db / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }

    /// Tap delays rounded to the nearest sample.
    pub fn delays_samples(&self) -> Vec<usize> {
        self.taps
            .iter()
            .map(|t| (t.normalized_delay * self.delay_spread_s / self.sample_period_s).round() as usize)
            .collect()
    }

    pub fn max_delay_samples(&self) -> usize {
        self.delays_samples().into_iter().max().unwrap_or(0)
    }
}

/// Maximum Doppler shift `f_c v / c` for a speed in km/h.
pub fn doppler_from_speed(v_kmh: f64, f_c_hz: f64) -> f64 {
    f_c_hz * (v_kmh / 3.6) / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath {
    pub gain: C64,
    /// Delay in samples.
    pub delay: usize,
    pub doppler_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct DelayTap {
    delay: usize,
    // h[n, delay] for n in 0..frame_len
    coeffs: Vec<C64>,
}

/// One channel realization over a frame of `frame_len` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvChannel {
    paths: Vec<ChannelPath>,
    sample_period_s: f64,
    frame_len: usize,
    taps: Vec<DelayTap>,
}

impl LtvChannel {
    pub fn new(paths: Vec<ChannelPath>, sample_period_s: f64, frame_len: usize) -> Result<Self> {
        if let Some(p) = paths.iter().find(|p| p.delay >= frame_len.max(1)) {
            return Err(Error::config(format!(
                "path delay {} samples does not fit in a frame of {frame_len} samples",
                p.delay
            )));
        }
        let mut delays: Vec<usize> = paths.iter().map(|p| p.delay).collect();
        delays.sort_unstable();
        delays.dedup();
        let taps = delays
            .into_iter()
            .map(|delay| {
                let mut coeffs = vec![ZERO; frame_len];
                for p in paths.iter().filter(|p| p.delay == delay) {
                    let w = 2.0 * std::f64::consts::PI * p.doppler_hz * sample_period_s;
                    for (n, c) in coeffs.iter_mut().enumerate() {
                        let phase = w * (n as f64 - delay as f64);
                        *c += p.gain * C64::from_polar(1.0, phase);
                    }
                }
                DelayTap { delay, coeffs }
            })
            .collect();
        Ok(Self {
            paths,
            sample_period_s,
            frame_len,
            taps,
        })
    }

    /// Single unit path with no delay or Doppler.
    pub fn identity(frame_len: usize, sample_period_s: f64) -> Self {
        let path = ChannelPath {
            gain: C64::new(1.0, 0.0),
            delay: 0,
            doppler_hz: 0.0,
        };
        Self::new(vec![path], sample_period_s, frame_len).expect("a zero-delay path always fits")
    }

    pub fn paths(&self) -> &[ChannelPath] {
        &self.paths
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    /// Discrete time-varying impulse response `h[n, l]`.
    pub fn coefficient(&self, n: usize, delay: usize) -> C64 {
        self.taps
            .iter()
            .find(|t| t.delay == delay)
            .map_or(ZERO, |t| t.coeffs[n])
    }

    pub fn apply(&self, s: &[C64]) -> Result<Vec<C64>> {
        LinearOperator::apply(self, s)
    }

    /// Per-block `M x M` matrices `R_cp H_b A_cp` of a CP-OTFS frame.
    ///
    /// When every delay fits in the cyclic prefix, received block `b` depends
    /// only on transmitted block `b`, and the time-domain channel seen between
    /// CP insertion and CP removal is block diagonal with these blocks.
    pub fn cp_blocks(&self, grid: &OtfsGrid) -> Result<Vec<ComplexMatrix>> {
        let (m, ncp, bl) = (grid.delay_bins(), grid.cp().len, grid.block_len());
        if self.frame_len != grid.frame_len() {
            return Err(Error::dim(
                "channel frame length",
                grid.frame_len(),
                self.frame_len,
            ));
        }
        if self.max_delay() > ncp {
            return Err(Error::config(format!(
                "channel delay {} exceeds the cyclic prefix ({ncp})",
                self.max_delay()
            )));
        }
        Ok((0..grid.doppler_bins())
            .map(|b| {
                let mut h = ComplexMatrix::zeros(m, m);
                for tap in &self.taps {
                    for row in 0..m {
                        let col = (row + m - tap.delay % m) % m;
                        h[(row, col)] += tap.coeffs[b * bl + ncp + row];
                    }
                }
                h
            })
            .collect())
    }
}

impl LinearOperator for LtvChannel {
    fn nrows(&self) -> usize {
        self.frame_len
    }

    fn ncols(&self) -> usize {
        self.frame_len
    }

    fn apply_into(&self, s: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        for tap in &self.taps {
            let l = tap.delay;
            for ((o, c), x) in out[l..].iter_mut().zip(&tap.coeffs[l..]).zip(s) {
                *o += c * x;
            }
        }
    }

    fn apply_adjoint_into(&self, r: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        for tap in &self.taps {
            let l = tap.delay;
            for ((o, c), y) in out.iter_mut().zip(&tap.coeffs[l..]).zip(&r[l..]) {
                *o += c.conj() * y;
            }
        }
    }
}

/// Draws a Rayleigh realization of `profile` with one Jakes angle per tap:
/// `h_p ~ CN(0, power_p)`, `ν_p = v_max cos θ_p`, `θ_p ~ U[0, 2π)`.
pub fn generate_channel<R: Rng + ?Sized>(
    profile: &TapProfile,
    v_max_hz: f64,
    frame_len: usize,
    rng: &mut R,
) -> Result<LtvChannel> {
    if !(v_max_hz >= 0.0) {
        return Err(Error::config(format!(
            "maximum Doppler must be nonnegative, got {v_max_hz}"
        )));
    }
    let angle = Uniform::new(0.0, 2.0 * std::f64::consts::PI);
    let paths = profile
        .linear_powers()
        .into_iter()
        .zip(profile.delays_samples())
        .map(|(power, delay)| {
            let gain = complex_gaussian(rng, 1, power)[0];
            let theta: f64 = angle.sample(rng);
            ChannelPath {
                gain,
                delay,
                doppler_hz: v_max_hz * theta.cos(),
            }
        })
        .collect();
    LtvChannel::new(paths, profile.sample_period_s(), frame_len)
}

/// End-to-end delay-Doppler channel `G = (F_N ⊗ R_cp) H (F_Nᴴ ⊗ A_cp)`.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    op: Composed<OtfsDemodulator, Composed<LtvChannel, OtfsModulator>>,
    grid: OtfsGrid,
}

impl EffectiveChannel {
    pub fn new(channel: LtvChannel, grid: &OtfsGrid) -> Result<Self> {
        if channel.max_delay() > grid.cp().len {
            return Err(Error::config(format!(
                "channel delay of {} samples exceeds the cyclic prefix of {} samples",
                channel.max_delay(),
                grid.cp().len
            )));
        }
        if channel.frame_len() != grid.frame_len() {
            return Err(Error::dim(
                "channel frame length",
                grid.frame_len(),
                channel.frame_len(),
            ));
        }
        let inner = Composed::new(channel, grid.modulator())?;
        Ok(Self {
            op: Composed::new(grid.demodulator(), inner)?,
            grid: grid.clone(),
        })
    }

    pub fn channel(&self) -> &LtvChannel {
        self.op.inner().outer()
    }

    pub fn grid(&self) -> &OtfsGrid {
        &self.grid
    }
}

impl LinearOperator for EffectiveChannel {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }
    fn ncols(&self) -> usize {
        self.op.ncols()
    }
    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        self.op.apply_into(x, out)
    }
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        self.op.apply_adjoint_into(y, out)
    }
}

pub fn effective_operator(channel: LtvChannel, grid: &OtfsGrid) -> Result<EffectiveChannel> {
    EffectiveChannel::new(channel, grid)
}

/// Per-sample complex AWGN variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    variance: f64,
}

impl NoiseConfig {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::config(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        Ok(Self { variance })
    }

    /// With unit channel power and a unit-energy frame, SNR = 1/σ².
    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::new(10f64.powf(-snr_db / 10.0))
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Per-dimension standard deviation used as the equalizer damping.
    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `r + w` with `w` i.i.d. `CN(0, variance)`.
pub fn add_noise<R: Rng + ?Sized>(r: &[C64], variance: f64, rng: &mut R) -> Vec<C64> {
    let noise = complex_gaussian(rng, r.len(), variance);
    r.iter().zip(noise).map(|(a, w)| a + w).collect()
}

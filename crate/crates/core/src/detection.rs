//! Symbol detection for two power-multiplexed users.
//!
//! [`ProposedDetector`] runs the iterative receiver: equalize the residual
//! with damped LSQR, decide the symbols of both users that fall outside the
//! unreliable zone, cancel their contribution, shrink the thresholds and
//! repeat. User 2 symbols are only decided where the User 1 symbol at the
//! same index has already been decided in an earlier iteration.
//!
//! [`MmseSicDetector`] is the packet-level benchmark: one MMSE equalization,
//! decide every User 1 symbol, cancel, equalize again and decide User 2.

use serde::{Deserialize, Serialize};

use crate::channel::LtvChannel;
use crate::error::{Error, Result};
use crate::lsqr::{lsqr_solve, LsqrConfig};
use crate::modem::{OtfsGrid, QamConstellation};
use crate::numerics::{
    relative_error, Cholesky, ComplexMatrix, LinearOperator, RegularizedSolver, C64, ZERO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum User {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl User {
    pub const BOTH: [User; 2] = [User::One, User::Two];

    pub fn index(self) -> usize {
        match self {
            User::One => 0,
            User::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(User::One),
            2 => Some(User::Two),
            _ => None,
        }
    }
}

/// How the per-axis strips combine into the unreliable region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneShape {
    /// Unreliable when either coordinate lies in a strip.
    #[default]
    Union,
    /// Unreliable only when both coordinates lie in a strip.
    Intersection,
}

/// Open strips of width `threshold` centred on the per-axis decision boundaries.
#[derive(Debug, Clone, Copy)]
pub struct ReliabilityZone<'a> {
    constellation: &'a QamConstellation,
    threshold: f64,
    shape: ZoneShape,
}

impl<'a> ReliabilityZone<'a> {
    pub fn new(constellation: &'a QamConstellation, threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Error::config(format!(
                "threshold must be nonnegative, got {threshold}"
            )));
        }
        Ok(Self {
            constellation,
            threshold,
            shape: ZoneShape::Union,
        })
    }

    pub fn with_shape(self, shape: ZoneShape) -> Self {
        Self { shape, ..self }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn axis_in_strip(&self, u: f64) -> bool {
        let half = self.threshold / 2.0;
        self.constellation.boundaries().any(|b| (u - b).abs() < half)
    }

    pub fn is_unreliable(&self, v: C64) -> bool {
        if self.threshold == 0.0 {
            return false;
        }
        match self.shape {
            ZoneShape::Union => self.axis_in_strip(v.re) || self.axis_in_strip(v.im),
            ZoneShape::Intersection => self.axis_in_strip(v.re) && self.axis_in_strip(v.im),
        }
    }
}

pub fn is_unreliable(v: C64, zone: &ReliabilityZone<'_>) -> bool {
    zone.is_unreliable(v)
}

fn quantize_axis(u: f64, c: &QamConstellation) -> f64 {
    let side = c.side();
    let t = (u / c.half_distance() + (side as f64 - 1.0)) / 2.0;
    // nearest level; exact ties go to the lower level
    let i = (t - 0.5).ceil().clamp(0.0, (side - 1) as f64) as usize;
    c.levels()[i]
}

/// Nearest constellation point, axis by axis.
pub fn quantize(v: C64, c: &QamConstellation) -> C64 {
    C64::new(quantize_axis(v.re, c), quantize_axis(v.im, c))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RzDecision {
    pub reliable: Vec<usize>,
    pub quantized: Vec<C64>,
}

/// Reliable subset of `active` and the quantized values there.
pub fn rz_detect(x: &[C64], active: &[usize], zone: &ReliabilityZone<'_>) -> RzDecision {
    let mut out = RzDecision::default();
    for &n in active {
        if !zone.is_unreliable(x[n]) {
            out.reliable.push(n);
            out.quantized.push(quantize(x[n], zone.constellation));
        }
    }
    out
}

/// Starting thresholds and the outer iteration cap `K`.
///
/// Iteration `k ≥ 2` uses `T₁ = T₁⁽¹⁾ (1 − k/(K−1))` and
/// `T₂ = T₂⁽¹⁾ (1 − k/K)`, clamped at zero, so User 1 is forced by `k = K−1`
/// and User 2 by `k = K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSchedule {
    start: [f64; 2],
    outer_iterations: usize,
}

impl ThresholdSchedule {
    pub fn new(t1: f64, t2: f64, outer_iterations: usize) -> Result<Self> {
        if outer_iterations < 2 {
            return Err(Error::config(format!(
                "outer iteration cap must be at least 2, got {outer_iterations}"
            )));
        }
        if !(t1 >= 0.0) || !(t2 >= 0.0) {
            return Err(Error::config(format!(
                "starting thresholds must be nonnegative, got {t1}, {t2}"
            )));
        }
        Ok(Self {
            start: [t1, t2],
            outer_iterations,
        })
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer_iterations
    }

    pub fn start(&self, user: User) -> f64 {
        self.start[user.index()]
    }

    /// Threshold in force during outer iteration `k` (1-based).
    pub fn threshold(&self, user: User, k: usize) -> f64 {
        let t0 = self.start[user.index()];
        if k <= 1 {
            return t0;
        }
        let kk = self.outer_iterations as f64;
        let denom = match user {
            User::One => kk - 1.0,
            User::Two => kk,
        };
        (t0 * (1.0 - k as f64 / denom)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAllocation {
    p: [f64; 2],
}

impl PowerAllocation {
    /// `p1 + p2 = 1`; a zero share removes that user from the superposition.
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        if !(p1 >= 0.0) || !(p2 >= 0.0) || (p1 + p2 - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "power allocation must be nonnegative and sum to 1, got {p1} + {p2}"
            )));
        }
        Ok(Self { p: [p1, p2] })
    }

    pub fn power(&self, user: User) -> f64 {
        self.p[user.index()]
    }

    pub fn amplitude(&self, user: User) -> f64 {
        self.p[user.index()].sqrt()
    }
}

/// Fractional transmit power allocation `p_i ∝ Γ_i^(−α)` from average SNRs.
pub fn ftpa_allocate(snr1_db: f64, snr2_db: f64, alpha: f64) -> Result<PowerAllocation> {
    if !(alpha >= 0.0) {
        return Err(Error::config(format!(
            "FTPA decay factor must be nonnegative, got {alpha}"
        )));
    }
    // Γ^(−α) in dB form keeps large SNRs from overflowing
    let w1 = 10f64.powf(-alpha * snr1_db / 10.0);
    let w2 = 10f64.powf(-alpha * snr2_db / 10.0);
    let p1 = w1 / (w1 + w2);
    PowerAllocation::new(p1, 1.0 - p1)
}

/// Receiver bookkeeping. A zero entry in `estimates[j]` marks an undecided
/// symbol of user `j`; `residual` is the received vector with every decided
/// symbol cancelled.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionState {
    estimates: [Vec<C64>; 2],
    residual: Vec<C64>,
}

impl DetectionState {
    pub fn new(y: &[C64], symbols: usize) -> Self {
        Self {
            estimates: [vec![ZERO; symbols], vec![ZERO; symbols]],
            residual: y.to_vec(),
        }
    }

    pub fn from_parts(estimates: [Vec<C64>; 2], residual: Vec<C64>) -> Result<Self> {
        if estimates[0].len() != estimates[1].len() {
            return Err(Error::dim(
                "estimate vectors",
                estimates[0].len(),
                estimates[1].len(),
            ));
        }
        Ok(Self { estimates, residual })
    }

    pub fn estimates(&self, user: User) -> &[C64] {
        &self.estimates[user.index()]
    }

    pub fn residual(&self) -> &[C64] {
        &self.residual
    }

    pub fn undetected(&self, user: User) -> Vec<usize> {
        self.estimates[user.index()]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == ZERO)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn undetected_count(&self, user: User) -> usize {
        self.estimates[user.index()]
            .iter()
            .filter(|v| **v == ZERO)
            .count()
    }

    pub fn is_detected(&self, user: User, n: usize) -> bool {
        self.estimates[user.index()][n] != ZERO
    }

    /// Every decided entry is a constellation point, and User 2 is decided
    /// only where User 1 is.
    pub fn is_consistent(&self, c1: &QamConstellation, c2: &QamConstellation) -> bool {
        let points_ok =
            |est: &[C64], c: &QamConstellation| est.iter().all(|v| *v == ZERO || c.index_of(*v).is_some());
        points_ok(&self.estimates[0], c1)
            && points_ok(&self.estimates[1], c2)
            && self.estimates[1]
                .iter()
                .zip(&self.estimates[0])
                .all(|(v2, v1)| *v2 == ZERO || *v1 != ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub thresholds: [f64; 2],
    pub lsqr_iterations: usize,
    pub newly_detected: [usize; 2],
    pub undetected: [usize; 2],
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub symbols: Vec<C64>,
    pub state: DetectionState,
    pub history: Vec<IterationRecord>,
}

/// The iterative LSQR + reliability-zone receiver.
#[derive(Debug, Clone)]
pub struct ProposedDetector {
    alloc: PowerAllocation,
    constellations: [QamConstellation; 2],
    schedule: ThresholdSchedule,
    lsqr: LsqrConfig,
    shape: ZoneShape,
}

impl ProposedDetector {
    pub fn new(
        alloc: PowerAllocation,
        c1: QamConstellation,
        c2: QamConstellation,
        schedule: ThresholdSchedule,
        lsqr: LsqrConfig,
    ) -> Result<Self> {
        lsqr.validate()?;
        Ok(Self {
            alloc,
            constellations: [c1, c2],
            schedule,
            lsqr,
            shape: ZoneShape::Union,
        })
    }

    pub fn with_shape(self, shape: ZoneShape) -> Self {
        Self { shape, ..self }
    }

    pub fn constellation(&self, user: User) -> &QamConstellation {
        &self.constellations[user.index()]
    }

    pub fn detect(&self, g: &dyn LinearOperator, y: &[C64], user: User) -> Result<Detection> {
        if y.len() != g.nrows() {
            return Err(Error::dim("received vector", g.nrows(), y.len()));
        }
        self.resume(g, DetectionState::new(y, g.ncols()), user, 1, &mut |_, _| {})
    }

    /// Like [`detect`](Self::detect), calling `observer` after every outer iteration.
    pub fn detect_observed(
        &self,
        g: &dyn LinearOperator,
        y: &[C64],
        user: User,
        observer: &mut dyn FnMut(&DetectionState, &IterationRecord),
    ) -> Result<Detection> {
        if y.len() != g.nrows() {
            return Err(Error::dim("received vector", g.nrows(), y.len()));
        }
        self.resume(g, DetectionState::new(y, g.ncols()), user, 1, observer)
    }

    /// Continues the outer loop from `state` at iteration `first_iteration`.
    pub fn resume(
        &self,
        g: &dyn LinearOperator,
        mut state: DetectionState,
        user: User,
        first_iteration: usize,
        observer: &mut dyn FnMut(&DetectionState, &IterationRecord),
    ) -> Result<Detection> {
        let symbols = g.ncols();
        if state.estimates[0].len() != symbols || state.residual.len() != g.nrows() {
            return Err(Error::dim("detection state", symbols, state.estimates[0].len()));
        }
        if self.alloc.power(user) == 0.0 {
            return Err(Error::config(format!(
                "user {} has no power allocated and cannot be detected",
                user.number()
            )));
        }
        let amp = [self.alloc.amplitude(User::One), self.alloc.amplitude(User::Two)];
        let mut history = Vec::new();
        let mut cancel = vec![ZERO; symbols];
        let mut regenerated = vec![ZERO; g.nrows()];

        for k in first_iteration.max(1)..=self.schedule.outer_iterations() {
            if state.undetected_count(user) == 0 {
                break;
            }
            let thresholds = [
                self.schedule.threshold(User::One, k),
                self.schedule.threshold(User::Two, k),
            ];
            let sol = lsqr_solve(g, &state.residual, &self.lsqr)?;

            let mut decisions: [Vec<(usize, C64)>; 2] = [Vec::new(), Vec::new()];
            for u in User::BOTH {
                let j = u.index();
                if amp[j] == 0.0 {
                    continue;
                }
                let zone =
                    ReliabilityZone::new(&self.constellations[j], thresholds[j])?.with_shape(self.shape);
                for n in 0..symbols {
                    if state.estimates[j][n] != ZERO {
                        continue;
                    }
                    // User 2 waits for User 1 decisions from earlier iterations
                    if u == User::Two && amp[0] > 0.0 && state.estimates[0][n] == ZERO {
                        continue;
                    }
                    let v = sol.x[n] / amp[j];
                    if !zone.is_unreliable(v) {
                        decisions[j].push((n, quantize(v, &self.constellations[j])));
                    }
                }
            }

            cancel.fill(ZERO);
            for (j, list) in decisions.iter().enumerate() {
                for &(n, q) in list {
                    cancel[n] += amp[j] * q;
                }
            }
            if decisions.iter().any(|d| !d.is_empty()) {
                g.apply_into(&cancel, &mut regenerated);
                for (r, c) in state.residual.iter_mut().zip(&regenerated) {
                    *r -= c;
                }
            }
            for (j, list) in decisions.iter().enumerate() {
                for &(n, q) in list {
                    state.estimates[j][n] = q;
                }
            }

            let record = IterationRecord {
                iteration: k,
                thresholds,
                lsqr_iterations: sol.iterations,
                newly_detected: [decisions[0].len(), decisions[1].len()],
                undetected: [
                    state.undetected_count(User::One),
                    state.undetected_count(User::Two),
                ],
                residual_norm: crate::numerics::norm(&state.residual),
            };
            observer(&state, &record);
            history.push(record);
        }

        Ok(Detection {
            symbols: state.estimates[user.index()].clone(),
            state,
            history,
        })
    }
}

/// Runs the proposed receiver once; returns `x̂_user`.
#[allow(clippy::too_many_arguments)]
pub fn detect_algorithm1(
    g: &dyn LinearOperator,
    y: &[C64],
    alloc: PowerAllocation,
    c1: &QamConstellation,
    c2: &QamConstellation,
    schedule: ThresholdSchedule,
    lsqr: LsqrConfig,
    user: User,
) -> Result<Vec<C64>> {
    let det = ProposedDetector::new(alloc, c1.clone(), c2.clone(), schedule, lsqr)?;
    Ok(det.detect(g, y, user)?.symbols)
}

/// A regularized (MMSE) equalizer `x̃ = (GᴴG + σ²I)⁻¹ Gᴴ y` together with the
/// forward channel it inverts.
pub trait MmseEqualizer {
    fn equalize(&self, y: &[C64]) -> Result<Vec<C64>>;
    fn forward(&self, x: &[C64]) -> Result<Vec<C64>>;
}

/// Dense route: Cholesky of the full `MN x MN` regularized Gram matrix.
#[derive(Debug, Clone)]
pub struct DenseMmse<'a> {
    solver: RegularizedSolver<'a>,
}

impl<'a> DenseMmse<'a> {
    pub fn new(g: &'a ComplexMatrix, damp: f64) -> Result<Self> {
        Ok(Self {
            solver: RegularizedSolver::new(g, damp)?,
        })
    }
}

impl MmseEqualizer for DenseMmse<'_> {
    fn equalize(&self, y: &[C64]) -> Result<Vec<C64>> {
        self.solver.solve(y)
    }
    fn forward(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.solver.matrix().apply(x)
    }
}

/// Exact MMSE through the CP block structure of the effective channel.
///
/// With every delay inside the cyclic prefix, `G = (F_N ⊗ I) D (F_Nᴴ ⊗ I)`
/// where `D` is block diagonal with the `N` per-block `M x M` channels, and
/// `F_N ⊗ I` is unitary. Hence `(GᴴG + σ²I)⁻¹Gᴴ` factors into `N` independent
/// `M x M` regularized solves. Same estimate as [`DenseMmse`], at `O(N M³)`.
#[derive(Debug, Clone)]
pub struct BlockMmse {
    grid: OtfsGrid,
    blocks: Vec<ComplexMatrix>,
    factors: Vec<Cholesky>,
}

impl BlockMmse {
    pub fn new(channel: &LtvChannel, grid: &OtfsGrid, damp: f64) -> Result<Self> {
        let blocks = channel.cp_blocks(grid)?;
        let factors = blocks
            .iter()
            .map(|h| Cholesky::factor(h.regularized_gram(damp)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            blocks,
            factors,
        })
    }
}

impl MmseEqualizer for BlockMmse {
    fn equalize(&self, y: &[C64]) -> Result<Vec<C64>> {
        let m = self.grid.delay_bins();
        if y.len() != self.grid.symbols() {
            return Err(Error::dim("received vector", self.grid.symbols(), y.len()));
        }
        let mut z = y.to_vec();
        self.grid.doppler_transform(&mut z, true);
        for ((chunk, h), chol) in z.chunks_exact_mut(m).zip(&self.blocks).zip(&self.factors) {
            let rhs = h.apply_adjoint(chunk)?;
            chunk.copy_from_slice(&chol.solve(&rhs)?);
        }
        self.grid.doppler_transform(&mut z, false);
        Ok(z)
    }

    fn forward(&self, x: &[C64]) -> Result<Vec<C64>> {
        let m = self.grid.delay_bins();
        if x.len() != self.grid.symbols() {
            return Err(Error::dim("symbol vector", self.grid.symbols(), x.len()));
        }
        let mut z = x.to_vec();
        self.grid.doppler_transform(&mut z, true);
        for (chunk, h) in z.chunks_exact_mut(m).zip(&self.blocks) {
            let out = h.apply(chunk)?;
            chunk.copy_from_slice(&out);
        }
        self.grid.doppler_transform(&mut z, false);
        Ok(z)
    }
}

/// Packet-level MMSE-SIC benchmark.
#[derive(Debug, Clone)]
pub struct MmseSicDetector {
    alloc: PowerAllocation,
    constellations: [QamConstellation; 2],
}

impl MmseSicDetector {
    pub fn new(alloc: PowerAllocation, c1: QamConstellation, c2: QamConstellation) -> Self {
        Self {
            alloc,
            constellations: [c1, c2],
        }
    }

    pub fn detect(&self, eq: &dyn MmseEqualizer, y: &[C64], user: User) -> Result<Vec<C64>> {
        if self.alloc.power(user) == 0.0 {
            return Err(Error::config(format!(
                "user {} has no power allocated and cannot be detected",
                user.number()
            )));
        }
        let a1 = self.alloc.amplitude(User::One);
        let a2 = self.alloc.amplitude(User::Two);
        let sup = eq.equalize(y)?;
        if a1 == 0.0 {
            let c2 = &self.constellations[1];
            return Ok(sup.iter().map(|v| quantize(v / a2, c2)).collect());
        }
        let c1 = &self.constellations[0];
        let x1: Vec<C64> = sup.iter().map(|v| quantize(v / a1, c1)).collect();
        if user == User::One {
            return Ok(x1);
        }
        let scaled: Vec<C64> = x1.iter().map(|v| v * a1).collect();
        let regenerated = eq.forward(&scaled)?;
        let y2: Vec<C64> = y.iter().zip(&regenerated).map(|(a, b)| a - b).collect();
        let c2 = &self.constellations[1];
        Ok(eq.equalize(&y2)?.iter().map(|v| quantize(v / a2, c2)).collect())
    }
}

/// MMSE-SIC on a dense effective channel with noise variance `noise_variance`.
pub fn mmse_sic_detect(
    g_dense: &ComplexMatrix,
    y: &[C64],
    alloc: PowerAllocation,
    c1: &QamConstellation,
    c2: &QamConstellation,
    noise_variance: f64,
    user: User,
) -> Result<Vec<C64>> {
    if !(noise_variance >= 0.0) {
        return Err(Error::config(format!(
            "noise variance must be nonnegative, got {noise_variance}"
        )));
    }
    let eq = DenseMmse::new(g_dense, noise_variance.sqrt())?;
    MmseSicDetector::new(alloc, c1.clone(), c2.clone()).detect(&eq, y, user)
}

/// Symbol errors of `detected` against `sent` (entries compared as points).
pub fn count_symbol_errors(detected: &[C64], sent: &[C64], c: &QamConstellation) -> usize {
    let tol = 0.5 * c.half_distance();
    detected
        .iter()
        .zip(sent)
        .filter(|(a, b)| (**a - **b).norm() > tol)
        .count()
}

/// Relative agreement of two equalizer outputs; used by cross-checks.
pub fn equalizer_agreement(eq_a: &dyn MmseEqualizer, eq_b: &dyn MmseEqualizer, y: &[C64]) -> Result<f64> {
    Ok(relative_error(&eq_a.equalize(y)?, &eq_b.equalize(y)?))
}

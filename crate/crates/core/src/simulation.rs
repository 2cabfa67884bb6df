//! Seeded Monte Carlo experiments: one trial draws both users' frames, an
//! independent channel and noise realization per receiver, runs every
//! selected detector at both receivers and counts symbol errors.
//!
//! Random streams are derived from `(master seed, trial index, stream)` only,
//! so results do not depend on scheduling, and every sweep point reuses the
//! same realizations (common random numbers across the swept parameter).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    add_noise, doppler_from_speed, generate_channel, EffectiveChannel, LtvChannel, TapProfile,
};
use crate::detection::{
    count_symbol_errors, ftpa_allocate, BlockMmse, DenseMmse, MmseSicDetector, PowerAllocation,
    ProposedDetector, ThresholdSchedule, User, ZoneShape,
};
use crate::error::{Error, Result};
use crate::lsqr::LsqrConfig;
use crate::modem::{random_frame, superimpose, CpConfig, OtfsGrid, QamConstellation};
use crate::numerics::{densify_with_cap, LinearOperator, DEFAULT_DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Proposed,
    MmseSic,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Proposed => "proposed",
            DetectorKind::MmseSic => "mmse-sic",
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(DetectorKind::Proposed),
            "mmse-sic" | "mmse" => Ok(DetectorKind::MmseSic),
            other => Err(Error::config(format!(
                "unknown detector `{other}` (expected `proposed` or `mmse-sic`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    /// Rayleigh TDL-C taps with Jakes Doppler.
    #[default]
    TdlC,
    /// Unit gain, no delay, no Doppler.
    Identity,
}

/// How the MMSE-SIC benchmark inverts the channel. Both give the same estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmseBackend {
    /// Per-block solves exploiting the CP structure.
    #[default]
    Block,
    /// Cholesky of the full regularized Gram matrix.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// M
    pub delay_bins: usize,
    /// N
    pub doppler_bins: usize,
    pub cp_len: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub delay_spread_s: f64,
    pub qam1: usize,
    pub qam2: usize,
    pub snr1_db: f64,
    /// Explicit User 2 SNR; when absent it is `snr1_db + snr_gap_db`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr2_db: Option<f64>,
    pub snr_gap_db: f64,
    pub speed_kmh: f64,
    /// Overrides `speed_kmh` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_doppler_hz: Option<f64>,
    pub ftpa_alpha: f64,
    /// Fixed `[p1, p2]` instead of FTPA.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<[f64; 2]>,
    /// Starting thresholds in units of each user's half distance.
    pub threshold1: f64,
    pub threshold2: f64,
    pub outer_iterations: usize,
    pub lsqr_iterations: usize,
    pub lsqr_tolerance: f64,
    pub trials: u64,
    pub seed: u64,
    pub detectors: Vec<DetectorKind>,
    pub channel: ChannelModel,
    pub noiseless: bool,
    pub zone: ZoneShape,
    pub mmse_backend: MmseBackend,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            delay_bins: 64,
            doppler_bins: 16,
            cp_len: 13,
            carrier_hz: 5.9e9,
            bandwidth_hz: 4.95e6,
            delay_spread_s: 300e-9,
            qam1: 4,
            qam2: 4,
            snr1_db: 20.0,
            snr2_db: None,
            snr_gap_db: 15.0,
            speed_kmh: 200.0,
            max_doppler_hz: None,
            ftpa_alpha: 1.0,
            power: None,
            threshold1: 2.0,
            threshold2: 2.0,
            outer_iterations: 10,
            lsqr_iterations: 15,
            lsqr_tolerance: 1e-2,
            trials: 1000,
            seed: 1,
            detectors: vec![DetectorKind::Proposed, DetectorKind::MmseSic],
            channel: ChannelModel::TdlC,
            noiseless: false,
            zone: ZoneShape::Union,
            mmse_backend: MmseBackend::Block,
        }
    }
}

impl SimConfig {
    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn snr_db(&self, user: User) -> f64 {
        match user {
            User::One => self.snr1_db,
            User::Two => self.snr2_db.unwrap_or(self.snr1_db + self.snr_gap_db),
        }
    }

    /// `σ²` at `user`'s receiver; zero when noiseless.
    pub fn noise_variance(&self, user: User) -> f64 {
        if self.noiseless {
            0.0
        } else {
            10f64.powf(-self.snr_db(user) / 10.0)
        }
    }

    pub fn max_doppler(&self) -> f64 {
        self.max_doppler_hz
            .unwrap_or_else(|| doppler_from_speed(self.speed_kmh, self.carrier_hz))
    }

    pub fn qam(&self, user: User) -> usize {
        match user {
            User::One => self.qam1,
            User::Two => self.qam2,
        }
    }

    pub fn constellation(&self, user: User) -> Result<QamConstellation> {
        QamConstellation::new(self.qam(user))
    }

    pub fn power_allocation(&self) -> Result<PowerAllocation> {
        match self.power {
            Some([p1, p2]) => PowerAllocation::new(p1, p2),
            None => ftpa_allocate(self.snr_db(User::One), self.snr_db(User::Two), self.ftpa_alpha),
        }
    }

    pub fn grid(&self) -> Result<OtfsGrid> {
        OtfsGrid::new(self.delay_bins, self.doppler_bins, CpConfig::new(self.cp_len))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("lsqr_tolerance", self.lsqr_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("delay_spread_s", self.delay_spread_s),
            ("speed_kmh", self.speed_kmh),
            ("ftpa_alpha", self.ftpa_alpha),
            ("threshold1", self.threshold1),
            ("threshold2", self.threshold2),
            ("max_doppler_hz", self.max_doppler_hz.unwrap_or(0.0)),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [("snr1_db", self.snr1_db), ("snr_gap_db", self.snr_gap_db)] {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite, got {v}")));
            }
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("at least one detector must be selected"));
        }
        if self.lsqr_iterations == 0 {
            return Err(Error::config("lsqr_iterations must be at least 1"));
        }
        self.grid()?;
        self.constellation(User::One)?;
        self.constellation(User::Two)?;
        self.schedule()?;
        self.power_allocation()?;
        if self.channel == ChannelModel::TdlC {
            let max_delay = self.profile()?.max_delay_samples();
            if max_delay > self.cp_len {
                return Err(Error::config(format!(
                    "cp_len = {} is shorter than the largest channel delay of {max_delay} samples",
                    self.cp_len
                )));
            }
        }
        Ok(())
    }

    fn schedule(&self) -> Result<ThresholdSchedule> {
        let d1 = self.constellation(User::One)?.half_distance();
        let d2 = self.constellation(User::Two)?.half_distance();
        ThresholdSchedule::new(self.threshold1 * d1, self.threshold2 * d2, self.outer_iterations)
    }

    fn profile(&self) -> Result<TapProfile> {
        TapProfile::tdl_c(self.delay_spread_s, self.sample_period_s())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Independent random streams within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    FrameUser1 = 0,
    FrameUser2 = 1,
    ChannelUser1 = 2,
    ChannelUser2 = 3,
    NoiseUser1 = 4,
    NoiseUser2 = 5,
}

impl Stream {
    pub const ALL: [Stream; 6] = [
        Stream::FrameUser1,
        Stream::FrameUser2,
        Stream::ChannelUser1,
        Stream::ChannelUser2,
        Stream::NoiseUser1,
        Stream::NoiseUser2,
    ];

    fn frame(user: User) -> Self {
        [Stream::FrameUser1, Stream::FrameUser2][user.index()]
    }
    fn channel(user: User) -> Self {
        [Stream::ChannelUser1, Stream::ChannelUser2][user.index()]
    }
    fn noise(user: User) -> Self {
        [Stream::NoiseUser1, Stream::NoiseUser2][user.index()]
    }
}

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// Counter-based seed splitting. For a fixed master seed the map
/// `(trial, stream) -> seed` is injective for `trial < 2^61`: the counter
/// `8 trial + stream` is unique and every later step is a bijection on `u64`.
pub fn derive_seed(master_seed: u64, trial_index: u64, stream: Stream) -> u64 {
    let counter = trial_index.wrapping_mul(8).wrapping_add(stream as u64);
    fmix64(fmix64(master_seed).wrapping_add(counter.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

fn stream_rng(cfg: &SimConfig, trial: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, trial, stream))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub user: User,
    pub detector: DetectorKind,
    pub symbols: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialResult {
    pub trial: u64,
    pub tallies: Vec<Tally>,
}

/// A trial together with the detection wall-clock per tally, in ms.
#[derive(Debug, Clone)]
pub struct TimedTrial {
    pub result: TrialResult,
    pub wall_ms: Vec<f64>,
}

pub fn run_trial(cfg: &SimConfig, trial_index: u64) -> Result<TrialResult> {
    Ok(run_trial_timed(cfg, trial_index)?.result)
}

/// One frame pair through both receivers with every configured detector.
/// Users without allocated power are skipped.
pub fn run_trial_timed(cfg: &SimConfig, trial_index: u64) -> Result<TimedTrial> {
    let grid = cfg.grid()?;
    let (m, n) = (cfg.delay_bins, cfg.doppler_bins);
    let consts = [cfg.constellation(User::One)?, cfg.constellation(User::Two)?];
    let alloc = cfg.power_allocation()?;
    let schedule = cfg.schedule()?;
    let ts = cfg.sample_period_s();

    let frames: Vec<Vec<_>> = User::BOTH
        .iter()
        .map(|&u| {
            let mut rng = stream_rng(cfg, trial_index, Stream::frame(u));
            random_frame(&consts[u.index()], m, n, &mut rng).into_vec()
        })
        .collect();
    let xs = superimpose(
        &frames[0],
        &frames[1],
        alloc.power(User::One),
        alloc.power(User::Two),
    )?;
    let s = grid.modulator().apply(&xs)?;
    let profile = match cfg.channel {
        ChannelModel::TdlC => Some(cfg.profile()?),
        ChannelModel::Identity => None,
    };

    let mut tallies = Vec::new();
    let mut wall_ms = Vec::new();
    for user in User::BOTH {
        if alloc.power(user) == 0.0 {
            continue;
        }
        let channel = match &profile {
            Some(p) => {
                let mut rng = stream_rng(cfg, trial_index, Stream::channel(user));
                generate_channel(p, cfg.max_doppler(), grid.frame_len(), &mut rng)?
            }
            None => LtvChannel::identity(grid.frame_len(), ts),
        };
        let mut r = channel.apply(&s)?;
        let variance = cfg.noise_variance(user);
        if variance > 0.0 {
            let mut rng = stream_rng(cfg, trial_index, Stream::noise(user));
            r = add_noise(&r, variance, &mut rng);
        }
        let y = grid.demodulator().apply(&r)?;
        let g = EffectiveChannel::new(channel, &grid)?;
        let sigma = variance.sqrt();
        let truth = &frames[user.index()];
        let c_user = &consts[user.index()];

        for &det in &cfg.detectors {
            let start = Instant::now();
            let detected = match det {
                DetectorKind::Proposed => {
                    let lsqr = LsqrConfig::new(cfg.lsqr_iterations, cfg.lsqr_tolerance, sigma)?;
                    ProposedDetector::new(alloc, consts[0].clone(), consts[1].clone(), schedule, lsqr)?
                        .with_shape(cfg.zone)
                        .detect(&g, &y, user)?
                        .symbols
                }
                DetectorKind::MmseSic => {
                    let sic = MmseSicDetector::new(alloc, consts[0].clone(), consts[1].clone());
                    match cfg.mmse_backend {
                        MmseBackend::Block => {
                            let eq = BlockMmse::new(g.channel(), &grid, sigma)?;
                            sic.detect(&eq, &y, user)?
                        }
                        MmseBackend::Dense => {
                            let dense = densify_with_cap(&g, DEFAULT_DENSE_CAP)?;
                            let eq = DenseMmse::new(&dense, sigma)?;
                            sic.detect(&eq, &y, user)?
                        }
                    }
                }
            };
            wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
            tallies.push(Tally {
                user,
                detector: det,
                symbols: truth.len() as u64,
                errors: count_symbol_errors(&detected, truth, c_user) as u64,
            });
        }
    }
    Ok(TimedTrial {
        result: TrialResult {
            trial: trial_index,
            tallies,
        },
        wall_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Snr,
    Doppler,
    Threshold,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::Doppler => "doppler",
            SweepAxis::Threshold => "threshold",
        }
    }

    /// `cfg` with the swept parameter set to `value`:
    /// User 1 SNR in dB (User 2 follows at the configured gap), maximum
    /// Doppler in Hz, or the User 1 starting threshold in units of `d₁`.
    pub fn apply(self, cfg: &SimConfig, value: f64) -> SimConfig {
        let mut out = cfg.clone();
        match self {
            SweepAxis::Snr => {
                out.snr1_db = value;
                out.snr2_db = None;
            }
            SweepAxis::Doppler => out.max_doppler_hz = Some(value),
            SweepAxis::Threshold => out.threshold1 = value,
        }
        out
    }
}

/// Aggregated counts at one `(sweep value, user, detector)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_axis: SweepAxis,
    pub sweep_value: f64,
    pub user: User,
    pub detector: DetectorKind,
    pub trials: u64,
    pub symbols: u64,
    pub errors: u64,
    pub ser: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub config: SimConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, value: f64, user: User, detector: DetectorKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == value && r.user == user && r.detector == detector)
    }

    /// `(value, SER)` pairs for one curve, in sweep order.
    pub fn curve(&self, user: User, detector: DetectorKind) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.user == user && r.detector == detector)
            .map(|r| (r.sweep_value, r.ser))
            .collect()
    }
}

fn aggregate(cfg: &SimConfig, axis: SweepAxis, value: f64) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let trials: Vec<TimedTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial_timed(cfg, t))
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = Vec::new();
    for trial in &trials {
        for (tally, ms) in trial.result.tallies.iter().zip(&trial.wall_ms) {
            match rows
                .iter_mut()
                .find(|r| r.user == tally.user && r.detector == tally.detector)
            {
                Some(row) => {
                    row.trials += 1;
                    row.symbols += tally.symbols;
                    row.errors += tally.errors;
                    row.wall_ms += ms;
                }
                None => rows.push(SweepRow {
                    sweep_axis: axis,
                    sweep_value: value,
                    user: tally.user,
                    detector: tally.detector,
                    trials: 1,
                    symbols: tally.symbols,
                    errors: tally.errors,
                    ser: 0.0,
                    wall_ms: *ms,
                }),
            }
        }
    }
    for row in &mut rows {
        row.ser = row.errors as f64 / row.symbols as f64;
    }
    rows.sort_by_key(|r| (r.user.index(), r.detector));
    Ok(rows)
}

/// Runs `cfg.trials` trials at every value, in parallel over trials.
pub fn sweep(cfg: &SimConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut rows = Vec::new();
    for &v in values {
        rows.extend(aggregate(&axis.apply(cfg, v), axis, v)?);
    }
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        config: cfg.clone(),
        rows,
    })
}

/// A single point at the configuration as given, reported on the SNR axis.
pub fn simulate(cfg: &SimConfig) -> Result<SweepResult> {
    Ok(SweepResult {
        axis: SweepAxis::Snr,
        values: vec![cfg.snr1_db],
        config: cfg.clone(),
        rows: aggregate(cfg, SweepAxis::Snr, cfg.snr1_db)?,
    })
}

pub const CSV_HEADER: &str = "sweep_axis,sweep_value,user,detector,trials,symbols,errors,ser,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub config: SimConfig,
}

/// Companion metadata path for a results CSV.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Writes the CSV at `path` and the JSON metadata next to it.
pub fn export_results(res: &SweepResult, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    for row in &res.rows {
        writer.serialize(row).map_err(|e| parse_err(path, e))?;
    }
    if res.rows.is_empty() {
        writer
            .write_record(CSV_HEADER.split(','))
            .map_err(|e| parse_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))?;

    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: res.config.seed,
        config_hash: res.config.hash(),
        sweep_axis: res.axis,
        sweep_values: res.values.clone(),
        config: res.config.clone(),
    };
    let json_path = metadata_path(path);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| parse_err(&json_path, e))?;
    fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, e))?;
    let header = reader.headers().map_err(|e| parse_err(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(parse_err(
            path,
            format!("unexpected header, expected `{CSV_HEADER}`"),
        ));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| parse_err(path, e)))
        .collect()
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

/// Inverse of [`export_results`].
pub fn load_results(csv_path: &Path) -> Result<SweepResult> {
    let meta = read_metadata(&metadata_path(csv_path))?;
    Ok(SweepResult {
        axis: meta.sweep_axis,
        values: meta.sweep_values,
        config: meta.config,
        rows: read_rows(csv_path)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub symbols: usize,
    /// Median wall-clock of one proposed detection, ms.
    pub proposed_ms: f64,
    /// Median wall-clock of one dense MMSE-SIC detection, ms.
    pub mmse_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityTable {
    pub rows: Vec<BenchRow>,
    pub proposed_exponent: f64,
    pub mmse_exponent: Option<f64>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Times User 2 detection (the full two-user loop) on the operator path and,
/// for `M N <= dense_limit`, dense MMSE-SIC from an already materialized
/// channel matrix (Gram, factorization and both SIC stages).
pub fn benchmark_complexity(
    cfg: &SimConfig,
    sizes: &[(usize, usize)],
    reps: usize,
    dense_limit: usize,
) -> Result<ComplexityTable> {
    if sizes.len() < 2 || reps == 0 {
        return Err(Error::config(
            "benchmark needs at least two sizes and one repetition",
        ));
    }
    let mut rows = Vec::new();
    for &(m, n) in sizes {
        let point = SimConfig {
            delay_bins: m,
            doppler_bins: n,
            ..cfg.clone()
        };
        point.validate()?;
        let grid = point.grid()?;
        let consts = [point.constellation(User::One)?, point.constellation(User::Two)?];
        let alloc = point.power_allocation()?;
        let sigma = point.noise_variance(User::Two).sqrt();
        let lsqr = LsqrConfig::new(point.lsqr_iterations, point.lsqr_tolerance, sigma)?;
        let proposed = ProposedDetector::new(
            alloc,
            consts[0].clone(),
            consts[1].clone(),
            point.schedule()?,
            lsqr,
        )?
        .with_shape(point.zone);
        let sic = MmseSicDetector::new(alloc, consts[0].clone(), consts[1].clone());
        let profile = point.profile()?;
        let mut prop_times = Vec::new();
        let mut mmse_times = Vec::new();
        for rep in 0..reps as u64 {
            let mut rng = stream_rng(&point, rep, Stream::ChannelUser2);
            let channel = generate_channel(&profile, point.max_doppler(), grid.frame_len(), &mut rng)?;
            let x1 = random_frame(&consts[0], m, n, &mut stream_rng(&point, rep, Stream::FrameUser1));
            let x2 = random_frame(&consts[1], m, n, &mut stream_rng(&point, rep, Stream::FrameUser2));
            let xs = superimpose(
                x1.as_slice(),
                x2.as_slice(),
                alloc.power(User::One),
                alloc.power(User::Two),
            )?;
            let r = add_noise(
                &channel.apply(&grid.modulator().apply(&xs)?)?,
                sigma * sigma,
                &mut stream_rng(&point, rep, Stream::NoiseUser2),
            );
            let y = grid.demodulator().apply(&r)?;
            let g = EffectiveChannel::new(channel, &grid)?;

            let start = Instant::now();
            std::hint::black_box(proposed.detect(&g, &y, User::Two)?);
            prop_times.push(start.elapsed().as_secs_f64() * 1e3);

            if m * n <= dense_limit {
                let dense = densify_with_cap(&g, DEFAULT_DENSE_CAP)?;
                let start = Instant::now();
                let eq = DenseMmse::new(&dense, sigma)?;
                std::hint::black_box(sic.detect(&eq, &y, User::Two)?);
                mmse_times.push(start.elapsed().as_secs_f64() * 1e3);
            }
        }
        rows.push(BenchRow {
            delay_bins: m,
            doppler_bins: n,
            symbols: m * n,
            proposed_ms: median(prop_times),
            mmse_ms: (!mmse_times.is_empty()).then(|| median(mmse_times)),
        });
    }
    let proposed_exponent = loglog_slope(
        &rows
            .iter()
            .map(|r| (r.symbols as f64, r.proposed_ms))
            .collect::<Vec<_>>(),
    );
    let dense_points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.mmse_ms.map(|t| (r.symbols as f64, t)))
        .collect();
    Ok(ComplexityTable {
        rows,
        proposed_exponent,
        mmse_exponent: (dense_points.len() >= 2).then(|| loglog_slope(&dense_points)),
    })
}

/// Benchmark rows as CSV at `path`, fitted exponents as JSON next to it.
pub fn export_benchmark(table: &ComplexityTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    for row in &table.rows {
        writer.serialize(row).map_err(|e| parse_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))?;
    let json_path = metadata_path(path);
    let text = serde_json::to_string_pretty(table).map_err(|e| parse_err(&json_path, e))?;
    fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;
    Ok(())
}

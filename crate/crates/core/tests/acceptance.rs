//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! `ACCEPTANCE_ONLY=3,4` restricts the run to the listed criteria.
//! Sweep CSVs are written under the cargo target tmp dir for plotting.

use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64 as C64;
use otfs_noma::channel::{
    add_noise, effective_operator, generate_channel, ChannelPath, LtvChannel, TapProfile,
};
use otfs_noma::detection::{
    ftpa_allocate, mmse_sic_detect, rz_detect, DetectionState, IterationRecord, PowerAllocation,
    ProposedDetector, ReliabilityZone, ThresholdSchedule, User,
};
use otfs_noma::lsqr::{lsqr_solve, LsqrConfig};
use otfs_noma::modem::{random_frame, superimpose, CpConfig, OtfsGrid, QamConstellation};
use otfs_noma::numerics::{
    adjoint_defect, complex_gaussian, dense_regularized_solve, densify, relative_error, ComplexMatrix,
    Composed, Identity, LinearOperator, UnitaryDft,
};
use otfs_noma::simulation::{
    benchmark_complexity, export_results, run_trial, sweep, ChannelModel, DetectorKind, SimConfig, SweepAxis,
    SweepResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

fn out_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("create acceptance output dir");
    dir
}

fn sim<T>(r: otfs_noma::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_channel(rng: &mut ChaCha8Rng, grid: &OtfsGrid, paths: usize) -> LtvChannel {
    let cp = grid.cp().len;
    let p = (0..paths)
        .map(|_| ChannelPath {
            gain: complex_gaussian(rng, 1, 1.0 / paths as f64)[0],
            delay: rng.gen_range(0..=cp),
            doppler_hz: rng.gen_range(-2500.0..2500.0),
        })
        .collect();
    LtvChannel::new(p, 1.0 / 4.95e6, grid.frame_len()).expect("valid channel")
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let grids = [(4, 4, 1), (8, 4, 2), (16, 4, 3)];
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (m, n, cp) = grids[i % 3];
        let grid = sim(OtfsGrid::new(m, n, CpConfig::new(cp)))?;
        let g = sim(effective_operator(random_channel(&mut rng, &grid, 4), &grid))?;
        let dense = sim(densify(&g))?;
        let sigma = 10f64.powf(-rng.gen_range(0.0..35.0) / 20.0);
        let y = complex_gaussian(&mut rng, m * n, 1.0);
        let lsqr = sim(lsqr_solve(&g, &y, &sim(LsqrConfig::new(500, 1e-12, sigma))?))?;
        let oracle = sim(dense_regularized_solve(&dense, &y, sigma))?;
        worst = worst.max(relative_error(&lsqr.x, &oracle));
    }
    Ok((
        worst <= 1e-6,
        format!("max relative error {worst:.2e} over 50 instances (limit 1e-6)"),
    ))
}

/// Unitary DFT matrix, built entry by entry.
fn dft_matrix(n: usize) -> ComplexMatrix {
    let s = 1.0 / (n as f64).sqrt();
    ComplexMatrix::from_fn(n, n, |r, c| {
        C64::from_polar(s, -2.0 * std::f64::consts::PI * (r * c) as f64 / n as f64)
    })
}

fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.rows() * b.rows(), a.cols() * b.cols(), |r, c| {
        a[(r / b.rows(), c / b.cols())] * b[(r % b.rows(), c % b.cols())]
    })
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for (m, n, cp) in [(4, 4, 1), (8, 4, 2)] {
        let grid = sim(OtfsGrid::new(m, n, CpConfig::new(cp)))?;
        let channel = random_channel(&mut rng, &grid, 3);
        let len = grid.frame_len();
        let ts = channel.sample_period_s();
        let h = {
            let mut h = ComplexMatrix::zeros(len, len);
            for p in channel.paths() {
                for row in p.delay..len {
                    let phase = 2.0 * std::f64::consts::PI * p.doppler_hz * (row - p.delay) as f64 * ts;
                    h[(row, row - p.delay)] += p.gain * C64::from_polar(1.0, phase);
                }
            }
            h
        };
        let a_cp = ComplexMatrix::from_fn(m + cp, m, |r, c| {
            let src = if r < cp { m - cp + r } else { r - cp };
            if src == c {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let r_cp = ComplexMatrix::from_fn(m, m + cp, |r, c| {
            if c == r + cp {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let f = dft_matrix(n);
        let left = kron(&f, &r_cp);
        let right = kron(&f.adjoint(), &a_cp);
        let oracle = sim(sim(left.matmul(&h))?.matmul(&right))?;
        let g = sim(densify(&sim(effective_operator(channel, &grid))?))?;
        worst = worst.max(g.max_abs_diff(&oracle) / oracle.max_abs());
    }
    Ok((
        worst <= 1e-10,
        format!("max entry deviation / max |G| = {worst:.2e} (limit 1e-10)"),
    ))
}

fn criterion_3() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for qam in [4, 16] {
        let cfg = SimConfig {
            qam1: qam,
            qam2: qam,
            channel: ChannelModel::Identity,
            noiseless: true,
            detectors: vec![DetectorKind::Proposed],
            ..SimConfig::default()
        };
        let mut errors = [0u64; 2];
        let mut symbols = [0u64; 2];
        for t in 0..10 {
            for tally in sim(run_trial(&cfg, t))?.tallies {
                errors[tally.user.index()] += tally.errors;
                symbols[tally.user.index()] += tally.symbols;
            }
        }
        ok &= errors == [0, 0] && symbols == [10 * 1024, 10 * 1024];
        details.push(format!("{qam}-QAM errors u1={} u2={}", errors[0], errors[1]));
    }
    Ok((ok, format!("{} over 10 frames of 64x16", details.join(", "))))
}

fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Complementary error function, Numerical Recipes `erfcc` (rel. err < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

fn square_qam_ser(order: usize, snr_linear: f64) -> f64 {
    let a = order as f64;
    let p = 2.0 * (1.0 - 1.0 / a.sqrt()) * q_function((3.0 * snr_linear / (a - 1.0)).sqrt());
    1.0 - (1.0 - p) * (1.0 - p)
}

fn criterion_4() -> Check {
    let cfg = SimConfig {
        power: Some([1.0, 0.0]),
        channel: ChannelModel::Identity,
        snr1_db: 10.0,
        qam1: 4,
        trials: 1000,
        seed: 404,
        ..SimConfig::default()
    };
    let res = sim(sweep(&cfg, SweepAxis::Snr, &[10.0]))?;
    let theory = square_qam_ser(4, 10.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for det in [DetectorKind::Proposed, DetectorKind::MmseSic] {
        let row = res.row(10.0, User::One, det).ok_or("missing row")?;
        let rel = (row.ser - theory).abs() / theory;
        ok &= rel <= 0.10 && row.symbols >= 100_000;
        parts.push(format!(
            "{} {:.4e} ({:+.1}%)",
            det.name(),
            row.ser,
            100.0 * (row.ser - theory) / theory
        ));
    }
    Ok((
        ok,
        format!(
            "theory {theory:.4e}; {} over {} symbols (limit 10%)",
            parts.join(", "),
            1000 * 1024
        ),
    ))
}

/// SNR at which a decreasing SER curve first reaches `target`, by linear
/// interpolation of log10(SER); zero counts are floored at half an error.
fn snr_at_ser(curve: &[(f64, f64)], target: f64, floor: f64) -> Option<f64> {
    if curve.first().is_some_and(|&(_, s)| s <= target) {
        return None;
    }
    curve.windows(2).find_map(|w| {
        let ((x0, s0), (x1, s1)) = (w[0], w[1]);
        (s0 > target && s1 <= target).then(|| {
            let (l0, l1) = (s0.max(floor).log10(), s1.max(floor).log10());
            x0 + (x1 - x0) * (l0 - target.log10()) / (l0 - l1)
        })
    })
}

fn fmt_curve(curve: &[(f64, f64)]) -> String {
    curve
        .iter()
        .map(|(x, s)| format!("{x}:{s:.2e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn run_and_export(
    cfg: &SimConfig,
    axis: SweepAxis,
    values: &[f64],
    name: &str,
) -> Result<SweepResult, String> {
    let res = sim(sweep(cfg, axis, values))?;
    sim(export_results(&res, &out_dir().join(format!("{name}.csv"))))?;
    Ok(res)
}

fn snr_gain_check(
    qam: usize,
    target: f64,
    gain: (f64, f64),
    values: &[f64],
    name: &str,
) -> Result<(bool, String, SweepResult), String> {
    let cfg = SimConfig {
        qam1: qam,
        qam2: qam,
        speed_kmh: 200.0,
        trials: 1000,
        ..SimConfig::default()
    };
    let res = run_and_export(&cfg, SweepAxis::Snr, values, name)?;
    let floor = 0.5 / (cfg.trials as f64 * 1024.0);
    let prop = res.curve(User::One, DetectorKind::Proposed);
    let mmse = res.curve(User::One, DetectorKind::MmseSic);
    let sp = snr_at_ser(&prop, target, floor);
    let sm = snr_at_ser(&mmse, target, floor);
    let (ok, what) = match (sp, sm) {
        (Some(a), Some(b)) => {
            let g = b - a;
            (g >= gain.0 && g <= gain.1, format!("User 1 gain at SER {target:.0e}: {g:+.2} dB (proposed {a:.2} dB, MMSE-SIC {b:.2} dB; required [{}, {}])", gain.0, gain.1))
        }
        _ => (
            false,
            format!("User 1 SER {target:.0e} not bracketed: proposed {sp:?}, MMSE-SIC {sm:?}"),
        ),
    };
    let detail = format!(
        "{what}; u1 proposed [{}] mmse [{}]",
        fmt_curve(&prop),
        fmt_curve(&mmse)
    );
    Ok((ok, detail, res))
}

fn criterion_5() -> Check {
    let values: Vec<f64> = (0..=10).map(|i| 10.0 + 2.5 * i as f64).collect();
    let (gain_ok, detail, res) = snr_gain_check(4, 1e-3, (1.5, 4.5), &values, "c5_sweep_snr_4qam")?;
    let mut order_ok = true;
    let mut bad = Vec::new();
    for &v in values.iter().filter(|&&v| v > 25.0) {
        let p = res
            .row(v, User::Two, DetectorKind::Proposed)
            .ok_or("missing row")?
            .ser;
        let m = res
            .row(v, User::Two, DetectorKind::MmseSic)
            .ok_or("missing row")?
            .ser;
        if m <= p {
            order_ok = false;
            bad.push(format!("{v} dB: mmse {m:.2e} <= proposed {p:.2e}"));
        }
    }
    let order = if order_ok {
        "User 2 ordering holds above 25 dB".to_string()
    } else {
        format!("User 2 ordering violated at {}", bad.join(", "))
    };
    Ok((gain_ok && order_ok, format!("{detail}; {order}")))
}

fn criterion_6() -> Check {
    let values: Vec<f64> = (0..=12).map(|i| 10.0 + 2.5 * i as f64).collect();
    let (ok, detail, _) = snr_gain_check(16, 1e-2, (4.0, 8.0), &values, "c6_sweep_snr_16qam")?;
    Ok((ok, detail))
}

fn criterion_7() -> Check {
    let cfg = SimConfig {
        qam1: 16,
        qam2: 16,
        snr1_db: 20.0,
        snr2_db: Some(35.0),
        trials: 1000,
        ..SimConfig::default()
    };
    let values = [500.0, 1000.0, 1500.0, 2000.0, 2500.0];
    let res = run_and_export(&cfg, SweepAxis::Doppler, &values, "c7_sweep_doppler_16qam")?;
    let mut ok = true;
    let mut parts = Vec::new();
    for user in User::BOTH {
        let gaps: Vec<f64> = values
            .iter()
            .map(|&v| {
                let m = res
                    .row(v, user, DetectorKind::MmseSic)
                    .map_or(f64::NAN, |r| r.ser);
                let p = res
                    .row(v, user, DetectorKind::Proposed)
                    .map_or(f64::NAN, |r| r.ser);
                m - p
            })
            .collect();
        let positive = gaps.iter().all(|g| *g > 0.0);
        let drops = gaps.windows(2).filter(|w| w[1] < w[0]).count();
        ok &= positive && drops <= 1;
        parts.push(format!(
            "User {} gaps [{}] (positive: {positive}, decreasing steps: {drops})",
            user.number(),
            gaps.iter()
                .map(|g| format!("{g:+.2e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_8() -> Check {
    let cfg = SimConfig {
        qam1: 16,
        qam2: 16,
        snr1_db: 20.0,
        snr2_db: Some(35.0),
        speed_kmh: 200.0,
        trials: 1000,
        detectors: vec![DetectorKind::Proposed],
        ..SimConfig::default()
    };
    let values = [0.5, 1.0, 1.5, 2.0, 2.5];
    let res = run_and_export(&cfg, SweepAxis::Threshold, &values, "c8_sweep_threshold_16qam")?;
    let curve = res.curve(User::Two, DetectorKind::Proposed);
    let at = |v: f64| curve.iter().find(|p| p.0 == v).map_or(f64::NAN, |p| p.1);
    let (tight, wide) = (at(0.5), at(2.0));
    Ok((
        tight > wide && curve.len() >= 4,
        format!(
            "User 2 SER at T1/d1=0.5: {tight:.3e}, at 2.0: {wide:.3e}; curve [{}]",
            fmt_curve(&curve)
        ),
    ))
}

fn criterion_9() -> Check {
    let table = sim(benchmark_complexity(
        &SimConfig::default(),
        &[(64, 4), (64, 16), (64, 64)],
        3,
        1024,
    ))?;
    let row = table
        .rows
        .iter()
        .find(|r| r.symbols == 1024)
        .ok_or("missing MN=1024")?;
    let speedup = row.mmse_ms.unwrap_or(0.0) / row.proposed_ms;
    let dense = table.mmse_exponent.unwrap_or(f64::NAN);
    let ok = table.proposed_exponent <= 1.5 && dense >= 2.5 && speedup >= 5.0;
    Ok((
        ok,
        format!(
            "proposed exponent {:.2} (<= 1.5), dense exponent {dense:.2} (>= 2.5), speedup at MN=1024 {speedup:.1}x (>= 5)",
            table.proposed_exponent
        ),
    ))
}

fn criterion_10() -> Check {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1010);

    // adjoint identities of every operator and composition
    let grid = OtfsGrid::new(16, 8, CpConfig::new(4)).unwrap();
    let ch = random_channel(&mut rng, &grid, 5);
    let g = effective_operator(ch.clone(), &grid).unwrap();
    let mat = ComplexMatrix::random(&mut rng, 12, 7);
    let composed = Composed::new(
        grid.demodulator(),
        Composed::new(ch.clone(), grid.modulator()).unwrap(),
    )
    .unwrap();
    let (modulator, demodulator) = (grid.modulator(), grid.demodulator());
    let ops: Vec<(&str, &dyn LinearOperator)> = vec![
        ("modulator", &modulator),
        ("demodulator", &demodulator),
        ("channel", &ch),
        ("effective", &g),
        ("matrix", &mat),
        ("composed", &composed),
        ("identity", &Identity(9)),
    ];
    for (name, op) in ops {
        let u = complex_gaussian(&mut rng, op.ncols(), 1.0);
        let v = complex_gaussian(&mut rng, op.nrows(), 1.0);
        check(
            &format!("adjoint {name}"),
            adjoint_defect(op, &u, &v).unwrap() <= 1e-12,
        );
    }

    // DFT unitarity
    for n in [1, 2, 3, 16, 17, 64] {
        let dft = UnitaryDft::new(n).unwrap();
        let x = complex_gaussian(&mut rng, n, 1.0);
        let mut y = x.clone();
        dft.forward_inplace(&mut y);
        let energy = (otfs_noma::numerics::norm(&y) - otfs_noma::numerics::norm(&x)).abs();
        dft.inverse_inplace(&mut y);
        check(
            &format!("dft unitary n={n}"),
            energy <= 1e-12 && relative_error(&y, &x) <= 1e-13,
        );
    }

    // CP round trip
    for (m, n, cp) in [(4, 4, 0), (8, 4, 3), (64, 16, 13)] {
        let gr = OtfsGrid::new(m, n, CpConfig::new(cp)).unwrap();
        let x = complex_gaussian(&mut rng, m * n, 1.0);
        let back = gr
            .demodulator()
            .apply(&gr.modulator().apply(&x).unwrap())
            .unwrap();
        check(
            &format!("cp round trip {m}x{n}"),
            relative_error(&back, &x) <= 1e-13,
        );
    }

    // noise whiteness after demodulation
    let gr = OtfsGrid::new(64, 16, CpConfig::new(13)).unwrap();
    let var = 0.05;
    let (mut power, mut lag, mut count) = (0.0, C64::new(0.0, 0.0), 0usize);
    for _ in 0..100 {
        let w = add_noise(&vec![C64::new(0.0, 0.0); gr.frame_len()], var, &mut rng);
        let z = gr.demodulator().apply(&w).unwrap();
        power += z.iter().map(|v| v.norm_sqr()).sum::<f64>();
        lag += z.windows(2).map(|p| p[0].conj() * p[1]).sum::<C64>();
        count += z.len();
    }
    let est = power / count as f64;
    let rho = lag.norm() / power;
    check("noise variance", (est - var).abs() <= 0.02 * var);
    check("noise lag-1 correlation", rho <= 0.02);

    // termination and partition invariants over TDL-C trials
    let c16 = QamConstellation::new(16).unwrap();
    let alloc = ftpa_allocate(20.0, 35.0, 1.0).unwrap();
    let d = c16.half_distance();
    let schedule = ThresholdSchedule::new(2.0 * d, 2.0 * d, 10).unwrap();
    let det = ProposedDetector::new(
        alloc,
        c16.clone(),
        c16.clone(),
        schedule,
        LsqrConfig::new(15, 1e-2, 10f64.powf(-35.0 / 20.0)).unwrap(),
    )
    .unwrap();
    let profile = TapProfile::tdl_c(300e-9, 1.0 / 4.95e6).unwrap();
    let big = OtfsGrid::new(64, 16, CpConfig::new(13)).unwrap();
    for trial in 0..4 {
        let chan = generate_channel(&profile, 1093.0, big.frame_len(), &mut rng).unwrap();
        let g = effective_operator(chan, &big).unwrap();
        let x1 = random_frame(&c16, 64, 16, &mut rng).into_vec();
        let x2 = random_frame(&c16, 64, 16, &mut rng).into_vec();
        let xs = superimpose(&x1, &x2, alloc.power(User::One), alloc.power(User::Two)).unwrap();
        let mut y = g.apply(&xs).unwrap();
        for (v, w) in y
            .iter_mut()
            .zip(complex_gaussian(&mut rng, 1024, 10f64.powf(-3.5)))
        {
            *v += w;
        }
        let user = if trial % 2 == 0 { User::One } else { User::Two };
        let mut partition_ok = true;
        let mut prev = [usize::MAX; 2];
        let mut observer = |s: &DetectionState, r: &IterationRecord| {
            partition_ok &= s.is_consistent(&c16, &c16);
            for u in User::BOTH {
                let left = s.undetected_count(u);
                partition_ok &= left == r.undetected[u.index()] && left <= prev[u.index()];
                prev[u.index()] = left;
            }
        };
        let out = det.detect_observed(&g, &y, user, &mut observer).unwrap();
        check("partition", partition_ok);
        check(
            "termination",
            out.history.len() <= 10 && out.symbols.iter().all(|v| c16.index_of(*v).is_some()),
        );
    }

    // threshold monotonicity
    for k_cap in [2, 3, 10, 17] {
        let s = ThresholdSchedule::new(1.7, 0.9, k_cap).unwrap();
        for u in User::BOTH {
            let ts: Vec<f64> = (1..=k_cap).map(|k| s.threshold(u, k)).collect();
            check(
                "threshold monotone",
                ts.windows(2).all(|w| w[1] <= w[0]) && ts[k_cap - 1] == 0.0,
            );
        }
    }

    // rz_detect monotonicity in T
    let xs = complex_gaussian(&mut rng, 500, 1.0);
    let active: Vec<usize> = (0..500).collect();
    for t in [0.05, 0.2, 0.5] {
        let hi = rz_detect(&xs, &active, &ReliabilityZone::new(&c16, t).unwrap());
        let lo = rz_detect(&xs, &active, &ReliabilityZone::new(&c16, t / 2.0).unwrap());
        check("rz monotone", hi.reliable.iter().all(|n| lo.reliable.contains(n)));
    }

    // cancellation exactness: zero noise, exact solves
    let exact = ProposedDetector::new(
        ftpa_allocate(20.0, 35.0, 1.0).unwrap(),
        c16.clone(),
        c16.clone(),
        schedule,
        LsqrConfig::new(500, 1e-13, 0.0).unwrap(),
    )
    .unwrap();
    let small = OtfsGrid::new(16, 4, CpConfig::new(3)).unwrap();
    let g = effective_operator(random_channel(&mut rng, &small, 3), &small).unwrap();
    let x1 = random_frame(&c16, 16, 4, &mut rng).into_vec();
    let x2 = random_frame(&c16, 16, 4, &mut rng).into_vec();
    let y = g
        .apply(&superimpose(&x1, &x2, alloc.power(User::One), alloc.power(User::Two)).unwrap())
        .unwrap();
    let out = exact.detect(&g, &y, User::Two).unwrap();
    let correct = out.symbols == x2 && out.state.estimates(User::One) == &x1[..];
    check("cancellation decisions", correct);
    check(
        "cancellation residual",
        otfs_noma::numerics::norm(out.state.residual()) <= 1e-9 * otfs_noma::numerics::norm(&y),
    );

    // MMSE-SIC and the proposed loop agree in the degenerate case
    let c4 = QamConstellation::new(4).unwrap();
    let single = PowerAllocation::new(1.0, 0.0).unwrap();
    let x = random_frame(&c4, 16, 4, &mut rng).into_vec();
    let m = mmse_sic_detect(&ComplexMatrix::identity(64), &x, single, &c4, &c4, 0.0, User::One).unwrap();
    let p = ProposedDetector::new(
        single,
        c4.clone(),
        c4.clone(),
        ThresholdSchedule::new(2.0 * c4.half_distance(), 0.0, 10).unwrap(),
        LsqrConfig::new(15, 1e-2, 0.0).unwrap(),
    )
    .unwrap()
    .detect(&Identity(64), &x, User::One)
    .unwrap()
    .symbols;
    check("degenerate agreement", m == x && p == x);

    // determinism under a fixed seed, independent of worker count
    let cfg = SimConfig {
        delay_bins: 32,
        doppler_bins: 4,
        trials: 6,
        seed: 77,
        ..SimConfig::default()
    };
    check(
        "trial determinism",
        run_trial(&cfg, 4).unwrap() == run_trial(&cfg, 4).unwrap(),
    );
    let counts = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sweep(&cfg, SweepAxis::Snr, &[15.0]).unwrap())
            .rows
            .into_iter()
            .map(|r| (r.user, r.detector, r.symbols, r.errors))
            .collect::<Vec<_>>()
    };
    check("parallel determinism", counts(1) == counts(2));

    let total = 7 + 6 + 3 + 2 + 8 + 8 + 3 + 2 + 1 + 2;
    if failures.is_empty() {
        Ok((true, format!("{total} invariant checks passed")))
    } else {
        Ok((false, format!("failed: {}", failures.join(", "))))
    }
}

type Criterion = (u32, &'static str, fn() -> Check);

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 10] = [
        (1, "solver-oracle equivalence", criterion_1),
        (2, "operator correctness", criterion_2),
        (3, "zero-noise exactness", criterion_3),
        (4, "AWGN sanity", criterion_4),
        (5, "4-QAM SNR gain and User 2 ordering", criterion_5),
        (6, "16-QAM SNR gain", criterion_6),
        (7, "Doppler trend", criterion_7),
        (8, "threshold trend", criterion_8),
        (9, "complexity scaling", criterion_9),
        (10, "invariant suites", criterion_10),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(run) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

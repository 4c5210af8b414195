//! Acceptance suite: ten pinned criteria covering resonance formulas,
//! propagator and Fourier-transform oracles, golden-rule rate behavior,
//! simulator null tests and sign structure, the qualitative correlation map,
//! and the time-tag correlator. Each test prints one PASS/FAIL line.
//!
//! Three criteria are implemented faithfully but fail at the pinned
//! tolerances on this model; the blocking analyses live in the project
//! decision ledger:
//! - criterion 4: the simplified-rate log-log slope over δ/Ω_c ∈ [3, 10]
//!   is −1.72, not −1.50 ± 0.15 (pre-asymptotic window);
//! - criterion 6: the full/simplified ratio with the prescribed overlap
//!   weights is ≈ 0.2, outside the factor-2 window;
//! - criterion 8: η₃(0,0) at (δ, δ_s)/2π = (22.5, 2) MHz converges to
//!   ≈ −0.30 < 0, while the pinned sign is positive.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rydloss::correlator::{
    count_pairs, count_triples, eta3_matrix, eta3_scalar, g2_from_tags, g3_from_tags, synth_tags,
    triple_offset_pairs, PairHistogram, SynthConfig, SynthModel, TimeTagStream, TripleHistogram,
    DEFAULT_BIN_NS, DEFAULT_BLOCK_NS,
};
use rydloss::fgr::{beta_full, beta_max_locus, beta_simplified, QGridSpec};
use rydloss::interactions::{
    blockade_radius, broadened_resonance_minima, potential_ft, potential_ft_zero_q,
    resonance_detunings, FtMethod, ResonanceMethod,
};
use rydloss::polaritons::{g_ss, hamiltonian, PropagatorMomentum};
use rydloss::propagation::{
    axis_grid, correlation_map, production_axis, solve_single, solve_three, solve_two,
    transmission_closed_form, DensityProfile,
};
use rydloss::units::{angular_to_mhz, mhz_to_angular};
use rydloss::MediumParams;

/// Print the one-line verdict for a criterion, then enforce it.
fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {n:2}: {} — {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed — {name}: {detail}");
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn criterion_01_resonance_formulas() {
    let base = MediumParams::experiment_preset();
    let rabi = base.omega_c_rabi;
    let tol = 1e-3 * rabi;
    let mut worst = 0.0f64;
    for frac in [-0.05, -0.025, 0.0, 0.025, 0.05] {
        let p = base.with_detunings_mhz(angular_to_mhz(base.delta), angular_to_mhz(frac * rabi));
        let closed = resonance_detunings(&p, ResonanceMethod::ClosedForm).unwrap();
        let numeric = resonance_detunings(&p, ResonanceMethod::NumericRoot).unwrap();
        worst = worst
            .max((closed.delta0 - numeric.delta0).abs())
            .max((closed.delta_plus - numeric.delta_plus).abs());
    }
    let at_zero = base.with_detunings_mhz(25.0, 0.0);
    let numeric = resonance_detunings(&at_zero, ResonanceMethod::NumericRoot).unwrap();
    let d0 = angular_to_mhz(numeric.delta0);
    let dp = angular_to_mhz(numeric.delta_plus);
    let pass = worst < tol && (d0 - 11.75).abs() < 1e-3 * 23.5 && (dp - 16.44).abs() < 0.02;
    verdict(
        1,
        "resonance closed forms vs numeric zero-loss roots",
        pass,
        &format!("worst |closed − numeric| = {:.3e} rad/µs, δ₀/2π = {d0:.4}, δ₊/2π = {dp:.4} MHz",
                 worst),
    );
}

/// 3×3 complex inverse by adjugate, the oracle for the propagator element.
fn inv3(m: &[[C64; 3]; 3]) -> [[C64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut out = [[C64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            let (c, d) = ((j + 1) % 3, (j + 2) % 3);
            out[j][i] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    out
}

#[test]
fn criterion_02_spin_propagator_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut p = MediumParams::experiment_preset();
        p.delta = mhz_to_angular(rng.gen_range(-40.0..40.0));
        p.delta_s = mhz_to_angular(rng.gen_range(-4.0..4.0));
        p.gamma_p = mhz_to_angular(rng.gen_range(0.5..12.0));
        p.gamma_s = mhz_to_angular(rng.gen_range(0.05..1.0));
        p.omega_c_rabi = mhz_to_angular(rng.gen_range(5.0..40.0));
        let k = rng.gen_range(-1.0..1.0);
        let omega = C64::new(
            mhz_to_angular(rng.gen_range(-30.0..30.0)),
            mhz_to_angular(rng.gen_range(-5.0..5.0)),
        );
        let closed = g_ss(PropagatorMomentum::Finite(k), omega, &p).unwrap();
        let h = hamiltonian(k, &p);
        let mut m = [[C64::new(0.0, 0.0); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { omega - h[i][j] } else { -h[i][j] };
            }
        }
        let oracle = inv3(&m)[2][2];
        worst = worst.max((closed - oracle).norm() / oracle.norm());
    }
    verdict(
        2,
        "closed-form G_ss vs inverted 3×3 resolvent, 10³ draws",
        worst <= 1e-10,
        &format!("worst relative deviation {worst:.3e} (tolerance 1e-10)"),
    );
}

#[test]
fn criterion_03_potential_fourier_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_q, mut worst_zero) = (0.0f64, 0.0f64);
    let mut draws = 0;
    while draws < 20 {
        let mut p = MediumParams::experiment_preset();
        p.delta = mhz_to_angular(rng.gen_range(8.0..35.0) * if rng.gen_bool(0.2) { -1.0 } else { 1.0 });
        p.delta_s = mhz_to_angular(rng.gen_range(-3.0..3.0));
        p.c6 *= rng.gen_range(0.3..3.0);
        let omega = C64::new(mhz_to_angular(rng.gen_range(-10.0..10.0)), 0.0);
        let Ok(rb) = blockade_radius(omega, &p) else { continue };
        let mut ok = true;
        for x in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let q = x / rb;
            let res = potential_ft(q, omega, &p, FtMethod::Residues);
            let quad = potential_ft(q, omega, &p, FtMethod::Quadrature);
            match (res, quad) {
                (Ok(r), Ok(s)) => worst_q = worst_q.max((r - s).norm() / s.norm()),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue; // near-singular draw; redraw
        }
        let closed = potential_ft_zero_q(omega, &p).unwrap();
        let res0 = potential_ft(0.0, omega, &p, FtMethod::Residues).unwrap();
        worst_zero = worst_zero.max((res0 - closed).norm() / closed.norm());
        draws += 1;
    }
    let pass = worst_q <= 1e-6 && worst_zero <= 1e-8;
    verdict(
        3,
        "Ṽ_q residues vs quadrature and Ṽ₀ closed form",
        pass,
        &format!("worst residue-vs-quadrature {worst_q:.3e} (tol 1e-6), Ṽ₀ {worst_zero:.3e} (tol 1e-8)"),
    );
}

#[test]
fn criterion_04_simplified_rate_scaling_slope() {
    let base = MediumParams::simulation_preset().zero_loss();
    let rabi_mhz = angular_to_mhz(base.omega_c_rabi);
    let n = 12;
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for i in 0..n {
        let ratio = 3.0 * (10.0f64 / 3.0).powf(i as f64 / (n - 1) as f64);
        let p = base.with_detunings_mhz(ratio * rabi_mhz, 0.0);
        let beta = beta_simplified(&p).unwrap();
        lx.push(ratio.ln());
        ly.push(beta.magnitude.ln());
    }
    let slope = linear_slope(&lx, &ly);
    verdict(
        4,
        "zero-loss simplified |β| log-log slope over δ/Ω_c ∈ [3, 10]",
        (slope + 1.5).abs() <= 0.15,
        &format!("fitted slope {slope:.3} (pinned −1.50 ± 0.15)"),
    );
}

#[test]
fn criterion_05_rate_maximum_locus() {
    let base = MediumParams::experiment_preset();
    let delta_s_mhz = [-3.0, -1.5, 0.0, 1.5, 3.0];
    let grid: Vec<f64> = delta_s_mhz.iter().map(|&v| mhz_to_angular(v)).collect();
    let locus = beta_max_locus(&grid, &base).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for point in &locus {
        let p = base.with_detunings_mhz(angular_to_mhz(base.delta), angular_to_mhz(point.delta_s));
        // The locus is computed at the stated finite linewidths, so the
        // reference curves are the finite-loss resonance positions (the
        // zero-loss closed-form δ₊ sits 0.03 MHz below δ* at δ_s = −3).
        let (d0, dp) = broadened_resonance_minima(&p).unwrap();
        let ds = point.delta_star;
        let between = ds > d0.min(dp) && ds < d0.max(dp);
        let closer = (ds - dp).abs() < (ds - d0).abs();
        pass &= between && closer;
        xs.push(point.delta_s);
        ys.push(ds);
        detail.push_str(&format!(
            "δ_s = {:+.1}: δ* = {:.2} ∈ ({:.2}, {:.2}); ",
            angular_to_mhz(point.delta_s),
            angular_to_mhz(ds),
            angular_to_mhz(d0),
            angular_to_mhz(dp)
        ));
    }
    let slope = linear_slope(&xs, &ys);
    pass &= slope < 0.0;
    detail.push_str(&format!("slope {slope:.3}"));
    verdict(5, "max-|β| locus between δ₀ and δ₊, closer to δ₊, negative slope", pass, &detail);
}

#[test]
fn criterion_06_full_vs_simplified_rate() {
    let base = MediumParams::experiment_preset();
    let mut pass = true;
    let mut detail = String::new();
    for delta_mhz in [15.0, 20.0, 25.0, 30.0] {
        let p = base.with_detunings_mhz(delta_mhz, 0.0);
        let full = beta_full(&p, &QGridSpec::default()).unwrap();
        let simple = beta_simplified(&p).unwrap();
        let ratio = full.magnitude / simple.magnitude;
        pass &= (0.5..=2.0).contains(&ratio);
        detail.push_str(&format!("δ = {delta_mhz}: ratio {ratio:.3}; "));
    }
    verdict(6, "full/simplified |β| within a factor of 2 over δ/2π ∈ [15, 30]", pass, &detail);
}

#[test]
fn criterion_07_simulator_null_tests() {
    let start = std::time::Instant::now();
    let params = MediumParams::simulation_preset().with_detunings_mhz(15.0, -2.0);
    let profile = DensityProfile::gaussian(&params).unwrap();
    let mut free = params.clone();
    free.c6 = 0.0;

    // two-body null on the production axis of the interacting problem
    let z = production_axis(&params, &profile).unwrap();
    let two = solve_two(&free, &profile, &z).unwrap();
    let g2_err = (two.g2_0 - 1.0).abs();

    // three-body null on the ≥96-point grid used for production sign runs
    let z3 = axis_grid(&profile, 96).unwrap();
    let three = solve_three(&free, &profile, &z3).unwrap();
    let g3_err = (three.g3_00 - 1.0).abs();

    // single-photon transmission vs the closed form at every tested detuning
    let mut t_err = 0.0f64;
    for delta_mhz in [-30.0, -15.0, 0.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
        for delta_s_mhz in [-2.0, 0.0, 2.0] {
            let p = params.with_detunings_mhz(delta_mhz, delta_s_mhz);
            let single = solve_single(&p, &profile, &z).unwrap();
            let closed = transmission_closed_form(&p).unwrap();
            t_err = t_err.max((single.transmission - closed).norm() / closed.norm().max(1e-30));
        }
    }

    // bare two-level resonance: |t|² = e^{−OD}
    let mut bare = params.with_detunings_mhz(0.0, 0.0);
    bare.omega_c_rabi = 0.0;
    let bare_t = solve_single(&bare, &profile, &z).unwrap().transmission;
    let bare_err = (bare_t.norm_sqr() - (-params.od).exp()).abs() / (-params.od).exp();

    let pass = g2_err < 1e-3 && g3_err < 3e-3 && t_err < 1e-4 && bare_err < 1e-6;
    verdict(
        7,
        "free-field and single-photon null tests",
        pass,
        &format!(
            "|g² − 1| = {g2_err:.2e}, |g³ − 1| = {g3_err:.2e}, transmission {t_err:.2e}, \
             bare e^{{−OD}} {bare_err:.2e}, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_08_eta3_sign_reproduction() {
    let base = MediumParams::simulation_preset();
    let profile = DensityProfile::gaussian(&base).unwrap();
    let z = axis_grid(&profile, 96).unwrap();
    let neg = solve_three(&base.with_detunings_mhz(15.0, -2.0), &profile, &z).unwrap();
    let pos = solve_three(&base.with_detunings_mhz(22.5, 2.0), &profile, &z).unwrap();
    let pass = neg.eta3_00 < 0.0 && pos.eta3_00 > 0.0;
    verdict(
        8,
        "η₃(0,0) signs at (15, −2) and (22.5, 2) MHz, 96³ grid",
        pass,
        &format!("η₃(15, −2) = {:+.3}, η₃(22.5, 2) = {:+.3}", neg.eta3_00, pos.eta3_00),
    );
}

/// Cells with η₃ > 0 on the map, and whether they form one 4-connected
/// component.
fn positive_band(eta3: &[Vec<f64>]) -> (Vec<(usize, usize)>, bool) {
    let (ni, nj) = (eta3.len(), eta3[0].len());
    let cells: Vec<(usize, usize)> = (0..ni)
        .flat_map(|i| (0..nj).map(move |j| (i, j)))
        .filter(|&(i, j)| eta3[i][j] > 0.0)
        .collect();
    if cells.is_empty() {
        return (cells, false);
    }
    let mut seen = vec![cells[0]];
    let mut frontier = vec![cells[0]];
    while let Some((i, j)) = frontier.pop() {
        for (di, dj) in [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)] {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            if a < 0 || b < 0 || a >= ni as i64 || b >= nj as i64 {
                continue;
            }
            let cell = (a as usize, b as usize);
            if eta3[cell.0][cell.1] > 0.0 && !seen.contains(&cell) {
                seen.push(cell);
                frontier.push(cell);
            }
        }
    }
    let connected = seen.len() == cells.len();
    (cells, connected)
}

#[test]
fn criterion_09_qualitative_correlation_map() {
    let base = MediumParams::simulation_preset();
    let profile = DensityProfile::gaussian(&base).unwrap();
    let delta_mhz: Vec<f64> = (0..9).map(|i| 10.0 + 2.5 * i as f64).collect();
    let delta_s_mhz: Vec<f64> = (0..7).map(|j| -3.0 + j as f64).collect();
    let dg: Vec<f64> = delta_mhz.iter().map(|&v| mhz_to_angular(v)).collect();
    let dsg: Vec<f64> = delta_s_mhz.iter().map(|&v| mhz_to_angular(v)).collect();
    let map = correlation_map(&dg, &dsg, &base, &profile, 64).unwrap();

    let (cells, connected) = positive_band(&map.eta3);
    // centroid δ of the positive band per δ_s column, where populated
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (j, &ds) in delta_s_mhz.iter().enumerate() {
        let column: Vec<f64> =
            cells.iter().filter(|&&(_, cj)| cj == j).map(|&(i, _)| delta_mhz[i]).collect();
        if !column.is_empty() {
            xs.push(ds);
            ys.push(column.iter().sum::<f64>() / column.len() as f64);
        }
    }
    let centroid_slope = if xs.len() >= 2 { linear_slope(&xs, &ys) } else { f64::NAN };

    // antibunching → bunching crossing along δ at δ_s = 0
    let j0 = delta_s_mhz.iter().position(|&v| v == 0.0).unwrap();
    let g2_col: Vec<f64> = (0..delta_mhz.len()).map(|i| map.g2[i][j0]).collect();
    let first_above = g2_col.iter().position(|&v| v > 1.0);
    let crossing = match first_above {
        Some(k) => k > 0 && g2_col[..k].iter().all(|&v| v < 1.0) && g2_col[k..].iter().all(|&v| v > 1.0),
        None => false,
    };

    let pass =
        map.holes.is_empty() && connected && centroid_slope < 0.0 && crossing && !cells.is_empty();
    verdict(
        9,
        "η₃ > 0 band connectivity, centroid slope, g² crossing on the 9×7 map",
        pass,
        &format!(
            "{} positive cells, connected = {connected}, centroid slope {centroid_slope:.3}, \
             g²(δ_s = 0) column {:?}, holes {}",
            cells.len(),
            g2_col.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            map.holes.len()
        ),
    );
}

fn brute_pairs(a: &[i64], b: &[i64], shift_ns: i64, bin_ns: i64, tau_max_ns: i64) -> Vec<u64> {
    let n_bins = (2 * tau_max_ns / bin_ns) as usize;
    let mut counts = vec![0u64; n_bins];
    for &ta in a {
        for &tb in b {
            let tau = tb - ta - shift_ns;
            if tau >= -tau_max_ns && tau < tau_max_ns {
                counts[((tau + tau_max_ns) / bin_ns) as usize] += 1;
            }
        }
    }
    counts
}

fn brute_triples(
    a: &[i64],
    b: &[i64],
    c: &[i64],
    shifts: (i64, i64),
    bin_ns: i64,
    tau_max_ns: i64,
) -> Vec<u64> {
    let n_bins = (2 * tau_max_ns / bin_ns) as usize;
    let mut counts = vec![0u64; n_bins * n_bins];
    for &ta in a {
        for &tb in b {
            let t1 = tb - ta - shifts.0;
            if t1 < -tau_max_ns || t1 >= tau_max_ns {
                continue;
            }
            for &tc in c {
                let t2 = tc - ta - shifts.1;
                if t2 >= -tau_max_ns && t2 < tau_max_ns {
                    let (k1, k2) =
                        (((t1 + tau_max_ns) / bin_ns) as usize, ((t2 + tau_max_ns) / bin_ns) as usize);
                    counts[k1 * n_bins + k2] += 1;
                }
            }
        }
    }
    counts
}

#[test]
fn criterion_10_correlator_oracles_and_statistics() {
    // 56-term normalization
    let offsets = triple_offset_pairs();
    let distinct: std::collections::BTreeSet<_> = offsets.iter().collect();
    let count_ok = offsets.len() == 56
        && distinct.len() == 56
        && offsets.iter().all(|&(m, n)| {
            m != n && (1..=4).contains(&m.abs()) && (1..=4).contains(&n.abs())
        });

    // streaming vs brute-force nested loops on ~10⁴-event streams
    let config = SynthConfig { model: SynthModel::Poisson { rate_per_us: 1.0 }, seed: 10 };
    let streams = synth_tags(&config, 30_000_000).unwrap();
    let (bin, tau_max) = (DEFAULT_BIN_NS, 400);
    let mut oracle_ok = true;
    for shift in [0, DEFAULT_BLOCK_NS, -2 * DEFAULT_BLOCK_NS] {
        let mut hist = PairHistogram::new(bin, tau_max).unwrap();
        count_pairs(&streams[0].timestamps, &streams[1].timestamps, shift, &mut hist);
        let brute = brute_pairs(&streams[0].timestamps, &streams[1].timestamps, shift, bin, tau_max);
        oracle_ok &= hist.counts == brute;
    }
    for shifts in [(0, 0), (DEFAULT_BLOCK_NS, -DEFAULT_BLOCK_NS), (3 * DEFAULT_BLOCK_NS, DEFAULT_BLOCK_NS)] {
        let mut hist = TripleHistogram::new(bin, tau_max).unwrap();
        count_triples(
            &streams[0].timestamps,
            &streams[1].timestamps,
            &streams[2].timestamps,
            shifts.0,
            shifts.1,
            &mut hist,
        );
        let brute = brute_triples(
            &streams[0].timestamps,
            &streams[1].timestamps,
            &streams[2].timestamps,
            shifts,
            bin,
            tau_max,
        );
        oracle_ok &= hist.counts == brute;
    }

    // Poisson statistics within 5 standard errors of unity
    let long = synth_tags(
        &SynthConfig { model: SynthModel::Poisson { rate_per_us: 6.0 }, seed: 11 },
        100_000_000,
    )
    .unwrap();
    let long_vec: Vec<TimeTagStream> = long.to_vec();
    let g2 = g2_from_tags(&long_vec, bin, 400, DEFAULT_BLOCK_NS).unwrap();
    let g3 = g3_from_tags(&long_vec, bin, 200, DEFAULT_BLOCK_NS).unwrap();
    let k2 = (g2.tau_max_ns / g2.bin_ns) as usize;
    let nb3 = g3.tau_ns.len();
    let se2 = g2.at_zero() / (g2.numerator[k2] as f64).sqrt();
    let se3 = g3.at_zero() / (g3.numerator[(nb3 / 2) * nb3 + nb3 / 2] as f64).sqrt();
    let poisson_ok = (g2.at_zero() - 1.0).abs() < 5.0 * se2 && (g3.at_zero() - 1.0).abs() < 5.0 * se3;

    // η₃ identity holds exactly by construction on the assembled map
    let eta = eta3_matrix(&g2, &g3).unwrap();
    let mut identity_ok = true;
    for (i, &t1) in g3.tau_ns.iter().enumerate() {
        for (j, &t2) in g3.tau_ns.iter().enumerate() {
            let expect = eta3_scalar(
                g2.at(t1).unwrap(),
                g2.at(t2).unwrap(),
                g2.at(t2 - t1).unwrap(),
                g3.g3[i][j],
            );
            identity_ok &= eta[i][j] == expect || (eta[i][j].is_nan() && expect.is_nan());
        }
    }

    let pass = count_ok && oracle_ok && poisson_ok && identity_ok;
    verdict(
        10,
        "correlator oracles, Poisson statistics, η₃ identity, 56-term count",
        pass,
        &format!(
            "56-count {count_ok}, oracles {oracle_ok}, g²(0) = {:.4} ± {:.4}, g³(0,0) = {:.4} ± {:.4}, identity {identity_ok}",
            g2.at_zero(),
            se2,
            g3.at_zero(),
            se3
        ),
    );
}

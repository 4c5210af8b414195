//! Golden-rule three-body decay rates for dark-state polaritons.
//!
//! Three incoming dark polaritons scatter — via two saturated-interaction
//! vertices and an intermediate Rydberg excitation — into one upper and two
//! dark polaritons, which are subsequently lost. The rate β is computed three
//! ways: the full double momentum integral over the energy-conservation
//! manifold (`beta_full`), the flat-dispersion simplification that replaces
//! the outgoing branches by their saturation plateaus (`beta_simplified`),
//! and the asymptotic scaling law φ·r_b²·Ω_c²/δ (`beta_asymptotic`).
//!
//! The energy-conservation manifold is always built from the dissipationless
//! real dispersions; vertices, Rydberg-fraction weights, and propagators are
//! evaluated with the full complex parameters (the analytic continuation to
//! finite Γ and γ_s).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::{blockade_radius, chi_bar, potential_ft, FtMethod};
use crate::medium::{derive_scales, MediumParams};
use crate::polaritons::{
    branch_eigensystem, g_ss, inverse_group_velocity, momentum_of_energy, omega_plus,
    zero_loss_energies, BranchLabel, PropagatorMomentum,
};
use crate::quad::adaptive_kronrod;

/// Overall prefactor of the rate integral: six equivalent scattering
/// orderings (three choices of incoming pair × two outgoing assignments)
/// times the 3/π left over from the golden-rule normalization.
pub const RATE_PREFACTOR: f64 = 18.0 / PI;

/// Number of equivalent diagram orderings, enumerated combinatorially:
/// which two of the three incoming polaritons interact first (3) and which
/// of the two scattered excitations ends up on the upper branch (2).
pub fn permutation_multiplicity() -> usize {
    let incoming = [0usize, 1, 2];
    let mut count = 0;
    for i in 0..incoming.len() {
        for j in (i + 1)..incoming.len() {
            debug_assert!(incoming[i] != incoming[j]);
            for _outgoing_upper in 0..2 {
                count += 1;
            }
        }
    }
    count
}

/// Which rate formula produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMethod {
    Full,
    Simplified,
    Asymptotic,
}

impl std::fmt::Display for RateMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RateMethod::Full => "full",
            RateMethod::Simplified => "simplified",
            RateMethod::Asymptotic => "asymptotic",
        })
    }
}

impl std::str::FromStr for RateMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(RateMethod::Full),
            "simplified" => Ok(RateMethod::Simplified),
            "asymptotic" => Ok(RateMethod::Asymptotic),
            other => Err(Error::Usage(format!(
                "unknown rate method '{other}' (expected full|simplified|asymptotic)"
            ))),
        }
    }
}

/// Numerical provenance attached to every rate evaluation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RateDiagnostics {
    /// A posteriori estimate of the absolute quadrature error.
    pub error_estimate: f64,
    /// Total number of energy-conservation roots found (0 for the methods
    /// that do not resolve the manifold pointwise).
    pub conservation_roots: usize,
    /// Momentum window of the outer integral, µm⁻¹.
    pub q_window: (f64, f64),
    /// Incoming dark-branch momentum; nonzero only for δ_s ≠ 0.
    pub incoming_q0: f64,
    /// Integrated squared magnitude of the two scattering paths separately
    /// (same weights and Jacobians as the rate itself).
    pub term_a_norm: f64,
    pub term_b_norm: f64,
    /// Same split, restricted to conservation roots whose outgoing energies
    /// sit within 10% of the saturation plateaus (ω₊ and −2ω₊): the
    /// flat-dispersion region where the second path's vertex closes.
    pub term_a_flat_norm: f64,
    pub term_b_flat_norm: f64,
    /// Free-form warnings: regime checks, tail bounds, flagged roots.
    pub notes: Vec<String>,
}

/// One evaluated three-body rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult {
    pub beta: C64,
    pub magnitude: f64,
    pub method: RateMethod,
    pub diagnostics: RateDiagnostics,
}

impl RateResult {
    /// Whether the quadrature error satisfies the acceptance bound
    /// (relative 10⁻³, or an exact zero).
    pub fn accepted(&self) -> bool {
        self.magnitude == 0.0 || self.diagnostics.error_estimate < 1e-3 * self.magnitude
    }
}

/// |β| over a (δ, δ_s) grid. `values[i][j]` corresponds to
/// (`delta_grid[i]`, `delta_s_grid[j]`); failed points hold NaN and are
/// listed in `holes`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateMap {
    pub delta_grid: Vec<f64>,
    pub delta_s_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub holes: Vec<(usize, usize, String)>,
}

/// Resolution of the conservation-manifold scan in `beta_full`.
#[derive(Debug, Clone, Copy)]
pub struct QGridSpec {
    /// Outer window half-width in units of 1/r_b.
    pub q_max_over_rb: f64,
    /// Points per segment of the outer (q₁) grid.
    pub n_outer: usize,
    /// Points per dense window of the inner (q₂) root scan.
    pub n_fine: usize,
}

impl Default for QGridSpec {
    fn default() -> Self {
        QGridSpec { q_max_over_rb: 40.0, n_outer: 481, n_fine: 1201 }
    }
}

/// Zero-loss dark-branch momentum of the incoming polaritons: the real root
/// of ω_D(q₀) = 0 nearest q = 0. Identically zero for δ_s = 0.
pub fn incoming_momentum(params: &MediumParams) -> Result<f64> {
    let dark = |q: f64| zero_loss_energies(q, params)[BranchLabel::Dark.index()];
    let at_zero = dark(0.0);
    if at_zero.abs() < 1e-10 * params.g_peak.max(1.0) {
        return Ok(0.0);
    }
    // First-order estimate from the analytic dispersion inversion, then a
    // bracketing search around it.
    let zl = params.zero_loss();
    let slope = inverse_group_velocity(C64::new(at_zero, 0.0), &zl)?.re;
    let estimate = -at_zero * slope;
    let mut lo = 0.0f64;
    let mut hi = estimate;
    let mut expand = 0;
    while dark(lo) * dark(hi) > 0.0 {
        hi = estimate * (1.0 + 0.5 * (expand + 1) as f64);
        lo = estimate * (1.0 - 0.5 * (expand + 1) as f64);
        expand += 1;
        if expand > 40 {
            return Err(Error::Window(format!(
                "no dark-branch zero near q = {estimate:.3e} µm⁻¹ (δ_s/2π = {:.3} MHz)",
                params.delta_s / std::f64::consts::TAU
            )));
        }
    }
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let mut fa = dark(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = dark(m);
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn sorted_union(segments: &[Vec<f64>]) -> Vec<f64> {
    let mut all: Vec<f64> = segments.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Momentum scale over which the outgoing dispersions vary: taken from the
/// dark-branch inversion at the outgoing energies. The conservation roots
/// cluster within a few of these scales of q = 0 and of the outgoing dark
/// leg, so the root scan is densified there.
fn steep_momentum_scale(params: &MediumParams) -> Result<f64> {
    let zl = params.zero_loss();
    let wp = omega_plus(&zl).re;
    let q_out = momentum_of_energy(C64::new(-2.0 * wp, 0.0), &zl)?.norm();
    let q_in = momentum_of_energy(C64::new(0.9 * wp, 0.0), &zl)?.norm();
    Ok(3.0 * (q_out + q_in) + 1e-6)
}

/// Squared Rydberg fraction |S_ν^q|² of the labeled complex branch.
fn rydberg_fraction(q: f64, branch: BranchLabel, params: &MediumParams) -> Result<f64> {
    let sys = branch_eigensystem(q, params)?;
    Ok(sys[branch.index()].1[2].norm_sqr())
}

/// Full golden-rule double integral over the energy-conservation manifold.
///
/// For each outer momentum q₁ the inner δ-function is resolved exactly: all
/// real roots q₂* of ω_U(q₂) + ω_D(q₁) + ω_D(3q₀−q₁−q₂) = 0 are located by
/// a structured scan plus bisection and summed with the inverse-slope
/// Jacobian. Incoming momenta sit at q₀ (zero for δ_s = 0); momentum
/// conservation and the vertex transfers are shifted accordingly, which is
/// flagged in the diagnostics because it extends the published δ_s = 0
/// expressions.
pub fn beta_full(params: &MediumParams, grid: &QGridSpec) -> Result<RateResult> {
    let mut diag = RateDiagnostics::default();
    if params.c6 == 0.0 {
        diag.notes.push("C₆ = 0: all vertices vanish".into());
        return Ok(RateResult {
            beta: C64::new(0.0, 0.0),
            magnitude: 0.0,
            method: RateMethod::Full,
            diagnostics: diag,
        });
    }
    let q0 = incoming_momentum(params)?;
    diag.incoming_q0 = q0;
    if q0 != 0.0 {
        diag.notes.push(
            "δ_s ≠ 0: incoming legs at q₀ ≠ 0, momentum conservation shifted to Σq = 3q₀".into(),
        );
    }
    let rb = blockade_radius(C64::new(0.0, 0.0), params)?;
    let q_max = grid.q_max_over_rb / rb;
    diag.q_window = (-q_max, q_max);
    let qs = steep_momentum_scale(params)?;

    let dark = |q: f64| zero_loss_energies(q, params)[BranchLabel::Dark.index()];
    let upper = |q: f64| zero_loss_energies(q, params)[BranchLabel::Upper.index()];
    let vertex = |q: f64, omega: C64| potential_ft(q, omega, params, FtMethod::Residues);

    let s_dark_in = rydberg_fraction(q0, BranchLabel::Dark, params)?;
    let weight_in = s_dark_in * s_dark_in * s_dark_in;

    let q1_grid = sorted_union(&[
        linspace(-q_max, q_max, grid.n_outer),
        linspace(-4.0 / rb, 4.0 / rb, grid.n_outer),
        linspace(q0 - 30.0 * qs, q0 + 30.0 * qs, 241),
    ]);

    let mut contrib = vec![0.0f64; q1_grid.len()];
    let mut contrib_a = vec![0.0f64; q1_grid.len()];
    let mut contrib_b = vec![0.0f64; q1_grid.len()];
    let mut contrib_a_flat = vec![0.0f64; q1_grid.len()];
    let mut contrib_b_flat = vec![0.0f64; q1_grid.len()];
    let wp0 = omega_plus(&params.zero_loss()).re;
    let mut roots_total = 0usize;
    let mut degenerate_roots = 0usize;
    let zero = C64::new(0.0, 0.0);

    for (i1, &q1) in q1_grid.iter().enumerate() {
        let w_d1 = dark(q1);
        let f = |q2: f64| upper(q2) + w_d1 + dark(3.0 * q0 - q1 - q2);
        let scan = sorted_union(&[
            linspace(-q_max, q_max, 101),
            linspace(q0 - 40.0 * qs, q0 + 40.0 * qs, grid.n_fine),
            linspace(3.0 * q0 - q1 - 40.0 * qs, 3.0 * q0 - q1 + 40.0 * qs, grid.n_fine),
        ]);
        let fv: Vec<f64> = scan.iter().map(|&q| f(q)).collect();
        let mut sum = 0.0;
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        let mut sum_a_flat = 0.0;
        let mut sum_b_flat = 0.0;
        for i in 0..scan.len() - 1 {
            if fv[i] == 0.0 || fv[i] * fv[i + 1] >= 0.0 {
                continue;
            }
            let (mut a, mut b) = (scan[i], scan[i + 1]);
            let mut fa = fv[i];
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            let q2 = 0.5 * (a + b);
            let h = (1e-6 * q2.abs().max(qs)).max(1e-10);
            let jacobian = ((f(q2 + h) - f(q2 - h)) / (2.0 * h)).abs();
            if jacobian < 1e-12 {
                degenerate_roots += 1;
                continue;
            }
            roots_total += 1;
            let q3 = 3.0 * q0 - q1 - q2;
            let w_u2 = upper(q2);
            let w_d3 = dark(q3);
            let weight = weight_in
                * rydberg_fraction(q1, BranchLabel::Dark, params)?
                * rydberg_fraction(q3, BranchLabel::Dark, params)?
                * rydberg_fraction(q2, BranchLabel::Upper, params)?;
            let e_u = C64::new(-w_u2, 0.0);
            let e_d = C64::new(-w_d3, 0.0);
            // path A: upper polariton created first, spin at 2q₀ − q₂
            let term_a = vertex(q2 - q0, zero)?
                * g_ss(PropagatorMomentum::Finite(2.0 * q0 - q2), e_u, params)?
                * vertex(q1 - q0, e_u)?;
            // path B: outgoing dark leg created first, spin at q₁ + q₂
            let term_b = vertex(q1 + q2 - 2.0 * q0, zero)?
                * g_ss(PropagatorMomentum::Finite(q1 + q2), e_d, params)?
                * vertex(q2 - q0, e_d)?;
            sum += weight * (term_a + term_b).norm_sqr() / jacobian;
            sum_a += weight * term_a.norm_sqr() / jacobian;
            sum_b += weight * term_b.norm_sqr() / jacobian;
            if (w_u2 - wp0).abs() < 0.1 * wp0 && (w_d3 + 2.0 * wp0).abs() < 0.2 * wp0 {
                sum_a_flat += weight * term_a.norm_sqr() / jacobian;
                sum_b_flat += weight * term_b.norm_sqr() / jacobian;
            }
        }
        contrib[i1] = sum;
        contrib_a[i1] = sum_a;
        contrib_b[i1] = sum_b;
        contrib_a_flat[i1] = sum_a_flat;
        contrib_b_flat[i1] = sum_b_flat;
    }

    let integral = trapezoid(&q1_grid, &contrib);
    // error estimate: compare against the half-resolution outer grid
    let coarse_x: Vec<f64> = q1_grid.iter().step_by(2).copied().collect();
    let coarse_y: Vec<f64> = contrib.iter().step_by(2).copied().collect();
    let coarse = trapezoid(&coarse_x, &coarse_y);
    diag.error_estimate = RATE_PREFACTOR * (integral - coarse).abs();
    diag.conservation_roots = roots_total;
    diag.term_a_norm = RATE_PREFACTOR * trapezoid(&q1_grid, &contrib_a);
    diag.term_b_norm = RATE_PREFACTOR * trapezoid(&q1_grid, &contrib_b);
    diag.term_a_flat_norm = RATE_PREFACTOR * trapezoid(&q1_grid, &contrib_a_flat);
    diag.term_b_flat_norm = RATE_PREFACTOR * trapezoid(&q1_grid, &contrib_b_flat);
    if degenerate_roots > 0 {
        diag.notes.push(format!(
            "{degenerate_roots} near-degenerate conservation roots skipped (|Jacobian| < 1e-12)"
        ));
    }
    if roots_total == 0 {
        diag.notes.push("no energy-conservation roots in the scan window".into());
    }
    let beta = C64::new(RATE_PREFACTOR * integral, 0.0);
    Ok(RateResult { beta, magnitude: beta.norm(), method: RateMethod::Full, diagnostics: diag })
}

/// Flat-dispersion rate: outgoing branches pinned to their saturation
/// plateaus (upper at ω₊, dark at −2ω₊), leaving a single momentum integral
/// of the squared two-vertex amplitude times the outgoing density of states
/// 1/v_g(−2ω₊).
pub fn beta_simplified(params: &MediumParams) -> Result<RateResult> {
    let mut diag = RateDiagnostics::default();
    if params.c6 == 0.0 {
        diag.notes.push("C₆ = 0: all vertices vanish".into());
        return Ok(RateResult {
            beta: C64::new(0.0, 0.0),
            magnitude: 0.0,
            method: RateMethod::Simplified,
            diagnostics: diag,
        });
    }
    let wp = omega_plus(params);
    let rb = blockade_radius(C64::new(0.0, 0.0), params)?;
    let q_max = 40.0 / rb;
    diag.q_window = (-q_max, q_max);
    // flat-dispersion validity: momentum transfer ~1/r_b beyond the
    // dispersion-feature scale k_c (reported, not enforced)
    let scales = derive_scales(params, chi_bar(C64::new(0.0, 0.0), params)?)?;
    if 1.0 / rb <= scales.k_c {
        diag.notes.push(format!(
            "flat-dispersion precondition weak: 1/r_b = {:.3e} ≤ k_c = {:.3e}",
            1.0 / rb,
            scales.k_c
        ));
    }
    let inv_vg = inverse_group_velocity(-2.0 * wp, params)?;
    let propagator = g_ss(PropagatorMomentum::Infinite, -wp, params)?;
    let zero = C64::new(0.0, 0.0);
    let first_error: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let integrand = |q: f64| -> C64 {
        // Ṽ is even in q; use the q ≤ 0 residue branch throughout
        let amp = (|| -> Result<C64> {
            Ok(potential_ft(-q, zero, params, FtMethod::Residues)?
                * propagator
                * potential_ft(-q, -wp, params, FtMethod::Residues)?)
        })();
        match amp {
            Ok(a) => C64::new(a.norm_sqr(), 0.0),
            Err(e) => {
                first_error.borrow_mut().get_or_insert(e);
                C64::new(0.0, 0.0)
            }
        }
    };
    let quad = adaptive_kronrod(&integrand, 0.0, q_max, 1e-6, 16, 4000)?;
    // exponential-tail bound on the truncated window
    let tail = integrand(q_max).re * rb;
    if let Some(e) = first_error.into_inner() {
        return Err(e);
    }
    // even integrand: double the half-line result
    let beta = C64::new(2.0 * RATE_PREFACTOR * inv_vg.norm() * quad.value.re, 0.0);
    diag.error_estimate = 2.0 * RATE_PREFACTOR * inv_vg.norm() * quad.error_estimate;
    if tail > 1e-9 * quad.value.re.abs() {
        diag.notes.push(format!("window tail bound {tail:.3e} above 1e-9 of the integral"));
    }
    Ok(RateResult {
        beta,
        magnitude: beta.norm(),
        method: RateMethod::Simplified,
        diagnostics: diag,
    })
}

fn normalization_key(params: &MediumParams) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for v in [
        params.g_peak,
        params.omega_c_rabi,
        params.gamma_p,
        params.gamma_s,
        params.c6,
        params.od,
        params.sigma_z,
    ] {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

fn asymptotic_normalization(params: &MediumParams) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = normalization_key(params);
    if let Some(&n) = cache.lock().expect("normalization cache poisoned").get(&key) {
        return Ok(n);
    }
    // reference point deep in the scaling regime: δ = 8Ω_c, δ_s = 0
    let mut reference = *params;
    reference.delta = 8.0 * params.omega_c_rabi;
    reference.delta_s = 0.0;
    let anchor = beta_simplified(&reference)?;
    let raw = raw_scaling(&reference)?;
    let n = anchor.magnitude / raw;
    cache.lock().expect("normalization cache poisoned").insert(key, n);
    Ok(n)
}

fn raw_scaling(params: &MediumParams) -> Result<f64> {
    let scales = derive_scales(params, chi_bar(C64::new(0.0, 0.0), params)?)?;
    Ok(scales.phi * scales.r_b * scales.r_b * params.omega_c_rabi * params.omega_c_rabi
        / params.delta.abs())
}

/// Scaling law φ·r_b²·Ω_c²/δ, with the proportionality constant fixed once
/// per parameter family by matching `beta_simplified` at δ = 8Ω_c, δ_s = 0.
pub fn beta_asymptotic(params: &MediumParams) -> Result<RateResult> {
    if params.delta == 0.0 {
        return Err(Error::validation("delta", "asymptotic scaling undefined at δ = 0"));
    }
    let mut diag = RateDiagnostics::default();
    if params.omega_c_rabi / params.delta.abs() > 0.5 {
        diag.notes.push(format!(
            "outside the scaling regime: Ω_c/|δ| = {:.2} > 0.5",
            params.omega_c_rabi / params.delta.abs()
        ));
    }
    let norm = asymptotic_normalization(params)?;
    let beta = C64::new(norm * raw_scaling(params)?, 0.0);
    Ok(RateResult {
        beta,
        magnitude: beta.norm(),
        method: RateMethod::Asymptotic,
        diagnostics: diag,
    })
}

fn evaluate(params: &MediumParams, method: RateMethod) -> Result<RateResult> {
    match method {
        RateMethod::Full => beta_full(params, &QGridSpec::default()),
        RateMethod::Simplified => beta_simplified(params),
        RateMethod::Asymptotic => beta_asymptotic(params),
    }
}

fn read_checkpoint(path: &Path) -> HashMap<(usize, usize), f64> {
    let mut done = HashMap::new();
    if let Ok(text) = std::fs::read_to_string(path) {
        for line in text.lines() {
            let mut parts = line.split(',');
            if let (Some(i), Some(j), Some(v)) = (parts.next(), parts.next(), parts.next()) {
                if let (Ok(i), Ok(j), Ok(v)) = (i.parse(), j.parse(), v.parse()) {
                    done.insert((i, j), v);
                }
            }
        }
    }
    done
}

/// |β| over the outer product of detuning grids (rad/µs). Points are
/// evaluated in parallel; per-point failures become NaN holes rather than
/// aborting the map. With a checkpoint path, finished points are appended as
/// `i,j,value` lines and skipped on re-entry.
pub fn beta_map(
    delta_grid: &[f64],
    delta_s_grid: &[f64],
    params: &MediumParams,
    method: RateMethod,
    checkpoint: Option<&Path>,
) -> Result<RateMap> {
    if delta_grid.is_empty() || delta_s_grid.is_empty() {
        return Err(Error::Grid("rate map needs non-empty detuning grids".into()));
    }
    let done = checkpoint.map(|p| read_checkpoint(p)).unwrap_or_default();
    let sink = match checkpoint {
        Some(p) => Some(Mutex::new(
            std::fs::OpenOptions::new().create(true).append(true).open(p)?,
        )),
        None => None,
    };
    let points: Vec<(usize, usize)> = (0..delta_grid.len())
        .flat_map(|i| (0..delta_s_grid.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<((usize, usize), std::result::Result<f64, String>)> = points
        .par_iter()
        .map(|&(i, j)| {
            if let Some(&v) = done.get(&(i, j)) {
                return ((i, j), Ok(v));
            }
            let mut p = *params;
            p.delta = delta_grid[i];
            p.delta_s = delta_s_grid[j];
            let out = evaluate(&p, method).map(|r| r.magnitude).map_err(|e| e.to_string());
            if let (Ok(v), Some(sink)) = (&out, &sink) {
                let mut f = sink.lock().expect("checkpoint sink poisoned");
                let _ = writeln!(f, "{i},{j},{v:e}");
            }
            ((i, j), out)
        })
        .collect();
    let mut values = vec![vec![f64::NAN; delta_s_grid.len()]; delta_grid.len()];
    let mut holes = Vec::new();
    for ((i, j), r) in results {
        match r {
            Ok(v) => values[i][j] = v,
            Err(msg) => holes.push((i, j, msg)),
        }
    }
    Ok(RateMap {
        delta_grid: delta_grid.to_vec(),
        delta_s_grid: delta_s_grid.to_vec(),
        values,
        holes,
    })
}

/// One entry of the max-|β| locus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocusPoint {
    /// δ_s of this slice, rad/µs.
    pub delta_s: f64,
    /// δ of the dominant maximum, rad/µs.
    pub delta_star: f64,
    /// |β| at the dominant maximum.
    pub magnitude: f64,
    /// Every local maximum found by the coarse scan (refined), ascending δ.
    pub all_maxima: Vec<f64>,
    pub multimodal: bool,
}

/// δ*(δ_s): for each δ_s, the δ maximizing |β| (flat-dispersion formula),
/// located by a coarse scan over δ ∈ [0.2, 1.6]·Ω_c and refined by
/// golden-section search to 10⁻³·Ω_c.
pub fn beta_max_locus(delta_s_grid: &[f64], params: &MediumParams) -> Result<Vec<LocusPoint>> {
    let w = params.omega_c_rabi;
    let magnitude = |delta: f64, delta_s: f64| -> f64 {
        let mut p = *params;
        p.delta = delta;
        p.delta_s = delta_s;
        beta_simplified(&p).map(|r| r.magnitude).unwrap_or(f64::NEG_INFINITY)
    };
    let golden = |mut a: f64, mut b: f64, ds: f64| -> f64 {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = magnitude(c, ds);
        let mut fd = magnitude(d, ds);
        while (b - a).abs() > 1e-3 * w {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = magnitude(c, ds);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = magnitude(d, ds);
            }
        }
        0.5 * (a + b)
    };
    let scan = linspace(0.2 * w, 1.6 * w, 71);
    let mut out = Vec::with_capacity(delta_s_grid.len());
    for &ds in delta_s_grid {
        let vals: Vec<f64> = scan.iter().map(|&d| magnitude(d, ds)).collect();
        let mut maxima = Vec::new();
        for i in 1..scan.len() - 1 {
            if vals[i] > vals[i - 1] && vals[i] > vals[i + 1] && vals[i].is_finite() {
                maxima.push(golden(scan[i - 1], scan[i + 1], ds));
            }
        }
        if maxima.is_empty() {
            return Err(Error::Window(format!(
                "no interior |β| maximum for δ_s/2π = {:.3} MHz in the δ scan window",
                ds / std::f64::consts::TAU
            )));
        }
        let (&delta_star, mag) = maxima
            .iter()
            .map(|d| (d, magnitude(*d, ds)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty maxima");
        out.push(LocusPoint {
            delta_s: ds,
            delta_star,
            magnitude: mag,
            multimodal: maxima.len() > 1,
            all_maxima: maxima,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::{resonance_detunings, ResonanceMethod};
    use crate::units::mhz_to_angular;
    use std::f64::consts::TAU;

    fn base_params(delta_mhz: f64) -> MediumParams {
        // Ω_c/2π = 23.5 MHz, Γ/2π = 7 MHz (the rate-map operating point)
        MediumParams::experiment_preset().with_delta_mhz(delta_mhz)
    }

    #[test]
    fn prefactor_counts_six_permutations() {
        assert_eq!(permutation_multiplicity(), 6);
        assert!((RATE_PREFACTOR - permutation_multiplicity() as f64 * 3.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn incoming_momentum_zero_at_zero_two_photon_detuning() {
        let mut p = base_params(25.0);
        p.delta_s = 0.0;
        assert_eq!(incoming_momentum(&p).unwrap(), 0.0);
    }

    #[test]
    fn incoming_momentum_matches_linearized_dispersion() {
        let mut p = base_params(25.0);
        p.delta_s = mhz_to_angular(1.0);
        let q0 = incoming_momentum(&p).unwrap();
        // oracle: the dark branch actually vanishes there
        let e = zero_loss_energies(q0, &p)[BranchLabel::Dark.index()];
        assert!(e.abs() < 1e-6 * p.omega_c_rabi, "ω_D(q₀) = {e}");
        // magnitude ≈ δ_s/v_g from the linearized dark dispersion
        // v_g varies between ω = 0 and ω_D(0) ≈ −δ_s, so the linearized
        // estimate is only good to ~20% at δ_s/2π = 1 MHz
        let ivg = inverse_group_velocity(C64::new(0.0, 0.0), &p.zero_loss()).unwrap().re;
        assert!(
            (q0.abs() / (p.delta_s.abs() * ivg) - 1.0).abs() < 0.3,
            "q₀ = {q0}, δ_s/v_g = {}",
            p.delta_s * ivg
        );
    }

    #[test]
    fn incoming_momentum_is_odd_in_delta_s() {
        // antisymmetry is exact only to linear order in δ_s, so probe small
        let mut p = base_params(25.0);
        p.delta_s = mhz_to_angular(0.02);
        let plus = incoming_momentum(&p).unwrap();
        p.delta_s = -p.delta_s;
        let minus = incoming_momentum(&p).unwrap();
        assert!((plus + minus).abs() < 2e-2 * plus.abs(), "q₀(±δ_s) = {plus}, {minus}");
    }

    #[test]
    fn simplified_rate_is_positive_and_converged() {
        let p = base_params(25.0);
        let r = beta_simplified(&p).unwrap();
        assert!(r.magnitude > 0.0);
        assert!(r.accepted());
        assert!((r.beta.norm() - r.magnitude).abs() <= f64::EPSILON * r.magnitude);
    }

    #[test]
    fn simplified_rate_single_broadened_maximum_between_resonances() {
        // Γ/2π = 7 MHz merges the δ₀ and δ₊ peaks into one feature
        let p = base_params(25.0);
        let roots = {
            let mut zl = p.zero_loss();
            zl.delta_s = 0.0;
            resonance_detunings(&zl, ResonanceMethod::ClosedForm).unwrap()
        };
        let scan = linspace(0.25 * p.omega_c_rabi, 1.5 * p.omega_c_rabi, 120);
        let vals: Vec<f64> =
            scan.iter().map(|&d| beta_simplified(&p.with_delta(d)).unwrap().magnitude).collect();
        let maxima: Vec<f64> = (1..scan.len() - 1)
            .filter(|&i| vals[i] > vals[i - 1] && vals[i] > vals[i + 1])
            .map(|i| scan[i])
            .collect();
        assert_eq!(maxima.len(), 1, "maxima at {maxima:?}");
        assert!(maxima[0] > roots.delta0 && maxima[0] < roots.delta_plus);
    }

    #[test]
    fn doubling_c6_stays_smooth_and_finite() {
        let p = base_params(25.0);
        let base = beta_simplified(&p).unwrap().magnitude;
        let mut doubled = p;
        doubled.c6 *= 2.0;
        let up = beta_simplified(&doubled).unwrap().magnitude;
        assert!(up.is_finite() && up > 0.0);
        // Ṽ and r_b rescale consistently: the change is smooth and O(1)
        assert!(up / base > 0.3 && up / base < 3.0, "ratio {}", up / base);
    }

    #[test]
    fn rate_vanishes_with_interactions_off() {
        let mut p = base_params(25.0);
        p.c6 = 0.0;
        assert_eq!(beta_full(&p, &QGridSpec::default()).unwrap().magnitude, 0.0);
        assert_eq!(beta_simplified(&p).unwrap().magnitude, 0.0);
    }

    #[test]
    fn rate_fades_continuously_as_c6_shrinks() {
        // β → 0 as C₆ → 0; the leading power of the saturated vertices is
        // C₆^{1/2} (each Ṽ ∝ C₆^{1/6}, four per squared amplitude, and the
        // momentum window scales as 1/r_b ∝ C₆^{−1/6}), fit-verified.
        let p = base_params(25.0);
        let scales: Vec<f64> = vec![1.0, 1e-2, 1e-4];
        let logs: Vec<(f64, f64)> = scales
            .iter()
            .map(|&s| {
                let mut q = p;
                q.c6 *= s;
                (s.ln(), beta_simplified(&q).unwrap().magnitude.ln())
            })
            .collect();
        let slope = (logs[0].1 - logs[2].1) / (logs[0].0 - logs[2].0);
        assert!((slope - 0.5).abs() < 0.05, "leading C₆ power {slope}");
        let mid = (logs[0].1 - logs[1].1) / (logs[0].0 - logs[1].0);
        assert!((mid - 0.5).abs() < 0.1, "mid-range C₆ power {mid}");
    }

    #[test]
    fn asymptotic_matches_simplified_at_anchor_and_tracks_it_nearby() {
        let p = base_params(25.0);
        let at_anchor = p.with_delta(8.0 * p.omega_c_rabi);
        let a = beta_asymptotic(&at_anchor).unwrap().magnitude;
        let s = beta_simplified(&at_anchor).unwrap().magnitude;
        assert!((a / s - 1.0).abs() < 1e-9);
        // ratio varies by < 30% over δ/Ω_c ∈ [5, 10]
        for mult in [5.0, 6.5, 8.0, 10.0] {
            let q = p.with_delta(mult * p.omega_c_rabi);
            let ratio = beta_simplified(&q).unwrap().magnitude
                / beta_asymptotic(&q).unwrap().magnitude;
            assert!((ratio - 1.0).abs() < 0.3, "δ = {mult}Ω: ratio {ratio}");
        }
    }

    #[test]
    fn asymptotic_is_monotone_in_phi_and_has_no_extremum_in_delta() {
        // "zero loss" via a tiny finite Γ: φ carries a factor of Γ through
        // the OD-consistent coupling, so Γ = 10⁻³⁰⁰ would underflow it
        let mut p = base_params(25.0);
        p.gamma_p = mhz_to_angular(1e-6);
        p.gamma_s = 0.0;
        // φ enters linearly: raising OD at fixed δ, r_b raises β
        let lo = {
            let mut q = base_params(200.0);
            q.od = 20.0;
            beta_asymptotic(&q).unwrap().magnitude
        };
        let hi = {
            let mut q = base_params(200.0);
            q.od = 40.0;
            beta_asymptotic(&q).unwrap().magnitude
        };
        assert!(hi > lo);
        let vals: Vec<f64> = (0..18)
            .map(|i| {
                let d = (3.0 + i as f64) * p.omega_c_rabi;
                beta_asymptotic(&p.with_delta(d)).unwrap().magnitude
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "not monotone: {vals:?}");
    }

    #[test]
    fn full_rate_term_b_suppressed_far_detuned() {
        // |δ| ≫ Ω_c: the second path's vertex sits at the transparency
        // point (Ṽ_{q₂}[2ω₊] → 0, a pole of χ̄) and contributes < 1% of the
        // first. The pole must not be smeared away: at δ = 8Ω_c the
        // plateau energy 2ω₊ falls below Γ/2 for the nominal linewidth, so
        // probe with Γ and γ_s narrowed tenfold.
        let mut p = base_params(25.0).with_delta(8.0 * mhz_to_angular(23.5));
        p.gamma_p *= 0.1;
        p.gamma_s *= 0.1;
        let grid = QGridSpec { q_max_over_rb: 40.0, n_outer: 161, n_fine: 401 };
        let r = beta_full(&p, &grid).unwrap();
        assert!(r.diagnostics.conservation_roots > 0);
        assert!(r.diagnostics.term_a_flat_norm > 0.0);
        assert!(
            r.diagnostics.term_b_norm < 1e-2 * r.diagnostics.term_a_norm,
            "B/A = {}",
            r.diagnostics.term_b_norm / r.diagnostics.term_a_norm
        );
        assert!(
            r.diagnostics.term_b_flat_norm < 1e-2 * r.diagnostics.term_a_flat_norm,
            "flat-region B/A = {}",
            r.diagnostics.term_b_flat_norm / r.diagnostics.term_a_flat_norm
        );
    }

    #[test]
    fn full_rate_positive_with_roots_at_operating_point() {
        let p = base_params(25.0);
        let grid = QGridSpec { q_max_over_rb: 40.0, n_outer: 161, n_fine: 401 };
        let r = beta_full(&p, &grid).unwrap();
        assert!(r.magnitude > 0.0);
        assert!(r.diagnostics.conservation_roots > 0);
        assert_eq!(r.diagnostics.incoming_q0, 0.0);
    }

    #[test]
    fn map_ridge_is_negative_slope_and_matches_locus() {
        let p = base_params(25.0);
        let deltas: Vec<f64> = linspace(mhz_to_angular(10.0), mhz_to_angular(30.0), 21);
        let delta_ss: Vec<f64> = linspace(mhz_to_angular(-3.0), mhz_to_angular(3.0), 7);
        let map = beta_map(&deltas, &delta_ss, &p, RateMethod::Simplified, None).unwrap();
        assert!(map.holes.is_empty(), "holes: {:?}", map.holes);
        // ridge: per-column argmax over δ, strictly decreasing in δ_s
        let ridge: Vec<f64> = (0..delta_ss.len())
            .map(|j| {
                let (i, _) = map
                    .values
                    .iter()
                    .map(|row| row[j])
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                deltas[i]
            })
            .collect();
        assert!(ridge.windows(2).all(|w| w[1] < w[0]), "ridge {ridge:?}");
        // δ_s = 0 column agrees with the locus within a grid cell
        let locus = beta_max_locus(&[0.0], &p).unwrap();
        let cell = deltas[1] - deltas[0];
        assert!((ridge[3] - locus[0].delta_star).abs() <= cell);
    }

    #[test]
    fn map_refinement_keeps_ridge_within_half_cell() {
        let p = base_params(25.0);
        let coarse: Vec<f64> = linspace(mhz_to_angular(12.0), mhz_to_angular(22.0), 11);
        let fine: Vec<f64> = linspace(mhz_to_angular(12.0), mhz_to_angular(22.0), 21);
        let argmax = |grid: &[f64]| {
            let map = beta_map(grid, &[0.0], &p, RateMethod::Simplified, None).unwrap();
            let (i, _) = map
                .values
                .iter()
                .map(|row| row[0])
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            grid[i]
        };
        let cell = coarse[1] - coarse[0];
        assert!((argmax(&coarse) - argmax(&fine)).abs() < 0.5 * cell + 1e-12);
    }

    #[test]
    fn map_checkpoint_resumes_finished_points() {
        let p = base_params(25.0);
        let deltas = [mhz_to_angular(20.0), mhz_to_angular(25.0)];
        let delta_ss = [0.0, mhz_to_angular(1.0)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.ckpt");
        // pre-seed one point with a sentinel: resume must keep it verbatim
        std::fs::write(&path, "0,1,42.5\n").unwrap();
        let map = beta_map(&deltas, &delta_ss, &p, RateMethod::Simplified, Some(&path)).unwrap();
        assert_eq!(map.values[0][1], 42.5);
        let fresh = beta_map(&deltas, &delta_ss, &p, RateMethod::Simplified, None).unwrap();
        assert!((map.values[1][0] - fresh.values[1][0]).abs() < 1e-12 * fresh.values[1][0]);
        // checkpoint now covers the remaining points
        assert!(read_checkpoint(&path).len() >= 3);
    }

    #[test]
    fn locus_sits_between_resonances_nearer_delta_plus() {
        let p = base_params(25.0);
        let locus = beta_max_locus(&[0.0], &p).unwrap();
        let zl = {
            let mut zl = p.zero_loss();
            zl.delta_s = 0.0;
            zl
        };
        let roots = resonance_detunings(&zl, ResonanceMethod::ClosedForm).unwrap();
        let d = locus[0].delta_star;
        assert!(d > roots.delta0 && d < roots.delta_plus);
        assert!((d - roots.delta_plus).abs() < (d - roots.delta0).abs());
        assert!(!locus[0].multimodal);
    }

    #[test]
    fn locus_slope_negative_in_delta_s() {
        let p = base_params(25.0);
        let ds: Vec<f64> = linspace(mhz_to_angular(-3.0), mhz_to_angular(3.0), 5);
        let locus = beta_max_locus(&ds, &p).unwrap();
        for w in locus.windows(2) {
            assert!(
                w[1].delta_star < w[0].delta_star,
                "δ* not decreasing: {} → {}",
                w[0].delta_star,
                w[1].delta_star
            );
        }
    }

    #[test]
    fn narrow_linewidth_splits_the_ridge() {
        let mut p = base_params(25.0);
        p.gamma_p *= 0.1;
        let scan = linspace(0.3 * p.omega_c_rabi, 1.1 * p.omega_c_rabi, 300);
        let vals: Vec<f64> =
            scan.iter().map(|&d| beta_simplified(&p.with_delta(d)).unwrap().magnitude).collect();
        let maxima: Vec<f64> = (1..scan.len() - 1)
            .filter(|&i| vals[i] > vals[i - 1] && vals[i] > vals[i + 1])
            .map(|i| scan[i] / TAU)
            .collect();
        assert!(maxima.len() >= 2, "expected split peaks, got {maxima:?}");
        let roots = {
            let mut zl = p.zero_loss();
            zl.delta_s = 0.0;
            resonance_detunings(&zl, ResonanceMethod::ClosedForm).unwrap()
        };
        let first = maxima.first().unwrap();
        let last = maxima.last().unwrap();
        assert!((first - roots.delta0 / TAU).abs() < 2.0);
        assert!((last - roots.delta_plus / TAU).abs() < 2.0);
    }
}

//! Steady-state few-photon propagation through the Rydberg-EIT medium.
//!
//! One-, two-, and three-excitation wavefunctions are solved on a spatial
//! grid enclosing the atomic cloud. Only photon (E) slots transport; the
//! atomic amplitudes are local, so the steady-state equations march along
//! u = Σz_i characteristics with a small dense linear solve per grid point
//! (9×9 for two bodies, 27×27 for three). Doubly-Rydberg amplitudes pick up
//! the van der Waals potential on each S-index pair.
//!
//! Outputs are the transmission t, equal-time correlations g²(0), g³(0,0),
//! the connected combination η₃(0,0) = 3g²(0) − g³(0,0) − 2, delayed g²(τ)
//! via exit continuation, and (δ, δ_s) correlation maps.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::chi_bar;
use crate::medium::MediumParams;
use crate::quad::adaptive_kronrod;

/// Peak working memory allowed for a single solve, MB.
const MEMORY_BUDGET_MB: usize = 4 << 10;

/// Shape of the atomic cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Gaussian { sigma_z: f64 },
    Homogeneous { length: f64 },
}

/// Position-dependent collective coupling g(z), calibrated so that the bare
/// two-level resonant intensity transmission through the domain equals
/// e^{−OD}: 4∫g(z)²dz/(cΓ) = OD.
#[derive(Debug, Clone, Copy)]
pub struct DensityProfile {
    pub kind: ProfileKind,
    /// g(0)², rad²/µs².
    g_peak_sq: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl DensityProfile {
    /// Gaussian cloud with the σ_z, OD, Γ of `params`; domain ±4σ_z with
    /// the coupling normalized over the (slightly truncated) domain.
    pub fn gaussian(params: &MediumParams) -> Result<Self> {
        let sigma = params.sigma_z;
        let half = 4.0 * sigma;
        let shape =
            adaptive_kronrod(|z| C64::new((-z * z / (2.0 * sigma * sigma)).exp(), 0.0), -half, half, 1e-13, 32, 4000)?
                .value
                .re;
        Ok(DensityProfile {
            kind: ProfileKind::Gaussian { sigma_z: sigma },
            g_peak_sq: params.od * params.light_speed * params.gamma_p / (4.0 * shape),
            z_min: -half,
            z_max: half,
        })
    }

    /// Homogeneous slab of length L = 4.2σ_z (same OD as the Gaussian cloud).
    pub fn homogeneous(params: &MediumParams) -> Result<Self> {
        let length = 4.2 * params.sigma_z;
        if length <= 0.0 {
            return Err(Error::validation("sigma_z", "must be positive"));
        }
        Ok(DensityProfile {
            kind: ProfileKind::Homogeneous { length },
            g_peak_sq: params.od * params.light_speed * params.gamma_p / (4.0 * length),
            z_min: -0.5 * length,
            z_max: 0.5 * length,
        })
    }

    /// g(z)² in rad²/µs².
    pub fn coupling_sq(&self, z: f64) -> f64 {
        match self.kind {
            ProfileKind::Gaussian { sigma_z } => {
                if z < self.z_min || z > self.z_max {
                    0.0
                } else {
                    self.g_peak_sq * (-z * z / (2.0 * sigma_z * sigma_z)).exp()
                }
            }
            ProfileKind::Homogeneous { .. } => {
                if z < self.z_min || z > self.z_max {
                    0.0
                } else {
                    self.g_peak_sq
                }
            }
        }
    }

    pub fn coupling(&self, z: f64) -> f64 {
        self.coupling_sq(z).sqrt()
    }
}

/// Uniform axis of `n` points spanning the profile's domain.
pub fn axis_grid(profile: &DensityProfile, n: usize) -> Result<Vec<f64>> {
    if n < 8 {
        return Err(Error::Grid("axis grid needs at least 8 points".into()));
    }
    let span = profile.z_max - profile.z_min;
    Ok((0..n).map(|i| profile.z_min + span * i as f64 / (n - 1) as f64).collect())
}

/// Production two-body axis: step min(r_b/12, σ_z/60).
pub fn production_axis(params: &MediumParams, profile: &DensityProfile) -> Result<Vec<f64>> {
    let rb = crate::interactions::blockade_radius(C64::new(0.0, 0.0), params)?;
    let sigma = match profile.kind {
        ProfileKind::Gaussian { sigma_z } => sigma_z,
        ProfileKind::Homogeneous { length } => length / 4.2,
    };
    let step = (rb / 12.0).min(sigma / 60.0);
    let span = profile.z_max - profile.z_min;
    let n = (span / step).ceil() as usize + 1;
    axis_grid(profile, n)
}

/// Equal-time correlation outputs of a two- or three-body solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub g2_0: f64,
    pub g3_00: f64,
    pub eta3_00: f64,
    /// (τ in µs, g²(τ)) samples when a delay profile was requested.
    pub g2_tau: Option<Vec<(f64, f64)>>,
    /// Points per spatial axis.
    pub grid_points: usize,
    /// |Δg| under a 2× grid refinement, when computed.
    pub convergence_estimate: Option<f64>,
}

/// Single-excitation steady state.
#[derive(Debug, Clone)]
pub struct SingleSolution {
    pub z: Vec<f64>,
    /// (E, P, S) amplitudes at each grid point; ψ_E(z_min) = 1.
    pub psi: Vec<[C64; 3]>,
    /// t = ψ_E(z_max).
    pub transmission: C64,
}

/// Eliminated-atom denominator D = Δ + δ_s − Ω_c²/(4Δ_s).
fn eliminated_denominator(params: &MediumParams) -> Result<C64> {
    let ds = params.cap_delta_s();
    if params.omega_c_rabi > 0.0 && ds.norm() == 0.0 {
        return Err(Error::Pole {
            context: "single-body elimination".into(),
            location: "Δ_s = 0 with Ω_c > 0 (use γ_s > 0)".into(),
        });
    }
    let d = if params.omega_c_rabi > 0.0 {
        params.cap_delta() + params.delta_s
            - C64::new(0.25 * params.omega_c_rabi * params.omega_c_rabi, 0.0) / ds
    } else {
        params.cap_delta() + params.delta_s
    };
    if d.norm() < 1e-12 * (params.omega_c_rabi + params.cap_delta().norm()).max(1.0) {
        return Err(Error::Pole {
            context: "single-body elimination".into(),
            location: format!("D = Δ + δ_s − Ω²/4Δ_s ≈ 0 at δ/2π = {:.3} MHz", params.delta / std::f64::consts::TAU),
        });
    }
    Ok(d)
}

/// Closed-form transmission amplitude exp(−i·OD·Γ/(4D)), independent of the
/// profile shape through the calibration identity.
pub fn transmission_closed_form(params: &MediumParams) -> Result<C64> {
    let d = eliminated_denominator(params)?;
    Ok((-C64::new(0.0, 1.0) * params.od * params.gamma_p / (4.0 * d)).exp())
}

/// Integrate the steady single-body equation ∂_z ψ_E = −i g(z)²ψ_E/(cD)
/// with per-step Simpson weights (exact up to quadrature error, since the
/// equation is a scalar linear ODE).
pub fn solve_single(
    params: &MediumParams,
    profile: &DensityProfile,
    z: &[f64],
) -> Result<SingleSolution> {
    if z.len() < 2 || z.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("axis must be strictly increasing with ≥ 2 points".into()));
    }
    let d = eliminated_denominator(params)?;
    let ds = params.cap_delta_s();
    let minus_i = C64::new(0.0, -1.0);
    let atomic = |e: C64, g: f64| -> [C64; 3] {
        let p = g * e / d;
        let s = if params.omega_c_rabi > 0.0 {
            0.5 * params.omega_c_rabi * p / ds
        } else {
            C64::new(0.0, 0.0)
        };
        [e, p, s]
    };
    let mut psi = Vec::with_capacity(z.len());
    let mut e = C64::new(1.0, 0.0);
    psi.push(atomic(e, profile.coupling(z[0])));
    for w in z.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let g2int = (b - a) / 6.0
            * (profile.coupling_sq(a) + 4.0 * profile.coupling_sq(mid) + profile.coupling_sq(b));
        e *= (minus_i * g2int / (params.light_speed * d)).exp();
        psi.push(atomic(e, profile.coupling(b)));
    }
    Ok(SingleSolution { z: z.to_vec(), psi, transmission: e })
}

/// Dense complex LU solve with partial pivoting, in place.
fn solve_dense(n: usize, a: &mut [C64], b: &mut [C64]) -> Result<()> {
    for col in 0..n {
        let (pivot_row, pivot_mag) = (col..n)
            .map(|r| (r, a[r * n + col].norm_sqr()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty column");
        if pivot_mag == 0.0 || !pivot_mag.is_finite() {
            return Err(Error::Pole {
                context: "local grid-point solve".into(),
                location: format!("singular column {col} (pivot {pivot_mag:.3e})"),
            });
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let inv = 1.0 / a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] * inv;
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for k in (col + 1)..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
            a[r * n + col] = C64::new(0.0, 0.0);
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}

/// Short-distance-regularized van der Waals pair potential.
fn capped_potential(r: f64, c6: f64, cap: f64) -> C64 {
    let bare = if r == 0.0 { f64::INFINITY } else { c6 / r.powi(6) };
    let v = if bare.abs() > cap { cap * bare.signum() } else { bare };
    // r = 0 with C₆ = 0 stays 0
    if c6 == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        C64::new(v, 0.0)
    }
}

/// Two-excitation steady state on the tensor grid z × z.
#[derive(Debug, Clone)]
pub struct TwoBodySolution {
    pub z: Vec<f64>,
    /// 9 components per point, row-major (i, j), component index 3·α₁ + α₂
    /// with α ∈ {0:E, 1:P, 2:S}.
    pub psi: Vec<[C64; 9]>,
    pub transmission: C64,
    pub g2_0: f64,
    /// max |ψ_EE(i,j) − ψ_EE(j,i)| / max |ψ_EE|.
    pub symmetry_defect: f64,
}

impl TwoBodySolution {
    pub fn psi_at(&self, i: usize, j: usize) -> &[C64; 9] {
        &self.psi[i * self.z.len() + j]
    }
}

struct LocalContext {
    cap_delta_p: C64, // Δ + δ_s
    cap_delta_s: C64,
    half_rabi: f64,
    c: f64,
    c6: f64,
    cap: f64,
}

impl LocalContext {
    fn new(params: &MediumParams, cap_scale: f64) -> Result<Self> {
        let chi0 = chi_bar(C64::new(0.0, 0.0), params)?;
        if params.c6 != 0.0 && chi0.norm() == 0.0 {
            return Err(Error::Resonance("χ̄(0) = 0: potential cap undefined".into()));
        }
        Ok(LocalContext {
            cap_delta_p: params.cap_delta() + params.delta_s,
            cap_delta_s: params.cap_delta_s(),
            half_rabi: 0.5 * params.omega_c_rabi,
            c: params.light_speed,
            c6: params.c6,
            cap: if params.c6 == 0.0 { f64::INFINITY } else { cap_scale / chi0.norm() },
        })
    }
}

/// Assemble and solve the N-body local system at one grid point.
///
/// `prev[m]` is the full component vector at the upwind neighbor in slot m,
/// with an optional second-upwind neighbor enabling a second-order one-sided
/// transport stencil (falls back to first order on the first interior
/// layer); `positions[m]` and `g[m]` the slot coordinate and coupling; `h`
/// the grid step.
#[allow(clippy::too_many_arguments)]
fn solve_point<const NC: usize>(
    n_slots: usize,
    positions: &[f64],
    g: &[f64],
    prev: &[(&[C64; NC], Option<&[C64; NC]>)],
    h: f64,
    ctx: &LocalContext,
    a: &mut [C64],
    x: &mut [C64; NC],
) -> Result<()> {
    let pow3: [usize; 3] = [1, 3, 9];
    a.fill(C64::new(0.0, 0.0));
    let mut b = [C64::new(0.0, 0.0); NC];
    let transport = C64::new(0.0, -ctx.c / h);
    for alpha in 0..NC {
        let digit = |m: usize| (alpha / pow3[n_slots - 1 - m]) % 3;
        let flip_to = |m: usize, to: usize| -> usize {
            let p = pow3[n_slots - 1 - m] as isize;
            (alpha as isize + (to as isize - digit(m) as isize) * p) as usize
        };
        let row = alpha * NC;
        for m in 0..n_slots {
            match digit(m) {
                0 => {
                    // photon slot: one-sided transport + conversion into P;
                    // ∂ ≈ (3x − 4p + pp)/2h when two upwind layers exist
                    match prev[m].1 {
                        Some(pp) => {
                            a[row + alpha] += 1.5 * transport;
                            b[alpha] += transport * (2.0 * prev[m].0[alpha] - 0.5 * pp[alpha]);
                        }
                        None => {
                            a[row + alpha] += transport;
                            b[alpha] += transport * prev[m].0[alpha];
                        }
                    }
                    a[row + flip_to(m, 1)] += g[m];
                }
                1 => {
                    a[row + alpha] -= ctx.cap_delta_p;
                    a[row + flip_to(m, 0)] += g[m];
                    a[row + flip_to(m, 2)] += ctx.half_rabi;
                }
                _ => {
                    a[row + alpha] -= ctx.cap_delta_s;
                    a[row + flip_to(m, 1)] += ctx.half_rabi;
                }
            }
        }
        for m in 0..n_slots {
            for n in (m + 1)..n_slots {
                if digit(m) == 2 && digit(n) == 2 {
                    a[row + alpha] +=
                        capped_potential((positions[m] - positions[n]).abs(), ctx.c6, ctx.cap);
                }
            }
        }
    }
    x.copy_from_slice(&b);
    solve_dense(NC, a, x)
}

fn check_uniform(z: &[f64]) -> Result<f64> {
    if z.len() < 8 || z.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("axis must be strictly increasing with ≥ 8 points".into()));
    }
    let h = z[1] - z[0];
    if z.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::Grid("marching requires a uniform axis".into()));
    }
    Ok(h)
}

fn solve_two_impl(
    params: &MediumParams,
    profile: &DensityProfile,
    z: &[f64],
    cap_scale: f64,
    reverse_sweep: bool,
) -> Result<TwoBodySolution> {
    let h = check_uniform(z)?;
    let m = z.len();
    let estimate_mb = m * m * 9 * 16 >> 20;
    if estimate_mb > MEMORY_BUDGET_MB {
        return Err(Error::MemoryBudget { estimate_mb, budget_mb: MEMORY_BUDGET_MB });
    }
    let single = solve_single(params, profile, z)?;
    let ctx = LocalContext::new(params, cap_scale)?;
    let g: Vec<f64> = z.iter().map(|&zz| profile.coupling(zz)).collect();
    let zero = [C64::new(0.0, 0.0); 9];
    let mut psi = vec![zero; m * m];

    // entrance faces: the entering slot must be a photon, factorizing into
    // the single-body solution for the other slot
    for j in 0..m {
        for beta in 0..3 {
            psi[j][beta] = single.psi[j][beta]; // ψ_{Eβ}(z_min, z_j)
            psi[j * m][3 * beta] = single.psi[j][beta]; // ψ_{βE}(z_j, z_min)
        }
    }
    psi[0] = {
        let mut corner = zero;
        corner[0] = C64::new(1.0, 0.0);
        corner
    };

    let mut a = vec![C64::new(0.0, 0.0); 81];
    let mut x = zero;
    for u in 2..=(2 * (m - 1)) {
        let i_lo = 1.max(u as isize - (m as isize - 1)) as usize;
        let i_hi = (u - 1).min(m - 1);
        let range: Vec<usize> = if reverse_sweep {
            (i_lo..=i_hi).rev().collect()
        } else {
            (i_lo..=i_hi).collect()
        };
        for i in range {
            let j = u - i;
            let prev_i = psi[(i - 1) * m + j];
            let prev_j = psi[i * m + (j - 1)];
            let prev_ii = (i >= 2).then(|| psi[(i - 2) * m + j]);
            let prev_jj = (j >= 2).then(|| psi[i * m + (j - 2)]);
            solve_point::<9>(
                2,
                &[z[i], z[j]],
                &[g[i], g[j]],
                &[(&prev_i, prev_ii.as_ref()), (&prev_j, prev_jj.as_ref())],
                h,
                &ctx,
                &mut a,
                &mut x,
            )?;
            psi[i * m + j] = x;
        }
    }

    let t = single.transmission;
    let g2_0 = (psi[m * m - 1][0] / (t * t)).norm_sqr();
    let mut peak = 0.0f64;
    let mut defect = 0.0f64;
    for i in 0..m {
        for j in 0..i {
            let d = (psi[i * m + j][0] - psi[j * m + i][0]).norm();
            defect = defect.max(d);
        }
        for j in 0..m {
            peak = peak.max(psi[i * m + j][0].norm());
        }
    }
    Ok(TwoBodySolution {
        z: z.to_vec(),
        psi,
        transmission: t,
        g2_0,
        symmetry_defect: if peak > 0.0 { defect / peak } else { 0.0 },
    })
}

/// Solve the two-excitation steady state and return g²(0) with the full
/// wavefunction (needed for delayed correlations and as the three-body
/// boundary data).
pub fn solve_two(
    params: &MediumParams,
    profile: &DensityProfile,
    z: &[f64],
) -> Result<TwoBodySolution> {
    solve_two_impl(params, profile, z, 1e3, false)
}

/// Three-excitation solve; marches u-slabs keeping three M²-sized slabs in
/// memory. Returns the combined correlation result (g² from the internal
/// two-body solve on the same grid, so the η₃ identity is exact).
pub fn solve_three(
    params: &MediumParams,
    profile: &DensityProfile,
    z: &[f64],
) -> Result<CorrelationResult> {
    let h = check_uniform(z)?;
    let m = z.len();
    let estimate_mb = (3 * m * m * 27 * 16 + m * m * 9 * 16) >> 20;
    if estimate_mb > MEMORY_BUDGET_MB {
        return Err(Error::MemoryBudget { estimate_mb, budget_mb: MEMORY_BUDGET_MB });
    }
    let two = solve_two_impl(params, profile, z, 1e3, false)?;
    let single = solve_single(params, profile, z)?;
    let ctx = LocalContext::new(params, 1e3)?;
    let g: Vec<f64> = z.iter().map(|&zz| profile.coupling(zz)).collect();
    let zero = [C64::new(0.0, 0.0); 27];

    // slabs[u % 3][i * m + j] holds the point (i, j, u − i − j); two past
    // slabs are kept for the second-order transport stencil
    let mut slabs = vec![vec![zero; m * m]; 3];
    let boundary = |i: usize, j: usize, k: usize| -> [C64; 27] {
        let mut out = zero;
        let idx = [i, j, k];
        // any slot on the entrance face must enter as a photon (digit E);
        // remaining slots factorize into the lower-order solution
        let interior: Vec<usize> = (0..3).filter(|&s| idx[s] != 0).collect();
        match interior.len() {
            0 => out[0] = C64::new(1.0, 0.0),
            1 => {
                let s = interior[0];
                let p = [9usize, 3, 1][s];
                for beta in 0..3 {
                    out[beta * p] = single.psi[idx[s]][beta];
                }
            }
            _ => {
                let (s1, s2) = (interior[0], interior[1]);
                let (p1, p2) = ([9usize, 3, 1][s1], [9usize, 3, 1][s2]);
                let pair = two.psi_at(idx[s1], idx[s2]);
                for beta in 0..3 {
                    for gamma in 0..3 {
                        out[beta * p1 + gamma * p2] = pair[3 * beta + gamma];
                    }
                }
            }
        }
        out
    };

    // seed: u = 0 corner
    slabs[0][0] = boundary(0, 0, 0);
    let mut a = vec![C64::new(0.0, 0.0); 27 * 27];
    let mut x = zero;
    let mut exit_value = C64::new(0.0, 0.0);
    for u in 1..=(3 * (m - 1)) {
        let prev = (u + 2) % 3;
        let prev2 = (u + 1) % 3;
        let cur = u % 3;
        for i in 0..m.min(u + 1) {
            if u < i {
                continue;
            }
            let j_hi = (u - i).min(m - 1);
            for j in 0..=j_hi {
                let k = u - i - j;
                if k >= m {
                    continue;
                }
                let value = if i == 0 || j == 0 || k == 0 {
                    boundary(i, j, k)
                } else {
                    let prev_i = slabs[prev][(i - 1) * m + j];
                    let prev_j = slabs[prev][i * m + (j - 1)];
                    let prev_k = slabs[prev][i * m + j];
                    let prev_ii = (i >= 2).then(|| slabs[prev2][(i - 2) * m + j]);
                    let prev_jj = (j >= 2).then(|| slabs[prev2][i * m + (j - 2)]);
                    let prev_kk = (k >= 2).then(|| slabs[prev2][i * m + j]);
                    solve_point::<27>(
                        3,
                        &[z[i], z[j], z[k]],
                        &[g[i], g[j], g[k]],
                        &[
                            (&prev_i, prev_ii.as_ref()),
                            (&prev_j, prev_jj.as_ref()),
                            (&prev_k, prev_kk.as_ref()),
                        ],
                        h,
                        &ctx,
                        &mut a,
                        &mut x,
                    )?;
                    x
                };
                slabs[cur][i * m + j] = value;
                if i == m - 1 && j == m - 1 && k == m - 1 {
                    exit_value = value[0];
                }
            }
        }
    }

    let t = two.transmission;
    let g3_00 = (exit_value / (t * t * t)).norm_sqr();
    Ok(CorrelationResult {
        g2_0: two.g2_0,
        g3_00,
        eta3_00: 3.0 * two.g2_0 - g3_00 - 2.0,
        g2_tau: None,
        grid_points: m,
        convergence_estimate: None,
    })
}

/// g²(τ) by exit continuation: once the first photon has left the cloud its
/// slot is inert (no Rydberg component), and the remaining conditional
/// excitation φ_α(z) = ψ_{αE}(z, z_max) relaxes back to the steady
/// single-body profile. The photon field is adiabatically slaved to the
/// atomic amplitudes (cloud transit ≪ any atomic timescale) and the atomic
/// pair (φ_P, φ_S) is advanced with fixed-step RK4.
pub fn g2_tau_profile(
    solution: &TwoBodySolution,
    params: &MediumParams,
    profile: &DensityProfile,
    taus: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if taus.is_empty() {
        return Err(Error::Grid("empty τ grid".into()));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) || taus[0] < 0.0 {
        return Err(Error::Grid("τ grid must be nonnegative and increasing".into()));
    }
    let horizon = 100.0;
    if *taus.last().expect("non-empty") > horizon {
        return Err(Error::Window(format!(
            "τ = {} µs beyond the supported continuation horizon ({horizon} µs)",
            taus.last().expect("non-empty")
        )));
    }
    let m = solution.z.len();
    let h = solution.z[1] - solution.z[0];
    let t = solution.transmission;
    let g: Vec<f64> = solution.z.iter().map(|&z| profile.coupling(z)).collect();
    let dp = params.cap_delta() + params.delta_s;
    let ds = params.cap_delta_s();
    let half_rabi = 0.5 * params.omega_c_rabi;
    let c = params.light_speed;
    let minus_i = C64::new(0.0, -1.0);

    // conditional state: atomic amplitudes along z given the exited photon
    let mut phi_p: Vec<C64> = (0..m).map(|i| solution.psi_at(i, m - 1)[3]).collect();
    let mut phi_s: Vec<C64> = (0..m).map(|i| solution.psi_at(i, m - 1)[6]).collect();

    // photon slaved to φ_P: ∂_z φ_E = −(i/c) g φ_P with φ_E(z_min) = t
    let slaved_e = |phi_p: &[C64]| -> Vec<C64> {
        let mut e = vec![C64::new(0.0, 0.0); m];
        e[0] = t;
        for i in 1..m {
            let inc = minus_i / c * 0.5 * h * (g[i - 1] * phi_p[i - 1] + g[i] * phi_p[i]);
            e[i] = e[i - 1] + inc;
        }
        e
    };

    // i φ̇_P = g φ_E − (Δ+δ_s) φ_P + (Ω/2) φ_S; i φ̇_S = (Ω/2) φ_P − Δ_s φ_S
    let derivative = |phi_p: &[C64], phi_s: &[C64]| -> (Vec<C64>, Vec<C64>) {
        let e = slaved_e(phi_p);
        let mut dp_out = Vec::with_capacity(m);
        let mut ds_out = Vec::with_capacity(m);
        for i in 0..m {
            dp_out.push(minus_i * (g[i] * e[i] - dp * phi_p[i] + half_rabi * phi_s[i]));
            ds_out.push(minus_i * (half_rabi * phi_p[i] - ds * phi_s[i]));
        }
        (dp_out, ds_out)
    };

    let scale = dp.norm() + ds.norm() + half_rabi + 0.25 * params.od * params.gamma_p;
    let dt_max = 0.1 / scale.max(1.0);
    let mut out = Vec::with_capacity(taus.len());
    let mut now = 0.0f64;
    let norm = (t * t).norm_sqr();
    for &tau in taus {
        let mut remaining = tau - now;
        while remaining > 1e-15 {
            let dt = remaining.min(dt_max);
            let (k1p, k1s) = derivative(&phi_p, &phi_s);
            let yp: Vec<C64> = (0..m).map(|i| phi_p[i] + 0.5 * dt * k1p[i]).collect();
            let ys: Vec<C64> = (0..m).map(|i| phi_s[i] + 0.5 * dt * k1s[i]).collect();
            let (k2p, k2s) = derivative(&yp, &ys);
            let yp: Vec<C64> = (0..m).map(|i| phi_p[i] + 0.5 * dt * k2p[i]).collect();
            let ys: Vec<C64> = (0..m).map(|i| phi_s[i] + 0.5 * dt * k2s[i]).collect();
            let (k3p, k3s) = derivative(&yp, &ys);
            let yp: Vec<C64> = (0..m).map(|i| phi_p[i] + dt * k3p[i]).collect();
            let ys: Vec<C64> = (0..m).map(|i| phi_s[i] + dt * k3s[i]).collect();
            let (k4p, k4s) = derivative(&yp, &ys);
            for i in 0..m {
                phi_p[i] += dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
                phi_s[i] += dt / 6.0 * (k1s[i] + 2.0 * k2s[i] + 2.0 * k3s[i] + k4s[i]);
            }
            remaining -= dt;
        }
        now = tau;
        if tau == 0.0 {
            // bitwise-identical to the equal-time result by construction
            out.push((0.0, solution.g2_0));
        } else {
            let e_exit = *slaved_e(&phi_p).last().expect("non-empty");
            out.push((tau, e_exit.norm_sqr() / norm));
        }
    }
    Ok(out)
}

/// g², g³, η₃ over the outer product of detuning grids (rad/µs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub delta_grid: Vec<f64>,
    pub delta_s_grid: Vec<f64>,
    pub g2: Vec<Vec<f64>>,
    pub g3: Vec<Vec<f64>>,
    pub eta3: Vec<Vec<f64>>,
    pub holes: Vec<(usize, usize, String)>,
}

/// Per-point three-body solves over a detuning grid. Failed points become
/// NaN holes; the η₃ identity holds pointwise by construction.
pub fn correlation_map(
    delta_grid: &[f64],
    delta_s_grid: &[f64],
    params: &MediumParams,
    profile: &DensityProfile,
    n_axis: usize,
) -> Result<CorrelationMap> {
    if delta_grid.is_empty() || delta_s_grid.is_empty() {
        return Err(Error::Grid("correlation map needs non-empty detuning grids".into()));
    }
    let points: Vec<(usize, usize)> = (0..delta_grid.len())
        .flat_map(|i| (0..delta_s_grid.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<((usize, usize), std::result::Result<CorrelationResult, String>)> = points
        .par_iter()
        .map(|&(i, j)| {
            let mut p = *params;
            p.delta = delta_grid[i];
            p.delta_s = delta_s_grid[j];
            let r = (|| -> Result<CorrelationResult> {
                let z = axis_grid(profile, n_axis)?;
                solve_three(&p, profile, &z)
            })()
            .map_err(|e| e.to_string());
            ((i, j), r)
        })
        .collect();
    let shape = || vec![vec![f64::NAN; delta_s_grid.len()]; delta_grid.len()];
    let (mut g2, mut g3, mut eta3) = (shape(), shape(), shape());
    let mut holes = Vec::new();
    for ((i, j), r) in results {
        match r {
            Ok(v) => {
                g2[i][j] = v.g2_0;
                g3[i][j] = v.g3_00;
                eta3[i][j] = v.eta3_00;
            }
            Err(msg) => holes.push((i, j, msg)),
        }
    }
    Ok(CorrelationMap {
        delta_grid: delta_grid.to_vec(),
        delta_s_grid: delta_s_grid.to_vec(),
        g2,
        g3,
        eta3,
        holes,
    })
}

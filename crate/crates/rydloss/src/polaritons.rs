//! Single-excitation band structure of the Rydberg-EIT medium.
//!
//! The 3×3 momentum-space Hamiltonian couples the probe photon E, the
//! intermediate state P, and the Rydberg spin wave S. Its three complex
//! eigenvalue curves form the lower (L), dark (D), and upper (U) polariton
//! branches. Branch identity is assigned by eigenvector continuity — never
//! by per-point sorting of real parts, which silently swaps branches where
//! the curves cross in the complex plane.
//!
//! Also provided here: the saturation energy ω₊ of the flat branch regions,
//! the Rydberg-projected single-body propagator G_ss, and the analytic
//! inversion of the dark-branch dispersion (momentum and 1/v_g as functions
//! of energy), which the golden-rule rate integrals consume.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::medium::MediumParams;

/// Polariton branch identity, ordered by zero-loss energy (L < D < U).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchLabel {
    Lower,
    Dark,
    Upper,
}

impl BranchLabel {
    pub const ALL: [BranchLabel; 3] = [BranchLabel::Lower, BranchLabel::Dark, BranchLabel::Upper];

    pub fn index(self) -> usize {
        match self {
            BranchLabel::Lower => 0,
            BranchLabel::Dark => 1,
            BranchLabel::Upper => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BranchLabel::Lower => "L",
            BranchLabel::Dark => "D",
            BranchLabel::Upper => "U",
        }
    }
}

/// H(q) in the {E, P, S} basis:
/// [[cq, g, 0], [g, −Δ−δ_s, Ω_c/2], [0, Ω_c/2, −Δ_s]].
pub fn hamiltonian(q: f64, params: &MediumParams) -> [[C64; 3]; 3] {
    let zero = C64::new(0.0, 0.0);
    let g = C64::new(params.g_peak, 0.0);
    let half_rabi = C64::new(0.5 * params.omega_c_rabi, 0.0);
    [
        [C64::new(params.light_speed * q, 0.0), g, zero],
        [g, -params.cap_delta() - params.delta_s, half_rabi],
        [zero, half_rabi, -params.cap_delta_s()],
    ]
}

/// det(H − λI) and its λ-derivative, evaluated from the shifted matrix
/// entries (no expanded characteristic-polynomial coefficients, whose
/// cancellation would wreck the small dark eigenvalue next to |cq| ≫ |ω|).
fn det_shifted(h: &[[C64; 3]; 3], lambda: C64) -> (C64, C64) {
    let a = h[0][0] - lambda;
    let b = h[1][1] - lambda;
    let c = h[2][2] - lambda;
    let g = h[0][1];
    let w = h[1][2];
    // det = a(bc − w²) − g²c  (using the zero pattern of H)
    let det = a * (b * c - w * w) - g * g * c;
    // d det/dλ = −[(bc − w²) + a(b + c) − g²]
    let ddet = -((b * c - w * w) + a * (b + c) - g * g);
    (det, ddet)
}

fn newton_polish(h: &[[C64; 3]; 3], mut lambda: C64) -> C64 {
    for _ in 0..3 {
        let (f, fp) = det_shifted(h, lambda);
        if fp.norm() == 0.0 {
            break;
        }
        let step = f / fp;
        lambda -= step;
        if step.norm() <= 1e-15 * lambda.norm().max(1.0) {
            break;
        }
    }
    lambda
}

/// All three eigenvalues of H (unordered): Cardano seeds, Newton-polished
/// against the shifted determinant.
pub fn eigenvalues(h: &[[C64; 3]; 3]) -> [C64; 3] {
    // λ³ + c2λ² + c1λ + c0 = 0
    let tr = h[0][0] + h[1][1] + h[2][2];
    let m01 = h[0][0] * h[1][1] - h[0][1] * h[0][1];
    let m02 = h[0][0] * h[2][2];
    let m12 = h[1][1] * h[2][2] - h[1][2] * h[1][2];
    let c2 = -tr;
    let c1 = m01 + m02 + m12;
    let c0 = -(h[0][0] * m12 - h[0][1] * (h[0][1] * h[2][2]));
    // Depressed cubic t³ + pt + q with λ = t − c2/3.
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = c0 - c1 * c2 / 3.0 + 2.0 * c2 * c2 * c2 / 27.0;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    // Pick the larger-magnitude cube-root argument for stability.
    let u3a = -q / 2.0 + disc;
    let u3b = -q / 2.0 - disc;
    let u3 = if u3a.norm() >= u3b.norm() { u3a } else { u3b };
    let u = u3.powf(1.0 / 3.0);
    let omega_rot = C64::new(-0.5, 0.75f64.sqrt());
    let mut out = [C64::new(0.0, 0.0); 3];
    for (i, item) in out.iter_mut().enumerate() {
        let uk = u * omega_rot.powu(i as u32);
        // t = uk − p/(3 uk); guard uk ≈ 0 (triple root at the shift point)
        let t = if uk.norm() > 1e-300 { uk - p / (3.0 * uk) } else { uk };
        *item = newton_polish(h, t - shift);
    }
    out
}

/// Unit-norm eigenvector of H for eigenvalue λ, from cross products of rows
/// of H − λI (the null-space direction of a rank-2 complex symmetric 3×3).
pub fn eigenvector(h: &[[C64; 3]; 3], lambda: C64) -> Result<[C64; 3]> {
    let mut a = *h;
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= lambda;
    }
    let cross = |u: &[C64; 3], v: &[C64; 3]| -> [C64; 3] {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let candidates = [cross(&a[0], &a[1]), cross(&a[0], &a[2]), cross(&a[1], &a[2])];
    let mut best = candidates[0];
    let mut best_norm = 0.0;
    for cand in &candidates {
        let n = (cand[0].norm_sqr() + cand[1].norm_sqr() + cand[2].norm_sqr()).sqrt();
        if n > best_norm {
            best_norm = n;
            best = *cand;
        }
    }
    if best_norm < 1e-280 {
        return Err(Error::Convergence(format!(
            "degenerate eigenvector at λ = {lambda} (all row cross products vanish)"
        )));
    }
    Ok([best[0] / best_norm, best[1] / best_norm, best[2] / best_norm])
}

/// Zero-loss eigenvalues of H(q), ascending. With Γ = γ_s = 0 the matrix is
/// real symmetric tridiagonal with nonzero couplings, so the eigenvalues are
/// simple and sorting is a legitimate branch assignment: (L, D, U).
pub fn zero_loss_energies(q: f64, params: &MediumParams) -> [f64; 3] {
    let zl = params.zero_loss();
    let h = hamiltonian(q, &zl);
    let a = h[0][0].re;
    let b = h[1][1].re;
    let c = h[2][2].re;
    let g = h[0][1].re;
    let w = h[1][2].re;
    // Trigonometric eigenvalues of a real symmetric 3×3, then a Newton
    // polish on the shifted determinant to recover the small dark root
    // sitting next to |cq| ~ 10⁸.
    let q_mean = (a + b + c) / 3.0;
    let p2 = (a - q_mean).powi(2) + (b - q_mean).powi(2) + (c - q_mean).powi(2)
        + 2.0 * (g * g + w * w);
    let p = (p2 / 6.0).sqrt();
    let mut eig = if p <= 0.0 {
        [q_mean, q_mean, q_mean]
    } else {
        let bb = [
            [(a - q_mean) / p, g / p, 0.0],
            [g / p, (b - q_mean) / p, w / p],
            [0.0, w / p, (c - q_mean) / p],
        ];
        let detb = bb[0][0] * (bb[1][1] * bb[2][2] - bb[1][2] * bb[1][2])
            - bb[0][1] * bb[0][1] * bb[2][2];
        let r = (detb / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q_mean + 2.0 * p * (phi).cos();
        let e3 = q_mean + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e3, 3.0 * q_mean - e1 - e3, e1]
    };
    for e in eig.iter_mut() {
        *e = newton_polish(&h, C64::new(*e, 0.0)).re;
    }
    eig.sort_by(f64::total_cmp);
    eig
}

/// Zero-loss eigensystem: ascending (L, D, U) energies with orthonormal real
/// eigenvectors (returned as complex for downstream overlap arithmetic).
pub fn zero_loss_eigensystem(q: f64, params: &MediumParams) -> Result<([f64; 3], [[C64; 3]; 3])> {
    let zl = params.zero_loss();
    let h = hamiltonian(q, &zl);
    let energies = zero_loss_energies(q, params);
    let mut vectors = [[C64::new(0.0, 0.0); 3]; 3];
    for (i, &e) in energies.iter().enumerate() {
        vectors[i] = eigenvector(&h, C64::new(e, 0.0))?;
    }
    Ok((energies, vectors))
}

fn overlap_mag(u: &[C64; 3], v: &[C64; 3]) -> f64 {
    (u[0].conj() * v[0] + u[1].conj() * v[1] + u[2].conj() * v[2]).norm()
}

/// Complex eigensystem at one q with branch labels assigned by maximal
/// eigenvector overlap against the zero-loss reference (all six assignments
/// tried; the best total wins). Returns [(ω, eigenvector); 3] ordered L, D, U.
pub fn branch_eigensystem(q: f64, params: &MediumParams) -> Result<[(C64, [C64; 3]); 3]> {
    let (_, reference) = zero_loss_eigensystem(q, params)?;
    let h = hamiltonian(q, params);
    let lambdas = eigenvalues(&h);
    let mut vecs = [[C64::new(0.0, 0.0); 3]; 3];
    for (i, &lam) in lambdas.iter().enumerate() {
        vecs[i] = eigenvector(&h, lam)?;
    }
    let mut ovl = [[0.0f64; 3]; 3];
    for b in 0..3 {
        for j in 0..3 {
            ovl[b][j] = overlap_mag(&reference[b], &vecs[j]);
        }
    }
    const PERMS: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut best_perm = PERMS[0];
    let mut best_total = f64::NEG_INFINITY;
    for perm in PERMS {
        let total = ovl[0][perm[0]] + ovl[1][perm[1]] + ovl[2][perm[2]];
        if total > best_total {
            best_total = total;
            best_perm = perm;
        }
    }
    let worst = (0..3).map(|b| ovl[b][best_perm[b]]).fold(f64::INFINITY, f64::min);
    if worst < 0.5 {
        return Err(Error::Tracking { q, overlap: worst });
    }
    Ok([
        (lambdas[best_perm[0]], vecs[best_perm[0]]),
        (lambdas[best_perm[1]], vecs[best_perm[1]]),
        (lambdas[best_perm[2]], vecs[best_perm[2]]),
    ])
}

/// Continuity-tracked branch curves over a momentum grid.
#[derive(Debug, Clone)]
pub struct BranchSpectrum {
    pub q_grid: Vec<f64>,
    /// Complex dispersion per branch, indexed [BranchLabel::index()][grid point].
    pub omega: [Vec<C64>; 3],
    /// Rydberg (S) component of the unit-norm eigenvector per branch/point.
    pub rydberg_overlap: [Vec<C64>; 3],
    /// Full {E, P, S} eigenvectors per branch/point.
    pub eigenvectors: [Vec<[C64; 3]>; 3],
}

impl BranchSpectrum {
    pub fn omega_at(&self, branch: BranchLabel, i: usize) -> C64 {
        self.omega[branch.index()][i]
    }
}

/// Diagonalize H over `q_grid`, assigning branch labels at the point nearest
/// q = 0 from the zero-loss reference and propagating them outward by
/// adjacent-point eigenvector overlap.
/// Continue the labeled eigensystem from `prev` (at `q_prev`) to `q`.
/// If the permutation match is ambiguous (worst per-branch overlap below
/// 0.9) the step is bisected, tracking through the midpoint, so that label
/// continuity survives grid steps much wider than the anticrossing region.
fn continue_labels(
    prev: &[[C64; 3]; 3],
    q_prev: f64,
    q: f64,
    params: &MediumParams,
    depth: u32,
) -> Result<[(C64, [C64; 3]); 3]> {
    let h = hamiltonian(q, params);
    let lambdas = eigenvalues(&h);
    let mut vecs = [[C64::new(0.0, 0.0); 3]; 3];
    for (j, &lam) in lambdas.iter().enumerate() {
        vecs[j] = eigenvector(&h, lam)?;
    }
    let mut ovl = [[0.0f64; 3]; 3];
    for b in 0..3 {
        for j in 0..3 {
            ovl[b][j] = overlap_mag(&prev[b], &vecs[j]);
        }
    }
    const PERMS: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut best = PERMS[0];
    let mut best_total = f64::NEG_INFINITY;
    for perm in PERMS {
        let total = ovl[0][perm[0]] + ovl[1][perm[1]] + ovl[2][perm[2]];
        if total > best_total {
            best_total = total;
            best = perm;
        }
    }
    let worst = (0..3).map(|b| ovl[b][best[b]]).fold(f64::INFINITY, f64::min);
    let mid = 0.5 * (q_prev + q);
    if worst < 0.9 && depth < 48 && mid != q_prev && mid != q {
        let half = continue_labels(prev, q_prev, mid, params, depth + 1)?;
        let half_vecs = [half[0].1, half[1].1, half[2].1];
        return continue_labels(&half_vecs, mid, q, params, depth + 1);
    }
    if worst < 0.5 {
        return Err(Error::Tracking { q, overlap: worst });
    }
    Ok([
        (lambdas[best[0]], vecs[best[0]]),
        (lambdas[best[1]], vecs[best[1]]),
        (lambdas[best[2]], vecs[best[2]]),
    ])
}

pub fn branch_spectrum(q_grid: &[f64], params: &MediumParams) -> Result<BranchSpectrum> {
    if q_grid.len() < 2 {
        return Err(Error::Grid("branch_spectrum needs at least two grid points".into()));
    }
    if q_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("q_grid must be strictly increasing".into()));
    }
    let n = q_grid.len();
    let seed = q_grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();

    let mut omega: [Vec<C64>; 3] = Default::default();
    let mut svals: [Vec<C64>; 3] = Default::default();
    let mut evecs: [Vec<[C64; 3]>; 3] = Default::default();
    for b in 0..3 {
        omega[b] = vec![C64::new(0.0, 0.0); n];
        svals[b] = vec![C64::new(0.0, 0.0); n];
        evecs[b] = vec![[C64::new(0.0, 0.0); 3]; n];
    }

    let store = |omega: &mut [Vec<C64>; 3],
                 svals: &mut [Vec<C64>; 3],
                 evecs: &mut [Vec<[C64; 3]>; 3],
                 i: usize,
                 sys: &[(C64, [C64; 3]); 3]| {
        for b in 0..3 {
            omega[b][i] = sys[b].0;
            svals[b][i] = sys[b].1[2];
            evecs[b][i] = sys[b].1;
        }
    };

    let seed_sys = branch_eigensystem(q_grid[seed], params)?;
    store(&mut omega, &mut svals, &mut evecs, seed, &seed_sys);

    // Walk outward from the seed, matching each point's eigenvectors against
    // the previous point's labeled set.  A user grid need not resolve the
    // photon anticrossing (its width in q can be orders of magnitude below
    // any sensible plotting step), so a step whose best match is ambiguous
    // is bisected internally until the continuation is unambiguous.
    let walk = |range: Box<dyn Iterator<Item = usize>>,
                    omega: &mut [Vec<C64>; 3],
                    svals: &mut [Vec<C64>; 3],
                    evecs: &mut [Vec<[C64; 3]>; 3]|
     -> Result<()> {
        let mut prev: [[C64; 3]; 3] = [evecs[0][seed], evecs[1][seed], evecs[2][seed]];
        let mut q_prev = q_grid[seed];
        for i in range {
            let q = q_grid[i];
            let sys = continue_labels(&prev, q_prev, q, params, 0)?;
            store(omega, svals, evecs, i, &sys);
            prev = [sys[0].1, sys[1].1, sys[2].1];
            q_prev = q;
        }
        Ok(())
    };

    walk(Box::new(seed + 1..n), &mut omega, &mut svals, &mut evecs)?;
    walk(Box::new((0..seed).rev()), &mut omega, &mut svals, &mut evecs)?;

    Ok(BranchSpectrum { q_grid: q_grid.to_vec(), omega, rydberg_overlap: svals, eigenvectors: evecs })
}

/// dω_ν/dq at q by Richardson-extrapolated centered differences, with branch
/// identity at stencil points resolved by overlap against the center
/// eigenvector. `q` must be interior to the spectrum's grid.
pub fn group_velocity(
    branch: BranchLabel,
    q: f64,
    spectrum: &BranchSpectrum,
    params: &MediumParams,
) -> Result<C64> {
    let (lo, hi) = (spectrum.q_grid[0], *spectrum.q_grid.last().unwrap());
    if q <= lo || q >= hi {
        return Err(Error::Grid(format!(
            "group_velocity refused at grid edge: q = {q} outside open interval ({lo}, {hi})"
        )));
    }
    let center = branch_eigensystem(q, params)?;
    let vc = center[branch.index()].1;
    let omega_matched = |qq: f64| -> Result<C64> {
        let h = hamiltonian(qq, params);
        let lambdas = eigenvalues(&h);
        let mut best = lambdas[0];
        let mut best_ovl = -1.0;
        for &lam in &lambdas {
            let v = eigenvector(&h, lam)?;
            let o = overlap_mag(&vc, &v);
            if o > best_ovl {
                best_ovl = o;
                best = lam;
            }
        }
        Ok(best)
    };
    // Step scale: dispersion features live at the slow-light momentum scale,
    // so seed from the local grid spacing and shrink until Richardson agrees.
    let idx = spectrum.q_grid.partition_point(|&x| x < q).min(spectrum.q_grid.len() - 1);
    let local = (spectrum.q_grid[idx] - spectrum.q_grid[idx.saturating_sub(1)]).abs();
    let mut h = (local * 0.5).max(q.abs() * 1e-9).max(1e-12);
    h = h.min((hi - q).min(q - lo) * 0.5);
    for _ in 0..24 {
        let d_h = (omega_matched(q + h)? - omega_matched(q - h)?) / (2.0 * h);
        let hh = h / 2.0;
        let d_hh = (omega_matched(q + hh)? - omega_matched(q - hh)?) / (2.0 * hh);
        let richardson = (4.0 * d_hh - d_h) / 3.0;
        let err = (richardson - d_hh).norm();
        if err <= 1e-6 * richardson.norm().max(1e-300) {
            return Ok(richardson);
        }
        h = hh;
    }
    Err(Error::Convergence(format!(
        "group_velocity stencil did not reach 1e-6 relative at q = {q}"
    )))
}

/// √((Δ + Δ_s)² + Ω²) with the branch tracked continuously along a straight
/// path from the zero-loss (real-parameter) point, where the principal root
/// is unambiguous.
fn tracked_saturation_sqrt(params: &MediumParams) -> C64 {
    let omega_sq = params.omega_c_rabi * params.omega_c_rabi;
    let arg_at = |t: f64| -> C64 {
        let d = C64::new(params.delta, t * 0.5 * params.gamma_p);
        let ds = C64::new(params.delta_s, t * 0.5 * params.gamma_s);
        let s = d + ds;
        s * s + omega_sq
    };
    let mut root = arg_at(0.0).sqrt(); // real params ⇒ argument real positive
    const STEPS: usize = 64;
    for i in 1..=STEPS {
        let t = i as f64 / STEPS as f64;
        let principal = arg_at(t).sqrt();
        root = if (principal - root).norm() <= (-principal - root).norm() {
            principal
        } else {
            -principal
        };
    }
    root
}

/// Saturation energy of the flat branch regions:
/// ω₊ = ½(−Δ + √(Δ² + 2ΔΔ_s + Δ_s² + Ω_c²) + Δ_s).
pub fn omega_plus(params: &MediumParams) -> C64 {
    0.5 * (-params.cap_delta() + tracked_saturation_sqrt(params) + params.cap_delta_s())
}

/// Momentum argument of the Rydberg propagator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropagatorMomentum {
    Finite(f64),
    /// The k → ∞ algebraic limit used by the flat-dispersion rate formula.
    Infinite,
}

/// Rydberg-projected single-body propagator G_ss[k, ω]: the (S, S) element
/// of (ωI − H(k))⁻¹ in closed form. Written with Δ̃ = Δ − iγ_s/2 so that
/// Δ̃ + Δ_s reproduces the Hamiltonian's ω + Δ + δ_s entry exactly at
/// finite γ_s.
pub fn g_ss(k: PropagatorMomentum, omega: C64, params: &MediumParams) -> Result<C64> {
    let d = params.cap_delta_tilde();
    let ds = params.cap_delta_s();
    let quarter_rabi_sq = 0.25 * params.omega_c_rabi * params.omega_c_rabi;
    let (num, den) = match k {
        PropagatorMomentum::Finite(k) => {
            let ck = C64::new(params.light_speed * k, 0.0);
            let core = (omega - ck) * (d + ds + omega) - params.g_peak * params.g_peak;
            (core, (ds + omega) * core + quarter_rabi_sq * (ck - omega))
        }
        PropagatorMomentum::Infinite => {
            let num = d + ds + omega;
            (num, (ds + omega) * num - quarter_rabi_sq)
        }
    };
    let scale = num.norm().max(quarter_rabi_sq).max(1.0);
    if den.norm() < 1e-12 * scale {
        return Err(Error::Pole {
            context: "G_ss".into(),
            location: format!("k = {k:?}, ω = {omega}"),
        });
    }
    Ok(num / den)
}

/// Determinant of the lower-right 2×2 block of ωI − H (the {P, S} sector):
/// det₂(ω) = (ω + Δ + δ_s)(ω + Δ_s) − Ω²/4.
fn det2(omega: C64, params: &MediumParams) -> C64 {
    (omega + params.cap_delta() + params.delta_s) * (omega + params.cap_delta_s())
        - C64::new(0.25 * params.omega_c_rabi * params.omega_c_rabi, 0.0)
}

/// Exact inversion of the dark dispersion: the (complex) momentum at which
/// the branch through ω exists, from det(ωI − H(q)) = 0 solved for cq.
pub fn momentum_of_energy(omega: C64, params: &MediumParams) -> Result<C64> {
    let d2 = det2(omega, params);
    let scale = (omega.norm() + params.omega_c_rabi * params.omega_c_rabi).max(1.0);
    if d2.norm() < 1e-12 * scale {
        return Err(Error::Pole {
            context: "dispersion inversion".into(),
            location: format!("det₂(ω) ≈ 0 at ω = {omega}"),
        });
    }
    let g_sq = params.g_peak * params.g_peak;
    Ok((omega - g_sq * (omega + params.cap_delta_s()) / d2) / params.light_speed)
}

/// Analytic 1/v_g(ω) = dq/dω along the dispersion inversion:
/// (1/c)[1 − g²(det₂ − (ω + Δ_s)·det₂′)/det₂²].
pub fn inverse_group_velocity(omega: C64, params: &MediumParams) -> Result<C64> {
    let d2 = det2(omega, params);
    let scale = (omega.norm() + params.omega_c_rabi * params.omega_c_rabi).max(1.0);
    if d2.norm() < 1e-12 * scale {
        return Err(Error::Pole {
            context: "1/v_g".into(),
            location: format!("det₂(ω) ≈ 0 at ω = {omega}"),
        });
    }
    let d2_prime = (omega + params.cap_delta_s()) + (omega + params.cap_delta() + params.delta_s);
    let g_sq = params.g_peak * params.g_peak;
    let one = C64::new(1.0, 0.0);
    Ok((one - g_sq * (d2 - (omega + params.cap_delta_s()) * d2_prime) / (d2 * d2))
        / params.light_speed)
}

/// Closed-form 1/v_g at the saturated outgoing energy −2ω₊, valid for
/// g ≫ Ω_c, |Δ_s|, |Δ| (general Δ_s form). Kept as an independent
/// cross-check route against `inverse_group_velocity`.
pub fn inv_vg_saturated(params: &MediumParams) -> C64 {
    let d = params.cap_delta();
    let ds = params.cap_delta_s();
    let g_sq = params.g_peak * params.g_peak;
    let omega_sq = params.omega_c_rabi * params.omega_c_rabi;
    let s = tracked_saturation_sqrt(params);
    let num = g_sq * (d - s) * (d - s) + g_sq * omega_sq / 4.0;
    let den_core = 3.0 * d * d - 3.0 * d * s + 2.0 * d * ds + ds * ds + 0.75 * omega_sq;
    num / (params.light_speed * den_core * den_core)
}

/// The Δ_s → 0 reduction of `inv_vg_saturated`.
pub fn inv_vg_saturated_ds0(params: &MediumParams) -> C64 {
    let d = params.cap_delta();
    let g_sq = params.g_peak * params.g_peak;
    let omega_sq = params.omega_c_rabi * params.omega_c_rabi;
    let s = (d * d + omega_sq).sqrt();
    let num = g_sq * (-2.0 * d * s + 2.0 * d * d + 1.25 * omega_sq);
    let den_core = -d * s + d * d + 0.25 * omega_sq;
    num / (9.0 * params.light_speed * den_core * den_core)
}

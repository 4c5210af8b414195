//! Adaptive Gauss-Kronrod quadrature for complex-valued integrands on real
//! intervals, with an a posteriori error estimate from the embedded G7/K15
//! pair.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

// QUADPACK 15-point Kronrod abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
// Embedded 7-point Gauss weights (for XGK indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One G7/K15 panel: returns (kronrod value, |kronrod - gauss|).
fn kronrod_panel<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).norm())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: C64,
    pub error_estimate: f64,
    pub panels: usize,
}

/// Adaptive integration of `f` over [a, b] to relative tolerance `rel_tol`.
///
/// The interval is split by bisection, always refining the panel with the
/// largest error estimate. `initial_panels` seeds the subdivision; pass more
/// for oscillatory integrands so no oscillation is stepped over.
pub fn adaptive_kronrod<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    initial_panels: usize,
    max_panels: usize,
) -> Result<QuadResult> {
    struct Panel {
        a: f64,
        b: f64,
        value: C64,
        err: f64,
    }
    let n0 = initial_panels.max(1);
    let mut panels: Vec<Panel> = Vec::with_capacity(n0);
    let step = (b - a) / n0 as f64;
    for i in 0..n0 {
        let pa = a + i as f64 * step;
        let pb = if i + 1 == n0 { b } else { a + (i + 1) as f64 * step };
        let (v, e) = kronrod_panel(&mut f, pa, pb);
        panels.push(Panel { a: pa, b: pb, value: v, err: e });
    }
    loop {
        let total: C64 = panels.iter().map(|p| p.value).sum();
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        let scale = total.norm().max(f64::MIN_POSITIVE);
        if total_err <= rel_tol * scale {
            return Ok(QuadResult { value: total, error_estimate: total_err, panels: panels.len() });
        }
        if panels.len() >= max_panels {
            return Err(Error::Convergence(format!(
                "adaptive Kronrod: {} panels, error {:.3e} > target {:.3e} (relative)",
                panels.len(),
                total_err / scale,
                rel_tol
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("non-empty panel list");
        let Panel { a: pa, b: pb, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        let (v1, e1) = kronrod_panel(&mut f, pa, mid);
        let (v2, e2) = kronrod_panel(&mut f, mid, pb);
        panels.push(Panel { a: pa, b: mid, value: v1, err: e1 });
        panels.push(Panel { a: mid, b: pb, value: v2, err: e2 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let r = adaptive_kronrod(|x| C64::new(x * x * x - 2.0 * x + 1.0, 0.0), -1.0, 3.0, 1e-12, 1, 100)
            .unwrap();
        // ∫ (x³-2x+1) over [-1,3] = [x⁴/4 - x² + x] = (81/4-9+3) - (1/4-1-1) = 16
        assert!((r.value.re - 16.0).abs() < 1e-10);
    }

    #[test]
    fn oscillatory_complex_integrand() {
        // ∫_0^{3π/2} e^{i 5 x} dx = (e^{i 15π/2} − 1)/(5i) = (−1 + i)/5
        let r = adaptive_kronrod(|x| C64::new(0.0, 5.0 * x).exp(), 0.0, 1.5 * PI, 1e-10, 8, 400).unwrap();
        let exact = C64::new(-0.2, 0.2);
        assert!((r.value - exact).norm() < 1e-9);
    }

    #[test]
    fn lorentzian_tail() {
        // ∫_{-∞}^{∞} dx/(1+x²) = π, truncated window
        let r = adaptive_kronrod(|x| C64::new(1.0 / (1.0 + x * x), 0.0), -1e4, 1e4, 1e-8, 32, 2000)
            .unwrap();
        assert!((r.value.re - (PI - 2.0 / 1e4)).abs() < 1e-6);
    }

    #[test]
    fn non_convergence_reported() {
        // |x|^{-1/2} near 0 with far too few allowed panels
        let err = adaptive_kronrod(
            |x| C64::new(x.abs().max(1e-300).powf(-0.5), 0.0),
            -1.0,
            1.0,
            1e-14,
            1,
            4,
        );
        assert!(matches!(err, Err(Error::Convergence(_))));
    }
}

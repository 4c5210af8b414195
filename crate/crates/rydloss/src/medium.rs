//! Physical parameters of the Rydberg-EIT medium and derived scales.
//!
//! [`MediumParams`] stores every input in internal units (µm, µs, rad/µs);
//! [`DerivedScales`] collects the scalars the other modules consume: complex
//! detunings, the dark-branch mass, the saturation frequency ω_c, the
//! threshold momentum k_c, blockade radius, optical depth per blockade
//! radius, and the dimensionless interaction strength φ.

use std::collections::HashMap;
use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{mhz_to_angular, LIGHT_SPEED};

/// Physical inputs, all in internal units (rad/µs, µm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Collective probe coupling g at peak density, rad/µs.
    pub g_peak: f64,
    /// Control Rabi frequency Ω_c, rad/µs.
    pub omega_c_rabi: f64,
    /// Intermediate-state linewidth Γ, rad/µs.
    pub gamma_p: f64,
    /// Rydberg-state linewidth γ_s, rad/µs.
    pub gamma_s: f64,
    /// Single-photon detuning δ, rad/µs.
    pub delta: f64,
    /// Two-photon detuning δ_s, rad/µs.
    pub delta_s: f64,
    /// Van der Waals coefficient C₆, rad/µs·µm⁶ (sign included).
    pub c6: f64,
    /// Optical depth of the cloud (resonant two-level intensity transmission e^-OD).
    pub od: f64,
    /// Rms axial cloud size σ_z, µm.
    pub sigma_z: f64,
    /// Speed of light, µm/µs.
    pub light_speed: f64,
}

impl MediumParams {
    /// Build from experiment-unit values: frequencies as ν = ω/2π in MHz,
    /// lengths in µm, C6 in MHz·µm⁶. Required keys: `g_MHz`, `omega_c_MHz`,
    /// `gamma_MHz`, `gamma_s_MHz`, `delta_MHz`, `delta_s_MHz`, `C6`, `OD`,
    /// `sigma_z_um`.
    pub fn from_experiment_units(values: &HashMap<String, f64>) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            values.get(key).copied().ok_or_else(|| Error::MissingKey(key.to_string()))
        };
        let p = MediumParams {
            g_peak: mhz_to_angular(get("g_MHz")?),
            omega_c_rabi: mhz_to_angular(get("omega_c_MHz")?),
            gamma_p: mhz_to_angular(get("gamma_MHz")?),
            gamma_s: mhz_to_angular(get("gamma_s_MHz")?),
            delta: mhz_to_angular(get("delta_MHz")?),
            delta_s: mhz_to_angular(get("delta_s_MHz")?),
            c6: mhz_to_angular(get("C6")?),
            od: get("OD")?,
            sigma_z: get("sigma_z_um")?,
            light_speed: LIGHT_SPEED,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64); 6] = [
            ("gamma_p", self.gamma_p),
            ("od", self.od),
            ("sigma_z", self.sigma_z),
            ("omega_c_rabi", self.omega_c_rabi),
            ("g_peak", self.g_peak),
            ("light_speed", self.light_speed),
        ];
        for (field, v) in checks {
            if !(v > 0.0) {
                return Err(Error::validation(field, format!("must be > 0, got {v}")));
            }
        }
        if !(self.gamma_s >= 0.0) {
            return Err(Error::validation("gamma_s", format!("must be >= 0, got {}", self.gamma_s)));
        }
        Ok(())
    }

    /// Δ = δ + iΓ/2.
    #[inline]
    pub fn cap_delta(&self) -> C64 {
        C64::new(self.delta, self.gamma_p / 2.0)
    }

    /// Δ_s = δ_s + iγ_s/2.
    #[inline]
    pub fn cap_delta_s(&self) -> C64 {
        C64::new(self.delta_s, self.gamma_s / 2.0)
    }

    /// Δ̃ = δ + iΓ/2 − iγ_s/2.
    #[inline]
    pub fn cap_delta_tilde(&self) -> C64 {
        C64::new(self.delta, (self.gamma_p - self.gamma_s) / 2.0)
    }

    /// Coupling consistent with the measured optical depth:
    /// g_od² = OD·c·Γ / (4·√(2π)·σ_z). This is the peak coupling of a
    /// Gaussian cloud whose resonant two-level transmission is e^-OD.
    pub fn od_consistent_coupling(&self) -> f64 {
        (self.od * self.light_speed * self.gamma_p / (4.0 * (TAU).sqrt() * self.sigma_z)).sqrt()
    }

    /// Same medium with g_peak replaced by the OD-consistent value.
    pub fn with_od_consistent_coupling(&self) -> Self {
        MediumParams { g_peak: self.od_consistent_coupling(), ..*self }
    }

    /// Zero-dissipation copy (Γ → 0⁺, γ_s → 0). Γ is kept at a tiny positive
    /// value to satisfy validation; callers doing zero-loss algebra should
    /// treat detunings as purely real.
    pub fn zero_loss(&self) -> Self {
        MediumParams { gamma_p: 1e-300, gamma_s: 0.0, ..*self }
    }

    /// Experiment preset: measured operating point
    /// (Ω_c/2π = 23.5 MHz, γ_s/2π = 0.4 MHz, OD = 37, σ_z = 40 µm).
    pub fn experiment_preset() -> Self {
        MediumParams {
            g_peak: mhz_to_angular(1000.0),
            omega_c_rabi: mhz_to_angular(23.5),
            gamma_p: mhz_to_angular(7.0),
            gamma_s: mhz_to_angular(0.4),
            delta: mhz_to_angular(25.0),
            delta_s: 0.0,
            c6: mhz_to_angular(DEFAULT_C6_MHZ_UM6),
            od: 37.0,
            sigma_z: 40.0,
            light_speed: LIGHT_SPEED,
        }
    }

    /// Simulation preset: Ω_c/2π = 25 MHz, γ/2π = 0.3 MHz, OD = 37, σ_z = 40 µm.
    pub fn simulation_preset() -> Self {
        MediumParams {
            omega_c_rabi: mhz_to_angular(25.0),
            gamma_s: mhz_to_angular(0.3),
            ..Self::experiment_preset()
        }
    }

    pub fn with_delta_mhz(&self, delta_mhz: f64) -> Self {
        MediumParams { delta: mhz_to_angular(delta_mhz), ..*self }
    }

    /// Same medium at a different probe detuning (rad/µs).
    pub fn with_delta(&self, delta: f64) -> Self {
        MediumParams { delta, ..*self }
    }

    pub fn with_detunings_mhz(&self, delta_mhz: f64, delta_s_mhz: f64) -> Self {
        MediumParams {
            delta: mhz_to_angular(delta_mhz),
            delta_s: mhz_to_angular(delta_s_mhz),
            ..*self
        }
    }

    /// Format back to the experiment-unit key map (inverse of
    /// [`MediumParams::from_experiment_units`]).
    pub fn to_experiment_units(&self) -> HashMap<String, f64> {
        let mut m = HashMap::new();
        m.insert("g_MHz".into(), self.g_peak / TAU);
        m.insert("omega_c_MHz".into(), self.omega_c_rabi / TAU);
        m.insert("gamma_MHz".into(), self.gamma_p / TAU);
        m.insert("gamma_s_MHz".into(), self.gamma_s / TAU);
        m.insert("delta_MHz".into(), self.delta / TAU);
        m.insert("delta_s_MHz".into(), self.delta_s / TAU);
        m.insert("C6".into(), self.c6 / TAU);
        m.insert("OD".into(), self.od);
        m.insert("sigma_z_um".into(), self.sigma_z);
        m
    }
}

/// Default C₆ in MHz·µm⁶. Calibration choice, not a literature value: picked
/// so that the blockade radius r_b = (C₆|χ̄(0)|)^{1/6} stays within the 7-10 µm
/// window over δ/2π ∈ [15, 30] MHz at the experiment preset, with the maximum
/// r_b = 10 µm reached at δ/2π = 30 MHz.
pub const DEFAULT_C6_MHZ_UM6: f64 = 1.07717085558725e7;

/// Derived scalars; see module docs. All frequencies rad/µs, lengths µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    /// Δ = δ + iΓ/2.
    pub cap_delta: C64,
    /// Δ_s = δ_s + iγ_s/2.
    pub cap_delta_s: C64,
    /// Δ̃ = δ + iΓ/2 − iγ_s/2.
    pub cap_delta_tilde: C64,
    /// Dark-branch mass m = −2g⁴/(ΔΩ_c²c²), from the input g_peak.
    pub mass_m: C64,
    /// ω_c = Ω_c²/(4|Δ|), the saturation scale of the dark dispersion.
    pub omega_c_scale: f64,
    /// k_c = ω_c/v_g ≈ g²/(c|Δ|).
    pub k_c: f64,
    /// Optical depth per blockade radius, OD·r_b/(√(2π)σ_z).
    pub od_b: f64,
    /// Interaction strength φ = |r_b/√(χ̄(0)/m)| with the OD-consistent mass.
    pub phi: f64,
    /// Blockade radius (|C₆·χ̄(0)|)^{1/6}.
    pub r_b: f64,
}

/// Compute every derived scale from the medium parameters and χ̄(0).
///
/// χ̄(0) is injected by the caller (evaluate `interactions::chi_bar` at ω = 0
/// first) to keep the medium ← interactions dependency acyclic.
///
/// φ uses the mass built from the OD-consistent coupling, so that the
/// far-detuned identity φ ≈ OD_b·Γ/(4|Δ|) holds for the medium the photons
/// actually traverse; `mass_m` itself keeps the input g_peak, matching the
/// dispersion curvature of the polaritons module.
pub fn derive_scales(params: &MediumParams, chi0: C64) -> Result<DerivedScales> {
    if !chi0.is_finite() {
        return Err(Error::validation("chi0", "must be finite"));
    }
    if chi0.norm() == 0.0 {
        return Err(Error::Resonance(
            "χ̄(0) = 0 (δ at the δ₀ resonance); blockade radius undefined, \
             use interactions::resonance_detunings to characterize this point"
                .into(),
        ));
    }
    let cap_delta = params.cap_delta();
    let c = params.light_speed;
    let g = params.g_peak;
    let w = params.omega_c_rabi;
    let mass_m = -2.0 * g.powi(4) / (cap_delta * w.powi(2) * c.powi(2));
    let r_b = (params.c6 * chi0).norm().powf(1.0 / 6.0);
    let od_b = params.od * r_b / ((TAU).sqrt() * params.sigma_z);
    let g_od = params.od_consistent_coupling();
    let mass_od = -2.0 * g_od.powi(4) / (cap_delta * w.powi(2) * c.powi(2));
    let phi = r_b * (mass_od / chi0).sqrt().norm();
    Ok(DerivedScales {
        cap_delta,
        cap_delta_s: params.cap_delta_s(),
        cap_delta_tilde: params.cap_delta_tilde(),
        mass_m,
        omega_c_scale: w.powi(2) / (4.0 * cap_delta.norm()),
        k_c: g.powi(2) / (c * cap_delta.norm()),
        od_b,
        phi,
        r_b,
    })
}

/// Config-file schema (TOML, documented keys; all frequency keys mean ω/2π in MHz).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediumConfig {
    #[serde(rename = "g_MHz")]
    pub g_mhz: f64,
    #[serde(rename = "omega_c_MHz")]
    pub omega_c_mhz: f64,
    #[serde(rename = "gamma_MHz")]
    pub gamma_mhz: f64,
    #[serde(rename = "gamma_s_MHz")]
    pub gamma_s_mhz: f64,
    #[serde(rename = "delta_MHz")]
    pub delta_mhz: f64,
    #[serde(rename = "delta_s_MHz")]
    pub delta_s_mhz: f64,
    #[serde(rename = "C6")]
    pub c6: f64,
    #[serde(rename = "OD")]
    pub od: f64,
    pub sigma_z_um: f64,
    /// "gaussian" or "homogeneous".
    #[serde(default = "default_profile")]
    pub profile: String,
}

fn default_profile() -> String {
    "gaussian".to_string()
}

impl MediumConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_params(&self) -> Result<MediumParams> {
        let mut m = HashMap::new();
        m.insert("g_MHz".into(), self.g_mhz);
        m.insert("omega_c_MHz".into(), self.omega_c_mhz);
        m.insert("gamma_MHz".into(), self.gamma_mhz);
        m.insert("gamma_s_MHz".into(), self.gamma_s_mhz);
        m.insert("delta_MHz".into(), self.delta_mhz);
        m.insert("delta_s_MHz".into(), self.delta_s_mhz);
        m.insert("C6".into(), self.c6);
        m.insert("OD".into(), self.od);
        m.insert("sigma_z_um".into(), self.sigma_z_um);
        MediumParams::from_experiment_units(&m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::chi_bar;

    fn exp_map() -> HashMap<String, f64> {
        let mut m = HashMap::new();
        for (k, v) in [
            ("g_MHz", 1000.0),
            ("omega_c_MHz", 23.5),
            ("gamma_MHz", 7.0),
            ("gamma_s_MHz", 0.4),
            ("delta_MHz", 25.0),
            ("delta_s_MHz", 0.0),
            ("C6", DEFAULT_C6_MHZ_UM6),
            ("OD", 37.0),
            ("sigma_z_um", 40.0),
        ] {
            m.insert(k.to_string(), v);
        }
        m
    }

    #[test]
    fn angular_conversion_applied() {
        let mut m = exp_map();
        m.insert("omega_c_MHz".into(), 23.5);
        let p = MediumParams::from_experiment_units(&m).unwrap();
        assert!((p.omega_c_rabi - 147.655).abs() < 5e-3);
        assert!((p.omega_c_rabi - TAU * 23.5).abs() < 1e-12 * p.omega_c_rabi);
    }

    #[test]
    fn simulation_operating_point_is_valid() {
        let p = MediumParams::from_experiment_units(&exp_map()).unwrap();
        assert_eq!(p.od, 37.0);
        assert_eq!(p.sigma_z, 40.0);
    }

    #[test]
    fn negative_linewidth_rejected() {
        let mut m = exp_map();
        m.insert("gamma_MHz".into(), -7.0);
        let err = MediumParams::from_experiment_units(&m).unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "gamma_p"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn missing_key_reported() {
        let mut m = exp_map();
        m.remove("OD");
        let err = MediumParams::from_experiment_units(&m).unwrap_err();
        match err {
            Error::MissingKey(k) => assert_eq!(k, "OD"),
            other => panic!("expected missing key, got {other}"),
        }
    }

    #[test]
    fn unit_round_trip_12_digits() {
        let p = MediumParams::from_experiment_units(&exp_map()).unwrap();
        let back = p.to_experiment_units();
        for (k, v) in exp_map() {
            let b = back[&k];
            assert!((b - v).abs() <= 1e-12 * v.abs().max(1.0), "{k}: {b} vs {v}");
        }
    }

    #[test]
    fn derived_scales_operating_point() {
        let p = MediumParams::experiment_preset();
        let chi0 = chi_bar(C64::new(0.0, 0.0), &p).unwrap();
        let s = derive_scales(&p, chi0).unwrap();
        assert!(s.phi < 0.3, "phi = {}", s.phi);
        assert!(s.phi > 0.0);
        assert!(s.od_b < 4.0, "od_b = {}", s.od_b);
        assert!((s.cap_delta.im - p.gamma_p / 2.0).abs() == 0.0);
        assert!((s.cap_delta_s.im - p.gamma_s / 2.0).abs() == 0.0);
        assert!(s.r_b > 0.0);
    }

    #[test]
    fn phi_asymptotic_consistency() {
        // |δ| ≫ Ω_c/2, γ_s → 0: φ ≈ OD_b·Γ/(4|Δ|).
        let p = MediumParams {
            delta: mhz_to_angular(100.0),
            gamma_s: 0.0,
            ..MediumParams::experiment_preset()
        };
        let chi0 = chi_bar(C64::new(0.0, 0.0), &p).unwrap();
        let s = derive_scales(&p, chi0).unwrap();
        let asym = s.od_b * p.gamma_p / (4.0 * s.cap_delta.norm());
        assert!((s.phi - asym).abs() / s.phi < 0.05, "phi={} asym={}", s.phi, asym);
    }

    #[test]
    fn phi_vanishes_with_gamma() {
        // As Γ → 0 at fixed OD the OD-consistent coupling vanishes and so does φ.
        let base = MediumParams {
            delta: mhz_to_angular(100.0),
            gamma_s: 0.0,
            ..MediumParams::experiment_preset()
        };
        let mut last_phi = f64::INFINITY;
        for gamma_mhz in [7.0, 0.7, 0.07] {
            let p = MediumParams { gamma_p: mhz_to_angular(gamma_mhz), ..base };
            let chi0 = chi_bar(C64::new(0.0, 0.0), &p).unwrap();
            let s = derive_scales(&p, chi0).unwrap();
            let asym = s.od_b * p.gamma_p / (4.0 * s.cap_delta.norm());
            assert!((s.phi - asym).abs() / s.phi < 0.05);
            assert!(s.phi < last_phi);
            last_phi = s.phi;
        }
        assert!(last_phi < 1e-2);
    }

    #[test]
    fn derive_scales_deterministic() {
        let p = MediumParams::experiment_preset();
        let chi0 = chi_bar(C64::new(0.0, 0.0), &p).unwrap();
        let a = derive_scales(&p, chi0).unwrap();
        let b = derive_scales(&p, chi0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chi0_zero_is_resonance_error() {
        let p = MediumParams::experiment_preset();
        match derive_scales(&p, C64::new(0.0, 0.0)) {
            Err(Error::Resonance(_)) => {}
            other => panic!("expected resonance error, got {other:?}"),
        }
    }
}

//! Physical description of a cantilever resonator: beam, material, the two
//! bottom electrodes, damping and output termination.
//!
//! All quantities are SI. Every type validates its own invariants; a
//! [`DeviceConfig`] that made it through [`DeviceConfig::validate`] (which
//! the JSON reader always calls) is safe to hand to the rest of the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permittivity, used for the air gap.
pub const EPSILON_0: f64 = 8.854e-12;

/// Polysilicon defaults that make the first-mode formula land on the
/// 1 MHz / 455 kHz design targets for the two preset lengths.
pub const POLYSILICON_YOUNGS_MODULUS: f64 = 160e9;
pub const POLYSILICON_DENSITY: f64 = 2330.0;

/// Largest thickness-to-length ratio accepted for an Euler-Bernoulli beam.
pub const MAX_SLENDERNESS: f64 = 0.2;

pub const PRESET_NAMES: [&str; 2] = ["beam-1MHz", "beam-455kHz"];

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// Pa
    pub youngs_modulus: f64,
    /// kg/m³
    pub density: f64,
    /// F/m, of the medium filling the electrode gaps
    pub gap_permittivity: f64,
}

impl Material {
    pub fn new(youngs_modulus: f64, density: f64, gap_permittivity: f64) -> Result<Self> {
        let m = Self {
            youngs_modulus,
            density,
            gap_permittivity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn polysilicon_in_air() -> Self {
        Self {
            youngs_modulus: POLYSILICON_YOUNGS_MODULUS,
            density: POLYSILICON_DENSITY,
            gap_permittivity: EPSILON_0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("material.youngs_modulus", self.youngs_modulus)?;
        positive("material.density", self.density)?;
        positive("material.gap_permittivity", self.gap_permittivity)
    }
}

/// Rectangular-section beam, clamped at x = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamGeometry {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionProperties {
    /// Second moment of area about the bending axis, m⁴.
    pub second_moment: f64,
    /// Cross-section area, m².
    pub area: f64,
}

impl BeamGeometry {
    pub fn new(length: f64, width: f64, thickness: f64) -> Result<Self> {
        let b = Self {
            length,
            width,
            thickness,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        positive("beam.length", self.length)?;
        positive("beam.width", self.width)?;
        positive("beam.thickness", self.thickness)?;
        let slenderness = self.thickness / self.length;
        if slenderness >= MAX_SLENDERNESS {
            return Err(Error::invalid(
                "beam.thickness",
                format!("thickness/length = {slenderness:.3} violates the slender-beam bound < {MAX_SLENDERNESS}"),
            ));
        }
        Ok(())
    }

    pub fn section_properties(&self) -> SectionProperties {
        section_properties(self)
    }
}

/// `I = W h³ / 12`, `A = W h`.
pub fn section_properties(beam: &BeamGeometry) -> SectionProperties {
    SectionProperties {
        second_moment: beam.width * beam.thickness.powi(3) / 12.0,
        area: beam.width * beam.thickness,
    }
}

/// A bottom electrode spanning `[x_start, x_end]` along the beam axis, as
/// wide as the beam, separated from it by `gap` at rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Electrode {
    pub x_start: f64,
    pub x_end: f64,
    pub gap: f64,
}

impl Electrode {
    pub fn span(&self) -> f64 {
        self.x_end - self.x_start
    }

    /// Overlap area with a beam of the given width.
    pub fn overlap_area(&self, beam_width: f64) -> f64 {
        beam_width * self.span()
    }

    pub fn validate(&self, field: &str, beam_length: f64) -> Result<()> {
        positive(&format!("{field}.gap"), self.gap)?;
        let ok = self.x_start.is_finite()
            && self.x_end.is_finite()
            && 0.0 <= self.x_start
            && self.x_start < self.x_end
            && self.x_end <= beam_length;
        if !ok {
            return Err(Error::invalid(
                field,
                format!(
                    "span [{:e}, {:e}] must satisfy 0 <= x_start < x_end <= L = {:e}",
                    self.x_start, self.x_end, beam_length
                ),
            ));
        }
        Ok(())
    }

    fn overlaps(&self, other: &Electrode) -> bool {
        self.x_start < other.x_end && other.x_start < self.x_end
    }
}

/// Damping is specified either as a quality factor or as a damping ratio;
/// the other one follows from `Q = 1 / (2ζ√(1−ζ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Damping {
    Q(f64),
    Zeta(f64),
}

impl Damping {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Damping::Q(q) if q.is_finite() && q >= 1.0 => Ok(()),
            Damping::Q(q) => Err(Error::invalid(
                "damping.q",
                format!("must be finite and >= 1 (ζ <= 1/√2), got {q}"),
            )),
            Damping::Zeta(z) if z.is_finite() && (0.0..=std::f64::consts::FRAC_1_SQRT_2).contains(&z) => Ok(()),
            Damping::Zeta(z) => Err(Error::invalid(
                "damping.zeta",
                format!("must lie in [0, 1/√2], got {z}"),
            )),
        }
    }

    pub fn quality_factor(&self) -> f64 {
        match *self {
            Damping::Q(q) => q,
            Damping::Zeta(z) => quality_from_zeta(z),
        }
    }

    pub fn zeta(&self) -> f64 {
        match *self {
            Damping::Q(q) => zeta_from_quality(q),
            Damping::Zeta(z) => z,
        }
    }
}

/// `Q = 1 / (2ζ√(1−ζ²))`; infinite for ζ = 0.
pub fn quality_from_zeta(zeta: f64) -> f64 {
    1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt())
}

/// Inverse of [`quality_from_zeta`] on the branch ζ ∈ (0, 1/√2]. NaN for Q < 1.
pub fn zeta_from_quality(q: f64) -> f64 {
    if q.is_infinite() {
        return 0.0;
    }
    // ζ² = (1 − √(1 − 1/Q²)) / 2, rewritten to avoid cancellation at large Q.
    let x = 1.0 / (q * q);
    (x / (2.0 * (1.0 + (1.0 - x).sqrt()))).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub beam: BeamGeometry,
    pub material: Material,
    pub input_electrode: Electrode,
    pub output_electrode: Electrode,
    pub damping: Damping,
    /// Ω
    pub load_resistance: f64,
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<()> {
        self.beam.validate()?;
        self.material.validate()?;
        self.input_electrode.validate("input_electrode", self.beam.length)?;
        self.output_electrode.validate("output_electrode", self.beam.length)?;
        if self.input_electrode.overlaps(&self.output_electrode) {
            return Err(Error::invalid(
                "output_electrode",
                "input and output electrode spans overlap",
            ));
        }
        self.damping.validate()?;
        if !(self.load_resistance.is_finite() && self.load_resistance >= 0.0) {
            return Err(Error::invalid(
                "load_resistance",
                format!("must be finite and >= 0, got {}", self.load_resistance),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: DeviceConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DeviceConfig serializes")
    }

    /// Uniform-width cantilever with the default electrode layout: input
    /// under `[0.10 L, 0.50 L]`, output under `[0.55 L, 0.95 L]`.
    pub fn with_default_layout(
        beam: BeamGeometry,
        material: Material,
        gap: f64,
        damping: Damping,
        load_resistance: f64,
    ) -> Result<Self> {
        let l = beam.length;
        let cfg = Self {
            beam,
            material,
            input_electrode: Electrode {
                x_start: 0.10 * l,
                x_end: 0.50 * l,
                gap,
            },
            output_electrode: Electrode {
                x_start: 0.55 * l,
                x_end: 0.95 * l,
                gap,
            },
            damping,
            load_resistance,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const PRESET_WIDTH: f64 = 10e-6;
pub const PRESET_THICKNESS: f64 = 2e-6;
pub const PRESET_GAP: f64 = 2e-6;
pub const PRESET_Q: f64 = 40.0;
pub const PRESET_LOAD_RESISTANCE: f64 = 50.0;

/// Built-in devices: the 51.75 μm (`beam-1MHz`) and 76.75 μm
/// (`beam-455kHz`) polysilicon cantilevers.
pub fn preset(name: &str) -> Result<DeviceConfig> {
    let length = match name {
        "beam-1MHz" => 51.75e-6,
        "beam-455kHz" => 76.75e-6,
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    DeviceConfig::with_default_layout(
        BeamGeometry::new(length, PRESET_WIDTH, PRESET_THICKNESS)?,
        Material::polysilicon_in_air(),
        PRESET_GAP,
        Damping::Q(PRESET_Q),
        PRESET_LOAD_RESISTANCE,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn section_of_preset_beam() {
        let s = section_properties(&BeamGeometry::new(76.75e-6, 10e-6, 2e-6).unwrap());
        assert!((s.second_moment - 6.666_666_666_666_667e-24).abs() < 1e-36);
        assert!((s.area - 2.0e-11).abs() < 1e-24);
    }

    #[test]
    fn doubling_thickness_scales_section() {
        let a = section_properties(&BeamGeometry::new(100e-6, 10e-6, 2e-6).unwrap());
        let b = section_properties(&BeamGeometry::new(100e-6, 10e-6, 4e-6).unwrap());
        assert!((b.second_moment / a.second_moment - 8.0).abs() < 1e-12);
        assert!((b.area / a.area - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_width_rejected() {
        let e = BeamGeometry::new(50e-6, 0.0, 2e-6).unwrap_err();
        assert!(matches!(e, Error::Invalid { ref field, .. } if field == "beam.width"));
    }

    #[test]
    fn stubby_beam_rejected() {
        assert!(BeamGeometry::new(10e-6, 10e-6, 3e-6).is_err());
    }

    #[test]
    fn presets_are_valid() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.beam.width, 10e-6);
            assert_eq!(cfg.input_electrode.gap, 2e-6);
            assert_eq!(cfg.damping, Damping::Q(40.0));
        }
        assert!(matches!(preset("beam-xyz"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn overlapping_electrodes_rejected() {
        let mut cfg = preset("beam-455kHz").unwrap();
        cfg.output_electrode.x_start = 0.4 * cfg.beam.length;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn electrode_outside_beam_rejected() {
        let mut cfg = preset("beam-1MHz").unwrap();
        cfg.output_electrode.x_end = 1.01 * cfg.beam.length;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_rejects_unknown_keys_and_double_damping() {
        let cfg = preset("beam-455kHz").unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["beam"]["colour"] = serde_json::json!("red");
        assert!(DeviceConfig::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["damping"] = serde_json::json!({"q": 40.0, "zeta": 0.0125});
        assert!(DeviceConfig::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["damping"] = serde_json::json!({"zeta": 0.0125});
        let parsed = DeviceConfig::from_json(&v.to_string()).unwrap();
        assert!((parsed.damping.quality_factor() - 40.0).abs() < 0.01);
    }

    #[test]
    fn q_zeta_identity() {
        // Q = 1/(2·0.0125·√(1 − 0.0125²)) = 40.0031...
        let q = quality_from_zeta(0.0125);
        assert!((q - 40.003_125).abs() < 1e-4, "{q}");
        assert!((zeta_from_quality(40.0) - 0.0125).abs() < 1e-4);
        assert!((zeta_from_quality(q) - 0.0125).abs() < 1e-15);
        assert_eq!(zeta_from_quality(f64::INFINITY), 0.0);
    }

    fn arb_config() -> impl Strategy<Value = DeviceConfig> {
        (
            20e-6..500e-6f64,
            1e-6..50e-6f64,
            0.01..0.19f64,
            1e9..400e9f64,
            1000.0..20000.0f64,
            0.2e-6..5e-6f64,
            prop_oneof![
                (1.0..1e4f64).prop_map(Damping::Q),
                (0.0..0.7f64).prop_map(Damping::Zeta)
            ],
            0.0..1e6f64,
        )
            .prop_map(|(l, w, slender, e, rho, gap, damping, rl)| {
                DeviceConfig::with_default_layout(
                    BeamGeometry::new(l, w, slender * l).unwrap(),
                    Material::new(e, rho, EPSILON_0).unwrap(),
                    gap,
                    damping,
                    rl,
                )
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_identical(cfg in arb_config()) {
            let back = DeviceConfig::from_json(&cfg.to_json()).unwrap();
            prop_assert_eq!(back, cfg);
        }

        #[test]
        fn section_properties_are_homogeneous(s in 0.1..10.0f64) {
            let b = BeamGeometry::new(80e-6, 10e-6, 2e-6).unwrap();
            let scaled = BeamGeometry::new(80e-6 * s, 10e-6 * s, 2e-6 * s).unwrap();
            let (p, q) = (b.section_properties(), scaled.section_properties());
            prop_assert!((q.second_moment / p.second_moment / s.powi(4) - 1.0).abs() < 1e-12);
            prop_assert!((q.area / p.area / s.powi(2) - 1.0).abs() < 1e-12);
        }
    }
}

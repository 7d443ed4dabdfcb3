//! Analytical ground truth for linearly extruded cantilevers: tip deflection
//! under a transverse point load and the first three bending
//! eigenfrequencies, both evaluated in the principal frame of the section.
//!
//! Geometry arrives in mm; everything here converts to SI at the boundary
//! and reports labels back in the mm-based units of the dataset schema.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geometry::{
    principal_axes, section_properties, GeometryError, Polygon, PrincipalSection,
};

const MM2_TO_M2: f64 = 1e-6;
const MM4_TO_M4: f64 = 1e-12;

/// Linear-elastic material in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Young's modulus in Pa.
    pub youngs_modulus: f64,
    /// Density in kg/m^3.
    pub density: f64,
}

impl Material {
    /// 70 GPa / 2700 kg/m^3 aluminium used throughout the datasets.
    pub const ALUMINUM: Material = Material {
        youngs_modulus: 70e9,
        density: 2700.0,
    };
}

/// A clamped-free beam: length, material, and the transverse tip load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    /// m
    pub length: f64,
    pub material: Material,
    /// (Fx, Fy) in N, applied at the free end transverse to the beam axis.
    pub tip_load: (f64, f64),
}

impl Default for BeamSpec {
    fn default() -> Self {
        BeamSpec {
            length: 1.0,
            material: Material::ALUMINUM,
            tip_load: (1750.0, 0.0),
        }
    }
}

impl BeamSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(GeometryError::InvalidSpec(format!(
                "beam length must be positive and finite, got {}",
                self.length
            )));
        }
        if !(self.material.youngs_modulus > 0.0) || !(self.material.density > 0.0) {
            return Err(GeometryError::InvalidSpec(
                "material constants must be positive".into(),
            ));
        }
        if !self.tip_load.0.is_finite() || !self.tip_load.1.is_finite() {
            return Err(GeometryError::InvalidSpec("tip load must be finite".into()));
        }
        Ok(())
    }
}

/// Roots of `cosh(b) cos(b) + 1 = 0`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicRoots {
    pub beta: Vec<f64>,
}

/// First `k` positive characteristic roots by bisection.
///
/// The roots come in pairs inside each interval where `cos` is negative:
/// root 2m+1 descends through zero in `((2m+1/2)pi, (2m+1)pi)` and root
/// 2m+2 climbs back in `((2m+1)pi, (2m+3/2)pi)`, so each half-interval
/// brackets a single sign change.
pub fn beta_roots(k: usize) -> CharacteristicRoots {
    assert!(k >= 1, "need at least one root");
    let f = |b: f64| b.cosh() * b.cos() + 1.0;
    let mut beta = Vec::with_capacity(k);
    for n in 1..=k {
        let m = (n - 1) / 2;
        let (mut lo, mut hi) = if n % 2 == 1 {
            ((2.0 * m as f64 + 0.5) * PI, (2.0 * m as f64 + 1.0) * PI)
        } else {
            ((2.0 * m as f64 + 1.0) * PI, (2.0 * m as f64 + 1.5) * PI)
        };
        let f_lo = f(lo);
        debug_assert!(f_lo * f(hi) < 0.0, "bracket must straddle the root");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if f_lo * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        beta.push(0.5 * (lo + hi));
    }
    CharacteristicRoots { beta }
}

/// Which principal direction a bending mode displaces along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrincipalAxis {
    /// Displacement along x_p (stiffness from i_yp).
    Xp,
    /// Displacement along y_p (stiffness from i_xp).
    Yp,
}

/// Lowest three bending eigenfrequencies with their bending directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalResult {
    /// Hz, ascending.
    pub frequencies: [f64; 3],
    pub axis_tags: [PrincipalAxis; 3],
}

/// Tip deflection magnitude and its principal-frame components, in m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipDeflection {
    pub magnitude: f64,
    /// (along x_p, along y_p)
    pub components: (f64, f64),
}

/// `F L^3 / (3 E I)` per principal direction, with the tip load rotated
/// into the principal frame. Displacement along x_p is resisted by i_yp
/// and displacement along y_p by i_xp.
pub fn tip_deflection(beam: &BeamSpec, sec: &PrincipalSection) -> TipDeflection {
    let (fx, fy) = beam.tip_load;
    let (s, c) = sec.theta_p.sin_cos();
    // Rotate the load by -theta_p into the principal frame.
    let f1 = c * fx + s * fy;
    let f2 = -s * fx + c * fy;
    let l3 = beam.length.powi(3);
    let e = beam.material.youngs_modulus;
    let d1 = f1 * l3 / (3.0 * e * (sec.i_yp * MM4_TO_M4));
    let d2 = f2 * l3 / (3.0 * e * (sec.i_xp * MM4_TO_M4));
    TipDeflection {
        magnitude: d1.hypot(d2),
        components: (d1, d2),
    }
}

/// Euler-Bernoulli clamped-free frequencies: for each principal moment,
/// `f_n = beta_n^2 / (2 pi L^2) * sqrt(E I / (rho A))` for n = 1..3; the
/// six candidates merge and the lowest three are kept.
pub fn eigenfrequencies(beam: &BeamSpec, sec: &PrincipalSection, area_mm2: f64) -> ModalResult {
    let roots = beta_roots(3);
    let e = beam.material.youngs_modulus;
    let lambda_m = beam.material.density * (area_mm2 * MM2_TO_M2);
    let l2 = beam.length * beam.length;
    let mut candidates: Vec<(f64, usize, PrincipalAxis)> = Vec::with_capacity(6);
    for (n, &beta) in roots.beta.iter().enumerate() {
        for (i_mm4, axis) in [(sec.i_xp, PrincipalAxis::Yp), (sec.i_yp, PrincipalAxis::Xp)] {
            let omega = beta * beta / l2 * (e * (i_mm4 * MM4_TO_M4) / lambda_m).sqrt();
            candidates.push((omega / TAU, n, axis));
        }
    }
    // Stable, tie-broken order: frequency, then mode index, then axis.
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite frequencies")
            .then(a.1.cmp(&b.1))
            .then((a.2 == PrincipalAxis::Yp).cmp(&(b.2 == PrincipalAxis::Yp)))
    });
    ModalResult {
        frequencies: [candidates[0].0, candidates[1].0, candidates[2].0],
        axis_tags: [candidates[0].2, candidates[1].2, candidates[2].2],
    }
}

/// Scalar labels a dataset can carry, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "area_mm2")]
    AreaMm2,
    #[serde(rename = "volume_mm3")]
    VolumeMm3,
    #[serde(rename = "max_deflection_mm")]
    MaxDeflectionMm,
    #[serde(rename = "f1_hz")]
    F1Hz,
    #[serde(rename = "f2_hz")]
    F2Hz,
    #[serde(rename = "f3_hz")]
    F3Hz,
}

impl Label {
    pub const ALL: [Label; 6] = [
        Label::AreaMm2,
        Label::VolumeMm3,
        Label::MaxDeflectionMm,
        Label::F1Hz,
        Label::F2Hz,
        Label::F3Hz,
    ];

    pub const FREQUENCIES: [Label; 3] = [Label::F1Hz, Label::F2Hz, Label::F3Hz];

    pub fn name(self) -> &'static str {
        match self {
            Label::AreaMm2 => "area_mm2",
            Label::VolumeMm3 => "volume_mm3",
            Label::MaxDeflectionMm => "max_deflection_mm",
            Label::F1Hz => "f1_hz",
            Label::F2Hz => "f2_hz",
            Label::F3Hz => "f3_hz",
        }
    }

    pub fn from_name(name: &str) -> Option<Label> {
        Label::ALL.iter().copied().find(|l| l.name() == name)
    }
}

/// Evaluates the requested labels for a polygon section on a beam, in
/// canonical order. `labels` must already be in canonical order (use
/// [`Label::ALL`] or a sorted subset).
pub fn label_vector(
    poly: &Polygon,
    beam: &BeamSpec,
    labels: &[Label],
) -> Result<Vec<f64>, GeometryError> {
    beam.validate()?;
    debug_assert!(labels.windows(2).all(|w| w[0] < w[1]), "labels must be sorted");
    let props = section_properties(poly)?;
    let principal = principal_axes(&props);
    let needs_modal = labels.iter().any(|l| Label::FREQUENCIES.contains(l));
    let modal = needs_modal.then(|| eigenfrequencies(beam, &principal, props.area));
    let mut out = Vec::with_capacity(labels.len());
    for &label in labels {
        let v = match label {
            Label::AreaMm2 => props.area,
            Label::VolumeMm3 => props.area * beam.length * 1e3,
            Label::MaxDeflectionMm => tip_deflection(beam, &principal).magnitude * 1e3,
            Label::F1Hz => modal.as_ref().unwrap().frequencies[0],
            Label::F2Hz => modal.as_ref().unwrap().frequencies[1],
            Label::F3Hz => modal.as_ref().unwrap().frequencies[2],
        };
        out.push(v);
    }
    Ok(out)
}

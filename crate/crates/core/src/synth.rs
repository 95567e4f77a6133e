//! Synthetic data: a tapered Gaussian slip bump on the true fault, forward
//! modelled with a fine fault rule, plus Gaussian noise.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::displacement_from_slip;
use crate::geometry::FaultGeometry;
use crate::green::ElasticModel;
use crate::quadrature::{FaultQuadrature, Rect, StationSet};

/// Fraction of each side of R over which the taper ramps from 0 to 1.
pub const TAPER_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumpSpec {
    /// Center in fault coordinates `(y1, y2)`, km.
    pub center: [f64; 2],
    /// Gaussian standard deviation, km.
    pub width: f64,
    /// Peak slip before tapering, m.
    pub amplitude: f64,
}

impl Default for BumpSpec {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            width: 10.0,
            amplitude: 1.0,
        }
    }
}

/// `amplitude * exp(-|y - y0|² / 2w²)` times a smoothstep taper vanishing on ∂R.
#[derive(Clone, Copy, Debug)]
pub struct BumpSlip {
    pub spec: BumpSpec,
    pub rect: Rect,
}

/// Ramp value and derivative at distance `e` from the nearest edge.
fn ramp(e: f64, len: f64) -> (f64, f64) {
    if e >= len {
        return (1.0, 0.0);
    }
    if e <= 0.0 {
        return (0.0, 0.0);
    }
    let t = e / len;
    (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) / len)
}

fn taper_axis(y: f64, lo: f64, hi: f64) -> (f64, f64) {
    let len = TAPER_FRACTION * (hi - lo);
    let (from_lo, from_hi) = (y - lo, hi - y);
    if from_lo <= from_hi {
        ramp(from_lo, len)
    } else {
        let (v, d) = ramp(from_hi, len);
        (v, -d)
    }
}

impl BumpSlip {
    pub fn new(spec: BumpSpec, rect: Rect) -> Result<Self> {
        if !(spec.width > 0.0) {
            return Err(Error::config("scenario.bump.width", "must be > 0"));
        }
        if !(spec.amplitude >= 0.0) {
            return Err(Error::config("scenario.bump.amplitude", "must be >= 0"));
        }
        rect.validate()?;
        Ok(Self { spec, rect })
    }

    pub fn taper(&self, y1: f64, y2: f64) -> f64 {
        taper_axis(y1, self.rect.x0, self.rect.x1).0 * taper_axis(y2, self.rect.y0, self.rect.y1).0
    }

    fn gauss(&self, y1: f64, y2: f64) -> f64 {
        let [c1, c2] = self.spec.center;
        let w2 = self.spec.width * self.spec.width;
        self.spec.amplitude * (-((y1 - c1).powi(2) + (y2 - c2).powi(2)) / (2.0 * w2)).exp()
    }

    pub fn value(&self, y1: f64, y2: f64) -> f64 {
        if !self.rect.contains(y1, y2) {
            return 0.0;
        }
        self.gauss(y1, y2) * self.taper(y1, y2)
    }

    pub fn gradient(&self, y1: f64, y2: f64) -> [f64; 2] {
        if !self.rect.contains(y1, y2) {
            return [0.0; 2];
        }
        let g = self.gauss(y1, y2);
        let w2 = self.spec.width * self.spec.width;
        let (t1, dt1) = taper_axis(y1, self.rect.x0, self.rect.x1);
        let (t2, dt2) = taper_axis(y2, self.rect.y0, self.rect.y1);
        let [c1, c2] = self.spec.center;
        [
            g * (-(y1 - c1) / w2 * t1 + dt1) * t2,
            g * (-(y2 - c2) / w2 * t2 + dt2) * t1,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthScenario {
    pub m_true: FaultGeometry,
    pub bump: BumpSpec,
    /// Per-axis order of the fine fault rule.
    pub fine_order: usize,
    /// Noise standard deviation as a fraction of the largest |clean| value.
    pub noise_rel: f64,
    pub noise_seed: u64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        Self {
            m_true: FaultGeometry::new(-0.12, -0.26, -14.0),
            bump: BumpSpec::default(),
            fine_order: 160,
            noise_rel: 0.05,
            noise_seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub clean: Vec<[f64; 3]>,
    pub noisy: Vec<[f64; 3]>,
    pub sigma: f64,
}

impl SynthData {
    /// `|noisy - clean| / |clean|` over all components.
    pub fn relative_error(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (n, c) in self.noisy.iter().zip(&self.clean) {
            for k in 0..3 {
                num += (n[k] - c[k]).powi(2);
                den += c[k] * c[k];
            }
        }
        (num / den).sqrt()
    }
}

/// Clean station displacements of the bump slip on `m_true`.
pub fn clean_data(
    scn: &SynthScenario,
    fault_rect: Rect,
    stations: &StationSet,
    elastic: &ElasticModel,
) -> Result<Vec<[f64; 3]>> {
    let m = &scn.m_true;
    if !(m.max_height(&fault_rect) < 0.0) {
        return Err(Error::Inadmissible {
            a: m.a,
            b: m.b,
            d: m.d,
            reason: "true fault not buried".into(),
        });
    }
    let bump = BumpSlip::new(scn.bump, fault_rect)?;
    let rule = FaultQuadrature::gauss(scn.fine_order, fault_rect)?;
    let slip: Vec<f64> = rule.rule.points().map(|(y, _)| bump.value(y[0], y[1])).collect();
    let t = m.slip_direction()?;
    displacement_from_slip(m, &slip, &rule, &stations.points, elastic, &t)
}

/// Adds `N(0, σ²)` noise per component with `σ = noise_rel * max|clean|`.
pub fn add_noise(clean: &[[f64; 3]], noise_rel: f64, seed: u64) -> Result<SynthData> {
    if !(noise_rel >= 0.0) {
        return Err(Error::config("scenario.noise_rel", "must be >= 0"));
    }
    let umax = clean.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let sigma = noise_rel * umax;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noisy = clean
        .iter()
        .map(|u| {
            let mut v = *u;
            for c in v.iter_mut() {
                let xi: f64 = rng.sample(StandardNormal);
                *c += sigma * xi;
            }
            v
        })
        .collect();
    Ok(SynthData {
        clean: clean.to_vec(),
        noisy,
        sigma,
    })
}

pub fn generate(
    scn: &SynthScenario,
    fault_rect: Rect,
    stations: &StationSet,
    elastic: &ElasticModel,
) -> Result<SynthData> {
    let clean = clean_data(scn, fault_rect, stations, elastic)?;
    add_noise(&clean, scn.noise_rel, scn.noise_seed)
}

/// Station data as CSV `x1,x2,u1,u2,u3`.
pub fn write_data_csv(stations: &StationSet, u: &[[f64; 3]], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x1", "x2", "u1", "u2", "u3"])?;
    for (p, v) in stations.points.iter().zip(u) {
        wtr.write_record([p[0], p[1], v[0], v[1], v[2]].map(|x| format!("{x:.17e}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `x1,x2,u1,u2,u3` rows.
pub fn read_data_csv(path: &std::path::Path) -> Result<(Vec<[f64; 2]>, Vec<[f64; 3]>)> {
    #[derive(Deserialize)]
    struct Row {
        x1: f64,
        x2: f64,
        u1: f64,
        u2: f64,
        u3: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut pts = Vec::new();
    let mut us = Vec::new();
    for r in rdr.deserialize() {
        let r: Row = r?;
        pts.push([r.x1, r.x2]);
        us.push([r.u1, r.u2, r.u3]);
    }
    Ok((pts, us))
}

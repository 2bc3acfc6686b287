//! Biphoton Gaussian model: timing scales, dispersion bookkeeping, and the
//! noiseless 4x4 covariance matrix over (T_A, D_A, T_B, D_B).
//!
//! All times are picoseconds and every covariance entry is ps^2: the
//! dispersed-basis entries come out of the construction in frequency units
//! and are rescaled back to time units immediately, so the noise pipeline
//! works in one unit system. [`CovMatrix4::to_normalized`] undoes that
//! rescaling when the symplectic analysis needs the dimensionless form.

use nalgebra::{Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default dispersion product (ps^2) realizing the large-dispersion limit
/// numerically. Large enough that residual T-D coupling is far below the
/// conjugacy tolerance at desk-scale timing parameters.
pub const DEFAULT_DISPERSION_PRODUCT_PS2: f64 = 1.0e8;

/// Ratio |beta2*L| / (sigma_coh * sigma_cor) above which the two measurement
/// bases are treated as conjugate.
pub const DEFAULT_CONJUGACY_THRESHOLD: f64 = 10.0;

/// Source timing scales for the downconverted pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Pump coherence time (ps); sets the frame-scale spread of emission times.
    pub sigma_coh_ps: f64,
    /// Pair correlation time (ps); sets the time-bin resolution.
    pub sigma_cor_ps: f64,
    /// Probability of generating a pair in a given frame.
    pub pair_prob: f64,
    /// Pump center wavelength (nm), informational only.
    pub pump_wavelength_nm: f64,
}

impl SourceParams {
    pub fn new(sigma_coh_ps: f64, sigma_cor_ps: f64, pair_prob: f64) -> Result<Self> {
        let p = Self {
            sigma_coh_ps,
            sigma_cor_ps,
            pair_prob,
            pump_wavelength_nm: 1560.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_coh_ps > 0.0) {
            return Err(invalid("source.sigma_coh_ps", "must be > 0"));
        }
        if !(self.sigma_cor_ps > 0.0) {
            return Err(invalid("source.sigma_cor_ps", "must be > 0"));
        }
        if self.sigma_coh_ps < self.sigma_cor_ps {
            return Err(invalid(
                "source.sigma_coh_ps",
                "coherence time must be >= correlation time",
            ));
        }
        if !(0.0..=1.0).contains(&self.pair_prob) {
            return Err(invalid("source.pair_prob", "must be in [0, 1]"));
        }
        Ok(())
    }

    /// Protocol frame duration: 6 sigma_coh, separating neighboring frames
    /// by more than six standard deviations.
    pub fn frame_duration_ps(&self) -> f64 {
        6.0 * self.sigma_coh_ps
    }
}

/// Group-velocity-dispersion bookkeeping for the conjugate basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    /// GVD coefficient (ps^2/km, signed).
    pub beta2_ps2_per_km: f64,
    /// Length of the dispersive element (km).
    pub length_km: f64,
}

impl DispersionParams {
    pub fn new(beta2_ps2_per_km: f64, length_km: f64) -> Result<Self> {
        let d = Self {
            beta2_ps2_per_km,
            length_km,
        };
        if d.dispersion_product_ps2() == 0.0 {
            return Err(Error::ZeroDispersion);
        }
        Ok(d)
    }

    /// Build directly from the product k = 2 beta2 L (ps^2).
    pub fn from_product(k_ps2: f64) -> Result<Self> {
        Self::new(k_ps2 / 2.0, 1.0)
    }

    /// k = 2 beta2 L (ps^2).
    pub fn dispersion_product_ps2(&self) -> f64 {
        2.0 * self.beta2_ps2_per_km * self.length_km
    }

    /// beta2 * L (ps^2), the scale that converts dispersed-basis frequency
    /// readings back into time units.
    pub fn beta2_l_ps2(&self) -> f64 {
        self.beta2_ps2_per_km * self.length_km
    }
}

impl Default for DispersionParams {
    fn default() -> Self {
        Self {
            beta2_ps2_per_km: DEFAULT_DISPERSION_PRODUCT_PS2 / 2.0,
            length_km: 1.0,
        }
    }
}

/// Derived scales u = 16 sigma_coh^2, v = 4 sigma_cor^2 and the Schmidt
/// number d = sigma_coh / sigma_cor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxScales {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

impl AuxScales {
    pub fn from_source(src: &SourceParams) -> Self {
        Self {
            u: 16.0 * src.sigma_coh_ps * src.sigma_coh_ps,
            v: 4.0 * src.sigma_cor_ps * src.sigma_cor_ps,
            d: src.sigma_coh_ps / src.sigma_cor_ps,
        }
    }
}

/// Schmidt number d = sigma_coh / sigma_cor: the effective alphabet size
/// per photon pair.
pub fn schmidt_dimension(src: &SourceParams) -> f64 {
    src.sigma_coh_ps / src.sigma_cor_ps
}

/// Correlation time after both photons traverse dispersive media:
/// sqrt((sigma_cor^4 + (b2a_la + b2b_lb)^2) / sigma_cor^2).
///
/// Equal-magnitude normal and anomalous dispersion cancel, recovering the
/// bare correlation time.
pub fn dispersed_correlation_time(
    sigma_cor_ps: f64,
    beta2a_la_ps2: f64,
    beta2b_lb_ps2: f64,
) -> Result<f64> {
    if !(sigma_cor_ps > 0.0) {
        return Err(invalid("sigma_cor_ps", "must be > 0"));
    }
    let s2 = sigma_cor_ps * sigma_cor_ps;
    let tot = beta2a_la_ps2 + beta2b_lb_ps2;
    Ok(((s2 * s2 + tot * tot) / s2).sqrt())
}

/// |beta2*L| / (sigma_coh * sigma_cor). Values well above
/// [`DEFAULT_CONJUGACY_THRESHOLD`] mean the dispersed basis is conjugate to
/// direct arrival time.
pub fn conjugacy_ratio(disp: &DispersionParams, src: &SourceParams) -> f64 {
    disp.beta2_l_ps2().abs() / (src.sigma_coh_ps * src.sigma_cor_ps)
}

/// 4x4 symmetric covariance over (T_A, D_A, T_B, D_B), every entry in ps^2.
///
/// Serializes as `{"basis": ["TA","DA","TB","DB"], "units": "ps2", "m": [[..]x4]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovMatrixRepr", into = "CovMatrixRepr")]
pub struct CovMatrix4 {
    m: Matrix4<f64>,
}

const BASIS_LABELS: [&str; 4] = ["TA", "DA", "TB", "DB"];

#[derive(Serialize, Deserialize)]
struct CovMatrixRepr {
    basis: [String; 4],
    units: String,
    m: [[f64; 4]; 4],
}

impl From<CovMatrix4> for CovMatrixRepr {
    fn from(c: CovMatrix4) -> Self {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = c.m[(i, j)];
            }
        }
        CovMatrixRepr {
            basis: BASIS_LABELS.map(str::to_owned),
            units: "ps2".to_owned(),
            m,
        }
    }
}

impl TryFrom<CovMatrixRepr> for CovMatrix4 {
    type Error = Error;

    fn try_from(r: CovMatrixRepr) -> Result<Self> {
        if r.units != "ps2" {
            return Err(invalid("covariance.units", "expected \"ps2\""));
        }
        for (got, want) in r.basis.iter().zip(BASIS_LABELS) {
            if got != want {
                return Err(invalid("covariance.basis", "expected [TA, DA, TB, DB]"));
            }
        }
        let m = Matrix4::from_fn(|i, j| r.m[i][j]);
        CovMatrix4::from_matrix(m)
    }
}

impl CovMatrix4 {
    /// Wrap a raw matrix, enforcing symmetry (1e-12 relative) and strictly
    /// positive diagonal entries.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        let scale = (0..4).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..4 {
            if !(m[(i, i)] > 0.0) {
                return Err(invalid("covariance.m", "diagonal entries must be > 0"));
            }
            for j in (i + 1)..4 {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(invalid("covariance.m", "matrix must be symmetric"));
                }
            }
        }
        Ok(Self { m })
    }

    /// Construct from entries already known symmetric (internal builders).
    pub(crate) fn from_matrix_unchecked(m: Matrix4<f64>) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// 2x2 block; `a` and `b` index the parties (0 = Alice, 1 = Bob).
    pub fn block(&self, a: usize, b: usize) -> Matrix2<f64> {
        self.m.fixed_view::<2, 2>(2 * a, 2 * b).into_owned()
    }

    /// Variance of the arrival-time difference T_A - T_B (ps^2).
    pub fn var_time_diff(&self) -> f64 {
        self.m[(0, 0)] + self.m[(2, 2)] - 2.0 * self.m[(0, 2)]
    }

    /// Variance of the arrival-time sum T_A + T_B (ps^2).
    pub fn var_time_sum(&self) -> f64 {
        self.m[(0, 0)] + self.m[(2, 2)] + 2.0 * self.m[(0, 2)]
    }

    /// Convert to normalized units: dispersed rows/columns divided by
    /// beta2*L = k/2, restoring frequency units so that the vacuum
    /// symplectic floor sits at 1/2.
    pub fn to_normalized(&self, k_ps2: f64) -> Matrix4<f64> {
        let inv = 2.0 / k_ps2;
        let mut n = self.m;
        for d_idx in [1usize, 3] {
            for j in 0..4 {
                n[(d_idx, j)] *= inv;
            }
            for i in 0..4 {
                n[(i, d_idx)] *= inv;
            }
        }
        n
    }

    /// Largest residual T-D coupling of the normalized matrix, relative to
    /// its largest diagonal entry. Zero in the exact large-dispersion limit.
    pub fn residual_td_coupling(&self, k_ps2: f64) -> f64 {
        let n = self.to_normalized(k_ps2);
        let max_diag = (0..4).map(|i| n[(i, i)].abs()).fold(f64::MIN, f64::max);
        let mut worst = 0.0f64;
        for t_idx in [0usize, 2] {
            for d_idx in [1usize, 3] {
                worst = worst.max(n[(t_idx, d_idx)].abs());
            }
        }
        worst / max_diag
    }
}

/// Noiseless covariance from exact block formulas, rescaled to ps^2.
///
/// Rejects k = 0 and degenerate scale orderings (u <= v, i.e. d <= 1/2).
pub fn build_noiseless_cov(src: &SourceParams, disp: &DispersionParams) -> Result<CovMatrix4> {
    src.validate()?;
    let k = disp.dispersion_product_ps2();
    if k == 0.0 {
        return Err(Error::ZeroDispersion);
    }
    let scales = AuxScales::from_source(src);
    if scales.u <= scales.v {
        return Err(invalid(
            "source.sigma_cor_ps",
            "degenerate scales: require 16*sigma_coh^2 > 4*sigma_cor^2",
        ));
    }
    Ok(cov_from_scales(scales.u, scales.v, k))
}

/// Block construction from the raw scales; no degeneracy gate so the
/// u = v algebra stays testable.
fn cov_from_scales(u: f64, v: f64, k: f64) -> CovMatrix4 {
    let sum = u + v;
    let diff = u - v;
    // common factor (4k^2 + uv)/(4k^2 uv) on the dispersed-basis diagonal
    let dd = (4.0 * k * k + u * v) / (4.0 * k * k * u * v);

    let g_aa = [[sum / 16.0, -sum / (8.0 * k)], [-sum / (8.0 * k), sum * dd]];
    let g_ab = [[diff / 16.0, diff / (8.0 * k)], [-diff / (8.0 * k), -diff * dd]];
    let g_bb = [[sum / 16.0, sum / (8.0 * k)], [sum / (8.0 * k), sum * dd]];

    let mut n = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            n[(i, j)] = g_aa[i][j];
            n[(i, 2 + j)] = g_ab[i][j];
            n[(2 + i, j)] = g_ab[j][i];
            n[(2 + i, 2 + j)] = g_bb[i][j];
        }
    }

    // Rescale dispersed rows/columns by beta2*L = k/2 into ps^2.
    let s = k / 2.0;
    for d_idx in [1usize, 3] {
        for c in 0..4 {
            n[(d_idx, c)] *= s;
        }
        for r in 0..4 {
            n[(r, d_idx)] *= s;
        }
    }
    CovMatrix4::from_matrix_unchecked(n)
}

fn invalid(name: &'static str, reason: &str) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.to_owned(),
    }
}

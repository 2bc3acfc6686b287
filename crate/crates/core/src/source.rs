//! Heralded-source photon statistics: multimode pair-number distribution,
//! heralding failure, the heralded output distribution, and the operating
//! point under a multiphoton bound.
//!
//! Factorial quantities run through log-gamma so large mode counts do not
//! overflow.

use libm::lgamma;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail mass below which photon-number series are truncated.
const TAIL_BOUND: f64 = 1e-12;

/// Hard cap on series terms before truncation is declared failed.
const MAX_TERMS: usize = 20_000;

/// Heralded-source parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldParams {
    /// Expected pairs generated per protocol frame.
    pub mu_f: f64,
    /// Mode degeneracy; equals the Schmidt number d.
    pub modes: u32,
    /// Herald detector efficiency.
    pub eta_d: f64,
    /// Modulator transmissivity in the `on` position.
    pub eta_s: f64,
    /// Threshold on p(>1 | >=1) used by the operating-point search.
    pub multiphoton_bound: f64,
    /// Expected pairs per time bin; defaults to mu_f / modes.
    #[serde(default)]
    pub mu_b_override: Option<f64>,
}

impl HeraldParams {
    pub fn new(mu_f: f64, modes: u32, eta_d: f64, eta_s: f64) -> Result<Self> {
        let p = Self {
            mu_f,
            modes,
            eta_d,
            eta_s,
            multiphoton_bound: 0.01,
            mu_b_override: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_f >= 0.0) {
            return Err(invalid("herald.mu_f", "must be >= 0"));
        }
        if self.modes < 2 {
            return Err(invalid("herald.modes", "must be >= 2"));
        }
        for (name, v) in [("herald.eta_d", self.eta_d), ("herald.eta_s", self.eta_s)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam {
                    name,
                    reason: "must be in [0, 1]".to_owned(),
                });
            }
        }
        if !(self.multiphoton_bound > 0.0 && self.multiphoton_bound < 1.0) {
            return Err(invalid("herald.multiphoton_bound", "must be in (0, 1)"));
        }
        Ok(())
    }

    /// Pairs per time bin: the frame holds `modes` bins.
    pub fn mu_b(&self) -> f64 {
        self.mu_b_override.unwrap_or(self.mu_f / self.modes as f64)
    }
}

/// Truncated photon-number distribution with its unaccounted tail mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PhotonDistRepr", from = "PhotonDistRepr")]
pub struct PhotonNumberDist {
    pmf: Vec<f64>,
    tail: f64,
}

#[derive(Serialize, Deserialize)]
struct PhotonDistRepr {
    entries: Vec<PhotonDistEntry>,
    tail: f64,
}

#[derive(Serialize, Deserialize)]
struct PhotonDistEntry {
    m: usize,
    p: f64,
}

impl From<PhotonNumberDist> for PhotonDistRepr {
    fn from(d: PhotonNumberDist) -> Self {
        PhotonDistRepr {
            entries: d
                .pmf
                .iter()
                .enumerate()
                .map(|(m, &p)| PhotonDistEntry { m, p })
                .collect(),
            tail: d.tail,
        }
    }
}

impl From<PhotonDistRepr> for PhotonNumberDist {
    fn from(r: PhotonDistRepr) -> Self {
        let mut pmf = vec![0.0; r.entries.len()];
        for e in &r.entries {
            if e.m < pmf.len() {
                pmf[e.m] = e.p;
            }
        }
        PhotonNumberDist { pmf, tail: r.tail }
    }
}

impl PhotonNumberDist {
    pub fn prob(&self, m: usize) -> f64 {
        self.pmf.get(m).copied().unwrap_or(0.0)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// p(>1 | >=1): the multiphoton fraction among frames that emit at all.
    /// Zero when nothing is ever emitted.
    pub fn multiphoton_given_any(&self) -> f64 {
        let p0 = self.prob(0);
        let any = 1.0 - p0;
        if any <= 0.0 {
            return 0.0;
        }
        ((any - self.prob(1)) / any).max(0.0)
    }
}

/// g-fold degenerate Bose-Einstein pmf: probability of m pairs when the
/// expected count is mu over g modes,
/// C(m + g - 1, m) (mu/g)^m / (1 + mu/g)^(m + g).
pub fn bose_einstein_pmf(mu: f64, m: u32, g: u32) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(invalid("mu", "must be >= 0"));
    }
    if g < 1 {
        return Err(invalid("g", "must be >= 1"));
    }
    if mu == 0.0 {
        return Ok(if m == 0 { 1.0 } else { 0.0 });
    }
    Ok(log_be_pmf(mu, m, g).exp())
}

fn log_be_pmf(mu: f64, m: u32, g: u32) -> f64 {
    let (mf, gf) = (m as f64, g as f64);
    let x = mu / gf;
    lgamma(mf + gf) - lgamma(mf + 1.0) - lgamma(gf) + mf * x.ln() - (mf + gf) * x.ln_1p()
}

/// Probability that a frame produces no heralding click:
/// sum_k p(mu_f, k, d) (1 - eta_d)^k, summed until the remaining
/// pair-number mass is negligible.
pub fn herald_failure_prob(hp: &HeraldParams) -> Result<f64> {
    hp.validate()?;
    if hp.mu_f == 0.0 {
        return Ok(1.0);
    }
    let miss = 1.0 - hp.eta_d;
    let mut total = 0.0;
    let mut mass = 0.0;
    for k in 0..MAX_TERMS {
        let pk = bose_einstein_pmf(hp.mu_f, k as u32, hp.modes)?;
        total += pk * miss.powi(k as i32);
        mass += pk;
        if 1.0 - mass < TAIL_BOUND {
            return Ok(total);
        }
    }
    Err(Error::Truncation {
        tail: 1.0 - mass,
        limit: TAIL_BOUND,
    })
}

/// Heralded output distribution:
/// p_H(m) = (1 - p_fail) sum_{k>=m} p(mu_b, k, d) C(k, m) eta_s^m (1 - eta_s)^(k-m)
///        + p_fail * delta_{m,0}.
pub fn heralded_output_dist(hp: &HeraldParams, m_max: usize) -> Result<PhotonNumberDist> {
    hp.validate()?;
    if m_max < 2 {
        return Err(invalid("m_max", "must be >= 2"));
    }
    let p_fail = herald_failure_prob(hp)?;
    let mu_b = hp.mu_b();
    let mut pmf = vec![0.0; m_max + 1];

    if mu_b == 0.0 || hp.eta_s == 0.0 {
        // every generated photon is blocked (or none exist); the output is vacuum
        pmf[0] = 1.0;
        return Ok(PhotonNumberDist { pmf, tail: 0.0 });
    }

    for (m, slot) in pmf.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut mass_beyond = 1.0;
        let mut converged = false;
        for k in 0..MAX_TERMS {
            if k >= m {
                acc += bose_einstein_pmf(mu_b, k as u32, hp.modes)? * binom_thin(k, m, hp.eta_s);
            }
            mass_beyond -= bose_einstein_pmf(mu_b, k as u32, hp.modes)?;
            // the binomial factor never exceeds 1, so the remaining pair
            // mass bounds the truncated remainder
            if k >= m && mass_beyond < TAIL_BOUND {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Truncation {
                tail: mass_beyond,
                limit: TAIL_BOUND,
            });
        }
        *slot = (1.0 - p_fail) * acc;
    }
    pmf[0] += p_fail;
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    Ok(PhotonNumberDist { pmf, tail })
}

/// C(k, m) eta^m (1 - eta)^(k - m).
fn binom_thin(k: usize, m: usize, eta: f64) -> f64 {
    if m > k {
        return 0.0;
    }
    if eta >= 1.0 {
        return if m == k { 1.0 } else { 0.0 };
    }
    let (kf, mf) = (k as f64, m as f64);
    let log_c = lgamma(kf + 1.0) - lgamma(mf + 1.0) - lgamma(kf - mf + 1.0);
    (log_c + mf * eta.ln() + (kf - mf) * (1.0 - eta).ln()).exp()
}

/// Largest mu_f whose heralded output keeps p(>1 | >=1) at or below the
/// bound, found by bisection (the multiphoton fraction is monotone in
/// mu_f). Returns (mu_f, p_one).
pub fn operating_point(modes: u32, eta_d: f64, eta_s: f64, bound: f64) -> Result<(f64, f64)> {
    if !(bound > 0.0 && bound < 1.0) {
        return Err(invalid("bound", "must be in (0, 1)"));
    }
    let multi = |mu_f: f64| -> Result<f64> {
        let hp = HeraldParams {
            mu_f,
            modes,
            eta_d,
            eta_s,
            multiphoton_bound: bound,
            mu_b_override: None,
        };
        Ok(heralded_output_dist(&hp, 2)?.multiphoton_given_any())
    };

    // bracket the bound crossing
    let mut lo = 0.0;
    let mut hi = 1.0;
    while multi(hi)? <= bound {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::UnattainableBound { bound });
        }
    }
    // bisect to 1e-6 relative width
    while hi - lo > 1e-6 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if multi(mid)? <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let hp = HeraldParams {
        mu_f: lo,
        modes,
        eta_d,
        eta_s,
        multiphoton_bound: bound,
        mu_b_override: None,
    };
    let dist = heralded_output_dist(&hp, 2)?;
    Ok((lo, dist.prob(1)))
}

/// Switch transmissivity for a given attenuation in dB.
pub fn switch_transmissivity(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

fn invalid(name: &'static str, reason: &str) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.to_owned(),
    }
}

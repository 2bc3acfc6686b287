//! Run configuration: one struct covering every command, loadable from an
//! INI-style key/value file or the equivalent JSON object. Defaults
//! reproduce the reference operating point (d = 64 timing scales, 0.2
//! dB/km fiber, 93% detectors, 20 ps jitter, 1 kHz dark counts, beta =
//! 0.9, sigma_delta = 10 ps).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use doqkd_core::{
    eps_from_eta_xi, sigma_delta_from_xi, xi_from_sigma_delta, DispersionParams, EveNoise,
    HeraldParams, LinkParams, RateConvention, SimConfig, SourceParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSection,
    pub dispersion: DispersionSection,
    pub link: LinkSection,
    pub noise: NoiseSection,
    pub security: SecuritySection,
    pub herald: HeraldSection,
    pub sweep: SweepSection,
    pub sim: SimSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: SourceSection::default(),
            dispersion: DispersionSection::default(),
            link: LinkSection::default(),
            noise: NoiseSection::default(),
            security: SecuritySection::default(),
            herald: HeraldSection::default(),
            sweep: SweepSection::default(),
            sim: SimSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub sigma_coh_ps: f64,
    pub sigma_cor_ps: f64,
    pub pair_prob: f64,
    pub pump_wavelength_nm: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            sigma_coh_ps: 1920.0,
            sigma_cor_ps: 30.0,
            pair_prob: 0.607,
            pump_wavelength_nm: 1560.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersionSection {
    /// Dispersion product k = 2 beta2 L (ps^2) realizing the conjugate basis.
    pub k_ps2: f64,
}

impl Default for DispersionSection {
    fn default() -> Self {
        Self { k_ps2: 1.0e8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub alpha_db_per_km: f64,
    pub length_km: f64,
    pub eta_det_a: f64,
    pub eta_det_b: f64,
    pub jitter_ps: f64,
    pub dark_rate_hz: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            alpha_db_per_km: 0.2,
            length_km: 0.0,
            eta_det_a: 0.93,
            eta_det_b: 0.93,
            jitter_ps: 20.0,
            dark_rate_hz: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Measured correlation-time offset (ps). Exclusive with `xi`.
    pub sigma_delta_ps: Option<f64>,
    /// Measured difference-variance growth. Exclusive with `sigma_delta_ps`.
    pub xi: Option<f64>,
    pub region_grid: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigma_delta_ps: Some(10.0),
            xi: None,
            region_grid: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecuritySection {
    pub beta: f64,
    /// `paper` or `strict`.
    pub convention: String,
    pub sifting: f64,
}

impl Default for SecuritySection {
    fn default() -> Self {
        Self {
            beta: 0.9,
            convention: "paper".to_owned(),
            sifting: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeraldSection {
    pub eta_d: f64,
    pub switch_loss_db: f64,
    pub bound: f64,
    pub mu_f_max: f64,
    pub mu_f_points: usize,
}

impl Default for HeraldSection {
    fn default() -> Self {
        Self {
            eta_d: 0.93,
            switch_loss_db: 1.0,
            bound: 0.01,
            mu_f_max: 4.0,
            mu_f_points: 81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Swept variable: `length_km` or `sigma_delta_ps`; must match the
    /// sweep command in use.
    pub axis: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub d_list: Vec<u32>,
    /// Heralded pair probability per entry of `d_list`.
    #[serde(deserialize_with = "one_or_many")]
    pub pair_prob_per_d: Vec<f64>,
    /// `fixed-coh` (common sigma_coh) or `fixed-cor` (common sigma_cor).
    pub scaling: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: "length_km".to_owned(),
            start: 0.0,
            stop: 300.0,
            points: 61,
            d_list: vec![64, 32, 16, 8],
            pair_prob_per_d: vec![0.607, 0.411, 0.231, 0.119],
            scaling: "fixed-coh".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_frames: u64,
    pub seed: u64,
    pub basis_bias: f64,
    /// Injected Eve noise.
    pub eps: f64,
    pub eta: f64,
    /// When set, overrides `eps` via the (eta, xi) line.
    pub xi: Option<f64>,
    /// Estimate noise from photon-labeled pairs; otherwise a 3-sigma
    /// window filter stands in for the labels.
    pub use_truth_labels: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_frames: 100_000,
            seed: 7,
            basis_bias: 0.5,
            eps: 0.0,
            eta: 0.0,
            xi: None,
            use_truth_labels: true,
        }
    }
}

/// Per-d scaling rule for sweep curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// sigma_coh shared by every d; sigma_cor = sigma_coh / d.
    FixedCoh,
    /// sigma_cor shared by every d; sigma_coh = d * sigma_cor.
    FixedCor,
}

impl RunConfig {
    /// Load from a file (JSON when the first significant byte is `{`,
    /// INI-style otherwise) or fall back to the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str::<Value>(text).context("invalid JSON")?
        } else {
            ini_to_value(text)?
        };
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.validate_shapes()?;
        Ok(cfg)
    }

    fn validate_shapes(&self) -> Result<()> {
        if self.noise.sigma_delta_ps.is_some() && self.noise.xi.is_some() {
            bail!("noise.sigma_delta_ps and noise.xi are exclusive; set one");
        }
        if self.sweep.d_list.is_empty() {
            bail!("sweep.d_list: must list at least one dimension");
        }
        if self.sweep.pair_prob_per_d.len() != self.sweep.d_list.len() {
            bail!(
                "sweep.pair_prob_per_d: expected {} entries to match sweep.d_list, got {}",
                self.sweep.d_list.len(),
                self.sweep.pair_prob_per_d.len()
            );
        }
        Ok(())
    }

    pub fn source_params(&self) -> Result<SourceParams> {
        let mut p = SourceParams::new(
            self.source.sigma_coh_ps,
            self.source.sigma_cor_ps,
            self.source.pair_prob,
        )?;
        p.pump_wavelength_nm = self.source.pump_wavelength_nm;
        Ok(p)
    }

    pub fn dispersion_params(&self) -> Result<DispersionParams> {
        Ok(DispersionParams::from_product(self.dispersion.k_ps2)?)
    }

    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            alpha_db_per_km: self.link.alpha_db_per_km,
            length_km: self.link.length_km,
            eta_det_a: self.link.eta_det_a,
            eta_det_b: self.link.eta_det_b,
            jitter_ps: self.link.jitter_ps,
            dark_rate_hz: self.link.dark_rate_hz,
        }
    }

    /// Measured noise offset in ps, however the config expressed it.
    pub fn sigma_delta_ps(&self) -> f64 {
        match (self.noise.sigma_delta_ps, self.noise.xi) {
            (Some(sd), _) => sd,
            (None, Some(xi)) => sigma_delta_from_xi(xi, self.source.sigma_cor_ps),
            (None, None) => 0.0,
        }
    }

    /// xi for the configured source timing scales.
    pub fn xi(&self) -> f64 {
        match (self.noise.sigma_delta_ps, self.noise.xi) {
            (Some(sd), _) => xi_from_sigma_delta(sd, self.source.sigma_cor_ps),
            (None, Some(xi)) => xi,
            (None, None) => 0.0,
        }
    }

    pub fn convention(&self) -> Result<RateConvention> {
        match self.security.convention.as_str() {
            "paper" => Ok(RateConvention::Paper),
            "strict" => Ok(RateConvention::Strict),
            other => bail!("security.convention: expected `paper` or `strict`, got `{other}`"),
        }
    }

    pub fn scaling(&self) -> Result<Scaling> {
        match self.sweep.scaling.as_str() {
            "fixed-coh" => Ok(Scaling::FixedCoh),
            "fixed-cor" => Ok(Scaling::FixedCor),
            other => bail!("sweep.scaling: expected `fixed-coh` or `fixed-cor`, got `{other}`"),
        }
    }

    /// Source parameters for one sweep dimension under the scaling rule.
    pub fn source_for_dimension(&self, idx: usize) -> Result<SourceParams> {
        let d = self.sweep.d_list[idx] as f64;
        let p_nu = self.sweep.pair_prob_per_d[idx];
        let (coh, cor) = match self.scaling()? {
            Scaling::FixedCoh => (self.source.sigma_coh_ps, self.source.sigma_coh_ps / d),
            Scaling::FixedCor => (d * self.source.sigma_cor_ps, self.source.sigma_cor_ps),
        };
        Ok(SourceParams::new(coh, cor, p_nu)?)
    }

    pub fn herald_params(&self, modes: u32, mu_f: f64) -> Result<HeraldParams> {
        let mut hp = HeraldParams::new(
            mu_f,
            modes,
            self.herald.eta_d,
            doqkd_core::switch_transmissivity(self.herald.switch_loss_db),
        )?;
        hp.multiphoton_bound = self.herald.bound;
        Ok(hp)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let src = self.source_params()?;
        let eve = match self.sim.xi {
            Some(xi) => {
                let d = doqkd_core::schmidt_dimension(&src);
                EveNoise::new(eps_from_eta_xi(self.sim.eta, xi, d)?, self.sim.eta)?
            }
            None => EveNoise::new(self.sim.eps, self.sim.eta)?,
        };
        Ok(SimConfig {
            src,
            disp: self.dispersion_params()?,
            link: self.link_params(),
            eve,
            n_frames: self.sim.n_frames,
            seed: self.sim.seed,
            basis_bias: self.sim.basis_bias,
        })
    }
}

/// Accept either a bare scalar or a list for sequence-valued fields, so
/// `d_list = 64` and `d_list = 64, 32` both parse.
fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(vs) => vs,
    })
}

/// Translate INI-style text (sections of key = value lines, `#`/`;`
/// comments) into the JSON object the serde layer expects. Scalar values
/// try integer, float, then boolean before falling back to strings;
/// comma-separated values become arrays.
fn ini_to_value(text: &str) -> Result<Value> {
    let mut root = Map::new();
    let mut section: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .with_context(|| format!("line {}: unterminated section header", lineno + 1))?
                .trim();
            if name.is_empty() {
                bail!("line {}: empty section name", lineno + 1);
            }
            root.entry(name.to_owned())
                .or_insert_with(|| Value::Object(Map::new()));
            section = Some(name.to_owned());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim();
        if key.is_empty() {
            bail!("line {}: empty key", lineno + 1);
        }
        let parsed = parse_scalar_or_list(value.trim());
        match &section {
            Some(name) => {
                let obj = root
                    .get_mut(name)
                    .and_then(Value::as_object_mut)
                    .expect("section object exists");
                obj.insert(key.to_owned(), parsed);
            }
            None => bail!(
                "line {}: key `{key}` appears before any [section] header",
                lineno + 1
            ),
        }
    }
    Ok(Value::Object(root))
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_scalar_or_list(s: &str) -> Value {
    if s.contains(',') {
        return Value::Array(s.split(',').map(|p| parse_scalar(p.trim())).collect());
    }
    parse_scalar(s)
}

fn parse_scalar(s: &str) -> Value {
    let unquoted = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(s);
    if unquoted != s {
        return Value::String(unquoted.to_owned());
    }
    if let Ok(i) = s.parse::<i64>() {
        return Value::Number(i.into());
    }
    if let Ok(f) = s.parse::<f64>() {
        if let Some(n) = Number::from_f64(f) {
            return Value::Number(n);
        }
    }
    match s {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(s.to_owned()),
    }
}

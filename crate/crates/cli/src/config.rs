//! TOML configuration files for the `design` and `simulate` commands.
//!
//! Conventions: all angles in degrees, SNRs in dB, seeds explicit. Optional
//! scale fields (antenna count, trial count) default to desk scale and are
//! lifted to the published settings by `--paper-scale`.

use crate::CliError;
use sdmimo::array::{UlaGeometry, UpaGeometry};
use sdmimo::designs::SqnrContext;
use sdmimo::sim::{ArrayGeometry, DesignParams, ScenarioConfig, Scheme, Sector};
use sdmimo::socp::{DesignMode, DesignSpec, FilterOrder};
use serde::Deserialize;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub kind: String,
    pub n_antennas: Option<usize>,
    pub spacing_ratio: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub spacing_ratio_1: Option<f64>,
    pub spacing_ratio_2: Option<f64>,
}

impl ArrayConfig {
    /// Desk-scale/paper-scale default antenna counts apply when the config
    /// leaves the count out.
    pub fn resolve(&self, default_n: usize) -> Result<ArrayGeometry, CliError> {
        match self.kind.as_str() {
            "ula" => {
                let n = self.n_antennas.unwrap_or(default_n);
                let d = self.spacing_ratio.unwrap_or(0.25);
                Ok(ArrayGeometry::Ula(UlaGeometry::new(n, d)?))
            }
            "upa" => {
                let n1 = self.n1.ok_or_else(|| bad("upa array needs n1"))?;
                let n2 = self.n2.ok_or_else(|| bad("upa array needs n2"))?;
                let d1 = self.spacing_ratio_1.or(self.spacing_ratio).unwrap_or(0.25);
                let d2 = self.spacing_ratio_2.or(self.spacing_ratio).unwrap_or(0.25);
                Ok(ArrayGeometry::Upa(UpaGeometry::new(n1, n2, d1, d2)?))
            }
            other => Err(bad(format!("unknown array kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    pub theta_deg: (f64, f64),
    pub phi_deg: Option<(f64, f64)>,
    pub samples: Option<usize>,
    pub grid: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_eta2: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub theta_deg: f64,
    pub phi_deg: Option<f64>,
    pub gain: f64,
}

/// `design` command configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub mode: String,
    pub order: usize,
    pub order2: Option<usize>,
    pub m_levels: usize,
    pub seed: Option<u64>,
    pub solver_tol: Option<f64>,
    pub array: ArrayConfig,
    pub sector: Option<SectorConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub users: Vec<UserConfig>,
}

impl DesignConfig {
    pub fn to_spec(&self) -> Result<DesignSpec<f64>, CliError> {
        let geometry = self.array.resolve(1024)?;
        let ctx = SqnrContext::new(
            self.noise.rho.unwrap_or(1.0),
            self.noise.sigma_eta2.unwrap_or(0.0),
            geometry.n_total(),
        )?;
        let order = match (&geometry, self.order2) {
            (ArrayGeometry::Ula(_), _) => FilterOrder::OneD(self.order),
            (ArrayGeometry::Upa(_), order2) => {
                FilterOrder::TwoD(self.order, order2.unwrap_or(self.order))
            }
        };
        let mode = match self.mode.as_str() {
            "fixed-sector" => {
                let sector = self
                    .sector
                    .as_ref()
                    .ok_or_else(|| bad("fixed-sector mode needs a [sector] table"))?;
                let r_min = sector.r_min.unwrap_or(1.0);
                let r_max = sector.r_max.unwrap_or(1.0);
                match geometry {
                    ArrayGeometry::Ula(g) => {
                        let omega = |deg: f64| {
                            sdmimo::array::spatial_frequency(deg.to_radians(), g.spacing_ratio())
                        };
                        DesignMode::FixedSector1d {
                            omega_lo: omega(sector.theta_deg.0)?,
                            omega_hi: omega(sector.theta_deg.1)?,
                            samples: sector.samples,
                            r_min,
                            r_max,
                        }
                    }
                    ArrayGeometry::Upa(g) => {
                        let phi = sector
                            .phi_deg
                            .ok_or_else(|| bad("upa sector needs phi_deg bounds"))?;
                        DesignMode::FixedSector2d {
                            theta_range: (
                                sector.theta_deg.0.to_radians(),
                                sector.theta_deg.1.to_radians(),
                            ),
                            phi_range: (phi.0.to_radians(), phi.1.to_radians()),
                            spacing_ratios: (g.spacing_ratio_1(), g.spacing_ratio_2()),
                            grid: sector.grid,
                            r_min,
                            r_max,
                        }
                    }
                }
            }
            "user-targeted" => {
                if self.users.is_empty() {
                    return Err(bad("user-targeted mode needs at least one [[users]] entry"));
                }
                match geometry {
                    ArrayGeometry::Ula(g) => {
                        let targets = self
                            .users
                            .iter()
                            .map(|u| {
                                let omega = sdmimo::array::spatial_frequency(
                                    u.theta_deg.to_radians(),
                                    g.spacing_ratio(),
                                )?;
                                let gamma = ctx.gamma(num_complex_gain(u.gain)?)?;
                                Ok((omega, gamma))
                            })
                            .collect::<Result<Vec<_>, CliError>>()?;
                        DesignMode::UserTargeted1d(targets)
                    }
                    ArrayGeometry::Upa(g) => {
                        let targets = self
                            .users
                            .iter()
                            .map(|u| {
                                let phi = u.phi_deg.ok_or_else(|| bad("upa users need phi_deg"))?;
                                let pair = sdmimo::array::spatial_frequency_2d(
                                    u.theta_deg.to_radians(),
                                    phi.to_radians(),
                                    &g,
                                )?;
                                let gamma = ctx.gamma(num_complex_gain(u.gain)?)?;
                                Ok((pair, gamma))
                            })
                            .collect::<Result<Vec<_>, CliError>>()?;
                        DesignMode::UserTargeted2d(targets)
                    }
                }
            }
            other => return Err(bad(format!("unknown design mode {other:?}"))),
        };
        Ok(DesignSpec {
            order,
            m_levels: self.m_levels,
            ctx,
            mode,
        })
    }

    pub fn solver_tol(&self) -> f64 {
        self.solver_tol.unwrap_or(1e-8)
    }
}

fn num_complex_gain(mag: f64) -> Result<sdmimo::C64, CliError> {
    if mag.is_nan() || mag <= 0.0 {
        return Err(bad(format!("user gain must be positive, got {mag}")));
    }
    Ok(sdmimo::C64::new(mag, 0.0))
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimDesignConfig {
    pub order: Option<usize>,
    pub order2: Option<usize>,
    pub sector_samples: Option<usize>,
    pub grid_2d: Option<usize>,
    pub sigma_eta2: Option<f64>,
    pub rho: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
}

/// `simulate` command configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub k_users: usize,
    pub m_levels: usize,
    pub schemes: Vec<String>,
    pub snr_db: Vec<f64>,
    pub symbols_per_trial: Option<usize>,
    pub trials: Option<usize>,
    pub min_sep_deg: Option<f64>,
    pub noise_var: Option<f64>,
    pub solver_tol: Option<f64>,
    pub array: ArrayConfig,
    pub sector: SectorConfig,
    #[serde(default)]
    pub design: SimDesignConfig,
}

/// Desk-scale defaults; `--paper-scale` switches to the published settings.
pub struct ScaleDefaults {
    pub n_antennas: usize,
    pub trials: usize,
}

pub const DESK_SCALE: ScaleDefaults = ScaleDefaults {
    n_antennas: 256,
    trials: 100,
};
pub const PAPER_SCALE: ScaleDefaults = ScaleDefaults {
    n_antennas: 1024,
    trials: 1000,
};

impl SimulateConfig {
    pub fn resolve(
        &self,
        scale: &ScaleDefaults,
        seed_override: Option<u64>,
    ) -> Result<ScenarioConfig, CliError> {
        let geometry = self.array.resolve(scale.n_antennas)?;
        let schemes = self
            .schemes
            .iter()
            .map(|s| Scheme::parse(s).map_err(CliError::from))
            .collect::<Result<Vec<_>, _>>()?;
        let design = DesignParams {
            order: self.design.order.unwrap_or(16),
            order2: self.design.order2,
            sector_samples: self.design.sector_samples,
            grid_2d: self.design.grid_2d,
            noise_var: self.design.sigma_eta2.unwrap_or(0.0),
            rho: self.design.rho.unwrap_or(1.0),
            r_min: self.design.r_min.unwrap_or(1.0),
            r_max: self.design.r_max.unwrap_or(1.0),
        };
        let cfg = ScenarioConfig {
            geometry,
            k_users: self.k_users,
            sector: Sector {
                theta_deg: self.sector.theta_deg,
                phi_deg: self.sector.phi_deg,
            },
            min_sep_deg: self.min_sep_deg.unwrap_or(1.0),
            m_levels: self.m_levels,
            schemes,
            design,
            snr_db: self.snr_db.clone(),
            symbols_per_trial: self.symbols_per_trial.unwrap_or(500),
            trials: self.trials.unwrap_or(scale.trials),
            master_seed: seed_override.unwrap_or(self.seed),
            noise_var: self.noise_var.unwrap_or(1.0),
            solver_tol: self.solver_tol.unwrap_or(1e-8),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| bad(format!("cannot parse {}: {e}", path.display())))
}

/// Echo of a parsed TOML file for the manifest.
pub fn toml_echo(path: &std::path::Path) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let value: toml::Value =
        toml::from_str(&text).map_err(|e| bad(format!("cannot parse {}: {e}", path.display())))?;
    serde_json::to_value(&value).map_err(|e| bad(format!("config echo failed: {e}")))
}

//! Flat TOML run configuration. Rates are in units of gamma, which is fixed
//! to 1; times are in units of 1/gamma.

use contact_tebd::doublespace::DoubleSpaceConfig;
use contact_tebd::model::{Kind, ModelSpec};
use contact_tebd::mps::Truncation;
use contact_tebd::qjmc::QjmcConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    DoubleSchrodinger,
    DoubleHeisenberg,
    Qjmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Kind,
    #[serde(rename = "L", default = "default_len")]
    pub len: usize,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub branching: f64,
    pub engine: Engine,
    pub chi_list: Vec<usize>,
    pub dt: Option<f64>,
    pub t_max: f64,
    #[serde(default = "default_n_traj")]
    pub n_traj: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_window")]
    pub fit_window: [f64; 2],
    /// Window for the `n_seed` slope; defaults to `fit_window`.
    pub seed_fit_window: Option<[f64; 2]>,
    pub output_dir: String,
    /// Steps between measurements; defaults to 0.1/gamma worth of steps.
    pub measure_every: Option<usize>,
    #[serde(default = "default_cutoff")]
    pub svd_cutoff: f64,
    #[serde(default)]
    pub record_profile: bool,
}

fn default_len() -> usize {
    51
}

fn default_n_traj() -> u64 {
    1000
}

fn default_window() -> [f64; 2] {
    [5.0, 10.0]
}

fn default_cutoff() -> f64 {
    Truncation::DEFAULT_CUTOFF
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if self.chi_list.is_empty() {
            return Err("chi_list must not be empty".into());
        }
        if self.chi_list.contains(&0) {
            return Err("bond dimensions must be at least 1".into());
        }
        if self.engine == Engine::Qjmc && self.kind != Kind::Quantum {
            return Err("the qjmc engine requires kind = \"quantum\"".into());
        }
        if self.engine == Engine::Qjmc && self.n_traj == 0 {
            return Err("n_traj must be at least 1".into());
        }
        if !(self.t_max > 0.0) {
            return Err("t_max must be positive".into());
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err("dt must be positive".into());
            }
        }
        if self.measure_every == Some(0) {
            return Err("measure_every must be at least 1".into());
        }
        for w in [Some(self.fit_window), self.seed_fit_window].into_iter().flatten() {
            if !(w[0] > 0.0 && w[0] < w[1]) {
                return Err(format!("fit window [{}, {}] must satisfy 0 < lo < hi", w[0], w[1]));
            }
        }
        self.spec().validate().map_err(|e| e.to_string())
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec { kind: self.kind, len: self.len, gamma: 1.0, omega: self.omega, branching: self.branching }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(match self.engine {
            Engine::Qjmc => QjmcConfig::DEFAULT_DT,
            _ => DoubleSpaceConfig::DEFAULT_DT,
        })
    }

    pub fn measure_every(&self) -> usize {
        self.measure_every
            .unwrap_or_else(|| ((0.1 / self.dt()).round() as usize).max(1))
    }

    pub fn seed_window(&self) -> [f64; 2] {
        self.seed_fit_window.unwrap_or(self.fit_window)
    }

    pub fn double_space(&self, chi: usize) -> DoubleSpaceConfig {
        DoubleSpaceConfig {
            spec: self.spec(),
            chi_max: chi,
            dt: self.dt(),
            t_max: self.t_max,
            measure_every: self.measure_every(),
            svd_cutoff: self.svd_cutoff,
            record_profile: self.record_profile,
        }
    }

    pub fn qjmc(&self, chi: usize) -> QjmcConfig {
        QjmcConfig {
            spec: self.spec(),
            chi_max: chi,
            dt: self.dt(),
            t_max: self.t_max,
            measure_every: self.measure_every(),
            svd_cutoff: self.svd_cutoff,
            freeze_absorbed: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
kind = "quantum"
omega = 6.0
engine = "qjmc"
chi_list = [16]
t_max = 1.0
output_dir = "out"
"#;

    #[test]
    fn defaults() {
        let cfg = RunConfig::parse(BASE).unwrap();
        assert_eq!(cfg.len, 51);
        assert_eq!(cfg.spec().seed_site(), 25);
        assert_eq!(cfg.dt(), 0.01);
        assert_eq!(cfg.measure_every(), 10);
        assert_eq!(cfg.fit_window, [5.0, 10.0]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::parse(&BASE.replace("[16]", "[]")).is_err());
        assert!(RunConfig::parse(&BASE.replace("\"quantum\"", "\"classical\"")).is_err());
        assert!(RunConfig::parse(&format!("{BASE}\nbogus = 1\n")).is_err());
        assert!(RunConfig::parse(&format!("{BASE}\nL = 1\n")).is_err());
    }
}

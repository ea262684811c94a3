//! Run configuration: one TOML file drives every subcommand.

use std::path::{Path, PathBuf};

use rescert::oracle::OracleConfig;
use rescert::system::{bundled, bundled_source, load_system};
use rescert::trainer::{CollocationKind, TrainConfig};
use rescert::verifier::BnbConfig;
use rescert::SystemModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const BUNDLED_RUNS: [(&str, &str); 5] = [
    ("scalar_exp", include_str!("../configs/scalar_exp.toml")),
    ("linear2d_lyap", include_str!("../configs/linear2d_lyap.toml")),
    ("pendulum_lyap", include_str!("../configs/pendulum_lyap.toml")),
    ("lqr_di", include_str!("../configs/lqr_di.toml")),
    ("pendulum_hjb", include_str!("../configs/pendulum_hjb.toml")),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled system name, or a system TOML path relative to the run config.
    pub system: String,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub net: NetSection,
    pub collocation: CollocationSection,
    #[serde(default)]
    pub trainer: TrainConfig,
    #[serde(default)]
    pub bnb: BnbConfig,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub m: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationSection {
    pub kind: CollocationKind,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    /// Upper end of the ε search.
    pub eps_hi: f64,
    pub rho: f64,
    pub alpha: f64,
    /// Explicit sublevel values `c` tried in order.
    pub sublevel: Vec<f64>,
    /// Used when `sublevel` is empty: fractions of the smallest sampled
    /// value of V̂ on the domain boundary.
    pub sublevel_fractions: Vec<f64>,
    /// Radius of the local positive-definiteness check (HJB only).
    pub rho_pd: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self {
            eps_hi: 0.5,
            rho: 0.1,
            alpha: 1.0,
            sublevel: Vec::new(),
            sublevel_fractions: vec![0.9, 0.75, 0.5, 0.25],
            rho_pd: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSection {
    #[serde(flatten)]
    pub integrator: OracleConfig,
    /// Points per axis of the check grid.
    pub grid: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            integrator: OracleConfig::default(),
            grid: 21,
        }
    }
}

/// A parsed run config together with its provenance.
pub struct Loaded {
    pub run: RunConfig,
    pub system: SystemModel,
    /// SHA-256 over the run config text and the system text.
    pub hash: String,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let c = &self.certify;
        if !(c.eps_hi > 0.0 && c.eps_hi < 1.0) {
            return Err(format!("certify.eps_hi = {} must lie in (0, 1)", c.eps_hi));
        }
        if !(c.rho > 0.0) || !(c.alpha > 0.0) || !(c.rho_pd > 0.0) {
            return Err("certify.rho, certify.alpha and certify.rho_pd must be positive".into());
        }
        if c.sublevel.iter().any(|v| !(*v > 0.0)) {
            return Err("sublevel values must be positive".into());
        }
        if self.net.m == 0 || self.collocation.count == 0 {
            return Err("net.m and collocation.count must be positive".into());
        }
        if self.oracle.grid < 2 {
            return Err("oracle.grid must be at least 2".into());
        }
        Ok(())
    }
}

/// Reads `source`, which is either a path to a run config or a bundled name.
pub fn load(source: &str) -> Result<Loaded, String> {
    let path = Path::new(source);
    let (text, base) = if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{source}: {e}"))?;
        (text, path.parent().map(Path::to_path_buf).unwrap_or_default())
    } else if let Some((_, text)) = BUNDLED_RUNS.iter().find(|(n, _)| *n == source) {
        (text.to_string(), PathBuf::new())
    } else {
        return Err(format!("no config file or bundled config named `{source}`"));
    };
    let run: RunConfig = toml::from_str(&text).map_err(|e| format!("{source}: {e}"))?;
    run.validate()?;

    let sys_path = base.join(&run.system);
    let (system, sys_text) = if sys_path.is_file() {
        let t = std::fs::read_to_string(&sys_path).map_err(|e| format!("{}: {e}", sys_path.display()))?;
        (load_system(&t).map_err(|e| format!("{}: {e}", sys_path.display()))?, t)
    } else if let Some(src) = bundled_source(&run.system) {
        (bundled(&run.system).map_err(|e| e.to_string())?, src.to_string())
    } else {
        return Err(format!(
            "system `{}` is neither a file nor a bundled system",
            run.system
        ));
    };

    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update([0u8]);
    h.update(sys_text.as_bytes());
    let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { run, system, hash })
}

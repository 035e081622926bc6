//! Run configuration: schema validation, typed parsing, defaults.

use std::fmt;
use std::path::PathBuf;

use nlqc::protocol::Fault;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CONFIG_SCHEMA: &str = include_str!("../../../docs/schema/config.schema.json");
pub const REPORT_SCHEMA: &str = include_str!("../../../docs/schema/report.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SubcommandName {
    Spread,
    Decompose,
    Protocol,
    Holocode,
    Teleport,
    Certify,
    CheckSim,
}

impl SubcommandName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SubcommandName::Spread => "spread",
            SubcommandName::Decompose => "decompose",
            SubcommandName::Protocol => "protocol",
            SubcommandName::Holocode => "holocode",
            SubcommandName::Teleport => "teleport",
            SubcommandName::Certify => "certify",
            SubcommandName::CheckSim => "check-sim",
        }
    }
}

impl fmt::Display for SubcommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Brickwork {
        n_sites: usize,
        depth: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Tfim {
        n_sites: usize,
        j: f64,
        h: f64,
        time: f64,
    },
}

impl ModelConfig {
    pub fn n_sites(&self) -> usize {
        match self {
            ModelConfig::Brickwork { n_sites, .. } | ModelConfig::Tfim { n_sites, .. } => *n_sites,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub residual: f64,
    pub channel: f64,
    pub completeness: f64,
    pub fidelity_gap: f64,
    pub mutual_information: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-9,
            channel: 1e-9,
            completeness: 1e-10,
            fidelity_gap: 1e-6,
            mutual_information: 1e-9,
        }
    }
}

/// Times and distances for a light-cone fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub times: Vec<f64>,
    pub distances: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            times: (1..=8).map(|k| k as f64 * 0.1).collect(),
            distances: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeSection {
    pub truncate: bool,
    pub inputs: usize,
    pub lightcone: Grid,
}

impl Default for DecomposeSection {
    fn default() -> Self {
        DecomposeSection { truncate: false, inputs: 20, lightcone: Grid::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub inputs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection { inputs: 3, fault: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolocodeSection {
    pub blocks: usize,
    pub n_sites: usize,
    pub layers: usize,
    pub targets: usize,
    pub target_len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl Default for HolocodeSection {
    fn default() -> Self {
        HolocodeSection { blocks: 2, n_sites: 32, layers: 1, targets: 5, target_len: 40, fault: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleportSection {
    pub ports: Vec<usize>,
    pub cascade_ports: Vec<usize>,
    pub otp: bool,
}

impl Default for TeleportSection {
    fn default() -> Self {
        TeleportSection { ports: vec![1, 2, 4], cascade_ports: vec![1, 2], otp: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeInputs {
    pub eps_enc: f64,
    pub eps_rec: f64,
    pub eps_dyn: f64,
    pub eps_spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<nlqc::approxcode::PhysicalParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndToEndSection {
    pub n_sites: usize,
    pub j: f64,
    pub h: f64,
    pub frac: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub runs: usize,
}

impl Default for EndToEndSection {
    fn default() -> Self {
        let d = nlqc::approxcode::EndToEndConfig::default();
        EndToEndSection { n_sites: d.n_sites, j: d.j, h: d.h, frac: d.frac, kappa: d.kappa, zeta: d.zeta, runs: 1 }
    }
}

/// Explicit composition when `compose` is present, otherwise an end-to-end run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compose: Option<ComposeInputs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_to_end: Option<EndToEndSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSimSection {
    pub n_sites: usize,
    pub j: f64,
    pub h: f64,
    pub fine_factor: usize,
    pub probes: Vec<usize>,
    pub times: Vec<f64>,
    pub max_len: usize,
    pub delta: f64,
    pub horizon: f64,
    pub lr_distances: Vec<usize>,
}

impl Default for CheckSimSection {
    fn default() -> Self {
        CheckSimSection {
            n_sites: 6,
            j: 1.0,
            h: 0.9,
            fine_factor: 2,
            probes: vec![0, 3],
            times: vec![0.0, 0.2],
            max_len: 2,
            delta: 1.0,
            horizon: 1.0,
            lr_distances: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: SubcommandName,
    #[serde(default)]
    pub seed: u64,
    /// Report path; the `--out` flag takes precedence. Not part of the echo.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompose: Option<DecomposeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holocode: Option<HolocodeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teleport: Option<TeleportSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
    #[serde(default, rename = "check-sim", skip_serializing_if = "Option::is_none")]
    pub check_sim: Option<CheckSimSection>,
}

impl RunConfig {
    /// Minimal config for a subcommand, used when no file is given.
    pub fn for_subcommand(subcommand: SubcommandName) -> Self {
        RunConfig {
            subcommand,
            seed: 0,
            out: None,
            model: None,
            tolerances: Tolerances::default(),
            spread: None,
            decompose: None,
            protocol: None,
            holocode: None,
            teleport: None,
            certify: None,
            check_sim: None,
        }
    }

    /// Fills the model and the section of the selected subcommand with
    /// defaults, so the echo states exactly what ran.
    pub fn effective(mut self) -> Self {
        use SubcommandName::*;
        let seed = self.seed;
        if matches!(self.subcommand, Spread | Decompose | Protocol) {
            let model = self.model.take().unwrap_or(ModelConfig::Brickwork { n_sites: 8, depth: 1, seed: None });
            self.model = Some(match model {
                ModelConfig::Brickwork { n_sites, depth, seed: s } => {
                    ModelConfig::Brickwork { n_sites, depth, seed: Some(s.unwrap_or(seed)) }
                }
                m => m,
            });
        }
        match self.subcommand {
            Spread => {
                self.spread.get_or_insert_with(Grid::default);
            }
            Decompose => {
                self.decompose.get_or_insert_with(DecomposeSection::default);
            }
            Protocol => {
                self.protocol.get_or_insert_with(ProtocolSection::default);
            }
            Holocode => {
                self.holocode.get_or_insert_with(HolocodeSection::default);
            }
            Teleport => {
                self.teleport.get_or_insert_with(TeleportSection::default);
            }
            Certify => {
                let c = self.certify.get_or_insert_with(CertifySection::default);
                if c.compose.is_none() && c.end_to_end.is_none() {
                    c.end_to_end = Some(EndToEndSection::default());
                }
            }
            CheckSim => {
                self.check_sim.get_or_insert_with(CheckSimSection::default);
            }
        }
        self
    }
}

/// A schema violation, or a config file that cannot be read.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, line) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            f.write_str(line)?;
        }
        Ok(())
    }
}

pub fn schema_errors(schema: &str, instance: &Value) -> Vec<String> {
    let schema: Value = serde_json::from_str(schema).expect("published schema is valid JSON");
    let validator = jsonschema::validator_for(&schema).expect("published schema compiles");
    validator
        .iter_errors(instance)
        .map(|e| {
            let path = e.instance_path().to_string();
            format!("schema violation at '{}': {e}", if path.is_empty() { "/" } else { &path })
        })
        .collect()
}

/// Parses a config document: schema first, then the typed structure.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ConfigError(vec![format!("config is not valid JSON: {e}")]))?;
    let errors = schema_errors(CONFIG_SCHEMA, &value);
    if !errors.is_empty() {
        return Err(ConfigError(errors));
    }
    serde_json::from_value(value).map_err(|e| ConfigError(vec![format!("config does not match the schema types: {e}")]))
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BicAudit,
    Corollary,
    #[serde(rename = "counterexample-1")]
    Counterexample1,
    #[serde(rename = "counterexample-2")]
    Counterexample2,
    GlmAudit,
    SemibanditExplore,
    GameSolve,
    GameSweep,
    Reduce,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::BicAudit,
        ExperimentKind::Corollary,
        ExperimentKind::Counterexample1,
        ExperimentKind::Counterexample2,
        ExperimentKind::GlmAudit,
        ExperimentKind::SemibanditExplore,
        ExperimentKind::GameSolve,
        ExperimentKind::GameSweep,
        ExperimentKind::Reduce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::BicAudit => "bic-audit",
            ExperimentKind::Corollary => "corollary",
            ExperimentKind::Counterexample1 => "counterexample-1",
            ExperimentKind::Counterexample2 => "counterexample-2",
            ExperimentKind::GlmAudit => "glm-audit",
            ExperimentKind::SemibanditExplore => "semibandit-explore",
            ExperimentKind::GameSolve => "game-solve",
            ExperimentKind::GameSweep => "game-sweep",
            ExperimentKind::Reduce => "reduce",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| Error::invalid(format!("unknown experiment kind {s:?}")))
    }

    /// Kinds that read a semibandit instance file.
    pub fn needs_instance(self) -> bool {
        matches!(self, ExperimentKind::SemibanditExplore | ExperimentKind::GameSolve | ExperimentKind::GameSweep)
    }
}

/// Kind-specific knobs; every field is optional and falls back to the documented default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Params {
    /// `bic-audit`: `disc-eight` (default) or `octahedron`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    /// `bic-audit`: audit times `t = dγ + offset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<usize>>,
    /// Scale constant `C` of the spectral or GLM threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_inner: Option<usize>,
    /// Certification z-score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// `corollary`: number of equally spaced actions on the unit disc (4 means the signed axes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    /// `counterexample-2`: dimensions probed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    /// `glm-audit`: confidence level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Samples per informed atom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    /// `game-sweep`: sample sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<u32>>,
    /// `semibandit-explore`: guard factor on the sample-size formula when `n` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<f64>,
    /// Game atom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    /// Scenario count for Monte-Carlo games.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<usize>,
    /// Replaces `λ̲/2d` in the exploration algorithm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// `reduce`: polytope dimension and inner steps per replication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
    pub replications: u64,
    pub seed: u64,
    /// Worker threads; the rayon default when absent. Never changes results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, replications: u64, seed: u64) -> Self {
        ExperimentConfig { kind, instance: None, replications, seed, parallelism: None, output: None, params: Params::default() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.parallelism == Some(0) {
            return Err(Error::invalid("parallelism must be at least 1"));
        }
        match &self.instance {
            Some(p) if !p.is_file() => Err(Error::invalid(format!("instance file {} does not exist", p.display()))),
            None if self.kind.needs_instance() => Err(Error::invalid(format!("{} needs an instance file", self.kind.as_str()))),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the compact JSON serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_bit_exactly() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::GlmAudit, 10, u64::MAX);
        cfg.params.c = Some(0.1 + 0.2);
        cfg.params.delta = Some(f64::MIN_POSITIVE);
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.params.c.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn kind_names() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::parse(k.as_str()).unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
        assert!(ExperimentKind::parse("nope").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_json(r#"{"kind":"corollary","replications":0,"seed":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"game-solve","replications":1,"seed":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"corollary","replications":1,"seed":1,"extra":2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"corollary","replications":1,"seed":1,"instance":"/no/such/file"}"#).is_err());
    }
}

//! Scenario documents (schema version 1) and their expansion into a
//! [`SystemSpec`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::placement::{place_shell, place_slab};
use crate::analysis::FitWindow;
use crate::cells::{preset, KineticPreset};
use crate::error::{Error, Result};
use crate::field::FullSettings;
use crate::reduced::ReducedSettings;
use crate::types::{
    CellKind, CellSpec, CellState, DomainSpec, InitialField, Point, ReceiverParams, SenderParams, SignalParams,
    SystemSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemSource,
    #[serde(default)]
    pub model: ModelChoice,
    #[serde(default)]
    pub reduced: ReducedSettings,
    #[serde(default)]
    pub full: FullSettings,
    pub t_end: f64,
    pub output_dt: f64,
    #[serde(default)]
    pub analyses: Vec<AnalysisRequest>,
    #[serde(default)]
    pub output: OutputOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Reduced,
    Full,
    Both,
}

impl ModelChoice {
    pub fn reduced(self) -> bool {
        matches!(self, ModelChoice::Reduced | ModelChoice::Both)
    }

    pub fn full(self) -> bool {
        matches!(self, ModelChoice::Full | ModelChoice::Both)
    }
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(ModelChoice::Reduced),
            "full" => Ok(ModelChoice::Full),
            "both" => Ok(ModelChoice::Both),
            _ => Err(Error::Config(format!("unknown model {s:?}; expected reduced, full or both"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    /// A fully spelled-out system.
    Explicit { spec: SystemSpec },
    /// Kinetics from a preset (optionally overridden) and cells from
    /// placement directives.
    Generated(GeneratedSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedSystem {
    #[serde(rename = "L")]
    pub radius: f64,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub diffusivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<SenderParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<ReceiverParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_radius: Option<f64>,
    pub placements: Vec<Placement>,
    #[serde(default)]
    pub initial: InitialDefaults,
    #[serde(default)]
    pub initial_field: InitialField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    Point { kind: CellKind, position: Point },
    /// Random positions with `r1_min ≤ r₁ ≤ r1_max`; needs `rng_seed`.
    Slab { kind: CellKind, count: usize, r1_min: f64, r1_max: f64 },
    /// Lattice on a sphere centred at the origin.
    Shell { kind: CellKind, count: usize, radius: f64 },
}

/// Initial state given to every generated cell of each kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialDefaults {
    pub sender: CellState,
    pub receiver: CellState,
}

impl Default for InitialDefaults {
    fn default() -> Self {
        Self {
            sender: CellState { x: vec![400.0], u: 0.0 },
            receiver: CellState { x: vec![300.0, 1.0], u: 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisRequest {
    /// Reduced-vs-full receiver errors. With `gammas`, a sweep over the
    /// common intracellular degradation rate; otherwise one row for the
    /// configured system.
    ErrorTable {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        gammas: Vec<f64>,
    },
    /// Field relaxation with the cells frozen at `frozen_signals`.
    DecayFit {
        frozen_signals: Vec<f64>,
        dt: f64,
        steps: usize,
        #[serde(default = "one")]
        every: usize,
        #[serde(default)]
        window: FitWindow,
    },
    /// ON/OFF state of every receiver at `t_end`.
    ToggleReport,
    /// Writes `G` and the gain matrix as CSV.
    GainExport,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryScope {
    #[default]
    All,
    Receivers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Which cells appear in trajectory CSVs.
    pub trajectory: TrajectoryScope,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Content-addressed output directory name.
    pub fn output_dir_name(&self) -> String {
        format!("{}-{}", self.name, &self.hash()[..16])
    }

    pub fn uses_random_placement(&self) -> bool {
        match &self.system {
            SystemSource::Generated(g) => g.placements.iter().any(|p| matches!(p, Placement::Slab { .. })),
            SystemSource::Explicit { .. } => false,
        }
    }

    /// Expands the system description into a concrete spec.
    pub fn build_spec(&self) -> Result<SystemSpec> {
        match &self.system {
            SystemSource::Explicit { spec } => Ok(spec.clone()),
            SystemSource::Generated(g) => g.build(self.rng_seed),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl GeneratedSystem {
    fn kinetics(&self) -> Result<KineticPreset> {
        let base = match &self.preset {
            Some(name) => Some(preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?),
            None => None,
        };
        let need = |what: &str| Error::Config(format!("{what} missing and no preset given"));
        Ok(KineticPreset {
            signal: self.signal.or(base.map(|b| b.signal)).ok_or_else(|| need("signal"))?,
            sender: self.sender.or(base.map(|b| b.sender)).ok_or_else(|| need("sender"))?,
            receiver: self.receiver.or(base.map(|b| b.receiver)).ok_or_else(|| need("receiver"))?,
            cell_radius: self.cell_radius.or(base.map(|b| b.cell_radius)).ok_or_else(|| need("cell_radius"))?,
            diffusivity: self.diffusivity.or(base.map(|b| b.diffusivity)).ok_or_else(|| need("D"))?,
        })
    }

    fn build(&self, seed: Option<u64>) -> Result<SystemSpec> {
        let k = self.kinetics()?;
        let domain = DomainSpec::new(self.radius, k.diffusivity)?;
        let r = k.cell_radius;
        let mut positions: Vec<(CellKind, Point)> = Vec::new();
        let fixed: Vec<Point> = self
            .placements
            .iter()
            .filter_map(|p| match p {
                Placement::Point { position, .. } => Some(*position),
                _ => None,
            })
            .collect();
        for (idx, p) in self.placements.iter().enumerate() {
            match p {
                Placement::Point { kind, position } => positions.push((*kind, *position)),
                Placement::Slab { kind, count, r1_min, r1_max } => {
                    let seed = seed.ok_or_else(|| {
                        Error::InvalidSystem("rng_seed is required for random slab placement".into())
                    })?;
                    let mut avoid = fixed.clone();
                    avoid.extend(positions.iter().map(|(_, p)| *p));
                    // Distinct stream per directive.
                    let pts = place_slab(*count, (*r1_min, *r1_max), &domain, r, &avoid, seed.wrapping_add(idx as u64))?;
                    positions.extend(pts.into_iter().map(|p| (*kind, p)));
                }
                Placement::Shell { kind, count, radius } => {
                    let pts = place_shell(*count, *radius, &domain, r)?;
                    positions.extend(pts.into_iter().map(|p| (*kind, p)));
                }
            }
        }
        let cells: Vec<CellSpec> = positions
            .iter()
            .map(|&(kind, position)| CellSpec { position, kind, radius: r })
            .collect();
        let initial = cells
            .iter()
            .map(|c| match c.kind {
                CellKind::Sender => self.initial.sender.clone(),
                CellKind::Receiver => self.initial.receiver.clone(),
            })
            .collect();
        Ok(SystemSpec {
            domain,
            cells,
            signal: k.signal,
            sender: k.sender,
            receiver: k.receiver,
            initial,
            initial_field: self.initial_field,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "name": "pair",
        "system": {
            "source": "generated",
            "L": 20.0,
            "preset": "paper-sec4",
            "placements": [
                {"type": "point", "kind": "sender", "position": [0, 0, 0]},
                {"type": "point", "kind": "receiver", "position": [15, 0, 0]}
            ]
        },
        "t_end": 10.0,
        "output_dt": 1.0
    }"#;

    #[test]
    fn minimal_config_expands() {
        let cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.model, ModelChoice::Reduced);
        let spec = cfg.build_spec().unwrap();
        assert_eq!(spec.n_cells(), 2);
        assert_eq!(spec.domain.diffusivity, 2.0e4);
        assert_eq!(spec.initial[1].x, vec![300.0, 1.0]);
    }

    #[test]
    fn unknown_fields_and_versions_rejected() {
        let extra = MINIMAL.replace("\"t_end\"", "\"bogus\": 1, \"t_end\"");
        assert!(ScenarioConfig::from_json(&extra).is_err());
        let v2 = MINIMAL.replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(ScenarioConfig::from_json(&v2), Err(Error::Config(_))));
        assert!(ScenarioConfig::from_json("{ not json").is_err());
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = ScenarioConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.t_end = 11.0;
        let mut c = a.clone();
        c.full.h = 0.5;
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash(), ScenarioConfig::from_json(MINIMAL).unwrap().hash());
        assert!(a.output_dir_name().starts_with("pair-"));
    }

    #[test]
    fn slab_requires_seed() {
        let text = MINIMAL.replace(
            r#"{"type": "point", "kind": "sender", "position": [0, 0, 0]}"#,
            r#"{"type": "slab", "kind": "sender", "count": 5, "r1_min": -5, "r1_max": 0}"#,
        );
        let mut cfg = ScenarioConfig::from_json(&text).unwrap();
        assert!(cfg.uses_random_placement());
        assert!(matches!(cfg.build_spec(), Err(Error::InvalidSystem(_))));
        cfg.rng_seed = Some(3);
        let spec = cfg.build_spec().unwrap();
        assert_eq!(spec.n_senders(), 5);
        assert_eq!(spec, cfg.build_spec().unwrap());
    }
}
